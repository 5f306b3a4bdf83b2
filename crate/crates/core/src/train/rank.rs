//! Per-dataset ranking of methods and average ranks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::MetricKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `metrics[m][d]`.
    pub metrics: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub average_rank: Vec<f64>,
}

/// Ranks of `values` with 1 = best; tied values share the mean of their positions.
pub fn rank_values(values: &[f64], metric: MetricKind) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        if metric.higher_is_better() {
            o.reverse()
        } else {
            o
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// `metrics[m][d]` is method `m` on dataset `d`; `None` marks a missing result.
pub fn rank_aggregate(
    methods: Vec<String>,
    datasets: Vec<String>,
    metrics: &[Vec<Option<f64>>],
    directions: &[MetricKind],
) -> Result<RankTable> {
    if metrics.len() != methods.len() || directions.len() != datasets.len() || methods.is_empty() {
        return Err(Error::Shape("rank table dimensions do not match labels".into()));
    }
    let mut full = vec![vec![0.0; datasets.len()]; methods.len()];
    for (m, row) in metrics.iter().enumerate() {
        if row.len() != datasets.len() {
            return Err(Error::Shape(format!("method {} has {} entries", methods[m], row.len())));
        }
        for (d, v) in row.iter().enumerate() {
            full[m][d] = v
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidArgument(format!("missing metric for {} on {}", methods[m], datasets[d])))?;
        }
    }
    let mut ranks = vec![vec![0.0; datasets.len()]; methods.len()];
    for (d, &dir) in directions.iter().enumerate() {
        let column: Vec<f64> = full.iter().map(|r| r[d]).collect();
        for (m, r) in rank_values(&column, dir).into_iter().enumerate() {
            ranks[m][d] = r;
        }
    }
    let average_rank = ranks
        .iter()
        .map(|r| if r.is_empty() { 0.0 } else { r.iter().sum::<f64>() / r.len() as f64 })
        .collect();
    Ok(RankTable {
        methods,
        datasets,
        metrics: full,
        ranks,
        average_rank,
    })
}

impl RankTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rank table serializes")
    }

    /// `method,<dataset>...,<dataset>_rank...,average_rank`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for d in &self.datasets {
            let _ = write!(out, ",{d}");
        }
        for d in &self.datasets {
            let _ = write!(out, ",{d}_rank");
        }
        out.push_str(",average_rank\n");
        for (m, name) in self.methods.iter().enumerate() {
            out.push_str(name);
            for v in &self.metrics[m] {
                let _ = write!(out, ",{v}");
            }
            for r in &self.ranks[m] {
                let _ = write!(out, ",{r}");
            }
            let _ = writeln!(out, ",{}", self.average_rank[m]);
        }
        out
    }
}
