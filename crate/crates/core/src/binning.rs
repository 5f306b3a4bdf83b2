//! Per-feature discretization into bins and the bin-index targets built from it.
//!
//! Bin indices are 1-based: a feature with `k` bins maps every value into `1..=k`.
//! Interval bins are half-open `[b_{t-1}, b_t)` with `b_0 = -inf` and `b_k = +inf`,
//! so values outside the fitted range clamp to the first or last bin.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exec::Exec;
use crate::matrix::Matrix;
use crate::rng::{self, TAG_ABLATION};
use crate::{Error, Result};

const FORMAT_HEADER: &str = "tabbin-binning 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMethod {
    Quantile,
    EqualWidth,
    PerValue,
}

impl BinMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BinMethod::Quantile => "quantile",
            BinMethod::EqualWidth => "equal_width",
            BinMethod::PerValue => "per_value",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "quantile" => BinMethod::Quantile,
            "equal_width" => BinMethod::EqualWidth,
            "per_value" => BinMethod::PerValue,
            _ => return None,
        })
    }
}

/// Fitted bins of a single feature.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureBins {
    /// Strictly increasing interior boundaries; `len + 1` bins.
    Edges(Vec<f64>),
    /// One bin per distinct train value (sorted); unseen values go to the nearest one.
    Values(Vec<f64>),
}

impl FeatureBins {
    pub fn bin_count(&self) -> usize {
        match self {
            FeatureBins::Edges(b) => b.len() + 1,
            FeatureBins::Values(v) => v.len().max(1),
        }
    }

    /// 1-based bin index of `v`.
    pub fn assign(&self, v: f64) -> u32 {
        match self {
            FeatureBins::Edges(b) => 1 + b.partition_point(|&e| e <= v) as u32,
            FeatureBins::Values(vals) => {
                if vals.is_empty() {
                    return 1;
                }
                let p = vals.partition_point(|&e| e < v);
                let idx = if p == 0 {
                    0
                } else if p == vals.len() {
                    vals.len() - 1
                } else if v - vals[p - 1] <= vals[p] - v {
                    p - 1
                } else {
                    p
                };
                idx as u32 + 1
            }
        }
    }
}

fn sorted(column: &[f64]) -> Vec<f64> {
    let mut s = column.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn distinct(sorted: &[f64]) -> Vec<f64> {
    let mut d = sorted.to_vec();
    d.dedup();
    d
}

/// Boundaries at the `t/T` empirical quantiles of the column.
///
/// The boundary for level `t/T` is the order statistic at 0-based position
/// `ceil(t·n/T)`, so bin `t` holds ranks `ceil((t-1)n/T)+1 ..= ceil(tn/T)`.
/// Repeated boundaries are merged. Columns with fewer than `T` distinct values
/// get one bin per distinct value.
pub fn fit_quantile_bins(column: &[f64], bins: usize) -> FeatureBins {
    let s = sorted(column);
    let n = s.len();
    let uniq = distinct(&s);
    if uniq.len() < bins {
        return FeatureBins::Edges(uniq.into_iter().skip(1).collect());
    }
    let mut edges: Vec<f64> = Vec::with_capacity(bins - 1);
    for t in 1..bins {
        let pos = ((t * n).div_ceil(bins)).min(n - 1);
        let b = s[pos];
        // b == s[0] would leave bin 1 empty.
        if b > s[0] && edges.last().is_none_or(|&last| b > last) {
            edges.push(b);
        }
    }
    FeatureBins::Edges(edges)
}

/// `T` intervals of equal width between the train minimum and maximum.
pub fn fit_equal_width_bins(column: &[f64], bins: usize) -> FeatureBins {
    let s = sorted(column);
    let (Some(&lo), Some(&hi)) = (s.first(), s.last()) else {
        return FeatureBins::Edges(Vec::new());
    };
    if hi <= lo {
        return FeatureBins::Edges(Vec::new());
    }
    let mut edges: Vec<f64> = Vec::with_capacity(bins - 1);
    for t in 1..bins {
        let b = lo + (hi - lo) * t as f64 / bins as f64;
        if edges.last().is_none_or(|&last| b > last) {
            edges.push(b);
        }
    }
    FeatureBins::Edges(edges)
}

pub fn fit_per_value_bins(column: &[f64]) -> FeatureBins {
    FeatureBins::Values(distinct(&sorted(column)))
}

/// Fitted bins for every feature of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningSpec {
    method: BinMethod,
    requested: usize,
    features: Vec<FeatureBins>,
}

impl BinningSpec {
    /// Fit bins on each column of `train` (rows are train samples).
    pub fn fit(method: BinMethod, bins: usize, train: &Matrix, exec: Exec) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument(format!(
                "bin count must be at least 2, got {bins}"
            )));
        }
        if train.rows() == 0 {
            return Err(Error::InvalidArgument("cannot fit bins on zero rows".into()));
        }
        let features = exec.map(train.cols(), |j| {
            let col = train.column(j);
            match method {
                BinMethod::Quantile => fit_quantile_bins(&col, bins),
                BinMethod::EqualWidth => fit_equal_width_bins(&col, bins),
                BinMethod::PerValue => fit_per_value_bins(&col),
            }
        });
        Ok(Self {
            method,
            requested: bins,
            features,
        })
    }

    pub fn from_parts(method: BinMethod, requested: usize, features: Vec<FeatureBins>) -> Self {
        Self {
            method,
            requested,
            features,
        }
    }

    pub fn method(&self) -> BinMethod {
        self.method
    }

    pub fn requested_bins(&self) -> usize {
        self.requested
    }

    pub fn features(&self) -> &[FeatureBins] {
        &self.features
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn bin_counts(&self) -> Vec<usize> {
        self.features.iter().map(FeatureBins::bin_count).collect()
    }

    /// Width of the one-hot axis: the largest per-feature bin count.
    pub fn max_bins(&self) -> usize {
        self.bin_counts().into_iter().max().unwrap_or(1)
    }

    pub fn assign_column(&self, feature: usize, column: &[f64]) -> Vec<u32> {
        column.iter().map(|&v| self.features[feature].assign(v)).collect()
    }

    pub fn assign(&self, x: &Matrix) -> Result<BinnedTargets> {
        if x.cols() != self.features.len() {
            return Err(Error::Shape(format!(
                "binning spec has {} features, data has {}",
                self.features.len(),
                x.cols()
            )));
        }
        let mut indices = Vec::with_capacity(x.rows() * x.cols());
        for r in 0..x.rows() {
            for (j, &v) in x.row(r).iter().enumerate() {
                indices.push(self.features[j].assign(v));
            }
        }
        Ok(BinnedTargets {
            n_rows: x.rows(),
            bin_counts: self.bin_counts(),
            indices,
        })
    }

    /// Text form with every boundary at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "method {}", self.method.as_str());
        let _ = writeln!(out, "bins {}", self.requested);
        let _ = writeln!(out, "features {}", self.features.len());
        for f in &self.features {
            let (tag, vals) = match f {
                FeatureBins::Edges(b) => ("edges", b),
                FeatureBins::Values(v) => ("values", v),
            };
            let _ = write!(out, "{tag} {}", vals.len());
            for v in vals {
                let _ = write!(out, " {v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::BinningFormat(m);
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(bad("missing or unsupported header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing '{name}' line")))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected '{name}', found '{line}'")))
        };
        let method_s = field("method")?;
        let method = BinMethod::parse(&method_s).ok_or_else(|| bad(format!("unknown method '{method_s}'")))?;
        let requested = field("bins")?
            .parse::<usize>()
            .map_err(|e| bad(format!("bins: {e}")))?;
        let n = field("features")?
            .parse::<usize>()
            .map_err(|e| bad(format!("features: {e}")))?;
        let mut features = Vec::with_capacity(n);
        for (j, line) in lines.by_ref().take(n).enumerate() {
            let mut parts = line.split_ascii_whitespace();
            let tag = parts.next().unwrap_or_default();
            let count = parts
                .next()
                .and_then(|c| c.parse::<usize>().ok())
                .ok_or_else(|| bad(format!("feature {j}: missing count")))?;
            let vals = parts
                .map(|p| p.parse::<f64>().map_err(|e| bad(format!("feature {j}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != count {
                return Err(bad(format!("feature {j}: expected {count} values, found {}", vals.len())));
            }
            if vals.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(bad(format!("feature {j}: values not strictly increasing")));
            }
            features.push(match tag {
                "edges" => FeatureBins::Edges(vals),
                "values" => FeatureBins::Values(vals),
                other => return Err(bad(format!("feature {j}: unknown kind '{other}'"))),
            });
        }
        if features.len() != n {
            return Err(bad(format!("expected {n} features, found {}", features.len())));
        }
        Ok(Self {
            method,
            requested,
            features,
        })
    }

    /// Hex SHA-256 of the text form.
    pub fn hash(&self) -> String {
        hex_digest(self.to_text().as_bytes())
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Bin indices for a block of rows, row-major `n_rows × n_features`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedTargets {
    n_rows: usize,
    bin_counts: Vec<usize>,
    indices: Vec<u32>,
}

impl BinnedTargets {
    pub fn new(n_rows: usize, bin_counts: Vec<usize>, indices: Vec<u32>) -> Result<Self> {
        let d = bin_counts.len();
        if indices.len() != n_rows * d {
            return Err(Error::Shape(format!(
                "{} indices for {n_rows}x{d}",
                indices.len()
            )));
        }
        for (k, &t) in indices.iter().enumerate() {
            if t < 1 || t as usize > bin_counts[k % d] {
                return Err(Error::InvalidArgument(format!(
                    "bin index {t} outside 1..={} for feature {}",
                    bin_counts[k % d],
                    k % d
                )));
            }
        }
        Ok(Self {
            n_rows,
            bin_counts,
            indices,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.bin_counts.len()
    }

    pub fn bin_counts(&self) -> &[usize] {
        &self.bin_counts
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn row(&self, r: usize) -> &[u32] {
        let d = self.n_features();
        &self.indices[r * d..(r + 1) * d]
    }

    pub fn get(&self, r: usize, j: usize) -> u32 {
        self.indices[r * self.n_features() + j]
    }

    pub fn column(&self, j: usize) -> Vec<u32> {
        (0..self.n_rows).map(|r| self.get(r, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut indices = Vec::with_capacity(rows.len() * self.n_features());
        for &r in rows {
            indices.extend_from_slice(self.row(r));
        }
        Self {
            n_rows: rows.len(),
            bin_counts: self.bin_counts.clone(),
            indices,
        }
    }

    /// Indices as real-valued regression targets.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::new(
            self.n_rows,
            self.n_features(),
            self.indices.iter().map(|&t| f64::from(t)).collect(),
        )
        .expect("shape")
    }

    /// One-hot tensor `N × d × width`, flattened to `N × (d·width)`.
    pub fn one_hot(&self, width: usize) -> Result<Matrix> {
        let d = self.n_features();
        let mut out = Matrix::zeros(self.n_rows, d * width);
        for r in 0..self.n_rows {
            let row = one_hot(self.row(r), width)?;
            out.row_mut(r).copy_from_slice(row.as_slice());
        }
        Ok(out)
    }
}

/// One-hot encode `indices` (1-based) into a `len × bins` matrix.
pub fn one_hot(indices: &[u32], bins: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(indices.len(), bins);
    for (j, &t) in indices.iter().enumerate() {
        if t < 1 || t as usize > bins {
            return Err(Error::InvalidArgument(format!(
                "bin index {t} outside 1..={bins}"
            )));
        }
        out[(j, t as usize - 1)] = 1.0;
    }
    Ok(out)
}

/// Target transformations that each remove one property of bin-index targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Relabel bins with a random per-feature permutation (removes ordering).
    ShuffleOrder,
    /// Replace each index with the mean train value of its bin (removes equal sets).
    BinAverages,
    /// One bin per distinct train value (removes grouping).
    PerValue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AblatedTargets {
    Indices {
        targets: BinnedTargets,
        /// Present when the ablation refits bins.
        spec: Option<BinningSpec>,
    },
    Values(Matrix),
}

impl AblatedTargets {
    pub fn to_matrix(&self) -> Matrix {
        match self {
            AblatedTargets::Indices { targets, .. } => targets.to_matrix(),
            AblatedTargets::Values(m) => m.clone(),
        }
    }
}

/// Apply an ablation to `targets`, which were produced by `spec` from `data`.
/// `train_rows` index into `data` and select the rows used for any statistics.
pub fn ablate(
    targets: &BinnedTargets,
    spec: &BinningSpec,
    data: &Matrix,
    train_rows: &[usize],
    which: Ablation,
    seed: u64,
) -> Result<AblatedTargets> {
    if data.rows() != targets.n_rows() || data.cols() != spec.n_features() {
        return Err(Error::Shape("ablation data does not match targets".into()));
    }
    match which {
        Ablation::ShuffleOrder => {
            let mut r = rng::rng_for(seed, TAG_ABLATION);
            let perms: Vec<Vec<u32>> = targets
                .bin_counts()
                .iter()
                .map(|&k| {
                    let mut p: Vec<u32> = (1..=k as u32).collect();
                    p.shuffle(&mut r);
                    p
                })
                .collect();
            Ok(AblatedTargets::Indices {
                targets: permute_bins(targets, &perms)?,
                spec: None,
            })
        }
        Ablation::BinAverages => {
            let d = targets.n_features();
            let mut out = Matrix::zeros(targets.n_rows(), d);
            for j in 0..d {
                let k = targets.bin_counts()[j];
                let mut sum = vec![0.0; k];
                let mut count = vec![0usize; k];
                for &r in train_rows {
                    let t = targets.get(r, j) as usize - 1;
                    sum[t] += data[(r, j)];
                    count[t] += 1;
                }
                let means: Vec<f64> = (0..k)
                    .map(|t| {
                        if count[t] > 0 {
                            sum[t] / count[t] as f64
                        } else {
                            (t + 1) as f64
                        }
                    })
                    .collect();
                for r in 0..targets.n_rows() {
                    out[(r, j)] = means[targets.get(r, j) as usize - 1];
                }
            }
            Ok(AblatedTargets::Values(out))
        }
        Ablation::PerValue => {
            let train = data.select_rows(train_rows);
            let refit = BinningSpec::fit(BinMethod::PerValue, spec.requested_bins(), &train, Exec::default())?;
            Ok(AblatedTargets::Indices {
                targets: refit.assign(data)?,
                spec: Some(refit),
            })
        }
    }
}

/// Relabel bins: index `t` of feature `j` becomes `perms[j][t-1]`.
pub fn permute_bins(targets: &BinnedTargets, perms: &[Vec<u32>]) -> Result<BinnedTargets> {
    let d = targets.n_features();
    if perms.len() != d || perms.iter().zip(targets.bin_counts()).any(|(p, &k)| p.len() != k) {
        return Err(Error::Shape("permutation sizes do not match bin counts".into()));
    }
    let indices = targets
        .indices()
        .iter()
        .enumerate()
        .map(|(k, &t)| perms[k % d][t as usize - 1])
        .collect();
    BinnedTargets::new(targets.n_rows(), targets.bin_counts().to_vec(), indices)
}
