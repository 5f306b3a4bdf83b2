use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Rmse,
}

impl MetricKind {
    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::Accuracy)
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Rmse => "rmse",
        }
    }
}

/// Mean and sample standard deviation of a set of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Hashes tying a report to the inputs that produced it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: Option<String>,
    pub binning_hash: Option<String>,
    pub dataset_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub val: f64,
    pub test: f64,
    /// Regression metrics in original label units.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_original: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_original: Option<f64>,
}

/// Per-seed downstream metrics with their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metric: MetricKind,
    pub per_seed: Vec<SeedMetrics>,
    pub test: Summary,
    pub val: Summary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_original: Option<Summary>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl RunReport {
    pub fn from_seeds(metric: MetricKind, per_seed: Vec<SeedMetrics>) -> Self {
        let test: Vec<f64> = per_seed.iter().map(|s| s.test).collect();
        let val: Vec<f64> = per_seed.iter().map(|s| s.val).collect();
        let orig: Option<Vec<f64>> = per_seed.iter().map(|s| s.test_original).collect();
        Self {
            metric,
            test: Summary::of(&test),
            val: Summary::of(&val),
            test_original: orig.map(|o| Summary::of(&o)),
            per_seed,
            provenance: Provenance::default(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("report: {e}")))
    }

    /// One row per seed, then `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let regression = self.per_seed.iter().any(|s| s.test_original.is_some());
        let mut out = String::from("seed,metric,val,test");
        if regression {
            out.push_str(",val_original,test_original");
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.per_seed {
            let _ = write!(out, "{},{},{},{}", s.seed, self.metric.name(), s.val, s.test);
            if regression {
                let _ = write!(out, ",{},{}", opt(s.val_original), opt(s.test_original));
            }
            out.push('\n');
        }
        let orig = self.test_original.as_ref();
        let _ = write!(out, "mean,{},{},{}", self.metric.name(), self.val.mean, self.test.mean);
        if regression {
            let _ = write!(out, ",,{}", opt(orig.map(|o| o.mean)));
        }
        out.push('\n');
        let _ = write!(out, "std,{},{},{}", self.metric.name(), self.val.std, self.test.std);
        if regression {
            let _ = write!(out, ",,{}", opt(orig.map(|o| o.std)));
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[5.0]).std, 0.0);
    }

    #[test]
    fn report_json_round_trip_and_csv() {
        let seeds = (0..3)
            .map(|i| SeedMetrics {
                seed: i,
                val: 0.5 + i as f64 * 0.1,
                test: 0.4,
                val_original: Some(2.0),
                test_original: Some(3.0),
            })
            .collect();
        let r = RunReport::from_seeds(MetricKind::Rmse, seeds);
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 + 2);
        assert!(csv.starts_with("seed,metric,val,test,val_original,test_original\n"));
        assert_eq!(r.test_original.as_ref().unwrap().mean, 3.0);
    }

    #[test]
    fn directions() {
        assert!(MetricKind::Accuracy.better(0.9, 0.8));
        assert!(MetricKind::Rmse.better(0.1, 0.2));
        assert!(!MetricKind::Rmse.better(0.2, 0.2));
    }
}
