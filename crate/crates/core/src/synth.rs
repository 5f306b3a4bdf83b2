//! Synthetic tables whose label is a sum of per-feature step functions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Labels, SplitMode, Task};
use crate::matrix::Matrix;
use crate::rng;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub n: usize,
    pub d: usize,
    /// Pieces per feature.
    pub steps: usize,
    pub noise: f64,
    pub cuts: CutPlacement,
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            n: 4000,
            d: 8,
            steps: 5,
            noise: 0.1,
            cuts: CutPlacement::Even,
            fractions: [0.64, 0.16, 0.2],
            seed: 0,
        }
    }
}

/// Where the interior cut points of each step function sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutPlacement {
    /// At `k / steps`, on quantiles of the uniform features.
    #[default]
    Even,
    Random,
}

/// One feature's piecewise-constant function on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    /// Sorted interior cut points, `steps - 1` of them.
    pub cuts: Vec<f64>,
    pub heights: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.heights[self.cuts.partition_point(|&c| c <= x)]
    }
}

#[derive(Debug, Clone)]
pub struct StepTask {
    pub functions: Vec<StepFunction>,
    pub features: Matrix,
    /// Noisy regression target.
    pub target: Vec<f64>,
}

impl StepTask {
    pub fn generate(cfg: &StepConfig) -> Self {
        let mut r = rng::rng_for(cfg.seed, 0x5e_ed);
        let functions: Vec<StepFunction> = (0..cfg.d)
            .map(|_| {
                let cuts = match cfg.cuts {
                    CutPlacement::Even => (1..cfg.steps).map(|k| k as f64 / cfg.steps as f64).collect(),
                    CutPlacement::Random => {
                        let mut c: Vec<f64> = (1..cfg.steps).map(|_| r.random_range(0.05..0.95)).collect();
                        c.sort_by(f64::total_cmp);
                        c
                    }
                };
                let heights = (0..cfg.steps).map(|_| StandardNormal.sample(&mut r)).collect();
                StepFunction { cuts, heights }
            })
            .collect();
        let features = Matrix::from_fn(cfg.n, cfg.d, |_, _| r.random::<f64>());
        let target = (0..cfg.n)
            .map(|i| {
                let clean: f64 = functions.iter().enumerate().map(|(j, f)| f.eval(features[(i, j)])).sum();
                let eps: f64 = StandardNormal.sample(&mut r);
                clean + cfg.noise * eps
            })
            .collect();
        Self {
            functions,
            features,
            target,
        }
    }

    fn names(&self) -> Vec<String> {
        (0..self.features.cols()).map(|j| format!("x{j}")).collect()
    }

    pub fn regression(&self, cfg: &StepConfig) -> Result<Dataset> {
        Dataset::new(self.features.clone(), Labels::Values(self.target.clone()), Task::Regression, self.names())?
            .assign_splits(&SplitMode::Ratio {
                fractions: cfg.fractions,
                seed: cfg.seed,
            })
    }

    /// Label 1 when the target exceeds its median.
    pub fn classification(&self, cfg: &StepConfig) -> Result<Dataset> {
        let mut sorted = self.target.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let classes: Vec<i64> = self.target.iter().map(|&y| i64::from(y > median)).collect();
        Dataset::new(self.features.clone(), Labels::classes(&classes), Task::Binclass, self.names())?
            .assign_splits(&SplitMode::Ratio {
                fractions: cfg.fractions,
                seed: cfg.seed,
            })
    }
}
