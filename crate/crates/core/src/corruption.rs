//! Masking corruption: `x̃ = (1 - m) ⊙ x + m ⊙ x̄` with Bernoulli masks.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplaceMode {
    #[default]
    None,
    /// Per-feature train mean.
    Constant,
    /// Same feature of a uniformly drawn row of the batch (possibly the row itself).
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionConfig {
    pub p_m: f64,
    pub mode: ReplaceMode,
    pub constant: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedBatch {
    pub corrupted: Matrix,
    /// 0/1 entries; 1 marks a replaced cell.
    pub mask: Matrix,
}

impl CorruptionConfig {
    pub fn new(p_m: f64, mode: ReplaceMode, constant: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_m) {
            return Err(Error::InvalidArgument(format!("p_m must be in [0, 1], got {p_m}")));
        }
        Ok(Self { p_m, mode, constant })
    }

    pub fn none() -> Self {
        Self {
            p_m: 0.0,
            mode: ReplaceMode::None,
            constant: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.p_m == 0.0 || self.mode == ReplaceMode::None
    }

    /// Draw a fresh mask and replacement for `batch` and blend them.
    pub fn apply<R: RngCore>(&self, batch: &Matrix, rng: &mut R) -> Result<CorruptedBatch> {
        let (n, d) = batch.shape();
        if self.is_identity() {
            return Ok(CorruptedBatch {
                corrupted: batch.clone(),
                mask: Matrix::zeros(n, d),
            });
        }
        let mask = sample_mask(n, d, self.p_m, rng);
        let replacement = build_replacement(batch, self.mode, &self.constant, rng)?;
        corrupt(batch, &mask, &replacement)
    }
}

/// i.i.d. Bernoulli(`p_m`) entries.
pub fn sample_mask<R: RngCore>(n: usize, d: usize, p_m: f64, rng: &mut R) -> Matrix {
    Matrix::from_fn(n, d, |_, _| {
        if rng.random::<f64>() < p_m {
            1.0
        } else {
            0.0
        }
    })
}

pub fn build_replacement<R: RngCore>(
    batch: &Matrix,
    mode: ReplaceMode,
    constant: &[f64],
    rng: &mut R,
) -> Result<Matrix> {
    let (n, d) = batch.shape();
    match mode {
        ReplaceMode::None => Ok(batch.clone()),
        ReplaceMode::Constant => {
            if constant.len() != d {
                return Err(Error::Shape(format!(
                    "constant vector has {} entries for {d} features",
                    constant.len()
                )));
            }
            Ok(Matrix::from_fn(n, d, |_, c| constant[c]))
        }
        ReplaceMode::Random => {
            if n == 0 {
                return Err(Error::InvalidArgument("random replacement needs a non-empty batch".into()));
            }
            Ok(Matrix::from_fn(n, d, |_, c| batch[(rng.random_range(0..n), c)]))
        }
    }
}

/// Cellwise select: replacement where `mask` is 1, original elsewhere.
pub fn corrupt(batch: &Matrix, mask: &Matrix, replacement: &Matrix) -> Result<CorruptedBatch> {
    batch.check_same_shape(mask, "mask")?;
    batch.check_same_shape(replacement, "replacement")?;
    let data = batch
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .zip(replacement.as_slice())
        .map(|((&x, &m), &r)| if m != 0.0 { r } else { x })
        .collect();
    Ok(CorruptedBatch {
        corrupted: Matrix::new(batch.rows(), batch.cols(), data)?,
        mask: mask.clone(),
    })
}
