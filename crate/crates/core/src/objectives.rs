//! Self-supervised losses and the supervised losses used by probes.
//!
//! Every loss returns its value together with the gradient with respect to the
//! decoder output (raw logits for the cross-entropy losses).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ValueRecon,
    MaskXent,
    BinRecon,
    BinXent,
}

impl LossKind {
    pub fn needs_bins(self) -> bool {
        matches!(self, LossKind::BinRecon | LossKind::BinXent)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::ValueRecon => "value_recon",
            LossKind::MaskXent => "mask_xent",
            LossKind::BinRecon => "bin_recon",
            LossKind::BinXent => "bin_xent",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One weighted objective. Each term trains its own decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub kind: LossKind,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl LossTerm {
    pub fn new(kind: LossKind, weight: f64) -> Self {
        Self { kind, weight }
    }
}

pub fn validate_terms(terms: &[LossTerm]) -> Result<()> {
    if terms.is_empty() {
        return Err(Error::InvalidArgument("at least one loss term is required".into()));
    }
    if let Some(t) = terms.iter().find(|t| !t.weight.is_finite() || t.weight < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "loss weight for {} must be finite and non-negative, got {}",
            t.kind, t.weight
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Matrix,
}

/// `1/N Σ_i ||x_i - x̂_i||²` over all features.
pub fn value_recon(target: &Matrix, pred: &Matrix) -> Result<LossOutput> {
    target.check_same_shape(pred, "reconstruction")?;
    let n = target.rows().max(1) as f64;
    let mut grad = pred.clone();
    let mut value = 0.0;
    for (g, &t) in grad.as_mut_slice().iter_mut().zip(target.as_slice()) {
        let diff = *g - t;
        value += diff * diff;
        *g = 2.0 * diff / n;
    }
    Ok(LossOutput {
        value: value / n,
        grad,
    })
}

/// Same form as [`value_recon`] with bin indices as targets.
pub fn bin_recon(bins: &Matrix, pred: &Matrix) -> Result<LossOutput> {
    value_recon(bins, pred)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-1/N Σ_i [m_i log σ(l_i) + (1 - m_i) log(1 - σ(l_i))]`, summed over features.
pub fn mask_xent(mask: &Matrix, logits: &Matrix) -> Result<LossOutput> {
    mask.check_same_shape(logits, "mask logits")?;
    let n = mask.rows().max(1) as f64;
    let mut grad = logits.clone();
    let mut value = 0.0;
    for (g, &m) in grad.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        let l = *g;
        // -[m log σ(l) + (1-m) log σ(-l)] = softplus(l) - m·l
        value += l.max(0.0) - m * l + (-l.abs()).exp().ln_1p();
        *g = (sigmoid(l) - m) / n;
    }
    Ok(LossOutput {
        value: value / n,
        grad,
    })
}

/// Softmax cross-entropy per (sample, feature) slot, averaged over `N·d`.
///
/// `onehot` and `logits` are `N × (d·bins)` with each slot's `bins` logits contiguous.
pub fn bin_xent(onehot: &Matrix, logits: &Matrix, bins: usize) -> Result<LossOutput> {
    onehot.check_same_shape(logits, "bin logits")?;
    if bins == 0 || logits.cols() % bins != 0 {
        return Err(Error::Shape(format!(
            "{} columns are not a multiple of {bins} bins",
            logits.cols()
        )));
    }
    let slots = logits.rows() * (logits.cols() / bins);
    let scale = 1.0 / slots.max(1) as f64;
    let mut grad = logits.clone();
    let mut value = 0.0;
    for (s, (g, u)) in grad
        .as_mut_slice()
        .chunks_mut(bins)
        .zip(onehot.as_slice().chunks(bins))
        .enumerate()
    {
        let ones = u.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || u.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "target slot {s} is not one-hot"
            )));
        }
        let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = g.iter().map(|&l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        for (gv, &uv) in g.iter_mut().zip(u) {
            if uv == 1.0 {
                value += lse - *gv;
            }
            *gv = (((*gv - lse).exp()) - uv) * scale;
        }
    }
    Ok(LossOutput {
        value: value * scale,
        grad,
    })
}

/// Weighted sum of loss values; each gradient is scaled by its weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub value: f64,
    pub grads: Vec<Matrix>,
}

pub fn combine(losses: Vec<LossOutput>, weights: &[f64]) -> Result<Combined> {
    if losses.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} losses but {} weights",
            losses.len(),
            weights.len()
        )));
    }
    let mut value = 0.0;
    let grads = losses
        .into_iter()
        .zip(weights)
        .map(|(mut l, &w)| {
            value += w * l.value;
            l.grad.scale(w);
            l.grad
        })
        .collect();
    Ok(Combined { value, grads })
}

/// Mean softmax cross-entropy of class `labels` under `N × C` logits.
pub fn softmax_xent(labels: &[usize], logits: &Matrix) -> Result<LossOutput> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    let c = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::InvalidArgument(format!("class {bad} outside {c} logits")));
    }
    let mut onehot = Matrix::zeros(logits.rows(), c);
    for (r, &y) in labels.iter().enumerate() {
        onehot[(r, y)] = 1.0;
    }
    bin_xent(&onehot, logits, c)
}

/// Mean squared error of an `N × 1` prediction.
pub fn mse(targets: &[f64], pred: &Matrix) -> Result<LossOutput> {
    let t = Matrix::new(targets.len(), 1, targets.to_vec())?;
    value_recon(&t, pred)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;
    use crate::nn::gradcheck::{central_difference, max_relative_error};

    #[test]
    fn value_recon_cases() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let p = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(value_recon(&x, &p).unwrap().value, 25.0);
        let same = value_recon(&p, &p).unwrap();
        assert_eq!(same.value, 0.0);
        assert!(same.grad.as_slice().iter().all(|&g| g == 0.0));
        assert!(value_recon(&x, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn bin_recon_cases() {
        let t = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let p = Matrix::from_rows(&[vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(bin_recon(&t, &p).unwrap().value, 0.5);
        assert_eq!(bin_recon(&t, &t).unwrap().value, 0.0);
        assert_eq!(bin_recon(&t, &p).unwrap(), value_recon(&t, &p).unwrap());
    }

    #[test]
    fn mask_xent_closed_forms() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let zero = mask_xent(&m, &Matrix::zeros(2, 3)).unwrap();
        assert!((zero.value - 3.0 * LN_2).abs() < 1e-12);
        let sat = m.map(|v| if v == 1.0 { 40.0 } else { -40.0 });
        assert!(mask_xent(&m, &sat).unwrap().value < 1e-15);
    }

    #[test]
    fn bin_xent_closed_forms() {
        let u = Matrix::from_rows(&[vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]]).unwrap();
        let uniform = bin_xent(&u, &Matrix::filled(1, 6, 0.3), 3).unwrap();
        assert!((uniform.value - 3f64.ln()).abs() < 1e-12);
        let sat = u.map(|v| v * 40.0);
        assert!(bin_xent(&u, &sat, 3).unwrap().value < 1e-15);
        let not_onehot = Matrix::from_rows(&[vec![1.0, 1.0, 0.0]]).unwrap();
        assert!(bin_xent(&not_onehot, &Matrix::zeros(1, 3), 3).is_err());
    }

    #[test]
    fn combine_cases() {
        let a = LossOutput {
            value: 2.0,
            grad: Matrix::filled(1, 2, 1.0),
        };
        let single = combine(vec![a.clone()], &[1.0]).unwrap();
        assert_eq!(single.value, 2.0);
        assert_eq!(single.grads[0], a.grad);
        let halves = combine(vec![a.clone(), a.clone()], &[0.5, 0.5]).unwrap();
        assert_eq!(halves.value, 2.0);
        let zero = combine(vec![a.clone(), a.clone()], &[1.0, 0.0]).unwrap();
        assert!(zero.grads[1].as_slice().iter().all(|&g| g == 0.0));
        assert!(combine(vec![a], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = crate::rng::rng_from(8);
        use rand::Rng;
        let (n, d, t) = (3, 2, 4);
        let x = Matrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0));
        let p = Matrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0));
        let m = Matrix::from_fn(n, d, |_, _| if r.random_bool(0.5) { 1.0 } else { 0.0 });
        let mut u = Matrix::zeros(n, d * t);
        for s in 0..n * d {
            u.as_mut_slice()[s * t + r.random_range(0..t)] = 1.0;
        }
        let l = Matrix::from_fn(n, d * t, |_, _| r.random_range(-2.0..2.0));

        let g = value_recon(&x, &p).unwrap().grad;
        let fd = central_difference(|v| value_recon(&x, &Matrix::new(n, d, v.to_vec()).unwrap()).unwrap().value, p.as_slice(), 1e-5);
        assert!(max_relative_error(g.as_slice(), &fd) < 1e-6);

        let g = mask_xent(&m, &p).unwrap().grad;
        let fd = central_difference(|v| mask_xent(&m, &Matrix::new(n, d, v.to_vec()).unwrap()).unwrap().value, p.as_slice(), 1e-5);
        assert!(max_relative_error(g.as_slice(), &fd) < 1e-6);

        let g = bin_xent(&u, &l, t).unwrap().grad;
        let fd = central_difference(|v| bin_xent(&u, &Matrix::new(n, d * t, v.to_vec()).unwrap(), t).unwrap().value, l.as_slice(), 1e-5);
        assert!(max_relative_error(g.as_slice(), &fd) < 1e-6);
    }

    #[test]
    fn supervised_losses() {
        let logits = Matrix::from_rows(&[vec![0.0, 0.0], vec![10.0, -10.0]]).unwrap();
        let out = softmax_xent(&[1, 0], &logits).unwrap();
        assert!((out.value - (LN_2 + (1.0 + (-20f64).exp()).ln()) / 2.0).abs() < 1e-12);
        assert!(softmax_xent(&[2, 0], &logits).is_err());
        let p = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(mse(&[0.0, 3.0], &p).unwrap().value, 0.5);
    }

    #[test]
    fn terms_validation() {
        assert!(validate_terms(&[]).is_err());
        assert!(validate_terms(&[LossTerm::new(LossKind::BinRecon, -1.0)]).is_err());
        assert!(validate_terms(&[LossTerm::new(LossKind::BinRecon, 1.0)]).is_ok());
    }
}
