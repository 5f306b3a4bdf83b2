//! Downstream evaluation: linear probes on frozen representations, fine-tuning,
//! and regression of bin indices from representations.

use serde::{Deserialize, Serialize};

use super::report::{MetricKind, RunReport, SeedMetrics, Summary};
use crate::binning::BinnedTargets;
use crate::data::{batch_size_rule, iterate_batches, Dataset, Labels, Split, Standardizer};
use crate::exec::Exec;
use crate::matrix::Matrix;
use crate::nn::{AdamW, AdamWConfig, CosineSchedule, Mlp, MlpSpec, Parameters};
use crate::objectives::{self, LossOutput};
use crate::rng::{self, TAG_PROBE};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seeds: usize,
    pub weight_decay: f64,
    /// `None` applies [`batch_size_rule`] to the number of training rows.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Keep the encoder fixed (linear probing) or train it with the head (fine-tuning).
    pub frozen: bool,
}

impl ProbeConfig {
    pub fn linear() -> Self {
        Self {
            lr: 0.01,
            epochs: 100,
            seeds: 10,
            weight_decay: 1e-5,
            batch_size: None,
            seed: 0,
            frozen: true,
        }
    }

    pub fn finetune() -> Self {
        Self {
            lr: 1e-3,
            epochs: 100,
            frozen: false,
            ..Self::linear()
        }
    }

    /// Seed of the `i`-th repetition.
    pub fn seed_for(&self, i: usize) -> u64 {
        rng::derive_seed(rng::derive_seed(self.seed, TAG_PROBE), i as u64)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::InvalidArgument("at least one probe seed is required".into()));
        }
        if !(self.lr >= 0.0) || self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("invalid probe settings".into()));
        }
        Ok(())
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self::linear()
    }
}

/// Supervised targets aligned with the rows of an input matrix.
#[derive(Debug, Clone)]
enum Target {
    Classes { ids: Vec<usize>, n_classes: usize },
    Values(Matrix),
}

impl Target {
    fn from_labels(labels: &Labels, rows: &[usize]) -> Self {
        match labels {
            Labels::Classes { ids, n_classes } => Target::Classes {
                ids: rows.iter().map(|&r| ids[r]).collect(),
                n_classes: *n_classes,
            },
            Labels::Values(v) => {
                Target::Values(Matrix::new(rows.len(), 1, rows.iter().map(|&r| v[r]).collect()).expect("shape"))
            }
        }
    }

    fn outputs(&self) -> usize {
        match self {
            Target::Classes { n_classes, .. } => *n_classes,
            Target::Values(m) => m.cols(),
        }
    }

    fn select(&self, batch: &[usize]) -> Self {
        match self {
            Target::Classes { ids, n_classes } => Target::Classes {
                ids: batch.iter().map(|&r| ids[r]).collect(),
                n_classes: *n_classes,
            },
            Target::Values(m) => Target::Values(m.select_rows(batch)),
        }
    }

    fn loss(&self, out: &Matrix) -> Result<LossOutput> {
        match self {
            Target::Classes { ids, .. } => objectives::softmax_xent(ids, out),
            Target::Values(m) => objectives::value_recon(m, out),
        }
    }
}

fn train_supervised(
    mut encoder: Option<&mut Mlp>,
    head: &mut Mlp,
    inputs: &Matrix,
    target: &Target,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<()> {
    let n = inputs.rows();
    let batch_size = cfg.batch_size.unwrap_or_else(|| batch_size_rule(n));
    let steps_per_epoch = n.div_ceil(batch_size) as u64;
    let schedule = CosineSchedule::new(cfg.lr, steps_per_epoch * cfg.epochs as u64);
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    let rows: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for (bi, batch) in iterate_batches(&rows, batch_size, seed, epoch as u64, true)
            .iter()
            .enumerate()
        {
            let x = inputs.select_rows(batch);
            head.zero_grad();
            let (z, ecache) = match encoder.as_deref_mut() {
                Some(enc) => {
                    enc.zero_grad();
                    let (z, c) = enc.forward(&x)?;
                    (z, Some(c))
                }
                None => (x, None),
            };
            let (out, hcache) = head.forward(&z)?;
            let loss = target.select(batch).loss(&out)?;
            if !loss.value.is_finite() {
                return Err(Error::NonFinite {
                    what: "supervised loss".into(),
                    epoch: epoch + 1,
                    batch: bi,
                });
            }
            let dz = head.backward(&hcache, &loss.grad)?;
            let lr = schedule.lr(step);
            match (encoder.as_deref_mut(), ecache) {
                (Some(enc), Some(c)) => {
                    enc.backward(&c, &dz)?;
                    opt.step(&mut [enc, head], lr)?;
                }
                _ => opt.step(&mut [head], lr)?,
            }
            step += 1;
        }
    }
    Ok(())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Metric value in standardized units and, for regression, original units.
fn evaluate(pred: &Matrix, target: &Target, standardizer: Option<&Standardizer>) -> (f64, Option<f64>) {
    match target {
        Target::Classes { ids, .. } => {
            let hits = ids
                .iter()
                .enumerate()
                .filter(|(r, &y)| argmax(pred.row(*r)) == y)
                .count();
            (hits as f64 / ids.len().max(1) as f64, None)
        }
        Target::Values(y) => {
            let m = y.as_slice().len().max(1) as f64;
            let se: f64 = pred
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            let orig = standardizer.filter(|s| s.label.is_some()).map(|s| {
                let se: f64 = pred
                    .as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(&p, &t)| {
                        let d = s.label_inverse(p) - s.label_inverse(t);
                        d * d
                    })
                    .sum();
                (se / m).sqrt()
            });
            ((se / m).sqrt(), orig)
        }
    }
}

struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl Splits {
    fn of(ds: &Dataset) -> Self {
        Self {
            train: ds.indices(Split::Train),
            val: ds.indices(Split::Val),
            test: ds.indices(Split::Test),
        }
    }
}

fn check_labels(target: &Target) -> Result<()> {
    if let Target::Classes { ids, .. } = target {
        if ids.iter().all(|&y| y == ids[0]) {
            return Err(Error::DegenerateLabels(
                "train split contains a single class".into(),
            ));
        }
    }
    Ok(())
}

/// Train a fresh affine head per seed and report val/test metrics.
///
/// With `cfg.frozen` the head sees fixed representations; otherwise a copy of
/// the encoder is trained jointly with it. `ds` must already be standardized;
/// `standardizer` is used to report regression errors in original units.
pub fn evaluate_encoder(
    encoder: &Mlp,
    ds: &Dataset,
    standardizer: &Standardizer,
    cfg: &ProbeConfig,
    exec: Exec,
) -> Result<RunReport> {
    cfg.validate()?;
    let splits = Splits::of(ds);
    let train_target = Target::from_labels(ds.labels(), &splits.train);
    check_labels(&train_target)?;
    let val_target = Target::from_labels(ds.labels(), &splits.val);
    let test_target = Target::from_labels(ds.labels(), &splits.test);
    let metric = if ds.task().is_classification() {
        MetricKind::Accuracy
    } else {
        MetricKind::Rmse
    };
    let inputs = if cfg.frozen {
        encoder.predict(ds.features())?
    } else {
        ds.features().clone()
    };
    let train_x = inputs.select_rows(&splits.train);
    let val_x = inputs.select_rows(&splits.val);
    let test_x = inputs.select_rows(&splits.test);
    let head_spec = MlpSpec::linear(
        if cfg.frozen { inputs.cols() } else { encoder.output_dim() },
        train_target.outputs(),
    )?;

    let runs = exec.map(cfg.seeds, |i| -> Result<SeedMetrics> {
        let seed = cfg.seed_for(i);
        let mut head = Mlp::init(&head_spec, seed)?;
        let mut enc = (!cfg.frozen).then(|| encoder.clone());
        train_supervised(enc.as_mut(), &mut head, &train_x, &train_target, cfg, seed)?;
        let predict = |x: &Matrix| -> Result<Matrix> {
            match &enc {
                Some(e) => head.predict(&e.predict(x)?),
                None => head.predict(x),
            }
        };
        let (val, val_original) = evaluate(&predict(&val_x)?, &val_target, Some(standardizer));
        let (test, test_original) = evaluate(&predict(&test_x)?, &test_target, Some(standardizer));
        Ok(SeedMetrics {
            seed,
            val,
            test,
            val_original,
            test_original,
        })
    });
    let per_seed = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RunReport::from_seeds(metric, per_seed))
}

/// Linear probing of a frozen encoder.
pub fn linear_probe(
    encoder: &Mlp,
    ds: &Dataset,
    standardizer: &Standardizer,
    cfg: &ProbeConfig,
    exec: Exec,
) -> Result<RunReport> {
    let cfg = ProbeConfig {
        frozen: true,
        ..cfg.clone()
    };
    evaluate_encoder(encoder, ds, standardizer, &cfg, exec)
}

/// Fine-tune a copy of the encoder together with a fresh head (fresh optimizer per seed).
pub fn finetune(
    encoder: &Mlp,
    ds: &Dataset,
    standardizer: &Standardizer,
    cfg: &ProbeConfig,
    exec: Exec,
) -> Result<RunReport> {
    let cfg = ProbeConfig {
        frozen: false,
        ..cfg.clone()
    };
    evaluate_encoder(encoder, ds, standardizer, &cfg, exec)
}

/// Test error of an affine head regressing bin indices from frozen representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinProbeReport {
    pub per_seed_mse: Vec<f64>,
    pub mse: Summary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline_mse: Option<f64>,
    /// `(mse - baseline) / baseline × 100`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub relative_increase_pct: Option<f64>,
}

impl BinProbeReport {
    pub fn against(mut self, baseline_mse: f64) -> Self {
        self.relative_increase_pct = Some(relative_increase(self.mse.mean, baseline_mse));
        self.baseline_mse = Some(baseline_mse);
        self
    }
}

pub fn relative_increase(mse: f64, baseline: f64) -> f64 {
    (mse - baseline) / baseline * 100.0
}

/// `targets` holds bin indices for every row of `ds`. Fits on train rows, reports
/// the per-entry MSE on test rows.
pub fn bin_prediction_probe(
    encoder: &Mlp,
    ds: &Dataset,
    targets: &BinnedTargets,
    cfg: &ProbeConfig,
    exec: Exec,
) -> Result<BinProbeReport> {
    cfg.validate()?;
    if targets.n_rows() != ds.n_rows() {
        return Err(Error::Shape("bin targets must cover every row".into()));
    }
    let splits = Splits::of(ds);
    let reps = encoder.predict(ds.features())?;
    let all = Target::Values(targets.to_matrix());
    let train_t = all.select(&splits.train);
    let test_t = all.select(&splits.test);
    let train_x = reps.select_rows(&splits.train);
    let test_x = reps.select_rows(&splits.test);
    let spec = MlpSpec::linear(reps.cols(), targets.n_features())?;
    let cfg = ProbeConfig {
        frozen: true,
        ..cfg.clone()
    };
    let mse = exec.map(cfg.seeds, |i| -> Result<f64> {
        let seed = cfg.seed_for(i);
        let mut head = Mlp::init(&spec, seed)?;
        train_supervised(None, &mut head, &train_x, &train_t, &cfg, seed)?;
        let (rmse, _) = evaluate(&head.predict(&test_x)?, &test_t, None);
        Ok(rmse * rmse)
    });
    let per_seed_mse = mse.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BinProbeReport {
        mse: Summary::of(&per_seed_mse),
        per_seed_mse,
        baseline_mse: None,
        relative_increase_pct: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use rand::Rng;

    fn split_tags(n: usize) -> Vec<Split> {
        (0..n)
            .map(|i| match i % 10 {
                0 => Split::Val,
                1 => Split::Test,
                _ => Split::Train,
            })
            .collect()
    }

    fn standardized(ds: Dataset) -> (Dataset, Standardizer) {
        let s = Standardizer::fit(&ds);
        (s.apply(&ds).unwrap(), s)
    }

    fn identity_encoder(d: usize) -> Mlp {
        let l = crate::nn::Dense::new(Matrix::identity(d), vec![0.0; d]).unwrap();
        Mlp::from_layers(&MlpSpec::linear(d, d).unwrap(), vec![l]).unwrap()
    }

    fn quick() -> ProbeConfig {
        ProbeConfig {
            epochs: 200,
            seeds: 3,
            ..ProbeConfig::linear()
        }
    }

    #[test]
    fn realizable_regression_and_classification() {
        let n = 400;
        let mut r = rng::rng_from(1);
        let x = Matrix::from_fn(n, 3, |_, _| r.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|i| 2.0 * x[(i, 0)] - x[(i, 2)] + 0.5).collect();
        let ds = Dataset::new(x.clone(), Labels::Values(y.clone()), Task::Regression, vec!["a".into(), "b".into(), "c".into()])
            .unwrap()
            .with_split(split_tags(n))
            .unwrap();
        let (ds, s) = standardized(ds);
        let rep = linear_probe(&identity_encoder(3), &ds, &s, &quick(), Exec::default()).unwrap();
        assert_eq!(rep.metric, MetricKind::Rmse);
        assert!(rep.test.mean < 0.05, "{:?}", rep.test);
        assert!(rep.test_original.unwrap().mean < 0.1);

        let cls: Vec<i64> = y.iter().map(|&v| i64::from(v > 0.5)).collect();
        let ds = Dataset::new(x, Labels::classes(&cls), Task::Binclass, vec!["a".into(), "b".into(), "c".into()])
            .unwrap()
            .with_split(split_tags(n))
            .unwrap();
        let (ds, s) = standardized(ds);
        let rep = linear_probe(&identity_encoder(3), &ds, &s, &quick(), Exec::default()).unwrap();
        assert!(rep.test.mean >= 0.95, "{:?}", rep.test);
    }

    #[test]
    fn independent_labels_near_chance() {
        let n = 2000;
        let mut r = rng::rng_from(2);
        let x = Matrix::from_fn(n, 4, |_, _| r.random_range(-1.0..1.0));
        let cls: Vec<i64> = (0..n).map(|_| i64::from(r.random_bool(0.5))).collect();
        let ds = Dataset::new(x, Labels::classes(&cls), Task::Binclass, (0..4).map(|i| i.to_string()).collect())
            .unwrap()
            .with_split(split_tags(n))
            .unwrap();
        let (ds, s) = standardized(ds);
        let rep = linear_probe(&identity_encoder(4), &ds, &s, &ProbeConfig { epochs: 20, ..quick() }, Exec::default()).unwrap();
        assert!((rep.test.mean - 0.5).abs() < 0.05, "{:?}", rep.test);
    }

    #[test]
    fn seed_count_frozen_encoder_and_determinism() {
        let n = 100;
        let x = Matrix::from_fn(n, 2, |r, c| ((r * 7 + c) % 13) as f64);
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let ds = Dataset::new(x, Labels::Values(y), Task::Regression, vec!["a".into(), "b".into()])
            .unwrap()
            .with_split(split_tags(n))
            .unwrap();
        let (ds, s) = standardized(ds);
        let enc = Mlp::init(&MlpSpec::new(2, vec![4], 3).unwrap(), 9).unwrap();
        let before = enc.checksum();
        let cfg = ProbeConfig { epochs: 5, ..ProbeConfig::linear() };
        let a = linear_probe(&enc, &ds, &s, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a.per_seed.len(), 10);
        assert_eq!(enc.checksum(), before);
        let b = linear_probe(&enc, &ds, &s, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn finetune_at_zero_lr_matches_zero_lr_probe() {
        let n = 100;
        let x = Matrix::from_fn(n, 2, |r, c| ((r * 3 + c * 5) % 11) as f64);
        let cls: Vec<i64> = (0..n).map(|i| i64::from(x[(i, 0)] > 5.0)).collect();
        let ds = Dataset::new(x, Labels::classes(&cls), Task::Binclass, vec!["a".into(), "b".into()])
            .unwrap()
            .with_split(split_tags(n))
            .unwrap();
        let (ds, s) = standardized(ds);
        let enc = Mlp::init(&MlpSpec::new(2, vec![4], 3).unwrap(), 1).unwrap();
        let cfg = ProbeConfig { lr: 0.0, epochs: 3, seeds: 2, ..ProbeConfig::linear() };
        let ft = finetune(&enc, &ds, &s, &cfg, Exec::default()).unwrap();
        let lp = linear_probe(&enc, &ds, &s, &cfg, Exec::default()).unwrap();
        assert_eq!(ft.test, lp.test);
        assert_eq!(ft.val, lp.val);
    }

    #[test]
    fn single_class_train_is_degenerate() {
        let n = 20;
        let x = Matrix::from_fn(n, 1, |r, _| r as f64);
        let cls: Vec<i64> = (0..n).map(|i| i64::from(i % 10 == 1)).collect();
        let ds = Dataset::new(x, Labels::classes(&cls), Task::Binclass, vec!["a".into()])
            .unwrap()
            .with_split(split_tags(n))
            .unwrap();
        let (ds, s) = standardized(ds);
        assert!(matches!(
            linear_probe(&identity_encoder(1), &ds, &s, &quick(), Exec::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn bin_probe_self_baseline_is_zero() {
        let n = 120;
        let x = Matrix::from_fn(n, 2, |r, c| ((r * 13 + c * 7) % 17) as f64);
        let ds = Dataset::new(x.clone(), Labels::Values(vec![0.0; n]), Task::Regression, vec!["a".into(), "b".into()])
            .unwrap()
            .with_split(split_tags(n))
            .unwrap();
        let spec = crate::binning::BinningSpec::fit(crate::binning::BinMethod::Quantile, 4, &x, Exec::Sequential).unwrap();
        let t = spec.assign(&x).unwrap();
        let enc = identity_encoder(2);
        let cfg = ProbeConfig { epochs: 10, seeds: 2, ..ProbeConfig::linear() };
        let a = bin_prediction_probe(&enc, &ds, &t, &cfg, Exec::default()).unwrap();
        let b = bin_prediction_probe(&enc, &ds, &t, &cfg, Exec::default()).unwrap();
        let r = a.against(b.mse.mean);
        assert_eq!(r.relative_increase_pct, Some(0.0));
        assert_eq!(relative_increase(1.5, 1.0), 50.0);
    }
}
