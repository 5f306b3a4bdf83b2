//! Self-supervised pretraining of an encoder with one decoder per objective.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::binning::{ablate, AblatedTargets, Ablation, BinnedTargets, BinningSpec};
use crate::corruption::{CorruptionConfig, ReplaceMode};
use crate::data::{batch_size_rule, iterate_batches, Dataset, Split};
use crate::matrix::Matrix;
use crate::nn::{
    decode_checkpoint, encode_checkpoint, AdamW, AdamWConfig, CosineSchedule, Dense, Mlp, MlpSpec,
    Parameters, PerFeatureHead,
};
use crate::objectives::{self, validate_terms, LossKind, LossOutput, LossTerm};
use crate::rng::{self, TAG_CORRUPTION, TAG_INIT};
use crate::{Error, Result};

pub const DEFAULT_HEAD_EMBED: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    pub encoder: MlpSpec,
    /// Hidden sizes of every decoder; `None` mirrors the encoder.
    pub decoder_hidden: Option<Vec<usize>>,
    /// Per-feature embedding width feeding the shared BinXent head.
    pub head_embed: usize,
    pub losses: Vec<LossTerm>,
    pub p_m: f64,
    pub mode: ReplaceMode,
    pub epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    /// `None` applies [`batch_size_rule`] to the number of training rows.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl SslConfig {
    /// Default training setup for a `d`-feature table: one hidden layer of `width`
    /// and a `width`-dimensional representation.
    pub fn new(d: usize, width: usize, losses: Vec<LossTerm>) -> Result<Self> {
        Ok(Self {
            encoder: MlpSpec::new(d, vec![width], width)?,
            decoder_hidden: None,
            head_embed: DEFAULT_HEAD_EMBED,
            losses,
            p_m: 0.0,
            mode: ReplaceMode::None,
            epochs: 1000,
            base_lr: 1e-4,
            weight_decay: 1e-5,
            batch_size: None,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        validate_terms(&self.losses)?;
        if self.head_embed == 0 {
            return Err(Error::InvalidArgument("head_embed must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_m) {
            return Err(Error::InvalidArgument(format!("p_m {} outside [0, 1]", self.p_m)));
        }
        if !(self.base_lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("learning rate and weight decay must be >= 0".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn needs_bins(&self) -> bool {
        self.losses.iter().any(|t| t.kind.needs_bins())
    }

    pub fn representation_dim(&self) -> usize {
        self.encoder.output_dim
    }

    fn decoder_hidden(&self) -> Vec<usize> {
        self.decoder_hidden
            .clone()
            .unwrap_or_else(|| self.encoder.hidden_dims.iter().rev().copied().collect())
    }

    /// Trunk spec for a decoder of `kind`; BinXent trunks emit `d·E` embeddings.
    pub fn decoder_spec(&self, kind: LossKind) -> Result<MlpSpec> {
        let d = self.encoder.input_dim;
        let out = match kind {
            LossKind::BinXent => d * self.head_embed,
            _ => d,
        };
        MlpSpec::new(self.encoder.output_dim, self.decoder_hidden(), out)
    }
}

/// Training inputs: standardized train rows plus whatever targets the losses need.
#[derive(Debug, Clone)]
pub struct PretrainData {
    pub features: Matrix,
    /// Regression targets for BinRecon (bin indices, or reals after ablation).
    pub bin_values: Option<Matrix>,
    /// BinXent targets, one-hot encoded per batch.
    pub bin_indices: Option<BinnedTargets>,
    pub bins: usize,
    /// Constant replacement vector (train means).
    pub constant: Vec<f64>,
}

impl PretrainData {
    pub fn new(features: Matrix) -> Self {
        let n = features.rows().max(1) as f64;
        let constant = features
            .column_sums()
            .into_iter()
            .map(|s| s / n)
            .collect();
        Self {
            features,
            bin_values: None,
            bin_indices: None,
            bins: 0,
            constant,
        }
    }

    /// Train rows of a standardized dataset, with bin targets when `spec` is given.
    pub fn from_dataset(ds: &Dataset, spec: Option<&BinningSpec>) -> Result<Self> {
        let train = ds.indices(Split::Train);
        let x = ds.features().select_rows(&train);
        let data = Self::new(x);
        match spec {
            Some(s) => {
                let t = s.assign(&data.features)?;
                data.with_bins(&t, s.max_bins())
            }
            None => Ok(data),
        }
    }

    /// Train rows of `ds` whose bin targets went through `which`.
    pub fn ablated(ds: &Dataset, spec: &BinningSpec, which: Ablation, seed: u64) -> Result<Self> {
        let train = ds.indices(Split::Train);
        let data = Self::new(ds.features().select_rows(&train));
        let t = spec.assign(&data.features)?;
        let rows: Vec<usize> = (0..t.n_rows()).collect();
        match ablate(&t, spec, &data.features, &rows, which, seed)? {
            AblatedTargets::Indices { targets, spec: refit } => {
                let width = refit.as_ref().unwrap_or(spec).max_bins();
                data.with_bins(&targets, width)
            }
            AblatedTargets::Values(v) => data.with_bins(&t, spec.max_bins())?.with_bin_values(v),
        }
    }

    pub fn with_bins(mut self, targets: &BinnedTargets, width: usize) -> Result<Self> {
        if targets.n_rows() != self.features.rows() {
            return Err(Error::Shape("bin targets do not match feature rows".into()));
        }
        self.bin_values = Some(targets.to_matrix());
        if let Some(&k) = targets.bin_counts().iter().find(|&&k| k > width) {
            return Err(Error::Shape(format!("{k} bins do not fit one-hot width {width}")));
        }
        self.bin_indices = Some(targets.clone());
        self.bins = width;
        Ok(self)
    }

    /// Override BinRecon targets (e.g. with ablated real values).
    pub fn with_bin_values(mut self, values: Matrix) -> Result<Self> {
        self.features.check_same_shape(&values, "bin values")?;
        self.bin_values = Some(values);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub kind: LossKind,
    pub weight: f64,
    pub trunk: Mlp,
    pub head: Option<PerFeatureHead>,
}

impl Decoder {
    fn forward(&self, z: &Matrix) -> Result<(Matrix, crate::nn::ForwardCache, Option<Matrix>)> {
        let (h, cache) = self.trunk.forward(z)?;
        match &self.head {
            Some(head) => {
                let logits = head.forward(&h)?;
                Ok((logits, cache, Some(h)))
            }
            None => Ok((h, cache, None)),
        }
    }
}

/// Encoder plus one decoder per loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct SslModel {
    pub encoder: Mlp,
    pub decoders: Vec<Decoder>,
}

impl SslModel {
    pub fn init(config: &SslConfig, bins: usize) -> Result<Self> {
        config.validate()?;
        if config.needs_bins() && bins == 0 {
            return Err(Error::InvalidArgument(
                "bin-based objectives need fitted bins".into(),
            ));
        }
        let encoder = Mlp::init(&config.encoder, config.seed)?;
        let d = config.encoder.input_dim;
        let decoders = config
            .losses
            .iter()
            .enumerate()
            .map(|(i, term)| {
                let dseed = rng::derive_seed(config.seed, 100 + i as u64);
                let trunk = Mlp::init(&config.decoder_spec(term.kind)?, dseed)?;
                let head = (term.kind == LossKind::BinXent).then(|| {
                    PerFeatureHead::init(d, config.head_embed, bins, &mut rng::rng_for(dseed, TAG_INIT + 1000))
                });
                Ok(Decoder {
                    kind: term.kind,
                    weight: term.weight,
                    trunk,
                    head,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { encoder, decoders })
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.predict(x)
    }

    fn parameters_mut(&mut self) -> Vec<&mut dyn Parameters> {
        let mut out: Vec<&mut dyn Parameters> = vec![&mut self.encoder];
        for d in &mut self.decoders {
            out.push(&mut d.trunk);
            if let Some(h) = d.head.as_mut() {
                out.push(h);
            }
        }
        out
    }

    fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(|p| p.zero_grad());
    }

    /// Encoder first, then each decoder trunk followed by its head (if any).
    pub fn networks(&self) -> Vec<&[Dense]> {
        let mut out = vec![self.encoder.layers()];
        for d in &self.decoders {
            out.push(d.trunk.layers());
            if let Some(h) = &d.head {
                out.push(std::slice::from_ref(h.layer()));
            }
        }
        out
    }

    pub fn to_checkpoint(&self) -> Result<Vec<u8>> {
        encode_checkpoint(&self.networks())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::nn::save_checkpoint(path, &self.networks())
    }

    /// Rebuild a model with the shapes `config` implies from checkpoint bytes.
    pub fn from_checkpoint(config: &SslConfig, bins: usize, bytes: &[u8]) -> Result<Self> {
        let mut nets = decode_checkpoint(bytes)?.into_iter();
        let mut next = |what: &str| {
            nets.next()
                .ok_or_else(|| Error::Checkpoint(format!("missing network for {what}")))
        };
        let encoder = Mlp::from_layers(&config.encoder, next("encoder")?)
            .map_err(|e| Error::Checkpoint(format!("encoder: {e}")))?;
        let d = config.encoder.input_dim;
        let mut decoders = Vec::new();
        for term in &config.losses {
            let trunk = Mlp::from_layers(&config.decoder_spec(term.kind)?, next(term.kind.name())?)
                .map_err(|e| Error::Checkpoint(format!("{} decoder: {e}", term.kind)))?;
            let head = if term.kind == LossKind::BinXent {
                let mut layers = next("bin_xent head")?;
                if layers.len() != 1 {
                    return Err(Error::Checkpoint("bin_xent head must have one layer".into()));
                }
                Some(PerFeatureHead::from_layer(layers.remove(0), d, config.head_embed, bins)?)
            } else {
                None
            };
            decoders.push(Decoder {
                kind: term.kind,
                weight: term.weight,
                trunk,
                head,
            });
        }
        if nets.next().is_some() {
            return Err(Error::Checkpoint("checkpoint has extra networks".into()));
        }
        Ok(Self { encoder, decoders })
    }

    pub fn load(config: &SslConfig, bins: usize, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(config, bins, &bytes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    /// Mean loss per term over the epoch's samples.
    pub components: Vec<(LossKind, f64)>,
    pub total: f64,
    pub wall_secs: f64,
}

impl EpochLog {
    pub fn to_line(&self) -> String {
        let mut s = format!("epoch={} lr={:.6e}", self.epoch, self.lr);
        for (k, v) in &self.components {
            s.push_str(&format!(" {k}={v:.6e}"));
        }
        s.push_str(&format!(" total={:.6e} wall={:.3}s", self.total, self.wall_secs));
        s
    }
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: SslModel,
    pub log: Vec<EpochLog>,
}

/// Pretrain on a standardized dataset, fitting targets from `spec` on the train rows.
pub fn pretrain(config: &SslConfig, ds: &Dataset, spec: Option<&BinningSpec>) -> Result<Pretrained> {
    if config.needs_bins() && spec.is_none() {
        return Err(Error::InvalidArgument(
            "bin-based objectives need a fitted binning spec".into(),
        ));
    }
    pretrain_on(config, &PretrainData::from_dataset(ds, spec)?)
}

pub fn pretrain_on(config: &SslConfig, data: &PretrainData) -> Result<Pretrained> {
    config.validate()?;
    let n = data.features.rows();
    let d = data.features.cols();
    if d != config.encoder.input_dim {
        return Err(Error::Shape(format!(
            "encoder expects {} features, data has {d}",
            config.encoder.input_dim
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    for term in &config.losses {
        let missing = match term.kind {
            LossKind::BinRecon => data.bin_values.is_none(),
            LossKind::BinXent => data.bin_indices.is_none(),
            _ => false,
        };
        if missing {
            return Err(Error::InvalidArgument(format!("{} needs bin targets", term.kind)));
        }
    }

    let mut model = SslModel::init(config, data.bins)?;
    let corruption = CorruptionConfig::new(config.p_m, config.mode, data.constant.clone())?;
    let batch_size = config.batch_size.unwrap_or_else(|| batch_size_rule(n));
    let steps_per_epoch = n.div_ceil(batch_size) as u64;
    let schedule = CosineSchedule::new(config.base_lr, steps_per_epoch * config.epochs as u64);
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: config.weight_decay,
        ..AdamWConfig::default()
    });
    let mut crng = rng::rng_for(config.seed, TAG_CORRUPTION);
    let rows: Vec<usize> = (0..n).collect();
    let weights: Vec<f64> = config.losses.iter().map(|t| t.weight).collect();
    let mut step = 0u64;
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let epoch_lr = schedule.lr(step);
        let mut sums = vec![0.0; config.losses.len()];
        let mut total = 0.0;
        for (bi, batch) in iterate_batches(&rows, batch_size, config.seed, epoch as u64, true)
            .iter()
            .enumerate()
        {
            let x = data.features.select_rows(batch);
            let cb = corruption.apply(&x, &mut crng)?;
            model.zero_grad();
            let (z, ecache) = model.encoder.forward(&cb.corrupted)?;
            let mut dz = Matrix::zeros(z.rows(), z.cols());
            let mut batch_total = 0.0;
            for (k, dec) in model.decoders.iter_mut().enumerate() {
                let (out, cache, embed) = dec.forward(&z)?;
                let LossOutput { value, mut grad } = match dec.kind {
                    LossKind::ValueRecon => objectives::value_recon(&x, &out)?,
                    LossKind::MaskXent => objectives::mask_xent(&cb.mask, &out)?,
                    LossKind::BinRecon => {
                        let t = data.bin_values.as_ref().expect("checked").select_rows(batch);
                        objectives::bin_recon(&t, &out)?
                    }
                    LossKind::BinXent => {
                        let u = data.bin_indices.as_ref().expect("checked").select_rows(batch).one_hot(data.bins)?;
                        objectives::bin_xent(&u, &out, data.bins)?
                    }
                };
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        what: format!("{} loss", dec.kind),
                        epoch: epoch + 1,
                        batch: bi,
                    });
                }
                grad.scale(weights[k]);
                let g = match (&mut dec.head, embed) {
                    (Some(head), Some(h)) => head.backward(&h, &grad)?,
                    _ => grad,
                };
                dz.add_assign(&dec.trunk.backward(&cache, &g)?)?;
                sums[k] += value * batch.len() as f64;
                batch_total += weights[k] * value;
            }
            total += batch_total * batch.len() as f64;
            model.encoder.backward(&ecache, &dz)?;
            let lr = schedule.lr(step);
            opt.step(&mut model.parameters_mut(), lr).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::NonFinite {
                    what: "gradient".into(),
                    epoch: epoch + 1,
                    batch: bi,
                },
                other => other,
            })?;
            step += 1;
        }
        log.push(EpochLog {
            epoch: epoch + 1,
            lr: epoch_lr,
            components: config
                .losses
                .iter()
                .zip(&sums)
                .map(|(t, s)| (t.kind, s / n as f64))
                .collect(),
            total: total / n as f64,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(Pretrained { model, log })
}
