use rand::Rng;

use super::{Dense, Parameters};
use crate::matrix::Matrix;
use crate::{Error, Result};

/// One affine map from an `E`-wide embedding to `T` logits, shared by all `d` features.
///
/// Input rows hold `d` consecutive embeddings (`N × d·E`); output rows hold `d`
/// consecutive logit blocks (`N × d·T`).
#[derive(Debug, Clone, PartialEq)]
pub struct PerFeatureHead {
    dense: Dense,
    features: usize,
}

impl PerFeatureHead {
    pub fn init<R: Rng>(features: usize, embed: usize, bins: usize, rng: &mut R) -> Self {
        Self {
            dense: Dense::init(bins, embed, rng),
            features,
        }
    }

    pub fn from_layer(layer: Dense, features: usize, embed: usize, bins: usize) -> Result<Self> {
        if (layer.out_dim(), layer.in_dim()) != (bins, embed) {
            return Err(Error::Shape(format!(
                "per-feature head: expected {bins}x{embed}, found {}x{}",
                layer.out_dim(),
                layer.in_dim()
            )));
        }
        Ok(Self {
            dense: layer,
            features,
        })
    }

    pub fn layer(&self) -> &Dense {
        &self.dense
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn embed_dim(&self) -> usize {
        self.dense.in_dim()
    }

    pub fn bins(&self) -> usize {
        self.dense.out_dim()
    }

    fn check(&self, emb: &Matrix) -> Result<()> {
        if emb.cols() != self.features * self.embed_dim() {
            return Err(Error::Shape(format!(
                "per-feature head expects {}·{} columns, got {}",
                self.features,
                self.embed_dim(),
                emb.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, emb: &Matrix) -> Result<Matrix> {
        self.check(emb)?;
        let n = emb.rows();
        let slots = emb.clone().reshape(n * self.features, self.embed_dim())?;
        self.dense
            .forward(&slots)?
            .reshape(n, self.features * self.bins())
    }

    /// Accumulate head gradients; return the gradient w.r.t. `emb`.
    pub fn backward(&mut self, emb: &Matrix, dlogits: &Matrix) -> Result<Matrix> {
        self.check(emb)?;
        let n = emb.rows();
        if dlogits.shape() != (n, self.features * self.bins()) {
            return Err(Error::Shape(format!(
                "per-feature head upstream {}x{}, expected {n}x{}",
                dlogits.rows(),
                dlogits.cols(),
                self.features * self.bins()
            )));
        }
        let slots = emb.clone().reshape(n * self.features, self.embed_dim())?;
        let dl = dlogits.clone().reshape(n * self.features, self.bins())?;
        self.dense
            .backward(&slots, &dl)?
            .reshape(n, self.features * self.embed_dim())
    }
}

impl Parameters for PerFeatureHead {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &[f64])) {
        self.dense.visit_mut(f);
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64], &[f64])) {
        self.dense.visit(f);
    }

    fn zero_grad(&mut self) {
        self.dense.zero_grad();
    }
}
