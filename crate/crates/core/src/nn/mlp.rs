use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::matrix::Matrix;
use crate::rng;
use crate::{Error, Result};

/// Layer sizes of a ReLU MLP with an identity output layer.
///
/// An empty `hidden_dims` gives a single affine map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            output_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear(input_dim: usize, output_dim: usize) -> Result<Self> {
        Self::new(input_dim, Vec::new(), output_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all layer sizes must be at least 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(out, in)` of every layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }
}

/// Affine layer `y = x Wᵀ + b` with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub(crate) weight: Matrix,
    pub(crate) bias: Vec<f64>,
    grad_weight: Matrix,
    grad_bias: Vec<f64>,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        let (out, inp) = weight.shape();
        Ok(Self {
            weight,
            bias,
            grad_weight: Matrix::zeros(out, inp),
            grad_bias: vec![0.0; out],
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero biases.
    pub fn init<R: Rng>(out: usize, inp: usize, rng: &mut R) -> Self {
        let bound = (1.0 / inp as f64).sqrt();
        let weight = Matrix::from_fn(out, inp, |_, _| rng.random_range(-bound..=bound));
        Self::new(weight, vec![0.0; out]).expect("shape")
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn grad_weight(&self) -> &Matrix {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &[f64] {
        &self.grad_bias
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_t(&self.weight)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Accumulate parameter gradients for input `x` and upstream `dy`; return `dx`.
    pub fn backward(&mut self, x: &Matrix, dy: &Matrix) -> Result<Matrix> {
        if dy.cols() != self.out_dim() || dy.rows() != x.rows() || x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "dense backward: input {}x{}, upstream {}x{}, layer {}x{}",
                x.rows(),
                x.cols(),
                dy.rows(),
                dy.cols(),
                self.out_dim(),
                self.in_dim()
            )));
        }
        let gw = dy.t_matmul(x)?;
        self.grad_weight.add_assign(&gw)?;
        for (g, s) in self.grad_bias.iter_mut().zip(dy.column_sums()) {
            *g += s;
        }
        dy.matmul(&self.weight)
    }
}

impl Parameters for Dense {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &[f64])) {
        f(self.weight.as_mut_slice(), self.grad_weight.as_slice());
        f(&mut self.bias, &self.grad_bias);
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64], &[f64])) {
        f(self.weight.as_slice(), self.grad_weight.as_slice());
        f(&self.bias, &self.grad_bias);
    }

    fn zero_grad(&mut self) {
        self.grad_weight.as_mut_slice().fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// Inputs seen by each layer during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut r = rng::rng_for(seed, rng::TAG_INIT);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| Dense::init(out, inp, &mut r))
            .collect();
        Ok(Self { layers })
    }

    /// Rebuild from stored layers, checking each against `spec`.
    pub fn from_layers(spec: &MlpSpec, layers: Vec<Dense>) -> Result<Self> {
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::Shape(format!(
                "expected {} layers, found {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, ((out, inp), l)) in shapes.iter().zip(&layers).enumerate() {
            if (l.out_dim(), l.in_dim()) != (*out, *inp) {
                return Err(Error::Shape(format!(
                    "layer {i}: expected {out}x{inp}, found {}x{}",
                    l.out_dim(),
                    l.in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: self.input_dim(),
            hidden_dims: self.layers[..self.layers.len() - 1]
                .iter()
                .map(Dense::out_dim)
                .collect(),
            output_dim: self.output_dim(),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, batch has {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h)?;
            if i < last {
                y.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(h);
            h = y;
        }
        Ok((h, ForwardCache { inputs }))
    }

    /// Output only, no cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    /// Backpropagate `upstream`, accumulating parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, cache: &ForwardCache, upstream: &Matrix) -> Result<Matrix> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape("cache does not belong to this network".into()));
        }
        if upstream.cols() != self.output_dim() || upstream.rows() != cache.inputs[0].rows() {
            return Err(Error::Shape(format!(
                "upstream gradient {}x{} for output {}x{}",
                upstream.rows(),
                upstream.cols(),
                cache.inputs[0].rows(),
                self.output_dim()
            )));
        }
        let mut g = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            g = self.layers[i].backward(x, &g)?;
            if i > 0 {
                // x = relu(pre); relu'(pre) = 1 where x > 0.
                for (gv, &xv) in g.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
        }
        Ok(g)
    }
}

impl Parameters for Mlp {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &[f64])) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64], &[f64])) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Dense::zero_grad);
    }
}
