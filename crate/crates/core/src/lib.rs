//! Binning as a pretext task for self-supervised learning on tabular data.
//!
//! The pipeline: load and standardize a table ([`data`]), fit per-feature bins on
//! the train split ([`binning`]), corrupt inputs with random masks ([`corruption`]),
//! pretrain an MLP encoder against one or more reconstruction objectives
//! ([`objectives`], [`nn`]), then measure the frozen representations with linear
//! probes, fine-tuning, grid search and the ablation protocols ([`train`]).

pub mod binning;
pub mod corruption;
pub mod data;
mod error;
pub mod exec;
pub mod matrix;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
pub use matrix::Matrix;
