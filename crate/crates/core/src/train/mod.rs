//! Pretraining, downstream evaluation and experiment bookkeeping.

pub mod grid;
pub mod pca;
pub mod probe;
pub mod rank;
pub mod report;
pub mod ssl;

pub use grid::{grid_search, CellResult, GridCell, GridReport, GridSpec};
pub use pca::{coords_csv, pca_project, Pca};
pub use probe::{bin_prediction_probe, finetune, linear_probe, relative_increase, BinProbeReport, ProbeConfig};
pub use rank::{rank_aggregate, rank_values, RankTable};
pub use report::{MetricKind, Provenance, RunReport, SeedMetrics, Summary};
pub use ssl::{pretrain, pretrain_on, Decoder, EpochLog, PretrainData, Pretrained, SslConfig, SslModel};
