use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use tabbin::binning::{hex_digest, Ablation, BinMethod, BinningSpec};
use tabbin::data::{load_csv, Dataset, Split, Standardizer};
use tabbin::train::{
    bin_prediction_probe, coords_csv, finetune, grid_search, linear_probe, pca_project, pretrain_on, BinProbeReport,
    GridCell, MetricKind, PretrainData, Provenance, RunReport, SslConfig, SslModel,
};
use tabbin::{Error, Exec};

use crate::config::ExperimentConfig;
use crate::Failure;

pub const CONFIG_FILE: &str = "config.json";
pub const BINS_FILE: &str = "bins.txt";
pub const MODEL_FILE: &str = "model.tbck";
pub const LOG_FILE: &str = "train_log.txt";
pub const META_FILE: &str = "pretrain_meta.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum EvalMode {
    Probe,
    Finetune,
    BinError,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum AblateWhich {
    ShuffleOrder,
    BinAverages,
    PerValue,
    EqualWidth,
}

impl AblateWhich {
    fn name(self) -> &'static str {
        match self {
            AblateWhich::ShuffleOrder => "shuffle_order",
            AblateWhich::BinAverages => "bin_averages",
            AblateWhich::PerValue => "per_value",
            AblateWhich::EqualWidth => "equal_width",
        }
    }
}

/// Written next to a checkpoint so later commands can rebuild the model and
/// check that their inputs match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainMeta {
    pub ssl: SslConfig,
    pub bins: usize,
    pub provenance: Provenance,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> tabbin::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> tabbin::Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Standardized dataset plus what is needed to undo and trace it.
pub struct Prepared {
    pub ds: Dataset,
    pub standardizer: Standardizer,
    pub dataset_hash: String,
}

impl Prepared {
    pub fn load(cfg: &ExperimentConfig) -> tabbin::Result<Self> {
        let d = &cfg.dataset;
        let bytes = fs::read(&d.path).map_err(|source| Error::Io {
            path: d.path.clone(),
            source,
        })?;
        let raw = load_csv(&d.path, d.task, &d.label_column)?
            .with_categorical_threshold(d.categorical_threshold)
            .assign_splits(&d.split)?;
        let standardizer = Standardizer::fit(&raw);
        Ok(Self {
            ds: standardizer.apply(&raw)?,
            standardizer,
            dataset_hash: hex_digest(&bytes),
        })
    }

    fn train_features(&self) -> tabbin::Matrix {
        self.ds.features().select_rows(&self.ds.indices(Split::Train))
    }

    fn metric(&self) -> MetricKind {
        if self.ds.task().is_classification() {
            MetricKind::Accuracy
        } else {
            MetricKind::Rmse
        }
    }

    fn fit_bins(&self, method: BinMethod, bins: usize) -> tabbin::Result<BinningSpec> {
        BinningSpec::fit(method, bins, &self.train_features(), Exec::default())
    }
}

pub fn echo_config(cfg: &ExperimentConfig, dir: &Path) -> tabbin::Result<()> {
    write(&dir.join(CONFIG_FILE), cfg.to_json())
}

pub fn cmd_bin(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let p = Prepared::load(cfg)?;
    let spec = p.fit_bins(cfg.binning.method, cfg.binning.bins)?;
    write(&cfg.out.join(BINS_FILE), spec.to_text())?;
    println!(
        "{} binning, {} requested bins, spec hash {}",
        spec.method().as_str(),
        spec.requested_bins(),
        spec.hash()
    );
    for (meta, k) in p.ds.feature_meta().iter().zip(spec.bin_counts()) {
        println!("  {}: {k} bins", meta.name);
    }
    Ok(())
}

fn load_bins(dir: &Path) -> tabbin::Result<Option<BinningSpec>> {
    let path = dir.join(BINS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    BinningSpec::from_text(&read(&path)?).map(Some)
}

/// Pretrain on `data` and write checkpoint, log and metadata into `dir`.
fn pretrain_into(dir: &Path, ssl: &SslConfig, data: &PretrainData, provenance: Provenance) -> tabbin::Result<SslModel> {
    let trained = pretrain_on(ssl, data)?;
    write(&dir.join(MODEL_FILE), trained.model.to_checkpoint()?)?;
    let mut log = String::new();
    for line in &trained.log {
        let _ = writeln!(log, "{}", line.to_line());
    }
    write(&dir.join(LOG_FILE), log)?;
    let meta = PretrainMeta {
        ssl: ssl.clone(),
        bins: data.bins,
        provenance,
    };
    write(
        &dir.join(META_FILE),
        serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n",
    )?;
    Ok(trained.model)
}

pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let p = Prepared::load(cfg)?;
    let ssl = cfg.ssl_config(p.ds.n_features())?;
    let spec = load_bins(&cfg.out)?;
    if ssl.needs_bins() && spec.is_none() {
        return Err(Failure::Validation(format!(
            "objective needs a binning spec but {} does not exist; run `tabbin bin` first",
            cfg.out.join(BINS_FILE).display()
        )));
    }
    let spec = spec.filter(|_| ssl.needs_bins());
    let data = PretrainData::from_dataset(&p.ds, spec.as_ref())?;
    let provenance = Provenance {
        config_hash: Some(cfg.hash()),
        binning_hash: spec.as_ref().map(|s| s.hash()),
        dataset_hash: Some(p.dataset_hash.clone()),
    };
    let started = std::time::Instant::now();
    pretrain_into(&cfg.out, &ssl, &data, provenance)?;
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "pretrained {} epochs in {:.1}s; wrote {} and {}",
        ssl.epochs,
        elapsed,
        cfg.out.join(MODEL_FILE).display(),
        cfg.out.join(LOG_FILE).display()
    );
    Ok(())
}

fn load_model(dir: &Path) -> Result<(SslModel, PretrainMeta), Failure> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.exists() {
        return Err(Failure::Validation(format!(
            "{} not found; run `tabbin pretrain` first",
            meta_path.display()
        )));
    }
    let meta: PretrainMeta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| Failure::Validation(format!("{}: {e}", meta_path.display())))?;
    let model = SslModel::load(&meta.ssl, meta.bins, dir.join(MODEL_FILE))?;
    Ok((model, meta))
}

fn check_hashes(meta: &PretrainMeta, p: &Prepared, spec: Option<&BinningSpec>) -> Result<(), Failure> {
    if let Some(expected) = &meta.provenance.binning_hash {
        let found = spec.map(|s| s.hash()).unwrap_or_else(|| "<missing>".into());
        if &found != expected {
            return Err(Failure::Validation(format!(
                "binning spec mismatch: checkpoint was trained with {expected}, {BINS_FILE} has {found}"
            )));
        }
    }
    if let Some(expected) = &meta.provenance.dataset_hash {
        if expected != &p.dataset_hash {
            return Err(Failure::Validation(format!(
                "dataset mismatch: checkpoint was trained on {expected}, current file is {}",
                p.dataset_hash
            )));
        }
    }
    Ok(())
}

fn require_bins(spec: Option<BinningSpec>, dir: &Path) -> Result<BinningSpec, Failure> {
    spec.ok_or_else(|| {
        Failure::Validation(format!(
            "{} not found; run `tabbin bin` first",
            dir.join(BINS_FILE).display()
        ))
    })
}

pub fn cmd_eval(cfg: &ExperimentConfig, mode: EvalMode) -> Result<(), Failure> {
    let p = Prepared::load(cfg)?;
    let (model, meta) = load_model(&cfg.out)?;
    let spec = load_bins(&cfg.out)?;
    check_hashes(&meta, &p, spec.as_ref())?;
    let provenance = Provenance {
        config_hash: Some(cfg.hash()),
        binning_hash: spec.as_ref().map(|s| s.hash()),
        dataset_hash: Some(p.dataset_hash.clone()),
    };
    let exec = Exec::default();
    match mode {
        EvalMode::Probe | EvalMode::Finetune => {
            let (name, report) = if mode == EvalMode::Probe {
                let c = cfg.probe.to_probe(cfg.seed, true);
                ("probe", linear_probe(&model.encoder, &p.ds, &p.standardizer, &c, exec)?)
            } else {
                let c = cfg.finetune.to_probe(cfg.seed, false);
                ("finetune", finetune(&model.encoder, &p.ds, &p.standardizer, &c, exec)?)
            };
            let report = report.with_provenance(provenance);
            write(&cfg.out.join(format!("eval_{name}.json")), report.to_json() + "\n")?;
            write(&cfg.out.join(format!("eval_{name}.csv")), report.to_csv())?;
            println!(
                "{name}: test {} {:.6} ± {:.6} over {} seeds",
                report.metric.name(),
                report.test.mean,
                report.test.std,
                report.per_seed.len()
            );
        }
        EvalMode::BinError => {
            let spec = require_bins(spec, &cfg.out)?;
            let targets = spec.assign(p.ds.features())?;
            let c = cfg.probe.to_probe(cfg.seed, true);
            let mut report = bin_prediction_probe(&model.encoder, &p.ds, &targets, &c, exec)?;
            if let Some(path) = &cfg.eval.bin_error_baseline {
                let base: BinProbeReport = serde_json::from_str(&read(path)?)
                    .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
                report = report.against(base.mse.mean);
            }
            write(
                &cfg.out.join("eval_bin_error.json"),
                serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
            )?;
            let rel = report
                .relative_increase_pct
                .map(|r| format!(", {r:+.2}% vs baseline"))
                .unwrap_or_default();
            println!("bin-index test mse {:.6}{rel}", report.mse.mean);
        }
        EvalMode::Pca => {
            let spec = require_bins(spec, &cfg.out)?;
            let j = cfg.eval.pca_feature;
            if j >= p.ds.n_features() {
                return Err(Failure::Validation(format!("pca_feature {j} out of range")));
            }
            let z = model.encoder.predict(p.ds.features())?;
            let pca = pca_project(&z, 2)?;
            let labels = spec.assign_column(j, &p.ds.features().column(j));
            write(&cfg.out.join("pca_coords.csv"), coords_csv(&pca.coords, &labels)?)?;
            let summary = serde_json::json!({
                "explained_variance": pca.explained_variance,
                "explained_ratio": pca.explained_ratio,
                "total_variance": pca.total_variance,
                "feature": j,
                "provenance": provenance,
            });
            write(
                &cfg.out.join("pca_summary.json"),
                serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
            )?;
            println!(
                "pca: {} rows, explained ratio {:.4} / {:.4}",
                pca.coords.rows(),
                pca.explained_ratio[0],
                pca.explained_ratio[1]
            );
        }
    }
    Ok(())
}

/// Pretrain and linear-probe one configuration inside `dir`.
fn run_and_probe(
    cfg: &ExperimentConfig,
    p: &Prepared,
    dir: &Path,
    data: impl FnOnce(&SslConfig) -> tabbin::Result<(PretrainData, Option<String>)>,
) -> tabbin::Result<RunReport> {
    let ssl = cfg
        .ssl_config(p.ds.n_features())
        .map_err(|f| Error::InvalidArgument(f.message().to_string()))?;
    echo_config(cfg, dir)?;
    let (data, binning_hash) = data(&ssl)?;
    let provenance = Provenance {
        config_hash: Some(cfg.hash()),
        binning_hash,
        dataset_hash: Some(p.dataset_hash.clone()),
    };
    let model = pretrain_into(dir, &ssl, &data, provenance.clone())?;
    let probe = cfg.probe.to_probe(cfg.seed, true);
    let report = linear_probe(&model.encoder, &p.ds, &p.standardizer, &probe, Exec::default())?.with_provenance(provenance);
    write(&dir.join(REPORT_FILE), report.to_json() + "\n")?;
    write(&dir.join("report.csv"), report.to_csv())?;
    Ok(report)
}

fn cell_config(cfg: &ExperimentConfig, cell: &GridCell, dir: &Path) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.grid = None;
    c.binning.bins = cell.bins;
    c.corruption.p_m = cell.p_m;
    c.corruption.mode = cell.mode;
    c.losses = cell.losses.clone();
    c.out = dir.to_path_buf();
    c
}

fn binned_data(p: &Prepared, spec: Option<&BinningSpec>, dir: &Path) -> tabbin::Result<(PretrainData, Option<String>)> {
    if let Some(s) = spec {
        write(&dir.join(BINS_FILE), s.to_text())?;
    }
    Ok((PretrainData::from_dataset(&p.ds, spec)?, spec.map(|s| s.hash())))
}

pub fn cmd_grid(cfg: &ExperimentConfig, resume: bool) -> Result<(), Failure> {
    let grid = cfg
        .grid
        .clone()
        .ok_or_else(|| Failure::Validation("config has no `grid` section".into()))?;
    grid.validate()?;
    let p = Prepared::load(cfg)?;
    let cells_dir = cfg.out.join("cells");
    let report = grid_search(&grid, p.metric(), Exec::default(), |cell| {
        let dir = cells_dir.join(cell.slug());
        let done = dir.join(REPORT_FILE);
        if resume && done.exists() {
            return RunReport::from_json(&read(&done)?);
        }
        let c = cell_config(cfg, cell, &dir);
        run_and_probe(&c, &p, &dir, |ssl| {
            let spec = if ssl.needs_bins() {
                Some(p.fit_bins(c.binning.method, c.binning.bins)?)
            } else {
                None
            };
            binned_data(&p, spec.as_ref(), &dir)
        })
    })?;
    write(&cfg.out.join("grid.csv"), report.to_csv())?;
    write(&cfg.out.join("grid.json"), report.to_json() + "\n")?;
    if let Some(best) = report.best_cell() {
        let best_cfg = cell_config(cfg, &best.cell, &cfg.out);
        write(&cfg.out.join("best_config.json"), best_cfg.to_json())?;
        println!(
            "best cell {}: validation {} {:.6}",
            best.cell.slug(),
            report.metric.name(),
            best.report.as_ref().map(|r| r.val.mean).unwrap_or(f64::NAN)
        );
    }
    let failed = report.failures();
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell {} failed: {}", c.cell.slug(), c.error.as_deref().unwrap_or(""));
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {} grid cells failed", report.cells.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AblationRow {
    variant: String,
    metric: MetricKind,
    val_mean: f64,
    test_mean: f64,
    test_std: f64,
    change_pct: f64,
}

pub fn cmd_ablate(cfg: &ExperimentConfig, which: AblateWhich) -> Result<(), Failure> {
    if !cfg.losses.iter().any(|t| t.kind.needs_bins()) {
        return Err(Failure::Validation(
            "ablations change bin targets; configure a bin_recon or bin_xent loss".into(),
        ));
    }
    let p = Prepared::load(cfg)?;
    let root = cfg.out.join("ablate");
    let base_dir = root.join("baseline");
    let base_file = base_dir.join(REPORT_FILE);
    let mut with_out = cfg.clone();
    let baseline = if base_file.exists() {
        RunReport::from_json(&read(&base_file)?)?
    } else {
        println!("no baseline at {}; running it first", base_file.display());
        with_out.out = base_dir.clone();
        run_and_probe(&with_out, &p, &base_dir, |_| {
            let spec = p.fit_bins(cfg.binning.method, cfg.binning.bins)?;
            binned_data(&p, Some(&spec), &base_dir)
        })?
    };

    let dir = root.join(which.name());
    with_out.out = dir.clone();
    let ablated = run_and_probe(&with_out, &p, &dir, |_| {
        let spec = p.fit_bins(cfg.binning.method, cfg.binning.bins)?;
        let kind = match which {
            AblateWhich::ShuffleOrder => Ablation::ShuffleOrder,
            AblateWhich::BinAverages => Ablation::BinAverages,
            AblateWhich::PerValue => Ablation::PerValue,
            AblateWhich::EqualWidth => {
                let ew = p.fit_bins(BinMethod::EqualWidth, cfg.binning.bins)?;
                return binned_data(&p, Some(&ew), &dir);
            }
        };
        Ok((PretrainData::ablated(&p.ds, &spec, kind, cfg.seed)?, Some(spec.hash())))
    })?;

    let row = |variant: &str, r: &RunReport| AblationRow {
        variant: variant.to_string(),
        metric: r.metric,
        val_mean: r.val.mean,
        test_mean: r.test.mean,
        test_std: r.test.std,
        change_pct: (r.test.mean - baseline.test.mean) / baseline.test.mean * 100.0,
    };
    let rows = [row("baseline", &baseline), row(which.name(), &ablated)];
    let mut csv = String::from("variant,metric,val_mean,test_mean,test_std,change_pct\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:+.4}",
            r.variant,
            r.metric.name(),
            r.val_mean,
            r.test_mean,
            r.test_std,
            r.change_pct
        );
    }
    write(&cfg.out.join(format!("ablate_{}.csv", which.name())), &csv)?;
    write(
        &cfg.out.join(format!("ablate_{}.json", which.name())),
        serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
    )?;
    print!("{csv}");
    Ok(())
}
