use std::fs;

use tabbin::binning::{BinMethod, BinningSpec};
use tabbin::data::{load_csv, Split, SplitMode, Standardizer, Task};
use tabbin::objectives::{LossKind, LossTerm};
use tabbin::train::{
    bin_prediction_probe, linear_probe, pretrain, MetricKind, ProbeConfig, SslConfig, SslModel,
};
use tabbin::Exec;

fn small_config(d: usize, losses: Vec<LossTerm>) -> SslConfig {
    SslConfig {
        epochs: 5,
        base_lr: 1e-3,
        ..SslConfig::new(d, 16, losses).unwrap()
    }
}

fn write_csv(dir: &tempfile::TempDir) -> std::path::PathBuf {
    let mut text = String::from("x1,x2,cat,target\n");
    for i in 0..120 {
        let x1 = (i as f64 * 0.11).cos();
        let x2 = i as f64 / 7.0;
        text.push_str(&format!("{x1},{x2},{},{}\n", i % 4, i % 2));
    }
    let p = dir.path().join("t.csv");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn csv_to_probe_report() {
    let dir = tempfile::TempDir::new().unwrap();
    let raw = load_csv(write_csv(&dir), Task::Binclass, "target")
        .unwrap()
        .assign_splits(&SplitMode::Ratio {
            fractions: [0.64, 0.16, 0.2],
            seed: 1,
        })
        .unwrap();
    let st = Standardizer::fit(&raw);
    let ds = st.apply(&raw).unwrap();
    let train = ds.features().select_rows(&ds.indices(Split::Train));
    let spec = BinningSpec::fit(BinMethod::Quantile, 10, &train, Exec::default()).unwrap();
    assert_eq!(spec.bin_counts()[2], 4);

    let cfg = small_config(3, vec![LossTerm::new(LossKind::BinXent, 1.0), LossTerm::new(LossKind::MaskXent, 1.0)]);
    let cfg = SslConfig {
        p_m: 0.3,
        mode: tabbin::corruption::ReplaceMode::Random,
        ..cfg
    };
    let trained = pretrain(&cfg, &ds, Some(&spec)).unwrap();
    assert_eq!(trained.log.len(), 5);
    assert!(trained.log.iter().all(|l| l.total.is_finite()));

    let probe = ProbeConfig {
        epochs: 5,
        seeds: 3,
        ..ProbeConfig::linear()
    };
    let report = linear_probe(&trained.model.encoder, &ds, &st, &probe, Exec::default()).unwrap();
    assert_eq!(report.metric, MetricKind::Accuracy);
    assert_eq!(report.per_seed.len(), 3);
    assert!((0.0..=1.0).contains(&report.test.mean));

    let targets = spec.assign(ds.features()).unwrap();
    let b = bin_prediction_probe(&trained.model.encoder, &ds, &targets, &probe, Exec::default()).unwrap();
    assert_eq!(b.per_seed_mse.len(), 3);
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::TempDir::new().unwrap();
    let cfg = small_config(4, vec![LossTerm::new(LossKind::BinRecon, 1.0), LossTerm::new(LossKind::BinXent, 0.5)]);
    let model = SslModel::init(&cfg, 6).unwrap();
    let path = dir.path().join("m.tbck");
    model.save(&path).unwrap();
    let back = SslModel::load(&cfg, 6, &path).unwrap();
    assert_eq!(back.to_checkpoint().unwrap(), model.to_checkpoint().unwrap());
    // A different architecture must be rejected.
    let other = small_config(4, vec![LossTerm::new(LossKind::BinRecon, 1.0)]);
    assert!(SslModel::load(&other, 6, &path).is_err());
}

#[test]
fn sequential_and_parallel_agree() {
    let dir = tempfile::TempDir::new().unwrap();
    let raw = load_csv(write_csv(&dir), Task::Regression, "target").unwrap();
    let st = Standardizer::fit(&raw);
    let ds = st.apply(&raw).unwrap();
    let a = BinningSpec::fit(BinMethod::Quantile, 5, ds.features(), Exec::Sequential).unwrap();
    let b = BinningSpec::fit(BinMethod::Quantile, 5, ds.features(), Exec::Parallel).unwrap();
    assert_eq!(a.to_text(), b.to_text());
}
