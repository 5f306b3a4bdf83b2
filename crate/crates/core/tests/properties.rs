use proptest::prelude::*;
use rand::SeedableRng;

use tabbin::binning::{ablate, fit_quantile_bins, one_hot, Ablation, BinMethod, BinningSpec};
use tabbin::corruption::{build_replacement, ReplaceMode};
use tabbin::data::{batch_size_rule, iterate_batches, mean_std, Dataset, Labels, SplitMode, Standardizer, Task};
use tabbin::objectives::bin_xent;
use tabbin::train::{grid_search, rank_values, GridSpec, MetricKind, RunReport, SeedMetrics};
use tabbin::{Exec, Matrix};

fn column(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![-50.0..50.0f64, (0..6i32).prop_map(f64::from)], 2..max_len)
}

fn table() -> impl Strategy<Value = Matrix> {
    (2usize..40, 1usize..5).prop_flat_map(|(n, d)| {
        prop::collection::vec(-20.0..20.0f64, n * d).prop_map(move |v| Matrix::new(n, d, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn monotone_transform_preserves_indices(col in column(80), bins in 2usize..12) {
        let fit = fit_quantile_bins(&col, bins);
        let moved: Vec<f64> = col.iter().map(|v| 3.0 * v + 1.0).collect();
        let refit = fit_quantile_bins(&moved, bins);
        let a: Vec<u32> = col.iter().map(|&v| fit.assign(v)).collect();
        let b: Vec<u32> = moved.iter().map(|&v| refit.assign(v)).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn assignment_is_monotone_and_in_range(col in column(80), bins in 2usize..12, probes in prop::collection::vec(-60.0..60.0f64, 1..30)) {
        let fit = fit_quantile_bins(&col, bins);
        let k = fit.bin_count() as u32;
        prop_assert!(k as usize <= bins);
        let mut sorted = probes.clone();
        sorted.sort_by(f64::total_cmp);
        let idx: Vec<u32> = sorted.iter().map(|&v| fit.assign(v)).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(idx.iter().all(|&t| (1..=k).contains(&t)));
    }

    #[test]
    fn spec_text_round_trip(x in table(), bins in 2usize..8) {
        for method in [BinMethod::Quantile, BinMethod::EqualWidth, BinMethod::PerValue] {
            let spec = BinningSpec::fit(method, bins, &x, Exec::Sequential).unwrap();
            let back = BinningSpec::from_text(&spec.to_text()).unwrap();
            prop_assert_eq!(back.assign(&x).unwrap(), spec.assign(&x).unwrap());
            prop_assert_eq!(back.hash(), spec.hash());
        }
    }

    #[test]
    fn one_hot_round_trip(idx in prop::collection::vec(1u32..9, 1..50)) {
        let m = one_hot(&idx, 8).unwrap();
        for (r, &t) in idx.iter().enumerate() {
            let row = m.row(r);
            prop_assert_eq!(row.iter().sum::<f64>(), 1.0);
            prop_assert_eq!(row[t as usize - 1], 1.0);
        }
    }

    #[test]
    fn shuffle_keeps_index_multiset(x in table(), bins in 2usize..8, seed: u64) {
        let spec = BinningSpec::fit(BinMethod::Quantile, bins, &x, Exec::Sequential).unwrap();
        let t = spec.assign(&x).unwrap();
        let rows: Vec<usize> = (0..x.rows()).collect();
        let out = ablate(&t, &spec, &x, &rows, Ablation::ShuffleOrder, seed).unwrap();
        let tabbin::binning::AblatedTargets::Indices { targets, .. } = out else { panic!("indices expected") };
        for j in 0..t.n_features() {
            // Relabelling is a bijection: rows sharing a bin still share one.
            let (a, b) = (t.column(j), targets.column(j));
            for p in 0..a.len() {
                for q in 0..a.len() {
                    prop_assert_eq!(a[p] == a[q], b[p] == b[q]);
                }
            }
            let mut sa: Vec<usize> = count(&a, t.bin_counts()[j]);
            let mut sb: Vec<usize> = count(&b, t.bin_counts()[j]);
            sa.sort_unstable();
            sb.sort_unstable();
            prop_assert_eq!(sa, sb);
        }
    }

    #[test]
    fn standardizer_round_trip(x in table()) {
        let n = x.rows();
        let y = Labels::Values((0..n).map(|i| i as f64 * 0.5).collect());
        let names = (0..x.cols()).map(|j| format!("f{j}")).collect();
        let ds = Dataset::new(x.clone(), y, Task::Regression, names).unwrap();
        let s = Standardizer::fit(&ds);
        let z = s.transform(&x).unwrap();
        let back = s.inverse(&z).unwrap();
        for j in 0..x.cols() {
            let (m, sd) = mean_std(&z.column(j));
            prop_assert!(m.abs() < 1e-9);
            if s.stds[j] > 1e-9 {
                prop_assert!((sd - 1.0).abs() < 1e-9);
                for r in 0..n {
                    prop_assert!((back[(r, j)] - x[(r, j)]).abs() < 1e-9);
                }
            }
        }
        prop_assert!((s.label_inverse(s.label_forward(3.25)) - 3.25).abs() < 1e-12);
    }

    #[test]
    fn batch_rule_is_monotone(a in 0usize..200_000, b in 0usize..200_000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(batch_size_rule(lo) <= batch_size_rule(hi));
    }

    #[test]
    fn batches_partition_rows(n in 0usize..300, bs in 1usize..64, seed: u64, epoch in 0u64..5) {
        let rows: Vec<usize> = (0..n).collect();
        let mut seen: Vec<usize> = iterate_batches(&rows, bs, seed, epoch, true).into_iter().flatten().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, rows);
    }

    #[test]
    fn bin_xent_shift_invariant(logits in prop::collection::vec(-5.0..5.0f64, 12), idx in prop::collection::vec(1u32..4, 4), shift in -10.0..10.0f64) {
        // 1 row, 4 features, 3 bins each.
        let onehot = one_hot(&idx, 3).unwrap().reshape(1, 12).unwrap();
        let l = Matrix::new(1, 12, logits.clone()).unwrap();
        let shifted = Matrix::new(1, 12, logits.iter().map(|v| v + shift).collect()).unwrap();
        let a = bin_xent(&onehot, &l, 3).unwrap().value;
        let b = bin_xent(&onehot, &shifted, 3).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn random_replacement_stays_in_column(x in table(), seed: u64) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rep = build_replacement(&x, ReplaceMode::Random, &[], &mut r).unwrap();
        for j in 0..x.cols() {
            let col = x.column(j);
            for i in 0..x.rows() {
                prop_assert!(col.contains(&rep[(i, j)]));
            }
        }
    }

    #[test]
    fn ranks_are_bounded(values in prop::collection::vec(0.0..1.0f64, 1..12)) {
        let n = values.len() as f64;
        for metric in [MetricKind::Accuracy, MetricKind::Rmse] {
            let ranks = rank_values(&values, metric);
            prop_assert!(ranks.iter().all(|&r| (1.0..=n).contains(&r)));
            prop_assert!((ranks.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_best_dominates(scores in prop::collection::vec(0.0..1.0f64, 4)) {
        let spec = GridSpec {
            p_m: vec![0.1, 0.2],
            bins: vec![2, 4],
            objectives: vec![vec![tabbin::objectives::LossTerm::new(tabbin::objectives::LossKind::BinRecon, 1.0)]],
            modes: vec![ReplaceMode::Random],
        };
        let report = grid_search(&spec, MetricKind::Accuracy, Exec::Sequential, |cell| {
            let v = scores[cell.index];
            Ok(RunReport::from_seeds(MetricKind::Accuracy, vec![SeedMetrics { seed: 0, val: v, test: v, val_original: None, test_original: None }]))
        })
        .unwrap();
        let best = report.best_cell().unwrap().report.as_ref().unwrap().val.mean;
        prop_assert!(scores.iter().all(|&s| s <= best));
    }
}

fn count(idx: &[u32], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &t in idx {
        c[t as usize - 1] += 1;
    }
    c
}

#[test]
fn ratio_split_covers_rows() {
    let x = Matrix::from_fn(97, 2, |r, c| (r + c) as f64);
    let ds = Dataset::new(x, Labels::Values(vec![0.0; 97]), Task::Regression, vec!["a".into(), "b".into()])
        .unwrap()
        .assign_splits(&SplitMode::Ratio { fractions: [0.64, 0.16, 0.2], seed: 3 })
        .unwrap();
    let total: usize = [tabbin::data::Split::Train, tabbin::data::Split::Val, tabbin::data::Split::Test]
        .iter()
        .map(|&s| ds.indices(s).len())
        .sum();
    assert_eq!(total, 97);
}
