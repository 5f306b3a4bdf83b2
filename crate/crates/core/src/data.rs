//! Tabular datasets: CSV loading, split assignment, standardization and batching.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::{self, TAG_BATCHES, TAG_SPLIT};
use crate::{Error, Result};

pub const DEFAULT_CATEGORICAL_THRESHOLD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binclass,
    Multiclass,
    Regression,
}

impl Task {
    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    /// Class ids in `0..n_classes`.
    Classes { ids: Vec<usize>, n_classes: usize },
    Values(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { ids, .. } => ids.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Build class labels, remapping the distinct raw ids onto `0..k` in ascending order.
    pub fn classes(raw: &[i64]) -> Self {
        let mut distinct: Vec<i64> = raw.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let ids = raw
            .iter()
            .map(|v| distinct.binary_search(v).expect("present"))
            .collect();
        Labels::Classes {
            ids,
            n_classes: distinct.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    pub train_unique_count: usize,
    pub train_mean: f64,
    pub train_std: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    features: Matrix,
    labels: Labels,
    task: Task,
    split: Vec<Split>,
    feature_meta: Vec<FeatureMeta>,
    categorical_threshold: usize,
}

/// How rows are assigned to train/val/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Ratio { fractions: [f64; 3], seed: u64 },
    IndexFiles {
        train: PathBuf,
        val: PathBuf,
        test: PathBuf,
    },
}

impl Dataset {
    /// A dataset with every row in the train split. Call [`Dataset::assign_splits`] next.
    pub fn new(features: Matrix, labels: Labels, task: Task, names: Vec<String>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if names.len() != features.cols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                names.len(),
                features.cols()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::InvalidArgument("dataset has no rows".into()));
        }
        match (&labels, task) {
            (Labels::Values(_), Task::Regression) => {}
            (Labels::Classes { n_classes, .. }, Task::Binclass) if *n_classes > 2 => {
                return Err(Error::DegenerateLabels(format!(
                    "binclass task with {n_classes} classes"
                )))
            }
            (Labels::Classes { .. }, Task::Binclass | Task::Multiclass) => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "label kind does not match task".into(),
                ))
            }
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument("features contain non-finite values".into()));
        }
        let n = features.rows();
        let mut ds = Self {
            features,
            labels,
            task,
            split: vec![Split::Train; n],
            feature_meta: Vec::new(),
            categorical_threshold: DEFAULT_CATEGORICAL_THRESHOLD,
        };
        ds.feature_meta = ds.compute_meta(&names);
        Ok(ds)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn feature_meta(&self) -> &[FeatureMeta] {
        &self.feature_meta
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classes { n_classes, .. } => Some(*n_classes),
            Labels::Values(_) => None,
        }
    }

    pub fn categorical_threshold(&self) -> usize {
        self.categorical_threshold
    }

    pub fn with_categorical_threshold(mut self, threshold: usize) -> Self {
        self.categorical_threshold = threshold;
        self.refresh_meta();
        self
    }

    /// Row indices belonging to `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Replace the per-row split tags. All three splits must be non-empty.
    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.n_rows() {
            return Err(Error::InvalidSplit(format!(
                "{} tags for {} rows",
                split.len(),
                self.n_rows()
            )));
        }
        for s in [Split::Train, Split::Val, Split::Test] {
            if !split.contains(&s) {
                return Err(Error::InvalidSplit(format!("{s:?} split is empty")));
            }
        }
        self.split = split;
        self.refresh_meta();
        Ok(self)
    }

    pub fn assign_splits(self, mode: &SplitMode) -> Result<Self> {
        let tags = match mode {
            SplitMode::Ratio { fractions, seed } => ratio_split(self.n_rows(), *fractions, *seed)?,
            SplitMode::IndexFiles { train, val, test } => {
                let sets = [read_index_file(train)?, read_index_file(val)?, read_index_file(test)?];
                split_from_indices(self.n_rows(), &sets)?
            }
        };
        self.with_split(tags)
    }

    /// Same rows and splits with replaced features and labels (used by standardization).
    pub(crate) fn with_data(&self, features: Matrix, labels: Labels) -> Self {
        Self {
            features,
            labels,
            task: self.task,
            split: self.split.clone(),
            feature_meta: self.feature_meta.clone(),
            categorical_threshold: self.categorical_threshold,
        }
    }

    /// Replace labels keeping everything else. Labels must match the task.
    pub fn with_labels(&self, labels: Labels, task: Task) -> Result<Self> {
        let names = self.feature_meta.iter().map(|m| m.name.clone()).collect();
        let ds = Dataset::new(self.features.clone(), labels, task, names)?
            .with_categorical_threshold(self.categorical_threshold);
        ds.with_split(self.split.clone())
    }

    fn refresh_meta(&mut self) {
        let names: Vec<String> = self.feature_meta.iter().map(|m| m.name.clone()).collect();
        self.feature_meta = self.compute_meta(&names);
    }

    fn compute_meta(&self, names: &[String]) -> Vec<FeatureMeta> {
        let train = self.indices(Split::Train);
        (0..self.n_features())
            .map(|j| {
                let col: Vec<f64> = train.iter().map(|&r| self.features[(r, j)]).collect();
                let (mean, std) = mean_std(&col);
                let unique = unique_count(&col);
                FeatureMeta {
                    name: names[j].clone(),
                    kind: if unique < self.categorical_threshold {
                        FeatureKind::Categorical
                    } else {
                        FeatureKind::Numerical
                    },
                    train_unique_count: unique,
                    train_mean: mean,
                    train_std: std,
                }
            })
            .collect()
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn unique_count(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Load a CSV with a header row. Every cell except the label column must be numeric.
pub fn load_csv(path: impl AsRef<Path>, task: Task, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n_rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // Line 1 is the header.
        let line = i + 2;
        if record.len() != header.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: format!(
                    "line {line}: expected {} fields, found {}",
                    header.len(),
                    record.len()
                ),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let parsed = cell.trim().parse::<f64>().ok().filter(|v| v.is_finite());
            let v = parsed.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: line,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            if j == label_idx {
                raw_labels.push(v);
            } else {
                values.push(v);
            }
        }
        n_rows += 1;
    }

    let labels = if task.is_classification() {
        let mut ids = Vec::with_capacity(raw_labels.len());
        for (i, &v) in raw_labels.iter().enumerate() {
            if v.fract() != 0.0 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 2,
                    column: label_column.to_string(),
                    value: v.to_string(),
                });
            }
            ids.push(v as i64);
        }
        Labels::classes(&ids)
    } else {
        Labels::Values(raw_labels)
    };
    let features = Matrix::new(n_rows, names.len(), values)?;
    Dataset::new(features, labels, task, names)
}

fn ratio_split(n: usize, fractions: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    if fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::InvalidSplit("fractions must be positive".into()));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSplit("fractions must sum to 1".into()));
    }
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = (fractions[1] * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::InvalidSplit(format!(
            "fractions {fractions:?} leave an empty split for {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng_for(seed, TAG_SPLIT));
    let mut tags = vec![Split::Test; n];
    for (pos, &row) in order.iter().enumerate() {
        if pos < n_train {
            tags[row] = Split::Train;
        } else if pos < n_train + n_val {
            tags[row] = Split::Val;
        }
    }
    Ok(tags)
}

/// Tags from explicit train/val/test index sets, which must partition `0..n`.
pub fn split_from_indices(n: usize, sets: &[Vec<usize>; 3]) -> Result<Vec<Split>> {
    let mut tags: Vec<Option<Split>> = vec![None; n];
    for (set, split) in sets.iter().zip([Split::Train, Split::Val, Split::Test]) {
        for &i in set {
            let slot = tags.get_mut(i).ok_or_else(|| {
                Error::InvalidSplit(format!("index {i} out of range for {n} rows"))
            })?;
            if let Some(prev) = slot {
                return Err(Error::InvalidSplit(format!(
                    "row {i} assigned to both {prev:?} and {split:?}"
                )));
            }
            *slot = Some(split);
        }
    }
    tags.into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| Error::InvalidSplit(format!("row {i} has no split"))))
        .collect()
}

pub fn read_index_file(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| {
                Error::InvalidSplit(format!("{}:{}: bad index '{l}'", path.display(), i + 1))
            })
        })
        .collect()
}

/// Per-feature standardization fitted on the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// (mean, std) of regression labels.
    pub label: Option<(f64, f64)>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let train = ds.indices(Split::Train);
        let (means, stds) = (0..ds.n_features())
            .map(|j| {
                let col: Vec<f64> = train.iter().map(|&r| ds.features[(r, j)]).collect();
                mean_std(&col)
            })
            .unzip();
        let label = match &ds.labels {
            Labels::Values(v) => {
                let col: Vec<f64> = train.iter().map(|&r| v[r]).collect();
                Some(mean_std(&col))
            }
            Labels::Classes { .. } => None,
        };
        Self { means, stds, label }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = standardize(*v, self.means[j], self.stds[j]);
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, z: &Matrix) -> Result<Matrix> {
        self.check(z)?;
        let mut out = z.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.means[j] + *v * self.stds[j];
            }
        }
        Ok(out)
    }

    pub fn label_forward(&self, y: f64) -> f64 {
        match self.label {
            Some((m, s)) => standardize(y, m, s),
            None => y,
        }
    }

    pub fn label_inverse(&self, y: f64) -> f64 {
        match self.label {
            Some((m, s)) => m + y * s,
            None => y,
        }
    }

    /// Standardized copy of the dataset (features and regression labels).
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let features = self.transform(&ds.features)?;
        let labels = match &ds.labels {
            Labels::Values(v) => Labels::Values(v.iter().map(|&y| self.label_forward(y)).collect()),
            other => other.clone(),
        };
        Ok(ds.with_data(features, labels))
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.means.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} features, got {}",
                self.means.len(),
                x.cols()
            )));
        }
        Ok(())
    }
}

#[inline]
fn standardize(v: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (v - mean) / std
    } else {
        0.0
    }
}

/// Batch size by number of training rows.
pub fn batch_size_rule(n_train: usize) -> usize {
    match n_train {
        0..=999 => 64,
        1000..=4999 => 128,
        5000..=9999 => 256,
        10000..=49999 => 512,
        _ => 1024,
    }
}

/// Split `rows` into batches for one epoch. With `shuffle`, the order is a
/// permutation determined by `(seed, epoch)`; otherwise rows keep their order.
pub fn iterate_batches(
    rows: &[usize],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    shuffle: bool,
) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut order = rows.to_vec();
    if shuffle {
        let mut r = rng::rng_for(seed, TAG_BATCHES);
        r.set_stream(epoch);
        order.shuffle(&mut r);
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
