//! Labeled datasets, CSV ingestion, standardisation and stratified splits.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    /// One column of a one-hot encoded categorical feature.
    Indicator,
}

/// A dense sample × feature matrix with one class label per row.
///
/// Labels are stored as class indices into `class_names` (sorted
/// lexicographically at ingestion); [`Dataset::one_hot`] materialises the
/// equivalent indicator matrix, whose rows therefore always sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset of continuous features.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let kinds = vec![FeatureKind::Continuous; features.ncols()];
        Self::with_kinds(features, labels, feature_names, kinds, class_names)
    }

    pub fn with_kinds(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let (n, f) = features.dim();
        if n == 0 || f == 0 {
            return Err(Error::InvalidParameter(format!(
                "dataset must have at least one row and one column, got {n}x{f}"
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::TooFewClasses(class_names.len()));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if feature_names.len() != f || feature_kinds.len() != f {
            return Err(Error::DimensionMismatch {
                expected: f,
                found: feature_names.len().min(feature_kinds.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= class_names.len()) {
            return Err(Error::InvalidParameter(format!(
                "label index {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        check_finite(&features)?;
        Ok(Self {
            features,
            labels,
            feature_names,
            feature_kinds,
            class_names,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Class index of every row.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_hot(&self) -> Array2<u8> {
        one_hot(&self.labels, self.n_classes())
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }

    /// Row indices of class `c`, ascending.
    pub fn rows_of_class(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == c).then_some(i))
            .collect()
    }

    /// Rows `indices` in the given order. Class and feature metadata are kept,
    /// so a subset may contain no sample of some class.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        debug_assert!(!indices.is_empty());
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same metadata and labels, new feature values.
    pub(crate) fn with_features(&self, features: Array2<f64>) -> Dataset {
        debug_assert_eq!(features.dim(), self.features.dim());
        Dataset {
            features,
            ..self.clone()
        }
    }
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Array2<u8> {
    let mut y = Array2::zeros((labels.len(), n_classes));
    for (i, &c) in labels.iter().enumerate() {
        y[[i, c]] = 1;
    }
    y
}

fn check_finite(x: &Array2<f64>) -> Result<()> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Reads a headered CSV file.
///
/// Columns listed in `categorical_columns` are one-hot encoded over their
/// sorted distinct values; every other non-label column must parse as a
/// number. The label column becomes the class index over its sorted distinct
/// values. Any empty field rejects the whole file.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    categorical_columns: &[String],
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::UnknownColumn(label_column.to_owned()))?;
    for cat in categorical_columns {
        if !header.contains(cat) {
            return Err(Error::UnknownColumn(cat.clone()));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        if let Some(col) = record.iter().position(str::is_empty) {
            return Err(Error::MissingValue {
                row,
                column: header[col].clone(),
            });
        }
        rows.push(record.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} contains no data rows",
            path.display()
        )));
    }

    let class_names: Vec<String> = rows
        .iter()
        .map(|r| r[label_idx].clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if class_names.len() < 2 {
        return Err(Error::TooFewClasses(class_names.len()));
    }
    let class_of: BTreeMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let labels: Vec<usize> = rows.iter().map(|r| class_of[r[label_idx].as_str()]).collect();

    // Column plan: (source column, Some(category levels) | None for numeric).
    let mut plan: Vec<(usize, Option<Vec<String>>)> = Vec::new();
    for (col, name) in header.iter().enumerate() {
        if col == label_idx {
            continue;
        }
        if categorical_columns.contains(name) {
            let levels: BTreeSet<&str> = rows.iter().map(|r| r[col].as_str()).collect();
            plan.push((col, Some(levels.into_iter().map(str::to_owned).collect())));
        } else {
            plan.push((col, None));
        }
    }

    let mut feature_names = Vec::new();
    let mut feature_kinds = Vec::new();
    for (col, levels) in &plan {
        match levels {
            Some(levels) => {
                for level in levels {
                    feature_names.push(format!("{}={}", header[*col], level));
                    feature_kinds.push(FeatureKind::Indicator);
                }
            }
            None => {
                feature_names.push(header[*col].clone());
                feature_kinds.push(FeatureKind::Continuous);
            }
        }
    }
    if feature_names.is_empty() {
        return Err(Error::InvalidParameter(
            "no feature columns besides the label".into(),
        ));
    }

    let mut features = Array2::zeros((rows.len(), feature_names.len()));
    for (i, row) in rows.iter().enumerate() {
        let mut j = 0;
        for (col, levels) in &plan {
            let raw = &row[*col];
            match levels {
                Some(levels) => {
                    let pos = levels.binary_search(raw).expect("level collected above");
                    features[[i, j + pos]] = 1.0;
                    j += levels.len();
                }
                None => {
                    features[[i, j]] = raw.parse::<f64>().map_err(|_| Error::NotNumeric {
                        row: i,
                        column: header[*col].clone(),
                        value: raw.clone(),
                    })?;
                    j += 1;
                }
            }
        }
    }

    Dataset::with_kinds(features, labels, feature_names, feature_kinds, class_names)
}

/// Per-feature affine scaling fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; indicator columns carry (0, 1).
    pub stdev: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Self {
        let x = train.features();
        let n = x.nrows() as f64;
        let mut mean = vec![0.0; x.ncols()];
        let mut stdev = vec![1.0; x.ncols()];
        for (j, kind) in train.feature_kinds().iter().enumerate() {
            if *kind == FeatureKind::Indicator {
                continue;
            }
            let col = x.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            stdev[j] = var.sqrt();
        }
        Self { mean, stdev }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.stdev[j]);
            if s > 0.0 {
                col.mapv_inplace(|v| (v - m) / s);
            } else {
                col.fill(0.0);
            }
        }
        out
    }

    pub fn apply(&self, d: &Dataset) -> Dataset {
        d.with_features(self.transform(d.features()))
    }
}

/// Fits a [`Standardizer`] on `train` and applies it to `train` and `others`.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> (Dataset, Vec<Dataset>, Standardizer) {
    let scaler = Standardizer::fit(train);
    let train = scaler.apply(train);
    let others = others.iter().map(|d| scaler.apply(d)).collect();
    (train, others, scaler)
}

pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Zero-based row indices of a two-way partition, both ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

/// Per-class sizes of the `fraction` part of a stratified split.
fn stratified_counts(d: &Dataset, fraction: f64) -> Result<Vec<usize>> {
    let counts = d.class_counts();
    let mut take = Vec::with_capacity(counts.len());
    for (c, &n_c) in counts.iter().enumerate() {
        if n_c == 0 {
            take.push(0);
            continue;
        }
        if n_c < 2 {
            return Err(Error::InsufficientClass {
                class: d.class_names()[c].clone(),
                available: n_c,
                required: 2,
            });
        }
        take.push(round_half_up(fraction * n_c as f64).clamp(1, n_c - 1));
    }

    // Keep the total at round(fraction * N) when the largest class can absorb
    // the residual without leaving the floor/ceil band.
    let target = round_half_up(fraction * d.n_samples() as f64) as i64;
    let residual = target - take.iter().sum::<usize>() as i64;
    if residual != 0 {
        let largest = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .expect("at least two classes");
        let n_c = counts[largest];
        let adjusted = take[largest] as i64 + residual;
        let ideal = fraction * n_c as f64;
        if adjusted >= 1 && adjusted < n_c as i64 && (adjusted as f64 - ideal).abs() < 1.0 {
            take[largest] = adjusted as usize;
        }
    }
    Ok(take)
}

/// Stratified two-way split; `second` receives about `fraction` of every class.
pub fn stratified_split_indices(d: &Dataset, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let take = stratified_counts(d, fraction)?;
    let mut in_second = vec![false; d.n_samples()];
    for (c, &count) in take.iter().enumerate() {
        let rows = d.rows_of_class(c);
        let mut rng = rng::stream(seed, &[c as u64]);
        for pos in index::sample(&mut rng, rows.len(), count) {
            in_second[rows[pos]] = true;
        }
    }
    let (second, first): (Vec<usize>, Vec<usize>) =
        (0..d.n_samples()).partition(|&i| in_second[i]);
    Ok(SplitIndices { first, second })
}

pub fn stratified_split(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let idx = stratified_split_indices(d, fraction, seed)?;
    Ok((d.subset(&idx.first), d.subset(&idx.second)))
}

/// Experimental partition protocol: held-out test fraction, then `n_runs`
/// independent labeled/unlabeled splits of the remaining training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub test_fraction: f64,
    pub labeled_fraction: f64,
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            labeled_fraction: 0.3,
            n_runs: 30,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("test_fraction", self.test_fraction),
            ("labeled_fraction", self.labeled_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 1), got {f}"
                )));
            }
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidParameter("n_runs must be positive".into()));
        }
        Ok(())
    }

    pub fn test_seed(&self) -> u64 {
        rng::derive(self.seed, &[rng::tag::TEST_SPLIT])
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        rng::derive(self.seed, &[rng::tag::RUN_SPLIT, run as u64])
    }
}

/// One labeled/unlabeled partition of the training data. The unlabeled part
/// keeps its labels only so evaluation code can score pseudo-labels.
#[derive(Clone, Debug)]
pub struct RunSplit {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    /// `first` = unlabeled rows, `second` = labeled rows of the source set.
    pub indices: SplitIndices,
}

/// Splits `train` into the held-out test set and the remaining pool.
pub fn test_split(d: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Dataset, SplitIndices)> {
    plan.validate()?;
    let idx = stratified_split_indices(d, plan.test_fraction, plan.test_seed())?;
    Ok((d.subset(&idx.first), d.subset(&idx.second), idx))
}

pub fn make_run(train: &Dataset, plan: &SplitPlan, run: usize) -> Result<RunSplit> {
    let idx = stratified_split_indices(train, plan.labeled_fraction, plan.run_seed(run))?;
    Ok(RunSplit {
        labeled: train.subset(&idx.second),
        unlabeled: train.subset(&idx.first),
        indices: idx,
    })
}

pub fn make_runs(train: &Dataset, plan: &SplitPlan) -> Result<Vec<RunSplit>> {
    plan.validate()?;
    (0..plan.n_runs).map(|r| make_run(train, plan, r)).collect()
}

/// Column means of `x`.
pub(crate) fn column_mean(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("non-empty matrix")
}
