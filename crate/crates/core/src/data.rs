//! Datasets: synthetic generators, CSV ingestion, readout windows,
//! stratified folds and per-feature standardization.
//!
//! Time-series tables store each sample as `[I_0 .. I_{L-1}, Q_0 .. Q_{L-1}]`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generator argument: {0}")]
    InvalidArgument(String),
    #[error("window [{start}, {end}) does not fit a series of length {len}", end = start + size)]
    Window { start: usize, size: usize, len: usize },
    #[error("table is not a time series")]
    NotTimeSeries,
    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: `{value}` is not a number")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("row {row}: label `{value}` is not a non-negative integer")]
    BadLabel { row: usize, value: String },
    #[error("unknown label column `{0}`")]
    UnknownLabelColumn(String),
    #[error("class {class} has {count} members, fewer than k = {k}")]
    TooFewMembers { class: usize, count: usize, k: usize },
    #[error("k must be >= 1")]
    ZeroFolds,
    #[error("empty split")]
    EmptySplit,
    #[error("{0} samples but {1} classes")]
    TooFewSamples(usize, usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("schema: {0}")]
    Schema(#[from] serde_json::Error),
}

/// Dense labelled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Length of each of the I and Q blocks for time-series tables.
    pub series_length: Option<usize>,
}

impl DatasetTable {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
        series_length: Option<usize>,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() {
            return Err(DataError::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DataError::InvalidArgument(format!("label {bad} >= class count {class_count}")));
        }
        if labels.len() < class_count {
            return Err(DataError::TooFewSamples(labels.len(), class_count));
        }
        if let Some(len) = series_length {
            if features.ncols() != 2 * len {
                return Err(DataError::InvalidArgument(format!(
                    "series length {len} needs {} columns, found {}",
                    2 * len,
                    features.ncols()
                )));
            }
        }
        Ok(Self { features, labels, class_count, series_length })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `idx`, in that order. Class count is preserved.
    pub fn subset(&self, idx: &[usize]) -> DatasetTable {
        DatasetTable {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            series_length: self.series_length,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// A contiguous slice `[start, start + size)` of a time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub start: usize,
    pub size: usize,
}

impl WindowSpec {
    pub fn end(&self) -> usize {
        self.start + self.size
    }

    pub fn check(&self, len: usize) -> Result<(), DataError> {
        if self.size == 0 || self.end() > len {
            return Err(DataError::Window { start: self.start, size: self.size, len });
        }
        Ok(())
    }

    pub fn overlaps(&self, other: &WindowSpec) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

fn balanced_labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    labels
}

/// Gaussian mixture with unit noise.
///
/// Class `c` has mean `±(separation/√2)·e_{c mod dims}` (sign flips on each
/// wrap), so the first `dims` class means are pairwise `separation` apart.
/// Each class is itself two components: a sample also sits at
/// `±(separation/√2)` on axis `(c + classes) mod dims`, sign drawn per
/// sample. That axis leaves the class mean unchanged but is invisible to a
/// linear readout. Class sizes differ by at most one.
pub fn gen_jet_like(
    n: usize,
    dims: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<DatasetTable, DataError> {
    if n == 0 || dims == 0 || classes == 0 {
        return Err(DataError::InvalidArgument("n, dims and classes must be positive".into()));
    }
    if n < classes {
        return Err(DataError::TooFewSamples(n, classes));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(DataError::InvalidArgument(format!("separation {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = balanced_labels(n, classes, &mut rng);
    let offset = separation / std::f64::consts::SQRT_2;
    let mut features = Array2::<f64>::zeros((n, dims));
    for (mut row, &label) in features.rows_mut().into_iter().zip(&labels) {
        for x in row.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        let sign = if (label / dims) % 2 == 0 { 1.0 } else { -1.0 };
        row[label % dims] += sign * offset;
        let mode = if rng.random::<bool>() { offset } else { -offset };
        row[(label + classes) % dims] += mode;
    }
    DatasetTable::new(features, labels, classes, None)
}

/// Binary I/Q readout traces of length `series_length` per channel.
///
/// Both classes share a slow oscillating baseline. Inside `informative`
/// the class means split by `snr` noise standard deviations per channel
/// (`I` up and `Q` down for the excited state); outside they are identical.
pub fn gen_iq_readout(
    n: usize,
    series_length: usize,
    informative: WindowSpec,
    snr: f64,
    seed: u64,
) -> Result<DatasetTable, DataError> {
    if n < 2 || series_length == 0 {
        return Err(DataError::InvalidArgument("need n >= 2 and series_length >= 1".into()));
    }
    informative.check(series_length)?;
    if !snr.is_finite() || snr < 0.0 {
        return Err(DataError::InvalidArgument(format!("snr {snr}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = balanced_labels(n, 2, &mut rng);
    let len = series_length;
    let mut features = Array2::<f64>::zeros((n, 2 * len));
    for (mut row, &label) in features.rows_mut().into_iter().zip(&labels) {
        let state = if label == 1 { 0.5 } else { -0.5 };
        for t in 0..len {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / 64.0;
            let (mut i_mean, mut q_mean) = (0.5 * phase.sin(), 0.5 * phase.cos());
            if t >= informative.start && t < informative.end() {
                i_mean += state * snr;
                q_mean -= state * snr;
            }
            let ni: f64 = StandardNormal.sample(&mut rng);
            let nq: f64 = StandardNormal.sample(&mut rng);
            row[t] = i_mean + ni;
            row[len + t] = q_mean + nq;
        }
    }
    DatasetTable::new(features, labels, 2, Some(len))
}

/// Slice the same window out of the I and Q blocks.
pub fn extract_window(table: &DatasetTable, w: WindowSpec) -> Result<DatasetTable, DataError> {
    let len = table.series_length.ok_or(DataError::NotTimeSeries)?;
    w.check(len)?;
    let mut features = Array2::<f64>::zeros((table.len(), 2 * w.size));
    for (mut out, row) in features.rows_mut().into_iter().zip(table.features.rows()) {
        for k in 0..w.size {
            out[k] = row[w.start + k];
            out[w.size + k] = row[len + w.start + k];
        }
    }
    Ok(DatasetTable {
        features,
        labels: table.labels.clone(),
        class_count: table.class_count,
        series_length: Some(w.size),
    })
}

/// Read a CSV table. Feature columns keep their file order minus the label.
///
/// Rows in errors are 1-based data rows (the header is not counted);
/// columns are 1-based.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, has_header: bool) -> Result<DatasetTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_path(path.as_ref())?;
    let label_idx = if has_header {
        reader
            .headers()?
            .iter()
            .position(|h| h.trim() == label_column)
            .ok_or_else(|| DataError::UnknownLabelColumn(label_column.to_string()))?
    } else {
        label_column
            .parse::<usize>()
            .map_err(|_| DataError::UnknownLabelColumn(label_column.to_string()))?
    };
    let mut width = if has_header { Some(reader.headers()?.len()) } else { None };
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged { row, expected, found: record.len() });
        }
        if label_idx >= expected {
            return Err(DataError::UnknownLabelColumn(label_column.to_string()));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if j == label_idx {
                let label = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v >= 0.0 && v.fract() == 0.0)
                    .ok_or_else(|| DataError::BadLabel { row, value: cell.to_string() })?;
                labels.push(label as usize);
            } else {
                let v = cell
                    .parse::<f64>()
                    .map_err(|_| DataError::NonNumeric { row, column: j + 1, value: cell.to_string() })?;
                values.push(v);
            }
        }
    }
    let n = labels.len();
    let d = width.map_or(0, |w| w - 1);
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| DataError::InvalidArgument(e.to_string()))?;
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    DatasetTable::new(features, labels, class_count, None)
}

/// Write `f0..f{d-1},label` with round-trip exact number formatting.
pub fn export_csv(table: &DatasetTable, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = (0..table.n_features()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    for (row, label) in table.features.rows().into_iter().zip(&table.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

/// Sidecar metadata written next to generated CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub n_samples: usize,
    pub n_features: usize,
    pub class_count: usize,
    pub label_column: String,
    #[serde(default)]
    pub series_length: Option<usize>,
}

impl DatasetSchema {
    pub fn of(table: &DatasetTable) -> Self {
        Self {
            n_samples: table.len(),
            n_features: table.n_features(),
            class_count: table.class_count,
            label_column: "label".into(),
            series_length: table.series_length,
        }
    }

    /// `<csv path>.schema.json`
    pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
        let mut name = csv_path.as_os_str().to_owned();
        name.push(".schema.json");
        name.into()
    }

    pub fn write(&self, csv_path: &Path) -> Result<(), DataError> {
        fs::write(Self::sidecar_path(csv_path), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<Option<Self>, DataError> {
        let path = Self::sidecar_path(csv_path);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    }
}

/// Train/validation index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Fold index per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// Validation = fold `i`, training = the rest. With `k = 1` both are
    /// the whole set.
    pub fn split(&self, i: usize) -> Split {
        if self.k == 1 {
            let all: Vec<usize> = (0..self.assignments.len()).collect();
            return Split { train: all.clone(), val: all };
        }
        let (val, train) = (0..self.assignments.len()).partition(|&s| self.assignments[s] == i);
        Split { train, val }
    }

    pub fn splits(&self) -> Vec<Split> {
        (0..self.k).map(|i| self.split(i)).collect()
    }
}

fn indices_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

/// Stratified assignment: within each (shuffled) class, members are dealt
/// round-robin across folds, continuing the rotation from the previous
/// class so fold sizes also stay within one of each other.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k == 0 {
        return Err(DataError::ZeroFolds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; labels.len()];
    let mut next = 0usize;
    for (class, mut members) in indices_by_class(labels).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(DataError::TooFewMembers { class, count: members.len(), k });
        }
        members.shuffle(&mut rng);
        for m in members {
            assignments[m] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { k, assignments })
}

/// Stratified single split holding out about `val_fraction` of each class
/// (at least one member of every class with two or more members).
pub fn holdout_split(labels: &[usize], val_fraction: f64, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut members in indices_by_class(labels) {
        members.shuffle(&mut rng);
        let n_val = if members.len() >= 2 {
            ((members.len() as f64 * val_fraction).round() as usize).clamp(1, members.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    if val.is_empty() {
        val = train.clone();
    }
    Split { train, val }
}

/// Per-feature standardization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a constant feature.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &Array2<f64>) -> Result<Self, DataError> {
        let n = features.nrows();
        if n == 0 {
            return Err(DataError::EmptySplit);
        }
        let mut mean = Vec::with_capacity(features.ncols());
        let mut std = Vec::with_capacity(features.ncols());
        for col in features.columns() {
            let m = col.sum() / n as f64;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s <= 1e-12 * (1.0 + m.abs()) { 0.0 } else { s });
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, features: &Array2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.mean.clone());
        let inv = Array1::from_iter(self.std.iter().map(|&s| if s == 0.0 { 0.0 } else { 1.0 / s }));
        (features - &mean) * &inv
    }
}

/// Fit on `train` and return the transform.
pub fn fit_normalizer(train: &DatasetTable) -> Result<Standardizer, DataError> {
    Standardizer::fit(&train.features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn jet_like_is_balanced_and_deterministic() {
        let t = gen_jet_like(100, 16, 5, 3.0, 4).unwrap();
        assert_eq!(t.features.dim(), (100, 16));
        assert_eq!(t.class_counts(), vec![20; 5]);
        assert_eq!(t, gen_jet_like(100, 16, 5, 3.0, 4).unwrap());
        assert_ne!(t, gen_jet_like(100, 16, 5, 3.0, 5).unwrap());
        let uneven = gen_jet_like(103, 4, 5, 1.0, 0).unwrap();
        let c = uneven.class_counts();
        assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
        assert!(gen_jet_like(0, 4, 5, 1.0, 0).is_err());
        assert!(gen_jet_like(10, 0, 5, 1.0, 0).is_err());
    }

    #[test]
    fn class_means_are_separation_apart() {
        let t = gen_jet_like(20_000, 8, 4, 3.0, 1).unwrap();
        let mut means = vec![vec![0.0; 8]; 4];
        let counts = t.class_counts();
        for (row, &l) in t.features.rows().into_iter().zip(&t.labels) {
            for j in 0..8 {
                means[l][j] += row[j] / counts[l] as f64;
            }
        }
        let d01: f64 = (0..8).map(|j| (means[0][j] - means[1][j]).powi(2)).sum::<f64>().sqrt();
        assert!((d01 - 3.0).abs() < 0.1, "{d01}");
    }

    #[test]
    fn iq_readout_shape_and_balance() {
        let t = gen_iq_readout(51, 800, WindowSpec { start: 200, size: 200 }, 2.0, 3).unwrap();
        assert_eq!(t.features.dim(), (51, 1600));
        assert_eq!(t.series_length, Some(800));
        let c = t.class_counts();
        assert!(c[0].abs_diff(c[1]) <= 1);
        assert!(gen_iq_readout(10, 100, WindowSpec { start: 90, size: 20 }, 1.0, 0).is_err());
    }

    #[test]
    fn windows() {
        let t = gen_iq_readout(4, 800, WindowSpec { start: 0, size: 10 }, 1.0, 3).unwrap();
        let w = extract_window(&t, WindowSpec { start: 100, size: 400 }).unwrap();
        assert_eq!(w.n_features(), 800);
        assert_eq!(w.labels, t.labels);
        assert_eq!(w.features[[1, 0]], t.features[[1, 100]]);
        assert_eq!(w.features[[1, 399]], t.features[[1, 499]]);
        assert_eq!(w.features[[1, 400]], t.features[[1, 900]]);
        let full = extract_window(&t, WindowSpec { start: 0, size: 800 }).unwrap();
        assert_eq!(full.features, t.features);
        assert!(matches!(
            extract_window(&t, WindowSpec { start: 725, size: 100 }),
            Err(DataError::Window { .. })
        ));
        let flat = gen_jet_like(10, 4, 2, 1.0, 0).unwrap();
        assert!(matches!(extract_window(&flat, WindowSpec { start: 0, size: 1 }), Err(DataError::NotTimeSeries)));
    }

    #[test]
    fn csv_load_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.csv");
        fs::write(&good, "a,class,b\n1.5,0,2\n3,1,4\n-1e-3,2,0\n").unwrap();
        let t = load_csv(&good, "class", true).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.labels, vec![0, 1, 2]);
        assert_eq!(t.features, array![[1.5, 2.0], [3.0, 4.0], [-1e-3, 0.0]]);

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "a,class\n1,0\nx,1\n").unwrap();
        match load_csv(&bad, "class", true) {
            Err(DataError::NonNumeric { row, column, .. }) => assert_eq!((row, column), (2, 1)),
            other => panic!("{other:?}"),
        }
        let ragged = dir.path().join("ragged.csv");
        fs::write(&ragged, "a,class\n1,0\n1,1,2\n").unwrap();
        assert!(matches!(load_csv(&ragged, "class", true), Err(DataError::Ragged { row: 2, .. })));
        assert!(matches!(load_csv(&good, "nope", true), Err(DataError::UnknownLabelColumn(_))));

        let headless = dir.path().join("headless.csv");
        fs::write(&headless, "1,0\n2,1\n").unwrap();
        let t = load_csv(&headless, "1", false).unwrap();
        assert_eq!(t.features, array![[1.0], [2.0]]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = gen_jet_like(40, 3, 4, 1.3, 11).unwrap();
        export_csv(&t, &path).unwrap();
        let back = load_csv(&path, "label", true).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn kfold_examples() {
        let labels = vec![0, 1, 2, 0, 1, 2, 0, 1, 2];
        let plan = stratified_kfold(&labels, 3, 0).unwrap();
        for fold in 0..3 {
            let mut per_class = [0; 3];
            for (s, &f) in plan.assignments.iter().enumerate() {
                if f == fold {
                    per_class[labels[s]] += 1;
                }
            }
            assert_eq!(per_class, [1, 1, 1]);
        }
        let one = stratified_kfold(&labels, 1, 0).unwrap();
        assert!(one.assignments.iter().all(|&f| f == 0));
        assert_eq!(one.split(0).val.len(), 9);
        assert!(matches!(
            stratified_kfold(&[0, 0, 1, 1, 1], 3, 0),
            Err(DataError::TooFewMembers { class: 0, count: 2, k: 3 })
        ));
        assert_eq!(stratified_kfold(&labels, 3, 5).unwrap(), stratified_kfold(&labels, 3, 5).unwrap());
    }

    #[test]
    fn holdout_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let s = holdout_split(&labels, 0.2, 1);
        assert_eq!(s.val.len(), 20);
        assert_eq!(s.train.len(), 80);
        assert!(s.val.iter().all(|v| !s.train.contains(v)));
    }

    #[test]
    fn standardizer_rules() {
        let train = array![[0.0, 5.0], [2.0, 5.0]];
        let st = Standardizer::fit(&train).unwrap();
        assert_eq!(st.transform(&train), array![[-1.0, 0.0], [1.0, 0.0]]);
        // validation split reuses training statistics
        let val = array![[4.0, 7.0]];
        let before = st.clone();
        assert_eq!(st.transform(&val), array![[3.0, 0.0]]);
        assert_eq!(st, before);
        assert!(Standardizer::fit(&Array2::zeros((0, 2))).is_err());
        let constant = Standardizer::fit(&array![[0.1], [0.1], [0.1]]).unwrap();
        assert_eq!(constant.std, vec![0.0]);
    }

    #[test]
    fn standardized_train_moments() {
        let t = gen_jet_like(500, 6, 3, 2.0, 8).unwrap();
        let st = fit_normalizer(&t).unwrap();
        let z = st.transform(&t.features);
        for col in z.columns() {
            let m = col.mean().unwrap();
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() <= 1e-9);
            assert!((v - 1.0).abs() <= 1e-6);
        }
    }

    proptest! {
        #[test]
        fn stratification_holds(counts in proptest::collection::vec(3usize..20, 1..6), k in 1usize..=3, seed in 0u64..1000) {
            let mut labels = Vec::new();
            for (c, &n) in counts.iter().enumerate() {
                labels.extend(std::iter::repeat(c).take(n));
            }
            let plan = stratified_kfold(&labels, k, seed).unwrap();
            for (c, _) in counts.iter().enumerate() {
                let mut per_fold = vec![0usize; k];
                for (s, &f) in plan.assignments.iter().enumerate() {
                    if labels[s] == c { per_fold[f] += 1; }
                }
                prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
            }
            let mut sizes = vec![0usize; k];
            for &f in &plan.assignments { sizes[f] += 1; }
            prop_assert!(sizes.iter().all(|&s| s > 0));
        }
    }
}
