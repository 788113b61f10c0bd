//! Dataset ingestion, standardization, stratified folds, and ADASYN
//! oversampling.
//!
//! Data is held as a p×n matrix: rows are variables, columns are samples.
//! CSV files use the transposed everyday layout (row per sample, final
//! column "label" with string class names).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// p×n matrix; column i is sample i.
    pub features: Array2<f64>,
    /// Dense class ids in {0, …, C−1}, one per sample.
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Dataset> {
        let (p, n) = features.dim();
        if n == 0 || p == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                n
            )));
        }
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} features",
                feature_names.len(),
                p
            )));
        }
        let c = class_names.len();
        if c < 2 {
            return Err(Error::SingleClass);
        }
        let mut seen = vec![false; c];
        for &label in &labels {
            if label >= c {
                return Err(Error::LabelOutOfRange { label, classes: c });
            }
            seen[label] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::DimensionMismatch(
                "some class id never appears in labels".into(),
            ));
        }
        for ((row, col), value) in features.indexed_iter() {
            if !value.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            class_names,
        })
    }

    pub fn n_features(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }

    /// Samples at `indices`, in the given order. Class table is inherited,
    /// so a subset may leave some classes empty.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let n = self.n_samples();
        for &i in indices {
            if i >= n {
                return Err(Error::BadSampleIndex { index: i, count: n });
            }
        }
        let features = self.features.select(Axis(1), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(Dataset {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        })
    }
}

/// Parse a dataset CSV: header row, final column "label", remaining columns
/// numeric. Class ids are assigned in order of first appearance.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyDataset)?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 2 || *columns.last().unwrap() != "label" {
        return Err(Error::CsvParse {
            line: 1,
            msg: "header must list at least one feature and end with 'label'".into(),
        });
    }
    let p = columns.len() - 1;
    let feature_names: Vec<String> = columns[..p].iter().map(|s| s.to_string()).collect();

    let mut values: Vec<f64> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut row = 0usize;
    for (line_index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != p + 1 {
            return Err(Error::CsvParse {
                line: line_index + 1,
                msg: format!("expected {} fields, found {}", p + 1, fields.len()),
            });
        }
        for (col, field) in fields[..p].iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::CsvParse {
                line: line_index + 1,
                msg: format!("cannot parse '{field}' as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            values.push(value);
        }
        let name = fields[p];
        let label = match class_names.iter().position(|c| c == name) {
            Some(id) => id,
            None => {
                class_names.push(name.to_string());
                class_names.len() - 1
            }
        };
        labels.push(label);
        row += 1;
    }
    if row == 0 {
        return Err(Error::EmptyDataset);
    }

    let sample_major = Array2::from_shape_vec((row, p), values).expect("shape checked per line");
    Dataset::new(
        sample_major.t().to_owned(),
        labels,
        feature_names,
        class_names,
    )
}

/// Write the CSV form read by [`load_csv`]. Floats use the shortest
/// round-tripping decimal form, so save → load reproduces the matrix bit
/// for bit.
pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&data.feature_names.join(","));
    out.push_str(",label\n");
    for i in 0..data.n_samples() {
        for value in data.features.column(i) {
            out.push_str(&value.to_string());
            out.push(',');
        }
        out.push_str(&data.class_names[data.labels[i]]);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StandardizeMode {
    /// Center and scale to unit variance (default).
    ZScore,
    /// Center only; stds are stored as 1.
    CenterOnly,
}

/// Per-feature training statistics. Test data must be transformed with the
/// training split's standardizer, never its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
    pub mode: StandardizeMode,
}

pub fn fit_standardizer(data: &Dataset, mode: StandardizeMode) -> Result<Standardizer> {
    let n = data.n_samples() as f64;
    let means = data.features.mean_axis(Axis(1)).unwrap();
    let stds = match mode {
        StandardizeMode::CenterOnly => Array1::ones(data.n_features()),
        StandardizeMode::ZScore => {
            let mut stds = Array1::zeros(data.n_features());
            for (k, row) in data.features.rows().into_iter().enumerate() {
                let var = row.iter().map(|x| (x - means[k]).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                if std <= 0.0 {
                    return Err(Error::ZeroVariance(data.feature_names[k].clone()));
                }
                stds[k] = std;
            }
            stds
        }
    };
    Ok(Standardizer { means, stds, mode })
}

pub fn apply_standardizer(std: &Standardizer, data: &Dataset) -> Result<Dataset> {
    let p = data.n_features();
    if std.means.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "standardizer fit on {} features, data has {}",
            std.means.len(),
            p
        )));
    }
    let mut features = data.features.clone();
    for (k, mut row) in features.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|x| (x - std.means[k]) / std.stds[k]);
    }
    Ok(Dataset {
        features,
        labels: data.labels.clone(),
        feature_names: data.feature_names.clone(),
        class_names: data.class_names.clone(),
    })
}

/// Stratified k-fold assignment: per class, fold sizes differ by at most 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id in {0, …, k−1} for every sample.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        assert!(fold < self.k, "fold {} out of range for k={}", fold, self.k);
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        assert!(fold < self.k, "fold {} out of range for k={}", fold, self.k);
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

pub fn make_folds(data: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("fold count {k} must be >= 2")));
    }
    for (class, &count) in data.class_counts().iter().enumerate() {
        if count < k {
            return Err(Error::ClassSmallerThanK { class, count, k });
        }
    }
    let mut rng = substream(seed, "folds");
    let mut assignments = vec![0usize; data.n_samples()];
    // Continue the round robin across classes so total fold sizes stay
    // balanced, not just per-class ones.
    let mut next = 0usize;
    for class in 0..data.n_classes() {
        let mut members: Vec<usize> = (0..data.n_samples())
            .filter(|&i| data.labels[i] == class)
            .collect();
        members.shuffle(&mut rng);
        for index in members {
            assignments[index] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OversampleConfig {
    /// K in the K-nearest-neighbor density estimate.
    pub neighbors: usize,
    /// β in (0,1]: fraction of the class deficit to synthesize.
    pub balance: f64,
    pub seed: u64,
}

impl Default for OversampleConfig {
    fn default() -> Self {
        OversampleConfig {
            neighbors: 5,
            balance: 1.0,
            seed: 0,
        }
    }
}

/// ADASYN oversampling. Synthesizes minority-class points along segments
/// toward same-class neighbors, more of them where other-class neighbors
/// crowd in. The input columns are returned verbatim as a prefix, synthetics
/// appended after.
pub fn adasyn_oversample(
    features: &ArrayView2<f64>,
    labels: &[usize],
    cfg: &OversampleConfig,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let (p, n) = features.dim();
    assert_eq!(labels.len(), n, "one label per sample column");
    if cfg.neighbors == 0 {
        return Err(Error::InvalidConfig("neighbors must be >= 1".into()));
    }
    if !(cfg.balance > 0.0 && cfg.balance <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "balance {} outside (0, 1]",
            cfg.balance
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(Error::SingleClass);
    }
    let mut counts = vec![0usize; n_classes];
    for &label in labels {
        counts[label] += 1;
    }
    let majority = *counts.iter().max().unwrap();

    let k = cfg.neighbors;
    let mut rng = substream(cfg.seed, "adasyn");
    let mut synth_cols: Vec<Array1<f64>> = Vec::new();
    let mut synth_labels: Vec<usize> = Vec::new();

    for (class, &n_m) in counts.iter().enumerate() {
        if n_m >= majority {
            continue;
        }
        if n_m <= k {
            return Err(Error::MinorityTooSmall {
                class,
                count: n_m,
                neighbors: k,
            });
        }
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let deficit = (majority - n_m) as f64 * cfg.balance;

        // Density ratio per minority point: fraction of its K nearest
        // neighbors (whole training set, self excluded) from other classes.
        let mut ratios = Vec::with_capacity(n_m);
        let mut class_neighbors: Vec<Vec<usize>> = Vec::with_capacity(n_m);
        for &i in &members {
            let all = nearest(features, i, (0..n).filter(|&j| j != i), k);
            let foreign = all.iter().filter(|&&j| labels[j] != class).count();
            ratios.push(foreign as f64 / k as f64);
            class_neighbors.push(nearest(
                features,
                i,
                members.iter().copied().filter(|&j| j != i),
                k,
            ));
        }
        let total: f64 = ratios.iter().sum();
        let weights: Vec<f64> = if total == 0.0 {
            vec![1.0 / n_m as f64; n_m]
        } else {
            ratios.iter().map(|r| r / total).collect()
        };

        for (slot, &i) in members.iter().enumerate() {
            let g_i = (weights[slot] * deficit).round() as usize;
            let x_i = features.column(i);
            for _ in 0..g_i {
                let z = class_neighbors[slot][rng.random_range(0..k)];
                let delta: f64 = rng.random();
                let x_z = features.column(z);
                synth_cols.push(&x_i + delta * (&x_z - &x_i));
                synth_labels.push(class);
            }
        }
    }

    let mut out = Array2::zeros((p, n + synth_cols.len()));
    out.slice_mut(ndarray::s![.., ..n]).assign(features);
    for (offset, col) in synth_cols.iter().enumerate() {
        out.column_mut(n + offset).assign(col);
    }
    let mut out_labels = labels.to_vec();
    out_labels.extend(synth_labels);
    Ok((out, out_labels))
}

/// Indices of the k nearest candidates to column `center`, Euclidean
/// distance, ties broken by ascending index. Panics if fewer than k
/// candidates exist (callers check class sizes first).
fn nearest(
    features: &ArrayView2<f64>,
    center: usize,
    candidates: impl Iterator<Item = usize>,
    k: usize,
) -> Vec<usize> {
    let x = features.column(center);
    let mut scored: Vec<(f64, usize)> = candidates
        .map(|j| {
            let d = features
                .column(j)
                .iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            (d, j)
        })
        .collect();
    assert!(scored.len() >= k, "not enough neighbor candidates");
    scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scored[..k].iter().map(|&(_, j)| j).collect()
}
