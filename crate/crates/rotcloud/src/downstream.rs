//! Transfer evaluation: frozen-feature extraction, a one-vs-rest linear SVM
//! trained by full-batch gradient descent, feature concatenation, and the
//! label-efficiency sweep.

use std::path::Path;

use rand::Rng;

use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::pcdata::DatasetManifest;
use crate::rng::rng_from;
use crate::threads::parallel_map;

/// Dense feature rows with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub source: String,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.dim {
                return Err(Error::ShapeMismatch(format!(
                    "feature row {i} has {} values, expected {}",
                    row.len(),
                    self.dim
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature row {i}")));
            }
        }
        if self.labels.len() != self.rows.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} rows",
                self.labels.len(),
                self.rows.len()
            )));
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().map(|l| l + 1).max().unwrap_or(0)
    }

    /// CSV schema: `label,f0,f1,...` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for j in 0..self.dim {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for (row, label) in self.rows.iter().zip(&self.labels) {
            out.push_str(&label.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<FeatureMatrix> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, "empty feature file"))?;
        if !header.starts_with("label") {
            return Err(Error::parse(path, 1, "missing label column header"));
        }
        let dim = header.split(',').count().saturating_sub(1);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label: usize = fields
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::parse(path, idx + 1, "non-integer label"))?;
            let row: std::result::Result<Vec<f64>, _> =
                fields.map(|f| f.parse::<f64>()).collect();
            let row =
                row.map_err(|_| Error::parse(path, idx + 1, "non-numeric feature value"))?;
            if row.len() != dim {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("expected {dim} features, got {}", row.len()),
                ));
            }
            labels.push(label);
            rows.push(row);
        }
        let fm = FeatureMatrix {
            dim,
            rows,
            labels,
            source: path.display().to_string(),
        };
        fm.validate()?;
        Ok(fm)
    }
}

/// Frozen-feature extraction over a whole manifest, one row per entry in
/// manifest order.
pub fn extract_dataset_features(
    model: &EncoderModel,
    manifest: &DatasetManifest,
    threads: usize,
) -> Result<FeatureMatrix> {
    let jobs: Vec<usize> = (0..manifest.entries.len()).collect();
    let rows = parallel_map(&jobs, threads, |&i| -> Result<Vec<f64>> {
        let mut cloud = manifest.load_entry(i)?;
        cloud.keypoints = None;
        model.extract_feature(&cloud)
    });
    let rows: Result<Vec<Vec<f64>>> = rows.into_iter().collect();
    let fm = FeatureMatrix {
        dim: model.global_dim(),
        rows: rows?,
        labels: manifest.entries.iter().map(|e| e.label).collect(),
        source: "encoder".to_string(),
    };
    fm.validate()?;
    Ok(fm)
}

/// Row-wise concatenation of two feature matrices over the same samples.
pub fn concat_features(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "cannot concat {} rows with {} rows",
            a.len(),
            b.len()
        )));
    }
    for (i, (la, lb)) in a.labels.iter().zip(&b.labels).enumerate() {
        if la != lb {
            return Err(Error::InvalidInput(format!(
                "label mismatch at row {i}: {la} vs {lb}"
            )));
        }
    }
    let rows = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(ra, rb)| {
            let mut row = ra.clone();
            row.extend_from_slice(rb);
            row
        })
        .collect();
    Ok(FeatureMatrix {
        dim: a.dim + b.dim,
        rows,
        labels: a.labels.clone(),
        source: format!("{}+{}", a.source, b.source),
    })
}

/// One-vs-rest linear SVM with squared hinge loss and L2 regularization,
/// fitted by full-batch gradient descent with backtracking step control.
/// Features are standardized internally; predictions stay linear in the raw
/// features.
#[derive(Clone, Debug)]
pub struct LinearSvm {
    pub weights: Vec<Vec<f64>>, // class x dim
    pub bias: Vec<f64>,
    pub lambda: f64,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
}

impl LinearSvm {
    pub fn class_count(&self) -> usize {
        self.weights.len()
    }

    fn standardized(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Class scores for a raw feature row.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let x = self.standardized(row);
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(&x).map(|(wj, xj)| wj * xj).sum::<f64>() + b)
            .collect()
    }

    /// Argmax class; ties resolve to the lowest class index.
    pub fn predict(&self, row: &[f64]) -> usize {
        let scores = self.scores(row);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = i;
            }
        }
        best
    }

    pub fn accuracy(&self, fm: &FeatureMatrix) -> f64 {
        if fm.is_empty() {
            return f64::NAN;
        }
        let hits = fm
            .rows
            .iter()
            .zip(&fm.labels)
            .filter(|(row, label)| self.predict(row) == **label)
            .count();
        hits as f64 / fm.len() as f64
    }
}

/// Objective and gradient of the OvR squared-hinge SVM on standardized rows.
fn svm_objective(
    x: &[Vec<f64>],
    labels: &[usize],
    weights: &[Vec<f64>],
    bias: &[f64],
    lambda: f64,
) -> f64 {
    let n = x.len() as f64;
    let mut obj = 0.0;
    for (w_c, _) in weights.iter().zip(bias) {
        obj += lambda * w_c.iter().map(|w| w * w).sum::<f64>();
    }
    for (row, label) in x.iter().zip(labels) {
        for (c, (w_c, b_c)) in weights.iter().zip(bias).enumerate() {
            let y = if c == *label { 1.0 } else { -1.0 };
            let score: f64 = w_c.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + b_c;
            let margin = (1.0 - y * score).max(0.0);
            obj += margin * margin / n;
        }
    }
    obj
}

fn svm_gradient(
    x: &[Vec<f64>],
    labels: &[usize],
    weights: &[Vec<f64>],
    bias: &[f64],
    lambda: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x.len() as f64;
    let dim = weights[0].len();
    let mut gw = vec![vec![0.0; dim]; weights.len()];
    let mut gb = vec![0.0; weights.len()];
    for (c, w_c) in weights.iter().enumerate() {
        for (g, w) in gw[c].iter_mut().zip(w_c) {
            *g = 2.0 * lambda * w;
        }
    }
    for (row, label) in x.iter().zip(labels) {
        for (c, (w_c, b_c)) in weights.iter().zip(bias).enumerate() {
            let y = if c == *label { 1.0 } else { -1.0 };
            let score: f64 = w_c.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + b_c;
            let margin = 1.0 - y * score;
            if margin > 0.0 {
                let coeff = -2.0 * y * margin / n;
                for (g, v) in gw[c].iter_mut().zip(row) {
                    *g += coeff * v;
                }
                gb[c] += coeff;
            }
        }
    }
    (gw, gb)
}

/// Fit the SVM. `seed` is part of the signature for reproducibility plumbing;
/// the solver itself is deterministic (zero init, full-batch descent).
pub fn train_svm(fm: &FeatureMatrix, lambda: f64, iters: usize, _seed: u64) -> Result<LinearSvm> {
    fm.validate()?;
    let classes = fm.class_count();
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "svm needs at least 2 classes, got {classes}"
        )));
    }
    let mut counts = vec![0usize; classes];
    for l in &fm.labels {
        counts[*l] += 1;
    }
    if let Some(empty) = counts.iter().position(|c| *c == 0) {
        return Err(Error::InvalidInput(format!(
            "svm needs at least one sample of class {empty}"
        )));
    }

    // Standardize columns; constant columns get unit scale.
    let n = fm.len() as f64;
    let mut mean = vec![0.0; fm.dim];
    for row in &fm.rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; fm.dim];
    for row in &fm.rows {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in scale.iter_mut() {
        *s = s.sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let x: Vec<Vec<f64>> = fm
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();

    let mut weights = vec![vec![0.0; fm.dim]; classes];
    let mut bias = vec![0.0; classes];
    let mut obj = svm_objective(&x, &fm.labels, &weights, &bias, lambda);
    let mut step = 1.0;

    for _ in 0..iters {
        let (gw, gb) = svm_gradient(&x, &fm.labels, &weights, &bias, lambda);
        // Backtracking keeps the objective monotone non-increasing.
        let mut accepted = false;
        for _ in 0..40 {
            let trial_w: Vec<Vec<f64>> = weights
                .iter()
                .zip(&gw)
                .map(|(w_c, g_c)| w_c.iter().zip(g_c).map(|(w, g)| w - step * g).collect())
                .collect();
            let trial_b: Vec<f64> = bias.iter().zip(&gb).map(|(b, g)| b - step * g).collect();
            let trial_obj = svm_objective(&x, &fm.labels, &trial_w, &trial_b, lambda);
            if trial_obj <= obj {
                weights = trial_w;
                bias = trial_b;
                obj = trial_obj;
                accepted = true;
                step *= 1.1;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // no descent step left at this scale
        }
    }

    Ok(LinearSvm {
        weights,
        bias,
        lambda,
        feature_mean: mean,
        feature_scale: scale,
    })
}

/// Stratified subset of row indices: at least one sample per class, sorted
/// so that fraction 1.0 reproduces the full set exactly.
pub fn stratified_subset(
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let classes = labels.iter().map(|l| l + 1).max().unwrap_or(0);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, l) in labels.iter().enumerate() {
        per_class[*l].push(i);
    }
    let mut chosen = Vec::new();
    for (class, mut members) in per_class.into_iter().enumerate() {
        if members.is_empty() {
            return Err(Error::InvalidInput(format!(
                "class {class} has no samples to stratify"
            )));
        }
        let take = ((members.len() as f64) * fraction).ceil() as usize;
        let take = take.clamp(1, members.len());
        let mut rng = rng_from(seed, &[0x51, class as u64]);
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        chosen.extend_from_slice(&members[..take]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Accuracy curve over training-set fractions: the SVM is refitted on each
/// stratified subset and scored on the full test matrix.
pub fn label_efficiency_sweep(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    fractions: &[f64],
    lambda: f64,
    iters: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let mut curve = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let subset = stratified_subset(&train.labels, fraction, seed)?;
        let sub = FeatureMatrix {
            dim: train.dim,
            rows: subset.iter().map(|&i| train.rows[i].clone()).collect(),
            labels: subset.iter().map(|&i| train.labels[i]).collect(),
            source: train.source.clone(),
        };
        let svm = train_svm(&sub, lambda, iters, seed)?;
        curve.push((fraction, svm.accuracy(test)));
    }
    Ok(curve)
}

pub fn sweep_to_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("fraction,accuracy\n");
    for (f, a) in curve {
        out.push_str(&format!("{f},{a}\n"));
    }
    out
}
