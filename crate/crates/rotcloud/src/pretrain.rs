//! Self-supervised pretext training: rotate each cloud by a hidden rotation
//! and train the encoder to recover it, either as a K-way class over a
//! direction set or by regressing the rotation (axis-angle or 6-D).

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, AdamConfig, Tape, Tensor, Var};
use crate::dirset::DirectionSet;
use crate::encoder::{EncoderModel, Head, TrainConfig};
use crate::error::{Error, Result};
use crate::pcdata::{DatasetManifest, PointCloud};
use crate::rng::{derive_seed, rng_from};
use crate::so3::{
    axis_angle_to_rotation, geodesic_angle, normalize3, sample_uniform_axis, sixd_to_rotation,
    AxisAngle, Rotation, SixD, Vec3,
};
use crate::threads::parallel_map;

const TAG_SHUFFLE: u64 = 0x10;
const TAG_SAMPLE: u64 = 0x11;
const TAG_HOLDOUT: u64 = 0x12;
const TAG_EVAL: u64 = 0x13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PretextTask {
    Classify { k: usize },
    AxisAngle,
    SixD,
}

impl PretextTask {
    pub fn head(&self) -> Head {
        match self {
            PretextTask::Classify { k } => Head::Classify(*k),
            PretextTask::AxisAngle => Head::AxisAngleReg,
            PretextTask::SixD => Head::SixDReg,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PretextTask::Classify { .. } => "classify",
            PretextTask::AxisAngle => "axisangle",
            PretextTask::SixD => "sixd",
        }
    }
}

/// Per-epoch training record: `epoch,loss,metric`. The metric is held-out
/// rotation accuracy for classification and held-out mean geodesic error
/// (radians) for the regression tasks.
#[derive(Clone, Debug, Default)]
pub struct TrainingLog {
    pub rows: Vec<(usize, f64, f64)>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,metric\n");
        for (epoch, loss, metric) in &self.rows {
            out.push_str(&format!("{epoch},{loss},{metric}\n"));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn final_metric(&self) -> Option<f64> {
        self.rows.last().map(|r| r.2)
    }
}

/// The hidden transformation applied to one pretext sample.
#[derive(Clone, Debug)]
pub enum PretextLabel {
    Class(usize),
    Rotation(Rotation),
}

/// Rotate a canonical-pose cloud to a uniformly drawn direction index.
pub fn make_classification_sample<R: Rng>(
    pc: &PointCloud,
    ds: &DirectionSet,
    up: Vec3,
    rng: &mut R,
) -> Result<(PointCloud, usize)> {
    let label = rng.gen_range(0..ds.k);
    let rotation = crate::so3::rotation_from_up_to(ds.dirs[label], up)?;
    Ok((crate::so3::apply_rotation(&rotation, pc), label))
}

/// The regression target distribution: uniform axis, angle uniform in
/// [0, pi].
pub fn sample_regression_rotation<R: Rng>(rng: &mut R) -> (AxisAngle, Rotation) {
    let axis = sample_uniform_axis(rng);
    let angle = rng.gen::<f64>() * std::f64::consts::PI;
    let aa = AxisAngle { axis, angle };
    let rotation = axis_angle_to_rotation(&aa).expect("unit axis");
    (aa, rotation)
}

fn subsample_points<R: Rng>(pc: &PointCloud, take: Option<usize>, rng: &mut R) -> PointCloud {
    let take = match take {
        Some(t) if t < pc.len() => t,
        _ => return PointCloud::new(pc.points.clone()),
    };
    // Partial Fisher-Yates over an index vector.
    let mut idx: Vec<usize> = (0..pc.len()).collect();
    for i in 0..take {
        let j = i + rng.gen_range(0..idx.len() - i);
        idx.swap(i, j);
    }
    PointCloud::new(idx[..take].iter().map(|&i| pc.points[i]).collect())
}

fn augment_cloud<R: Rng>(pc: &PointCloud, rng: &mut R) -> Result<PointCloud> {
    let scale = 0.8 + 0.4 * rng.gen::<f64>();
    let mut out = pc.clone();
    for p in out.points.iter_mut() {
        for k in 0..3 {
            p[k] = p[k] * scale + 0.01 * crate::rng::standard_normal(rng);
        }
    }
    out.normalize()
}

struct LoadedDataset {
    clouds: Vec<PointCloud>,
    train_idx: Vec<usize>,
    holdout_idx: Vec<usize>,
}

fn load_pretext_dataset(manifest: &DatasetManifest, config: &TrainConfig) -> Result<LoadedDataset> {
    if manifest.entries.is_empty() {
        return Err(Error::InvalidInput("manifest has no entries".into()));
    }
    let jobs: Vec<usize> = (0..manifest.entries.len()).collect();
    let clouds = parallel_map(&jobs, config.threads, |&i| -> Result<PointCloud> {
        let mut cloud = manifest.load_entry(i)?;
        cloud.keypoints = None; // pretext ignores keypoints
        Ok(cloud)
    });
    let clouds: Result<Vec<PointCloud>> = clouds.into_iter().collect();
    let clouds = clouds?;

    // Held-out pretext split: a seeded shuffle, last fraction held out.
    let mut order: Vec<usize> = (0..clouds.len()).collect();
    let mut rng = rng_from(config.seed, &[TAG_HOLDOUT]);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let holdout = ((clouds.len() as f64) * config.holdout_fraction).round() as usize;
    let holdout = holdout.min(clouds.len().saturating_sub(1));
    let split = clouds.len() - holdout;
    Ok(LoadedDataset {
        clouds,
        train_idx: order[..split].to_vec(),
        holdout_idx: order[split..].to_vec(),
    })
}

/// Build one sample's tape, compute the task loss and gradients.
///
/// Returns None when a 6-D prediction is degenerate (skipped and counted by
/// the caller).
fn sample_loss_and_grads(
    model: &EncoderModel,
    task: PretextTask,
    ds: Option<&DirectionSet>,
    cloud: &PointCloud,
    config: &TrainConfig,
    sample_seed: u64,
) -> Result<Option<(f64, Vec<Tensor>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut prepared = subsample_points(cloud, config.points_per_cloud, &mut rng);
    if config.augment {
        prepared = augment_cloud(&prepared, &mut rng)?;
    }

    let mut tape = Tape::new();
    let (rotated, target): (PointCloud, PretextLabel) = match task {
        PretextTask::Classify { .. } => {
            let ds = ds.expect("classification needs a direction set");
            let (rotated, label) = make_classification_sample(&prepared, ds, config.up, &mut rng)?;
            (rotated, PretextLabel::Class(label))
        }
        PretextTask::AxisAngle | PretextTask::SixD => {
            let (_, rotation) = sample_regression_rotation(&mut rng);
            (
                crate::so3::apply_rotation(&rotation, &prepared),
                PretextLabel::Rotation(rotation),
            )
        }
    };

    let pass = model.forward_on(&mut tape, &rotated)?;
    let loss_var = match (&target, task) {
        (PretextLabel::Class(label), PretextTask::Classify { .. }) => {
            tape.softmax_cross_entropy(pass.head_output, *label)?
        }
        (PretextLabel::Rotation(rotation), PretextTask::AxisAngle) => {
            let aa = crate::so3::rotation_to_axis_angle(rotation);
            let axis_pred = tape.slice(pass.head_output, 0, 3)?;
            let angle_pred = tape.slice(pass.head_output, 3, 1)?;
            let axis_target = tape.leaf(Tensor::row(&aa.axis));
            let angle_target = tape.leaf(Tensor::row(&[aa.angle]));
            let axis_loss = tape.mse(axis_pred, axis_target)?;
            let angle_loss = tape.mse(angle_pred, angle_target)?;
            tape.add(axis_loss, angle_loss)?
        }
        (PretextLabel::Rotation(rotation), PretextTask::SixD) => {
            match sixd_rotation_loss(&mut tape, pass.head_output, rotation)? {
                Some(loss) => loss,
                None => return Ok(None),
            }
        }
        _ => unreachable!("task/label pairing is fixed above"),
    };

    let loss = tape.value(loss_var).item();
    if !loss.is_finite() {
        return Err(Error::NonFinite("pretext loss".into()));
    }
    tape.backward(loss_var)?;
    Ok(Some((loss, pass.param_grads(&tape))))
}

/// Differentiable Gram-Schmidt of the predicted 6-D output against the
/// target matrix (row-major, 9 values). Returns None on degenerate input.
fn sixd_rotation_loss(
    tape: &mut Tape,
    head_output: Var,
    target: &Rotation,
) -> Result<Option<Var>> {
    let values = tape.value(head_output).data();
    let pred = SixD::new(
        [values[0], values[1], values[2]],
        [values[3], values[4], values[5]],
    );
    if sixd_to_rotation(&pred).is_err() {
        return Ok(None);
    }

    let a1 = tape.slice(head_output, 0, 3)?;
    let a2 = tape.slice(head_output, 3, 3)?;
    let n1sq = tape.dot(a1, a1)?;
    let n1 = tape.sqrt(n1sq);
    let c1 = tape.div_scalar(a1, n1)?;
    let proj = tape.dot(a2, c1)?;
    let scaled = tape.mul_scalar(c1, proj)?;
    let u2 = tape.sub(a2, scaled)?;
    let n2sq = tape.dot(u2, u2)?;
    let n2 = tape.sqrt(n2sq);
    let c2 = tape.div_scalar(u2, n2)?;
    let c3 = tape.cross(c1, c2)?;

    // Row-major assembly of [c1 c2 c3] as columns.
    let mut rows = Vec::with_capacity(3);
    for i in 0..3 {
        let e1 = tape.slice(c1, i, 1)?;
        let e2 = tape.slice(c2, i, 1)?;
        let e3 = tape.slice(c3, i, 1)?;
        let row = tape.concat(e1, e2)?;
        rows.push(tape.concat(row, e3)?);
    }
    let top = tape.concat(rows[0], rows[1])?;
    let mat = tape.concat(top, rows[2])?;
    let target_var = tape.leaf(Tensor::row(&target.flatten()));
    Ok(Some(tape.mse(mat, target_var)?))
}

/// Recover the predicted rotation from a regression head's raw output.
/// The angle is clamped into [0, pi] at evaluation time.
pub fn predicted_rotation(task: PretextTask, output: &[f64]) -> Result<Rotation> {
    match task {
        PretextTask::AxisAngle => {
            let axis = match normalize3([output[0], output[1], output[2]]) {
                Ok(a) => a,
                Err(_) => [0.0, 0.0, 1.0],
            };
            let angle = output[3].clamp(0.0, std::f64::consts::PI);
            axis_angle_to_rotation(&AxisAngle { axis, angle })
        }
        PretextTask::SixD => sixd_to_rotation(&SixD::new(
            [output[0], output[1], output[2]],
            [output[3], output[4], output[5]],
        )),
        PretextTask::Classify { .. } => Err(Error::InvalidInput(
            "classification head does not predict a rotation matrix".into(),
        )),
    }
}

fn holdout_metric(
    model: &EncoderModel,
    task: PretextTask,
    ds: Option<&DirectionSet>,
    dataset: &LoadedDataset,
    config: &TrainConfig,
) -> Result<f64> {
    let jobs: Vec<usize> = dataset.holdout_idx.clone();
    let scores = parallel_map(&jobs, config.threads, |&idx| -> Result<f64> {
        let mut rng = rng_from(config.seed, &[TAG_EVAL, idx as u64]);
        let prepared = subsample_points(&dataset.clouds[idx], config.points_per_cloud, &mut rng);
        match task {
            PretextTask::Classify { .. } => {
                let ds = ds.expect("classification needs a direction set");
                let (rotated, label) =
                    make_classification_sample(&prepared, ds, config.up, &mut rng)?;
                let (_, logits) = model.forward(&rotated)?;
                let pred = argmax(&logits);
                Ok(if pred == label { 1.0 } else { 0.0 })
            }
            PretextTask::AxisAngle | PretextTask::SixD => {
                let (_, rotation) = sample_regression_rotation(&mut rng);
                let rotated = crate::so3::apply_rotation(&rotation, &prepared);
                let (_, output) = model.forward(&rotated)?;
                match predicted_rotation(task, &output) {
                    Ok(pred) => Ok(geodesic_angle(&pred, &rotation)),
                    Err(_) => Ok(std::f64::consts::PI), // degenerate counts as worst case
                }
            }
        }
    });
    let scores: Result<Vec<f64>> = scores.into_iter().collect();
    let scores = scores?;
    if scores.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Run the pretext training loop for any task.
pub fn train_pretext(
    manifest: &DatasetManifest,
    task: PretextTask,
    config: &TrainConfig,
) -> Result<(EncoderModel, TrainingLog)> {
    config.validate()?;
    let ds = match task {
        PretextTask::Classify { k } => Some(DirectionSet::build(k)?),
        _ => None,
    };
    let dataset = load_pretext_dataset(manifest, config)?;
    let mut model = EncoderModel::new(&config.widths, config.head_hidden, task.head(), config.seed)?;
    model.feature_points = config.points_per_cloud;
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
        &model.params_mut(),
    );
    let names = model.param_names();
    let mut log = TrainingLog::default();
    let mut degenerate = 0usize;
    let mut seen = 0usize;

    for epoch in 0..config.epochs {
        if config.lr_decay && config.epochs > 1 {
            let progress = epoch as f64 / (config.epochs - 1) as f64;
            let floor = 0.1 * config.learning_rate;
            let lr = floor
                + (config.learning_rate - floor)
                    * 0.5
                    * (1.0 + (std::f64::consts::PI * progress).cos());
            adam.set_lr(lr);
        }
        let mut order = dataset.train_idx.clone();
        let mut shuffle_rng = rng_from(config.seed, &[TAG_SHUFFLE, epoch as u64]);
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let jobs: Vec<usize> = batch.to_vec();
            let results = parallel_map(&jobs, config.threads, |&idx| {
                let sample_seed =
                    derive_seed(config.seed, &[TAG_SAMPLE, epoch as u64, idx as u64]);
                sample_loss_and_grads(&model, task, ds.as_ref(), &dataset.clouds[idx], config, sample_seed)
            });

            let mut batch_grads: Option<Vec<Tensor>> = None;
            let mut contributed = 0usize;
            for r in results {
                let r = r.map_err(|e| {
                    Error::NonFinite(format!("epoch {epoch}, batch {batch_no}: {e}"))
                })?;
                seen += 1;
                match r {
                    None => degenerate += 1,
                    Some((loss, grads)) => {
                        contributed += 1;
                        epoch_loss += loss;
                        epoch_count += 1;
                        match &mut batch_grads {
                            None => batch_grads = Some(grads),
                            Some(acc) => {
                                for (a, g) in acc.iter_mut().zip(&grads) {
                                    for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                                        *av += gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(mut grads) = batch_grads {
                let inv = 1.0 / contributed as f64;
                for g in grads.iter_mut() {
                    for v in g.data_mut() {
                        *v *= inv;
                    }
                }
                let mut params = model.params_mut();
                adam.step(&mut params, &grads, &names).map_err(|e| {
                    Error::NonFinite(format!("epoch {epoch}, batch {batch_no}: {e}"))
                })?;
            }
        }
        if seen > 0 && degenerate * 100 > seen {
            return Err(Error::Degenerate(format!(
                "{degenerate} of {seen} samples produced degenerate 6-D outputs"
            )));
        }

        let metric = holdout_metric(&model, task, ds.as_ref(), &dataset, config)?;
        let mean_loss = if epoch_count > 0 {
            epoch_loss / epoch_count as f64
        } else {
            f64::NAN
        };
        log.rows.push((epoch, mean_loss, metric));
    }
    Ok((model, log))
}

pub fn train_classifier(
    manifest: &DatasetManifest,
    k: usize,
    config: &TrainConfig,
) -> Result<(EncoderModel, TrainingLog)> {
    train_pretext(manifest, PretextTask::Classify { k }, config)
}

pub fn train_regressor_axis_angle(
    manifest: &DatasetManifest,
    config: &TrainConfig,
) -> Result<(EncoderModel, TrainingLog)> {
    train_pretext(manifest, PretextTask::AxisAngle, config)
}

pub fn train_regressor_sixd(
    manifest: &DatasetManifest,
    config: &TrainConfig,
) -> Result<(EncoderModel, TrainingLog)> {
    train_pretext(manifest, PretextTask::SixD, config)
}

/// Rotation-prediction accuracy of a classification model over a manifest,
/// with `repeats` seeded rotation draws per entry.
pub fn eval_rotation_accuracy(
    model: &EncoderModel,
    manifest: &DatasetManifest,
    up: Vec3,
    seed: u64,
    points_per_cloud: Option<usize>,
    repeats: usize,
    threads: usize,
) -> Result<f64> {
    let k = match model.head {
        Head::Classify(k) => k,
        _ => {
            return Err(Error::InvalidInput(
                "eval-rotation needs a classification model".into(),
            ))
        }
    };
    let ds = DirectionSet::build(k)?;
    let repeats = repeats.max(1);
    let jobs: Vec<usize> = (0..manifest.entries.len()).collect();
    let hits = parallel_map(&jobs, threads, |&i| -> Result<f64> {
        let mut cloud = manifest.load_entry(i)?;
        cloud.keypoints = None;
        let mut rng = rng_from(seed, &[TAG_EVAL, i as u64]);
        let mut correct = 0usize;
        for _ in 0..repeats {
            let prepared = subsample_points(&cloud, points_per_cloud, &mut rng);
            let (rotated, label) = make_classification_sample(&prepared, &ds, up, &mut rng)?;
            let (_, logits) = model.forward(&rotated)?;
            if argmax(&logits) == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / repeats as f64)
    });
    let hits: Result<Vec<f64>> = hits.into_iter().collect();
    let hits = hits?;
    if hits.is_empty() {
        return Err(Error::InvalidInput("manifest has no entries".into()));
    }
    Ok(hits.iter().sum::<f64>() / hits.len() as f64)
}

use rand_chacha::rand_core::SeedableRng;
