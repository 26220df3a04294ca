//! PointNet-style backbone with interchangeable task heads.
//!
//! Per-point shared MLP (linear, per-channel affine, relu), global max-pool,
//! then a two-layer head. The per-point weights are shared across points by
//! construction, so the pooled global feature is permutation-invariant.

use rand::Rng;

use crate::autodiff::{read_weights, write_weights, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::pcdata::PointCloud;
use crate::rng::{rng_from, standard_normal};

pub const DEFAULT_WIDTHS: [usize; 3] = [64, 128, 256];
pub const DEFAULT_HEAD_HIDDEN: usize = 128;
const WEIGHTS_FORMAT: &str = "rotcloud-weights-v1";

/// Task head attached after the global feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Classify(usize),
    AxisAngleReg,
    SixDReg,
    Keypoints(usize),
}

impl Head {
    pub fn output_dim(&self) -> usize {
        match self {
            Head::Classify(k) => *k,
            Head::AxisAngleReg => 4,
            Head::SixDReg => 6,
            Head::Keypoints(m) => 3 * m,
        }
    }

    fn to_meta(self) -> serde_json::Value {
        match self {
            Head::Classify(k) => serde_json::json!({"kind": "classify", "k": k}),
            Head::AxisAngleReg => serde_json::json!({"kind": "axisangle"}),
            Head::SixDReg => serde_json::json!({"kind": "sixd"}),
            Head::Keypoints(m) => serde_json::json!({"kind": "keypoints", "m": m}),
        }
    }

    fn from_meta(v: &serde_json::Value) -> Result<Head> {
        let kind = v
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| Error::InvalidInput("weights header missing head kind".into()))?;
        match kind {
            "classify" => {
                let k = v.get("k").and_then(|k| k.as_u64()).ok_or_else(|| {
                    Error::InvalidInput("classify head missing k".into())
                })?;
                Ok(Head::Classify(k as usize))
            }
            "axisangle" => Ok(Head::AxisAngleReg),
            "sixd" => Ok(Head::SixDReg),
            "keypoints" => {
                let m = v.get("m").and_then(|m| m.as_u64()).ok_or_else(|| {
                    Error::InvalidInput("keypoints head missing m".into())
                })?;
                Ok(Head::Keypoints(m as usize))
            }
            other => Err(Error::InvalidInput(format!("unknown head kind {other:?}"))),
        }
    }
}

/// One shared per-point layer: linear (no bias), per-channel affine, relu.
#[derive(Clone, Debug, PartialEq)]
pub struct PointLayer {
    pub weight: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    pub widths: Vec<usize>,
    pub head_hidden_width: usize,
    pub head: Head,
    /// Point count the model was trained at; feature extraction subsamples
    /// clouds to this size so inference matches the training distribution.
    pub feature_points: Option<usize>,
    pub point_layers: Vec<PointLayer>,
    pub head_hidden: LinearLayer,
    pub head_out: LinearLayer,
}

fn gaussian_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| standard_normal(rng) * std)
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized data")
}

/// Head output bias at init. Keypoint heads start from a spread template
/// (golden-spiral directions at 0.8 radius) instead of the origin, so the
/// chamfer assignments cover all targets from the first step.
fn head_bias(head: Head) -> Tensor {
    match head {
        Head::Keypoints(m) if m >= 2 => {
            let template = crate::dirset::DirectionSet::build(m).expect("m >= 2");
            let data = template
                .dirs
                .iter()
                .flat_map(|d| d.iter().map(|v| 0.8 * v))
                .collect();
            Tensor::from_vec(1, 3 * m, data).expect("sized data")
        }
        _ => Tensor::zeros(1, head.output_dim()),
    }
}

impl EncoderModel {
    /// Fresh model. He-style init for hidden layers; the final head layer is
    /// scaled down so initial logits sit near zero.
    pub fn new(widths: &[usize], head_hidden: usize, head: Head, seed: u64) -> Result<EncoderModel> {
        if widths.is_empty() {
            return Err(Error::InvalidInput("encoder needs at least one width".into()));
        }
        let mut rng = rng_from(seed, &[0x70]);
        let mut point_layers = Vec::with_capacity(widths.len());
        let mut in_dim = 3;
        for &out_dim in widths {
            let std = (2.0 / in_dim as f64).sqrt();
            point_layers.push(PointLayer {
                weight: gaussian_tensor(&mut rng, in_dim, out_dim, std),
                gamma: Tensor::from_vec(1, out_dim, vec![1.0; out_dim])?,
                beta: Tensor::zeros(1, out_dim),
            });
            in_dim = out_dim;
        }
        let global_dim = *widths.last().expect("non-empty");
        let head_hidden_layer = LinearLayer {
            weight: gaussian_tensor(
                &mut rng,
                global_dim,
                head_hidden,
                (2.0 / global_dim as f64).sqrt(),
            ),
            bias: Tensor::zeros(1, head_hidden),
        };
        let head_out = LinearLayer {
            weight: gaussian_tensor(
                &mut rng,
                head_hidden,
                head.output_dim(),
                0.01 * (1.0 / head_hidden as f64).sqrt(),
            ),
            bias: head_bias(head),
        };
        Ok(EncoderModel {
            widths: widths.to_vec(),
            head_hidden_width: head_hidden,
            head,
            feature_points: None,
            point_layers,
            head_hidden: head_hidden_layer,
            head_out,
        })
    }

    pub fn with_defaults(head: Head, seed: u64) -> Result<EncoderModel> {
        EncoderModel::new(&DEFAULT_WIDTHS, DEFAULT_HEAD_HIDDEN, head, seed)
    }

    pub fn global_dim(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    /// Swap in a freshly initialized head, keeping the backbone bit-for-bit.
    pub fn replace_head(&mut self, head: Head, seed: u64) {
        let mut rng = rng_from(seed, &[0x71]);
        let global_dim = self.global_dim();
        self.head = head;
        self.head_hidden = LinearLayer {
            weight: gaussian_tensor(
                &mut rng,
                global_dim,
                self.head_hidden_width,
                (2.0 / global_dim as f64).sqrt(),
            ),
            bias: Tensor::zeros(1, self.head_hidden_width),
        };
        self.head_out = LinearLayer {
            weight: gaussian_tensor(
                &mut rng,
                self.head_hidden_width,
                head.output_dim(),
                0.01 * (1.0 / self.head_hidden_width as f64).sqrt(),
            ),
            bias: head_bias(head),
        };
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.point_layers.len() {
            names.push(format!("point{i}.weight"));
            names.push(format!("point{i}.gamma"));
            names.push(format!("point{i}.beta"));
        }
        names.push("head.hidden.weight".into());
        names.push("head.hidden.bias".into());
        names.push("head.out.weight".into());
        names.push("head.out.bias".into());
        names
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.point_layers {
            out.push(&layer.weight);
            out.push(&layer.gamma);
            out.push(&layer.beta);
        }
        out.push(&self.head_hidden.weight);
        out.push(&self.head_hidden.bias);
        out.push(&self.head_out.weight);
        out.push(&self.head_out.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for layer in &mut self.point_layers {
            out.push(&mut layer.weight);
            out.push(&mut layer.gamma);
            out.push(&mut layer.beta);
        }
        out.push(&mut self.head_hidden.weight);
        out.push(&mut self.head_hidden.bias);
        out.push(&mut self.head_out.weight);
        out.push(&mut self.head_out.bias);
        out
    }

    /// Names of the backbone (per-point) parameters, for init checks.
    pub fn backbone_param_names(&self) -> Vec<String> {
        self.param_names()
            .into_iter()
            .filter(|n| n.starts_with("point"))
            .collect()
    }

    fn points_tensor(pc: &PointCloud) -> Result<Tensor> {
        if pc.is_empty() {
            return Err(Error::InvalidInput("forward on empty point cloud".into()));
        }
        if pc.max_norm() > 1.0 + 1e-6 {
            return Err(Error::InvalidInput(format!(
                "forward expects a normalized cloud, max norm is {}",
                pc.max_norm()
            )));
        }
        let mut data = Vec::with_capacity(pc.len() * 3);
        for p in &pc.points {
            data.extend_from_slice(p);
        }
        Tensor::from_vec(pc.len(), 3, data)
    }

    /// Build the forward graph on `tape`. Returns the parameter bindings (in
    /// `params()` order), the pooled global feature and the head output.
    pub fn forward_on(&self, tape: &mut Tape, pc: &PointCloud) -> Result<ForwardPass> {
        let x = tape.leaf(Self::points_tensor(pc)?);
        let param_vars: Vec<Var> = self.params().into_iter().map(|p| tape.leaf(p.clone())).collect();

        let mut idx = 0;
        let mut next = || {
            let v = param_vars[idx];
            idx += 1;
            v
        };
        let mut h = x;
        for _ in 0..self.point_layers.len() {
            let (w, gamma, beta) = (next(), next(), next());
            h = tape.matmul(h, w)?;
            h = tape.affine(h, gamma, beta)?;
            h = tape.relu(h);
        }
        let global = tape.max_over_points(h)?;

        let (w1, b1) = (next(), next());
        let mut y = tape.matmul(global, w1)?;
        y = tape.add_row(y, b1)?;
        y = tape.relu(y);
        let (w2, b2) = (next(), next());
        let mut out = tape.matmul(y, w2)?;
        out = tape.add_row(out, b2)?;

        Ok(ForwardPass {
            param_vars,
            global,
            head_output: out,
        })
    }

    /// Value-level forward: (global feature, head output).
    pub fn forward(&self, pc: &PointCloud) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let pass = self.forward_on(&mut tape, pc)?;
        Ok((
            tape.value(pass.global).data().to_vec(),
            tape.value(pass.head_output).data().to_vec(),
        ))
    }

    /// The frozen global feature; the head is ignored.
    pub fn extract_feature(&self, pc: &PointCloud) -> Result<Vec<f64>> {
        Ok(self.forward(pc)?.0)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let meta = serde_json::json!({
            "format": WEIGHTS_FORMAT,
            "widths": self.widths,
            "head_hidden": self.head_hidden_width,
            "head": self.head.to_meta(),
            "feature_points": self.feature_points,
        });
        let names = self.param_names();
        let tensors: Vec<(String, &Tensor)> = names
            .into_iter()
            .zip(self.params())
            .collect();
        write_weights(path, &meta, &tensors)
    }

    pub fn load(path: &std::path::Path) -> Result<EncoderModel> {
        let (meta, tensors) = read_weights(path)?;
        if meta.get("format").and_then(|f| f.as_str()) != Some(WEIGHTS_FORMAT) {
            return Err(Error::InvalidInput(format!(
                "{} is not a {WEIGHTS_FORMAT} file",
                path.display()
            )));
        }
        let widths: Vec<usize> = meta
            .get("widths")
            .and_then(|w| w.as_array())
            .ok_or_else(|| Error::InvalidInput("weights header missing widths".into()))?
            .iter()
            .map(|v| v.as_u64().unwrap_or(0) as usize)
            .collect();
        let head_hidden = meta
            .get("head_hidden")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::InvalidInput("weights header missing head_hidden".into()))?
            as usize;
        let head = Head::from_meta(
            meta.get("head")
                .ok_or_else(|| Error::InvalidInput("weights header missing head".into()))?,
        )?;

        let mut model = EncoderModel::new(&widths, head_hidden, head, 0)?;
        model.feature_points = meta
            .get("feature_points")
            .and_then(|v| v.as_u64())
            .map(|v| v as usize);
        let expected = model.param_names();
        if tensors.len() != expected.len() {
            return Err(Error::ShapeMismatch(format!(
                "weights file has {} tensors, model needs {}",
                tensors.len(),
                expected.len()
            )));
        }
        for ((name, tensor), (slot_name, slot)) in tensors
            .into_iter()
            .zip(expected.iter().zip(model.params_mut()))
        {
            if &name != slot_name {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {name} where {slot_name} was expected"
                )));
            }
            if tensor.shape() != slot.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {name}: file has {:?}, model needs {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        Ok(model)
    }
}

pub struct ForwardPass {
    pub param_vars: Vec<Var>,
    pub global: Var,
    pub head_output: Var,
}

impl ForwardPass {
    /// Gradients of all parameters in `params()` order; call after backward.
    pub fn param_grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.param_vars.iter().map(|v| tape.grad(*v).clone()).collect()
    }
}

/// Training hyper-parameters shared by the pretext and fine-tuning loops.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Subsample each cloud to this many points per step (None = all points).
    pub points_per_cloud: Option<usize>,
    pub augment: bool,
    /// Cosine-decay the learning rate to 10% of its initial value.
    pub lr_decay: bool,
    pub threads: usize,
    pub widths: Vec<usize>,
    pub head_hidden: usize,
    pub holdout_fraction: f64,
    pub up: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 42,
            points_per_cloud: Some(128),
            augment: false,
            lr_decay: true,
            threads: 1,
            widths: DEFAULT_WIDTHS.to_vec(),
            head_hidden: DEFAULT_HEAD_HIDDEN,
            holdout_fraction: 0.1,
            up: [0.0, 1.0, 0.0],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidInput(
                "holdout fraction must lie in [0, 1)".into(),
            ));
        }
        if self.widths.is_empty() {
            return Err(Error::InvalidInput("widths must be non-empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcdata::{generate_shape, ShapeCategory};
    use crate::rng::rng_from;
    use crate::so3::{apply_rotation, axis_angle_to_rotation, AxisAngle};

    fn small_model(head: Head) -> EncoderModel {
        EncoderModel::new(&[8, 16], 8, head, 7).unwrap()
    }

    fn test_cloud(seed: u64) -> PointCloud {
        let mut rng = rng_from(seed, &[0x7e]);
        generate_shape(ShapeCategory::Cone, 96, &mut rng).unwrap()
    }

    #[test]
    fn head_output_dims_match_contract() {
        let pc = test_cloud(1);
        for (head, dim) in [
            (Head::Classify(6), 6),
            (Head::AxisAngleReg, 4),
            (Head::SixDReg, 6),
            (Head::Keypoints(10), 30),
        ] {
            let model = small_model(head);
            let (global, out) = model.forward(&pc).unwrap();
            assert_eq!(global.len(), 16);
            assert_eq!(out.len(), dim);
            assert!(out.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn global_feature_is_permutation_invariant_bitwise() {
        let model = small_model(Head::Classify(6));
        let pc = test_cloud(2);
        let mut permuted = pc.clone();
        permuted.points.reverse();
        permuted.points.swap(3, 40);
        let f1 = model.extract_feature(&pc).unwrap();
        let f2 = model.extract_feature(&permuted).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn duplicated_points_leave_global_feature_unchanged() {
        let model = small_model(Head::Classify(6));
        let pc = test_cloud(3);
        let mut doubled = pc.clone();
        doubled.points.extend(pc.points.iter().cloned());
        assert_eq!(
            model.extract_feature(&pc).unwrap(),
            model.extract_feature(&doubled).unwrap()
        );
    }

    #[test]
    fn same_cloud_twice_gives_identical_feature() {
        let model = small_model(Head::SixDReg);
        let pc = test_cloud(4);
        assert_eq!(
            model.extract_feature(&pc).unwrap(),
            model.extract_feature(&pc).unwrap()
        );
    }

    #[test]
    fn logits_react_to_rotation() {
        let model = small_model(Head::Classify(6));
        let pc = test_cloud(5);
        let r = axis_angle_to_rotation(&AxisAngle::new([0.0, 0.0, 1.0], 1.3).unwrap()).unwrap();
        let rotated = apply_rotation(&r, &pc);
        let (_, a) = model.forward(&pc).unwrap();
        let (_, b) = model.forward(&rotated).unwrap();
        let delta: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!(delta > 1e-9, "logits did not move: {delta}");
    }

    #[test]
    fn unnormalized_cloud_is_rejected() {
        let model = small_model(Head::Classify(6));
        let pc = PointCloud::new(vec![[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(model.forward(&pc).is_err());
    }

    #[test]
    fn every_layer_moves_after_one_training_step() {
        use crate::autodiff::{sgd_step, Tape};
        let mut model = small_model(Head::Classify(6));
        let pc = test_cloud(6);
        let before: Vec<Tensor> = model.params().into_iter().cloned().collect();

        let mut tape = Tape::new();
        let pass = model.forward_on(&mut tape, &pc).unwrap();
        let loss = tape.softmax_cross_entropy(pass.head_output, 2).unwrap();
        tape.backward(loss).unwrap();
        let grads = pass.param_grads(&tape);
        let names = model.param_names();
        let mut params = model.params_mut();
        sgd_step(&mut params, &grads, &names, 0.5).unwrap();

        // Every layer must own at least one changed parameter.
        let after = model.params();
        let layer_of = |name: &str| name.split('.').next().unwrap().to_string();
        let mut layers_changed: std::collections::HashSet<String> = Default::default();
        let mut layers_seen: std::collections::HashSet<String> = Default::default();
        for ((name, b), a) in names.iter().zip(&before).zip(after) {
            layers_seen.insert(layer_of(name));
            if b.data() != a.data() {
                layers_changed.insert(layer_of(name));
            }
        }
        assert_eq!(layers_changed, layers_seen);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = std::env::temp_dir().join("rotcloud-encoder-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.bin");
        let model = small_model(Head::AxisAngleReg);
        model.save(&path).unwrap();
        let loaded = EncoderModel::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn load_rejects_mismatched_format() {
        let dir = std::env::temp_dir().join("rotcloud-encoder-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bogus.bin");
        crate::autodiff::write_weights(
            &path,
            &serde_json::json!({"format": "other"}),
            &[],
        )
        .unwrap();
        assert!(EncoderModel::load(&path).is_err());
    }

    #[test]
    fn replace_head_keeps_backbone_bits() {
        let mut model = small_model(Head::Classify(18));
        let backbone_before: Vec<Tensor> = model.point_layers.iter().map(|l| l.weight.clone()).collect();
        model.replace_head(Head::Keypoints(10), 99);
        assert_eq!(model.head, Head::Keypoints(10));
        for (b, l) in backbone_before.iter().zip(&model.point_layers) {
            assert_eq!(b.data(), l.weight.data());
        }
        assert_eq!(model.head_out.weight.cols(), 30);
    }
}
