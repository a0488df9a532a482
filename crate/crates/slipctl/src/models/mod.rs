//! Slip classifiers trained from scratch: an LSTM slip *detector* (does
//! the current tactile window show slip?) and an action-conditioned slip
//! *predictor* (will slip occur `T` ticks ahead under a candidate action
//! sequence?).
//!
//! Both models store every parameter in one flat `Vec<f64>` with a named
//! tensor layout on top, so gradient checking, Adam, and serialization are
//! generic over the whole parameter vector.

pub mod lstm;
mod train;

pub use train::{evaluate, grad_check, split_windows, train, EpochStats, EvalMetrics, TrainConfig};

use crate::error::{Error, Result};
use crate::filter::{ActionWindow, TactileWindow, WindowSample};
use lstm::{lstm_backward, lstm_forward, sigmoid};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Tactile channels per frame (4x4 taxels x 3 axes).
pub const TACTILE_DIM: usize = 48;
/// Components of one task-space velocity command.
pub const ACTION_DIM: usize = 6;
/// Logits are clamped to this magnitude before the sigmoid so reported
/// probabilities stay strictly inside (0, 1).
pub const LOGIT_CLAMP: f64 = 30.0;

/// Model file schema version.
pub const FORMAT_VERSION: u64 = 1;

/// One named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDef {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorDef {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn build_layout(specs: &[(&'static str, Vec<usize>)]) -> (Vec<TensorDef>, usize) {
    let mut defs = Vec::with_capacity(specs.len());
    let mut offset = 0;
    for (name, shape) in specs {
        let len: usize = shape.iter().product();
        defs.push(TensorDef {
            name,
            shape: shape.clone(),
            offset,
        });
        offset += len;
    }
    (defs, offset)
}

fn clamp_logit(z: f64) -> f64 {
    z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// Which classifier a parameter file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Detect,
    Predict,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Detect => write!(f, "detect"),
            ModelKind::Predict => write!(f, "predict"),
        }
    }
}

/// Interface shared by the two classifiers; everything the trainer and the
/// gradient checker need.
pub trait BinaryClassifier {
    fn kind(&self) -> ModelKind;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn layout(&self) -> Vec<TensorDef>;

    /// Slip probability for one sample, strictly inside (0, 1).
    fn predict(&self, sample: &WindowSample) -> f64;

    /// The label this model is trained against.
    fn label(&self, sample: &WindowSample) -> bool;

    /// Weighted binary cross-entropy loss for one sample; accumulates the
    /// parameter gradient into `grad` (same length as `params`). Returns
    /// `(loss, probability)`.
    fn loss_grad(&self, sample: &WindowSample, weight: f64, grad: &mut [f64]) -> (f64, f64);
}

/// Numerically stable weighted BCE on the (unclamped) logit:
/// `-w·[y·log p + (1-y)·log(1-p)]` with `p = σ(z)`.
fn bce_loss(z: f64, y: bool, weight: f64) -> f64 {
    // log(1 + e^-|z|) + max(z, 0) - y*z, scaled by the class weight.
    let loss = (-z.abs()).exp().ln_1p() + z.max(0.0) - if y { z } else { 0.0 };
    weight * loss
}

/// d(loss)/dz for the stable BCE above: `w·(σ(z) − y)`.
fn bce_dz(z: f64, y: bool, weight: f64) -> f64 {
    weight * (sigmoid(z) - if y { 1.0 } else { 0.0 })
}

fn xavier_fill(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

// ---------------------------------------------------------------------------
// Detector
// ---------------------------------------------------------------------------

/// LSTM slip detector: tactile window -> P(slip now).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl DetectorModel {
    pub const DEFAULT_HIDDEN: usize = 64;

    fn layout_for(hidden: usize) -> (Vec<TensorDef>, usize) {
        build_layout(&[
            ("lstm.w_x", vec![4 * hidden, TACTILE_DIM]),
            ("lstm.w_h", vec![4 * hidden, hidden]),
            ("lstm.b", vec![4 * hidden]),
            ("head.w", vec![hidden]),
            ("head.b", vec![1]),
        ])
    }

    /// Xavier-uniform recurrent weights, forget-gate bias 1, zero head
    /// (so an untrained model outputs exactly 0.5).
    pub fn new(hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidArgument("hidden size must be > 0".into()));
        }
        let (_, total) = Self::layout_for(hidden);
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = DetectorModel { hidden, params: Vec::new() };
        let defs = model.layout();
        xavier_fill(&mut rng, &mut params[defs[0].offset..defs[0].offset + defs[0].len()], TACTILE_DIM, hidden);
        xavier_fill(&mut rng, &mut params[defs[1].offset..defs[1].offset + defs[1].len()], hidden, hidden);
        // Forget-gate bias of 1 eases gradient flow through time.
        let b0 = defs[2].offset;
        for j in 0..hidden {
            params[b0 + hidden + j] = 1.0;
        }
        model.params = params;
        Ok(model)
    }

    fn slices(&self) -> (&[f64], &[f64], &[f64], &[f64], f64) {
        let h = self.hidden;
        let p = &self.params;
        let (mut o, mut next) = (0, 4 * h * TACTILE_DIM);
        let wx = &p[o..next];
        o = next;
        next += 4 * h * h;
        let wh = &p[o..next];
        o = next;
        next += 4 * h;
        let b = &p[o..next];
        o = next;
        next += h;
        let hw = &p[o..next];
        let hb = p[next];
        (wx, wh, b, hw, hb)
    }

    fn logit(&self, window: &TactileWindow) -> (f64, lstm::LstmCache, Vec<f64>) {
        let (wx, wh, b, hw, hb) = self.slices();
        let xs: Vec<&[f64]> = window.frames.iter().map(|f| f.as_slice()).collect();
        let (h, cache) = lstm_forward(TACTILE_DIM, self.hidden, wx, wh, b, &xs);
        let z = hb + hw.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
        (z, cache, h)
    }

    /// P(slip now | tactile window), strictly inside (0, 1).
    pub fn prob(&self, window: &TactileWindow) -> f64 {
        sigmoid(clamp_logit(self.logit(window).0))
    }
}

impl BinaryClassifier for DetectorModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Detect
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Vec<TensorDef> {
        Self::layout_for(self.hidden).0
    }

    fn predict(&self, sample: &WindowSample) -> f64 {
        self.prob(&sample.tactile)
    }

    fn label(&self, sample: &WindowSample) -> bool {
        sample.label_now
    }

    fn loss_grad(&self, sample: &WindowSample, weight: f64, grad: &mut [f64]) -> (f64, f64) {
        assert_eq!(grad.len(), self.params.len());
        let y = sample.label_now;
        let hidden = self.hidden;
        let (_, wh, _, hw, _) = self.slices();
        let (z, cache, h) = self.logit(&sample.tactile);
        let loss = bce_loss(z, y, weight);
        let dz = bce_dz(z, y, weight);

        let n_wx = 4 * hidden * TACTILE_DIM;
        let n_wh = 4 * hidden * hidden;
        let n_b = 4 * hidden;
        let (g_lstm, g_head) = grad.split_at_mut(n_wx + n_wh + n_b);
        let (g_wx, rest) = g_lstm.split_at_mut(n_wx);
        let (g_wh, g_b) = rest.split_at_mut(n_wh);
        let (g_hw, g_hb) = g_head.split_at_mut(hidden);

        for (g, v) in g_hw.iter_mut().zip(&h) {
            *g += dz * v;
        }
        g_hb[0] += dz;

        let dh: Vec<f64> = hw.iter().map(|w| dz * w).collect();
        let xs: Vec<&[f64]> = sample.tactile.frames.iter().map(|f| f.as_slice()).collect();
        lstm_backward(TACTILE_DIM, hidden, wh, &xs, &cache, &dh, g_wx, g_wh, g_b);
        (loss, sigmoid(clamp_logit(z)))
    }
}

// ---------------------------------------------------------------------------
// Predictor
// ---------------------------------------------------------------------------

/// Action-conditioned slip predictor: tactile window + `T` future actions
/// -> P(slip in `T` ticks).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub hidden: usize,
    pub action_hidden: usize,
    pub fusion: usize,
    /// Number of future action steps `T` the action encoder expects.
    pub action_steps: usize,
    pub params: Vec<f64>,
}

impl PredictorModel {
    pub const DEFAULT_HIDDEN: usize = 64;
    pub const DEFAULT_ACTION_HIDDEN: usize = 32;
    pub const DEFAULT_FUSION: usize = 64;

    fn layout_for(h: usize, ha: usize, hf: usize, steps: usize) -> (Vec<TensorDef>, usize) {
        build_layout(&[
            ("lstm.w_x", vec![4 * h, TACTILE_DIM]),
            ("lstm.w_h", vec![4 * h, h]),
            ("lstm.b", vec![4 * h]),
            ("action.w", vec![ha, steps * ACTION_DIM]),
            ("action.b", vec![ha]),
            ("fusion.w", vec![hf, h + ha]),
            ("fusion.b", vec![hf]),
            ("head.w", vec![hf]),
            ("head.b", vec![1]),
        ])
    }

    pub fn new(
        hidden: usize,
        action_hidden: usize,
        fusion: usize,
        action_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        if hidden == 0 || action_hidden == 0 || fusion == 0 || action_steps == 0 {
            return Err(Error::InvalidArgument(
                "predictor sizes must all be > 0".into(),
            ));
        }
        let (_, total) = Self::layout_for(hidden, action_hidden, fusion, action_steps);
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = PredictorModel {
            hidden,
            action_hidden,
            fusion,
            action_steps,
            params: Vec::new(),
        };
        let defs = model.layout();
        let fill = |rng: &mut ChaCha8Rng, params: &mut Vec<f64>, d: &TensorDef, fi: usize, fo: usize| {
            let s = d.offset;
            let e = s + d.len();
            xavier_fill(rng, &mut params[s..e], fi, fo);
        };
        fill(&mut rng, &mut params, &defs[0], TACTILE_DIM, hidden);
        fill(&mut rng, &mut params, &defs[1], hidden, hidden);
        fill(&mut rng, &mut params, &defs[3], action_steps * ACTION_DIM, action_hidden);
        fill(&mut rng, &mut params, &defs[5], hidden + action_hidden, fusion);
        let b0 = defs[2].offset;
        for j in 0..hidden {
            params[b0 + hidden + j] = 1.0;
        }
        model.params = params;
        Ok(model)
    }

    #[allow(clippy::type_complexity)]
    fn slices(&self) -> (&[f64], &[f64], &[f64], &[f64], &[f64], &[f64], &[f64], &[f64], f64) {
        let defs = self.layout();
        let get = |i: usize| &self.params[defs[i].offset..defs[i].offset + defs[i].len()];
        (
            get(0),
            get(1),
            get(2),
            get(3),
            get(4),
            get(5),
            get(6),
            get(7),
            self.params[defs[8].offset],
        )
    }

    fn flat_actions(&self, actions: &ActionWindow) -> Vec<f64> {
        assert_eq!(
            actions.actions.len(),
            self.action_steps,
            "action window length mismatch"
        );
        actions.actions.iter().flatten().copied().collect()
    }

    fn forward(&self, window: &TactileWindow, actions: &ActionWindow) -> PredictorPass {
        let (wx, wh, b, aw, ab, fw, fb, hw, hb) = self.slices();
        let xs: Vec<&[f64]> = window.frames.iter().map(|f| f.as_slice()).collect();
        let (h, cache) = lstm_forward(TACTILE_DIM, self.hidden, wx, wh, b, &xs);
        let a_in = self.flat_actions(actions);
        let ha: Vec<f64> = (0..self.action_hidden)
            .map(|j| {
                let row = &aw[j * a_in.len()..(j + 1) * a_in.len()];
                (ab[j] + row.iter().zip(&a_in).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect();
        let fused: Vec<f64> = h.iter().chain(&ha).copied().collect();
        let hf: Vec<f64> = (0..self.fusion)
            .map(|j| {
                let row = &fw[j * fused.len()..(j + 1) * fused.len()];
                (fb[j] + row.iter().zip(&fused).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect();
        let z = hb + hw.iter().zip(&hf).map(|(w, v)| w * v).sum::<f64>();
        PredictorPass { z, cache, h, a_in, ha, hf }
    }

    /// P(slip in `T` ticks | tactile window, future actions).
    pub fn prob(&self, window: &TactileWindow, actions: &ActionWindow) -> f64 {
        sigmoid(clamp_logit(self.forward(window, actions).z))
    }
}

/// Intermediate activations of the predictor forward pass.
struct PredictorPass {
    z: f64,
    cache: lstm::LstmCache,
    h: Vec<f64>,
    a_in: Vec<f64>,
    ha: Vec<f64>,
    hf: Vec<f64>,
}

impl BinaryClassifier for PredictorModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Predict
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Vec<TensorDef> {
        Self::layout_for(self.hidden, self.action_hidden, self.fusion, self.action_steps).0
    }

    fn predict(&self, sample: &WindowSample) -> f64 {
        self.prob(&sample.tactile, &sample.actions)
    }

    fn label(&self, sample: &WindowSample) -> bool {
        sample.label_future
    }

    fn loss_grad(&self, sample: &WindowSample, weight: f64, grad: &mut [f64]) -> (f64, f64) {
        assert_eq!(grad.len(), self.params.len());
        let y = sample.label_future;
        let pass = self.forward(&sample.tactile, &sample.actions);
        let loss = bce_loss(pass.z, y, weight);
        let dz = bce_dz(pass.z, y, weight);

        let defs = self.layout();
        let (h, ha, hf) = (self.hidden, self.action_hidden, self.fusion);
        let (_wx, wh, _b, _aw, _ab, fw, _fb, hw, _hb) = self.slices();
        let a_len = pass.a_in.len();
        let fused_len = h + ha;

        // Head.
        let dhf_pre: Vec<f64> = (0..hf)
            .map(|j| dz * hw[j] * (1.0 - pass.hf[j] * pass.hf[j]))
            .collect();
        {
            let o = defs[7].offset;
            for j in 0..hf {
                grad[o + j] += dz * pass.hf[j];
            }
            grad[defs[8].offset] += dz;
        }
        // Fusion layer.
        let fused: Vec<f64> = pass.h.iter().chain(&pass.ha).copied().collect();
        {
            let o = defs[5].offset;
            let ob = defs[6].offset;
            for j in 0..hf {
                let d = dhf_pre[j];
                if d == 0.0 {
                    continue;
                }
                for (k, v) in fused.iter().enumerate() {
                    grad[o + j * fused_len + k] += d * v;
                }
                grad[ob + j] += d;
            }
        }
        let dfused: Vec<f64> = (0..fused_len)
            .map(|k| (0..hf).map(|j| dhf_pre[j] * fw[j * fused_len + k]).sum())
            .collect();
        // Action encoder.
        {
            let o = defs[3].offset;
            let ob = defs[4].offset;
            for j in 0..ha {
                let d = dfused[h + j] * (1.0 - pass.ha[j] * pass.ha[j]);
                if d == 0.0 {
                    continue;
                }
                for (k, v) in pass.a_in.iter().enumerate() {
                    grad[o + j * a_len + k] += d * v;
                }
                grad[ob + j] += d;
            }
        }
        // Tactile LSTM.
        let dh_final = &dfused[..h];
        let xs: Vec<&[f64]> = sample.tactile.frames.iter().map(|f| f.as_slice()).collect();
        let n_wx = 4 * h * TACTILE_DIM;
        let n_wh = 4 * h * h;
        let n_b = 4 * h;
        let (g_lstm, _) = grad.split_at_mut(n_wx + n_wh + n_b);
        let (g_wx, rest) = g_lstm.split_at_mut(n_wx);
        let (g_wh, g_b) = rest.split_at_mut(n_wh);
        lstm_backward(TACTILE_DIM, h, wh, &xs, &pass.cache, dh_final, g_wx, g_wh, g_b);

        (loss, sigmoid(clamp_logit(pass.z)))
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    kind: ModelKind,
    tensors: BTreeMap<String, TensorFile>,
}

/// Write a model as versioned JSON: named tensors over the flat params.
pub fn save_model<M: BinaryClassifier>(model: &M, path: &Path) -> Result<()> {
    let mut tensors = BTreeMap::new();
    for def in model.layout() {
        tensors.insert(
            def.name.to_string(),
            TensorFile {
                shape: def.shape.clone(),
                data: model.params()[def.offset..def.offset + def.len()].to_vec(),
            },
        );
    }
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        kind: model.kind(),
        tensors,
    };
    let json = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn read_model_file(path: &Path, want: ModelKind) -> Result<ModelFile> {
    let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&json).map_err(|e| Error::json(path, e))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if file.kind != want {
        return Err(Error::KindMismatch {
            found: file.kind.to_string(),
            expected: want.to_string(),
        });
    }
    Ok(file)
}

fn fill_params<M: BinaryClassifier>(model: &mut M, file: &ModelFile, path: &Path) -> Result<()> {
    for def in model.layout() {
        let tensor = file
            .tensors
            .get(def.name)
            .ok_or_else(|| Error::MissingTensor(format!("{}: {}", path.display(), def.name)))?;
        if tensor.shape != def.shape || tensor.data.len() != def.len() {
            return Err(Error::TensorShape {
                name: def.name.to_string(),
                found: tensor.shape.clone(),
                expected: def.shape.clone(),
            });
        }
        model.params_mut()[def.offset..def.offset + def.len()].copy_from_slice(&tensor.data);
    }
    Ok(())
}

pub fn load_detector(path: &Path) -> Result<DetectorModel> {
    let file = read_model_file(path, ModelKind::Detect)?;
    let wx = file
        .tensors
        .get("lstm.w_x")
        .ok_or_else(|| Error::MissingTensor(format!("{}: lstm.w_x", path.display())))?;
    if wx.shape.len() != 2 || wx.shape[0] % 4 != 0 || wx.shape[1] != TACTILE_DIM {
        return Err(Error::TensorShape {
            name: "lstm.w_x".into(),
            found: wx.shape.clone(),
            expected: vec![0, TACTILE_DIM],
        });
    }
    let hidden = wx.shape[0] / 4;
    let mut model = DetectorModel::new(hidden, 0)?;
    fill_params(&mut model, &file, path)?;
    Ok(model)
}

pub fn load_predictor(path: &Path) -> Result<PredictorModel> {
    let file = read_model_file(path, ModelKind::Predict)?;
    let get = |name: &str| {
        file.tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(format!("{}: {name}", path.display())))
    };
    let wx = get("lstm.w_x")?;
    let aw = get("action.w")?;
    let fw = get("fusion.w")?;
    if wx.shape.len() != 2
        || wx.shape[0] % 4 != 0
        || wx.shape[1] != TACTILE_DIM
        || aw.shape.len() != 2
        || aw.shape[1] % ACTION_DIM != 0
        || fw.shape.len() != 2
    {
        return Err(Error::TensorShape {
            name: "lstm.w_x/action.w/fusion.w".into(),
            found: wx.shape.clone(),
            expected: vec![0, TACTILE_DIM],
        });
    }
    let hidden = wx.shape[0] / 4;
    let action_hidden = aw.shape[0];
    let fusion = fw.shape[0];
    let action_steps = aw.shape[1] / ACTION_DIM;
    let mut model = PredictorModel::new(hidden, action_hidden, fusion, action_steps, 0)?;
    fill_params(&mut model, &file, path)?;
    Ok(model)
}
