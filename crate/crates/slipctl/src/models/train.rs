//! Mini-batch Adam training, evaluation, and gradient checking for the
//! slip classifiers.

use super::BinaryClassifier;
use crate::error::{Error, Result};
use crate::filter::WindowSample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiplier on positive-sample losses; `None` balances the classes
    /// as `n_neg / n_pos`, clamped to `[1, 20]`.
    pub pos_weight: Option<f64>,
    /// Shuffling seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 6,
            pos_weight: None,
            seed: 0,
        }
    }
}

/// Per-epoch training statistics (on the training split).
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Confusion-matrix evaluation at threshold 0.5.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl EvalMetrics {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            return 0.0;
        }
        self.tp as f64 / (self.tp + self.fp) as f64
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            return 0.0;
        }
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            return 0.0;
        }
        2.0 * p * r / (p + r)
    }

    fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

/// Deterministic shuffled split into `(train, holdout)` with `frac` of the
/// samples in the training part.
pub fn split_windows(
    mut samples: Vec<WindowSample>,
    frac: f64,
    seed: u64,
) -> (Vec<WindowSample>, Vec<WindowSample>) {
    assert!((0.0..=1.0).contains(&frac), "frac must be in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples.shuffle(&mut rng);
    let cut = (samples.len() as f64 * frac).round() as usize;
    let holdout = samples.split_off(cut.min(samples.len()));
    (samples, holdout)
}

fn effective_pos_weight<M: BinaryClassifier>(
    model: &M,
    samples: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<f64> {
    let n_pos = samples.iter().filter(|s| model.label(s)).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        let class = if n_pos == 0 { "all negative" } else { "all positive" };
        return Err(Error::SingleClass(class.into()));
    }
    Ok(match cfg.pos_weight {
        Some(w) => w,
        None => (n_neg as f64 / n_pos as f64).clamp(1.0, 20.0),
    })
}

/// Train in place with mini-batch Adam on weighted BCE. Returns per-epoch
/// statistics on the training split.
pub fn train<M: BinaryClassifier>(
    model: &mut M,
    samples: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArgument(
            "batch_size and epochs must be > 0".into(),
        ));
    }
    let pos_weight = effective_pos_weight(model, samples, cfg)?;

    let n_params = model.params().len();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut conf = EvalMetrics::default();

        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &idx in batch {
                let s = &samples[idx];
                let y = model.label(s);
                let w = if y { pos_weight } else { 1.0 };
                let (loss, p) = model.loss_grad(s, w, &mut grad);
                loss_sum += loss;
                conf.record(p > 0.5, y);
            }
            let scale = 1.0 / batch.len() as f64;
            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step as i32);
            let bc2 = 1.0 - cfg.beta2.powi(step as i32);
            let params = model.params_mut();
            for i in 0..n_params {
                let g = grad[i] * scale;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }

        stats.push(EpochStats {
            epoch,
            mean_loss: loss_sum / samples.len() as f64,
            accuracy: conf.accuracy(),
            f1: conf.f1(),
        });
    }
    Ok(stats)
}

/// Confusion matrix of `model` on `samples` at threshold 0.5.
pub fn evaluate<M: BinaryClassifier>(model: &M, samples: &[WindowSample]) -> EvalMetrics {
    let mut conf = EvalMetrics::default();
    for s in samples {
        conf.record(model.predict(s) > 0.5, model.label(s));
    }
    conf
}

/// Maximum relative error between the analytic gradient and central
/// finite differences over every parameter, on one sample.
pub fn grad_check<M: BinaryClassifier>(model: &mut M, sample: &WindowSample, weight: f64) -> f64 {
    let n = model.params().len();
    let mut analytic = vec![0.0; n];
    let (_, _) = model.loss_grad(sample, weight, &mut analytic);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut scratch = vec![0.0; n];
    // Indexing is the point here: each coordinate is perturbed in place.
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        scratch.fill(0.0);
        let (lp, _) = model.loss_grad(sample, weight, &mut scratch);
        model.params_mut()[i] = orig - h;
        scratch.fill(0.0);
        let (lm, _) = model.loss_grad(sample, weight, &mut scratch);
        model.params_mut()[i] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
