//! The two receding-horizon slip controllers.
//!
//! Every control tick both controllers re-optimize the weights `w` of the
//! Gaussian-basis velocity trajectory `Φᵀw` over the next `T` steps and
//! execute only the first step.
//!
//! **RSC** (reactive): the tracking objective gains a velocity-shrinking
//! term gated by the detector output `S`:
//!
//! ```text
//! min_w ‖Φᵀw − ref‖² + a^(1/(S+ε)) ‖Φᵀw‖²
//! ```
//!
//! With no slip (`S → 0`) the shrink coefficient vanishes and the solution
//! tracks the reference; with confident slip (`S → 1`) the coefficient is
//! `a^(1/(1+ε)) ≈ a` and the commanded trajectory contracts toward zero.
//!
//! **PSC** (proactive): the action-conditioned predictor becomes a hard
//! constraint on the same tracking objective:
//!
//! ```text
//! min_w ‖Φᵀw − ref‖²   s.t.   P(slip | window, embed(Φᵀw)) ≤ δ_slip
//! ```
//!
//! Both problems carry a linear slab limiting how far the first commanded
//! speed may move from the currently observed speed in one tick, which caps
//! the commanded acceleration.

use crate::basis::{basis_matrix, fit_weights, BasisSpec, VelocityTrajectory};
use crate::consts::path_dir;
use crate::error::{Error, Result};
use crate::filter::{ActionWindow, KalmanBank, TactileWindow};
use crate::models::{DetectorModel, PredictorModel};
use crate::opt::{solve, LinearSlab, OptProblem, SolveSettings, SolveStatus};
use crate::sim::{run_loop, CommandContext, CommandDecision, CommandSource, LoopConfig, ObjectParams};
use crate::trial::TrialLog;
use nalgebra::DMatrix;
use std::collections::VecDeque;
use std::time::Instant;

/// Which controller to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Rsc,
    Psc,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControllerKind::Rsc => write!(f, "rsc"),
            ControllerKind::Psc => write!(f, "psc"),
        }
    }
}

/// Current slip probability from a tactile window.
pub trait SlipDetector {
    fn p_slip(&self, window: &TactileWindow) -> f64;
}

impl SlipDetector for DetectorModel {
    fn p_slip(&self, window: &TactileWindow) -> f64 {
        self.prob(window)
    }
}

/// Slip probability `T` ticks ahead under a candidate action sequence.
pub trait SlipPredictor {
    fn p_slip(&self, window: &TactileWindow, actions: &ActionWindow) -> f64;
}

impl SlipPredictor for PredictorModel {
    fn p_slip(&self, window: &TactileWindow, actions: &ActionWindow) -> f64 {
        self.prob(window, actions)
    }
}

/// Embed a speed trajectory as 6-D task-space velocity commands along the
/// fixed path, the input format of the slip predictor.
pub fn embed_actions(traj: &VelocityTrajectory) -> ActionWindow {
    let dir = path_dir();
    ActionWindow {
        actions: traj
            .0
            .iter()
            .map(|&v| [dir[0] * v, dir[1] * v, 0.0, 0.0, 0.0, 0.0])
            .collect(),
    }
}

/// Shrink coefficient `a^(1/(S+ε))` of the RSC objective.
pub fn shrink_coefficient(a: f64, eps: f64, s: f64) -> f64 {
    a.powf(1.0 / (s + eps))
}

/// The RSC objective as a closure over the trajectory space.
pub fn rsc_objective<'a>(
    phi: &'a DMatrix<f64>,
    reference: &'a VelocityTrajectory,
    coeff: f64,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |w: &[f64]| {
        let mut track = 0.0;
        let mut mag = 0.0;
        for t in 0..phi.ncols() {
            let mut v = 0.0;
            for j in 0..phi.nrows() {
                v += phi[(j, t)] * w[j];
            }
            let d = v - reference.0[t];
            track += d * d;
            mag += v * v;
        }
        track + coeff * mag
    }
}

/// Squared tracking error `‖Φᵀw − ref‖²`, the PSC objective.
pub fn tracking_objective<'a>(
    phi: &'a DMatrix<f64>,
    reference: &'a VelocityTrajectory,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |w: &[f64]| {
        let mut track = 0.0;
        for t in 0..phi.ncols() {
            let mut v = 0.0;
            for j in 0..phi.nrows() {
                v += phi[(j, t)] * w[j];
            }
            let d = v - reference.0[t];
            track += d * d;
        }
        track
    }
}

fn trajectory_of(phi: &DMatrix<f64>, w: &[f64]) -> VelocityTrajectory {
    VelocityTrajectory(
        (0..phi.ncols())
            .map(|t| (0..phi.nrows()).map(|j| phi[(j, t)] * w[j]).sum())
            .collect(),
    )
}

/// Shared controller settings.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub n_basis: usize,
    /// Optimization horizon `T` (must match the predictor's action steps).
    pub horizon: usize,
    /// Tactile context length `C` fed to the classifiers.
    pub context: usize,
    /// RSC shrink base `a`.
    pub shrink_base: f64,
    /// RSC shrink regularizer `ε`.
    pub shrink_eps: f64,
    /// PSC slip-probability bound `δ_slip`.
    pub delta_slip: f64,
    /// Half-width of the per-tick command-change slab, m/s.
    pub cmd_delta: f64,
    pub kalman_q: f64,
    pub kalman_r: f64,
    /// Reuse the previous solution as the next initial iterate.
    pub warm_start: bool,
    pub solver: SolveSettings,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            n_basis: 5,
            horizon: 10,
            context: 10,
            shrink_base: 0.5,
            shrink_eps: 0.01,
            delta_slip: 0.05,
            cmd_delta: 0.05,
            kalman_q: 1e-5,
            kalman_r: 1e-2,
            warm_start: true,
            solver: SolveSettings {
                max_inner: 15,
                max_outer: 4,
                ..SolveSettings::default()
            },
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=8).contains(&self.n_basis) {
            return Err(Error::InvalidArgument(format!(
                "n_basis must be in 2..=8, got {}",
                self.n_basis
            )));
        }
        if self.horizon < 2 || self.context == 0 {
            return Err(Error::InvalidArgument(
                "horizon must be >= 2 and context >= 1".into(),
            ));
        }
        for (name, v) in [
            ("shrink_base", self.shrink_base),
            ("shrink_eps", self.shrink_eps),
            ("delta_slip", self.delta_slip),
            ("cmd_delta", self.cmd_delta),
            ("kalman_q", self.kalman_q),
            ("kalman_r", self.kalman_r),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.shrink_base >= 1.0 {
            return Err(Error::InvalidArgument(
                "shrink_base must be < 1 so the shrink term weakens as slip vanishes".into(),
            ));
        }
        Ok(())
    }
}

/// State shared by both controllers: tactile filtering, the rolling
/// context window, the basis, and the warm-start iterate.
struct ControllerCore {
    cfg: ControllerConfig,
    phi: DMatrix<f64>,
    /// First column of `Φ`: maps weights to the executed command.
    phi_first: Vec<f64>,
    bank: KalmanBank,
    history: VecDeque<[f64; 48]>,
    prev_w: Option<Vec<f64>>,
}

impl ControllerCore {
    fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = BasisSpec::equally_spaced(cfg.n_basis, cfg.horizon)?;
        let phi = basis_matrix(&spec);
        let phi_first = (0..cfg.n_basis).map(|j| phi[(j, 0)]).collect();
        Ok(ControllerCore {
            bank: KalmanBank::new(cfg.kalman_q, cfg.kalman_r),
            history: VecDeque::with_capacity(cfg.context),
            prev_w: None,
            cfg,
            phi,
            phi_first,
        })
    }

    /// Filter the frame, update the rolling window, and return it once
    /// `C` frames have been seen.
    fn observe(&mut self, cx: &CommandContext) -> Option<TactileWindow> {
        let filtered = self.bank.filter(cx.raw_frame);
        if self.history.len() == self.cfg.context {
            self.history.pop_front();
        }
        self.history.push_back(filtered);
        if self.history.len() < self.cfg.context {
            return None;
        }
        Some(TactileWindow {
            frames: self.history.iter().copied().collect(),
            t_end: cx.t,
        })
    }

    fn slab(&self, observed_speed: f64) -> LinearSlab {
        LinearSlab {
            coeffs: self.phi_first.clone(),
            offset: observed_speed,
            lb: -self.cfg.cmd_delta,
            ub: self.cfg.cmd_delta,
        }
    }

    fn initial_iterate(&self, reference: &VelocityTrajectory) -> Vec<f64> {
        if self.cfg.warm_start {
            if let Some(w) = &self.prev_w {
                return w.clone();
            }
        }
        fit_weights(reference, &self.phi)
            .map(|fit| fit.weights.0)
            .unwrap_or_else(|_| vec![0.0; self.cfg.n_basis])
    }

    fn command_from(&self, w: &[f64]) -> f64 {
        self.phi_first
            .iter()
            .zip(w)
            .map(|(a, x)| a * x)
            .sum::<f64>()
            .max(0.0)
    }
}

/// Reactive slip controller.
pub struct RscController<D: SlipDetector> {
    core: ControllerCore,
    detector: D,
}

impl<D: SlipDetector> RscController<D> {
    pub fn new(detector: D, cfg: ControllerConfig) -> Result<Self> {
        Ok(RscController {
            core: ControllerCore::new(cfg)?,
            detector,
        })
    }
}

impl<D: SlipDetector> CommandSource for RscController<D> {
    fn decide(&mut self, cx: &CommandContext) -> CommandDecision {
        let start = Instant::now();
        let window = match self.core.observe(cx) {
            Some(w) => w,
            None => {
                return CommandDecision {
                    cmd: cx.reference_now,
                    ..Default::default()
                }
            }
        };
        let s = self.detector.p_slip(&window);
        let coeff = shrink_coefficient(self.core.cfg.shrink_base, self.core.cfg.shrink_eps, s);
        let objective = rsc_objective(&self.core.phi, cx.reference_window, coeff);
        let problem = OptProblem {
            objective: &objective,
            constraints: vec![],
            slab: Some(self.core.slab(cx.observed_speed)),
            x0: self.core.initial_iterate(cx.reference_window),
            settings: self.core.cfg.solver.clone(),
        };
        match solve(&problem) {
            Ok(r) => {
                let cmd = self.core.command_from(&r.w_star);
                self.core.prev_w = Some(r.w_star);
                CommandDecision {
                    cmd,
                    p_slip: Some(s),
                    rov: Some(r.rov),
                    status: Some(r.status.to_string()),
                    et_ms: Some(start.elapsed().as_secs_f64() * 1e3),
                }
            }
            Err(e) => CommandDecision {
                cmd: cx.observed_speed, // hold speed on solver failure
                p_slip: Some(s),
                status: Some(format!("error: {e}")),
                et_ms: Some(start.elapsed().as_secs_f64() * 1e3),
                ..Default::default()
            },
        }
    }
}

/// Proactive slip controller.
pub struct PscController<P: SlipPredictor> {
    core: ControllerCore,
    predictor: P,
}

impl<P: SlipPredictor> PscController<P> {
    pub fn new(predictor: P, cfg: ControllerConfig) -> Result<Self> {
        Ok(PscController {
            core: ControllerCore::new(cfg)?,
            predictor,
        })
    }
}

impl<P: SlipPredictor> CommandSource for PscController<P> {
    fn decide(&mut self, cx: &CommandContext) -> CommandDecision {
        let start = Instant::now();
        let window = match self.core.observe(cx) {
            Some(w) => w,
            None => {
                return CommandDecision {
                    cmd: cx.reference_now,
                    ..Default::default()
                }
            }
        };
        let phi = &self.core.phi;
        let delta = self.core.cfg.delta_slip;
        let predictor = &self.predictor;
        let p_of = |w: &[f64]| predictor.p_slip(&window, &embed_actions(&trajectory_of(phi, w)));
        let constraint = |w: &[f64]| p_of(w) - delta;
        let objective = tracking_objective(phi, cx.reference_window);

        // The warm start must be feasible or the inner loop starts in a
        // saturated region of the predictor; fall back to the all-stop
        // trajectory, which is feasible whenever anything is.
        let mut x0 = self.core.initial_iterate(cx.reference_window);
        if constraint(&x0) > 0.0 {
            let zeros = vec![0.0; self.core.cfg.n_basis];
            if constraint(&zeros) <= 0.0 {
                x0 = zeros;
            }
        }

        let problem = OptProblem {
            objective: &objective,
            constraints: vec![&constraint],
            slab: Some(self.core.slab(cx.observed_speed)),
            x0,
            settings: self.core.cfg.solver.clone(),
        };
        let result = match solve(&problem) {
            Ok(r) => r,
            Err(e) => {
                return CommandDecision {
                    cmd: cx.observed_speed,
                    status: Some(format!("error: {e}")),
                    et_ms: Some(start.elapsed().as_secs_f64() * 1e3),
                    ..Default::default()
                }
            }
        };

        // Infeasible tick: no trajectory satisfies the bound, so minimize
        // the predicted slip probability itself.
        let (w_star, rov, status) = if result.max_violation > self.core.cfg.solver.ctol
            || result.status == SolveStatus::Infeasible
        {
            let fallback = OptProblem {
                objective: &p_of,
                constraints: vec![],
                slab: Some(self.core.slab(cx.observed_speed)),
                x0: vec![0.0; self.core.cfg.n_basis],
                settings: self.core.cfg.solver.clone(),
            };
            match solve(&fallback) {
                Ok(f) => (f.w_star, f.rov, "fallback".to_string()),
                Err(_) => (vec![0.0; self.core.cfg.n_basis], f64::INFINITY, "fallback_error".into()),
            }
        } else {
            (result.w_star, result.rov, result.status.to_string())
        };

        let cmd = self.core.command_from(&w_star);
        let p = p_of(&w_star);
        self.core.prev_w = Some(w_star);
        CommandDecision {
            cmd,
            p_slip: Some(p),
            rov: Some(rov),
            status: Some(status),
            et_ms: Some(start.elapsed().as_secs_f64() * 1e3),
        }
    }
}

/// Run a controller through a full trial against the simulator.
pub fn run_closed_loop(
    profile: &crate::basis::ReferenceProfile,
    params: &ObjectParams,
    source: &mut dyn CommandSource,
    seed: u64,
    name: &str,
    n_basis: Option<usize>,
) -> Result<TrialLog> {
    let cfg = LoopConfig {
        controller_name: name.to_string(),
        n_basis,
        ..LoopConfig::default()
    };
    run_loop(profile, params, source, seed, &cfg)
}
