//! Stick-slip rotational dynamics of a box grasped by a jaw gripper, plus
//! synthetic 48-channel tactile shear generation and the control-rate trial
//! loop — the stand-in for the physical rig.
//!
//! The object is modeled as a driven pendulum about the grip axis with a
//! Coulomb torsional friction cap at the contact: small end-effector
//! accelerations keep the grip torque inside the friction cone and the
//! object stays upright; large accelerations break it loose, the object
//! rotates, and the trial fails once the rotation latch fires.

use crate::basis::{reference_at, reference_window_at, ReferenceProfile, VelocityTrajectory};
use crate::consts::{path_dir, G, SLIP_THRESHOLD_DEG};
use crate::error::{Error, Result};
use crate::trial::{TactileFrame, TickRecord, TrialLog, TrialMeta};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Actuator first-order lag time constant, seconds.
pub const TAU_ACT: f64 = 0.04;

/// Angular rates below this (deg/s) count as "not rotating" for the
/// stick/slip switch.
pub const THETA_DOT_EPS: f64 = 1e-3;

/// Physics substeps per control tick.
pub const N_SUB: usize = 10;

/// Ticks of zero commanded speed prepended to every trial so the tactile
/// context window fills before the motion starts.
pub const DEFAULT_WARMUP_TICKS: usize = 10;

/// Physical constants of the grasped object and the grip contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectParams {
    /// kg
    pub mass: f64,
    /// Grip axis to center of mass, m.
    pub com_distance: f64,
    /// About the grip axis, kg·m².
    pub inertia: f64,
    /// Coulomb friction coefficient at the contact.
    pub friction_coeff: f64,
    /// N
    pub grip_normal_force: f64,
    /// Effective torsional-friction lever, m.
    pub contact_radius: f64,
    /// Rotation (degrees) at which the object is considered dropped.
    pub failure_angle: f64,
}

impl ObjectParams {
    /// Inertia of the training box (4x15x25 cm) about the grip axis,
    /// grasped at `com_distance` above the center of mass.
    pub fn box_inertia(mass: f64, com_distance: f64) -> f64 {
        mass * com_distance * com_distance + mass * (0.25f64.powi(2) + 0.15f64.powi(2)) / 12.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("com_distance", self.com_distance),
            ("inertia", self.inertia),
            ("friction_coeff", self.friction_coeff),
            ("grip_normal_force", self.grip_normal_force),
            ("contact_radius", self.contact_radius),
            ("failure_angle", self.failure_angle),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.failure_angle <= SLIP_THRESHOLD_DEG {
            return Err(Error::InvalidArgument(format!(
                "failure_angle must exceed the {SLIP_THRESHOLD_DEG} degree slip threshold"
            )));
        }
        Ok(())
    }

    /// Static friction torque cap about the grip axis, N·m.
    pub fn friction_torque_cap(&self) -> f64 {
        self.friction_coeff * self.grip_normal_force * self.contact_radius
    }

    /// End-effector acceleration at which the object at rest and upright
    /// breaks loose: `τ_max / (m·r)`.
    pub fn stick_accel_threshold(&self) -> f64 {
        self.friction_torque_cap() / (self.mass * self.com_distance)
    }
}

impl Default for ObjectParams {
    fn default() -> Self {
        let mass = 0.4;
        let com_distance = 0.1;
        ObjectParams {
            mass,
            com_distance,
            inertia: Self::box_inertia(mass, com_distance),
            friction_coeff: 0.8,
            grip_normal_force: 20.0,
            contact_radius: 0.002,
            failure_angle: 12.0,
        }
    }
}

/// Gripper-object state advanced once per control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SimState {
    /// Object rotation about the grip axis, degrees.
    pub theta: f64,
    /// deg/s
    pub theta_dot: f64,
    /// Realized end-effector speed along the path, m/s.
    pub ee_speed: f64,
    /// m/s^2
    pub ee_accel: f64,
    /// s
    pub t: f64,
    /// Latched when `|theta|` ever reached the failure angle.
    pub dropped: bool,
}

/// True iff the rotation exceeds the slip threshold.
pub fn slip_label(theta_deg: f64) -> bool {
    theta_deg.abs() > SLIP_THRESHOLD_DEG
}

/// Advance the simulator by one control tick.
///
/// The actuator relaxes toward the commanded speed with a first-order lag;
/// the rotation integrates with semi-implicit Euler over [`N_SUB`]
/// substeps, switching between stick (net grip torque inside the friction
/// cap) and slip (Coulomb friction opposing the rotation rate).
pub fn step(
    state: &SimState,
    params: &ObjectParams,
    commanded_speed: f64,
    dt: f64,
) -> Result<SimState> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let mut s = *state;

    // Actuator lag; acceleration is held constant over the tick.
    let blend = 1.0 - (-dt / TAU_ACT).exp();
    let new_speed = s.ee_speed + (commanded_speed - s.ee_speed) * blend;
    let accel = (new_speed - s.ee_speed) / dt;
    s.ee_accel = accel;
    s.ee_speed = new_speed;
    s.t += dt;

    if s.dropped {
        return Ok(s); // object is gone; rotation state frozen
    }

    let tau_max = params.friction_torque_cap();
    let eps = THETA_DOT_EPS.to_radians();
    let h = dt / N_SUB as f64;
    let mut th = state.theta.to_radians();
    let mut om = state.theta_dot.to_radians();

    for _ in 0..N_SUB {
        let tau_app = -params.mass * G * params.com_distance * th.sin()
            - params.mass * accel * params.com_distance * th.cos();
        if om.abs() < eps && tau_app.abs() <= tau_max {
            om = 0.0; // stuck
            continue;
        }
        let dir = if om.abs() >= eps {
            om.signum()
        } else {
            tau_app.signum()
        };
        let alpha = (tau_app - dir * tau_max) / params.inertia;
        let om_new = om + alpha * h;
        // Re-stick when the rate crosses zero; the cap check happens on
        // the next substep.
        om = if om.abs() >= eps && om_new * om < 0.0 {
            0.0
        } else {
            om_new
        };
        th += om * h;
    }

    s.theta = th.to_degrees();
    s.theta_dot = om.to_degrees();
    if s.theta.abs() >= params.failure_angle {
        s.theta = params.failure_angle * s.theta.signum();
        s.theta_dot = 0.0;
        s.dropped = true;
    }
    if !s.theta.is_finite() || !s.theta_dot.is_finite() {
        return Err(Error::InvalidArgument("non-finite simulator state".into()));
    }
    Ok(s)
}

/// Synthetic tactile generator: fixed per-trial taxel gains plus seeded
/// Gaussian measurement noise.
pub struct TactileSynth {
    gains: [f64; 16],
    pub noise_std: f64,
    pub kappa_rot: f64,
    rng: ChaCha8Rng,
}

/// Taxel pitch of the 4x4 grid, m.
const TAXEL_PITCH: f64 = 0.0047;

impl TactileSynth {
    pub fn new(seed: u64) -> Self {
        Self::with_noise(seed, 0.005)
    }

    pub fn with_noise(seed: u64, noise_std: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gains = [0.0; 16];
        for g in gains.iter_mut() {
            *g = rng.random_range(-0.1..0.1);
        }
        TactileSynth {
            gains,
            noise_std,
            kappa_rot: 1.0,
            rng,
        }
    }

    /// One 48-channel frame for the current state. Channels are grouped
    /// per taxel as (x: path shear, y: lateral shear, z: normal share).
    pub fn frame(&mut self, state: &SimState, params: &ObjectParams) -> TactileFrame {
        let mut shear = [0.0; 48];
        let th = state.theta.to_radians();
        let om = state.theta_dot.to_radians();
        let inertial = params.mass * state.ee_accel.abs() / 16.0;
        let tilt = params.mass * G * th.sin() / 16.0;
        let normal = params.grip_normal_force / 16.0;
        let noise = Normal::new(0.0, self.noise_std.max(f64::MIN_POSITIVE)).unwrap();
        for i in 0..16 {
            let (row, col) = (i / 4, i % 4);
            let px = (col as f64 - 1.5) * TAXEL_PITCH;
            let py = (row as f64 - 1.5) * TAXEL_PITCH;
            let gain = 1.0 + self.gains[i];
            let (nx, ny, nz) = if self.noise_std > 0.0 {
                (
                    noise.sample(&mut self.rng),
                    noise.sample(&mut self.rng),
                    noise.sample(&mut self.rng),
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            shear[3 * i] = inertial * gain - self.kappa_rot * om * py + nx;
            shear[3 * i + 1] = tilt * gain + self.kappa_rot * om * px + ny;
            shear[3 * i + 2] = normal * gain + nz;
        }
        TactileFrame {
            shear,
            timestamp: state.t,
        }
    }
}

/// One-shot deterministic frame for a state; convenience around
/// [`TactileSynth`].
pub fn synth_tactile(state: &SimState, params: &ObjectParams, seed: u64) -> TactileFrame {
    TactileSynth::new(seed).frame(state, params)
}

/// What a command source decided for one tick.
#[derive(Debug, Clone, Default)]
pub struct CommandDecision {
    pub cmd: f64,
    pub p_slip: Option<f64>,
    pub rov: Option<f64>,
    pub status: Option<String>,
    pub et_ms: Option<f64>,
}

/// Everything a command source may observe at a tick. Controllers get the
/// raw tactile frame and proprioception, never the simulator state.
pub struct CommandContext<'a> {
    pub tick: usize,
    pub t: f64,
    pub observed_speed: f64,
    /// Reference sample for this tick.
    pub reference_now: f64,
    /// Reference samples for the next `T` ticks.
    pub reference_window: &'a VelocityTrajectory,
    pub raw_frame: &'a TactileFrame,
}

pub trait CommandSource {
    fn decide(&mut self, cx: &CommandContext) -> CommandDecision;
}

/// Follows the reference exactly: the no-controller baseline.
pub struct PassThrough;

impl CommandSource for PassThrough {
    fn decide(&mut self, cx: &CommandContext) -> CommandDecision {
        CommandDecision {
            cmd: cx.reference_now,
            ..Default::default()
        }
    }
}

/// Options for the trial loop.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub warmup_ticks: usize,
    /// Horizon length of the reference window handed to the source.
    pub horizon: usize,
    pub noise_std: f64,
    /// Gaussian jitter (degrees) added to the rotation before labeling,
    /// mimicking marker noise. Zero disables it.
    pub label_jitter_deg: f64,
    pub controller_name: String,
    pub n_basis: Option<usize>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            warmup_ticks: DEFAULT_WARMUP_TICKS,
            horizon: 10,
            noise_std: 0.005,
            label_jitter_deg: 0.0,
            controller_name: "none".into(),
            n_basis: None,
        }
    }
}

/// Run one full trial at the control rate, querying `source` every tick.
pub fn run_loop(
    profile: &ReferenceProfile,
    params: &ObjectParams,
    source: &mut dyn CommandSource,
    seed: u64,
    cfg: &LoopConfig,
) -> Result<TrialLog> {
    params.validate()?;
    let dt = profile.dt;
    let total_ticks = cfg.warmup_ticks + profile.samples.len();
    let mut synth = TactileSynth::with_noise(seed, cfg.noise_std);
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a69_7474_6572);
    let dir = path_dir();

    let mut state = SimState::default();
    let mut records = Vec::with_capacity(total_ticks);
    for tick in 0..total_ticks {
        let r = tick as isize - cfg.warmup_ticks as isize;
        let reference_now = reference_at(profile, r);
        let window = reference_window_at(profile, r, cfg.horizon);
        let raw = synth.frame(&state, params);
        let decision = source.decide(&CommandContext {
            tick,
            t: state.t,
            observed_speed: state.ee_speed,
            reference_now,
            reference_window: &window,
            raw_frame: &raw,
        });
        state = step(&state, params, decision.cmd, dt)?;
        let theta_obs = if cfg.label_jitter_deg > 0.0 {
            let n = Normal::new(0.0, cfg.label_jitter_deg).unwrap();
            state.theta + n.sample(&mut jitter_rng)
        } else {
            state.theta
        };
        records.push(TickRecord {
            t: state.t,
            cmd: decision.cmd,
            speed: state.ee_speed,
            accel: state.ee_accel,
            tactile: raw.shear,
            theta: state.theta,
            slip: slip_label(theta_obs) as u8,
            action6: [
                dir[0] * decision.cmd,
                dir[1] * decision.cmd,
                0.0,
                0.0,
                0.0,
                0.0,
            ],
            p_slip: decision.p_slip,
            rov: decision.rov,
            status: decision.status,
            et_ms: decision.et_ms,
        });
    }

    Ok(TrialLog {
        meta: TrialMeta {
            seed,
            controller: cfg.controller_name.clone(),
            n_basis: cfg.n_basis,
            v_max: profile.v_max,
            dt,
            warmup_ticks: cfg.warmup_ticks,
            params: params.clone(),
            profile: profile.clone(),
        },
        records,
    })
}

/// Uncontrolled trial: the robot follows the raw reference.
pub fn run_trial(profile: &ReferenceProfile, params: &ObjectParams, seed: u64) -> Result<TrialLog> {
    run_loop(profile, params, &mut PassThrough, seed, &LoopConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::default_profile;
    use crate::consts::CONTROL_DT;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equilibrium_is_fixed_point() {
        let params = ObjectParams::default();
        let s0 = SimState::default();
        let s1 = step(&s0, &params, 0.0, CONTROL_DT).unwrap();
        assert_eq!(s1.theta, 0.0);
        assert_eq!(s1.theta_dot, 0.0);
        assert_eq!(s1.ee_speed, 0.0);
        assert!(!s1.dropped);
    }

    #[test]
    fn nonpositive_dt_rejected() {
        let params = ObjectParams::default();
        assert!(step(&SimState::default(), &params, 0.1, 0.0).is_err());
        assert!(step(&SimState::default(), &params, 0.1, -0.1).is_err());
    }

    #[test]
    fn stick_threshold_closed_form() {
        // m=0.4, r=0.1, mu=0.8, N=20, rc=0.01 -> threshold 4.0 m/s^2.
        let params = ObjectParams {
            mass: 0.4,
            com_distance: 0.1,
            friction_coeff: 0.8,
            grip_normal_force: 20.0,
            contact_radius: 0.01,
            ..ObjectParams::default()
        };
        assert_abs_diff_eq!(params.stick_accel_threshold(), 4.0, epsilon = 1e-12);

        // Below threshold at rest: no rotation regardless of acceleration.
        let sticks = |accel: f64| -> bool {
            let mut s = SimState {
                ee_accel: accel,
                ..Default::default()
            };
            // Hold a constant acceleration by advancing the command.
            let blend = 1.0 - (-CONTROL_DT / TAU_ACT).exp();
            for _ in 0..30 {
                let cmd = s.ee_speed + accel * CONTROL_DT / blend;
                s = step(&s, &params, cmd, CONTROL_DT).unwrap();
            }
            s.theta.abs() < 1e-9
        };
        assert!(sticks(3.9));
        assert!(!sticks(4.5));

        // Bisect the empirical threshold and compare with the closed form.
        let (mut lo, mut hi) = (1.0, 8.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if sticks(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let empirical = 0.5 * (lo + hi);
        assert!(
            (empirical - 4.0).abs() / 4.0 < 0.01,
            "empirical threshold {empirical}"
        );
    }

    #[test]
    fn sustained_overload_rotates_to_drop() {
        let params = ObjectParams::default();
        let accel = 8.0;
        let mut s = SimState::default();
        let blend = 1.0 - (-CONTROL_DT / TAU_ACT).exp();
        let mut prev_theta = 0.0;
        let mut monotone = true;
        for _ in 0..200 {
            let cmd = s.ee_speed + accel * CONTROL_DT / blend;
            s = step(&s, &params, cmd, CONTROL_DT).unwrap();
            if s.dropped {
                break;
            }
            if s.theta.abs() + 1e-12 < prev_theta {
                monotone = false;
            }
            prev_theta = s.theta.abs();
        }
        assert!(s.dropped, "expected drop latch, theta={}", s.theta);
        assert!(monotone, "rotation was not monotone before the drop");
    }

    #[test]
    fn drop_latch_is_monotone() {
        let params = ObjectParams::default();
        let mut s = SimState {
            theta: params.failure_angle,
            dropped: true,
            ..Default::default()
        };
        for _ in 0..50 {
            s = step(&s, &params, 0.0, CONTROL_DT).unwrap();
            assert!(s.dropped);
        }
    }

    #[test]
    fn substep_refinement_converges() {
        // Halving the substep changes the outcome of a standard trial by
        // < 1%: the stick/slip transitions are discontinuous, so exact
        // agreement is not expected, only convergence under refinement.
        let params = ObjectParams::default();
        let profile = default_profile(0.4).unwrap();
        let run = |dt: f64| -> f64 {
            let mut s = SimState::default();
            let mut theta_max: f64 = 0.0;
            for (i, &cmd) in profile.samples.iter().enumerate() {
                let _ = i;
                let n = (CONTROL_DT / dt).round() as usize;
                for _ in 0..n {
                    s = step(&s, &params, cmd, dt).unwrap();
                }
                theta_max = theta_max.max(s.theta.abs());
            }
            theta_max
        };
        let coarse = run(CONTROL_DT);
        let fine = run(CONTROL_DT / 2.0);
        assert!(coarse > SLIP_THRESHOLD_DEG, "trial should slip: {coarse}");
        assert!(
            (coarse - fine).abs() / fine.max(1e-9) < 0.01,
            "coarse {coarse} vs fine {fine}"
        );
    }

    #[test]
    fn slip_label_threshold() {
        assert!(slip_label(6.1));
        assert!(slip_label(-6.1));
        assert!(!slip_label(5.9));
        assert!(!slip_label(0.0));
        assert!(!slip_label(6.0)); // strictly greater
    }

    #[test]
    fn tactile_static_pattern_noise_free() {
        let params = ObjectParams::default();
        let state = SimState::default();
        let mut synth = TactileSynth::with_noise(1, 0.0);
        let a = synth.frame(&state, &params);
        let b = synth.frame(&state, &params);
        assert_eq!(a.shear, b.shear);
        // Upright and static: x and y channels are zero, z carries the
        // grip share.
        for i in 0..16 {
            assert_eq!(a.shear[3 * i], 0.0);
            assert_eq!(a.shear[3 * i + 1], 0.0);
            assert!(a.shear[3 * i + 2] > 0.0);
        }
    }

    #[test]
    fn tactile_accel_components_linear() {
        let params = ObjectParams::default();
        let s1 = SimState {
            ee_accel: 1.0,
            ..Default::default()
        };
        let s2 = SimState {
            ee_accel: 2.0,
            ..Default::default()
        };
        let f1 = TactileSynth::with_noise(3, 0.0).frame(&s1, &params);
        let f2 = TactileSynth::with_noise(3, 0.0).frame(&s2, &params);
        for i in 0..16 {
            assert_abs_diff_eq!(f2.shear[3 * i], 2.0 * f1.shear[3 * i], epsilon = 1e-12);
        }
    }

    #[test]
    fn tactile_deterministic_given_seed() {
        let params = ObjectParams::default();
        let state = SimState {
            ee_accel: 1.3,
            theta: 4.0,
            theta_dot: 12.0,
            ..Default::default()
        };
        let a = synth_tactile(&state, &params, 42);
        let b = synth_tactile(&state, &params, 42);
        assert_eq!(a, b);
        let c = synth_tactile(&state, &params, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn trial_determinism() {
        let params = ObjectParams::default();
        let profile = default_profile(0.5).unwrap();
        let a = run_trial(&profile, &params, 7).unwrap();
        let b = run_trial(&profile, &params, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slow_trial_never_slips() {
        let params = ObjectParams::default();
        let profile = default_profile(0.2).unwrap();
        let log = run_trial(&profile, &params, 3).unwrap();
        assert!(log.records.iter().all(|r| r.slip == 0), "slow trial slipped");
        assert!(!log.dropped());
    }

    #[test]
    fn fast_uncontrolled_trial_drops() {
        let params = ObjectParams::default();
        let profile = default_profile(0.5).unwrap();
        let mut drops = 0;
        for seed in 0..10 {
            if run_trial(&profile, &params, seed).unwrap().dropped() {
                drops += 1;
            }
        }
        assert!(drops >= 9, "only {drops}/10 fast trials dropped");
    }

    #[test]
    fn log_round_trip_bit_exact() {
        let params = ObjectParams::default();
        let profile = default_profile(0.35).unwrap();
        let log = run_trial(&profile, &params, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        log.write(dir.path(), "trial_00000").unwrap();
        let back = TrialLog::read(dir.path(), "trial_00000").unwrap();
        assert_eq!(log, back);
    }
}
