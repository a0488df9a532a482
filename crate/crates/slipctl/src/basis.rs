//! Gaussian radial-basis parameterization of velocity trajectories and
//! trapezoidal reference profiles.
//!
//! A horizon of `T` future speed samples is represented as `Φᵀ W` where
//! `Φ` is an `N×T` matrix of Gaussian bumps `φ_j(t) = exp(-(t-μ_j)²/(2σ))`
//! evaluated at time steps `t = 1..T`, and `W` is the `N`-vector of weights
//! the controllers optimize. Note the exponent denominator is `2σ`, with
//! `σ` carrying squared time-step units.

use crate::consts::{CONTROL_DT, PATH_DISPLACEMENT};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Fraction of the profile duration spent in each of the acceleration and
/// deceleration ramps of a default reference profile.
pub const DEFAULT_ACCEL_FRACTION: f64 = 0.12;

/// Layout of the Gaussian basis over a fixed horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub n_basis: usize,
    pub horizon: usize,
    /// Centers in time-step units, strictly increasing.
    pub mu: Vec<f64>,
    /// Width parameter in squared time-step units (exponent denominator 2σ).
    pub sigma: f64,
}

impl BasisSpec {
    /// Centers spread with equal distance over `[1, T]` (endpoints
    /// inclusive) and `σ = spacing²`.
    pub fn equally_spaced(n_basis: usize, horizon: usize) -> Result<Self> {
        if !(2..=8).contains(&n_basis) {
            return Err(Error::InvalidArgument(format!(
                "n_basis must be in 2..=8, got {n_basis}"
            )));
        }
        if horizon < 2 {
            return Err(Error::InvalidArgument(format!(
                "horizon must be >= 2, got {horizon}"
            )));
        }
        let spacing = (horizon as f64 - 1.0) / (n_basis as f64 - 1.0);
        let mu = (0..n_basis).map(|j| 1.0 + j as f64 * spacing).collect();
        Ok(Self {
            n_basis,
            horizon,
            mu,
            sigma: spacing * spacing,
        })
    }

    /// Build a spec from explicit centers and width. Unlike
    /// [`equally_spaced`](Self::equally_spaced) this allows any `N >= 1`.
    pub fn from_parts(mu: Vec<f64>, horizon: usize, sigma: f64) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidArgument("at least one center required".into()));
        }
        if !mu.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidArgument(
                "centers must be strictly increasing".into(),
            ));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
        }
        if horizon < 1 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        Ok(Self {
            n_basis: mu.len(),
            horizon,
            mu,
            sigma,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }
}

/// Decision variables of the trajectory optimization, in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(n: usize) -> Self {
        WeightVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A horizon-length sequence of speeds along the fixed task-space path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityTrajectory(pub Vec<f64>);

impl VelocityTrajectory {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Evaluate all basis functions at time step `t` (time-step units).
///
/// Every value lies in `(0, 1]`, with `φ_j(μ_j) = 1`.
pub fn eval_basis(spec: &BasisSpec, t: f64) -> Vec<f64> {
    spec.mu
        .iter()
        .map(|&mu| (-(t - mu) * (t - mu) / (2.0 * spec.sigma)).exp())
        .collect()
}

/// The `N×T` matrix `Φ` with `Φ[j][t-1] = φ_j(t)` for `t ∈ 1..=T`.
pub fn basis_matrix(spec: &BasisSpec) -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(spec.n_basis, spec.horizon);
    for t in 0..spec.horizon {
        let col = eval_basis(spec, (t + 1) as f64);
        for j in 0..spec.n_basis {
            phi[(j, t)] = col[j];
        }
    }
    phi
}

/// `Φᵀ W`: the speed trajectory generated by a weight vector.
pub fn trajectory_from_weights(phi: &DMatrix<f64>, w: &WeightVector) -> Result<VelocityTrajectory> {
    if w.len() != phi.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "weights have {} entries but basis matrix has {} rows",
            w.len(),
            phi.nrows()
        )));
    }
    let mut values = vec![0.0; phi.ncols()];
    for (t, v) in values.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..phi.nrows() {
            acc += w.0[j] * phi[(j, t)];
        }
        *v = acc;
    }
    Ok(VelocityTrajectory(values))
}

/// Result of a least-squares weight fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub weights: WeightVector,
    /// `‖Φᵀw − reference‖₂` at the solution.
    pub residual: f64,
    /// True when `Φ` was numerically rank deficient and the minimum-norm
    /// solution was returned.
    pub rank_deficient: bool,
}

/// Least-squares fit of weights to a reference trajectory: the warm-start
/// path for the optimizers.
pub fn fit_weights(reference: &VelocityTrajectory, phi: &DMatrix<f64>) -> Result<FitResult> {
    let (n, t) = (phi.nrows(), phi.ncols());
    if reference.len() != t {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} samples but basis matrix has {} columns",
            reference.len(),
            t
        )));
    }
    if t < n {
        return Err(Error::InvalidArgument(format!(
            "underdetermined fit: horizon {t} < n_basis {n}"
        )));
    }
    let a = phi.transpose(); // T x N
    let b = DVector::from_column_slice(&reference.0);
    let svd = a.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let w = svd
        .solve(&b, tol)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let w = WeightVector(w.iter().copied().collect());
    let fitted = trajectory_from_weights(phi, &w)?;
    let residual = fitted
        .0
        .iter()
        .zip(&reference.0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(FitResult {
        weights: w,
        residual,
        rank_deficient: rank < n,
    })
}

/// A trapezoidal task-space speed reference.
///
/// `samples` holds the profile at the control rate with the peak adjusted
/// so the discrete trapezoid quadrature of the samples equals
/// `displacement` exactly; the stored `v_max`, `t_*` fields are the nominal
/// continuous-time parameters. Samples start and end at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProfile {
    pub v_max: f64,
    pub t_accel: f64,
    pub t_cruise: f64,
    pub t_decel: f64,
    pub dt: f64,
    pub displacement: f64,
    pub samples: Vec<f64>,
}

/// Serialized form: the six nominal parameters; samples are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileHeader {
    v_max: f64,
    t_accel: f64,
    t_cruise: f64,
    t_decel: f64,
    dt: f64,
    displacement: f64,
}

impl Serialize for ReferenceProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileHeader {
            v_max: self.v_max,
            t_accel: self.t_accel,
            t_cruise: self.t_cruise,
            t_decel: self.t_decel,
            dt: self.dt,
            displacement: self.displacement,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReferenceProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let h = ProfileHeader::deserialize(d)?;
        trapezoid_profile(h.v_max, h.displacement, h.t_accel, h.t_decel, h.dt)
            .map_err(serde::de::Error::custom)
    }
}

/// Build a trapezoidal speed profile covering `displacement` meters.
///
/// The cruise time follows from the area constraint
/// `displacement = v_max·(t_cruise + (t_accel + t_decel)/2)`; an infeasible
/// displacement (negative cruise time) is rejected. The sampled profile is
/// a piecewise-linear trapezoid on the `dt` grid whose discrete trapezoid
/// quadrature equals `displacement` exactly, which pins the sampled peak
/// within a few percent of the nominal `v_max`.
pub fn trapezoid_profile(
    v_max: f64,
    displacement: f64,
    t_accel: f64,
    t_decel: f64,
    dt: f64,
) -> Result<ReferenceProfile> {
    for (name, v) in [
        ("v_max", v_max),
        ("displacement", displacement),
        ("t_accel", t_accel),
        ("t_decel", t_decel),
        ("dt", dt),
    ] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
        }
    }
    let ramp_area = v_max * (t_accel + t_decel) / 2.0;
    if ramp_area > displacement * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "displacement {displacement} m is infeasible for v_max {v_max}: \
             the ramps alone cover {ramp_area} m (minimum displacement {ramp_area})"
        )));
    }
    let t_cruise = ((displacement - ramp_area) / v_max).max(0.0);

    let n_a = (t_accel / dt).round().max(1.0) as usize;
    let n_d = (t_decel / dt).round().max(1.0) as usize;
    let n_c = (t_cruise / dt).round() as usize;
    // Discrete trapezoid quadrature of the unit-peak shape.
    let unit_area = dt * (0.5 * n_a as f64 + n_c as f64 + 0.5 * n_d as f64);
    let peak = displacement / unit_area;

    let len = n_a + n_c + n_d + 1;
    let mut samples = Vec::with_capacity(len);
    for i in 0..=n_a {
        samples.push(peak * i as f64 / n_a as f64);
    }
    for _ in 0..n_c {
        samples.push(peak);
    }
    for i in 1..=n_d {
        samples.push(peak * (n_d - i) as f64 / n_d as f64);
    }
    debug_assert_eq!(samples.len(), len);

    Ok(ReferenceProfile {
        v_max,
        t_accel,
        t_cruise,
        t_decel,
        dt,
        displacement,
        samples,
    })
}

/// Default reference profile for a given `v_max` over the task path:
/// ramps take [`DEFAULT_ACCEL_FRACTION`] of the duration each, so peak
/// acceleration grows as `v_max²` while the covered displacement stays
/// constant.
pub fn default_profile(v_max: f64) -> Result<ReferenceProfile> {
    let f = DEFAULT_ACCEL_FRACTION;
    let duration = PATH_DISPLACEMENT / (v_max * (1.0 - f));
    let ramp = f * duration;
    trapezoid_profile(v_max, PATH_DISPLACEMENT, ramp, ramp, CONTROL_DT)
}

/// The next `horizon` reference samples after step `t_now`, zero-padded
/// past the profile end.
pub fn sample_reference_window(
    profile: &ReferenceProfile,
    t_now: usize,
    horizon: usize,
) -> VelocityTrajectory {
    reference_window_at(profile, t_now as isize, horizon)
}

/// Like [`sample_reference_window`] but allowing a negative current index
/// (ticks before the profile has started), zero-padded on both sides.
pub fn reference_window_at(
    profile: &ReferenceProfile,
    t_now: isize,
    horizon: usize,
) -> VelocityTrajectory {
    let values = (1..=horizon as isize)
        .map(|k| {
            let idx = t_now + k;
            if idx >= 0 && (idx as usize) < profile.samples.len() {
                profile.samples[idx as usize]
            } else {
                0.0
            }
        })
        .collect();
    VelocityTrajectory(values)
}

/// Reference sample at a possibly out-of-range signed index.
pub fn reference_at(profile: &ReferenceProfile, idx: isize) -> f64 {
    if idx >= 0 && (idx as usize) < profile.samples.len() {
        profile.samples[idx as usize]
    } else {
        0.0
    }
}
