//! Constrained minimization over weight vectors with numerical
//! derivatives: an augmented-Lagrangian method with a projected-gradient
//! inner loop, plus a brute-force grid oracle for verification.
//!
//! Inequality constraints `g_k(w) <= 0` enter the augmented Lagrangian
//! `L = f + Σ_k [max(0, λ_k + ρ g_k)² − λ_k²] / (2ρ)`; the box constraint
//! on the first-step velocity delta is a linear slab handled by projection
//! inside the inner loop.

use crate::error::{Error, Result};
use std::path::Path;
use std::time::Instant;

/// A scalar function of the decision vector.
pub type ScalarFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + 'a);

/// The linear slab `lb <= coeffs·w − offset <= ub`.
#[derive(Debug, Clone)]
pub struct LinearSlab {
    pub coeffs: Vec<f64>,
    pub offset: f64,
    pub lb: f64,
    pub ub: f64,
}

impl LinearSlab {
    pub fn value(&self, w: &[f64]) -> f64 {
        self.coeffs.iter().zip(w).map(|(a, x)| a * x).sum::<f64>() - self.offset
    }

    /// Euclidean projection of `w` onto the slab.
    pub fn project(&self, w: &mut [f64]) {
        let v = self.value(w);
        let clipped = v.clamp(self.lb, self.ub);
        if v != clipped {
            let norm_sq: f64 = self.coeffs.iter().map(|a| a * a).sum();
            if norm_sq > 0.0 {
                let scale = (v - clipped) / norm_sq;
                for (x, a) in w.iter_mut().zip(&self.coeffs) {
                    *x -= scale * a;
                }
            }
        }
    }

    pub fn violation(&self, w: &[f64]) -> f64 {
        let v = self.value(w);
        (v - self.ub).max(self.lb - v).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct SolveSettings {
    /// Optimality tolerance on the projected Lagrangian gradient norm.
    pub tol: f64,
    /// Feasibility tolerance on constraint violations.
    pub ctol: f64,
    pub rho0: f64,
    pub rho_max: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            ctol: 1e-3,
            rho0: 10.0,
            rho_max: 1e6,
            max_inner: 100,
            max_outer: 20,
        }
    }
}

pub struct OptProblem<'a> {
    pub objective: ScalarFn<'a>,
    /// Inequality constraints, feasible when `g_k(w) <= 0`.
    pub constraints: Vec<ScalarFn<'a>>,
    pub slab: Option<LinearSlab>,
    pub x0: Vec<f64>,
    pub settings: SolveSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveStatus::Converged => write!(f, "converged"),
            SolveStatus::MaxIter => write!(f, "max_iter"),
            SolveStatus::Infeasible => write!(f, "infeasible"),
        }
    }
}

/// One outer-iteration snapshot, for optional CSV traces.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub w_star: Vec<f64>,
    /// Norm of the (projected) Lagrangian gradient at the solution.
    pub rov: f64,
    pub objective: f64,
    /// Per-constraint violations `max(0, g_k)` at the solution.
    pub violations: Vec<f64>,
    pub max_violation: f64,
    pub multipliers: Vec<f64>,
    /// Total inner iterations spent.
    pub iterations: usize,
    pub status: SolveStatus,
    pub wall_ms: f64,
    pub trace: Vec<TraceRow>,
}

/// Central-difference gradient with per-coordinate step
/// `h_j = 1e-4·max(1, |w_j|)`. Costs `2n` function evaluations.
pub fn numerical_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; w.len()];
    let mut probe = w.to_vec();
    for j in 0..w.len() {
        let h = 1e-4 * w[j].abs().max(1.0);
        probe[j] = w[j] + h;
        let fp = f(&probe);
        probe[j] = w[j] - h;
        let fm = f(&probe);
        probe[j] = w[j];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEval { coord: j });
        }
        grad[j] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

fn project(slab: &Option<LinearSlab>, w: &mut [f64]) {
    if let Some(s) = slab {
        s.project(w);
    }
}

/// Solve the constrained problem. Returns `status = max_iter` with the best
/// iterate when the budget runs out and `infeasible` for an empty slab.
pub fn solve(problem: &OptProblem) -> Result<SolveResult> {
    let start = Instant::now();
    let n = problem.x0.len();
    let s = &problem.settings;

    if let Some(slab) = &problem.slab {
        if slab.lb > slab.ub {
            return Ok(SolveResult {
                w_star: problem.x0.clone(),
                rov: f64::INFINITY,
                objective: (problem.objective)(&problem.x0),
                violations: vec![],
                max_violation: f64::INFINITY,
                multipliers: vec![0.0; problem.constraints.len()],
                iterations: 0,
                status: SolveStatus::Infeasible,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                trace: vec![],
            });
        }
    }

    let mut lambda = vec![0.0; problem.constraints.len()];
    let mut rho = s.rho0;
    let mut w = problem.x0.clone();
    project(&problem.slab, &mut w);

    let mut total_inner = 0usize;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut prev_viol = f64::INFINITY;
    let mut rov = f64::INFINITY;

    let n_outer = if problem.constraints.is_empty() {
        1
    } else {
        s.max_outer
    };

    for _outer in 0..n_outer {
        let lam = lambda.clone();
        let lagrangian = |x: &[f64]| -> f64 {
            let mut v = (problem.objective)(x);
            for (g, &l) in problem.constraints.iter().zip(&lam) {
                let t = (l + rho * g(x)).max(0.0);
                v += (t * t - l * l) / (2.0 * rho);
            }
            v
        };

        // Inner loop: projected gradient descent with backtracking.
        let mut lw = lagrangian(&w);
        let mut alpha = 1.0f64;
        let mut pg_norm = f64::INFINITY;
        for _inner in 0..s.max_inner {
            total_inner += 1;
            let grad = numerical_gradient(lagrangian, &w)?;
            let mut stepped = w.clone();
            for (x, g) in stepped.iter_mut().zip(&grad) {
                *x -= g;
            }
            project(&problem.slab, &mut stepped);
            pg_norm = w
                .iter()
                .zip(&stepped)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if pg_norm <= s.tol || n == 0 {
                break;
            }
            // Backtracking line search along the projected step.
            let mut accepted = false;
            let mut a = alpha.min(1.0e2);
            for _ in 0..40 {
                let mut cand = w.clone();
                for (x, g) in cand.iter_mut().zip(&grad) {
                    *x -= a * g;
                }
                project(&problem.slab, &mut cand);
                let lc = lagrangian(&cand);
                let decrease: f64 = w
                    .iter()
                    .zip(&cand)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>();
                if lc <= lw - 1e-4 * decrease / a.max(1e-300) {
                    w = cand;
                    lw = lc;
                    alpha = a * 2.0;
                    accepted = true;
                    break;
                }
                a *= 0.5;
            }
            if !accepted {
                break; // no descent direction at this resolution
            }
        }

        let gvals: Vec<f64> = problem.constraints.iter().map(|g| g(&w)).collect();
        let violations: Vec<f64> = gvals.iter().map(|&g| g.max(0.0)).collect();
        let max_violation = violations.iter().cloned().fold(0.0f64, f64::max);
        rov = pg_norm;
        trace.push(TraceRow {
            iteration: trace.len(),
            objective: (problem.objective)(&w),
            max_violation,
            grad_norm: pg_norm,
        });

        if pg_norm <= s.tol && max_violation <= s.ctol {
            status = SolveStatus::Converged;
            break;
        }

        for (l, &g) in lambda.iter_mut().zip(&gvals) {
            *l = (*l + rho * g).max(0.0);
        }
        if max_violation > 0.5 * prev_viol {
            rho = (rho * 10.0).min(s.rho_max);
        }
        prev_viol = prev_viol.min(max_violation);
    }

    let gvals: Vec<f64> = problem.constraints.iter().map(|g| g(&w)).collect();
    let violations: Vec<f64> = gvals.iter().map(|&g| g.max(0.0)).collect();
    let max_violation = violations.iter().cloned().fold(0.0f64, f64::max);
    Ok(SolveResult {
        objective: (problem.objective)(&w),
        w_star: w,
        rov,
        violations,
        max_violation,
        multipliers: lambda,
        iterations: total_inner,
        status,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        trace,
    })
}

/// Exhaustive feasible-grid minimum over a box, for verifying [`solve`] on
/// small problems (dimension <= 3).
pub fn grid_oracle(
    problem: &OptProblem,
    bounds: &[(f64, f64)],
    resolution: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = bounds.len();
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(format!(
            "grid oracle supports 1..=3 dimensions, got {n}"
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be >= 2".into()));
    }
    let ctol = problem.settings.ctol;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut idx = vec![0usize; n];
    let total = resolution.pow(n as u32);
    let mut point = vec![0.0; n];
    for flat in 0..total {
        let mut rem = flat;
        for slot in idx.iter_mut() {
            *slot = rem % resolution;
            rem /= resolution;
        }
        for d in 0..n {
            let (lo, hi) = bounds[d];
            point[d] = lo + (hi - lo) * idx[d] as f64 / (resolution - 1) as f64;
        }
        let feasible = problem.constraints.iter().all(|g| g(&point) <= ctol)
            && problem
                .slab
                .as_ref()
                .is_none_or(|slab| slab.violation(&point) <= ctol);
        if !feasible {
            continue;
        }
        let v = (problem.objective)(&point);
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((point.clone(), v));
        }
    }
    best.ok_or_else(|| {
        Error::InvalidArgument("all grid points violate the constraints".into())
    })
}

/// Dump the per-outer-iteration trace as CSV.
pub fn write_trace_csv(result: &SolveResult, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(Error::Csv)?;
    wtr.write_record(["iteration", "objective", "max_violation", "grad_norm"])?;
    for row in &result.trace {
        wtr.write_record([
            row.iteration.to_string(),
            row.objective.to_string(),
            row.max_violation.to_string(),
            row.grad_norm.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
