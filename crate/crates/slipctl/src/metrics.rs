//! Per-trial performance metrics and their aggregation.
//!
//! * **MOR** — maximum object rotation over the trial, degrees.
//! * **RTS** — rotated time steps: ticks with `|θ|` above the slip
//!   threshold.
//! * **DRT** — deviation from the reference trajectory: `Σ|cmd − ref|`
//!   over the motion (warmup excluded), m/s summed per tick.
//! * **ET** — mean controller execution time per solved tick, ms.
//! * **ROV** — mean residual optimization variable (projected-gradient
//!   norm) over solved ticks.

use crate::basis::reference_at;
use crate::consts::SLIP_THRESHOLD_DEG;
use crate::trial::TrialLog;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub mor: f64,
    pub rts: usize,
    pub drt: f64,
    /// `None` when the trial had no solved ticks (e.g. uncontrolled).
    pub et_ms: Option<f64>,
    pub rov: Option<f64>,
    pub dropped: bool,
}

/// Compute the metrics of one trial log.
pub fn compute_metrics(log: &TrialLog) -> TrialMetrics {
    let warmup = log.meta.warmup_ticks;
    let mut mor = 0.0f64;
    let mut rts = 0usize;
    let mut drt = 0.0;
    let mut et_sum = 0.0;
    let mut et_n = 0usize;
    let mut rov_sum = 0.0;
    let mut rov_n = 0usize;

    for (i, rec) in log.records.iter().enumerate() {
        mor = mor.max(rec.theta.abs());
        if rec.theta.abs() > SLIP_THRESHOLD_DEG {
            rts += 1;
        }
        let r = i as isize - warmup as isize;
        let reference = reference_at(&log.meta.profile, r);
        if r >= 0 {
            drt += (rec.cmd - reference).abs();
        }
        if let Some(et) = rec.et_ms {
            et_sum += et;
            et_n += 1;
        }
        if let Some(rov) = rec.rov {
            if rov.is_finite() {
                rov_sum += rov;
                rov_n += 1;
            }
        }
    }

    TrialMetrics {
        mor,
        rts,
        drt,
        et_ms: (et_n > 0).then(|| et_sum / et_n as f64),
        rov: (rov_n > 0).then(|| rov_sum / rov_n as f64),
        dropped: log.dropped(),
    }
}

/// Mean and (population) standard deviation, accumulated one value at a
/// time with Welford's update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    pub n: usize,
    pub mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.m2 / self.n as f64).sqrt()
    }

}

impl FromIterator<f64> for RunningStat {
    fn from_iter<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let mut s = Self::default();
        for v in values {
            s.push(v);
        }
        s
    }
}

/// Aggregated metrics over a set of trials of one condition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub trials: usize,
    pub drops: usize,
    pub mor: RunningStat,
    pub rts: RunningStat,
    pub drt: RunningStat,
    pub et_ms: RunningStat,
    pub rov: RunningStat,
}

pub fn aggregate(metrics: &[TrialMetrics]) -> AggregateMetrics {
    let mut agg = AggregateMetrics {
        trials: metrics.len(),
        ..Default::default()
    };
    for m in metrics {
        agg.drops += m.dropped as usize;
        agg.mor.push(m.mor);
        agg.rts.push(m.rts as f64);
        agg.drt.push(m.drt);
        if let Some(et) = m.et_ms {
            agg.et_ms.push(et);
        }
        if let Some(rov) = m.rov {
            agg.rov.push(rov);
        }
    }
    agg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::default_profile;
    use crate::sim::{run_trial, ObjectParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn welford_matches_two_pass() {
        let values = [0.3, -1.2, 4.5, 0.0, 2.25, -0.75, 3.125];
        let s = RunningStat::from_iter(values);
        let mean2: f64 = values.iter().sum::<f64>() / values.len() as f64;
        let var2: f64 =
            values.iter().map(|v| (v - mean2) * (v - mean2)).sum::<f64>() / values.len() as f64;
        assert_abs_diff_eq!(s.mean, mean2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.std(), var2.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn empty_stat_is_zero() {
        let s = RunningStat::default();
        assert_eq!(s.n, 0);
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.std(), 0.0);
    }

    #[test]
    fn perfect_tracking_has_zero_drt() {
        // The uncontrolled baseline follows the reference exactly.
        let profile = default_profile(0.2).unwrap();
        let log = run_trial(&profile, &ObjectParams::default(), 1).unwrap();
        let m = compute_metrics(&log);
        assert_abs_diff_eq!(m.drt, 0.0, epsilon = 1e-12);
        assert_eq!(m.rts, 0);
        assert!(!m.dropped);
        assert!(m.et_ms.is_none());
    }

    #[test]
    fn slipping_trial_has_positive_rts_and_mor() {
        let profile = default_profile(0.4).unwrap();
        let log = run_trial(&profile, &ObjectParams::default(), 1).unwrap();
        let m = compute_metrics(&log);
        assert!(m.mor > SLIP_THRESHOLD_DEG);
        assert!(m.rts > 0);
        assert!(!m.dropped);
    }

    #[test]
    fn dropped_trial_detected() {
        let profile = default_profile(0.5).unwrap();
        let log = run_trial(&profile, &ObjectParams::default(), 1).unwrap();
        let m = compute_metrics(&log);
        assert!(m.dropped);
        assert_abs_diff_eq!(m.mor, log.meta.params.failure_angle, epsilon = 1e-12);
    }

    #[test]
    fn mor_matches_naive_max() {
        let profile = default_profile(0.4).unwrap();
        let log = run_trial(&profile, &ObjectParams::default(), 5).unwrap();
        let naive = log
            .records
            .iter()
            .map(|r| r.theta.abs())
            .fold(0.0f64, f64::max);
        assert_eq!(compute_metrics(&log).mor, naive);
    }

    #[test]
    fn aggregate_counts_and_stats() {
        let mk = |mor: f64, dropped: bool| TrialMetrics {
            mor,
            rts: 2,
            drt: 1.0,
            et_ms: Some(5.0),
            rov: None,
            dropped,
        };
        let agg = aggregate(&[mk(1.0, false), mk(3.0, true)]);
        assert_eq!(agg.trials, 2);
        assert_eq!(agg.drops, 1);
        assert_abs_diff_eq!(agg.mor.mean, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(agg.mor.std(), 1.0, epsilon = 1e-15);
        assert_eq!(agg.et_ms.n, 2);
        assert_eq!(agg.rov.n, 0);
    }
}
