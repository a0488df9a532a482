//! Training-set generation: uncontrolled trials across a grid of reference
//! speeds with randomized object parameters, logged to JSON-lines files.

use crate::basis::default_profile;
use crate::error::Result;
use crate::filter::{make_windows, WindowConfig, WindowSample};
use crate::seeding::derive_seed;
use crate::sim::{run_loop, LoopConfig, ObjectParams, PassThrough};
use crate::trial::TrialLog;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Settings of one dataset generation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_trials: usize,
    /// Reference peak speeds cycled across trials, m/s.
    pub v_grid: Vec<f64>,
    /// Object mass is drawn uniformly from this range per trial, kg.
    pub mass_range: (f64, f64),
    /// Contact friction coefficient range per trial.
    pub friction_range: (f64, f64),
    pub master_seed: u64,
    /// Gaussian jitter on the rotation before labeling, degrees.
    pub label_jitter_deg: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_trials: 660,
            v_grid: vec![0.2, 0.3, 0.4, 0.5],
            mass_range: (0.3, 0.5),
            friction_range: (0.6, 1.0),
            master_seed: 1,
            label_jitter_deg: 0.0,
        }
    }
}

/// Aggregate label statistics of a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_trials: usize,
    pub n_ticks: usize,
    pub slip_ticks: usize,
    pub dropped_trials: usize,
}

impl DatasetSummary {
    pub fn slip_fraction(&self) -> f64 {
        if self.n_ticks == 0 {
            return 0.0;
        }
        self.slip_ticks as f64 / self.n_ticks as f64
    }
}

/// Object parameters for one dataset trial: defaults with mass and
/// friction resampled from the configured ranges.
pub fn trial_params(cfg: &DatasetConfig, index: usize) -> ObjectParams {
    let seed = derive_seed(cfg.master_seed, "params", &[index as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass = rng.random_range(cfg.mass_range.0..=cfg.mass_range.1);
    let friction = rng.random_range(cfg.friction_range.0..=cfg.friction_range.1);
    let defaults = ObjectParams::default();
    ObjectParams {
        mass,
        friction_coeff: friction,
        inertia: ObjectParams::box_inertia(mass, defaults.com_distance),
        ..defaults
    }
}

/// Generate one dataset trial in memory.
pub fn gen_trial(cfg: &DatasetConfig, index: usize) -> Result<TrialLog> {
    let v_max = cfg.v_grid[index % cfg.v_grid.len()];
    let params = trial_params(cfg, index);
    let profile = default_profile(v_max)?;
    let seed = derive_seed(cfg.master_seed, "trial", &[index as u64]);
    let loop_cfg = LoopConfig {
        label_jitter_deg: cfg.label_jitter_deg,
        ..LoopConfig::default()
    };
    run_loop(&profile, &params, &mut PassThrough, seed, &loop_cfg)
}

/// Generate the full dataset under `dir` as `trial_%05d.{jsonl,meta.json}`
/// plus a `summary.json`.
pub fn gen_dataset(cfg: &DatasetConfig, dir: &Path) -> Result<DatasetSummary> {
    let mut summary = DatasetSummary {
        n_trials: cfg.n_trials,
        n_ticks: 0,
        slip_ticks: 0,
        dropped_trials: 0,
    };
    for i in 0..cfg.n_trials {
        let log = gen_trial(cfg, i)?;
        summary.n_ticks += log.records.len();
        summary.slip_ticks += log.records.iter().filter(|r| r.slip == 1).count();
        summary.dropped_trials += log.dropped() as usize;
        log.write(dir, &format!("trial_{i:05}"))?;
    }
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| crate::error::Error::json(&path, e))?;
    std::fs::write(&path, json).map_err(|e| crate::error::Error::io(&path, e))?;
    Ok(summary)
}

/// Load every trial in a dataset directory, sorted by stem.
pub fn load_dataset(dir: &Path) -> Result<Vec<TrialLog>> {
    TrialLog::list_stems(dir)?
        .iter()
        .map(|stem| TrialLog::read(dir, stem))
        .collect()
}

/// Extract training windows from a set of trials.
pub fn windows_from_trials(trials: &[TrialLog], cfg: &WindowConfig) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for t in trials {
        out.extend(make_windows(t, cfg)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_cfg() -> DatasetConfig {
        DatasetConfig {
            n_trials: 8,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn params_sampled_inside_ranges() {
        let cfg = small_cfg();
        for i in 0..50 {
            let p = trial_params(&cfg, i);
            assert!((cfg.mass_range.0..=cfg.mass_range.1).contains(&p.mass));
            assert!(
                (cfg.friction_range.0..=cfg.friction_range.1).contains(&p.friction_coeff)
            );
            assert!((p.inertia - ObjectParams::box_inertia(p.mass, p.com_distance)).abs() < 1e-15);
        }
    }

    #[test]
    fn params_vary_across_trials() {
        let cfg = small_cfg();
        let a = trial_params(&cfg, 0);
        let b = trial_params(&cfg, 1);
        assert_ne!(a.mass, b.mass);
    }

    #[test]
    fn trials_deterministic() {
        let cfg = small_cfg();
        let a = gen_trial(&cfg, 3).unwrap();
        let b = gen_trial(&cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn v_grid_cycles() {
        let cfg = small_cfg();
        for (i, &v) in cfg.v_grid.iter().enumerate() {
            let log = gen_trial(&cfg, i).unwrap();
            assert_eq!(log.meta.v_max, v);
        }
        let wrapped = gen_trial(&cfg, cfg.v_grid.len()).unwrap();
        assert_eq!(wrapped.meta.v_max, cfg.v_grid[0]);
    }

    #[test]
    fn dataset_round_trip_and_summary() {
        let cfg = small_cfg();
        let dir = tempdir().unwrap();
        let summary = gen_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(summary.n_trials, 8);
        assert!(summary.n_ticks > 0);
        // Contains both classes: the slow trials never slip, the fast do.
        assert!(summary.slip_ticks > 0, "no slip ticks generated");
        assert!(summary.slip_ticks < summary.n_ticks);

        let trials = load_dataset(dir.path()).unwrap();
        assert_eq!(trials.len(), 8);
        let regenerated = gen_trial(&cfg, 2).unwrap();
        assert_eq!(trials[2], regenerated);
    }

    #[test]
    fn windows_have_both_labels() {
        let cfg = DatasetConfig {
            n_trials: 12,
            ..DatasetConfig::default()
        };
        let trials: Vec<TrialLog> = (0..cfg.n_trials)
            .map(|i| gen_trial(&cfg, i).unwrap())
            .collect();
        let windows = windows_from_trials(&trials, &WindowConfig::default()).unwrap();
        assert!(!windows.is_empty());
        let pos_now = windows.iter().filter(|w| w.label_now).count();
        let pos_future = windows.iter().filter(|w| w.label_future).count();
        assert!(pos_now > 0 && pos_now < windows.len());
        assert!(pos_future > 0 && pos_future < windows.len());
    }
}
