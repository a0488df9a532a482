//! Basis-count sweep: run both controllers across `N = 2..=8` at the
//! challenge speed and tabulate the aggregate metrics per cell.

use crate::basis::default_profile;
use crate::control::{
    ControllerConfig, ControllerKind, PscController, RscController,
};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, compute_metrics, AggregateMetrics, TrialMetrics};
use crate::models::{DetectorModel, PredictorModel};
use crate::seeding::derive_seed;
use crate::sim::{run_loop, CommandSource, LoopConfig, ObjectParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n_basis: Vec<usize>,
    pub controllers: Vec<ControllerKind>,
    /// Seeds per cell.
    pub trials: usize,
    /// Reference peak speed of every sweep trial, m/s.
    pub v_max: f64,
    pub master_seed: u64,
    /// Template controller settings; `n_basis` is overridden per cell.
    pub controller: ControllerConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_basis: (2..=8).collect(),
            controllers: vec![ControllerKind::Rsc, ControllerKind::Psc],
            trials: 10,
            v_max: 0.5,
            master_seed: 1,
            controller: ControllerConfig::default(),
        }
    }
}

/// One aggregated sweep cell, flattened for CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub controller: String,
    pub n_basis: usize,
    pub trials: usize,
    pub drops: usize,
    pub mor_mean: f64,
    pub mor_std: f64,
    pub rts_mean: f64,
    pub rts_std: f64,
    pub drt_mean: f64,
    pub drt_std: f64,
    pub et_ms_mean: f64,
    pub rov_mean: f64,
}

impl SweepRow {
    pub fn from_aggregate(controller: &str, n_basis: usize, agg: &AggregateMetrics) -> Self {
        SweepRow {
            controller: controller.to_string(),
            n_basis,
            trials: agg.trials,
            drops: agg.drops,
            mor_mean: agg.mor.mean,
            mor_std: agg.mor.std(),
            rts_mean: agg.rts.mean,
            rts_std: agg.rts.std(),
            drt_mean: agg.drt.mean,
            drt_std: agg.drt.std(),
            et_ms_mean: agg.et_ms.mean,
            rov_mean: agg.rov.mean,
        }
    }
}

/// Run one cell: `trials` seeded runs of one controller at one basis
/// count, in parallel. `make` builds a fresh controller per trial.
pub fn run_cell<F>(
    tag: &str,
    n_basis: usize,
    trials: usize,
    v_max: f64,
    master_seed: u64,
    make: F,
) -> Result<Vec<TrialMetrics>>
where
    F: Fn() -> Result<Box<dyn CommandSource>> + Sync,
{
    let profile = default_profile(v_max)?;
    let params = ObjectParams::default();
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, tag, &[n_basis as u64, i as u64]);
            let mut source = make()?;
            let cfg = LoopConfig {
                controller_name: tag.to_string(),
                n_basis: Some(n_basis),
                ..LoopConfig::default()
            };
            let log = run_loop(&profile, &params, source.as_mut(), seed, &cfg)?;
            Ok(compute_metrics(&log))
        })
        .collect()
}

/// Run the full sweep with trained models.
pub fn run_sweep(
    cfg: &SweepConfig,
    detector: &DetectorModel,
    predictor: &PredictorModel,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &kind in &cfg.controllers {
        for &n in &cfg.n_basis {
            let ctl_cfg = ControllerConfig {
                n_basis: n,
                ..cfg.controller.clone()
            };
            let tag = kind.to_string();
            let metrics = match kind {
                ControllerKind::Rsc => run_cell(
                    &tag,
                    n,
                    cfg.trials,
                    cfg.v_max,
                    cfg.master_seed,
                    || {
                        Ok(Box::new(RscController::new(detector.clone(), ctl_cfg.clone())?)
                            as Box<dyn CommandSource>)
                    },
                )?,
                ControllerKind::Psc => run_cell(
                    &tag,
                    n,
                    cfg.trials,
                    cfg.v_max,
                    cfg.master_seed,
                    || {
                        Ok(Box::new(PscController::new(predictor.clone(), ctl_cfg.clone())?)
                            as Box<dyn CommandSource>)
                    },
                )?,
            };
            rows.push(SweepRow::from_aggregate(&tag, n, &aggregate(&metrics)));
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(Error::Csv)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(Error::Csv)?;
    rdr.deserialize().map(|r| r.map_err(Error::Csv)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PassThrough;
    use tempfile::tempdir;

    fn passthrough_cell(tag: &str, n: usize, trials: usize) -> Vec<TrialMetrics> {
        run_cell(tag, n, trials, 0.3, 7, || {
            Ok(Box::new(PassThrough) as Box<dyn CommandSource>)
        })
        .unwrap()
    }

    #[test]
    fn cell_is_deterministic() {
        let a = passthrough_cell("none", 5, 4);
        let b = passthrough_cell("none", 5, 4);
        assert_eq!(a, b);
    }

    #[test]
    fn cells_use_distinct_seeds() {
        // Different tags and basis counts reseed the tactile noise; the
        // uncontrolled dynamics are identical, so only compare seeds via
        // the derived values.
        let s1 = derive_seed(7, "rsc", &[5, 0]);
        let s2 = derive_seed(7, "psc", &[5, 0]);
        let s3 = derive_seed(7, "rsc", &[6, 0]);
        assert_ne!(s1, s2);
        assert_ne!(s1, s3);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            SweepRow {
                controller: "rsc".into(),
                n_basis: 5,
                trials: 10,
                drops: 0,
                mor_mean: 3.25,
                mor_std: 0.5,
                rts_mean: 1.0,
                rts_std: 0.25,
                drt_mean: 4.75,
                drt_std: 0.125,
                et_ms_mean: 12.5,
                rov_mean: 0.0005,
            },
            SweepRow {
                controller: "psc".into(),
                n_basis: 2,
                trials: 10,
                drops: 0,
                mor_mean: 1.5,
                mor_std: 0.75,
                rts_mean: 0.0,
                rts_std: 0.0,
                drt_mean: 9.5,
                drt_std: 1.25,
                et_ms_mean: 30.0,
                rov_mean: 0.001,
            },
        ];
        let dir = tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&rows, &path).unwrap();
        let back = read_sweep_csv(&path).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn aggregate_row_shape() {
        let metrics = passthrough_cell("none", 4, 3);
        let row = SweepRow::from_aggregate("none", 4, &aggregate(&metrics));
        assert_eq!(row.trials, 3);
        assert_eq!(row.n_basis, 4);
        assert_eq!(row.drops, 0);
        assert!(row.mor_mean >= 0.0);
    }
}
