//! Command-line entry point: dataset generation, classifier training and
//! evaluation, closed-loop runs, the basis-count sweep, and report
//! extraction.
//!
//! Every subcommand takes its parameters from flags, optionally seeded
//! from a JSON config file (`--config`); explicit flags win over the file.
//! Paths left unset resolve inside the conventional run layout
//! `out/<run-id>/{dataset,models,trials,report}/` (see `--run-id`).
//! Exits 0 on success, 1 with a one-line diagnostic on runtime errors, and
//! 2 on usage errors.

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use slipctl::basis::default_profile;
use slipctl::control::{ControllerConfig, PscController, RscController};
use slipctl::dataset::{gen_dataset, load_dataset, windows_from_trials, DatasetConfig};
use slipctl::filter::WindowConfig;
use slipctl::metrics::compute_metrics;
use slipctl::models::{
    evaluate, load_detector, load_predictor, save_model, split_windows, train, BinaryClassifier,
    DetectorModel, PredictorModel, TrainConfig,
};
use slipctl::seeding::derive_seed;
use slipctl::sim::{run_loop, CommandSource, LoopConfig, ObjectParams, PassThrough};
use slipctl::sweep::{run_sweep, write_sweep_csv, SweepConfig, SweepRow};
use slipctl::trial::TrialLog;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "slipctl", version, about = "Slip-avoidance control experiments")]
struct Cli {
    /// Run identifier; unset paths resolve under `out/<run-id>/`.
    #[arg(long, global = true, default_value = "default")]
    run_id: String,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Conventional per-run directory layout.
struct Layout {
    dataset: PathBuf,
    models: PathBuf,
    trials: PathBuf,
    report: PathBuf,
}

impl Layout {
    fn new(run_id: &str) -> Self {
        let root = Path::new("out").join(run_id);
        Layout {
            dataset: root.join("dataset"),
            models: root.join("models"),
            trials: root.join("trials"),
            report: root.join("report"),
        }
    }

    fn model_path(&self, kind: Kind) -> PathBuf {
        let name = match kind {
            Kind::Detect => "detect.json",
            Kind::Predict => "predict.json",
        };
        self.models.join(name)
    }
}

fn ensure_dir(dir: &Path) -> Result<(), slipctl::Error> {
    std::fs::create_dir_all(dir).map_err(|e| slipctl::Error::io(dir, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Detect,
    Predict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Controller {
    None,
    Rsc,
    Psc,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the uncontrolled training dataset.
    GenData {
        /// Output directory for trial logs (default: `out/<run-id>/dataset`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON file holding a DatasetConfig.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a slip classifier on a generated dataset.
    Train {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Dataset directory from `gen-data` (default: `out/<run-id>/dataset`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output model file (default: `out/<run-id>/models/<kind>.json`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON file holding a TrainSettings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Keep every `stride`-th training window.
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained model on the holdout split of a dataset.
    Eval {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Model file (default: `out/<run-id>/models/<kind>.json`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset directory (default: `out/<run-id>/dataset`).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        stride: Option<usize>,
        /// Split seed; must match the one used at training time for a
        /// disjoint holdout.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one closed-loop (or uncontrolled) trial.
    Run {
        #[arg(long, value_enum)]
        controller: Controller,
        #[arg(long, default_value_t = 0.5)]
        v_max: f64,
        #[arg(long, default_value_t = 5)]
        n_basis: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trained detector for rsc (default: `out/<run-id>/models/detect.json`).
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Trained predictor for psc (default: `out/<run-id>/models/predict.json`).
        #[arg(long)]
        predictor: Option<PathBuf>,
        /// Directory to write the trial log into (default: `out/<run-id>/trials`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip writing the trial log.
        #[arg(long)]
        no_log: bool,
    },
    /// Basis-count sweep over both controllers (Table-1-shaped CSV).
    Sweep {
        /// Trained detector (default: `out/<run-id>/models/detect.json`).
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Trained predictor (default: `out/<run-id>/models/predict.json`).
        #[arg(long)]
        predictor: Option<PathBuf>,
        /// Output CSV (default: `out/<run-id>/report/sweep.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON file holding sweep settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        v_max: Option<f64>,
    },
    /// Print a sweep CSV as a table and export plot-ready traces.
    Report {
        /// Sweep CSV from `sweep` (default: `out/<run-id>/report/sweep.csv`).
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Directory of trial logs to flatten (default: `out/<run-id>/trials`).
        #[arg(long)]
        trials: Option<PathBuf>,
        /// Output path for the long-format trace CSV
        /// (default: `out/<run-id>/report/traces.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Trainer settings accepted from `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainSettings {
    epochs: usize,
    stride: usize,
    seed: u64,
    hidden: usize,
    action_hidden: usize,
    fusion: usize,
    batch_size: usize,
    lr: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 4,
            stride: 2,
            seed: 7,
            hidden: DetectorModel::DEFAULT_HIDDEN,
            action_hidden: PredictorModel::DEFAULT_ACTION_HIDDEN,
            fusion: PredictorModel::DEFAULT_FUSION,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct SweepSettings {
    trials: Option<usize>,
    seed: Option<u64>,
    v_max: Option<f64>,
}

fn load_config<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> Result<T, slipctl::Error> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| slipctl::Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| slipctl::Error::json(p, e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let layout = Layout::new(&cli.run_id);
    match dispatch(cli.cmd, &layout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd, layout: &Layout) -> Result<(), slipctl::Error> {
    match cmd {
        Cmd::GenData {
            out,
            config,
            trials,
            seed,
        } => {
            let mut cfg: DatasetConfig = load_config(&config)?;
            if let Some(t) = trials {
                cfg.n_trials = t;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let out = out.unwrap_or_else(|| layout.dataset.clone());
            ensure_dir(&out)?;
            let summary = gen_dataset(&cfg, &out)?;
            println!(
                "wrote {} trials ({} ticks, {:.1}% slip, {} dropped) to {}",
                summary.n_trials,
                summary.n_ticks,
                100.0 * summary.slip_fraction(),
                summary.dropped_trials,
                out.display()
            );
            Ok(())
        }
        Cmd::Train {
            kind,
            data,
            out,
            config,
            epochs,
            stride,
            seed,
        } => {
            let mut set: TrainSettings = load_config(&config)?;
            if let Some(e) = epochs {
                set.epochs = e;
            }
            if let Some(s) = stride {
                set.stride = s;
            }
            if let Some(s) = seed {
                set.seed = s;
            }
            let data = data.unwrap_or_else(|| layout.dataset.clone());
            let out = out.unwrap_or_else(|| layout.model_path(kind));
            if let Some(parent) = out.parent() {
                ensure_dir(parent)?;
            }
            let (train_set, holdout) = load_windows(&data, set.stride, set.seed)?;
            let tcfg = TrainConfig {
                epochs: set.epochs,
                batch_size: set.batch_size,
                lr: set.lr,
                seed: set.seed,
                ..TrainConfig::default()
            };
            match kind {
                Kind::Detect => {
                    let mut model = DetectorModel::new(set.hidden, set.seed)?;
                    run_training(&mut model, &train_set, &holdout, &tcfg, &out)
                }
                Kind::Predict => {
                    let horizon = WindowConfig::default().horizon;
                    let mut model = PredictorModel::new(
                        set.hidden,
                        set.action_hidden,
                        set.fusion,
                        horizon,
                        set.seed,
                    )?;
                    run_training(&mut model, &train_set, &holdout, &tcfg, &out)
                }
            }
        }
        Cmd::Eval {
            kind,
            model,
            data,
            stride,
            seed,
        } => {
            let stride = stride.unwrap_or(2);
            let seed = seed.unwrap_or(7);
            let model = model.unwrap_or_else(|| layout.model_path(kind));
            let data = data.unwrap_or_else(|| layout.dataset.clone());
            let (_, holdout) = load_windows(&data, stride, seed)?;
            let ev = match kind {
                Kind::Detect => evaluate(&load_detector(&model)?, &holdout),
                Kind::Predict => evaluate(&load_predictor(&model)?, &holdout),
            };
            println!(
                "holdout n={} accuracy={:.4} precision={:.4} recall={:.4} f1={:.4}",
                ev.total(),
                ev.accuracy(),
                ev.precision(),
                ev.recall(),
                ev.f1()
            );
            Ok(())
        }
        Cmd::Run {
            controller,
            v_max,
            n_basis,
            seed,
            detector,
            predictor,
            out,
            no_log,
        } => {
            let profile = default_profile(v_max)?;
            let params = ObjectParams::default();
            let ctl_cfg = ControllerConfig {
                n_basis,
                ..ControllerConfig::default()
            };
            let (mut source, name): (Box<dyn CommandSource>, &str) = match controller {
                Controller::None => (Box::new(PassThrough), "none"),
                Controller::Rsc => {
                    let path = detector.unwrap_or_else(|| layout.model_path(Kind::Detect));
                    (Box::new(RscController::new(load_detector(&path)?, ctl_cfg)?), "rsc")
                }
                Controller::Psc => {
                    let path = predictor.unwrap_or_else(|| layout.model_path(Kind::Predict));
                    (Box::new(PscController::new(load_predictor(&path)?, ctl_cfg)?), "psc")
                }
            };
            let cfg = LoopConfig {
                controller_name: name.to_string(),
                n_basis: (controller != Controller::None).then_some(n_basis),
                ..LoopConfig::default()
            };
            let log = run_loop(&profile, &params, source.as_mut(), seed, &cfg)?;
            let m = compute_metrics(&log);
            println!(
                "{name} v_max={v_max} seed={seed}: mor={:.2}deg rts={} drt={:.3} et={} rov={} dropped={}",
                m.mor,
                m.rts,
                m.drt,
                m.et_ms.map_or("-".into(), |v| format!("{v:.1}ms")),
                m.rov.map_or("-".into(), |v| format!("{v:.2e}")),
                m.dropped
            );
            if !no_log {
                let dir = out.unwrap_or_else(|| layout.trials.clone());
                ensure_dir(&dir)?;
                let stem = format!("{name}_v{v_max}_s{seed}");
                log.write(&dir, &stem)?;
                println!("log written to {}/{stem}.jsonl", dir.display());
            }
            Ok(())
        }
        Cmd::Sweep {
            detector,
            predictor,
            out,
            config,
            trials,
            seed,
            v_max,
        } => {
            let set: SweepSettings = load_config(&config)?;
            let mut cfg = SweepConfig::default();
            if let Some(t) = trials.or(set.trials) {
                cfg.trials = t;
            }
            if let Some(s) = seed.or(set.seed) {
                cfg.master_seed = s;
            }
            if let Some(v) = v_max.or(set.v_max) {
                cfg.v_max = v;
            }
            let detector = detector.unwrap_or_else(|| layout.model_path(Kind::Detect));
            let predictor = predictor.unwrap_or_else(|| layout.model_path(Kind::Predict));
            let out = out.unwrap_or_else(|| layout.report.join("sweep.csv"));
            if let Some(parent) = out.parent() {
                ensure_dir(parent)?;
            }
            let det = load_detector(&detector)?;
            let pre = load_predictor(&predictor)?;
            let rows = run_sweep(&cfg, &det, &pre)?;
            write_sweep_csv(&rows, &out)?;
            print_sweep_table(&rows);
            println!("sweep written to {}", out.display());
            Ok(())
        }
        Cmd::Report { sweep, trials, out } => {
            let sweep = sweep.unwrap_or_else(|| layout.report.join("sweep.csv"));
            if sweep.exists() {
                let rows = slipctl::sweep::read_sweep_csv(&sweep)?;
                print_sweep_table(&rows);
            }
            let trials = trials.unwrap_or_else(|| layout.trials.clone());
            if trials.is_dir() {
                let out = out.unwrap_or_else(|| layout.report.join("traces.csv"));
                if let Some(parent) = out.parent() {
                    ensure_dir(parent)?;
                }
                write_traces_csv(&trials, &out)?;
                println!("traces written to {}", out.display());
            } else if !sweep.exists() {
                return Err(slipctl::Error::InvalidArgument(format!(
                    "nothing to report: neither {} nor {} exists",
                    sweep.display(),
                    trials.display()
                )));
            }
            Ok(())
        }
    }
}

fn load_windows(
    data: &Path,
    stride: usize,
    seed: u64,
) -> Result<
    (
        Vec<slipctl::filter::WindowSample>,
        Vec<slipctl::filter::WindowSample>,
    ),
    slipctl::Error,
> {
    let trials = load_dataset(data)?;
    if trials.is_empty() {
        return Err(slipctl::Error::InvalidArgument(format!(
            "no trials found in {}",
            data.display()
        )));
    }
    let wcfg = WindowConfig {
        stride,
        ..WindowConfig::default()
    };
    let windows = windows_from_trials(&trials, &wcfg)?;
    Ok(split_windows(windows, 0.8, derive_seed(seed, "split", &[])))
}

fn run_training<M: BinaryClassifier>(
    model: &mut M,
    train_set: &[slipctl::filter::WindowSample],
    holdout: &[slipctl::filter::WindowSample],
    tcfg: &TrainConfig,
    out: &Path,
) -> Result<(), slipctl::Error> {
    let start = std::time::Instant::now();
    let stats = train(model, train_set, tcfg)?;
    for s in &stats {
        println!(
            "epoch {}: loss={:.4} acc={:.4} f1={:.4}",
            s.epoch, s.mean_loss, s.accuracy, s.f1
        );
    }
    let ev = evaluate(model, holdout);
    println!(
        "trained in {:.1}s; holdout n={} accuracy={:.4} f1={:.4}",
        start.elapsed().as_secs_f64(),
        ev.total(),
        ev.accuracy(),
        ev.f1()
    );
    save_model(model, out)?;
    println!("model written to {}", out.display());
    Ok(())
}

fn print_sweep_table(rows: &[SweepRow]) {
    println!(
        "{:<4} {:>2} {:>6} {:>14} {:>14} {:>14} {:>14} {:>12}",
        "ctl", "N", "drops", "MOR (deg)", "RTS (ticks)", "DRT (m/s)", "ET (ms)", "ROV"
    );
    for r in rows {
        println!(
            "{:<4} {:>2} {:>4}/{:<2} {:>6.2} ±{:<6.2} {:>6.1} ±{:<6.1} {:>6.2} ±{:<6.2} {:>8.1}       {:>10.2e}",
            r.controller,
            r.n_basis,
            r.drops,
            r.trials,
            r.mor_mean,
            r.mor_std,
            r.rts_mean,
            r.rts_std,
            r.drt_mean,
            r.drt_std,
            r.et_ms_mean,
            r.rov_mean,
        );
    }
}

/// Long-format trace CSV over all trials in a directory: one row per tick.
fn write_traces_csv(dir: &Path, out: &Path) -> Result<(), slipctl::Error> {
    let mut wtr = csv::Writer::from_path(out).map_err(slipctl::Error::Csv)?;
    wtr.write_record([
        "trial", "controller", "tick", "t", "theta", "cmd", "speed", "reference", "slip",
    ])?;
    for stem in TrialLog::list_stems(dir)? {
        let log = TrialLog::read(dir, &stem)?;
        let warmup = log.meta.warmup_ticks;
        for (i, rec) in log.records.iter().enumerate() {
            let r = i as isize - warmup as isize;
            let reference = slipctl::basis::reference_at(&log.meta.profile, r);
            wtr.write_record([
                stem.clone(),
                log.meta.controller.clone(),
                i.to_string(),
                rec.t.to_string(),
                rec.theta.to_string(),
                rec.cmd.to_string(),
                rec.speed.to_string(),
                reference.to_string(),
                rec.slip.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| slipctl::Error::io(out, e))?;
    Ok(())
}
