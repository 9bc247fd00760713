//! Implementations of the five subcommands. Each validates the full
//! configuration and reads its inputs before writing anything, computes in
//! memory, then writes its artifacts, so a failing run leaves no partial
//! outputs behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bdcsense::cfnn::{load_checkpoint_file, save_checkpoint_file};
use bdcsense::dataset::{self, build_patterns, kfold, Dataset, NoiseConfig, ScalerPolicy};
use bdcsense::motor::{simulate, MotorState, Trajectory};
use bdcsense::pipeline::{
    emit_figures, evaluate, limits, train, EvalReport, TrainReport, TrainSetup, REFERENCE_ROW,
};

use crate::config::RunConfig;
use crate::CliError;

/// Per-stage wall-clock timings. Written to `timing.txt`, which is the one
/// artifact excluded from byte-reproducibility comparisons.
#[derive(Debug, Default)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    fn push(&mut self, stage: &str, secs: f64) {
        self.stages.push((stage.to_string(), secs));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = String::new();
        for (stage, secs) in &self.stages {
            writeln!(text, "{stage}: {secs:.3} s").unwrap();
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Simulates the configured run and writes `trajectory.csv` plus a
/// steady-state summary.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    let traj = run_simulation(cfg)?;
    let secs = started.elapsed().as_secs_f64();

    ensure_dir(out)?;
    let path = out.join("trajectory.csv");
    traj.write_csv_file(&path, &cfg.echo_comments())?;
    std::fs::write(out.join("sim_summary.txt"), sim_summary(cfg, &traj))?;
    eprintln!(
        "simulate: {} samples in {secs:.2} s -> {}",
        traj.len(),
        path.display()
    );
    Ok(path)
}

fn run_simulation(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let record_dt = 1.0 / cfg.rate_hz;
    Ok(simulate(
        &cfg.motor,
        &cfg.profile,
        cfg.dt,
        record_dt,
        cfg.t_end,
        MotorState::REST,
    )?)
}

fn sim_summary(cfg: &RunConfig, traj: &Trajectory) -> String {
    let last = traj.last();
    let state = MotorState {
        i_a: last.i_a,
        omega: last.omega,
        theta: last.theta,
    };
    let losses = cfg.motor.power_losses(&state);
    let dissipation = cfg.motor.heat_dissipation(&state);
    let balance_pct = if losses > 0.0 {
        (losses - dissipation).abs() / losses * 100.0
    } else {
        0.0
    };
    let equilibrium = balance_pct < limits::ENERGY_BALANCE_PCT;
    let mut s = String::new();
    writeln!(s, "samples            = {}", traj.len()).unwrap();
    writeln!(s, "t_end              = {} s", last.t).unwrap();
    writeln!(s, "final current      = {:.6} A", last.i_a).unwrap();
    writeln!(s, "final speed        = {:.6} rad/s", last.omega).unwrap();
    writeln!(s, "final temp rise    = {:.6} K", last.theta).unwrap();
    writeln!(s, "final resistance   = {:.6} ohm", last.resistance).unwrap();
    writeln!(s, "power losses       = {:.6} W", losses).unwrap();
    writeln!(s, "heat dissipation   = {:.6} W", dissipation).unwrap();
    writeln!(
        s,
        "energy balance     = {:.6} % (limit {} %)",
        balance_pct,
        limits::ENERGY_BALANCE_PCT
    )
    .unwrap();
    writeln!(s, "equilibrium_reached = {equilibrium}").unwrap();
    s
}

/// Builds the noisy dataset, simulating the trajectory inline when no
/// existing trajectory file is given. Writes `dataset.csv` (and
/// `trajectory.csv` for an inline simulation).
pub fn cmd_gendata(
    cfg: &RunConfig,
    out: &Path,
    trajectory: Option<&Path>,
) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let (traj, source, inline) = match trajectory {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Validation(format!(
                    "trajectory file {} does not exist",
                    path.display()
                )));
            }
            let traj = Trajectory::read_csv_file(path)?;
            let source = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "trajectory".to_string());
            (traj, source, false)
        }
        None => (run_simulation(cfg)?, "trajectory.csv".to_string(), true),
    };
    let ds = build_dataset(cfg, &traj, &source)?;

    ensure_dir(out)?;
    if inline {
        traj.write_csv_file(&out.join("trajectory.csv"), &cfg.echo_comments())?;
    }
    let path = out.join("dataset.csv");
    dataset::write_csv_file(&ds, &path, &cfg.echo_comments())?;
    eprintln!("gendata: {} patterns -> {}", ds.len(), path.display());
    Ok(path)
}

fn build_dataset(cfg: &RunConfig, traj: &Trajectory, source: &str) -> Result<Dataset, CliError> {
    let noise = NoiseConfig {
        sigma_v: cfg.sigma_v,
        sigma_i: cfg.sigma_i,
        seed: cfg.noise_seed(),
    };
    Ok(build_patterns(
        traj,
        cfg.rate_hz,
        &noise,
        ScalerPolicy::Fit,
        source,
    )?)
}

/// Trains on an existing dataset and writes `checkpoint.txt`,
/// `train_report.csv` and `train_summary.txt`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, dataset_path: &Path) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    if !dataset_path.exists() {
        return Err(CliError::Validation(format!(
            "dataset file {} does not exist",
            dataset_path.display()
        )));
    }
    let ds = dataset::read_csv_file(dataset_path)?;
    let (weights, report) = run_training(cfg, &ds)?;

    ensure_dir(out)?;
    let path = out.join("checkpoint.txt");
    save_checkpoint_file(&weights, &ds.scaler, &path, &cfg.echo_comments())?;
    write_train_artifacts(cfg, &report, out)?;
    eprintln!(
        "train: {} epochs ({}), best val sse {:.6} at epoch {}, {:.2} s -> {}",
        report.epochs_used,
        report.stop,
        report.best_val_sse,
        report.best_epoch,
        report.wall_secs,
        path.display()
    );
    Ok(path)
}

fn run_training(
    cfg: &RunConfig,
    ds: &Dataset,
) -> Result<(bdcsense::cfnn::CfnnWeights, TrainReport), CliError> {
    let folds = kfold(ds, cfg.folds, cfg.fold_seed())?;
    let setup = TrainSetup {
        topology: cfg.parsed_topology()?,
        rprop: cfg.rprop,
        stop: cfg.stop,
        init_seed: cfg.init_seed(),
    };
    Ok(train(ds, &folds[0], &setup)?)
}

fn write_train_artifacts(
    cfg: &RunConfig,
    report: &TrainReport,
    out: &Path,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf, &cfg.echo_comments())?;
    std::fs::write(out.join("train_report.csv"), buf)?;
    // wall time stays out of the summary so reruns are byte-identical
    let mut s = String::new();
    writeln!(s, "stop_reason   = {}", report.stop).unwrap();
    writeln!(s, "epochs_used   = {}", report.epochs_used).unwrap();
    writeln!(s, "best_epoch    = {}", report.best_epoch).unwrap();
    writeln!(s, "best_val_sse  = {:.9}", report.best_val_sse).unwrap();
    writeln!(
        s,
        "final_train_sse = {:.9}",
        report
            .epochs
            .last()
            .map(|e| e.train_sse)
            .unwrap_or(f64::NAN)
    )
    .unwrap();
    writeln!(s, "init_seed     = {}", report.init_seed).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "effective config:").unwrap();
    s.push_str(&cfg.to_config_text());
    std::fs::write(out.join("train_summary.txt"), s)?;
    Ok(())
}

/// Evaluates a checkpoint against a clean trajectory and noisy dataset;
/// writes the report files and the figure CSVs.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: &Path,
    trajectory: &Path,
    dataset_path: &Path,
) -> Result<EvalReport, CliError> {
    cfg.validate()?;
    for (what, path) in [
        ("checkpoint", checkpoint),
        ("trajectory", trajectory),
        ("dataset", dataset_path),
    ] {
        if !path.exists() {
            return Err(CliError::Validation(format!(
                "{what} file {} does not exist",
                path.display()
            )));
        }
    }
    let (weights, scaler) = load_checkpoint_file(checkpoint)?;
    let traj = Trajectory::read_csv_file(trajectory)?;
    let ds = dataset::read_csv_file(dataset_path)?;
    let report = evaluate(&weights, &scaler, &traj, &ds)?;

    ensure_dir(out)?;
    write_eval_artifacts(cfg, &traj, &report, out)?;
    eprintln!(
        "evaluate: speed {:.5} rad/s ({:.5} %), temp {:.5} K, res {:.6} ohm ({:.5} %)",
        report.abs_err[0],
        report.rel_err_pct()[0],
        report.abs_err[1],
        report.abs_err[2],
        report.rel_err_pct()[2],
    );
    Ok(report)
}

fn write_eval_artifacts(
    cfg: &RunConfig,
    traj: &Trajectory,
    report: &EvalReport,
    out: &Path,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf, &cfg.echo_comments())?;
    std::fs::write(out.join("eval_report.csv"), buf)?;
    std::fs::write(out.join("eval_summary.txt"), eval_summary(cfg, report))?;
    emit_figures(traj, report, out, &cfg.echo_comments())?;
    Ok(())
}

fn eval_summary(cfg: &RunConfig, report: &EvalReport) -> String {
    let rel = report.rel_err_pct();
    let r = REFERENCE_ROW;
    let mut s = String::new();
    writeln!(
        s,
        "steady-state estimation errors (mean absolute over the final 10 %):"
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "output       achieved                  reference row            nominal"
    )
    .unwrap();
    writeln!(
        s,
        "speed        {:>12.6} rad/s ({:.5} %)   {} rad/s ({} %)   {:.4} rad/s",
        report.abs_err[0], rel[0], r.speed_abs, r.speed_rel_pct, report.nominal[0]
    )
    .unwrap();
    writeln!(
        s,
        "temperature  {:>12.6} K     ({:.5} %)   {} K ({} %)          {:.4} K",
        report.abs_err[1], rel[1], r.temp_abs, r.temp_rel_pct, report.nominal[1]
    )
    .unwrap();
    writeln!(
        s,
        "resistance   {:>12.6} ohm   ({:.5} %)   {} ohm ({} %)      {:.4} ohm",
        report.abs_err[2], rel[2], r.res_abs, r.res_rel_pct, report.nominal[2]
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "limits: speed <= {} %, temperature <= {} K, resistance <= {} %",
        limits::SPEED_REL_PCT,
        limits::TEMP_ABS,
        limits::RES_REL_PCT
    )
    .unwrap();
    writeln!(s, "within_limits = {}", report.within_limits()).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "effective config:").unwrap();
    s.push_str(&cfg.to_config_text());
    s
}

/// Outcome of the one-shot pipeline.
#[derive(Debug)]
pub struct ReproOutcome {
    pub pass: bool,
    pub out_dir: PathBuf,
    pub report: EvalReport,
    pub table: String,
}

/// One-shot pipeline: simulate, generate data, train, evaluate, and check
/// every run-level acceptance threshold. All artifacts land in `out`.
pub fn cmd_repro(cfg: &RunConfig, out: &Path) -> Result<ReproOutcome, CliError> {
    cfg.validate()?;
    ensure_dir(out)?;
    let mut timings = Timings::default();
    let echo = cfg.echo_comments();

    let t = Instant::now();
    let traj = run_simulation(cfg)?;
    timings.push("simulate", t.elapsed().as_secs_f64());
    eprintln!(
        "repro: simulated {} samples in {:.2} s",
        traj.len(),
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let ds = build_dataset(cfg, &traj, "trajectory.csv")?;
    timings.push("gendata", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let (weights, train_report) = run_training(cfg, &ds)?;
    timings.push("train", t.elapsed().as_secs_f64());
    eprintln!(
        "repro: trained {} epochs ({}) in {:.2} s",
        train_report.epochs_used,
        train_report.stop,
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let eval_report = evaluate(&weights, &ds.scaler, &traj, &ds)?;
    timings.push("evaluate", t.elapsed().as_secs_f64());

    traj.write_csv_file(&out.join("trajectory.csv"), &echo)?;
    dataset::write_csv_file(&ds, &out.join("dataset.csv"), &echo)?;
    save_checkpoint_file(&weights, &ds.scaler, &out.join("checkpoint.txt"), &echo)?;
    write_train_artifacts(cfg, &train_report, out)?;
    write_eval_artifacts(cfg, &traj, &eval_report, out)?;
    std::fs::write(out.join("config.txt"), cfg.to_config_text())?;

    let (pass, table) = acceptance_table(cfg, &traj, &eval_report);
    std::fs::write(out.join("acceptance_table.txt"), &table)?;
    timings.write(&out.join("timing.txt"))?;
    print!("{table}");

    Ok(ReproOutcome {
        pass,
        out_dir: out.to_path_buf(),
        report: eval_report,
        table,
    })
}

/// Run-level pass/fail table: physics fixed point, energy balance, and the
/// three steady-state estimation errors against their thresholds.
fn acceptance_table(cfg: &RunConfig, traj: &Trajectory, report: &EvalReport) -> (bool, String) {
    let last = traj.last();
    let state = MotorState {
        i_a: last.i_a,
        omega: last.omega,
        theta: last.theta,
    };
    let losses = cfg.motor.power_losses(&state);
    let dissipation = cfg.motor.heat_dissipation(&state);
    let balance_pct = if losses > 0.0 {
        (losses - dissipation).abs() / losses * 100.0
    } else {
        0.0
    };
    let rel = report.rel_err_pct();
    let r = REFERENCE_ROW;

    struct Row {
        name: &'static str,
        achieved: String,
        threshold: String,
        pass: bool,
        reference: String,
    }
    let rows = [
        Row {
            name: "steady-state temperature rise",
            achieved: format!("{:.3} K", last.theta),
            threshold: format!("[{}, {}] K", limits::THETA_BAND.0, limits::THETA_BAND.1),
            pass: last.theta >= limits::THETA_BAND.0 && last.theta <= limits::THETA_BAND.1,
            reference: "~80 K".into(),
        },
        Row {
            name: "steady-state resistance",
            achieved: format!("{:.4} ohm", last.resistance),
            threshold: format!(
                "[{}, {}] ohm",
                limits::RESISTANCE_BAND.0,
                limits::RESISTANCE_BAND.1
            ),
            pass: last.resistance >= limits::RESISTANCE_BAND.0
                && last.resistance <= limits::RESISTANCE_BAND.1,
            reference: "4.60 ohm".into(),
        },
        Row {
            name: "energy balance at final sample",
            achieved: format!("{balance_pct:.4} %"),
            threshold: format!("< {} %", limits::ENERGY_BALANCE_PCT),
            pass: balance_pct < limits::ENERGY_BALANCE_PCT,
            reference: "-".into(),
        },
        Row {
            name: "speed relative error",
            achieved: format!("{:.5} % ({:.5} rad/s)", rel[0], report.abs_err[0]),
            threshold: format!("<= {} %", limits::SPEED_REL_PCT),
            pass: rel[0] <= limits::SPEED_REL_PCT,
            reference: format!("{} % ({} rad/s)", r.speed_rel_pct, r.speed_abs),
        },
        Row {
            name: "temperature absolute error",
            achieved: format!("{:.5} K ({:.5} %)", report.abs_err[1], rel[1]),
            threshold: format!("<= {} K", limits::TEMP_ABS),
            pass: report.abs_err[1] <= limits::TEMP_ABS,
            reference: format!("{} K ({} %)", r.temp_abs, r.temp_rel_pct),
        },
        Row {
            name: "resistance relative error",
            achieved: format!("{:.5} % ({:.6} ohm)", rel[2], report.abs_err[2]),
            threshold: format!("<= {} %", limits::RES_REL_PCT),
            pass: rel[2] <= limits::RES_REL_PCT,
            reference: format!("{} % ({} ohm)", r.res_rel_pct, r.res_abs),
        },
    ];
    let pass = rows.iter().all(|r| r.pass);
    let mut s = String::new();
    let line = |name: &str, achieved: &str, threshold: &str, result: &str, reference: &str| {
        format!("{name:<34} {achieved:<28} {threshold:<18} {result:<6} {reference}\n")
    };
    s.push_str(&line(
        "criterion",
        "achieved",
        "threshold",
        "result",
        "reference",
    ));
    for row in &rows {
        s.push_str(&line(
            row.name,
            &row.achieved,
            &row.threshold,
            if row.pass { "PASS" } else { "FAIL" },
            &row.reference,
        ));
    }
    writeln!(s, "overall: {}", if pass { "PASS" } else { "FAIL" }).unwrap();
    (pass, s)
}
