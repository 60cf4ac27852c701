//! `tsdrive`: identify a TS vehicle model, validate it, and drive the plant
//! with the predictive controller and moving-horizon estimator.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsdrive::anfis::generate_excitation;
use tsdrive::harness::{
    check_profile, compute_metrics, holdout_data, identify_model, run_closed_loop, Metrics,
    RunConfig, RunLog,
};
use tsdrive::ts::{load_model, save_model};
use tsdrive::{anfis, TsModel};

#[derive(Parser)]
#[command(name = "tsdrive", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate excitation data, train the model and check it on a holdout run.
    Identify(Common),
    /// One-step prediction errors of `run.model` on the holdout data.
    Validate(Common),
    /// Open-loop excitation run of the plant, written as a dataset.
    Simulate(Common),
    /// Closed-loop run over the reference profile.
    Run(Common),
    /// Metrics and a plotting table from the `runlog.csv` in the output directory.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed` and the training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Abort(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Abort(_) => 3,
        }
    }
}

fn config_err(e: impl Display) -> Failure {
    Failure::Config(e.to_string())
}

fn other(e: impl Display) -> Failure {
    Failure::Other(e.to_string())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Identify(c) => identify(c),
        Command::Validate(c) => validate(c),
        Command::Simulate(c) => simulate(c),
        Command::Run(c) => run(c),
        Command::Report(c) => report(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("configuration error", m),
                Failure::Abort(m) => ("run aborted", m),
                Failure::Other(m) => ("error", m),
            };
            eprintln!("tsdrive: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(&c.config).map_err(config_err)?;
    Ok(match c.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn out_dir(c: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&c.out).map_err(|e| other(format!("{}: {e}", c.out.display())))?;
    Ok(&c.out)
}

/// `run.model`, falling back to `model.json` in the output directory.
fn load_run_model(cfg: &RunConfig, c: &Common) -> Result<TsModel, Failure> {
    let path = cfg
        .run
        .model
        .clone()
        .unwrap_or_else(|| c.out.join("model.json"));
    if !path.exists() {
        return Err(Failure::Config(format!(
            "no model at {}; set run.model or run `tsdrive identify` first",
            path.display()
        )));
    }
    let model = load_model(&path).map_err(config_err)?;
    cfg.check_model(&model).map_err(config_err)?;
    Ok(model)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(other)?;
    fs::write(path, text + "\n").map_err(|e| other(format!("{}: {e}", path.display())))
}

fn identify(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let out = out_dir(c)?;
    let id = identify_model(&cfg).map_err(|e| match e {
        tsdrive::Error::Io { .. }
        | tsdrive::Error::Parse { .. }
        | tsdrive::Error::InvalidParameter(_) => config_err(e),
        other_err => other(other_err),
    })?;
    save_model(&id.model, out.join("model.json")).map_err(other)?;
    id.training
        .save(out.join("training_report.json"))
        .map_err(other)?;
    write_json(&out.join("validation.json"), &id.validation)?;
    id.dataset
        .write_csv(out.join("dataset.csv"))
        .map_err(other)?;
    println!(
        "trained on {} samples ({} held out for model selection)",
        id.training.n_train, id.training.n_validation
    );
    print_validation(&id.validation, &id.model);
    println!("wrote {}", out.join("model.json").display());
    Ok(())
}

fn print_validation(v: &anfis::ValidationReport, model: &TsModel) {
    println!(
        "holdout: {} samples, {:.1}% inside the model domain",
        v.samples,
        100.0 * v.coverage
    );
    for (i, name) in ["vx", "vy", "omega"].iter().enumerate() {
        let span = model.domain().intervals[i].span();
        println!(
            "  {name:<5} rmse {:.5} ({:.2}% of span)  max {:.5}",
            v.rmse[i],
            100.0 * v.rmse[i] / span,
            v.max_error[i]
        );
    }
}

fn validate(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let model = load_run_model(&cfg, c)?;
    let out = out_dir(c)?;
    let holdout = holdout_data(&cfg).map_err(other)?;
    let report = anfis::validate(&model, &holdout).map_err(other)?;
    write_json(&out.join("validation.json"), &report)?;
    print_validation(&report, &model);
    Ok(())
}

fn simulate(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let out = out_dir(c)?;
    let data = generate_excitation(&cfg.plant, &cfg.identify.excitation, cfg.run.seed)
        .map_err(config_err)?;
    let path = out.join("dataset.csv");
    data.write_csv(&path).map_err(other)?;
    println!(
        "{} transitions ({} rejected inputs) written to {}",
        data.len(),
        data.rejected,
        path.display()
    );
    Ok(())
}

fn print_metrics(m: &Metrics) {
    println!("{} steps, {:.1} s", m.steps, m.duration);
    let pct = |f: Option<f64>| f.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
    println!(
        "tracking rmse: vx {:.4} ({} of range), omega {:.4} ({} of range)",
        m.tracking_rmse.vx,
        pct(m.tracking_rmse_vx_fraction),
        m.tracking_rmse.omega,
        pct(m.tracking_rmse_omega_fraction)
    );
    println!("vy estimation rmse: {:.4}", m.estimation_rmse.vy);
    println!("input violations: {}", m.violations.total);
    println!(
        "mpc solve: mean {:.3} ms, p95 {:.3} ms; mhe solve: mean {:.3} ms, p95 {:.3} ms",
        m.mpc_solve_ms.mean, m.mpc_solve_ms.p95, m.mhe_solve_ms.mean, m.mhe_solve_ms.p95
    );
    if m.mpc_fallbacks + m.mhe_fallbacks > 0 {
        println!(
            "fallbacks: mpc {}, mhe {}",
            m.mpc_fallbacks, m.mhe_fallbacks
        );
    }
}

fn run(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let model = load_run_model(&cfg, c)?;
    let profile = cfg.reference_profile().map_err(config_err)?;
    check_profile(&profile, &model).map_err(config_err)?;
    let out = out_dir(c)?;
    let log = run_closed_loop(&cfg, &model, &profile).map_err(other)?;
    log.write_csv(out.join("runlog.csv")).map_err(other)?;
    save_model(&model, out.join("model.json")).map_err(other)?;
    if log.is_empty() {
        return Err(Failure::Abort(
            log.aborted.unwrap_or_else(|| "no steps were run".into()),
        ));
    }
    let metrics = compute_metrics(&log, &cfg.mpc.bounds).map_err(other)?;
    metrics.save(out.join("metrics.json")).map_err(other)?;
    print_metrics(&metrics);
    match log.aborted {
        Some(reason) => Err(Failure::Abort(reason)),
        None => Ok(()),
    }
}

fn report(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let path = c.out.join("runlog.csv");
    if !path.exists() {
        return Err(Failure::Config(format!(
            "no run log at {}; run `tsdrive run` first",
            path.display()
        )));
    }
    let log = RunLog::read_csv(&path).map_err(other)?;
    let metrics = compute_metrics(&log, &cfg.mpc.bounds).map_err(other)?;
    metrics.save(c.out.join("metrics.json")).map_err(other)?;
    write_plot_table(&log, &c.out.join("tracking.csv"))?;
    print_metrics(&metrics);
    Ok(())
}

/// References, true and estimated states and inputs against time.
fn write_plot_table(log: &RunLog, path: &Path) -> Outcome {
    let mut text = String::from("t,vx_ref,vx,vx_hat,omega_ref,omega,omega_hat,vy,vy_hat,delta,a\n");
    for r in &log.records {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.vx_ref,
            r.vx,
            r.vx_hat,
            r.omega_ref,
            r.omega,
            r.omega_hat,
            r.vy,
            r.vy_hat,
            r.delta,
            r.a
        ));
    }
    fs::write(path, text).map_err(|e| other(format!("{}: {e}", path.display())))
}
