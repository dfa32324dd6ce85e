//! Command-line front end: configure, integrate, minimize, probe stability,
//! evaluate integrability criteria, and digest recorded histories.
//!
//! Every failure exits non-zero with a single machine-parsable line on
//! stderr: `error[<class>]: <message>`. Experiment subcommands exit 0 when
//! the experiment passed and 3 when it ran to completion but failed its
//! acceptance condition.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use vesiflow::checkpoint;
use vesiflow::config::{InitialCondition, InitialVelocity, RunConfig};
use vesiflow::csvio;
use vesiflow::diagnostics::{compute_record, CriterionKind, CriterionSpec};
use vesiflow::dynamics::{stationary_solve, SimState, StationaryOptions, Stepper};
use vesiflow::error::{Error, Result};
use vesiflow::experiments::{exp_stability, write_report, StabilityOptions};
use vesiflow::field::VectorField;
use vesiflow::report::{summarize, write_plot_csv};

#[derive(Parser)]
#[command(
    name = "vesiflow",
    about = "Pseudo-spectral solver and verification harness for a coupled membrane / flow model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system and record diagnostics.
    Simulate(SimulateArgs),
    /// Relax the configured initial phase field to a stationary state.
    Minimize(MinimizeArgs),
    /// Perturb a stationary state at several amplitudes and track the
    /// distance to it.
    Stability(StabilityArgs),
    /// Validate integrability criteria and evaluate their integrals on a
    /// recorded history.
    Criteria(CriteriaArgs),
    /// Summarize a recorded diagnostics history.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonOverrides {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override run.t_end.
    #[arg(long)]
    t_end: Option<f64>,
    /// Override step.dt.
    #[arg(long)]
    dt: Option<f64>,
    /// Override run.output_dir.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override run.record_every.
    #[arg(long)]
    record_every: Option<usize>,
    /// Override the seed of random initial data (phase field seed; the
    /// velocity seed is derived from it).
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonOverrides {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "--t-end".into(),
                    constraint: format!("must be finite and >= 0, got {t}"),
                });
            }
            cfg.t_end = t;
        }
        if let Some(dt) = self.dt {
            cfg.step.dt = dt;
            cfg.step.validate()?;
        }
        if let Some(dir) = &self.output {
            cfg.output_dir = dir.clone();
        }
        if let Some(n) = self.record_every {
            if n == 0 {
                return Err(Error::InvalidParameter {
                    name: "--record-every".into(),
                    constraint: "must be >= 1".into(),
                });
            }
            cfg.record_every = n;
        }
        if let Some(seed) = self.seed {
            let mut applied = false;
            if let InitialCondition::Random { seed: s, .. } = &mut cfg.initial_condition {
                *s = seed;
                applied = true;
            }
            if let InitialVelocity::RandomSolenoidal { seed: s, .. } = &mut cfg.initial_velocity {
                *s = seed.wrapping_add(1000);
                applied = true;
            }
            if !applied {
                println!("note: --seed ignored (no random initial data configured)");
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonOverrides,
    /// Resume from a checkpoint (overrides the configured initial condition).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct MinimizeArgs {
    #[command(flatten)]
    common: CommonOverrides,
    /// Residual tolerance of the stationary solve.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    common: CommonOverrides,
    /// Comma-separated perturbation amplitudes, e.g. 1e-3,1e-2,1e-1.
    #[arg(long, value_delimiter = ',', required = true)]
    sigmas: Vec<f64>,
}

#[derive(Args)]
struct CriteriaArgs {
    /// Criterion as kind:p:s, e.g. serrin_gradient:4:4 or serrin_velocity:inf:2.
    /// Repeatable.
    #[arg(long = "spec", required = true)]
    specs: Vec<String>,
    /// Recorded diagnostics CSV to integrate over (omit to only validate).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Recorded diagnostics CSV.
    #[arg(long)]
    input: PathBuf,
    /// Run configuration (supplies the constants entering eta).
    #[arg(long)]
    config: PathBuf,
    /// Where to write summary.txt and plot.csv (default: alongside input).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', "; ");
            eprintln!("error[{}]: {}", e.class(), msg);
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Minimize(args) => minimize(args),
        Command::Stability(args) => stability(args),
        Command::Criteria(args) => criteria(args),
        Command::Report(args) => report(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<i32> {
    let mut cfg = args.common.load()?;
    if let Some(path) = &args.resume {
        if !path.is_file() {
            return Err(Error::Checkpoint(format!(
                "checkpoint {} does not exist",
                path.display()
            )));
        }
        cfg.initial_condition = InitialCondition::FromCheckpoint { path: path.clone() };
    }
    let prepared = cfg.build_initial()?;
    for note in &prepared.notes {
        println!("note: {note}");
    }
    let params = prepared.params;
    let hash = cfg.params_hash(&params);
    std::fs::create_dir_all(&cfg.output_dir)?;

    let t0 = prepared.state.t;
    if cfg.t_end < t0 {
        return Err(Error::InvalidParameter {
            name: "run.t_end".into(),
            constraint: format!("must be >= the initial time {t0}, got {}", cfg.t_end),
        });
    }
    let n_steps = ((cfg.t_end - t0) / cfg.step.dt - 1e-9).ceil().max(0.0) as u64;

    let mut stepper = Stepper::resume(prepared.state, prepared.prev, params, cfg.step, cfg.mode)?;
    let mut records = vec![compute_record(stepper.state(), &params, &cfg.criteria)?];
    for i in 1..=n_steps {
        stepper.step()?;
        if i % cfg.record_every as u64 == 0 || i == n_steps {
            records.push(compute_record(stepper.state(), &params, &cfg.criteria)?);
        }
        if cfg.checkpoint_every > 0 && i % cfg.checkpoint_every as u64 == 0 && i != n_steps {
            let path = cfg.output_dir.join(format!("checkpoint_step_{i}.vfcp"));
            checkpoint::save(&path, stepper.state(), stepper.prev_state(), hash)?;
        }
    }

    let diag_path = cfg.output_dir.join("diagnostics.csv");
    csvio::write_diagnostics(&diag_path, &records)?;
    let ckpt_path = cfg.output_dir.join("checkpoint.vfcp");
    checkpoint::save(&ckpt_path, stepper.state(), stepper.prev_state(), hash)?;

    let summary = summarize(&records, &params)?;
    let summary_path = cfg.output_dir.join("summary.txt");
    std::fs::write(&summary_path, summary.to_text())?;
    print!("{}", summary.to_text());
    println!("wrote {}", diag_path.display());
    println!("wrote {}", ckpt_path.display());
    println!("wrote {}", summary_path.display());
    Ok(0)
}

fn minimize(args: MinimizeArgs) -> Result<i32> {
    let cfg = args.common.load()?;
    let prepared = cfg.build_initial()?;
    for note in &prepared.notes {
        println!("note: {note}");
    }
    let params = prepared.params;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let opts = StationaryOptions {
        tol: args.tol.unwrap_or(1e-6),
        ..StationaryOptions::default()
    };

    let outcome = stationary_solve(&prepared.state.phi, &params, &opts)?;
    let failed = !outcome.converged;
    if failed {
        println!(
            "note: not converged after {} iterations (residual {:.6e}); saving the best state",
            outcome.iterations, outcome.residual
        );
    }

    let hist_path = cfg.output_dir.join("minimize_history.csv");
    let iters: Vec<f64> = (0..outcome.energy_history.len()).map(|i| i as f64).collect();
    csvio::write_table(
        &hist_path,
        &[
            ("iteration", &iters),
            ("energy", &outcome.energy_history),
            ("residual", &outcome.residual_history),
        ],
    )?;
    let state = SimState::new(
        VectorField::zeros(outcome.phi.grid().clone()),
        outcome.phi.clone(),
        0.0,
    )?;
    let ckpt_path = cfg.output_dir.join("stationary.vfcp");
    checkpoint::save(&ckpt_path, &state, None, cfg.params_hash(&params))?;

    println!(
        "stationary solve: converged = {}, residual = {:.6e}, energy = {:.16e}, iterations = {}",
        outcome.converged, outcome.residual, outcome.energy, outcome.iterations
    );
    println!("wrote {}", hist_path.display());
    println!("wrote {}", ckpt_path.display());
    if failed {
        return Err(Error::NonConverged {
            residual: outcome.residual,
            iterations: outcome.iterations,
            best: Box::new(outcome),
        });
    }
    Ok(0)
}

fn stability(args: StabilityArgs) -> Result<i32> {
    let cfg = args.common.load()?;
    let prepared = cfg.build_initial()?;
    for note in &prepared.notes {
        println!("note: {note}");
    }
    let params = prepared.params;
    std::fs::create_dir_all(&cfg.output_dir)?;

    println!("relaxing the configured initial data to a stationary state...");
    let solve = stationary_solve(&prepared.state.phi, &params, &StationaryOptions::default())?;
    println!(
        "stationary state: residual = {:.6e}, energy = {:.16e}",
        solve.residual, solve.energy
    );

    let opts = StabilityOptions {
        dt: cfg.step.dt,
        record_every: cfg.record_every,
        ..StabilityOptions::default()
    };
    let rep = exp_stability(
        &solve.phi,
        &params,
        &args.sigmas,
        cfg.t_end,
        &opts,
        Some(&cfg.output_dir),
    )?;
    let path = write_report(&rep, &cfg.output_dir)?;
    print_report(&rep);
    println!("wrote {}", path.display());
    Ok(if rep.passed { 0 } else { 3 })
}

fn parse_spec(s: &str) -> Result<CriterionSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = |why: String| Error::InvalidParameter {
        name: format!("--spec {s}"),
        constraint: why,
    };
    if parts.len() != 3 {
        return Err(bad("expected kind:p:s".into()));
    }
    let kind = CriterionKind::parse(parts[0]).ok_or_else(|| {
        bad(format!(
            "unknown kind {}; expected serrin_gradient, serrin_velocity, log_gradient, or log_velocity",
            parts[0]
        ))
    })?;
    let num = |txt: &str| -> Result<f64> {
        if txt == "inf" {
            return Ok(f64::INFINITY);
        }
        txt.parse::<f64>()
            .map_err(|e| bad(format!("cannot parse exponent {txt}: {e}")))
    };
    CriterionSpec::new(kind, num(parts[1])?, num(parts[2])?)
}

fn criteria(args: CriteriaArgs) -> Result<i32> {
    let mut specs = Vec::new();
    for raw in &args.specs {
        let spec = parse_spec(raw)?;
        println!("valid: {}", spec.id());
        specs.push(spec);
    }
    if let Some(input) = &args.input {
        let records = csvio::read_diagnostics(input)?;
        for spec in &specs {
            let v = vesiflow::diagnostics::criterion_integral(&records, spec)?;
            println!("integral {} = {:.16e}", spec.id(), v);
        }
    }
    Ok(0)
}

fn report(args: ReportArgs) -> Result<i32> {
    let cfg = RunConfig::load(&args.config)?;
    let records = csvio::read_diagnostics(&args.input)?;
    let summary = summarize(&records, &cfg.model)?;
    let out_dir = args.output.unwrap_or_else(|| {
        args.input
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    std::fs::create_dir_all(&out_dir)?;
    let summary_path = out_dir.join("summary.txt");
    std::fs::write(&summary_path, summary.to_text())?;
    let plot_path = out_dir.join("plot.csv");
    write_plot_csv(&plot_path, &records, summary.eta)?;
    print!("{}", summary.to_text());
    println!("wrote {}", summary_path.display());
    println!("wrote {}", plot_path.display());
    Ok(0)
}

fn print_report(rep: &vesiflow::experiments::ExperimentReport) {
    println!("experiment: {}", rep.name);
    println!("passed: {}", rep.passed);
    for (k, v) in &rep.metrics {
        println!("metric {k} = {v:.16e}");
    }
    for n in &rep.notes {
        println!("note: {n}");
    }
}
