use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use epimob::error::Error;
use epimob::od::Level;
use epimob::pipeline::{exit_code, run_stage, run_synthetic, PipelineConfig, Stage, StageReport};

#[derive(Parser)]
#[command(name = "epimob", version, about = "Mobility, R_t and functional regression pipeline")]
struct Cli {
    /// Pipeline configuration (TOML, one section per stage).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output location: the run directory for `simulate` and `run`, the
    /// stage's own file or directory otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Origin-destination flows.
    Flows {
        #[command(subcommand)]
        action: FlowsAction,
    },
    /// Write a synthetic ensemble (cases, mobility, truth, population).
    Simulate {
        /// Scenario file; same format as --config.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Estimate R_t from case series.
    Rt(RtArgs),
    /// Smoothing, covariance component and registration.
    Fda {
        #[command(subcommand)]
        action: FdaAction,
    },
    /// Function-on-function regression on the registered curves.
    Fof(FofArgs),
    /// Delay in mobility reduction against cumulative incidence.
    Delay(DelayArgs),
    /// Charts and their CSVs.
    Report,
    /// Simulate, then run every analysis stage.
    Run,
}

#[derive(Subcommand)]
enum FlowsAction {
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        input_level: Option<Level>,
        #[arg(long)]
        level: Option<Level>,
        #[arg(long)]
        threshold: Option<u64>,
    },
}

#[derive(Args)]
struct RtArgs {
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long)]
    shape: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Half-width of the case smoothing window (0 disables it).
    #[arg(long)]
    smooth: Option<usize>,
}

#[derive(Subcommand)]
enum FdaAction {
    Smooth {
        #[arg(long)]
        rt: Option<PathBuf>,
        #[arg(long)]
        mob: Option<PathBuf>,
        #[arg(long)]
        n_basis: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
    },
    Fcc,
    Register {
        #[arg(long)]
        cap: Option<f64>,
    },
}

#[derive(Args)]
struct FofArgs {
    #[arg(long)]
    lag: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    ks: Option<usize>,
    #[arg(long)]
    kt: Option<usize>,
    /// Covariate table for the first-principal-component term.
    #[arg(long)]
    pc1: Option<PathBuf>,
    #[arg(long)]
    fda: Option<PathBuf>,
}

#[derive(Args)]
struct DelayArgs {
    #[arg(long)]
    rt: Option<PathBuf>,
    #[arg(long)]
    mob: Option<PathBuf>,
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long)]
    pop: Option<PathBuf>,
    #[arg(long)]
    as_of: Option<NaiveDate>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig, Error> {
    path.map_or_else(|| Ok(PipelineConfig::default()), |p| PipelineConfig::load(p))
}

fn dispatch(cli: Cli) -> Result<Vec<StageReport>, Error> {
    let mut cfg = load_config(cli.config.as_ref())?;
    set(&mut cfg.seed, cli.seed);
    let out = cli.out;
    let stage = match cli.command {
        Command::Flows { action: FlowsAction::Ingest { input, hierarchy, input_level, level, threshold } } => {
            set_opt(&mut cfg.paths.od, input);
            set_opt(&mut cfg.paths.hierarchy, hierarchy);
            set(&mut cfg.flows.input_level, input_level);
            set_opt(&mut cfg.flows.level, level);
            set(&mut cfg.flows.threshold, threshold);
            set_opt(&mut cfg.paths.mobility, out);
            Stage::FlowsIngest
        }
        Command::Simulate { scenario } => {
            if let Some(path) = scenario {
                cfg.simulate = PipelineConfig::load(&path)?.simulate;
            }
            set(&mut cfg.out, out);
            Stage::Simulate
        }
        Command::Rt(a) => {
            set_opt(&mut cfg.paths.cases, a.cases);
            set(&mut cfg.rt.shape, a.shape);
            set(&mut cfg.rt.rate, a.rate);
            set(&mut cfg.rt.iterations, a.iterations);
            set(&mut cfg.rt.burn_in, a.burn_in);
            set(&mut cfg.rt.smooth_half_width, a.smooth);
            set_opt(&mut cfg.paths.rt, out);
            Stage::Rt
        }
        Command::Fda { action } => {
            set_opt(&mut cfg.paths.fda, out);
            match action {
                FdaAction::Smooth { rt, mob, n_basis, order } => {
                    set_opt(&mut cfg.paths.rt, rt);
                    set_opt(&mut cfg.paths.mobility, mob);
                    set(&mut cfg.fda.n_basis, n_basis);
                    set(&mut cfg.fda.order, order);
                    Stage::FdaSmooth
                }
                FdaAction::Fcc => Stage::FdaFcc,
                FdaAction::Register { cap } => {
                    set(&mut cfg.fda.cap, cap);
                    Stage::FdaRegister
                }
            }
        }
        Command::Fof(a) => {
            set(&mut cfg.fof.lag, a.lag);
            set(&mut cfg.fof.level, a.level);
            set(&mut cfg.fof.ks, a.ks);
            set(&mut cfg.fof.kt, a.kt);
            set_opt(&mut cfg.paths.covariates, a.pc1);
            set_opt(&mut cfg.paths.fda, a.fda);
            set_opt(&mut cfg.paths.fof, out);
            Stage::Fof
        }
        Command::Delay(a) => {
            set_opt(&mut cfg.paths.rt, a.rt);
            set_opt(&mut cfg.paths.mobility, a.mob);
            set_opt(&mut cfg.paths.cases, a.cases);
            set_opt(&mut cfg.paths.population, a.pop);
            set(&mut cfg.delay.as_of, a.as_of);
            set_opt(&mut cfg.paths.delay, out);
            Stage::Delay
        }
        Command::Report => {
            set_opt(&mut cfg.paths.report, out);
            Stage::Report
        }
        Command::Run => {
            set(&mut cfg.out, out);
            return run_synthetic(&cfg);
        }
    };
    run_stage(stage, &cfg).map(|r| vec![r])
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(reports) => {
            for r in &reports {
                for w in &r.warnings {
                    eprintln!("warning: {w}");
                }
                eprintln!("wrote {} files", r.outputs.len());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
