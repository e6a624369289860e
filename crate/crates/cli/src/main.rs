//! `cyltomo`: run, sweep and verify cylindrical travel-time tomography experiments.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 configuration error, 3 numerical failure.
//! `CYLTOMO_WORKERS` sets the number of worker threads.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cyltomo::experiment::{
    forward, invert, run_experiment, sweep, sweep_csv, verify, write_forward, ExperimentConfig, ExperimentError,
    InverseInput, SweepParameter,
};
use cyltomo::geometry::CylinderSpec;
use cyltomo::inversion::reference::sample_u;
use cyltomo::io;
use cyltomo::phantom::InclusionSpec;

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "CYLTOMO_WORKERS";

#[derive(Parser)]
#[command(name = "cyltomo", version, about = "Travel-time tomography in a cylinder by convexification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward solve, inversion and report.
    Run(ConfigArgs),
    /// Inversions over several values of lambda or N on shared forward data.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        param: Param,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Property checks; prints a JSON bundle of pass/fail results.
    Verify(ConfigArgs),
    /// Generates phantom, travel-time tables and boundary traces only.
    Forward(ConfigArgs),
    /// Inverts traces saved by `forward`.
    Invert {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory written by `forward`.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint stem to resume from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Lambda,
    #[value(name = "N")]
    N,
}

#[derive(Clone, Copy, ValueEnum)]
enum Inclusion {
    LetterBVertical,
    LetterBHorizontal,
    LetterO,
    None,
}

/// Flags mirroring the keys of the experiment configuration; they override `--config`.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    forward_h: Option<f64>,
    #[arg(long)]
    inverse_h: Option<f64>,
    #[arg(long)]
    n_phi: Option<usize>,
    /// Number of basis functions.
    #[arg(long = "N", short = 'N')]
    n_basis: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    inclusion: Option<Inclusion>,
    /// Inclusion contrast c_a.
    #[arg(long)]
    contrast: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        let cyl = c.cylinder;
        c.cylinder =
            CylinderSpec { r: self.r.unwrap_or(cyl.r), eps: self.eps.unwrap_or(cyl.eps), b: self.b.unwrap_or(cyl.b) };
        macro_rules! set {
            ($($field:ident => $target:ident),*) => { $(if let Some(v) = self.$field.clone() { c.$target = v; })* };
        }
        set!(forward_h => forward_h, inverse_h => inverse_h, n_phi => n_phi, n_basis => n_basis, lambda => lambda,
             delta => delta, seed => seed, gamma => gamma, grad_tol => grad_tol, max_iters => max_iters,
             checkpoint_every => checkpoint_every);
        if let Some(dir) = &self.output_dir {
            c.output_dir = Some(dir.clone());
        }
        let contrast = self.contrast.or(c.inclusion.map(|i| i.contrast)).unwrap_or(1.5);
        match self.inclusion {
            Some(Inclusion::LetterBVertical) => c.inclusion = Some(InclusionSpec::letter_b_vertical(contrast)),
            Some(Inclusion::LetterBHorizontal) => c.inclusion = Some(InclusionSpec::letter_b_horizontal(contrast)),
            Some(Inclusion::LetterO) => c.inclusion = Some(InclusionSpec::letter_o(contrast)),
            Some(Inclusion::None) => c.inclusion = None,
            None => {
                if let (Some(inc), Some(ca)) = (c.inclusion.as_mut(), self.contrast) {
                    inc.contrast = ca;
                }
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn configure_workers() -> Result<(), ExperimentError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ExperimentError::Config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ExperimentError::Config(format!("worker pool: {e}")))
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn print_json<T: serde::Serialize>(value: &T) {
    emit(&serde_json::to_string_pretty(value).expect("serialisable"));
}

fn load_tables(dir: &Path) -> Result<Vec<cyltomo::eikonal::TravelTimeTable>, ExperimentError> {
    let mut stems: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| p.with_extension(""))
        .collect();
    stems.sort();
    stems.iter().map(|s| io::read_table(s).map_err(ExperimentError::from)).collect()
}

fn execute(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let out = run_experiment(&config)?;
            print_json(&out.metrics);
        }
        Command::Sweep { config, param, values } => {
            let config = config.resolve()?;
            let param = match param {
                Param::Lambda => SweepParameter::Lambda,
                Param::N => SweepParameter::N,
            };
            let rows = sweep(&config, param, &values)?;
            emit(sweep_csv(&config, param, &rows).trim_end());
        }
        Command::Verify(args) => {
            let config = args.resolve()?;
            let diagnostics = verify(&config);
            if let Some(dir) = &config.output_dir {
                std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(e.to_string()))?;
                let text = serde_json::to_string_pretty(&diagnostics).expect("serialisable");
                std::fs::write(dir.join("diagnostics.json"), text).map_err(|e| ExperimentError::Io(e.to_string()))?;
            }
            print_json(&diagnostics);
        }
        Command::Forward(args) => {
            let config = args.resolve()?;
            let dir = config
                .output_dir
                .clone()
                .ok_or_else(|| ExperimentError::Config("forward needs --output-dir".into()))?;
            let fwd = forward(&config)?;
            write_forward(&dir, &config, &fwd)?;
            eprintln!("wrote {} sources to {}", fwd.tables.len(), dir.display());
        }
        Command::Invert { config, data, resume } => {
            let config = config.resolve()?;
            let traces = io::read_boundary(&data.join("boundary_data"))?;
            if traces.grid != config.cyl_grid()? {
                return Err(ExperimentError::Config("saved traces were generated on a different inverse grid".into()));
            }
            let truth = io::read_refractive(&data.join("n_true")).ok();
            let cart = match &truth {
                Some(t) => t.grid.clone(),
                None => config.cart_grid()?,
            };
            let tables_dir = data.join("tables");
            let u_ref =
                if tables_dir.is_dir() { Some(sample_u(&load_tables(&tables_dir)?, &traces.grid)?) } else { None };
            let resume = match resume {
                Some(stem) => {
                    let (v, h, _) = io::read_checkpoint(&stem)?;
                    Some((v, h))
                }
                None => None,
            };
            let input = InverseInput { data: &traces, cart: &cart, truth: truth.as_ref(), u_ref: u_ref.as_ref() };
            let out = invert(&config, input, resume)?;
            print_json(&out.metrics);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|_| execute(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
