use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorenz_ssm::{LorenzFamily, ProcessKind};

mod commands;
mod output;

#[derive(Parser)]
#[command(name = "lorenz-ssm", version, about = "Time-varying Lorenz curves from grouped income shares")]
struct Cli {
    /// Random seed for simulation and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for independent fits (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a grouped-share panel and write data.csv and truth.csv.
    Simulate {
        /// key=value settings file; omitted keys keep the built-in defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the state-space model. Lists of families or processes run in parallel.
    Fit {
        #[command(flatten)]
        common: FitArgs,
        /// One or more of ar, rw (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "ar")]
        process: Vec<ProcessKind>,
        /// Variance constant of the random-walk initial state.
        #[arg(long, default_value_t = 1e5)]
        c: f64,
        /// Keep the latent path of every n-th draw.
        #[arg(long, default_value_t = 10)]
        latent_every: usize,
    },
    /// Fit an independent Dirichlet model to each period.
    FitSeparate {
        #[command(flatten)]
        common: FitArgs,
    },
    /// Tabulate posterior predictive loss over fitted runs.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write plot-ready CSVs for one fitted run.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// truth.csv from `simulate`, for relative bias.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output directory (default: <run>/report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// One or more of ln, sm, da, ka, or, ra (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    family: Vec<LorenzFamily>,
    #[arg(long, default_value_t = 2000)]
    burnin: usize,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    /// Prior mean of the curve coordinates (μ_j for the state-space model).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    prior_mean: f64,
    /// Prior variance of the curve coordinates.
    #[arg(long, default_value_t = 1.0)]
    prior_var: f64,
    /// Prior variance of ψ (state-space) or ln λ_t (separate fits).
    #[arg(long, default_value_t = 100.0)]
    lambda_prior_var: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let seed = cli.seed;
    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate(config.as_deref(), seed, &out),
        Command::Fit {
            common,
            process,
            c,
            latent_every,
        } => commands::fit(&common.into_request(seed), &process, c, latent_every),
        Command::FitSeparate { common } => commands::fit_separate(&common.into_request(seed)),
        Command::Compare { runs, out } => commands::compare(&runs, out.as_deref()),
        Command::Report { run, truth, out } => commands::report(&run, truth.as_deref(), out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

impl FitArgs {
    fn into_request(self, seed: Option<u64>) -> commands::FitRequest {
        commands::FitRequest {
            data: self.data,
            families: self.family,
            burnin: self.burnin,
            draws: self.draws,
            prior_mean: self.prior_mean,
            prior_var: self.prior_var,
            lambda_prior_var: self.lambda_prior_var,
            seed: seed.unwrap_or(0),
            out: self.out,
        }
    }
}
