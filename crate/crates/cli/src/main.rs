#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::XiPolicy;

/// Learn mixtures of discrete graphical models from samples.
#[derive(Parser, Debug)]
#[command(name = "mixgraph", version)]
struct Cli {
    /// worker threads (defaults to all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// more log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a random mixture and samples from it
    Generate(GenerateArgs),
    /// Estimate the union graph, component marginals and trees
    Learn(LearnArgs),
    /// Score a learn report against a model
    Eval(EvalArgs),
    /// Evaluate assumption quantities of a model
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// generator settings as JSON; flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    /// tree, bounded_degree or product
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub max_degree: Option<usize>,
    /// natural parameter range as `lo,hi`
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub strength: Option<Vec<f64>>,
    #[arg(long)]
    pub eta: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// defaults to --seed
    #[arg(long)]
    pub sample_seed: Option<u64>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    #[arg(long)]
    pub diagnostics_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LearnArgs {
    /// learn config as JSON, or a previous report whose config is reused
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// use exact statistics of --model instead of samples
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub eta: Option<usize>,
    #[arg(long)]
    pub gamma: Option<usize>,
    /// fixed rank threshold (implies --xi-policy fixed)
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long, value_enum)]
    pub xi_policy: Option<XiPolicy>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tree_fast_path: bool,
    #[arg(long)]
    pub rotation_seed: Option<u64>,
    /// also estimate per-component graphs with this ℓ₁ threshold
    #[arg(long)]
    pub component_graphs: Option<f64>,
    #[arg(long)]
    pub enumeration_cap: Option<usize>,
    /// report path (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub eta: Option<usize>,
    #[arg(long)]
    pub gamma: Option<usize>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
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
            return ExitCode::from(commands::EXIT_CONFIG);
        }
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Learn(a) => commands::learn(a),
        Command::Eval(a) => commands::eval(a),
        Command::Diagnose(a) => commands::diagnose(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
