//! `nethac`: simulate binary-choice interaction models on spatial networks,
//! fit probit/logit pseudo-ML with HAC standard errors, and run the Monte
//! Carlo studies.
//!
//! Errors exit nonzero with a single machine-readable line on stderr:
//! `error code=E_... msg="..."`.

mod bundle;
mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nethac_core::mc::StudyKind;
use nethac_core::par::with_workers;
use nethac_core::simsocial::ErrorDesign;
use nethac_core::CoreError;

#[derive(Parser)]
#[command(
    name = "nethac",
    about = "Social-interaction simulation and HAC inference on a single spatial network",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a network and simulated outcome panel as CSV files.
    Simulate(SimulateArgs),
    /// Fit a probit/logit regression and report HAC standard errors.
    Estimate(EstimateArgs),
    /// Compute a HAC variance estimate for a network moment.
    Hac(HacArgs),
    /// Run the probit Monte Carlo study.
    McProbit(McArgs),
    /// Run the weighted-outcome moment Monte Carlo study.
    McMoment(McArgs),
}

fn parse_error_design(s: &str) -> Result<ErrorDesign, String> {
    match s {
        "iid" => Ok(ErrorDesign::Iid),
        "neighbor_avg_weighted" => Ok(ErrorDesign::NeighborAvgWeighted),
        other => Err(format!(
            "unknown error design '{other}' (expected iid or neighbor_avg_weighted)"
        )),
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Number of agents.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Spatial dimension.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Density constant in the position scale (n/kappa)^(1/d).
    #[arg(long, default_value_t = nethac_core::mc::DEFAULT_KAPPA)]
    pub kappa: f64,
    /// Link threshold of the random geometric graph.
    #[arg(long, default_value_t = 1.0)]
    pub rgg_threshold: f64,
    /// Number of post-initial periods (the panel has T+1 periods).
    #[arg(long = "T", default_value_t = 1)]
    pub t: usize,
    /// Intercept (default 0.5, or `[model] beta1` from --config).
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    /// Covariate coefficient (default -0.3).
    #[arg(long, allow_hyphen_values = true)]
    pub beta2: Option<f64>,
    /// Peer coefficient (default 1.0).
    #[arg(long, allow_hyphen_values = true)]
    pub beta3: Option<f64>,
    /// Shock construction: iid or neighbor_avg_weighted.
    #[arg(long, value_parser = parse_error_design)]
    pub error_design: Option<ErrorDesign>,
    /// Simulate the static model by best response from all-ones instead of
    /// the dynamic panel.
    #[arg(long)]
    pub r#static: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub nodes: PathBuf,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Regression period: Y^t on (1, X^t, neighbor mean Y^(t-1)).
    #[arg(long = "T", default_value_t = 1)]
    pub t: usize,
    /// probit or logit (default probit, or `[model] link` from --config).
    #[arg(long)]
    pub link: Option<String>,
    /// HAC method(s): iid, spatial, network, generalized_spatial. Repeatable.
    #[arg(long)]
    pub method: Vec<String>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Comma-separated bandwidth grid; 0 maps to i.i.d. standard errors.
    #[arg(long)]
    pub bandwidth_grid: Option<String>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub theta_kernel: Option<String>,
    #[arg(long)]
    pub theta_bandwidth: Option<f64>,
    /// Centering: sample_mean, zero, or a comma-separated constant vector
    /// (default zero: scores are mean zero at the optimum).
    #[arg(long)]
    pub center: Option<String>,
    /// Eigenvalue floor; a bare --psd-floor uses the reference value 0.1.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.1")]
    pub psd_floor: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct HacArgs {
    #[arg(long)]
    pub nodes: PathBuf,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Moment kind: choice_prob, weighted_outcome, dyad_11,
    /// intransitive_triad_000, asf_bounds.
    #[arg(long)]
    pub moment: String,
    /// Panel period the moment refers to.
    #[arg(long = "T", default_value_t = 1)]
    pub t: usize,
    /// Query point for asf_bounds (comma-separated, covariates then peer mean).
    #[arg(long)]
    pub asf_x: Option<String>,
    /// iid, spatial, network, or generalized_spatial.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub theta_bandwidth: Option<f64>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub theta_kernel: Option<String>,
    #[arg(long)]
    pub center: Option<String>,
    /// Eigenvalue floor; a bare --psd-floor uses the reference value 0.1.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.1")]
    pub psd_floor: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct McArgs {
    /// Sample size(s); repeatable.
    #[arg(long)]
    pub n: Vec<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub oracle_reps: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Comma-separated subset of naive,spatial,network,generalized_spatial,oracle.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub kernel: Option<String>,
    /// Use the full-scale replication counts (15000 / 7500).
    #[arg(long)]
    pub full_scale: bool,
    /// Hold one network per n fixed across replications.
    #[arg(long)]
    pub fixed_network: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Checkpoint file for resumable runs.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for report.{txt,csv,json} and manifest.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let file = config::load(args.config.as_deref())?;
            let seed = config::resolve_seed(args.seed, &file)?;
            commands::cmd_simulate(&args, &file, seed)
        }
        Command::Estimate(args) => {
            let file = config::load(args.config.as_deref())?;
            commands::cmd_estimate(&args, &file)
        }
        Command::Hac(args) => {
            let file = config::load(args.config.as_deref())?;
            commands::cmd_hac(&args, &file)
        }
        Command::McProbit(args) => {
            let file = config::load(args.config.as_deref())?;
            let seed = config::resolve_seed(args.seed, &file)?;
            let cfg = commands::build_mc_config(&args, &file, seed)?;
            with_workers(args.workers, || {
                commands::cmd_mc(&args, StudyKind::Probit, &cfg)
            })
        }
        Command::McMoment(args) => {
            let file = config::load(args.config.as_deref())?;
            let seed = config::resolve_seed(args.seed, &file)?;
            let cfg = commands::build_mc_config(&args, &file, seed)?;
            with_workers(args.workers, || {
                commands::cmd_mc(&args, StudyKind::WeightedOutcome, &cfg)
            })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let code = err
            .downcast_ref::<CoreError>()
            .map(CoreError::code)
            .unwrap_or("E_CLI");
        eprintln!("error code={code} msg={:?}", err.to_string());
        std::process::exit(1);
    }
}
