use std::fs::File;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use awareness_core::agent::{simulate_session, SyntheticAgent, WtpPolicy};
use awareness_core::dataset::{
    load_external, load_records_from_path, map_external, save_records, summarize, CentralTendency,
    ExternalMapping, SummaryOptions,
};
use awareness_core::discounting::{Beliefs, QhdParams};
use awareness_core::elicitation::SessionConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::api::router;
use crate::store::SessionService;

#[derive(Debug, Parser)]
#[command(
    name = "awareness",
    version,
    about = "Present-bias awareness elicitation: simulate, estimate, serve"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a population of synthetic subjects and write their records as CSV.
    Simulate(SimulateArgs),
    /// Estimate awareness for every record in a CSV and print the summary.
    Estimate(EstimateArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Convert external study rows into the record CSV format.
    MapExternal(MapExternalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = 100.0)]
    pub ss_amount: f64,
    #[arg(long, default_value_t = 110.0)]
    pub ll_amount: f64,
    #[arg(long, default_value_t = 0)]
    pub epsilon_days: u32,
    #[arg(long, default_value_t = 1)]
    pub initial_delay_days: u32,
    #[arg(long, default_value_t = 1)]
    pub step_days: u32,
    #[arg(long, default_value_t = 365)]
    pub max_delay_days: u32,
    #[arg(long, default_value = "USD")]
    pub currency_label: String,
    #[arg(long, default_value_t = 0.88)]
    pub beta_assumed: f64,
}

impl ConfigArgs {
    pub fn to_config(&self) -> SessionConfig {
        SessionConfig {
            ss_amount: self.ss_amount,
            ll_amount: self.ll_amount,
            epsilon_days: self.epsilon_days,
            initial_delay_days: self.initial_delay_days,
            step_days: self.step_days,
            max_delay_days: self.max_delay_days,
            currency_label: self.currency_label.clone(),
            beta_assumed: self.beta_assumed,
            ..SessionConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Exact,
    Fraction,
    Refuse,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, short, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.92)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 0.9)]
    pub delta_min: f64,
    #[arg(long, default_value_t = 0.999)]
    pub delta_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p_max: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Exact)]
    pub policy: PolicyArg,
    /// Used with `--policy fraction`.
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, env = "AWARENESS_BETA", default_value_t = 0.88)]
    pub beta: f64,
    /// Report medians rather than means for the D* and FD* columns.
    #[arg(long)]
    pub median: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Defaults to stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "AWARENESS_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "AWARENESS_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "AWARENESS_BETA", default_value_t = 0.88)]
    pub beta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct MapExternalArgs {
    /// CSV with columns subject_id, gender, choice, delay_days, front_end_delay_days, cost.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20_000.0)]
    pub fx_rate: f64,
    #[arg(long, default_value_t = 4)]
    pub ss_bucket_max_days: u32,
    #[arg(long, default_value_t = 100.0)]
    pub ss_amount: f64,
    #[arg(long, default_value_t = 110.0)]
    pub ll_amount: f64,
    #[arg(long, default_value_t = 2.0)]
    pub commitment_cost: f64,
    #[arg(long, default_value_t = 2.0)]
    pub flexibility_cost: f64,
    #[arg(long, env = "AWARENESS_BETA", default_value_t = 0.88)]
    pub beta: f64,
    #[arg(long, default_value = "Rials")]
    pub currency_label: String,
}

pub type CliResult<T = ()> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

pub fn run_simulate(args: &SimulateArgs) -> CliResult<usize> {
    let config = args.config.to_config();
    config.validate()?;
    let policy = match args.policy {
        PolicyArg::Exact => WtpPolicy::PayExactExpectedValue,
        PolicyArg::Fraction => WtpPolicy::PayFraction(args.fraction),
        PolicyArg::Refuse => WtpPolicy::RefuseAll,
    };
    let range = |name: &str, lo: f64, hi: f64| -> CliResult<(f64, f64)> {
        if lo <= hi {
            Ok((lo, hi))
        } else {
            Err(format!("--{name}-min must not exceed --{name}-max").into())
        }
    };
    let (b_lo, b_hi) = range("beta", args.beta_min, args.beta_max)?;
    let (d_lo, d_hi) = range("delta", args.delta_min, args.delta_max)?;
    let (p_lo, p_hi) = range("p", args.p_min, args.p_max)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut records = Vec::with_capacity(args.n);
    for i in 0..args.n {
        let beta = rng.gen_range(b_lo..=b_hi);
        let delta = rng.gen_range(d_lo..=d_hi);
        let p_hat = rng.gen_range(p_lo..=p_hi);
        let params = QhdParams::new(beta, delta)?;
        let agent = SyntheticAgent::new(params, Beliefs::new(beta, p_hat)?, policy)?
            .with_noise(args.noise)?;
        records.push(simulate_session(
            &agent,
            config.clone(),
            args.seed.wrapping_add(i as u64),
        )?);
    }
    save_records(&args.out, &records)?;
    Ok(records.len())
}

pub fn run_estimate(
    args: &EstimateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult {
    let report = load_records_from_path(&args.input)?;
    for e in &report.row_errors {
        writeln!(stderr, "line {}: {}", e.line, e.message)?;
    }
    for w in &report.warnings {
        writeln!(stderr, "warning: {w}")?;
    }
    let options = SummaryOptions {
        day_columns: if args.median {
            CentralTendency::Median
        } else {
            CentralTendency::Mean
        },
    };
    let summary = summarize(&report.records, args.beta, options)?;
    let text = match args.format {
        Format::Text => summary.to_string(),
        Format::Json => serde_json::to_string_pretty(&summary)? + "\n",
    };
    match &args.out {
        Some(path) => File::create(path)?.write_all(text.as_bytes())?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn run_map_external(args: &MapExternalArgs, stderr: &mut dyn Write) -> CliResult<usize> {
    let rows = load_external(File::open(&args.input)?)?;
    let mapping = ExternalMapping {
        fx_rate: args.fx_rate,
        ss_bucket_max_days: args.ss_bucket_max_days,
        ss_amount: args.ss_amount,
        ll_amount: args.ll_amount,
        commitment_cost: args.commitment_cost,
        flexibility_cost: args.flexibility_cost,
        beta_assumed: args.beta,
        currency_label: args.currency_label.clone(),
    };
    let (records, errors) = map_external(&rows, &mapping)?;
    for e in &errors {
        writeln!(stderr, "line {}: {}", e.line, e.message)?;
    }
    save_records(&args.out, &records)?;
    Ok(records.len())
}

pub async fn run_serve(args: &ServeArgs) -> CliResult {
    let service = Arc::new(SessionService::open(&args.data_dir, args.beta)?);
    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

pub async fn run(cli: Cli) -> CliResult {
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    match cli.command {
        Command::Simulate(args) => {
            let n = run_simulate(&args)?;
            eprintln!("wrote {n} records to {}", args.out.display());
        }
        Command::Estimate(args) => run_estimate(&args, &mut stdout, &mut stderr)?,
        Command::Serve(args) => run_serve(&args).await?,
        Command::MapExternal(args) => {
            let n = run_map_external(&args, &mut stderr)?;
            eprintln!("wrote {n} records to {}", args.out.display());
        }
    }
    Ok(())
}
