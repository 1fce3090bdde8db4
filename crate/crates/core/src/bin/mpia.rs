use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mpia::harness::{self, Algorithm, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "mpia",
    version,
    about = "Interference alignment by min-sum message passing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One channel realization; writes trajectory.csv.
    RunSingle(ConfigArgs),
    /// Monte-Carlo sweep; writes final.csv and aggregate.json.
    RunMontecarlo(ConfigArgs),
    /// Message traffic of the configured schedule; writes traffic.csv.
    DistsimReport(ConfigArgs),
}

/// Every flag overrides the key of the same name in the config file.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of users.
    #[arg(long = "K")]
    k: Option<String>,
    /// Receive antennas.
    #[arg(long = "N")]
    n: Option<String>,
    /// Transmit antennas.
    #[arg(long = "M")]
    m: Option<String>,
    /// Streams per user.
    #[arg(long = "d")]
    d: Option<String>,
    /// mpia, ilm or both.
    #[arg(long)]
    algorithm: Option<String>,
    /// regular, ilm, or a schedule file path.
    #[arg(long)]
    schedule: Option<String>,
    /// auto, zero or random.
    #[arg(long)]
    init_mode: Option<String>,
    #[arg(long)]
    max_outer_iters: Option<String>,
    #[arg(long)]
    leakage_tol: Option<String>,
    #[arg(long)]
    inner_max_iters: Option<String>,
    #[arg(long)]
    inner_tol: Option<String>,
    /// true or false.
    #[arg(long)]
    warm_start: Option<String>,
    #[arg(long)]
    num_realizations: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Connectivity mask file (rows of 0/1).
    #[arg(long)]
    connectivity: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> mpia::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let overrides = [
            ("K", &self.k),
            ("N", &self.n),
            ("M", &self.m),
            ("d", &self.d),
            ("algorithm", &self.algorithm),
            ("schedule", &self.schedule),
            ("init_mode", &self.init_mode),
            ("max_outer_iters", &self.max_outer_iters),
            ("leakage_tol", &self.leakage_tol),
            ("inner_max_iters", &self.inner_max_iters),
            ("inner_tol", &self.inner_tol),
            ("warm_start", &self.warm_start),
            ("num_realizations", &self.num_realizations),
            ("seed", &self.seed),
            ("connectivity", &self.connectivity),
            ("output_dir", &self.output_dir),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: &Command) -> mpia::Result<()> {
    match command {
        Command::RunSingle(args) => {
            let cfg = args.resolve()?;
            let result = harness::run_single(&cfg)?;
            for r in &result.realizations {
                println!(
                    "{}: final leakage {:e} after {} iterations",
                    r.algorithm, r.final_leakage, r.iterations_run
                );
            }
            info!(
                "wrote {}",
                cfg.output_dir.join(harness::TRAJECTORY_FILE).display()
            );
        }
        Command::RunMontecarlo(args) => {
            let cfg = args.resolve()?;
            let result = harness::run_montecarlo(&cfg)?;
            for alg in [Algorithm::Mpia, Algorithm::Ilm] {
                if let Some(a) = result.aggregate(alg) {
                    println!(
                        "{}: geometric mean leakage {:e} over {} realizations ({} converged)",
                        alg, a.geometric_mean, a.realizations, a.converged
                    );
                }
            }
            info!(
                "wrote {}",
                cfg.output_dir.join(harness::FINAL_FILE).display()
            );
        }
        Command::DistsimReport(args) => {
            let cfg = args.resolve()?;
            let report = harness::run_distsim_report(&cfg)?;
            println!(
                "{} iterations: {} over-the-air messages ({} bytes), {} local",
                report.iterations,
                report.totals.messages_ota,
                report.totals.bytes_ota,
                report.totals.messages_local
            );
            info!(
                "wrote {}",
                cfg.output_dir.join(harness::TRAFFIC_FILE).display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
