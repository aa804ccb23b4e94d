use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tcnav::ambiguity::{calibrate, CalibrationSpec};
use tcnav::config::{load_monte_carlo, load_run_config, load_scenario, RunConfig};
use tcnav::error::{Error, Result};
use tcnav::montecarlo::{self, MonteCarloSpec};
use tcnav::pipeline::{ablate, run_scenario, write_ablation, write_reports};
use tcnav::sim::Scenario;

#[derive(Parser)]
#[command(name = "tcnav", version, about = "Multi-antenna CDGNSS/INS estimator and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the seed from the configuration or scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Linearization Monte Carlo: success/failure/float rates per yaw sigma.
    Montecarlo {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a scenario and run the filter over it.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Run a scenario once per disabled feature.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Build the integer-aperture threshold table.
    CalibrateAperture {
        #[command(flatten)]
        common: Common,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn scenario(path: Option<&Path>, seed: Option<u64>) -> Result<Scenario> {
    let mut sc = match path {
        Some(p) => load_scenario(p)?,
        None => Scenario::default(),
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), load_run_config)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Montecarlo { common } => {
            threads(common.threads)?;
            let mut spec = match &common.config {
                Some(p) => load_monte_carlo(p)?,
                None => MonteCarloSpec::default(),
            };
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            let rows = montecarlo::run_monte_carlo(&spec, tcnav::ambiguity::ApertureTable::builtin())?;
            montecarlo::write_csv(&rows, create(&common.out)?)
        }
        Command::Run { common, scenario: sc_path } => {
            threads(common.threads)?;
            let cfg = run_config(common.config.as_deref())?;
            let sc = scenario(sc_path.as_deref(), common.seed)?;
            let out = run_scenario(&sc, &cfg, &cfg.table()?)?;
            write_reports(&out.reports, create(&common.out)?)?;
            let summary = serde_json::to_string_pretty(&out.summary).map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(common.out.with_extension("summary.json"), &summary)?;
            println!("{summary}");
            Ok(())
        }
        Command::Ablate { common, scenario: sc_path } => {
            threads(common.threads)?;
            let cfg = run_config(common.config.as_deref())?;
            let sc = scenario(sc_path.as_deref(), common.seed)?;
            let rows = ablate(&sc, &cfg, &cfg.table()?)?;
            write_ablation(&rows, create(&common.out)?)
        }
        Command::CalibrateAperture { common } => {
            threads(common.threads)?;
            let mut spec = match &common.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<CalibrationSpec>(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => CalibrationSpec::default(),
            };
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            calibrate(&spec).write_to(create(&common.out)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tcnav: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
