use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use moistpe::experiments::run_experiment;
use moistpe::{load_config, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    Scenario,
    Epsilon,
    Twin,
}

/// Run a moist primitive-equation experiment and report its monitors.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Configuration file (sectioned key = value). Without it the built-in
    /// 16x16x8 desk-scale configuration is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for snapshots, time series and summary tables.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides `experiment.name` from the configuration.
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => match load_config(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => RunConfig::desk_scale(),
    };
    if let Some(e) = cli.experiment {
        cfg.experiment.name = match e {
            Experiment::Scenario => "scenario",
            Experiment::Epsilon => "epsilon",
            Experiment::Twin => "twin",
        }
        .to_string();
    }
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    match run_experiment(&cfg, Some(&cli.out_dir)) {
        Ok(res) => {
            for c in &res.checks {
                let tag = if c.pass { "PASS" } else { "FAIL" };
                println!("{tag} {:<40} value {:.6e} threshold {:.6e}", c.name, c.value, c.threshold);
            }
            for (name, v) in &res.fitted {
                println!("fitted {name} = {v:.6e}");
            }
            for p in &res.csv_paths {
                println!("wrote {}", p.display());
            }
            if res.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
