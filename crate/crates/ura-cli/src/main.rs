//! `ura` command line: closed-form analysis sweeps, Monte Carlo campaigns,
//! two-user collision studies and a quick self-test of the numerical core.
//!
//! Exit codes: 0 success, 1 configuration error, 2 internal/check failure.

mod selftest;

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use ura_core::config::ConfigError;
use ura_core::harness::{self, AnalyzeConfig, HarnessError};
use ura_core::{ExperimentConfig, analysis, polar};

#[derive(Parser)]
#[command(
    name = "ura",
    version,
    about = "Pilot-based unsourced random access: simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Required Eb/N0 over a (K_a, M) grid for both MSE models.
    Analyze {
        /// Key-value config file (n_p, n_d, b, j, p_e, k_a_grid, m_grid, ...).
        #[arg(long)]
        config: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of pilot draws for the LMMSE model.
        #[arg(long)]
        draws: Option<usize>,
        /// Override the analysis seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo campaign over the full receive pipeline.
    Simulate {
        /// Key-value config file (see README for the schema).
        #[arg(long)]
        config: PathBuf,
        /// Write the per-trial CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the campaign seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dump per-iteration activity-detection diagnostics to this CSV.
        #[arg(long)]
        amp_debug: Option<PathBuf>,
    },
    /// Two-user pilot-collision model: recovery fractions over the
    /// channel-estimation error variance.
    Collide {
        /// Antenna count.
        #[arg(long, default_value_t = 50)]
        m: usize,
        /// Per-user SNR in dB.
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        snr_db: f64,
        /// Estimation-error variance sweep in dB, as start:step:end or a
        /// comma list.
        #[arg(long, default_value = "-20:2:0", allow_hyphen_values = true)]
        sigma_est_db: String,
        #[arg(long, default_value_t = 300)]
        trials: usize,
        /// Payload bits per user.
        #[arg(long, default_value_t = 84)]
        payload: usize,
        #[arg(long, default_value_t = 16)]
        crc: usize,
        /// Coded block length in bits (2 n_d).
        #[arg(long, default_value_t = 4096)]
        block: usize,
        #[arg(long, default_value_t = 32)]
        list: usize,
        /// Bhattacharyya design parameter.
        #[arg(long, default_value_t = 0.5)]
        design_z0: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.downcast_ref::<ConfigError>().is_some()
        || matches!(
            e.downcast_ref::<HarnessError>(),
            Some(HarnessError::Config(_))
        )
}

fn read_config(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Invalid(format!("cannot read config `{}`: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Analyze {
            config,
            out,
            draws,
            seed,
        } => {
            let mut cfg = AnalyzeConfig::from_kv_text(&read_config(&config)?)?;
            if let Some(d) = draws {
                cfg.lmmse_draws = d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let points = harness::analyze_grid(&cfg);
            emit(out.as_deref(), &harness::analyze_csv(&points))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            config,
            out,
            trials,
            seed,
            amp_debug,
        } => {
            let mut cfg = ExperimentConfig::from_kv_text(&read_config(&config)?)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.campaign_seed = s;
            }
            if amp_debug.is_some() {
                cfg.amp_trace = true;
            }
            cfg.validate()?;
            let report = harness::run_campaign(&cfg)?;
            if let Some(path) = amp_debug {
                std::fs::write(&path, report.amp_trace_csv())?;
                eprintln!("wrote {}", path.display());
            }
            emit(out.as_deref(), &report.to_csv())?;
            eprintln!("{}", report.summary_line());
            Ok(ExitCode::SUCCESS)
        }
        Command::Collide {
            m,
            snr_db,
            sigma_est_db,
            trials,
            payload,
            crc,
            block,
            list,
            design_z0,
            seed,
            out,
        } => {
            let grid_db = parse_db_grid(&sigma_est_db)
                .map_err(|e| ConfigError::Invalid(format!("sigma_est_db: {e}")))?;
            let sigma_grid: Vec<f64> = grid_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
            let code = polar::construct(block, payload, crc, design_z0)?.with_list_size(list)?;
            let snr = 10f64.powf(snr_db / 10.0);
            let points = analysis::collision_sweep(m, snr, &sigma_grid, trials, &code, seed);
            emit(out.as_deref(), &harness::collision_csv(&points))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            if selftest::run_all() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
    }
}

/// Parse a dB sweep given as `start:step:end` (floats) or a comma list.
fn parse_db_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let text = text.trim();
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let start: f64 = parts[0].trim().parse()?;
        let step: f64 = parts[1].trim().parse()?;
        let end: f64 = parts[2].trim().parse()?;
        anyhow::ensure!(step > 0.0, "step must be positive");
        anyhow::ensure!(end >= start, "end must be at least start");
        let mut grid = Vec::new();
        let mut v = start;
        while v <= end + 1e-9 {
            grid.push(v);
            v += step;
        }
        return Ok(grid);
    }
    text.split(',')
        .map(|p| Ok(p.trim().parse::<f64>()?))
        .collect()
}
