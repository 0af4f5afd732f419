use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fmpols::config::{self, ExperimentConfig};
use fmpols::experiment::Experiment;
use fmpols::verify;

#[derive(Parser)]
#[command(name = "fmpols", version, about = "Finite-memory predictive online least squares experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV series plus summary.txt.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory, created if missing.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List the built-in experiment presets.
    ListPresets,
    /// Print the resolved configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        source: Source,
    },
    /// Run an experiment and compare measured residuals and regret against the bounds.
    Bounds {
        #[command(flatten)]
        source: Source,
    },
    /// Run every acceptance check and print one line per check.
    Verify,
}

#[derive(Args)]
struct Source {
    /// Built-in preset name (see `list-presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set horizon=500 --set predictors[0].lambda=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        let base = match (&self.preset, &self.config) {
            (Some(name), None) => config::preset(name)?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            _ => bail!("exactly one of --preset or --config is required"),
        };
        let cfg = base.with_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { source, out } => {
            let exp = Experiment::new(source.load()?)?;
            let record = exp.run()?;
            let paths = record.emit(&out)?;
            print!("{}", record.summary());
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::ListPresets => {
            for name in config::PRESETS {
                println!("{name}");
            }
        }
        Command::ShowConfig { source } => print!("{}", source.load()?.to_toml_string()?),
        Command::Bounds { source } => {
            let exp = Experiment::new(source.load()?)?;
            let record = exp.run()?;
            let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
            println!("{:<20} {:>14} {:>14} {:>14} {:>14}", "variant", "delta_max", "residual_bnd", "regret", "regret_bnd");
            let mut all_hold = true;
            for (vi, v) in exp.variants.iter().enumerate() {
                let st = record.variant_stats(vi);
                let residual = record.residual_bound_for(vi).map(|(_, b)| b);
                let regret_bound = record.regret_bound_for(vi);
                all_hold &= match (st.delta_max, residual) {
                    (Some(d), Some(b)) => d <= b,
                    _ => true,
                };
                all_hold &= match (st.final_regret, regret_bound) {
                    (Some(r), Some(b)) => r <= b,
                    _ => true,
                };
                println!(
                    "{:<20} {:>14} {:>14} {:>14} {:>14}",
                    v.label,
                    fmt(st.delta_max),
                    fmt(residual),
                    fmt(st.final_regret),
                    fmt(regret_bound)
                );
            }
            if record.bound_inputs().is_none() {
                println!("bounds not evaluated: stochastic noise has no pathwise norm bound");
            }
            return Ok(all_hold);
        }
        Command::Verify => {
            let checks = verify::all();
            for c in &checks {
                println!("{}", c.line());
            }
            let passed = checks.iter().filter(|c| c.passed).count();
            println!("{passed} of {} checks passed", checks.len());
            return Ok(passed == checks.len());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
