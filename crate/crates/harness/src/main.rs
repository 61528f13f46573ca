use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use leosim_core::orbit::ConstellationConfig;
use leosim_core::prediction::StrategyKind;
use leosim_harness::{predict_bench, run_scenario, write_outputs, ScenarioConfig};

#[derive(Parser)]
#[command(name = "leosim", about = "LEO satellite network handover simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Consistent,
    Flexible,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Consistent => StrategyKind::Consistent,
            StrategyArg::Flexible => StrategyKind::Flexible,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write records.csv + metrics.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the periodic access prediction over a synthetic population.
    PredictBench {
        #[arg(long)]
        users: u32,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long, default_value = "starlink")]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        updates: u32,
    },
    /// Run several scenarios and print a merged scheme comparison table.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let output = run_scenario(&cfg)?;
            let (csv, json) = write_outputs(&out, &output)?;
            println!(
                "scenario {}: {} handover events",
                cfg.name, output.report.handover_events
            );
            for (scheme, stats) in &output.report.per_scheme {
                println!(
                    "  {scheme:<9} mean {:8.2} ms  median {:8.2} ms  p99 {:8.2} ms  (n={})",
                    stats.mean_ms, stats.median_ms, stats.p99_ms, stats.count
                );
            }
            println!("wrote {} and {}", csv.display(), json.display());
            if let Some(err) = output.run_error {
                bail!("run aborted early (partial outputs written): {err}");
            }
            Ok(())
        }
        Command::PredictBench {
            users,
            strategy,
            preset,
            seed,
            updates,
        } => {
            let cfg = ConstellationConfig::preset(&preset)
                .with_context(|| format!("unknown preset {preset:?}"))?;
            let report = predict_bench(users, strategy.into(), &cfg, seed, updates)?;
            println!(
                "{} / {:?} / {} users: {:.1} ms per periodic update ({} updates; registration {:.1} ms)",
                report.preset,
                report.strategy,
                report.users,
                report.wall_ms_per_update,
                report.updates_timed,
                report.registration_ms,
            );
            Ok(())
        }
        Command::Compare { configs, out } => {
            let mut rows: Vec<(String, String, u64, f64, f64, f64)> = Vec::new();
            for path in &configs {
                let cfg = ScenarioConfig::load(path)
                    .with_context(|| format!("loading {}", path.display()))?;
                let output = run_scenario(&cfg)?;
                if let Some(err) = &output.run_error {
                    bail!("scenario {} aborted: {err}", cfg.name);
                }
                for (scheme, stats) in &output.report.per_scheme {
                    rows.push((
                        cfg.name.clone(),
                        scheme.clone(),
                        stats.count,
                        stats.mean_ms,
                        stats.median_ms,
                        stats.p99_ms,
                    ));
                }
            }
            println!(
                "{:<24} {:<9} {:>7} {:>11} {:>11} {:>11}",
                "scenario", "scheme", "count", "mean_ms", "median_ms", "p99_ms"
            );
            for (name, scheme, count, mean, median, p99) in &rows {
                println!(
                    "{name:<24} {scheme:<9} {count:>7} {mean:>11.2} {median:>11.2} {p99:>11.2}"
                );
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let mut csv = String::from("scenario,scheme,count,mean_ms,median_ms,p99_ms\n");
                for (name, scheme, count, mean, median, p99) in &rows {
                    csv.push_str(&format!(
                        "{name},{scheme},{count},{mean:.6},{median:.6},{p99:.6}\n"
                    ));
                }
                let path = dir.join("comparison.csv");
                std::fs::write(&path, csv)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
