use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modcomp_cli::commands;
use modcomp_cli::config::{generator_name, ExperimentConfig};
use modcomp_cli::error::{exit, Result};

#[derive(Parser)]
#[command(name = "modcomp", version, about = "Modality complementarity experiments")]
struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset; the config file's tables are merged over it.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (relative paths resolve under $MODCOMP_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sweep cells run concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset into <out>/train and <out>/val.
    Gen,
    /// Estimate complementarity on a generated dataset.
    Estimate {
        /// Directory written by `gen`.
        dataset: PathBuf,
    },
    /// Generate, estimate and train over the configured grid.
    Sweep,
    /// Check the error bounds on random discrete joints.
    VerifyBounds,
    /// Train and evaluate the configured strategies on a dataset.
    TrainMissing {
        /// Directory written by `gen`.
        dataset: PathBuf,
    },
    /// List the built-in presets.
    Presets,
}

fn fallback_name(cfg: &ExperimentConfig, command: &str) -> String {
    let base = cfg
        .preset
        .clone()
        .or_else(|| cfg.generator.as_ref().map(|g| generator_name(g).to_string()))
        .unwrap_or_else(|| "default".to_string());
    format!("{base}-{command}")
}

fn run(cli: Cli) -> Result<i32> {
    if let Command::Presets = cli.command {
        for name in modcomp_cli::presets::NAMES {
            println!("{name}");
        }
        return Ok(exit::OK);
    }
    let mut cfg = ExperimentConfig::resolve(cli.config.as_deref(), cli.preset.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let out_for = |cmd: &str| cfg.out_dir(cli.out.as_deref(), &fallback_name(&cfg, cmd));
    match &cli.command {
        Command::Gen => {
            let out = out_for("gen");
            let o = commands::cmd_gen(&cfg, &out)?;
            println!("wrote {}", out.display());
            println!("train class histogram: {:?}", o.train_histogram);
            println!("val class histogram:   {:?}", o.val_histogram);
            if let Some(s) = o.stats {
                println!(
                    "rejections: {}  surplus discarded: {}  anchors drawn: {}",
                    s.rejections, s.surplus_discarded, s.anchors_drawn
                );
            }
            Ok(exit::OK)
        }
        Command::Estimate { dataset } => {
            let out = out_for("estimate");
            let r = commands::cmd_estimate(&cfg, dataset, &out)?;
            println!("{}", r.to_json()?);
            println!("wrote {}", out.join("report.json").display());
            Ok(if r.undefined {
                eprintln!("metric undefined: I(S;Y) estimate below the normalizer floor");
                exit::UNDEFINED_METRIC
            } else {
                exit::OK
            })
        }
        Command::Sweep => {
            let out = out_for("sweep");
            let o = commands::cmd_sweep(&cfg, &out, cli.parallel.max(1))?;
            let failed = o.rows.iter().filter(|r| r.error.is_some()).count();
            for v in &o.summary.values {
                let m = v
                    .metric
                    .as_ref()
                    .map(|m| format!("{:.4} ± {:.4}", m.mean, m.std))
                    .unwrap_or_else(|| "undefined".to_string());
                println!("{} = {}: metric {m}", o.summary.param, v.value);
            }
            println!("spearman(metric): {:?}", o.summary.spearman_metric);
            for (s, r) in o.summary.strategies.iter().zip(&o.summary.spearman_ratio) {
                println!("spearman({} ratio): {r:?}", s.name());
            }
            println!("wrote {} ({} rows, {failed} with errors)", o.table.display(), o.rows.len());
            Ok(exit::OK)
        }
        Command::VerifyBounds => {
            let out = out_for("bounds");
            let s = commands::cmd_verify_bounds(&cfg, Some(&out))?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(exit::OK)
        }
        Command::TrainMissing { dataset } => {
            let out = out_for("missing");
            let seed = cli
                .seed
                .or_else(|| cfg.generator.as_ref().and_then(|g| g.seed()))
                .unwrap_or(0);
            let outcomes = commands::cmd_train_missing(&cfg, dataset, &out, seed)?;
            let mut code = exit::OK;
            for o in &outcomes {
                match (&o.report, &o.error) {
                    (Some(r), _) => println!(
                        "{:<15} clean {:.4}  missing {:?}  ratio {:.4}",
                        o.strategy.name(),
                        r.clean_accuracy,
                        r.missing_accuracy,
                        r.robustness_ratio
                    ),
                    (None, e) => {
                        println!("{:<15} failed: {}", o.strategy.name(), e.as_deref().unwrap_or(""));
                        code = o.exit_code.unwrap_or(exit::OTHER);
                    }
                }
            }
            println!("wrote {}", out.join("strategies.csv").display());
            Ok(code)
        }
        Command::Presets => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

