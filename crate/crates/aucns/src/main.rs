use std::path::PathBuf;
use std::process::ExitCode;

use aucns::checkpoint::Checkpoint;
use aucns::config::{hex, ExperimentConfig};
use aucns::experiment::{evaluate_checkpoint, run_experiment_with, sweep, sweep_csv, SweepParam, SweepRow};
use aucns::probe::{run_probe, ProbeName};
use aucns::core::sampler::SamplerKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aucns", version, about = "Negative sampling experiments for implicit-feedback matrix factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// rns, pns, dns or aucns.
        #[arg(long, value_parser = parse_sampler)]
        sampler: Option<SamplerKind>,
        /// Defaults to the config's output_dir, then `runs/<sampler>-seed<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run one experiment per value of a sampler parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a numerical probe and print its verdict as JSON.
    Probe {
        name: ProbeName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a checkpoint on the split described by a config.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_sampler(s: &str) -> Result<SamplerKind, String> {
    SamplerKind::from_name(s).ok_or_else(|| format!("unknown sampler `{s}` (expected rns, pns, dns or aucns)"))
}

fn run(cli: Cli) -> aucns::Result<()> {
    match cli.command {
        Command::Train { config, seed, sampler, out, quiet } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = sampler {
                cfg.train.sampler = s;
            }
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", cfg.train.sampler.name(), cfg.seed)));
            let result = run_experiment_with(&cfg, &out, |e| {
                if !quiet {
                    eprintln!("epoch {:>3}  loss {:.5}  lr {:.0e}  hot {:.4}  fn {:.4}", e.epoch, e.mean_loss, e.learning_rate, e.sampled_hot_rate, e.sampled_fn_rate);
                }
            })?;
            for m in &result.report.metrics {
                println!(
                    "k={:<3} precision {:.4}  recall {:.4}  ndcg {:.4}  ohr {:.4}  ocr {:.4}  uhr {:.4}  ucr {:.4}",
                    m.k, m.precision, m.recall, m.ndcg, m.ohr, m.ocr, m.uhr, m.ucr
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep { config, param, values, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let rows = sweep(&cfg, param, &values)?;
            let table: Vec<SweepRow> = rows.iter().map(|(r, _)| *r).collect();
            print!("{}", String::from_utf8_lossy(&sweep_csv(param, &table)?));
        }
        Command::Probe { name, seed } => {
            let v = run_probe(name, seed)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::Eval { model, config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let ckpt = Checkpoint::read(&model)?;
            if ckpt.config_hash != cfg.hash() {
                eprintln!("note: checkpoint was trained under config {}", hex(&ckpt.config_hash));
            }
            let reports = evaluate_checkpoint(&cfg, &ckpt)?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
