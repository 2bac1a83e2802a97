use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use fairsinkhorn::harness::{
    cmd_compare, cmd_generate, cmd_probe, cmd_train, cmd_zeroshot, Overrides, RunConfig, RunOptions,
};

#[derive(Parser)]
#[command(name = "fairsinkhorn", version, about = "Fairness-regularized contrastive training on paired features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/val/test splits, schema and manifest.
    Generate(Common),
    /// Pre-train the dual encoder and write logs and checkpoints.
    Train(Common),
    /// Fit a logistic probe on frozen image embeddings and report metrics.
    Probe(Common),
    /// Classify by similarity to class prompts and report metrics.
    Zeroshot(Common),
    /// Tabulate two report directories side by side.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the run and generator seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `report.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave wall-clock fields out of logs and manifests.
    #[arg(long)]
    no_timestamps: bool,
}

fn run(command: Command) -> fairsinkhorn::Result<()> {
    let (Command::Generate(c)
    | Command::Train(c)
    | Command::Probe(c)
    | Command::Zeroshot(c)
    | Command::Compare(c)) = &command;
    let cfg = RunConfig::load(
        &c.config,
        &Overrides {
            seed: c.seed,
            out_dir: c.out.clone(),
        },
    )?;
    let opts = RunOptions {
        timestamps: !c.no_timestamps,
    };
    match command {
        Command::Generate(_) => {
            let dir = cmd_generate(&cfg, opts)?;
            println!("{}", dir.display());
        }
        Command::Train(_) => {
            let out = cmd_train(&cfg, opts)?;
            if let Some(last) = out.steps.last() {
                println!("step {} clip_loss {:.6} total {:.6}", last.step, last.clip_loss, last.total);
            }
        }
        Command::Probe(_) | Command::Zeroshot(_) => {
            let reports = if matches!(command, Command::Probe(_)) {
                cmd_probe(&cfg)?
            } else {
                cmd_zeroshot(&cfg)?
            };
            for r in reports {
                println!(
                    "{}: auc {:.4} es_auc {:.4} dpd {:.4} deodds {:.4}",
                    r.attribute_name, r.auc, r.es_auc, r.dpd, r.deodds
                );
            }
        }
        Command::Compare(_) => {
            for r in cmd_compare(&cfg)? {
                if r.metric == "es_auc" {
                    println!("{}: es_auc improved {}", r.attribute, r.es_auc_improved);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
