use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maxsup::harness::compare::parse_list;
use maxsup::harness::probe::parse_grid;
use maxsup::harness::{
    cmd_compare, cmd_probe, cmd_train, run_verification, ExperimentConfig, VerifyOptions,
};
use maxsup::metrics::default_l2_grid;
use maxsup::{Error, RegKind};

#[derive(Parser)]
#[command(
    name = "maxsup",
    version,
    about = "Label smoothing vs. max suppression laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every loss identity and gradient on random inputs.
    Verify {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        /// Negative control: add this offset to the label-smoothing loss.
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_ls: f64,
    },
    /// Train one configuration and write run.jsonl, summary.json and feature dumps.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Fit the linear probe on a feature dump and score a second dump.
    Probe {
        train: PathBuf,
        val: PathBuf,
        /// `N,MIN,MAX` log-spaced l2 grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every (kind, seed) cell and aggregate into compare.csv.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        kinds: String,
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Verify {
            trials,
            seed,
            perturb_ls,
        } => {
            let opts = VerifyOptions {
                trials,
                seed,
                ls_loss_offset: perturb_ls,
                ..VerifyOptions::default()
            };
            let report = run_verification(&opts)?;
            print!("{}", report.render());
            Ok(report.passed())
        }
        Command::Train {
            config,
            out,
            overwrite,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| {
                Error::Usage("no --out given and config has no output_dir".into())
            })?;
            let output = cmd_train(&cfg, &out, overwrite)?;
            let s = &output.summary;
            println!(
                "{}: val_acc={:.4} ece={:.4} nll={:.4} d_within={:.4} r2={:.4} -> {}",
                s.kind,
                s.val_accuracy,
                s.ece,
                s.nll,
                s.feature_quality.d_within,
                s.feature_quality.r_squared,
                out.display()
            );
            Ok(true)
        }
        Command::Probe {
            train,
            val,
            grid,
            out,
        } => {
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => default_l2_grid(),
            };
            let result = cmd_probe(&train, &val, &grid, out.as_deref())?;
            println!(
                "best accuracy {:.4} at l2={:e} ({} grid points)",
                result.best_accuracy,
                result.best_l2,
                result.accuracy_per_l2.len()
            );
            Ok(true)
        }
        Command::Compare {
            config,
            kinds,
            seeds,
            out,
            overwrite,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let kinds: Vec<RegKind> = parse_list(&kinds, "kind")?;
            let seeds: Vec<u64> = parse_list(&seeds, "seed")?;
            cmd_compare(&cfg, &kinds, &seeds, &out, overwrite)?;
            print!(
                "{}",
                std::fs::read_to_string(out.join(maxsup::harness::compare::COMPARE_FILE))
                    .unwrap_or_default()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
