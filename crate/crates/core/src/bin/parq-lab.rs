use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parq_core::harness::{
    check_bound, compare_methods, load_traces, run_to_dir, ExperimentConfig, GapKind,
};
use parq_core::Error;

/// Quantization-aware training lab.
#[derive(Parser)]
#[command(name = "parq-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON experiment config and write per-seed and summary CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check seed-mean objective gaps against G·R·(2 + 1.5 ln t)/√t.
    CheckBound {
        /// A trace CSV or a directory of seed_*.csv files.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long = "G")]
        g: f64,
        #[arg(long = "R")]
        r: f64,
        /// Optional CSV with the per-step margins.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run several configs on one problem and write an aligned CSV.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_ERROR: u8 = 1;
const EXIT_BOUND_VIOLATION: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn execute(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Run { config, seeds, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
                cfg.validate()?;
            }
            let dir = out.or_else(|| cfg.output.clone()).ok_or_else(|| {
                Error::Config("no output directory: pass --out or set output".into())
            })?;
            let result = run_to_dir(&cfg, Some(&dir))?;
            println!(
                "wrote {} seed traces and summary.csv to {}",
                result.traces.len(),
                dir.display()
            );
            if let Some((g, r)) = result.bound_params {
                println!("G = {g}, R = {r}");
            }
            Ok(0)
        }
        Command::CheckBound {
            trace,
            g,
            r,
            report,
        } => {
            let traces = load_traces(&trace)?;
            let rep = check_bound(&traces, g, r, GapKind::LastIterate)?;
            if let Some(path) = report {
                rep.write_csv(&path)?;
            }
            println!(
                "seeds: {}, logged steps: {}, min margin (t >= 10): {}",
                rep.n_seeds,
                rep.rows.len(),
                rep.min_margin()
            );
            if rep.passed() {
                println!("no violations");
                Ok(0)
            } else {
                println!("violations at steps {:?}", rep.violations);
                Ok(EXIT_BOUND_VIOLATION)
            }
        }
        Command::Compare { configs, out } => {
            let cfgs = configs
                .iter()
                .map(|p| ExperimentConfig::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let cmp = compare_methods(&cfgs)?;
            cmp.write_csv(&out)?;
            print!("{}", cmp.report());
            Ok(0)
        }
    }
}
