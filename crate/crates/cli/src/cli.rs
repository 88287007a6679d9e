//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::format_summary;
use crate::commands::{bench_cmd, eval_cmd, separate_cmd, simulate, SeparateArgs};
use crate::config::{parse_algos, ExperimentConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "bss", version, about = "Determined blind source separation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// `key = value` experiment file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Algorithm, or a comma-separated list for `bench`.
    #[arg(long, global = true)]
    pub algo: Option<String>,
    /// MSK1 mask file for `mvica-mask`.
    #[arg(long, global = true)]
    pub mask: Option<PathBuf>,
    /// Scenario directory providing oracle images.
    #[arg(long, global = true)]
    pub oracle: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// MVICA demixing iterations.
    #[arg(long = "L", global = true)]
    pub l: Option<usize>,
    /// Diagonal loading relative to trace/K.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub frame: Option<usize>,
    #[arg(long, global = true)]
    pub hop: Option<usize>,
    /// Worker threads (0: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write simulated scenario directories.
    Simulate {
        /// Also write oracle interference masks (masks.msk).
        #[arg(long)]
        masks: bool,
    },
    /// Separate one mixture.
    Separate {
        /// Mixture WAV; defaults to the --oracle scenario's mixture.
        mixture: Option<PathBuf>,
    },
    /// Run every algorithm on every scenario and write bench.csv and summary.csv.
    Bench,
    /// Score y_<k>.wav estimates against a scenario directory.
    Eval { estimates: PathBuf, scenario: PathBuf },
}

/// The file (if any) with flag overrides applied.
pub fn resolve_config(g: &GlobalArgs) -> CliResult<ExperimentConfig> {
    let mut c = match &g.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = g.seed {
        c.seed = v;
    }
    if let Some(v) = &g.algo {
        c.algos = parse_algos(v)?;
    }
    if let Some(v) = &g.out {
        c.out = v.clone();
    }
    if let Some(v) = g.iters {
        c.iterations = v;
    }
    if let Some(v) = g.l {
        c.l_iters = v;
    }
    if let Some(v) = g.eps {
        c.eps = v;
    }
    if let Some(v) = g.frame {
        c.frame = v;
    }
    if let Some(v) = g.hop {
        c.hop = v;
    }
    if let Some(v) = g.workers {
        c.workers = v;
    }
    Ok(c)
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut config = resolve_config(&cli.global)?;
    match cli.command {
        Command::Simulate { masks } => {
            config.masks |= masks;
            for d in simulate(&config)? {
                println!("{}", d.display());
            }
        }
        Command::Separate { mixture } => {
            let algo = match &cli.global.algo {
                Some(_) if config.algos.len() != 1 => {
                    return Err(CliError::usage("separate takes exactly one --algo"));
                }
                Some(_) => Some(config.algos[0]),
                None => None,
            };
            let args = SeparateArgs { mixture, algo, mask: cli.global.mask.clone(), oracle: cli.global.oracle.clone() };
            let out = separate_cmd(&config, &args)?;
            for p in &out.outputs {
                println!("{}", p.display());
            }
            println!("{}", out.demixing.display());
            if let Some((p, rows)) = &out.report {
                println!("{}", p.display());
                let mean = |f: fn(&crate::bench::BenchRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
                println!("mean SIR improvement {:.2} dB, SDR improvement {:.2} dB", mean(|r| r.sir_delta_db), mean(|r| r.sdr_delta_db));
            }
        }
        Command::Bench => {
            let summary = bench_cmd(&config)?;
            print!("{}", format_summary(&summary));
        }
        Command::Eval { estimates, scenario } => {
            if cli.global.out.is_none() {
                config.out = estimates.clone();
            }
            let rows = eval_cmd(&config, &estimates, &scenario)?;
            println!("k,estimate,sir_db,sdr_db,si_sdr_db,sir_delta_db,sdr_delta_db");
            for r in rows {
                println!(
                    "{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
                    r.k, r.estimate, r.sir_db, r.sdr_db, r.si_sdr_db, r.sir_delta_db, r.sdr_delta_db
                );
            }
        }
    }
    Ok(())
}
