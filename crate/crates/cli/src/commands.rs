//! The four subcommands.

use std::path::{Path, PathBuf};

use bss_core::algorithms::{oracle_interference_masks, separate, Algo, MaskSet, OracleInfo, SeparationInputs};
use bss_core::formats::{read_masks, write_demixing};
use bss_core::roomsim::generate_scenario;
use bss_core::stft::{analyze, synthesize, Waveform};
use bss_core::wav::{read_wav, write_wav, WavEncoding};
use bss_core::Error;
use rayon::prelude::*;

use crate::bench::{fmt6, run_bench, with_pool, write_bench_outputs, BenchRow, Scoring, SummaryRow};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::scenario_io::{read_scenario, scenario_dir, write_scenario};

/// Absolute sample tolerance when checking a mixture file against oracle
/// images read back from 32-bit float WAVs.
const MIXTURE_MATCH_TOL: f64 = 1e-5;

/// Writes `n_scenarios` scenario directories under `out`.
pub fn simulate(config: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    config.validate()?;
    let stft = config.stft()?;
    with_pool(config.workers, || {
        (0..config.n_scenarios)
            .into_par_iter()
            .map(|i| {
                let seed = config.scenario_seed(i);
                let scn = generate_scenario(&config.scenario(i), seed)?;
                let masks = if config.masks {
                    let (x, oracle) = OracleInfo::from_scenario(&scn, stft)?;
                    Some(oracle_interference_masks(&x, &oracle)?)
                } else {
                    None
                };
                let dir = scenario_dir(&config.out, seed);
                write_scenario(&dir, &scn, masks.as_ref())?;
                log::info!("wrote {}", dir.display());
                Ok(dir)
            })
            .collect()
    })?
}

#[derive(Clone, Debug, Default)]
pub struct SeparateArgs {
    pub mixture: Option<PathBuf>,
    pub algo: Option<Algo>,
    pub mask: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct SeparateOutcome {
    pub outputs: Vec<PathBuf>,
    pub demixing: PathBuf,
    pub report: Option<(PathBuf, Vec<BenchRow>)>,
}

fn check_mixture(given: &Waveform, expected: &Waveform, path: &Path) -> CliResult<()> {
    let shape = |msg: String| CliError::At { path: path.to_path_buf(), source: Error::ShapeMismatch(msg) };
    if given.n_channels() != expected.n_channels() || given.len() != expected.len() {
        return Err(shape(format!(
            "mixture is {}ch x {} samples, oracle scenario {}ch x {}",
            given.n_channels(),
            given.len(),
            expected.n_channels(),
            expected.len()
        )));
    }
    let worst = given
        .channels()
        .iter()
        .zip(expected.channels())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    if worst > MIXTURE_MATCH_TOL {
        return Err(shape(format!("mixture differs from the oracle scenario by {worst:.3e}")));
    }
    Ok(())
}

fn check_masks(m: &MaskSet, k: usize, nf: usize, nt: usize, path: &Path) -> CliResult<()> {
    if (m.n_sources(), m.n_freq(), m.n_frames()) != (k, nf, nt) {
        return Err(CliError::At {
            path: path.to_path_buf(),
            source: Error::ShapeMismatch(format!(
                "mask set is {}x{}x{}, mixture needs {}x{}x{}",
                m.n_sources(),
                m.n_freq(),
                m.n_frames(),
                k,
                nf,
                nt
            )),
        });
    }
    Ok(())
}

/// Separates one mixture; writes `y_<k>.wav`, `demixing.wdm`, and
/// `report.csv` when an oracle scenario is given.
pub fn separate_cmd(config: &ExperimentConfig, args: &SeparateArgs) -> CliResult<SeparateOutcome> {
    config.validate()?;
    let algo = match args.algo {
        Some(a) => a,
        None => *config.algos.first().ok_or_else(|| CliError::usage("no algorithm given"))?,
    };
    if algo.needs_oracle() && args.oracle.is_none() {
        return Err(CliError::usage(format!("{algo} needs --oracle <scenario dir>")));
    }
    if algo == Algo::MvicaMask && args.mask.is_none() {
        return Err(CliError::usage("mvica-mask needs --mask <file.msk>"));
    }
    if args.mixture.is_none() && args.oracle.is_none() {
        return Err(CliError::usage("separate needs a mixture file or --oracle <scenario dir>"));
    }
    let stft = config.stft()?;
    let loaded = args.oracle.as_deref().map(read_scenario).transpose()?;
    let mixture = match (&args.mixture, &loaded) {
        (Some(p), Some(l)) => {
            let w = read_wav(p).map_err(CliError::at(p))?;
            check_mixture(&w, &l.scenario.mixture, p)?;
            l.scenario.mixture.clone()
        }
        (Some(p), None) => read_wav(p).map_err(CliError::at(p))?,
        (None, Some(l)) => l.scenario.mixture.clone(),
        (None, None) => unreachable!("checked above"),
    };
    let k = mixture.n_channels();
    if !(2..=4).contains(&k) {
        return Err(Error::ShapeMismatch(format!("mixture has {k} channels, need 2..=4")).into());
    }

    let (x, oracle) = match &loaded {
        Some(l) => {
            let (x, o) = OracleInfo::from_scenario(&l.scenario, stft)?;
            (x, Some(o))
        }
        None => (analyze(&mixture, stft)?, None),
    };
    let masks = match &args.mask {
        Some(p) => {
            let m = read_masks(p).map_err(CliError::at(p))?;
            check_masks(&m, k, x.n_freq(), x.n_frames(), p)?;
            Some(m)
        }
        None => None,
    };
    let out = with_pool(config.workers, || {
        separate(algo, &x, SeparationInputs { oracle: oracle.as_ref(), masks: masks.as_ref() }, &config.separator())
    })??;
    let y = synthesize(&out.y)?;

    std::fs::create_dir_all(&config.out).map_err(CliError::io(&config.out))?;
    let mut outputs = Vec::with_capacity(k);
    for j in 0..k {
        let p = config.out.join(format!("y_{j}.wav"));
        write_wav(&p, &y.select(j), WavEncoding::Float32).map_err(CliError::at(&p))?;
        outputs.push(p);
    }
    let demixing = config.out.join("demixing.wdm");
    write_demixing(&demixing, &out.w).map_err(CliError::at(&demixing))?;

    let report = match &loaded {
        Some(l) => {
            let rows = Scoring::new(&l.scenario)?.rows(l.meta.seed, algo, l.meta.rt60_ms, &y)?;
            let p = config.out.join("report.csv");
            let mut w = csv::Writer::from_path(&p)?;
            w.write_record(crate::bench::BENCH_HEADER)?;
            for r in &rows {
                w.write_record(r.record())?;
            }
            w.flush().map_err(CliError::io(&p))?;
            Some((p, rows))
        }
        None => None,
    };
    Ok(SeparateOutcome { outputs, demixing, report })
}

/// Runs the sweep and writes `bench.csv` and `summary.csv` under `out`.
pub fn bench_cmd(config: &ExperimentConfig) -> CliResult<Vec<SummaryRow>> {
    let rows = run_bench(config)?;
    let stamp = chrono::Local::now().to_rfc3339();
    write_bench_outputs(&config.out, &rows, &stamp)
}

pub const EVAL_HEADER: [&str; 9] =
    ["k", "estimate", "sir_db", "sdr_db", "si_sdr_db", "sir_delta_db", "sdr_delta_db", "rt60_ms", "n_sources"];

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub k: usize,
    /// Index of the estimate file assigned to source `k`.
    pub estimate: usize,
    pub sir_db: f64,
    pub sdr_db: f64,
    pub si_sdr_db: f64,
    pub sir_delta_db: f64,
    pub sdr_delta_db: f64,
}

/// Scores `y_<k>.wav` in `estimates` against the scenario in `scenario`,
/// writing `eval.csv` under `out`.
pub fn eval_cmd(config: &ExperimentConfig, estimates: &Path, scenario: &Path) -> CliResult<Vec<EvalRow>> {
    let loaded = read_scenario(scenario)?;
    let scn = &loaded.scenario;
    let k = scn.n_sources();
    let mut chans = Vec::with_capacity(k);
    for j in 0..k {
        let p = estimates.join(format!("y_{j}.wav"));
        let w = read_wav(&p).map_err(CliError::at(&p))?;
        if w.n_channels() != 1 {
            return Err(CliError::At { path: p, source: Error::ShapeMismatch("estimate must be mono".into()) });
        }
        if w.len() != scn.mixture.len() {
            return Err(CliError::At {
                path: p,
                source: Error::LengthMismatch(format!("{} samples, references have {}", w.len(), scn.mixture.len())),
            });
        }
        chans.push(w.into_channels().remove(0));
    }
    let est = Waveform::new(scn.sample_rate(), chans)?;
    let (report, delta) = Scoring::new(scn)?.score(&est)?;
    let rows: Vec<EvalRow> = (0..k)
        .map(|j| EvalRow {
            k: j,
            estimate: report.permutation[j],
            sir_db: report.sir_db[j],
            sdr_db: report.sdr_db[j],
            si_sdr_db: report.si_sdr_db[j],
            sir_delta_db: delta.sir_db[j],
            sdr_delta_db: delta.sdr_db[j],
        })
        .collect();
    std::fs::create_dir_all(&config.out).map_err(CliError::io(&config.out))?;
    let p = config.out.join("eval.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(EVAL_HEADER)?;
    for r in &rows {
        w.write_record([
            r.k.to_string(),
            r.estimate.to_string(),
            fmt6(r.sir_db),
            fmt6(r.sdr_db),
            fmt6(r.si_sdr_db),
            fmt6(r.sir_delta_db),
            fmt6(r.sdr_delta_db),
            fmt6(loaded.meta.rt60_ms),
            k.to_string(),
        ])?;
    }
    w.flush().map_err(CliError::io(&p))?;
    Ok(rows)
}
