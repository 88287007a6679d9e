//! Benchmark sweeps: scenario x algorithm cells, per-source CSV rows and a
//! summary grouped by algorithm, rt60 bucket and source count.

use std::io::Write;
use std::path::Path;

use bss_core::algorithms::{oracle_interference_masks, separate, Algo, OracleInfo, SeparationInputs, SeparatorConfig};
use bss_core::metrics::{improvement, BssEval, EvalReport, Improvement};
use bss_core::roomsim::{generate_scenario, Scenario};
use bss_core::stft::{synthesize, Spectrogram, StftConfig, Waveform};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const BENCH_HEADER: [&str; 11] = [
    "seed",
    "algo",
    "k",
    "sir_db",
    "sdr_db",
    "si_sdr_db",
    "sir_delta_db",
    "sdr_delta_db",
    "rt60_ms",
    "n_sources",
    "failed",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "algo",
    "rt60_bucket_ms",
    "n_sources",
    "rows",
    "failed",
    "sir_delta_db",
    "sdr_delta_db",
    "sir_db",
    "sdr_db",
];

/// One source of one (scenario, algorithm) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub seed: u64,
    pub algo: Algo,
    pub k: usize,
    pub sir_db: f64,
    pub sdr_db: f64,
    pub si_sdr_db: f64,
    pub sir_delta_db: f64,
    pub sdr_delta_db: f64,
    pub rt60_ms: f64,
    pub n_sources: usize,
    pub failed: bool,
}

/// Six decimals; NaN as `nan`.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.6}")
    }
}

impl BenchRow {
    pub fn failed(seed: u64, algo: Algo, k: usize, rt60_ms: f64, n_sources: usize) -> Self {
        BenchRow {
            seed,
            algo,
            k,
            sir_db: f64::NAN,
            sdr_db: f64::NAN,
            si_sdr_db: f64::NAN,
            sir_delta_db: f64::NAN,
            sdr_delta_db: f64::NAN,
            rt60_ms,
            n_sources,
            failed: true,
        }
    }

    pub fn record(&self) -> [String; 11] {
        let f = fmt6;
        [
            self.seed.to_string(),
            self.algo.name().to_string(),
            self.k.to_string(),
            f(self.sir_db),
            f(self.sdr_db),
            f(self.si_sdr_db),
            f(self.sir_delta_db),
            f(self.sdr_delta_db),
            f(self.rt60_ms),
            self.n_sources.to_string(),
            u8::from(self.failed).to_string(),
        ]
    }
}

/// References and the unprocessed baseline of one scenario.
pub struct Scoring {
    eval: BssEval,
    baseline: EvalReport,
}

impl Scoring {
    /// References are the images at mic `k`; the baseline scores mixture
    /// channel `k` against source `k`.
    pub fn new(scn: &Scenario) -> CliResult<Self> {
        let refs: Vec<&[f64]> = (0..scn.n_sources()).map(|k| scn.reference(k)).collect();
        let eval = BssEval::new(&refs)?;
        let mix: Vec<&[f64]> = (0..scn.n_sources()).map(|k| scn.mixture.channel(k)).collect();
        let baseline = eval.evaluate_identity(&mix)?;
        Ok(Scoring { eval, baseline })
    }

    pub fn baseline(&self) -> &EvalReport {
        &self.baseline
    }

    pub fn score(&self, estimates: &Waveform) -> CliResult<(EvalReport, Improvement)> {
        let est: Vec<&[f64]> = estimates.channels().iter().map(Vec::as_slice).collect();
        let report = self.eval.evaluate(&est)?;
        let delta = improvement(&report, &self.baseline)?;
        Ok((report, delta))
    }

    pub fn rows(&self, seed: u64, algo: Algo, rt60_ms: f64, estimates: &Waveform) -> CliResult<Vec<BenchRow>> {
        let (r, d) = self.score(estimates)?;
        Ok((0..r.sir_db.len())
            .map(|k| BenchRow {
                seed,
                algo,
                k,
                sir_db: r.sir_db[k],
                sdr_db: r.sdr_db[k],
                si_sdr_db: r.si_sdr_db[k],
                sir_delta_db: d.sir_db[k],
                sdr_delta_db: d.sdr_db[k],
                rt60_ms,
                n_sources: r.sir_db.len(),
                failed: false,
            })
            .collect())
    }
}

/// Separates and synthesises; `mvica-mask` uses oracle interference masks.
pub fn run_algo(
    algo: Algo,
    x: &Spectrogram,
    oracle: &OracleInfo,
    config: &SeparatorConfig,
) -> CliResult<Waveform> {
    let masks = match algo {
        Algo::MvicaMask => Some(oracle_interference_masks(x, oracle)?),
        _ => None,
    };
    let inputs = SeparationInputs { oracle: Some(oracle), masks: masks.as_ref() };
    let out = separate(algo, x, inputs, config)?;
    Ok(synthesize(&out.y)?)
}

struct Prepared {
    x: Spectrogram,
    oracle: OracleInfo,
    scoring: Scoring,
    rt60_ms: f64,
}

fn prepare(config: &ExperimentConfig, index: usize, stft: StftConfig) -> CliResult<Prepared> {
    let scn = generate_scenario(&config.scenario(index), config.scenario_seed(index))?;
    let rt60_ms = scn.room.as_ref().map_or(f64::NAN, |r| r.rt60 * 1000.0);
    let (x, oracle) = OracleInfo::from_scenario(&scn, stft)?;
    let scoring = Scoring::new(&scn)?;
    Ok(Prepared { x, oracle, scoring, rt60_ms })
}

/// Every algorithm on scenario `index`; failures become flagged rows.
pub fn run_scenario(config: &ExperimentConfig, index: usize) -> Vec<BenchRow> {
    let seed = config.scenario_seed(index);
    let k = config.n_sources;
    let fallback_rt60 = match config.scenario(index).rt60 {
        bss_core::roomsim::Rt60Choice::Fixed(t) => t * 1000.0,
        _ => f64::NAN,
    };
    let failed_cell = |algo: Algo, rt60: f64| (0..k).map(move |j| BenchRow::failed(seed, algo, j, rt60, k));
    let prepared = config.stft().and_then(|stft| prepare(config, index, stft));
    let p = match prepared {
        Ok(p) => p,
        Err(e) => {
            log::warn!("scenario seed {seed} failed: {e}");
            return config.algos.iter().flat_map(|&a| failed_cell(a, fallback_rt60)).collect();
        }
    };
    let sep = config.separator();
    let mut rows = Vec::with_capacity(config.algos.len() * k);
    for &algo in &config.algos {
        let cell = run_algo(algo, &p.x, &p.oracle, &sep).and_then(|y| p.scoring.rows(seed, algo, p.rt60_ms, &y));
        match cell {
            Ok(r) => rows.extend(r),
            Err(e) => {
                log::warn!("seed {seed}, {algo} failed: {e}");
                rows.extend(failed_cell(algo, p.rt60_ms));
            }
        }
    }
    log::info!("scenario seed {seed} done");
    rows
}

/// Runs `f` on a pool of `workers` threads (0: rayon default).
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::usage(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// All cells in scenario order.
pub fn run_bench(config: &ExperimentConfig) -> CliResult<Vec<BenchRow>> {
    config.validate()?;
    if config.algos.is_empty() {
        return Err(CliError::usage("no algorithms to benchmark"));
    }
    let rows = with_pool(config.workers, || {
        (0..config.n_scenarios).into_par_iter().map(|i| run_scenario(config, i)).collect::<Vec<_>>()
    })?;
    Ok(rows.into_iter().flatten().collect())
}

/// `# generated_at: <timestamp>` followed by the CSV table.
pub fn write_bench_csv(out: impl Write, rows: &[BenchRow], timestamp: &str) -> CliResult<()> {
    let mut out = out;
    writeln!(out, "# generated_at: {timestamp}").map_err(CliError::io("bench.csv"))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(CliError::io("bench.csv"))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub algo: Algo,
    pub rt60_bucket_ms: i64,
    pub n_sources: usize,
    pub rows: usize,
    pub failed: usize,
    pub sir_delta_db: f64,
    pub sdr_delta_db: f64,
    pub sir_db: f64,
    pub sdr_db: f64,
}

impl SummaryRow {
    pub fn record(&self) -> [String; 9] {
        let f = fmt6;
        [
            self.algo.name().to_string(),
            self.rt60_bucket_ms.to_string(),
            self.n_sources.to_string(),
            self.rows.to_string(),
            self.failed.to_string(),
            f(self.sir_delta_db),
            f(self.sdr_delta_db),
            f(self.sir_db),
            f(self.sdr_db),
        ]
    }
}

/// rt60 rounded to the nearest 100 ms; -1 when unknown.
pub fn rt60_bucket(ms: f64) -> i64 {
    if ms.is_finite() {
        ((ms / 100.0).round() * 100.0) as i64
    } else {
        -1
    }
}

/// Means over the non-failed rows of each (algo, rt60 bucket, K) group.
/// Algorithms keep their first-appearance order; buckets and K ascend.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut algos: Vec<Algo> = Vec::new();
    for r in rows {
        if !algos.contains(&r.algo) {
            algos.push(r.algo);
        }
    }
    let mut keys: Vec<(usize, i64, usize)> = rows
        .iter()
        .map(|r| (algos.iter().position(|a| *a == r.algo).unwrap(), rt60_bucket(r.rt60_ms), r.n_sources))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(ai, bucket, k)| {
            let group: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.algo == algos[ai] && rt60_bucket(r.rt60_ms) == bucket && r.n_sources == k)
                .collect();
            let ok: Vec<&&BenchRow> = group.iter().filter(|r| !r.failed).collect();
            let mean = |f: fn(&BenchRow) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            SummaryRow {
                algo: algos[ai],
                rt60_bucket_ms: bucket,
                n_sources: k,
                rows: group.len(),
                failed: group.len() - ok.len(),
                sir_delta_db: mean(|r| r.sir_delta_db),
                sdr_delta_db: mean(|r| r.sdr_delta_db),
                sir_db: mean(|r| r.sir_db),
                sdr_db: mean(|r| r.sdr_db),
            }
        })
        .collect()
}

pub fn write_summary_csv(out: impl Write, summary: &[SummaryRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in summary {
        w.write_record(s.record())?;
    }
    w.flush().map_err(CliError::io("summary.csv"))?;
    Ok(())
}

/// Fixed-width text table of the summary.
pub fn format_summary(summary: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<20} {:>8} {:>3} {:>5} {:>6} {:>10} {:>10}\n",
        "algo", "rt60_ms", "K", "rows", "failed", "dSIR_dB", "dSDR_dB"
    );
    for r in summary {
        s.push_str(&format!(
            "{:<20} {:>8} {:>3} {:>5} {:>6} {:>10.2} {:>10.2}\n",
            r.algo.name(),
            r.rt60_bucket_ms,
            r.n_sources,
            r.rows,
            r.failed,
            r.sir_delta_db,
            r.sdr_delta_db
        ));
    }
    s
}

pub fn write_bench_outputs(dir: &Path, rows: &[BenchRow], timestamp: &str) -> CliResult<Vec<SummaryRow>> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let path = dir.join("bench.csv");
    let file = std::fs::File::create(&path).map_err(CliError::io(&path))?;
    write_bench_csv(std::io::BufWriter::new(file), rows, timestamp)?;
    let summary = summarize(rows);
    let path = dir.join("summary.csv");
    let file = std::fs::File::create(&path).map_err(CliError::io(&path))?;
    write_summary_csv(std::io::BufWriter::new(file), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(algo: Algo, rt60: f64, sir: f64, failed: bool) -> BenchRow {
        BenchRow {
            seed: 1,
            algo,
            k: 0,
            sir_db: sir,
            sdr_db: sir - 1.0,
            si_sdr_db: 0.0,
            sir_delta_db: sir,
            sdr_delta_db: sir - 1.0,
            rt60_ms: rt60,
            n_sources: 2,
            failed,
        }
    }

    #[test]
    fn buckets_round_to_100ms() {
        assert_eq!(rt60_bucket(149.0), 100);
        assert_eq!(rt60_bucket(151.0), 200);
        assert_eq!(rt60_bucket(f64::NAN), -1);
    }

    #[test]
    fn summary_skips_failed_rows() {
        let rows = vec![
            row(Algo::AuxIva, 210.0, 4.0, false),
            row(Algo::AuxIva, 190.0, 8.0, false),
            row(Algo::AuxIva, 200.0, f64::NAN, true),
            row(Algo::MvicaOracle, 300.0, 20.0, false),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].algo, Algo::AuxIva);
        assert_eq!((s[0].rows, s[0].failed), (3, 1));
        assert_eq!(s[0].sir_delta_db, 6.0);
        assert_eq!(s[1].rt60_bucket_ms, 300);
    }

    #[test]
    fn failed_rows_print_nan() {
        let r = BenchRow::failed(3, Algo::Ilrma, 1, 200.0, 2).record();
        assert_eq!(r[3], "nan");
        assert_eq!(r[10], "1");
    }
}
