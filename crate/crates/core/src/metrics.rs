//! Separation quality scores.
//!
//! `bss_eval`-style SIR/SDR from least-squares projections onto 512-tap
//! filtered references, with permutation resolution, plus SI-SDR.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::C64;

pub const PROJECTION_TAPS: usize = 512;

/// Scores are clamped to `[-SCORE_CAP, SCORE_CAP]` dB.
pub const SCORE_CAP: f64 = 100.0;

const RIDGE: f64 = 1e-10;

pub fn capped_db(num: f64, den: f64) -> f64 {
    if !(den > 0.0) || num / den > 10f64.powf(SCORE_CAP / 10.0) {
        return if num > 0.0 { SCORE_CAP } else { -SCORE_CAP };
    }
    if !(num > 0.0) {
        return -SCORE_CAP;
    }
    (10.0 * (num / den).log10()).clamp(-SCORE_CAP, SCORE_CAP)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    /// Indexed by source.
    pub sir_db: Vec<f64>,
    pub sdr_db: Vec<f64>,
    pub si_sdr_db: Vec<f64>,
    /// `permutation[j]` is the estimate assigned to source `j`.
    pub permutation: Vec<usize>,
    /// Per-bin narrowband SIR of each output, when available.
    pub narrowband_sir: Vec<Vec<f64>>,
    pub objective_trace: Vec<f64>,
}

impl EvalReport {
    pub fn mean_sir(&self) -> f64 {
        mean(&self.sir_db)
    }

    pub fn mean_sdr(&self) -> f64 {
        mean(&self.sdr_db)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Processed minus unprocessed scores, per source.
#[derive(Clone, Debug, PartialEq)]
pub struct Improvement {
    pub sir_db: Vec<f64>,
    pub sdr_db: Vec<f64>,
    pub si_sdr_db: Vec<f64>,
    pub mean_sir_db: f64,
    pub mean_sdr_db: f64,
    pub permutation_mismatch: bool,
}

pub fn improvement(processed: &EvalReport, unprocessed: &EvalReport) -> Result<Improvement> {
    let k = processed.sir_db.len();
    if unprocessed.sir_db.len() != k {
        return Err(Error::LengthMismatch(format!(
            "reports cover {} and {} sources",
            k,
            unprocessed.sir_db.len()
        )));
    }
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
    let sir_db = diff(&processed.sir_db, &unprocessed.sir_db);
    let sdr_db = diff(&processed.sdr_db, &unprocessed.sdr_db);
    let si_sdr_db = diff(&processed.si_sdr_db, &unprocessed.si_sdr_db);
    let permutation_mismatch = processed.permutation != unprocessed.permutation;
    if permutation_mismatch {
        log::warn!(
            "permutation mismatch: processed {:?}, unprocessed {:?}",
            processed.permutation,
            unprocessed.permutation
        );
    }
    Ok(Improvement {
        mean_sir_db: mean(&sir_db),
        mean_sdr_db: mean(&sdr_db),
        sir_db,
        sdr_db,
        si_sdr_db,
        permutation_mismatch,
    })
}

/// Scale-invariant SDR with the optimal scalar projection.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::LengthMismatch(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if !(rr > 0.0) {
        return Err(Error::SilentReference(0));
    }
    let alpha = estimate.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / rr;
    let (mut t, mut n) = (0.0, 0.0);
    for (e, r) in estimate.iter().zip(reference) {
        let target = alpha * r;
        t += target * target;
        n += (e - target) * (e - target);
    }
    Ok(capped_db(t, n))
}

/// Packed lower Cholesky factor of a symmetric positive definite matrix.
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors `g + ridge * mean(diag) * I`, raising the ridge until it succeeds.
    fn new_regularised(g: &[f64], n: usize) -> Result<Self> {
        let scale = (0..n).map(|i| g[i * n + i]).sum::<f64>() / n as f64;
        let mut ridge = RIDGE;
        while ridge < 1e-2 {
            if let Some(c) = Self::try_new(g, n, ridge * scale) {
                return Ok(c);
            }
            ridge *= 10.0;
        }
        Err(Error::NotPositiveDefinite)
    }

    fn try_new(g: &[f64], n: usize, load: f64) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            let (prev, cur) = l.split_at_mut(i * n);
            let row_i = &mut cur[..n];
            for j in 0..i {
                let row_j = &prev[j * n..j * n + j];
                let s = g[i * n + j] - row_i[..j].iter().zip(row_j).map(|(a, b)| a * b).sum::<f64>();
                row_i[j] = s / prev[j * n + j];
            }
            let d = g[i * n + i] + load - row_i[..i].iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) {
                return None;
            }
            row_i[i] = d.sqrt();
        }
        Some(Cholesky { n, l })
    }

    /// `b^T G^{-1} b = ||L^{-1} b||^2`.
    fn quad_inverse(&self, b: &[f64]) -> f64 {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = b[i] - row.iter().zip(&y[..i]).map(|(a, c)| a * c).sum::<f64>();
            y[i] = s / self.l[i * n + i];
        }
        y.iter().map(|v| v * v).sum()
    }
}

/// Cached reference statistics for scoring any number of estimate sets.
pub struct BssEval {
    len: usize,
    taps: usize,
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    ref_spectra: Vec<Vec<C64>>,
    references: Vec<Vec<f64>>,
    all: Cholesky,
    each: Vec<Cholesky>,
}

impl BssEval {
    pub fn new(references: &[&[f64]]) -> Result<Self> {
        Self::with_taps(references, PROJECTION_TAPS)
    }

    pub fn with_taps(references: &[&[f64]], taps: usize) -> Result<Self> {
        let k = references.len();
        if k == 0 {
            return Err(Error::InvalidArgument("no references".into()));
        }
        let len = references[0].len();
        if references.iter().any(|r| r.len() != len) {
            return Err(Error::LengthMismatch("references differ in length".into()));
        }
        for (j, r) in references.iter().enumerate() {
            if !r.iter().any(|v| *v != 0.0) {
                return Err(Error::SilentReference(j));
            }
        }
        let n_fft = (len + 2 * taps).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n_fft);
        let ifft = planner.plan_fft_inverse(n_fft);
        let ref_spectra: Vec<Vec<C64>> = references.par_iter().map(|r| spectrum(&fft, r, n_fft)).collect();
        // corr[i][j][tau] = sum_m r_i[m] r_j[m + tau], tau in (-taps, taps).
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
        let corr: Vec<Vec<C64>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let mut buf: Vec<C64> =
                    ref_spectra[j].iter().zip(&ref_spectra[i]).map(|(a, b)| a * b.conj()).collect();
                ifft.process(&mut buf);
                buf
            })
            .collect();
        let lag = |i: usize, j: usize, tau: isize| -> f64 {
            let idx = if tau >= 0 { tau as usize } else { n_fft - (-tau) as usize };
            corr[i * k + j][idx].re / n_fft as f64
        };
        let n = k * taps;
        let mut g = vec![0.0; n * n];
        for i in 0..k {
            for a in 0..taps {
                for j in 0..k {
                    for b in 0..taps {
                        g[(i * taps + a) * n + j * taps + b] = lag(i, j, a as isize - b as isize);
                    }
                }
            }
        }
        let each = (0..k)
            .into_par_iter()
            .map(|j| {
                let mut gj = vec![0.0; taps * taps];
                for a in 0..taps {
                    for b in 0..taps {
                        gj[a * taps + b] = lag(j, j, a as isize - b as isize);
                    }
                }
                Cholesky::new_regularised(&gj, taps)
            })
            .collect::<Result<Vec<_>>>()?;
        let all = Cholesky::new_regularised(&g, n)?;
        let references = references.iter().map(|r| r.to_vec()).collect();
        Ok(BssEval { len, taps, n_fft, fft, ifft, ref_spectra, references, all, each })
    }

    pub fn n_sources(&self) -> usize {
        self.each.len()
    }

    /// `(E_j for every reference j, E_all, ||e||^2)` for one estimate.
    fn energies(&self, estimate: &[f64]) -> (Vec<f64>, f64, f64) {
        let k = self.n_sources();
        let spec = spectrum(&self.fft, estimate, self.n_fft);
        // d[j][a] = sum_n r_j[n - a] e[n].
        let d: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let mut buf: Vec<C64> = spec.iter().zip(&self.ref_spectra[j]).map(|(e, r)| e * r.conj()).collect();
                self.ifft.process(&mut buf);
                buf[..self.taps].iter().map(|z| z.re / self.n_fft as f64).collect()
            })
            .collect();
        let per: Vec<f64> = (0..k).map(|j| self.each[j].quad_inverse(&d[j])).collect();
        let all = self.all.quad_inverse(&d.concat());
        let total = estimate.iter().map(|v| v * v).sum();
        (per, all, total)
    }

    /// Scores with the permutation maximising mean SIR.
    pub fn evaluate(&self, estimates: &[&[f64]]) -> Result<EvalReport> {
        self.evaluate_with(estimates, None)
    }

    /// Scores with estimate `j` assigned to source `j`.
    pub fn evaluate_identity(&self, estimates: &[&[f64]]) -> Result<EvalReport> {
        let perm: Vec<usize> = (0..self.n_sources()).collect();
        self.evaluate_with(estimates, Some(&perm))
    }

    pub fn evaluate_with(&self, estimates: &[&[f64]], fixed: Option<&[usize]>) -> Result<EvalReport> {
        let k = self.n_sources();
        if estimates.len() != k {
            return Err(Error::LengthMismatch(format!("{} estimates for {} references", estimates.len(), k)));
        }
        if let Some(bad) = estimates.iter().find(|e| e.len() != self.len) {
            return Err(Error::LengthMismatch(format!(
                "estimate has {} samples, references {}",
                bad.len(),
                self.len
            )));
        }
        let energies: Vec<(Vec<f64>, f64, f64)> = estimates.par_iter().map(|e| self.energies(e)).collect();
        // sir[i][j]: estimate i scored against source j.
        let sir: Vec<Vec<f64>> = energies
            .iter()
            .map(|(per, all, _)| per.iter().map(|&ej| capped_db(ej, (all - ej).max(0.0))).collect())
            .collect();
        let permutation = match fixed {
            Some(p) => {
                let mut seen = vec![false; k];
                if p.len() != k || p.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
                    return Err(Error::InvalidArgument(format!("{p:?} is not a permutation")));
                }
                p.to_vec()
            }
            None => best_permutation(&sir),
        };
        let mut report = EvalReport { permutation: permutation.clone(), ..Default::default() };
        for (j, &i) in permutation.iter().enumerate() {
            let (per, _, total) = &energies[i];
            report.sir_db.push(sir[i][j]);
            report.sdr_db.push(capped_db(per[j], (total - per[j]).max(0.0)));
            report.si_sdr_db.push(si_sdr(estimates[i], &self.references[j])?);
        }
        Ok(report)
    }
}

fn spectrum(fft: &Arc<dyn Fft<f64>>, x: &[f64], n_fft: usize) -> Vec<C64> {
    let mut buf = vec![C64::new(0.0, 0.0); n_fft];
    for (b, v) in buf.iter_mut().zip(x) {
        b.re = *v;
    }
    fft.process(&mut buf);
    buf
}

/// Permutation (source -> estimate) maximising the mean of `sir[i][j]`.
fn best_permutation(sir: &[Vec<f64>]) -> Vec<usize> {
    let k = sir.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_score = f64::NEG_INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let s: f64 = p.iter().enumerate().map(|(j, &i)| sir[i][j]).sum();
        if s > best_score {
            best_score = s;
            best = p.to_vec();
        }
    });
    best
}

/// Visits all permutations in a fixed order (Heap-free lexicographic recursion).
fn permute(p: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

/// One-shot scoring against `references` (images at their reference microphones).
pub fn bss_eval(estimates: &[&[f64]], references: &[&[f64]]) -> Result<EvalReport> {
    BssEval::new(references)?.evaluate(estimates)
}
