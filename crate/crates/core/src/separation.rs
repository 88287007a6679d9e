//! Shared core of the auxiliary-function separators.
//!
//! Weighted covariances, demixing-row updates and normalisation, the
//! independence objective, application of the demixing stack, and the
//! minimal-distortion rescaling that fixes the output scale.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::stft::Spectrogram;

/// Relative floor applied to contrast weights and variances.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// Absolute floor, used when a source is entirely silent.
pub const ABSOLUTE_FLOOR: f64 = 1e-30;

/// Relative loading `1e-10 * trace / K` applied to `V_k` before it is inverted.
pub const UPDATE_LOADING: f64 = 1e-10;

/// Floor on `w^H V w` below which a row cannot be normalised.
pub const DEGENERATE_FLOOR: f64 = 1e-30;

/// Per-frequency demixing matrices; row `k` of `W(f)` is `w_k^H(f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemixingStack {
    dim: usize,
    mats: Vec<CMat>,
}

impl DemixingStack {
    pub fn identity(dim: usize, n_freq: usize) -> Self {
        DemixingStack { dim, mats: vec![CMat::identity(dim); n_freq] }
    }

    pub fn from_mats(mats: Vec<CMat>) -> Result<Self> {
        let dim = mats.first().map(|m| m.dim()).ok_or_else(|| {
            Error::InvalidArgument("demixing stack needs at least one bin".into())
        })?;
        if mats.iter().any(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch("demixing matrices differ in size".into()));
        }
        Ok(DemixingStack { dim, mats })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_freq(&self) -> usize {
        self.mats.len()
    }

    pub fn get(&self, f: usize) -> &CMat {
        &self.mats[f]
    }

    pub fn mats(&self) -> &[CMat] {
        &self.mats
    }

    pub fn mats_mut(&mut self) -> &mut [CMat] {
        &mut self.mats
    }

    pub fn into_mats(self) -> Vec<CMat> {
        self.mats
    }

    /// The filter `w_k(f)` (conjugate of row `k`).
    pub fn filter(&self, f: usize, k: usize) -> CVec {
        self.mats[f].row(k).conj()
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(CMat::is_finite)
    }
}

/// Non-negative real values per source, bin and frame.
///
/// Holds contrast weights `phi_k(f, t)` or source variances `v_k(f, t)`.
/// Stored so that the frames of one `(k, f)` pair are contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    n_sources: usize,
    n_freq: usize,
    n_frames: usize,
    data: Vec<f64>,
}

impl WeightField {
    pub fn filled(n_sources: usize, n_freq: usize, n_frames: usize, value: f64) -> Self {
        WeightField { n_sources, n_freq, n_frames, data: vec![value; n_sources * n_freq * n_frames] }
    }

    pub fn from_fn(
        n_sources: usize,
        n_freq: usize,
        n_frames: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(n_sources * n_freq * n_frames);
        for k in 0..n_sources {
            for b in 0..n_freq {
                for t in 0..n_frames {
                    data.push(f(k, b, t));
                }
            }
        }
        WeightField { n_sources, n_freq, n_frames, data }
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[inline]
    pub fn get(&self, k: usize, f: usize, t: usize) -> f64 {
        self.data[(k * self.n_freq + f) * self.n_frames + t]
    }

    #[inline]
    pub fn set(&mut self, k: usize, f: usize, t: usize, v: f64) {
        self.data[(k * self.n_freq + f) * self.n_frames + t] = v;
    }

    /// All frames of source `k` at bin `f`.
    pub fn row(&self, k: usize, f: usize) -> &[f64] {
        let o = (k * self.n_freq + f) * self.n_frames;
        &self.data[o..o + self.n_frames]
    }

    pub fn row_mut(&mut self, k: usize, f: usize) -> &mut [f64] {
        let o = (k * self.n_freq + f) * self.n_frames;
        &mut self.data[o..o + self.n_frames]
    }

    /// All `(f, t)` values of source `k`, frequency-major.
    pub fn source(&self, k: usize) -> &[f64] {
        let len = self.n_freq * self.n_frames;
        &self.data[k * len..(k + 1) * len]
    }

    pub fn source_mut(&mut self, k: usize) -> &mut [f64] {
        let len = self.n_freq * self.n_frames;
        &mut self.data[k * len..(k + 1) * len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite_positive(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && *v > 0.0)
    }

    /// Clamps each source's values below at `rel * mean` of that source. An
    /// all-zero source is clamped against the mean over all sources instead.
    pub fn clamp_relative(&mut self, rel: f64) {
        let global = relative_floor(&self.data, rel);
        for k in 0..self.n_sources {
            let vals = self.source_mut(k);
            let own = relative_floor(vals, rel);
            let floor = if vals.iter().all(|&v| v == 0.0) { global } else { own };
            for v in vals {
                *v = v.max(floor);
            }
        }
    }
}

fn relative_floor(vals: &[f64], rel: f64) -> f64 {
    let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
    (rel * mean).max(ABSOLUTE_FLOOR)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovarianceRole {
    Weighted,
    Source,
    Interference,
}

/// One Hermitian matrix per source and bin.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSet {
    pub role: CovarianceRole,
    n_sources: usize,
    n_freq: usize,
    mats: Vec<CMat>,
}

impl CovarianceSet {
    /// `per_source[k][f]`.
    pub fn new(role: CovarianceRole, per_source: Vec<Vec<CMat>>) -> Result<Self> {
        let n_sources = per_source.len();
        let n_freq = per_source.first().map_or(0, Vec::len);
        if n_sources == 0 || n_freq == 0 || per_source.iter().any(|v| v.len() != n_freq) {
            return Err(Error::ShapeMismatch("covariance set needs K x F matrices".into()));
        }
        Ok(CovarianceSet { role, n_sources, n_freq, mats: per_source.into_iter().flatten().collect() })
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn get(&self, k: usize, f: usize) -> &CMat {
        &self.mats[k * self.n_freq + f]
    }

    pub fn source(&self, k: usize) -> &[CMat] {
        &self.mats[k * self.n_freq..(k + 1) * self.n_freq]
    }

    pub fn scaled(&self, c: f64) -> CovarianceSet {
        let mut out = self.clone();
        for m in &mut out.mats {
            *m = m.scale_real(c);
        }
        out
    }
}

/// Diagonal loading amount.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiagonalLoading {
    Absolute(f64),
    /// `rel * trace(M) / K`.
    RelativeToTrace(f64),
}

impl Default for DiagonalLoading {
    fn default() -> Self {
        DiagonalLoading::RelativeToTrace(1e-6)
    }
}

impl DiagonalLoading {
    pub fn amount(&self, m: &CMat) -> f64 {
        match *self {
            DiagonalLoading::Absolute(eps) => eps,
            DiagonalLoading::RelativeToTrace(rel) => rel * m.trace().re / m.dim() as f64,
        }
    }

    pub fn apply(&self, m: &CMat) -> CMat {
        m.diag_load(self.amount(m))
    }
}

/// Source model behind the contrast weights.
#[derive(Clone, Copy, Debug)]
pub enum Contrast<'a> {
    /// Per-bin Laplacian, `r = |y_k(f,t)|`.
    Fdica,
    /// Spherical Laplacian over frequency, `r = ||y_k(t)||_2`.
    Iva,
    /// Gaussian with given variances `v_k(f,t)`.
    Variance(&'a WeightField),
}

/// `V_k(f) = mean_t phi(t) x(f,t) x(f,t)^H`, exactly Hermitian.
pub fn weighted_covariance(x: &Spectrogram, phi: &[f64], f: usize) -> CMat {
    let k = x.n_channels();
    let n = x.n_frames();
    debug_assert_eq!(phi.len(), n);
    let mut v = CMat::zeros(k);
    for (xt, &w) in x.bin(f).chunks_exact(k).zip(phi) {
        v.add_weighted_outer(xt, w);
    }
    v.scale_real(1.0 / n.max(1) as f64).hermitian_part()
}

/// Per-frame full-band norms `||y_k(t)||_2`, indexed `[k][t]`.
pub fn frame_norms(y: &Spectrogram) -> Vec<Vec<f64>> {
    let (kk, nf, nt) = (y.n_channels(), y.n_freq(), y.n_frames());
    let mut acc = vec![vec![0.0; nt]; kk];
    for f in 0..nf {
        for (t, yt) in y.bin(f).chunks_exact(kk).enumerate() {
            for k in 0..kk {
                acc[k][t] += yt[k].norm_sqr();
            }
        }
    }
    for row in &mut acc {
        for v in row.iter_mut() {
            *v = v.sqrt();
        }
    }
    acc
}

/// Weights `phi_k(f,t) = G'(r)/r` of the chosen source model, floored per
/// source at [`WEIGHT_FLOOR`] times the mean of `r` (or of `v`).
pub fn contrast_weights(y: &Spectrogram, model: Contrast<'_>) -> Result<WeightField> {
    let (kk, nf, nt) = (y.n_channels(), y.n_freq(), y.n_frames());
    match model {
        Contrast::Fdica => {
            let mut r = WeightField::from_fn(kk, nf, nt, |k, f, t| y.get(k, f, t).norm());
            r.clamp_relative(WEIGHT_FLOOR);
            r.data.iter_mut().for_each(|v| *v = 1.0 / *v);
            Ok(r)
        }
        Contrast::Iva => {
            let mut norms = frame_norms(y);
            for row in &mut norms {
                let floor = relative_floor(row, WEIGHT_FLOOR);
                row.iter_mut().for_each(|v| *v = 1.0 / v.max(floor));
            }
            Ok(WeightField::from_fn(kk, nf, nt, |k, _, t| norms[k][t]))
        }
        Contrast::Variance(v) => {
            if (v.n_sources, v.n_freq, v.n_frames) != (kk, nf, nt) {
                return Err(Error::ShapeMismatch(format!(
                    "variance field is {}x{}x{}, estimate is {}x{}x{}",
                    v.n_sources, v.n_freq, v.n_frames, kk, nf, nt
                )));
            }
            let mut w = v.clone();
            w.clamp_relative(WEIGHT_FLOOR);
            w.data.iter_mut().for_each(|x| *x = 1.0 / *x);
            Ok(w)
        }
    }
}

/// `w_k = V_k^{-1} W^{-1} e_k`, with `V_k` loaded by [`UPDATE_LOADING`] first.
pub fn update_demixing_row(v: &CMat, w: &CMat, k: usize) -> Result<CVec> {
    solve_row(&DiagonalLoading::RelativeToTrace(UPDATE_LOADING).apply(v), w, k)
}

fn solve_row(loaded: &CMat, w: &CMat, k: usize) -> Result<CVec> {
    let sol = (*w * *loaded).solve(&CVec::unit(w.dim(), k))?;
    if sol.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(sol)
    } else {
        Err(Error::SingularMatrix)
    }
}

/// Scales `w` so that `w^H V w = 1`. Fails when the quadratic form is below
/// [`DEGENERATE_FLOOR`] times `||w||^2 trace(V) / K`.
pub fn normalize_row(w: &CVec, v: &CMat) -> Result<CVec> {
    let q = v.quad_form(w);
    let scale = w.norm_sqr() * v.trace().re / v.dim() as f64;
    if !(q > DEGENERATE_FLOOR * scale) || !q.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    Ok(w.scale(C64::new(1.0 / q.sqrt(), 0.0)))
}

/// `y(f,t) = W(f) x(f,t)`.
pub fn apply_demixing(w: &DemixingStack, x: &Spectrogram) -> Result<Spectrogram> {
    if w.n_freq() != x.n_freq() || w.dim() != x.n_channels() {
        return Err(Error::ShapeMismatch(format!(
            "demixing stack {}x{} bins vs spectrogram {} channels, {} bins",
            w.dim(),
            w.n_freq(),
            x.n_channels(),
            x.n_freq()
        )));
    }
    let k = x.n_channels();
    let mut y = x.zeros_like(k);
    y.par_bins_mut().enumerate().for_each(|(f, out)| {
        let m = w.get(f);
        for (yt, xt) in out.chunks_exact_mut(k).zip(x.bin(f).chunks_exact(k)) {
            m.apply_into(xt, yt);
        }
    });
    Ok(y)
}

/// Compensated (Neumaier) running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `sum_{k,t} G(y_k(t)) - T sum_f log|det W(f)|`.
///
/// `G` is `|y|` per bin for [`Contrast::Fdica`], `||y_k(t)||_2` for
/// [`Contrast::Iva`] and `|y|^2 / (2 v)` for [`Contrast::Variance`], so that
/// `G'(r)/r` is the weight used by the updates. The log-determinant term is
/// counted once per frame; the mean-based updates minimise this sum.
pub fn objective(y: &Spectrogram, w: &DemixingStack, model: Contrast<'_>) -> Result<f64> {
    if w.n_freq() != y.n_freq() || w.dim() != y.n_channels() {
        return Err(Error::ShapeMismatch("objective: stack and estimate disagree".into()));
    }
    let (kk, nf, nt) = (y.n_channels(), y.n_freq(), y.n_frames());
    let mut acc = Neumaier::default();
    match model {
        Contrast::Iva => {
            for row in frame_norms(y) {
                row.iter().for_each(|&v| acc.add(v));
            }
        }
        Contrast::Fdica => {
            y.data().iter().for_each(|z| acc.add(z.norm()));
        }
        Contrast::Variance(v) => {
            for k in 0..kk {
                for f in 0..nf {
                    for t in 0..nt {
                        acc.add(y.get(k, f, t).norm_sqr() / (2.0 * v.get(k, f, t)));
                    }
                }
            }
        }
    }
    for m in w.mats() {
        let d = m.det().norm();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SingularMatrix);
        }
        acc.add(-(nt as f64) * d.ln());
    }
    Ok(acc.value())
}

/// `W'(f) = diag(W(f)^{-1}) W(f)`: output `k` then estimates the image of
/// its source at microphone `k`.
pub fn minimal_distortion_rescale(w: &DemixingStack) -> Result<DemixingStack> {
    let mats = w
        .mats()
        .par_iter()
        .map(|m| {
            let inv = m.inverse()?;
            let mut out = *m;
            for i in 0..m.dim() {
                let s = inv[(i, i)];
                let row = m.row(i).scale(s);
                out.set_row(i, &row);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DemixingStack { dim: w.dim, mats })
}

/// One auxiliary-function sweep: for each source `k` (outer), every bin
/// (in parallel) gets `V_k(f)` from `weights`, the row update and, when
/// `normalize` is set, the unit-power normalisation.
pub fn auxiliary_sweep(
    x: &Spectrogram,
    w: &mut DemixingStack,
    weights: &WeightField,
    normalize: bool,
) -> Result<()> {
    let kk = w.dim();
    for k in 0..kk {
        w.mats_mut().par_iter_mut().enumerate().try_for_each(|(f, m)| -> Result<()> {
            // Normalising against the same loaded matrix keeps rank-deficient
            // mixtures (a silent source) away from a zero quadratic form.
            let v = DiagonalLoading::RelativeToTrace(UPDATE_LOADING).apply(&weighted_covariance(x, weights.row(k, f), f));
            let mut row = solve_row(&v, m, k)?;
            if normalize {
                row = normalize_row(&row, &v)?;
            }
            m.set_row(k, &row.conj());
            Ok(())
        })?;
    }
    Ok(())
}
