//! Separator drivers.
//!
//! AuxIVA, FDICA weights, ILRMA, oracle-informed IDLMA/Kang weight rules,
//! MVICA (demixing from interference covariances) and the GEV beamformer.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{gen_eig_max, CMat, CVec, C64};
use crate::roomsim::Scenario;
use crate::separation::{
    apply_demixing, auxiliary_sweep, contrast_weights, minimal_distortion_rescale, objective,
    update_demixing_row, weighted_covariance, Contrast, CovarianceRole, CovarianceSet,
    DemixingStack, DiagonalLoading, WeightField, ABSOLUTE_FLOOR, DEGENERATE_FLOOR, WEIGHT_FLOOR,
};
use crate::stft::{analyze, Spectrogram, StftConfig};

/// Relative floor on oracle variances (IDLMA and Kang rules).
///
/// Much higher than [`WEIGHT_FLOOR`]: with exact oracle spectrograms, frames
/// where every source pauses would otherwise dominate all `V_k` alike.
pub const ORACLE_VARIANCE_FLOOR: f64 = 1e-3;

/// Largest mask magnitude accepted.
pub const MASK_CAP: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    /// MVICA with oracle interference covariances.
    MvicaOracle,
    /// MVICA with covariances from a mask set.
    MvicaMask,
    AuxIva,
    Fdica,
    Ilrma,
    IdlmaOracle,
    KangOracle,
    AuxIvaOracleInit,
    /// GEV beamformer with oracle covariances.
    GevOracle,
}

impl Algo {
    pub const ALL: [Algo; 9] = [
        Algo::MvicaOracle,
        Algo::MvicaMask,
        Algo::AuxIva,
        Algo::Fdica,
        Algo::Ilrma,
        Algo::IdlmaOracle,
        Algo::KangOracle,
        Algo::AuxIvaOracleInit,
        Algo::GevOracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algo::MvicaOracle => "mvica-oracle",
            Algo::MvicaMask => "mvica-mask",
            Algo::AuxIva => "auxiva",
            Algo::Fdica => "fdica",
            Algo::Ilrma => "ilrma",
            Algo::IdlmaOracle => "idlma-oracle",
            Algo::KangOracle => "kang-oracle",
            Algo::AuxIvaOracleInit => "auxiva-oracle-init",
            Algo::GevOracle => "gev-oracle",
        }
    }

    pub fn needs_oracle(&self) -> bool {
        matches!(
            self,
            Algo::MvicaOracle | Algo::IdlmaOracle | Algo::KangOracle | Algo::AuxIvaOracleInit | Algo::GevOracle
        )
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    Idlma,
    Kang,
    AuxIvaInit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparatorConfig {
    /// Outer sweeps for the iterative separators.
    pub iterations: usize,
    /// MVICA demixing iterations.
    pub l_iters: usize,
    pub eps_load: DiagonalLoading,
    pub nmf_bases: usize,
    pub nmf_updates: usize,
    pub seed: u64,
    /// Relative objective change that stops the iterative separators; 0 disables.
    pub tol: f64,
    /// Blind analytic normalisation for GEV; plain unit-norm filters otherwise.
    pub ban: bool,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        SeparatorConfig {
            iterations: 100,
            l_iters: 5,
            eps_load: DiagonalLoading::default(),
            nmf_bases: 2,
            nmf_updates: 2,
            seed: 0,
            tol: 1e-6,
            ban: true,
        }
    }
}

impl SeparatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.l_iters == 0 {
            return Err(Error::InvalidArgument("iterations and L must be at least 1".into()));
        }
        if self.nmf_bases == 0 {
            return Err(Error::InvalidArgument("nmf_bases must be at least 1".into()));
        }
        let eps = match self.eps_load {
            DiagonalLoading::Absolute(e) | DiagonalLoading::RelativeToTrace(e) => e,
        };
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("loading must be positive, got {eps}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SeparationOutput {
    pub w: DemixingStack,
    pub y: Spectrogram,
    /// Objective after initialisation and after each sweep (empty for MVICA/GEV).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Ground truth in the STFT domain.
#[derive(Clone, Debug)]
pub struct OracleInfo {
    /// `images[k]` is `S_k(f,t)` on all microphones.
    pub images: Vec<Spectrogram>,
    /// Dry sources, channel `k` is `s_k(f,t)`.
    pub dry: Spectrogram,
    /// `A(f)` whose column `k` is `a_k(f)`.
    pub mixing: Vec<CMat>,
}

impl OracleInfo {
    /// STFTs of a simulated scenario. Mixing columns are least-squares fits of
    /// each image onto its dry source. Returns the mixture STFT too.
    pub fn from_scenario(scn: &Scenario, config: StftConfig) -> Result<(Spectrogram, OracleInfo)> {
        let x = analyze(&scn.mixture, config)?;
        let images = scn.images.par_iter().map(|w| analyze(w, config)).collect::<Result<Vec<_>>>()?;
        let chans: Vec<Vec<f64>> = scn.dry.iter().map(|d| d.channel(0).to_vec()).collect();
        let dry = analyze(&crate::stft::Waveform::new(scn.sample_rate(), chans)?, config)?;
        let mixing = least_squares_mixing(&images, &dry);
        Ok((x, OracleInfo { images, dry, mixing }))
    }

    /// Exact narrowband mixture `X(f,t) = A(f) s(f,t)` with images `a_k(f) s_k(f,t)`.
    pub fn narrowband(dry: &Spectrogram, mixing: Vec<CMat>) -> Result<(Spectrogram, OracleInfo)> {
        let k = dry.n_channels();
        if mixing.len() != dry.n_freq() || mixing.iter().any(|a| a.dim() != k) {
            return Err(Error::ShapeMismatch("mixing matrices do not match the dry spectrogram".into()));
        }
        let mut images: Vec<Spectrogram> = (0..k).map(|_| dry.zeros_like(k)).collect();
        let mut x = dry.zeros_like(k);
        for f in 0..dry.n_freq() {
            for t in 0..dry.n_frames() {
                for src in 0..k {
                    let s = dry.get(src, f, t);
                    for m in 0..k {
                        let v = mixing[f][(m, src)] * s;
                        images[src].set(m, f, t, v);
                        x.set(m, f, t, x.get(m, f, t) + v);
                    }
                }
            }
        }
        Ok((x, OracleInfo { images, dry: dry.clone(), mixing }))
    }

    pub fn n_sources(&self) -> usize {
        self.images.len()
    }

    pub fn column(&self, k: usize, f: usize) -> CVec {
        self.mixing[f].column(k)
    }

    /// `|s_k(f,t)|^2`.
    pub fn dry_power(&self) -> WeightField {
        let d = &self.dry;
        WeightField::from_fn(d.n_channels(), d.n_freq(), d.n_frames(), |k, f, t| d.get(k, f, t).norm_sqr())
    }

    /// `mean_f |s_k(f,t)|^2`, indexed `[k][t]`.
    pub fn frame_variances(&self) -> Vec<Vec<f64>> {
        let d = &self.dry;
        (0..d.n_channels())
            .map(|k| {
                (0..d.n_frames())
                    .map(|t| (0..d.n_freq()).map(|f| d.get(k, f, t).norm_sqr()).sum::<f64>() / d.n_freq() as f64)
                    .collect()
            })
            .collect()
    }

    /// `E|s_k(f,t)|^2` over frames.
    pub fn source_power(&self, k: usize, f: usize) -> f64 {
        let n = self.dry.n_frames();
        (0..n).map(|t| self.dry.get(k, f, t).norm_sqr()).sum::<f64>() / n as f64
    }

    /// Checks that the images sum to `x` within `rel` relative error.
    pub fn consistent_with(&self, x: &Spectrogram, rel: f64) -> bool {
        let mut err = 0.0;
        for f in 0..x.n_freq() {
            for t in 0..x.n_frames() {
                for m in 0..x.n_channels() {
                    let s: C64 = self.images.iter().map(|img| img.get(m, f, t)).sum();
                    err += (x.get(m, f, t) - s).norm_sqr();
                }
            }
        }
        err.sqrt() <= rel * x.energy().sqrt()
    }
}

fn least_squares_mixing(images: &[Spectrogram], dry: &Spectrogram) -> Vec<CMat> {
    let k = images.len();
    (0..dry.n_freq())
        .into_par_iter()
        .map(|f| {
            let cols: Vec<CVec> = (0..k)
                .map(|src| {
                    let mut num = CVec::zeros(k);
                    let mut den = 0.0;
                    for t in 0..dry.n_frames() {
                        let s = dry.get(src, f, t);
                        den += s.norm_sqr();
                        for m in 0..k {
                            num[m] += images[src].get(m, f, t) * s.conj();
                        }
                    }
                    if den > 0.0 {
                        num.scale(C64::new(1.0 / den, 0.0))
                    } else {
                        CVec::unit(k, src)
                    }
                })
                .collect();
            CMat::from_columns(&cols).expect("K columns of length K")
        })
        .collect()
}

/// Per-source complex masks `m_k(f,t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    n_sources: usize,
    n_freq: usize,
    n_frames: usize,
    data: Vec<C64>,
}

impl MaskSet {
    /// `data` in `(k, f, t)` row-major order.
    pub fn new(n_sources: usize, n_freq: usize, n_frames: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != n_sources * n_freq * n_frames {
            return Err(Error::ShapeMismatch(format!(
                "mask payload has {} entries, expected {}",
                data.len(),
                n_sources * n_freq * n_frames
            )));
        }
        if let Some(bad) = data.iter().find(|m| !(m.re.is_finite() && m.im.is_finite()) || m.norm() > MASK_CAP) {
            return Err(Error::InvalidArgument(format!("mask value {bad} is not finite or exceeds {MASK_CAP}")));
        }
        Ok(MaskSet { n_sources, n_freq, n_frames, data })
    }

    pub fn constant(n_sources: usize, n_freq: usize, n_frames: usize, value: C64) -> Result<Self> {
        Self::new(n_sources, n_freq, n_frames, vec![value; n_sources * n_freq * n_frames])
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
    pub fn get(&self, k: usize, f: usize, t: usize) -> C64 {
        self.data[(k * self.n_freq + f) * self.n_frames + t]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    fn check_against(&self, x: &Spectrogram) -> Result<()> {
        if self.n_sources != x.n_channels() || self.n_freq != x.n_freq() || self.n_frames != x.n_frames() {
            return Err(Error::ShapeMismatch(format!(
                "mask is {}x{}x{}, mixture is {}x{}x{}",
                self.n_sources,
                self.n_freq,
                self.n_frames,
                x.n_channels(),
                x.n_freq(),
                x.n_frames()
            )));
        }
        Ok(())
    }
}

/// Interference masks from the oracle images:
/// `m_k = ||N_k||^2 / (||S_k||^2 + ||N_k||^2)`, norms over microphones.
pub fn oracle_interference_masks(x: &Spectrogram, oracle: &OracleInfo) -> Result<MaskSet> {
    let kk = oracle.n_sources();
    let (nf, nt) = (x.n_freq(), x.n_frames());
    let mut data = Vec::with_capacity(kk * nf * nt);
    for k in 0..kk {
        for f in 0..nf {
            for t in 0..nt {
                let (mut ps, mut pn) = (0.0, 0.0);
                for m in 0..x.n_channels() {
                    let s = oracle.images[k].get(m, f, t);
                    ps += s.norm_sqr();
                    pn += (x.get(m, f, t) - s).norm_sqr();
                }
                let tot = ps + pn;
                data.push(C64::new(if tot > 0.0 { pn / tot } else { 0.0 }, 0.0));
            }
        }
    }
    MaskSet::new(kk, nf, nt, data)
}

fn load(m: CMat, loading: DiagonalLoading) -> CMat {
    loading.apply(&m)
}

/// `Phi_N_k(f) = mean_t N_k N_k^H + eps I` with `N_k = x - S_k`, for every bin.
pub fn interference_cov_oracle(
    x: &Spectrogram,
    oracle: &OracleInfo,
    k: usize,
    loading: DiagonalLoading,
) -> Result<Vec<CMat>> {
    let img = &oracle.images[k];
    if !img.same_geometry(x) || img.n_channels() != x.n_channels() {
        return Err(Error::ShapeMismatch("oracle image does not match the mixture".into()));
    }
    let kk = x.n_channels();
    let nt = x.n_frames();
    Ok((0..x.n_freq())
        .into_par_iter()
        .map(|f| {
            let mut acc = CMat::zeros(kk);
            let mut n = [C64::new(0.0, 0.0); 4];
            for (xt, st) in x.bin(f).chunks_exact(kk).zip(img.bin(f).chunks_exact(kk)) {
                for m in 0..kk {
                    n[m] = xt[m] - st[m];
                }
                acc.add_weighted_outer(&n[..kk], 1.0);
            }
            load(acc.scale_real(1.0 / nt as f64).hermitian_part(), loading)
        })
        .collect())
}

/// Oracle interference covariances of every source.
pub fn interference_covariances_oracle(
    x: &Spectrogram,
    oracle: &OracleInfo,
    loading: DiagonalLoading,
) -> Result<CovarianceSet> {
    let per = (0..oracle.n_sources())
        .map(|k| interference_cov_oracle(x, oracle, k, loading))
        .collect::<Result<Vec<_>>>()?;
    CovarianceSet::new(CovarianceRole::Interference, per)
}

/// Empirical source covariances `mean_t S_k S_k^H`.
pub fn source_covariances_oracle(oracle: &OracleInfo) -> Result<CovarianceSet> {
    let per = oracle
        .images
        .iter()
        .map(|img| {
            let w = vec![1.0; img.n_frames()];
            (0..img.n_freq()).into_par_iter().map(|f| weighted_covariance(img, &w, f)).collect()
        })
        .collect();
    CovarianceSet::new(CovarianceRole::Source, per)
}

/// Rank-1 source covariances `E|s_k|^2 a_k a_k^H`.
pub fn source_covariances_rank1(oracle: &OracleInfo) -> Result<CovarianceSet> {
    let per = (0..oracle.n_sources())
        .map(|k| {
            (0..oracle.dry.n_freq())
                .map(|f| {
                    let a = oracle.column(k, f);
                    a.outer(&a).scale_real(oracle.source_power(k, f)).hermitian_part()
                })
                .collect()
        })
        .collect();
    CovarianceSet::new(CovarianceRole::Source, per)
}

/// Masked interference covariance of one source.
#[derive(Clone, Debug)]
pub struct MaskedCovariance {
    pub mats: Vec<CMat>,
    /// Bins where the mask had no energy; there the result is `eps I`.
    pub zero_mask_bins: Vec<usize>,
}

/// `sum_t (m x)(m x)^H / sum_t |m|^2 + eps I` per bin, the scalar mask
/// `m_k(f,t)` applied to all channels. Relative loading is taken against the
/// loaded matrix's own trace, or the mixture covariance's where the mask is empty.
pub fn interference_cov_masked(
    x: &Spectrogram,
    masks: &MaskSet,
    k: usize,
    loading: DiagonalLoading,
) -> Result<MaskedCovariance> {
    masks.check_against(x)?;
    let kk = x.n_channels();
    let results: Vec<(CMat, bool)> = (0..x.n_freq())
        .into_par_iter()
        .map(|f| {
            let mut acc = CMat::zeros(kk);
            let mut energy = 0.0;
            let mut n = [C64::new(0.0, 0.0); 4];
            for (t, xt) in x.bin(f).chunks_exact(kk).enumerate() {
                let m = masks.get(k, f, t);
                energy += m.norm_sqr();
                for c in 0..kk {
                    n[c] = m * xt[c];
                }
                acc.add_weighted_outer(&n[..kk], 1.0);
            }
            if energy > 0.0 {
                (load(acc.scale_real(1.0 / energy).hermitian_part(), loading), false)
            } else {
                let mix = weighted_covariance(x, &vec![1.0; x.n_frames()], f);
                let eps = loading.amount(&mix).max(ABSOLUTE_FLOOR);
                (CMat::identity(kk).scale_real(eps), true)
            }
        })
        .collect();
    let zero_mask_bins: Vec<usize> = results.iter().enumerate().filter(|(_, r)| r.1).map(|(f, _)| f).collect();
    if !zero_mask_bins.is_empty() {
        log::warn!("source {k}: mask has zero energy in {} bins, using eps*I there", zero_mask_bins.len());
    }
    Ok(MaskedCovariance { mats: results.into_iter().map(|r| r.0).collect(), zero_mask_bins })
}

pub fn interference_covariances_masked(
    x: &Spectrogram,
    masks: &MaskSet,
    loading: DiagonalLoading,
) -> Result<CovarianceSet> {
    let per = (0..masks.n_sources())
        .map(|k| interference_cov_masked(x, masks, k, loading).map(|m| m.mats))
        .collect::<Result<Vec<_>>>()?;
    CovarianceSet::new(CovarianceRole::Interference, per)
}

fn check_covariances(x: &Spectrogram, set: &CovarianceSet) -> Result<()> {
    if set.n_sources() != x.n_channels() || set.n_freq() != x.n_freq() {
        return Err(Error::ShapeMismatch(format!(
            "covariance set is {}x{}, mixture has {} channels and {} bins",
            set.n_sources(),
            set.n_freq(),
            x.n_channels(),
            x.n_freq()
        )));
    }
    Ok(())
}

/// The demixing iterations of MVICA without the final rescaling:
/// `w_k(f) <- Phi_N_k(f)^{-1} W(f)^{-1} e_k` for `l` rounds over `k`.
pub fn mvica_filters(phi_n: &CovarianceSet, l: usize) -> Result<DemixingStack> {
    let kk = phi_n.n_sources();
    let mut w = DemixingStack::identity(kk, phi_n.n_freq());
    mvica_rounds(&mut w, phi_n, l)?;
    Ok(w)
}

fn mvica_rounds(w: &mut DemixingStack, phi_n: &CovarianceSet, l: usize) -> Result<()> {
    let kk = w.dim();
    w.mats_mut().par_iter_mut().enumerate().try_for_each(|(f, m)| -> Result<()> {
        for _ in 0..l {
            for k in 0..kk {
                let row = update_demixing_row(phi_n.get(k, f), m, k)?;
                m.set_row(k, &row.conj());
            }
        }
        Ok(())
    })
}

/// MVICA: fixed `l` demixing rounds driven by interference covariances,
/// no row normalisation, then minimal-distortion rescaling.
pub fn run_mvica(x: &Spectrogram, phi_n: &CovarianceSet, l: usize) -> Result<SeparationOutput> {
    run_mvica_with_refresh(x, phi_n, l, |_, _| None)
}

/// As [`run_mvica`], but after each round `refresh(round, W)` may return new
/// interference covariances for the following rounds.
pub fn run_mvica_with_refresh(
    x: &Spectrogram,
    phi_n: &CovarianceSet,
    l: usize,
    mut refresh: impl FnMut(usize, &DemixingStack) -> Option<CovarianceSet>,
) -> Result<SeparationOutput> {
    if l == 0 {
        return Err(Error::InvalidArgument("L must be at least 1".into()));
    }
    check_covariances(x, phi_n)?;
    let mut w = DemixingStack::identity(x.n_channels(), x.n_freq());
    let mut current = phi_n.clone();
    for round in 0..l {
        mvica_rounds(&mut w, &current, 1)?;
        if let Some(next) = refresh(round, &w) {
            check_covariances(x, &next)?;
            current = next;
        }
    }
    let w = minimal_distortion_rescale(&w)?;
    let y = apply_demixing(&w, x)?;
    Ok(SeparationOutput { w, y, objective_trace: Vec::new(), iterations: l })
}

fn converged(trace: &[f64], tol: f64) -> bool {
    if tol <= 0.0 || trace.len() < 2 {
        return false;
    }
    let (a, b) = (trace[trace.len() - 2], trace[trace.len() - 1]);
    (a - b).abs() <= tol * a.abs().max(f64::MIN_POSITIVE)
}

/// Generic auxiliary-function loop with a fixed contrast (IVA, FDICA, or
/// fixed variances).
fn run_fixed_contrast(
    x: &Spectrogram,
    config: &SeparatorConfig,
    init: DemixingStack,
    model: Contrast<'_>,
) -> Result<SeparationOutput> {
    config.validate()?;
    let mut w = init;
    let mut y = apply_demixing(&w, x)?;
    let mut trace = vec![objective(&y, &w, model)?];
    let mut it = 0;
    while it < config.iterations {
        let weights = contrast_weights(&y, model)?;
        auxiliary_sweep(x, &mut w, &weights, true)?;
        y = apply_demixing(&w, x)?;
        trace.push(objective(&y, &w, model)?);
        it += 1;
        if converged(&trace, config.tol) {
            break;
        }
    }
    log::debug!("auxiliary loop stopped after {it} sweeps, objective {:.6e}", trace.last().unwrap());
    let w = minimal_distortion_rescale(&w)?;
    let y = apply_demixing(&w, x)?;
    Ok(SeparationOutput { w, y, objective_trace: trace, iterations: it })
}

/// AuxIVA with the spherical Laplacian source model.
pub fn run_auxiva(x: &Spectrogram, config: &SeparatorConfig) -> Result<SeparationOutput> {
    run_fixed_contrast(x, config, DemixingStack::identity(x.n_channels(), x.n_freq()), Contrast::Iva)
}

/// AuxIVA from a given initial demixing stack.
pub fn run_auxiva_from(x: &Spectrogram, config: &SeparatorConfig, init: DemixingStack) -> Result<SeparationOutput> {
    if init.n_freq() != x.n_freq() || init.dim() != x.n_channels() {
        return Err(Error::ShapeMismatch("initial demixing stack does not match the mixture".into()));
    }
    run_fixed_contrast(x, config, init, Contrast::Iva)
}

/// Auxiliary-function ICA with per-bin Laplacian weights. No permutation
/// alignment across bins is attempted.
pub fn run_fdica(x: &Spectrogram, config: &SeparatorConfig) -> Result<SeparationOutput> {
    run_fixed_contrast(x, config, DemixingStack::identity(x.n_channels(), x.n_freq()), Contrast::Fdica)
}

/// Low-rank source variance model `R = T V` of one source.
#[derive(Clone, Debug)]
pub struct NmfModel {
    /// `n_freq x bases`, row-major.
    pub basis: Vec<f64>,
    /// `bases x n_frames`, row-major.
    pub activation: Vec<f64>,
    pub n_freq: usize,
    pub n_frames: usize,
    pub bases: usize,
}

impl NmfModel {
    pub fn random(rng: &mut ChaCha8Rng, n_freq: usize, n_frames: usize, bases: usize) -> Self {
        let basis = (0..n_freq * bases).map(|_| rng.random_range(0.1..1.0)).collect();
        let activation = (0..bases * n_frames).map(|_| rng.random_range(0.1..1.0)).collect();
        NmfModel { basis, activation, n_freq, n_frames, bases }
    }

    /// `T = P` (one basis per frame) and `V = I`: reproduces `P` exactly.
    pub fn exact(power: &[f64], n_freq: usize, n_frames: usize) -> Self {
        let mut activation = vec![0.0; n_frames * n_frames];
        for t in 0..n_frames {
            activation[t * n_frames + t] = 1.0;
        }
        NmfModel { basis: power.to_vec(), activation, n_freq, n_frames, bases: n_frames }
    }

    /// `R(f,t)`, frequency-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let (nf, nt, nb) = (self.n_freq, self.n_frames, self.bases);
        let mut r = vec![0.0; nf * nt];
        for f in 0..nf {
            let row = &mut r[f * nt..(f + 1) * nt];
            for b in 0..nb {
                let tfb = self.basis[f * nb + b];
                if tfb == 0.0 {
                    continue;
                }
                let act = &self.activation[b * nt..(b + 1) * nt];
                for (rv, &a) in row.iter_mut().zip(act) {
                    *rv += tfb * a;
                }
            }
        }
        r
    }

    /// One majorisation-minimisation update of `T` then `V` for the
    /// Itakura-Saito divergence between `p` and `T V`.
    pub fn update(&mut self, p: &[f64]) {
        let (nf, nt, nb) = (self.n_freq, self.n_frames, self.bases);
        let r = self.floored(self.reconstruct());
        let (q1, q2) = is_terms(p, &r);
        let mut basis = self.basis.clone();
        basis.par_chunks_mut(nb).enumerate().for_each(|(f, row)| {
            for (b, tv) in row.iter_mut().enumerate() {
                let act = &self.activation[b * nt..(b + 1) * nt];
                let (mut num, mut den) = (0.0, 0.0);
                for t in 0..nt {
                    num += q1[f * nt + t] * act[t];
                    den += q2[f * nt + t] * act[t];
                }
                if den > 0.0 {
                    *tv *= (num / den).sqrt();
                }
            }
        });
        self.basis = basis;
        let r = self.floored(self.reconstruct());
        let (q1, q2) = is_terms(p, &r);
        let basis = &self.basis;
        self.activation.par_chunks_mut(nt).enumerate().for_each(|(b, act)| {
            for (t, av) in act.iter_mut().enumerate() {
                let (mut num, mut den) = (0.0, 0.0);
                for f in 0..nf {
                    num += basis[f * nb + b] * q1[f * nt + t];
                    den += basis[f * nb + b] * q2[f * nt + t];
                }
                if den > 0.0 {
                    *av *= (num / den).sqrt();
                }
            }
        });
    }

    fn floored(&self, mut r: Vec<f64>) -> Vec<f64> {
        let floor = (WEIGHT_FLOOR * r.iter().sum::<f64>() / r.len().max(1) as f64).max(ABSOLUTE_FLOOR);
        r.iter_mut().for_each(|v| *v = v.max(floor));
        r
    }

    /// Divides `T` by `c`.
    fn scale_basis(&mut self, c: f64) {
        self.basis.iter_mut().for_each(|v| *v /= c);
    }

    pub fn is_nonnegative(&self) -> bool {
        self.basis.iter().chain(&self.activation).all(|v| *v >= 0.0 && v.is_finite())
    }
}

fn is_terms(p: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let q1 = p.iter().zip(r).map(|(p, r)| p / (r * r)).collect();
    let q2 = r.iter().map(|r| 1.0 / r).collect();
    (q1, q2)
}

/// `sum p/r - log(p/r) - 1`.
pub fn is_divergence(p: &[f64], r: &[f64]) -> f64 {
    p.iter()
        .zip(r)
        .map(|(&p, &r)| {
            let q = p.max(ABSOLUTE_FLOOR) / r;
            q - q.ln() - 1.0
        })
        .sum()
}

fn power_of(y: &Spectrogram, k: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(y.n_freq() * y.n_frames());
    for f in 0..y.n_freq() {
        for t in 0..y.n_frames() {
            p.push(y.get(k, f, t).norm_sqr());
        }
    }
    let floor = (WEIGHT_FLOOR * p.iter().sum::<f64>() / p.len().max(1) as f64).max(ABSOLUTE_FLOOR);
    p.iter_mut().for_each(|v| *v = v.max(floor));
    p
}

/// ILRMA: demixing sweeps with variance weights from per-source NMF models,
/// alternated with IS-divergence NMF updates.
pub fn run_ilrma(x: &Spectrogram, config: &SeparatorConfig) -> Result<SeparationOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let models: Vec<NmfModel> = (0..x.n_channels())
        .map(|_| NmfModel::random(&mut rng, x.n_freq(), x.n_frames(), config.nmf_bases))
        .collect();
    run_ilrma_with(x, config, models)
}

/// ILRMA from given NMF models (one per output).
pub fn run_ilrma_with(x: &Spectrogram, config: &SeparatorConfig, mut models: Vec<NmfModel>) -> Result<SeparationOutput> {
    config.validate()?;
    let (kk, nf, nt) = (x.n_channels(), x.n_freq(), x.n_frames());
    if models.len() != kk || models.iter().any(|m| m.n_freq != nf || m.n_frames != nt) {
        return Err(Error::ShapeMismatch("NMF models do not match the mixture".into()));
    }
    let mut w = DemixingStack::identity(kk, nf);
    let mut y = apply_demixing(&w, x)?;
    let variance = |models: &[NmfModel]| -> WeightField {
        let mut v = WeightField::filled(kk, nf, nt, 0.0);
        for (k, m) in models.iter().enumerate() {
            v.source_mut(k).copy_from_slice(&m.reconstruct());
        }
        v
    };
    let mut v = variance(&models);
    let mut trace = vec![objective(&y, &w, Contrast::Variance(&v))?];
    let mut it = 0;
    while it < config.iterations {
        for (k, m) in models.iter_mut().enumerate() {
            let p = power_of(&y, k);
            for _ in 0..config.nmf_updates {
                m.update(&p);
            }
        }
        v = variance(&models);
        let weights = contrast_weights(&y, Contrast::Variance(&v))?;
        auxiliary_sweep(x, &mut w, &weights, true)?;
        y = apply_demixing(&w, x)?;
        // Fix the scale of each output and its model together.
        for k in 0..kk {
            let p = y.data().iter().skip(k).step_by(kk).map(|z| z.norm_sqr()).sum::<f64>() / (nf * nt) as f64;
            if p > 0.0 && p.is_finite() {
                let lam = p.sqrt();
                for m in w.mats_mut() {
                    let row = m.row(k).scale(C64::new(1.0 / lam, 0.0));
                    m.set_row(k, &row);
                }
                models[k].scale_basis(p);
            }
        }
        y = apply_demixing(&w, x)?;
        v = variance(&models);
        trace.push(objective(&y, &w, Contrast::Variance(&v))?);
        it += 1;
        if converged(&trace, config.tol) {
            break;
        }
    }
    let w = minimal_distortion_rescale(&w)?;
    let y = apply_demixing(&w, x)?;
    Ok(SeparationOutput { w, y, objective_trace: trace, iterations: it })
}

/// Auxiliary-function separation with fixed source variances `v_k(f,t)`.
pub fn run_with_variances(x: &Spectrogram, config: &SeparatorConfig, v: &WeightField) -> Result<SeparationOutput> {
    let mut v = v.clone();
    v.clamp_relative(WEIGHT_FLOOR);
    run_fixed_contrast(x, config, DemixingStack::identity(x.n_channels(), x.n_freq()), Contrast::Variance(&v))
}

/// Separators whose weight rules are driven by oracle source statistics.
pub fn run_oracle_variant(
    x: &Spectrogram,
    oracle: &OracleInfo,
    kind: OracleKind,
    config: &SeparatorConfig,
) -> Result<SeparationOutput> {
    let (kk, nf, nt) = (x.n_channels(), x.n_freq(), x.n_frames());
    if oracle.n_sources() != kk || oracle.dry.n_freq() != nf || oracle.dry.n_frames() != nt {
        return Err(Error::ShapeMismatch("oracle does not match the mixture".into()));
    }
    let init = DemixingStack::identity(kk, nf);
    match kind {
        OracleKind::Idlma => {
            let mut v = oracle.dry_power();
            v.clamp_relative(ORACLE_VARIANCE_FLOOR);
            run_fixed_contrast(x, config, init, Contrast::Variance(&v))
        }
        OracleKind::Kang => {
            let vars = oracle.frame_variances();
            let mut r = WeightField::from_fn(kk, nf, nt, |k, _, t| vars[k][t].sqrt());
            r.clamp_relative(ORACLE_VARIANCE_FLOOR);
            // Weights 1/r_k(t) are the variance-model weights with v = r.
            run_fixed_contrast(x, config, init, Contrast::Variance(&r))
        }
        OracleKind::AuxIvaInit => {
            let mats = oracle.mixing.iter().map(|a| a.inverse().unwrap_or_else(|_| CMat::identity(kk))).collect();
            run_auxiva_from(x, config, DemixingStack::from_mats(mats)?)
        }
    }
}

/// GEV beamformer: `w_k(f)` is the top generalised eigenvector of
/// `(Phi_S_k, Phi_N_k)`, scaled by blind analytic normalisation
/// `sqrt(w^H N N w) / (w^H N w)` or left at unit norm.
pub fn run_gev(
    phi_s: &CovarianceSet,
    phi_n: &CovarianceSet,
    x: &Spectrogram,
    ban: bool,
) -> Result<SeparationOutput> {
    check_covariances(x, phi_s)?;
    check_covariances(x, phi_n)?;
    let kk = x.n_channels();
    let mats = (0..x.n_freq())
        .into_par_iter()
        .map(|f| {
            let mut m = CMat::zeros(kk);
            for k in 0..kk {
                let n = phi_n.get(k, f);
                let (_, v) = gen_eig_max(phi_s.get(k, f), n)?;
                let w = if ban {
                    let nw = n.mul_vec(&v);
                    let den = v.dot(&nw).re;
                    if !(den > DEGENERATE_FLOOR) {
                        return Err(Error::DegenerateDirection);
                    }
                    v.scale(C64::new(nw.norm() / den, 0.0))
                } else {
                    v
                };
                m.set_row(k, &w.conj());
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let w = DemixingStack::from_mats(mats)?;
    let y = apply_demixing(&w, x)?;
    Ok(SeparationOutput { w, y, objective_trace: Vec::new(), iterations: 1 })
}

/// `sigma2 * a^H Phi_N^{-1} a`.
pub fn sir_bound(sigma2: f64, a: &CVec, phi_n: &CMat) -> Result<f64> {
    let inv = phi_n.inverse()?;
    Ok(sigma2 * a.dot(&inv.mul_vec(a)).re)
}

/// `(w^H Phi_S w) / (w^H Phi_N w)`.
pub fn narrowband_sir(w: &CVec, phi_s: &CMat, phi_n: &CMat) -> Result<f64> {
    let den = phi_n.quad_form(w);
    if !(den > DEGENERATE_FLOOR * w.norm_sqr()) {
        return Err(Error::DegenerateDirection);
    }
    Ok(phi_s.quad_form(w) / den)
}

/// Narrowband SIR of output `k` at every bin.
pub fn narrowband_sir_trace(
    w: &DemixingStack,
    phi_s: &CovarianceSet,
    phi_n: &CovarianceSet,
    k: usize,
) -> Result<Vec<f64>> {
    (0..w.n_freq())
        .map(|f| narrowband_sir(&w.filter(f, k), phi_s.get(k, f), phi_n.get(k, f)))
        .collect()
}

/// Inputs for [`separate`]; which fields are needed depends on the algorithm.
#[derive(Clone, Copy, Default)]
pub struct SeparationInputs<'a> {
    pub oracle: Option<&'a OracleInfo>,
    pub masks: Option<&'a MaskSet>,
}

/// Runs `algo` on `x`.
pub fn separate(
    algo: Algo,
    x: &Spectrogram,
    inputs: SeparationInputs<'_>,
    config: &SeparatorConfig,
) -> Result<SeparationOutput> {
    config.validate()?;
    let need_oracle = || {
        inputs.oracle.ok_or_else(|| Error::InvalidArgument(format!("{algo} needs oracle scenario data")))
    };
    match algo {
        Algo::MvicaOracle => {
            let phi_n = interference_covariances_oracle(x, need_oracle()?, config.eps_load)?;
            run_mvica(x, &phi_n, config.l_iters)
        }
        Algo::MvicaMask => {
            let masks = inputs.masks.ok_or_else(|| Error::InvalidArgument("mvica-mask needs a mask set".into()))?;
            let phi_n = interference_covariances_masked(x, masks, config.eps_load)?;
            run_mvica(x, &phi_n, config.l_iters)
        }
        Algo::AuxIva => run_auxiva(x, config),
        Algo::Fdica => run_fdica(x, config),
        Algo::Ilrma => run_ilrma(x, config),
        Algo::IdlmaOracle => run_oracle_variant(x, need_oracle()?, OracleKind::Idlma, config),
        Algo::KangOracle => run_oracle_variant(x, need_oracle()?, OracleKind::Kang, config),
        Algo::AuxIvaOracleInit => run_oracle_variant(x, need_oracle()?, OracleKind::AuxIvaInit, config),
        Algo::GevOracle => {
            let oracle = need_oracle()?;
            let phi_n = interference_covariances_oracle(x, oracle, config.eps_load)?;
            let phi_s = source_covariances_oracle(oracle)?;
            run_gev(&phi_s, &phi_n, x, config.ban)
        }
    }
}
