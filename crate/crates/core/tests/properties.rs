use bss_core::algorithms::{narrowband_sir, MaskSet};
use bss_core::formats::{decode_masks, encode_masks};
use bss_core::linalg::{diag_load, gen_eig_max, CMat, CVec, C64};
use bss_core::metrics::{si_sdr, BssEval};
use bss_core::separation::{apply_demixing, minimal_distortion_rescale, weighted_covariance, DemixingStack};
use bss_core::stft::{analyze, synthesize, Spectrogram, StftConfig, Waveform};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
}

/// `k x k` with complex entries in [-1, 1].
fn square_of(k: usize) -> impl Strategy<Value = CMat> {
    entries(k * k).prop_map(move |e| CMat::from_fn(k, |i, j| c(e[i * k + j].0, e[i * k + j].1)).unwrap())
}

fn square() -> impl Strategy<Value = CMat> {
    (2usize..=4).prop_flat_map(square_of)
}

/// `B B^H + delta I`, Hermitian positive definite.
fn hpd_of(k: usize) -> impl Strategy<Value = CMat> {
    (square_of(k), 0.05..1.0f64).prop_map(|(b, d)| (b * b.adjoint()).hermitian_part().diag_load(d))
}

fn hpd() -> impl Strategy<Value = CMat> {
    (2usize..=4).prop_flat_map(hpd_of)
}

fn hpd_pair() -> impl Strategy<Value = (CMat, CMat)> {
    (2usize..=4).prop_flat_map(|k| (hpd_of(k), hpd_of(k)))
}

fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn spectrogram(k: usize, frames: usize, vals: &[(f64, f64)]) -> Spectrogram {
    let cfg = StftConfig::new(16, 8).unwrap();
    let mut s = Spectrogram::zeros(k, cfg, frames, 16000, frames * 8);
    let mut it = vals.iter().cycle();
    for ch in 0..k {
        for f in 0..s.n_freq() {
            for t in 0..frames {
                let (re, im) = it.next().unwrap();
                s.set(ch, f, t, c(*re, *im));
            }
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn double_inverse_is_identity(b in square(), d in 0.5..2.0f64) {
        let a = b.diag_load(d * 4.0);
        let back = a.inverse().unwrap().inverse().unwrap();
        prop_assert!(max_abs_diff(&back, &a) <= 1e-9 * a.frobenius_norm());
    }

    #[test]
    fn diag_load_keeps_exact_hermitian_symmetry(m in hpd(), eps in 0.0..10.0f64) {
        let l = diag_load(&m, eps);
        for i in 0..l.dim() {
            for j in 0..l.dim() {
                prop_assert_eq!(l[(i, j)], l[(j, i)].conj());
            }
        }
    }

    #[test]
    fn cholesky_reconstructs(m in hpd()) {
        let p = m.cholesky().unwrap();
        for i in 0..p.dim() {
            for j in 0..i {
                prop_assert_eq!(p[(i, j)], c(0.0, 0.0));
            }
        }
        prop_assert!(max_abs_diff(&(p.adjoint() * p), &m) <= 1e-10 * m.frobenius_norm());
    }

    #[test]
    fn gen_eig_scales_with_signal((s, n) in hpd_pair(), scale in 1e-3..1e3f64) {
        let (l1, v1) = gen_eig_max(&s, &n).unwrap();
        let (l2, v2) = gen_eig_max(&s.scale_real(scale), &n).unwrap();
        prop_assert!((l2 - scale * l1).abs() <= 1e-8 * scale * l1);
        // Same direction up to phase.
        let overlap = v1.dot(&v2).norm();
        prop_assert!((overlap - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn narrowband_sir_ignores_filter_scale((s, n) in hpd_pair(), w in entries(4), g in (0.1..10.0f64, -3.0..3.0f64)) {
        let k = s.dim();
        let w = CVec::from_slice(&w[..k].iter().map(|&(a, b)| c(a, b)).collect::<Vec<_>>());
        prop_assume!(w.norm() > 1e-3);
        let a = narrowband_sir(&w, &s, &n).unwrap();
        let b = narrowband_sir(&w.scale(C64::from_polar(g.0, g.1)), &s, &n).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
    }

    #[test]
    fn stft_round_trip(x in prop::collection::vec(-1.0..1.0f64, 1..600)) {
        let cfg = StftConfig::new(64, 32).unwrap();
        let w = Waveform::mono(16000, x.clone()).unwrap();
        let y = synthesize(&analyze(&w, cfg).unwrap()).unwrap();
        let err: f64 = x.iter().zip(y.channel(0)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-9 * norm.max(1e-12));
    }

    #[test]
    fn analyze_is_linear(
        x in prop::collection::vec(-1.0..1.0f64, 300),
        y in prop::collection::vec(-1.0..1.0f64, 300),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let cfg = StftConfig::new(64, 32).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let sx = analyze(&Waveform::mono(16000, x).unwrap(), cfg).unwrap();
        let sy = analyze(&Waveform::mono(16000, y).unwrap(), cfg).unwrap();
        let sm = analyze(&Waveform::mono(16000, mix).unwrap(), cfg).unwrap();
        for ((m, p), q) in sm.data().iter().zip(sx.data()).zip(sy.data()) {
            prop_assert!((m - (p * a + q * b)).norm() <= 1e-10);
        }
    }

    #[test]
    fn apply_demixing_is_linear(vals in entries(2 * 9 * 5), w in entries(4 * 9), alpha in (-3.0..3.0f64, -3.0..3.0f64)) {
        let x = spectrogram(2, 5, &vals);
        let mats = (0..9).map(|f| CMat::from_fn(2, |i, j| c(w[f * 4 + i * 2 + j].0, w[f * 4 + i * 2 + j].1)).unwrap()).collect();
        let w = DemixingStack::from_mats(mats).unwrap();
        let alpha = c(alpha.0, alpha.1);
        let lhs = apply_demixing(&w, &x.scaled(alpha)).unwrap();
        let rhs = apply_demixing(&w, &x).unwrap().scaled(alpha);
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((l - r).norm() <= 1e-12 * (1.0 + r.norm()));
        }
    }

    #[test]
    fn rescale_is_idempotent(
        (k, e) in (2usize..=4).prop_flat_map(|k| (Just(k), entries(k * k * 5))),
        d in 1.0..3.0f64,
    ) {
        let mats: Vec<CMat> = e
            .chunks_exact(k * k)
            .map(|v| CMat::from_fn(k, |i, j| c(v[i * k + j].0, v[i * k + j].1)).unwrap().diag_load(d * 4.0))
            .collect();
        let w = DemixingStack::from_mats(mats).unwrap();
        let once = minimal_distortion_rescale(&w).unwrap();
        let twice = minimal_distortion_rescale(&once).unwrap();
        for (p, q) in once.mats().iter().zip(twice.mats()) {
            prop_assert!(max_abs_diff(p, q) <= 1e-10 * p.frobenius_norm());
            let inv = p.inverse().unwrap();
            for i in 0..k {
                prop_assert!((inv[(i, i)] - c(1.0, 0.0)).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn weighted_covariance_is_hermitian_psd(vals in entries(3 * 9 * 6), phi in prop::collection::vec(0.0..5.0f64, 6)) {
        let x = spectrogram(3, 6, &vals);
        for f in 0..x.n_freq() {
            let v = weighted_covariance(&x, &phi, f);
            let tr = v.trace().re;
            prop_assert!(v.is_hermitian(1e-12));
            let (eig, _) = v.hermitian_eig();
            prop_assert!(eig[..3].iter().all(|&e| e >= -1e-10 * tr.max(1e-300)));
        }
    }

    #[test]
    fn si_sdr_ignores_positive_gain(
        r in prop::collection::vec(-1.0..1.0f64, 64),
        n in prop::collection::vec(-0.3..0.3f64, 64),
        g in 1e-3..1e3f64,
    ) {
        prop_assume!(r.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let est: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = est.iter().map(|v| v * g).collect();
        let a = si_sdr(&est, &r).unwrap();
        let b = si_sdr(&scaled, &r).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn mask_files_round_trip(vals in entries(2 * 3 * 4)) {
        let data: Vec<C64> = vals.iter().map(|&(a, b)| c(a, b)).collect();
        let m = MaskSet::new(2, 3, 4, data).unwrap();
        let back = decode_masks(&encode_masks(&m)).unwrap();
        prop_assert_eq!((back.n_sources(), back.n_freq(), back.n_frames()), (2, 3, 4));
        for (a, b) in back.data().iter().zip(m.data()) {
            prop_assert!((a - b).norm() <= 1e-7);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bss_eval_scores_follow_permutation(
        s in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 400), 3),
        mix in entries(9),
        perm_idx in 0usize..6,
    ) {
        let refs: Vec<&[f64]> = s.iter().map(Vec::as_slice).collect();
        let ev = BssEval::with_taps(&refs, 8).unwrap();
        let est: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..400).map(|t| s[i][t] + 0.3 * (0..3).map(|j| mix[i * 3 + j].0 * s[j][t]).sum::<f64>()).collect())
            .collect();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let p = perms[perm_idx];
        let shuffled: Vec<&[f64]> = p.iter().map(|&i| est[i].as_slice()).collect();
        let base: Vec<&[f64]> = est.iter().map(Vec::as_slice).collect();
        let a = ev.evaluate(&base).unwrap();
        let b = ev.evaluate(&shuffled).unwrap();
        for j in 0..3 {
            prop_assert!((a.sir_db[j] - b.sir_db[j]).abs() <= 1e-9);
            prop_assert!((a.sdr_db[j] - b.sdr_db[j]).abs() <= 1e-9);
            prop_assert_eq!(p[b.permutation[j]], a.permutation[j]);
            prop_assert!(b.sdr_db[j] <= b.sir_db[j] + 1e-6);
        }
    }
}
