//! Synthetic dry source signals.
//!
//! Licensed speech corpora are not redistributable, so scenarios are built
//! from speech-like signals: syllable-length bursts of voiced (glottal
//! pulse train) or unvoiced (noise) excitation through two formant
//! resonators, separated by pauses.

use std::f64::consts::PI;

use rand::Rng;

/// Standard normal sample via Box-Muller.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Unit-variance Laplacian sample by inverse CDF.
pub fn laplacian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    let b = 1.0 / 2f64.sqrt();
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

pub fn white_noise<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| gaussian(rng)).collect()
}

pub fn laplacian_noise<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| laplacian(rng)).collect()
}

/// Two-pole resonator coefficients for centre `freq` and bandwidth `bw` (Hz).
fn resonator(freq: f64, bw: f64, fs: f64) -> (f64, f64) {
    let r = (-PI * bw / fs).exp();
    (2.0 * r * (2.0 * PI * freq / fs).cos(), -r * r)
}

/// Speech-like signal of `len` samples, normalised to unit RMS.
pub fn speech_like<R: Rng + ?Sized>(rng: &mut R, len: usize, fs: u32) -> Vec<f64> {
    let fs = fs as f64;
    let mut out = vec![0.0; len];
    let mut pos = 0usize;
    let mut phase = 0.0;
    let (mut y1, mut y2, mut z1, mut z2) = (0.0, 0.0, 0.0, 0.0);
    while pos < len {
        let dur = ((rng.random_range(0.08..0.30)) * fs) as usize;
        let end = (pos + dur.max(1)).min(len);
        if rng.random::<f64>() < 0.25 {
            pos = end;
            continue;
        }
        let gain = (0.5 * gaussian(rng)).exp();
        let voiced = rng.random::<f64>() < 0.7;
        let f0 = rng.random_range(90.0..240.0);
        let (a1, a2) = resonator(rng.random_range(300.0..900.0), 120.0, fs);
        let (b1, b2) = resonator(rng.random_range(900.0..2600.0), 180.0, fs);
        let seg = end - pos;
        for i in 0..seg {
            let env = 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos();
            let excitation = if voiced {
                phase += f0 / fs;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                pulse * 3.0 + 0.05 * gaussian(rng)
            } else {
                0.4 * gaussian(rng)
            };
            let y = excitation + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            let z = y + b1 * z1 + b2 * z2;
            z2 = z1;
            z1 = z;
            out[pos + i] = gain * env * (0.6 * y + 0.4 * z);
        }
        pos = end;
    }
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        for x in &mut out {
            *x /= rms;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn laplacian_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = laplacian_noise(&mut rng, 200_000);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn speech_like_is_unit_rms_and_has_pauses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = speech_like(&mut rng, 48_000, 16_000);
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        assert!((rms - 1.0).abs() < 1e-9);
        let quiet = x.chunks(800).filter(|c| c.iter().all(|v| v.abs() < 1e-3)).count();
        assert!(quiet > 0);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = speech_like(&mut ChaCha8Rng::seed_from_u64(3), 4000, 16_000);
        let b = speech_like(&mut ChaCha8Rng::seed_from_u64(3), 4000, 16_000);
        assert_eq!(a, b);
    }
}
