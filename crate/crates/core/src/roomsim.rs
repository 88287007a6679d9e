//! Shoebox room simulation with the image source method, convolutive
//! mixing and ground-truth source images.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, MAX_DIM};
use crate::signals;
use crate::stft::{Waveform, DEFAULT_SAMPLE_RATE};

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Half-width of the windowed-sinc fractional delay kernel (8 taps total).
const SINC_HALF_WIDTH: isize = 4;

pub type Point = [f64; 3];

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoomSpec {
    /// Room size in metres `(Lx, Ly, Lz)`.
    pub dims: Point,
    /// Reverberation time in seconds.
    pub rt60: f64,
    pub sources: Vec<Point>,
    pub mics: Vec<Point>,
    /// Largest number of reflections off each pair of parallel walls.
    /// `None` derives it from `rt60`.
    pub max_order: Option<usize>,
    pub sample_rate: u32,
    /// Cut-off of the Allen-Berkley high-pass applied to every response.
    /// Removes the low-frequency build-up of the all-positive image sum.
    pub highpass_hz: Option<f64>,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::GeometryError("room dimensions must be positive".into()));
        }
        if !(0.05..=1.0).contains(&self.rt60) {
            return Err(Error::GeometryError(format!("rt60 {} s outside [0.05, 1.0]", self.rt60)));
        }
        let k = self.sources.len();
        if k != self.mics.len() {
            return Err(Error::GeometryError(format!(
                "{} sources but {} microphones; the determined case needs equal counts",
                k,
                self.mics.len()
            )));
        }
        if !(1..=MAX_DIM).contains(&k) {
            return Err(Error::GeometryError(format!("{k} sources unsupported")));
        }
        let inside = |p: &Point| (0..3).all(|i| p[i] > 0.0 && p[i] < self.dims[i]);
        for (i, p) in self.sources.iter().enumerate() {
            if !inside(p) {
                return Err(Error::GeometryError(format!("source {i} lies outside the room")));
            }
        }
        for (i, p) in self.mics.iter().enumerate() {
            if !inside(p) {
                return Err(Error::GeometryError(format!("microphone {i} lies outside the room")));
            }
        }
        for s in &self.sources {
            for m in &self.mics {
                if distance(s, m) < 1e-3 {
                    return Err(Error::GeometryError("source coincides with a microphone".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + y * z + x * z)
    }

    /// Uniform wall reflection coefficient reproducing `rt60`.
    ///
    /// A specular shoebox does not decay at the Sabine or Eyring rate:
    /// images on the axis planes keep a slowly decaying tail, and the
    /// high-pass and coherent summation shift the measured curve further.
    /// The coefficient is therefore fitted on the simulated responses
    /// themselves: their Schroeder curves, line-fitted between -5 and
    /// -25 dB, reach -60 dB at `rt60` on average over all pairs.
    pub fn reflection_coefficient(&self) -> f64 {
        let len = self.rir_len();
        let pairs: Vec<(usize, usize)> = (0..self.mics.len())
            .flat_map(|m| (0..self.sources.len()).map(move |s| (m, s)))
            .collect();
        if pairs.is_empty() {
            return 0.0;
        }
        let miss = |beta: f64| {
            let levels: Vec<f64> = pairs
                .par_iter()
                .map(|&(m, s)| {
                    let h = image_source_response(self, beta, &self.sources[s], &self.mics[m], len);
                    extrapolated_decay_db(&h, self.sample_rate, self.rt60).unwrap_or(-300.0)
                })
                .collect();
            levels.iter().sum::<f64>() / levels.len() as f64 + 60.0
        };
        let guess = self.lattice_reflection_coefficient();
        let (mut lo, mut hi) = ((guess - 0.08).max(1e-3), (guess + 0.05).min(0.9995));
        let (mut f_lo, mut f_hi) = (miss(lo), miss(hi));
        while f_lo > 0.0 && lo > 1e-3 {
            lo = (lo - 0.1).max(1e-3);
            f_lo = miss(lo);
        }
        while f_hi < 0.0 && hi < 0.9995 {
            hi = (hi + 0.5 * (1.0 - hi)).min(0.9995);
            f_hi = miss(hi);
        }
        if f_lo > 0.0 {
            return lo;
        }
        if f_hi < 0.0 {
            return hi;
        }
        // Illinois variant of regula falsi.
        let mut side = 0;
        let mut x = guess;
        for _ in 0..24 {
            x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            let fx = miss(x);
            if fx.abs() < 0.1 {
                break;
            }
            if fx < 0.0 {
                lo = x;
                f_lo = fx;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = x;
                f_hi = fx;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        x
    }

    /// Starting estimate from incoherent image energies binned by arrival
    /// time (first source, first microphone).
    fn lattice_reflection_coefficient(&self) -> f64 {
        let fs = self.sample_rate as f64;
        let (src, mic) = match (self.sources.first(), self.mics.first()) {
            (Some(s), Some(m)) => (*s, *m),
            _ => return 0.0,
        };
        let len = self.rir_len();
        let bin = (fs / 1000.0).max(1.0);
        let n_bins = (len as f64 / bin).ceil() as usize + 1;
        let order = self.effective_max_order() as isize;
        // energy[bin][reflections] = sum of 1/d^2 over images.
        let mut hist = vec![vec![0.0; 3 * order as usize + 1]; n_bins];
        for_each_image(self, &src, &mic, len, order, |d, reflections| {
            let b = (d * fs / SPEED_OF_SOUND / bin) as usize;
            if b < n_bins {
                hist[b][reflections] += 1.0 / (d * d);
            }
        });
        let onset = distance(&src, &mic) / SPEED_OF_SOUND;
        let level_at_rt60 = |beta: f64| {
            let b2 = beta * beta;
            let envelope: Vec<f64> = hist
                .iter()
                .map(|row| {
                    let mut p = 1.0;
                    let mut e = 0.0;
                    for &w in row {
                        e += w * p;
                        p *= b2;
                    }
                    e
                })
                .collect();
            fit_decay_db(&envelope, fs / bin, onset + self.rt60)
        };
        let (mut lo, mut hi) = (1e-3, 0.9999);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match level_at_rt60(mid) {
                Some(db) if db > -60.0 => hi = mid,
                _ => lo = mid,
            }
        }
        0.5 * (lo + hi)
    }

    fn rir_len(&self) -> usize {
        let fs = self.sample_rate as f64;
        let max_direct = self
            .sources
            .iter()
            .flat_map(|s| self.mics.iter().map(move |m| distance(s, m)))
            .fold(0.0, f64::max);
        (self.rt60 * fs).ceil() as usize
            + (max_direct * fs / SPEED_OF_SOUND).ceil() as usize
            + 2 * SINC_HALF_WIDTH as usize
    }

    pub fn effective_max_order(&self) -> usize {
        self.max_order.unwrap_or_else(|| {
            let min_dim = self.dims.iter().cloned().fold(f64::INFINITY, f64::min);
            (SPEED_OF_SOUND * self.rt60 / min_dim).ceil() as usize + 1
        })
    }
}

/// Impulse responses `h[mic][source]`, all the same length.
#[derive(Clone, Debug, PartialEq)]
pub struct Rirs {
    pub sample_rate: u32,
    responses: Vec<Vec<Vec<f64>>>,
}

impl Rirs {
    pub fn new(sample_rate: u32, responses: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_mic = responses.len();
        if n_mic == 0 || responses[0].is_empty() {
            return Err(Error::InvalidArgument("empty impulse response set".into()));
        }
        let n_src = responses[0].len();
        let len = responses[0][0].len();
        if responses.iter().any(|row| row.len() != n_src || row.iter().any(|h| h.len() != len)) {
            return Err(Error::LengthMismatch("impulse responses differ in shape".into()));
        }
        Ok(Rirs { sample_rate, responses })
    }

    /// Unit impulses on the diagonal: no mixing at all.
    pub fn identity(sample_rate: u32, k: usize) -> Self {
        let responses = (0..k)
            .map(|m| (0..k).map(|s| vec![if m == s { 1.0 } else { 0.0 }]).collect())
            .collect();
        Rirs { sample_rate, responses }
    }

    pub fn n_mics(&self) -> usize {
        self.responses.len()
    }

    pub fn n_sources(&self) -> usize {
        self.responses[0].len()
    }

    pub fn len(&self) -> usize {
        self.responses[0][0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, mic: usize, src: usize) -> &[f64] {
        &self.responses[mic][src]
    }

    /// Index of the last non-zero tap over all responses, plus one.
    pub fn effective_len(&self) -> usize {
        self.responses
            .iter()
            .flatten()
            .map(|h| h.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn truncated(&self, len: usize) -> Rirs {
        Rirs {
            sample_rate: self.sample_rate,
            responses: self
                .responses
                .iter()
                .map(|row| row.iter().map(|h| h[..len.min(h.len())].to_vec()).collect())
                .collect(),
        }
    }
}

fn windowed_sinc(x: f64) -> f64 {
    if x.abs() >= SINC_HALF_WIDTH as f64 {
        return 0.0;
    }
    let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
    sinc * 0.5 * (1.0 + (PI * x / SINC_HALF_WIDTH as f64).cos())
}

fn add_image(h: &mut [f64], delay: f64, amp: f64) {
    let base = delay.floor();
    let frac = delay - base;
    let base = base as isize;
    if frac < 1e-12 {
        if (base as usize) < h.len() {
            h[base as usize] += amp;
        }
        return;
    }
    for i in (base - SINC_HALF_WIDTH + 1)..=(base + SINC_HALF_WIDTH) {
        if i < 0 || i as usize >= h.len() {
            continue;
        }
        h[i as usize] += amp * windowed_sinc(i as f64 - delay);
    }
}

/// Visits every image within `len` samples of travel, passing its
/// distance and total reflection count.
fn for_each_image(
    room: &RoomSpec,
    src: &Point,
    mic: &Point,
    len: usize,
    order: isize,
    mut visit: impl FnMut(f64, usize),
) {
    let max_dist = len as f64 / room.sample_rate as f64 * SPEED_OF_SOUND;
    let bounds: Vec<isize> = room
        .dims
        .iter()
        .map(|&l| (order / 2 + 1).min((max_dist / (2.0 * l)).ceil() as isize + 1))
        .collect();
    for u in 0..2 {
        for v in 0..2 {
            for w in 0..2 {
                let parity = [u, v, w];
                let rel: Vec<f64> = (0..3)
                    .map(|i| (1.0 - 2.0 * parity[i] as f64) * src[i] - mic[i])
                    .collect();
                for n in -bounds[0]..=bounds[0] {
                    let rx = (n - u).abs() + n.abs();
                    if rx > order {
                        continue;
                    }
                    let dx = rel[0] + 2.0 * n as f64 * room.dims[0];
                    for l in -bounds[1]..=bounds[1] {
                        let ry = (l - v).abs() + l.abs();
                        if ry > order {
                            continue;
                        }
                        let dy = rel[1] + 2.0 * l as f64 * room.dims[1];
                        for m in -bounds[2]..=bounds[2] {
                            let rz = (m - w).abs() + m.abs();
                            if rz > order {
                                continue;
                            }
                            let dz = rel[2] + 2.0 * m as f64 * room.dims[2];
                            let d = (dx * dx + dy * dy + dz * dz).sqrt();
                            if d <= max_dist {
                                visit(d, (rx + ry + rz) as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn image_source_response(room: &RoomSpec, beta: f64, src: &Point, mic: &Point, len: usize) -> Vec<f64> {
    let fs = room.sample_rate as f64;
    let order = room.effective_max_order() as isize;
    let mut h = vec![0.0; len];
    for_each_image(room, src, mic, len, order, |d, reflections| {
        let amp = beta.powi(reflections as i32) / (4.0 * PI * d);
        add_image(&mut h, d * fs / SPEED_OF_SOUND, amp);
    });
    if let Some(fc) = room.highpass_hz {
        allen_berkley_highpass(&mut h, fc, fs);
    }
    h
}

fn allen_berkley_highpass(h: &mut [f64], cutoff: f64, fs: f64) {
    let w = 2.0 * PI * cutoff / fs;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let mut y = [0.0; 3];
    for x in h.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *x;
        *x = y[0] + a1 * y[1] + r1 * y[2];
    }
}

/// Room impulse responses between every source and microphone.
///
/// Responses are causal, keep the absolute `1/(4 pi d)` scaling, and are
/// at least `rt60 * fs` samples long (plus the longest direct-path delay).
pub fn simulate_rir(room: &RoomSpec) -> Result<Rirs> {
    room.validate()?;
    let len = room.rir_len();
    let beta = room.reflection_coefficient();
    let k = room.n_sources();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|m| (0..k).map(move |s| (m, s))).collect();
    let flat: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(m, s)| image_source_response(room, beta, &room.sources[s], &room.mics[m], len))
        .collect();
    let mut responses = vec![Vec::with_capacity(k); k];
    for ((m, _), h) in pairs.iter().zip(flat) {
        responses[*m].push(h);
    }
    Rirs::new(room.sample_rate, responses)
}

/// Linear convolution truncated to `x.len()` samples.
pub fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let taps = h.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
    if taps == 0 || n == 0 {
        return vec![0.0; n];
    }
    if taps <= 64 {
        let mut y = vec![0.0; n];
        for (j, &hj) in h[..taps].iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            for i in j..n {
                y[i] += hj * x[i - j];
            }
        }
        return y;
    }
    let size = (n + taps - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<C64> = (0..size).map(|i| C64::new(if i < n { x[i] } else { 0.0 }, 0.0)).collect();
    let mut b: Vec<C64> =
        (0..size).map(|i| C64::new(if i < taps { h[i] } else { 0.0 }, 0.0)).collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= *q;
    }
    inv.process(&mut a);
    a[..n].iter().map(|z| z.re / size as f64).collect()
}

/// A reverberant mixing scenario with its ground truth.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub room: Option<RoomSpec>,
    pub rirs: Rirs,
    /// Mono dry source signals.
    pub dry: Vec<Waveform>,
    /// `images[k]` is source `k` as observed on all microphones.
    pub images: Vec<Waveform>,
    pub mixture: Waveform,
    pub seed: u64,
}

impl Scenario {
    pub fn n_sources(&self) -> usize {
        self.dry.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.mixture.sample_rate
    }

    /// Image of source `k` at reference microphone `k`.
    pub fn reference(&self, k: usize) -> &[f64] {
        self.images[k].channel(k)
    }
}

/// Convolves each dry source with its column of `rirs` and sums the images.
pub fn convolve_mix(dry: &[Waveform], rirs: &Rirs) -> Result<Scenario> {
    let k = dry.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no dry sources".into()));
    }
    if rirs.n_sources() != k {
        return Err(Error::LengthMismatch(format!(
            "{} dry sources but impulse responses for {}",
            k,
            rirs.n_sources()
        )));
    }
    let len = dry[0].len();
    if dry.iter().any(|d| d.len() != len || d.n_channels() != 1) {
        return Err(Error::LengthMismatch("dry sources must be mono and equally long".into()));
    }
    let fs = dry[0].sample_rate;
    let n_mic = rirs.n_mics();
    let images: Vec<Waveform> = (0..k)
        .into_par_iter()
        .map(|s| {
            let chans = (0..n_mic).map(|m| convolve_same(dry[s].channel(0), rirs.get(m, s))).collect();
            Waveform::new(fs, chans).expect("equal-length channels")
        })
        .collect();
    let mut mixture = Waveform::zeros(fs, n_mic, len);
    for img in &images {
        for m in 0..n_mic {
            for (acc, v) in mixture.channel_mut(m).iter_mut().zip(img.channel(m)) {
                *acc += v;
            }
        }
    }
    Ok(Scenario { room: None, rirs: rirs.clone(), dry: dry.to_vec(), images, mixture, seed: 0 })
}

/// `A(f)` for every one-sided bin of a `frame_size`-point DFT:
/// `A[m][k](f) = sum_n h_mk[n] exp(-j 2 pi f n / frame_size)`.
pub fn narrowband_mixing_matrix(rirs: &Rirs, frame_size: usize) -> Result<Vec<CMat>> {
    let len = rirs.effective_len();
    if len > frame_size {
        return Err(Error::RirTooLong { len, frame_size });
    }
    if rirs.n_mics() != rirs.n_sources() {
        return Err(Error::ShapeMismatch("mixing matrix must be square".into()));
    }
    let k = rirs.n_mics();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(frame_size);
    let n_freq = frame_size / 2 + 1;
    let mut spectra = vec![vec![Vec::new(); k]; k];
    for (m, row) in spectra.iter_mut().enumerate() {
        for (s, slot) in row.iter_mut().enumerate() {
            let h = rirs.get(m, s);
            let mut buf: Vec<C64> = (0..frame_size)
                .map(|i| C64::new(if i < len.min(h.len()) { h[i] } else { 0.0 }, 0.0))
                .collect();
            fft.process(&mut buf);
            buf.truncate(n_freq);
            *slot = buf;
        }
    }
    (0..n_freq).map(|f| CMat::from_fn(k, |m, s| spectra[m][s][f])).collect()
}

/// How the reverberation time of a generated scenario is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rt60Choice {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
}

/// Parameters for randomly generated desk-scale scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n_sources: usize,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub room_dims: Point,
    pub rt60: Rt60Choice,
    pub mic_spacing: f64,
    pub source_radius: (f64, f64),
    /// Minimum difference between source directions relative to the array axis.
    pub min_separation_deg: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_sources: 2,
            sample_rate: DEFAULT_SAMPLE_RATE,
            duration_s: 8.0,
            room_dims: [4.0, 4.0, 3.0],
            rt60: Rt60Choice::Uniform { min: 0.1, max: 0.4 },
            mic_spacing: 0.02,
            source_radius: (1.0, 1.5),
            min_separation_deg: 20.0,
        }
    }
}

/// Random room layout: linear array near the room centre, sources on a
/// horizontal circle of radius `source_radius` around it.
pub fn random_room(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<RoomSpec> {
    let k = config.n_sources;
    if !(2..=MAX_DIM).contains(&k) {
        return Err(Error::InvalidArgument(format!("{k} sources unsupported")));
    }
    let rt60 = match config.rt60 {
        Rt60Choice::Fixed(t) => t,
        Rt60Choice::Uniform { min, max } => rng.random_range(min..=max),
    };
    let dims = config.room_dims;
    let center = [
        dims[0] / 2.0 + rng.random_range(-0.3..0.3),
        dims[1] / 2.0 + rng.random_range(-0.3..0.3),
        dims[2] / 2.0 + rng.random_range(-0.2..0.2),
    ];
    let mics: Vec<Point> = (0..k)
        .map(|i| {
            let off = (i as f64 - (k as f64 - 1.0) / 2.0) * config.mic_spacing;
            [center[0] + off, center[1], center[2]]
        })
        .collect();
    let min_sep = config.min_separation_deg.to_radians();
    let mut sources: Vec<Point> = Vec::with_capacity(k);
    let mut cones: Vec<f64> = Vec::with_capacity(k);
    let mut attempts = 0;
    while sources.len() < k {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::GeometryError("cannot place sources with the requested separation".into()));
        }
        let theta = rng.random_range(0.0..2.0 * PI);
        let radius = rng.random_range(config.source_radius.0..=config.source_radius.1);
        // A linear array only resolves the angle to its own axis.
        let cone = theta.cos().clamp(-1.0, 1.0).acos();
        if cones.iter().any(|c| (c - cone).abs() < min_sep) {
            continue;
        }
        let p = [center[0] + radius * theta.cos(), center[1] + radius * theta.sin(), center[2]];
        if (0..3).any(|i| p[i] <= 0.1 || p[i] >= dims[i] - 0.1) {
            continue;
        }
        cones.push(cone);
        sources.push(p);
    }
    let room = RoomSpec {
        dims,
        rt60,
        sources,
        mics,
        max_order: None,
        sample_rate: config.sample_rate,
        highpass_hz: Some(100.0),
    };
    room.validate()?;
    Ok(room)
}

/// Deterministic scenario for `seed`: random layout, ISM responses and
/// speech-like dry sources.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room = random_room(config, &mut rng)?;
    let len = (config.duration_s * config.sample_rate as f64).round() as usize;
    if len == 0 {
        return Err(Error::EmptySignal);
    }
    let dry: Vec<Waveform> = (0..config.n_sources)
        .map(|_| Waveform::mono(config.sample_rate, signals::speech_like(&mut rng, len, config.sample_rate)))
        .collect::<Result<_>>()?;
    let rirs = simulate_rir(&room)?;
    let mut scenario = convolve_mix(&dry, &rirs)?;
    scenario.room = Some(room);
    scenario.seed = seed;
    Ok(scenario)
}

/// Schroeder energy decay curve in dB (0 dB at `t = 0`).
pub fn schroeder_decay_db(h: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc = vec![0.0; h.len()];
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    edc.iter().map(|e| 10.0 * (e / total).max(1e-300).log10()).collect()
}

/// Fits a line to the Schroeder curve of a sampled energy envelope
/// between -5 and -25 dB and evaluates it at `t_s` seconds.
fn fit_decay_db(energy: &[f64], rate: f64, t_s: f64) -> Option<f64> {
    let mut acc = 0.0;
    let mut edc = vec![0.0; energy.len()];
    for i in (0..energy.len()).rev() {
        acc += energy[i];
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(i, e)| (i as f64 / rate, 10.0 * (e / total).max(1e-300).log10()))
        .filter(|(_, db)| (-25.0..=-5.0).contains(db))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(my + sxy / sxx * (t_s - mx))
}

/// Decay level (dB) of an impulse response extrapolated to `t_s` seconds
/// after its first non-zero tap, from the -5 to -25 dB Schroeder slope.
pub fn extrapolated_decay_db(h: &[f64], fs: u32, t_s: f64) -> Option<f64> {
    let onset = h.iter().position(|&v| v != 0.0)? as f64 / fs as f64;
    let energy: Vec<f64> = h.iter().map(|v| v * v).collect();
    fit_decay_db(&energy, fs as f64, onset + t_s)
}
