//! Multichannel STFT analysis and overlap-add synthesis.
//!
//! Frames use a periodic square-root Hann window on both analysis and
//! synthesis. The signal is padded with `frame_size / 2` zeros at the
//! front and back (plus whatever completes the last frame), and synthesis
//! trims that padding away again.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::C64;

pub const DEFAULT_FRAME_SIZE: usize = 4096;
pub const DEFAULT_HOP: usize = 2048;
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Multichannel time-domain signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl Waveform {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidArgument("waveform needs at least one channel".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::LengthMismatch("channels differ in length".into()));
        }
        Ok(Waveform { sample_rate, channels })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn zeros(sample_rate: u32, n_channels: usize, len: usize) -> Self {
        Waveform { sample_rate, channels: vec![vec![0.0; len]; n_channels] }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.channels[k]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.channels[k]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            sample_rate: self.sample_rate,
            channels: self.channels.iter().map(|c| c.iter().map(|x| x * gain).collect()).collect(),
        }
    }

    pub fn peak(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    /// Extracts a single channel as a mono waveform.
    pub fn select(&self, k: usize) -> Waveform {
        Waveform { sample_rate: self.sample_rate, channels: vec![self.channels[k].clone()] }
    }
}

/// Analysis window identifier stored alongside a spectrogram.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowKind {
    SqrtHann,
}

/// Frame geometry shared by analysis and synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub frame_size: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig { frame_size: DEFAULT_FRAME_SIZE, hop: DEFAULT_HOP }
    }
}

impl StftConfig {
    pub fn new(frame_size: usize, hop: usize) -> Result<Self> {
        let cfg = StftConfig { frame_size, hop };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_size < 4 || !self.frame_size.is_power_of_two() {
            return Err(Error::BadGeometry(format!(
                "frame size {} is not a power of two >= 4",
                self.frame_size
            )));
        }
        if self.hop == 0 || self.hop > self.frame_size / 2 || !self.frame_size.is_multiple_of(self.hop) {
            return Err(Error::BadGeometry(format!(
                "hop {} must divide frame size {} and be at most half of it",
                self.hop, self.frame_size
            )));
        }
        Ok(())
    }

    pub fn n_freq(&self) -> usize {
        self.frame_size / 2 + 1
    }

    fn pad(&self) -> usize {
        self.frame_size / 2
    }

    /// Number of frames needed to cover `len` samples plus padding.
    pub fn n_frames(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        (padded - self.frame_size).div_ceil(self.hop) + 1
    }
}

/// Periodic square-root Hann window.
pub fn sqrt_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            w.sqrt()
        })
        .collect()
}

/// Complex STFT coefficients indexed by (channel, frequency, frame).
///
/// Storage is frequency-major (`f`, then `t`, then `k`) so that the
/// per-bin `K`-vectors `x(f, t)` are contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    n_channels: usize,
    n_freq: usize,
    n_frames: usize,
    pub config: StftConfig,
    pub window: WindowKind,
    pub sample_rate: u32,
    /// Length in samples of the analysed signal, used to trim synthesis.
    pub signal_len: usize,
    data: Vec<C64>,
}

impl Spectrogram {
    pub fn zeros(
        n_channels: usize,
        config: StftConfig,
        n_frames: usize,
        sample_rate: u32,
        signal_len: usize,
    ) -> Self {
        let n_freq = config.n_freq();
        Spectrogram {
            n_channels,
            n_freq,
            n_frames,
            config,
            window: WindowKind::SqrtHann,
            sample_rate,
            signal_len,
            data: vec![C64::new(0.0, 0.0); n_channels * n_freq * n_frames],
        }
    }

    /// Same geometry as `self`, with a different channel count and zero data.
    pub fn zeros_like(&self, n_channels: usize) -> Self {
        Self::zeros(n_channels, self.config, self.n_frames, self.sample_rate, self.signal_len)
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[inline]
    fn offset(&self, k: usize, f: usize, t: usize) -> usize {
        (f * self.n_frames + t) * self.n_channels + k
    }

    #[inline]
    pub fn get(&self, k: usize, f: usize, t: usize) -> C64 {
        self.data[self.offset(k, f, t)]
    }

    #[inline]
    pub fn set(&mut self, k: usize, f: usize, t: usize, value: C64) {
        let o = self.offset(k, f, t);
        self.data[o] = value;
    }

    /// The channel vector `x(f, t)`.
    #[inline]
    pub fn vector(&self, f: usize, t: usize) -> &[C64] {
        let o = self.offset(0, f, t);
        &self.data[o..o + self.n_channels]
    }

    /// All frames of bin `f`, `n_frames * n_channels` entries.
    #[inline]
    pub fn bin(&self, f: usize) -> &[C64] {
        let len = self.n_frames * self.n_channels;
        &self.data[f * len..(f + 1) * len]
    }

    pub fn bins_mut(&mut self) -> std::slice::ChunksMut<'_, C64> {
        let len = self.n_frames * self.n_channels;
        self.data.chunks_mut(len)
    }

    pub fn par_bins_mut(&mut self) -> rayon::slice::ChunksMut<'_, C64> {
        let len = self.n_frames * self.n_channels;
        self.data.par_chunks_mut(len)
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn same_geometry(&self, other: &Spectrogram) -> bool {
        self.n_freq == other.n_freq && self.n_frames == other.n_frames && self.config == other.config
    }

    /// Single channel `k` as a one-channel spectrogram.
    pub fn select(&self, k: usize) -> Spectrogram {
        let mut out = self.zeros_like(1);
        for f in 0..self.n_freq {
            for t in 0..self.n_frames {
                out.set(0, f, t, self.get(k, f, t));
            }
        }
        out
    }

    pub fn scaled(&self, gain: C64) -> Spectrogram {
        let mut out = self.clone();
        for z in &mut out.data {
            *z *= gain;
        }
        out
    }

    /// Element-wise difference `self - other`; geometries must match.
    pub fn difference(&self, other: &Spectrogram) -> Result<Spectrogram> {
        if !self.same_geometry(other) || self.n_channels != other.n_channels {
            return Err(Error::ShapeMismatch("spectrogram geometries differ".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= *b;
        }
        Ok(out)
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
}

/// Short-time Fourier transform of every channel of `w`.
///
/// Linear in the input. Each output frame holds the one-sided spectrum of
/// the windowed frame (no normalisation).
pub fn analyze(w: &Waveform, config: StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    if w.is_empty() {
        return Err(Error::EmptySignal);
    }
    let n = config.frame_size;
    let pad = config.pad();
    let n_frames = config.n_frames(w.len());
    let n_freq = config.n_freq();
    let n_ch = w.n_channels();
    let window = sqrt_hann(n);
    let fft = plans(n).forward;

    // Per-channel, per-frame spectra, computed in parallel over frames.
    let per_frame: Vec<Vec<C64>> = (0..n_frames)
        .into_par_iter()
        .map(|t| {
            let mut buf = vec![C64::new(0.0, 0.0); n];
            let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            let mut out = vec![C64::new(0.0, 0.0); n_freq * n_ch];
            let start = t * config.hop;
            for k in 0..n_ch {
                let x = w.channel(k);
                for (i, b) in buf.iter_mut().enumerate() {
                    let idx = (start + i) as isize - pad as isize;
                    let s = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
                    *b = C64::new(s * window[i], 0.0);
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for f in 0..n_freq {
                    out[f * n_ch + k] = buf[f];
                }
            }
            out
        })
        .collect();

    let mut spec = Spectrogram::zeros(n_ch, config, n_frames, w.sample_rate, w.len());
    for (t, frame) in per_frame.iter().enumerate() {
        for f in 0..n_freq {
            let o = spec.offset(0, f, t);
            spec.data[o..o + n_ch].copy_from_slice(&frame[f * n_ch..(f + 1) * n_ch]);
        }
    }
    Ok(spec)
}

/// Weighted overlap-add inverse of [`analyze`].
///
/// DC and Nyquist bins are treated as real. The accumulated squared window
/// is divided out, which is exactly 1 for the default half-overlap.
pub fn synthesize(s: &Spectrogram) -> Result<Waveform> {
    s.config.validate()?;
    let n = s.config.frame_size;
    let hop = s.config.hop;
    let pad = s.config.pad();
    if s.n_freq != s.config.n_freq() {
        return Err(Error::BadGeometry("bin count does not match frame size".into()));
    }
    if s.n_frames == 0 || s.n_frames < s.config.n_frames(s.signal_len.max(1)) {
        return Err(Error::BadGeometry("too few frames for the recorded signal length".into()));
    }
    let window = sqrt_hann(n);
    let ifft = plans(n).inverse;
    let total = (s.n_frames - 1) * hop + n;

    let mut norm = vec![0.0; total];
    for t in 0..s.n_frames {
        for i in 0..n {
            norm[t * hop + i] += window[i] * window[i];
        }
    }

    let channels: Vec<Vec<f64>> = (0..s.n_channels)
        .into_par_iter()
        .map(|k| {
            let mut acc = vec![0.0; total];
            let mut buf = vec![C64::new(0.0, 0.0); n];
            let mut scratch = vec![C64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
            for t in 0..s.n_frames {
                for f in 0..s.n_freq {
                    buf[f] = s.get(k, f, t);
                }
                buf[0].im = 0.0;
                buf[n / 2].im = 0.0;
                for f in 1..n / 2 {
                    buf[n - f] = buf[f].conj();
                }
                ifft.process_with_scratch(&mut buf, &mut scratch);
                let start = t * hop;
                for i in 0..n {
                    acc[start + i] += buf[i].re / n as f64 * window[i];
                }
            }
            (0..s.signal_len)
                .map(|i| {
                    let j = i + pad;
                    if norm[j] > 1e-12 {
                        acc[j] / norm[j]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Waveform::new(s.sample_rate, channels)
}
