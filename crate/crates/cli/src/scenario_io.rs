//! Scenario directories.
//!
//! ```text
//! dry_<k>.wav     mono dry source k
//! image_<k>.wav   source k on every microphone
//! mixture.wav     sum of the images
//! rirs.wav        raw impulse responses, channel m*K + k (mic-major)
//! meta.txt        key = value description
//! masks.msk       optional oracle interference masks (MSK1)
//! ```
//!
//! Dry, image and mixture files share one gain (`export_gain`) that puts
//! the mixture peak at 0.9; all WAVs are 32-bit float.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bss_core::algorithms::MaskSet;
use bss_core::formats::write_masks;
use bss_core::roomsim::{Rirs, Scenario};
use bss_core::stft::Waveform;
use bss_core::wav::{read_wav, write_wav, WavEncoding};
use bss_core::Error;

use crate::error::{CliError, CliResult};

pub const EXPORT_PEAK: f64 = 0.9;

/// `x` with six decimals, trailing zeros removed (`300.000000` -> `300`).
pub fn trim_float(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn point(p: &[f64; 3]) -> String {
    p.iter().map(|v| trim_float(*v)).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioMeta {
    pub n_sources: usize,
    pub sample_rate: u32,
    pub samples: usize,
    pub seed: u64,
    pub rt60_ms: f64,
    pub export_gain: f64,
}

pub struct LoadedScenario {
    /// Signals at exported scale; the mixture is the sum of the images.
    pub scenario: Scenario,
    pub meta: ScenarioMeta,
}

pub fn scenario_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

fn write(path: PathBuf, w: &Waveform) -> CliResult<()> {
    write_wav(&path, w, WavEncoding::Float32).map_err(CliError::at(path))
}

pub fn write_scenario(dir: &Path, scn: &Scenario, masks: Option<&MaskSet>) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let peak = scn.mixture.peak();
    let gain = if peak > 0.0 { EXPORT_PEAK / peak } else { 1.0 };
    let k = scn.n_sources();
    for (i, d) in scn.dry.iter().enumerate() {
        write(dir.join(format!("dry_{i}.wav")), &d.scaled(gain))?;
    }
    for (i, img) in scn.images.iter().enumerate() {
        write(dir.join(format!("image_{i}.wav")), &img.scaled(gain))?;
    }
    write(dir.join("mixture.wav"), &scn.mixture.scaled(gain))?;
    let len = scn.rirs.len();
    let chans: Vec<Vec<f64>> = (0..scn.rirs.n_mics())
        .flat_map(|m| (0..k).map(move |s| (m, s)))
        .map(|(m, s)| {
            let mut h = scn.rirs.get(m, s).to_vec();
            h.resize(len, 0.0);
            h
        })
        .collect();
    write(dir.join("rirs.wav"), &Waveform::new(scn.sample_rate(), chans)?)?;

    let mut meta = String::new();
    let mut kv = |key: &str, value: String| writeln!(meta, "{key} = {value}").expect("string write");
    kv("n_sources", k.to_string());
    kv("sample_rate", scn.sample_rate().to_string());
    kv("samples", scn.mixture.len().to_string());
    kv("seed", scn.seed.to_string());
    if let Some(room) = &scn.room {
        kv("rt60_ms", trim_float(room.rt60 * 1000.0));
        kv("room_dims", point(&room.dims));
        kv("mics", room.mics.iter().map(point).collect::<Vec<_>>().join("; "));
        kv("sources", room.sources.iter().map(point).collect::<Vec<_>>().join("; "));
        kv("highpass_hz", room.highpass_hz.map_or("none".to_string(), trim_float));
        kv("max_order", room.effective_max_order().to_string());
    }
    kv("export_gain", format!("{gain:.9e}"));
    kv("rir_taps", len.to_string());
    let meta_path = dir.join("meta.txt");
    std::fs::write(&meta_path, meta).map_err(CliError::io(meta_path))?;

    if let Some(m) = masks {
        let path = dir.join("masks.msk");
        write_masks(&path, m).map_err(CliError::at(path))?;
    }
    Ok(())
}

fn read_meta(path: &Path) -> CliResult<ScenarioMeta> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let map: BTreeMap<&str, &str> = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();
    let bad = |what: &str| CliError::At { path: path.to_path_buf(), source: Error::ShapeMismatch(what.to_string()) };
    fn get<T: std::str::FromStr>(map: &BTreeMap<&str, &str>, key: &str) -> Option<T> {
        map.get(key).and_then(|v| v.parse().ok())
    }
    let meta = ScenarioMeta {
        n_sources: get(&map, "n_sources").ok_or_else(|| bad("meta.txt lacks n_sources"))?,
        sample_rate: get(&map, "sample_rate").ok_or_else(|| bad("meta.txt lacks sample_rate"))?,
        samples: get(&map, "samples").ok_or_else(|| bad("meta.txt lacks samples"))?,
        seed: get(&map, "seed").unwrap_or(0),
        rt60_ms: get(&map, "rt60_ms").unwrap_or(f64::NAN),
        export_gain: get(&map, "export_gain").unwrap_or(1.0),
    };
    if !(2..=4).contains(&meta.n_sources) {
        return Err(bad(&format!("{} sources in meta.txt", meta.n_sources)));
    }
    Ok(meta)
}

fn read(path: PathBuf) -> CliResult<Waveform> {
    read_wav(&path).map_err(CliError::at(path))
}

pub fn read_scenario(dir: &Path) -> CliResult<LoadedScenario> {
    let meta = read_meta(&dir.join("meta.txt"))?;
    let k = meta.n_sources;
    let shape_err = |path: PathBuf, msg: String| CliError::At { path, source: Error::ShapeMismatch(msg) };
    let mut dry = Vec::with_capacity(k);
    let mut images = Vec::with_capacity(k);
    for i in 0..k {
        let p = dir.join(format!("dry_{i}.wav"));
        let d = read(p.clone())?;
        if d.n_channels() != 1 || d.len() != meta.samples {
            return Err(shape_err(p, format!("expected mono, {} samples", meta.samples)));
        }
        dry.push(d);
        let p = dir.join(format!("image_{i}.wav"));
        let img = read(p.clone())?;
        if img.n_channels() != k || img.len() != meta.samples {
            return Err(shape_err(p, format!("expected {k} channels, {} samples", meta.samples)));
        }
        images.push(img);
    }
    let p = dir.join("rirs.wav");
    let raw = read(p.clone())?;
    if raw.n_channels() != k * k {
        return Err(shape_err(p, format!("expected {} channels", k * k)));
    }
    let responses: Vec<Vec<Vec<f64>>> =
        (0..k).map(|m| (0..k).map(|s| raw.channel(m * k + s).to_vec()).collect()).collect();
    let rirs = Rirs::new(raw.sample_rate, responses).map_err(CliError::at(p))?;
    let mut mixture = Waveform::zeros(meta.sample_rate, k, meta.samples);
    for img in &images {
        for m in 0..k {
            for (acc, v) in mixture.channel_mut(m).iter_mut().zip(img.channel(m)) {
                *acc += v;
            }
        }
    }
    let scenario = Scenario { room: None, rirs, dry, images, mixture, seed: meta.seed };
    Ok(LoadedScenario { scenario, meta })
}
