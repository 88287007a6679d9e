//! Experiment configuration: defaults, `key = value` files and overrides.

use std::path::{Path, PathBuf};

use bss_core::algorithms::{Algo, SeparatorConfig};
use bss_core::roomsim::{Rt60Choice, ScenarioConfig};
use bss_core::separation::DiagonalLoading;
use bss_core::stft::{StftConfig, DEFAULT_FRAME_SIZE, DEFAULT_HOP, DEFAULT_SAMPLE_RATE};

use crate::error::{CliError, CliResult};

/// Reverberation times in milliseconds.
#[derive(Clone, Debug, PartialEq)]
pub enum Rt60Spec {
    Fixed(f64),
    /// Drawn uniformly per scenario.
    Range { min: f64, max: f64 },
    /// Scenario `i` uses entry `i mod len`.
    Cycle(Vec<f64>),
}

impl Rt60Spec {
    /// `"300"`, `"100..400"` or `"100,200,300"`.
    pub fn parse(s: &str) -> CliResult<Self> {
        let num = |v: &str| -> CliResult<f64> {
            let x: f64 = v.trim().parse().map_err(|_| CliError::usage(format!("bad rt60 value `{v}`")))?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(CliError::usage(format!("rt60 must be positive, got `{v}`")));
            }
            Ok(x)
        };
        if let Some((a, b)) = s.split_once("..") {
            let (min, max) = (num(a)?, num(b)?);
            if min > max {
                return Err(CliError::usage(format!("empty rt60 range `{s}`")));
            }
            Ok(Rt60Spec::Range { min, max })
        } else if s.contains(',') {
            Ok(Rt60Spec::Cycle(s.split(',').map(num).collect::<CliResult<_>>()?))
        } else {
            Ok(Rt60Spec::Fixed(num(s)?))
        }
    }

    pub fn choice(&self, index: usize) -> Rt60Choice {
        match self {
            Rt60Spec::Fixed(ms) => Rt60Choice::Fixed(ms / 1000.0),
            Rt60Spec::Range { min, max } => Rt60Choice::Uniform { min: min / 1000.0, max: max / 1000.0 },
            Rt60Spec::Cycle(list) => Rt60Choice::Fixed(list[index % list.len()] / 1000.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n_scenarios: usize,
    pub n_sources: usize,
    pub rt60_ms: Rt60Spec,
    pub algos: Vec<Algo>,
    /// Scenario `i` uses seed `seed + i`.
    pub seed: u64,
    pub frame: usize,
    pub hop: usize,
    pub l_iters: usize,
    pub iterations: usize,
    /// Diagonal loading relative to `trace / K`.
    pub eps: f64,
    pub tol: f64,
    pub nmf_bases: usize,
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub room_dims: [f64; 3],
    pub mic_spacing: f64,
    /// Also write oracle masks when simulating.
    pub masks: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sep = SeparatorConfig::default();
        let scn = ScenarioConfig::default();
        ExperimentConfig {
            n_scenarios: 50,
            n_sources: 2,
            rt60_ms: Rt60Spec::Range { min: 100.0, max: 400.0 },
            algos: vec![Algo::MvicaOracle, Algo::IdlmaOracle, Algo::AuxIva],
            seed: 0,
            frame: DEFAULT_FRAME_SIZE,
            hop: DEFAULT_HOP,
            l_iters: sep.l_iters,
            iterations: sep.iterations,
            eps: 1e-6,
            tol: sep.tol,
            nmf_bases: sep.nmf_bases,
            out: PathBuf::from("out"),
            workers: 0,
            duration_s: scn.duration_s,
            sample_rate: DEFAULT_SAMPLE_RATE,
            room_dims: scn.room_dims,
            mic_spacing: scn.mic_spacing,
            masks: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.trim().parse().map_err(|_| CliError::usage(format!("bad value `{value}` for `{key}`")))
}

pub fn parse_algos(value: &str) -> CliResult<Vec<Algo>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Algo>().map_err(|_| CliError::UnknownAlgo(s.to_string())))
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg = ExperimentConfig::default();
        cfg.merge_str(&text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn merge_str(&mut self, text: &str) -> CliResult<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", no + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::usage(format!("config line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "n_scenarios" => self.n_scenarios = parse_num(key, value)?,
            "n_sources" | "K" => self.n_sources = parse_num(key, value)?,
            "rt60_ms" | "rt60" => self.rt60_ms = Rt60Spec::parse(value)?,
            "algos" | "algo" => self.algos = parse_algos(value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "frame" => self.frame = parse_num(key, value)?,
            "hop" => self.hop = parse_num(key, value)?,
            "L" | "l_iters" => self.l_iters = parse_num(key, value)?,
            "iters" | "iterations" => self.iterations = parse_num(key, value)?,
            "eps" => self.eps = parse_num(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "nmf_bases" => self.nmf_bases = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = parse_num(key, value)?,
            "duration_s" => self.duration_s = parse_num(key, value)?,
            "sample_rate" => self.sample_rate = parse_num(key, value)?,
            "mic_spacing" => self.mic_spacing = parse_num(key, value)?,
            "masks" => self.masks = parse_num(key, value)?,
            "room_dims" => {
                let v: Vec<f64> = value.split(',').map(|s| parse_num(key, s)).collect::<CliResult<_>>()?;
                self.room_dims = v
                    .try_into()
                    .map_err(|_| CliError::usage(format!("room_dims needs three values, got `{value}`")))?;
            }
            _ => return Err(CliError::usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.n_scenarios == 0 {
            return Err(CliError::usage("n_scenarios must be at least 1"));
        }
        if !(2..=4).contains(&self.n_sources) {
            return Err(CliError::usage(format!("n_sources must be 2..=4, got {}", self.n_sources)));
        }
        if let Rt60Spec::Cycle(v) = &self.rt60_ms {
            if v.is_empty() {
                return Err(CliError::usage("empty rt60 list"));
            }
        }
        if !(self.duration_s > 0.0) {
            return Err(CliError::usage("duration_s must be positive"));
        }
        self.stft()?;
        self.separator().validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(())
    }

    pub fn stft(&self) -> CliResult<StftConfig> {
        StftConfig::new(self.frame, self.hop).map_err(|e| CliError::usage(e.to_string()))
    }

    pub fn separator(&self) -> SeparatorConfig {
        SeparatorConfig {
            iterations: self.iterations,
            l_iters: self.l_iters,
            eps_load: DiagonalLoading::RelativeToTrace(self.eps),
            nmf_bases: self.nmf_bases,
            seed: self.seed,
            tol: self.tol,
            ..SeparatorConfig::default()
        }
    }

    pub fn scenario_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }

    pub fn scenario(&self, index: usize) -> ScenarioConfig {
        ScenarioConfig {
            n_sources: self.n_sources,
            sample_rate: self.sample_rate,
            duration_s: self.duration_s,
            room_dims: self.room_dims,
            rt60: self.rt60_ms.choice(index),
            mic_spacing: self.mic_spacing,
            ..ScenarioConfig::default()
        }
    }
}
