//! `key = value` run configuration.
//!
//! ```text
//! # probe
//! iterations = 5000
//! base_lr = 0.02
//! # tiling
//! hue = 90,180
//! min_coverage = 0.5
//! ```
//!
//! Every line is a pair, a `#` comment or blank. Unknown and repeated keys are errors.

use pathssl_core::probe::ProbeConfig;
use pathssl_core::tiling::HsvThresholds;

pub const KEYS: [&str; 10] = [
    "iterations",
    "base_lr",
    "final_lr",
    "momentum",
    "batch_size",
    "seed",
    "hue",
    "saturation",
    "value",
    "min_coverage",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct ConfigError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub iterations: Option<usize>,
    pub base_lr: Option<f64>,
    pub final_lr: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub hue: Option<(u8, u8)>,
    pub saturation: Option<(u8, u8)>,
    pub value: Option<(u8, u8)>,
    pub min_coverage: Option<f64>,
}

fn number<T: std::str::FromStr>(text: &str) -> Result<T, String> {
    text.parse().map_err(|_| format!("cannot parse {text:?}"))
}

fn range(text: &str) -> Result<(u8, u8), String> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| format!("expected lo,hi, got {text:?}"))?;
    Ok((number(lo.trim())?, number(hi.trim())?))
}

fn set<T>(slot: &mut Option<T>, value: T, key: &str) -> Result<(), String> {
    if slot.is_some() {
        return Err(format!("{key} given twice"));
    }
    *slot = Some(value);
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.apply_line(line)
                .map_err(|reason| ConfigError { line: i + 1, reason })?;
        }
        Ok(cfg)
    }

    fn apply_line(&mut self, line: &str) -> Result<(), String> {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("expected key = value, got {line:?}"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "iterations" => set(&mut self.iterations, number(value)?, key),
            "base_lr" => set(&mut self.base_lr, number(value)?, key),
            "final_lr" => set(&mut self.final_lr, number(value)?, key),
            "momentum" => set(&mut self.momentum, number(value)?, key),
            "batch_size" => set(&mut self.batch_size, number(value)?, key),
            "seed" => set(&mut self.seed, number(value)?, key),
            "hue" => set(&mut self.hue, range(value)?, key),
            "saturation" => set(&mut self.saturation, range(value)?, key),
            "value" => set(&mut self.value, range(value)?, key),
            "min_coverage" => set(&mut self.min_coverage, number(value)?, key),
            _ => Err(format!("unknown key {key:?} (known: {})", KEYS.join(", "))),
        }
    }

    /// `base` with every probe key present in the file replaced.
    pub fn probe_config(&self, base: ProbeConfig) -> ProbeConfig {
        ProbeConfig {
            iterations: self.iterations.unwrap_or(base.iterations),
            base_lr: self.base_lr.unwrap_or(base.base_lr),
            final_lr: self.final_lr.unwrap_or(base.final_lr),
            momentum: self.momentum.unwrap_or(base.momentum),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            rng_seed: self.seed.unwrap_or(base.rng_seed),
        }
    }

    /// Default thresholds with any configured range replaced.
    pub fn hsv_thresholds(&self) -> pathssl_core::Result<HsvThresholds> {
        let d = HsvThresholds::default();
        HsvThresholds::new(
            self.hue.unwrap_or(d.h_range),
            self.saturation.unwrap_or(d.s_range),
            self.value.unwrap_or(d.v_range),
        )
    }
}
