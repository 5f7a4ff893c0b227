//! Experiment configuration: JSON with a versioned schema tag, validated
//! field by field before any computation starts.

use std::path::Path;

use efq::fit::FitMethod;
use efq::simulate::InputKind;
use efq::spectral::{ContinuousTF, FrequencyGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "efq-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub sample_period: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let p = efq::example_plant();
        Self {
            num: p.num().to_vec(),
            den: p.den().to_vec(),
            sample_period: p.sample_period(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub method: FitMethod,
    pub order: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::Qcqp,
            order: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub length: usize,
    /// Number of seeds, `base_seed, base_seed + 1, ...`.
    pub seeds: usize,
    pub base_seed: u64,
    pub input: InputKind,
    pub ct_pole: f64,
    /// Cells to simulate; every fitted cell when absent.
    pub bits: Option<Vec<u32>>,
    pub lambdas: Option<Vec<usize>>,
    /// Samples of the first seed written as a trace; 0 disables traces.
    pub trace_length: usize,
    pub whiteness_lags: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            length: 1_000_000,
            seeds: 5,
            base_seed: 1,
            input: InputKind::Colored,
            ct_pole: efq::EXAMPLE_INPUT_POLE,
            bits: None,
            lambdas: None,
            trace_length: 0,
            whiteness_lags: 10,
        }
    }
}

impl SimConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.base_seed + k).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub plant: PlantConfig,
    pub bits: Vec<u32>,
    pub lambdas: Vec<usize>,
    pub loading_factor: f64,
    pub grid_points: usize,
    /// Additional `nu` values for the oversampling identity check.
    pub extra_nu: Vec<f64>,
    pub fit: FitConfig,
    pub sim: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA.to_string(),
            plant: PlantConfig::default(),
            bits: (1..=8).collect(),
            lambdas: (1..=4).collect(),
            loading_factor: 4.0,
            grid_points: FrequencyGrid::DEFAULT_POINTS,
            extra_nu: vec![1.2, 5.0, 17.0],
            fit: FitConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?
            }
        };
        if let Some(seed) = overrides.seed {
            cfg.sim.base_seed = seed;
        }
        if let Some(grid) = overrides.grid {
            cfg.grid_points = grid;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collects every violation with its field path.
    pub fn validate(&self) -> CliResult<()> {
        let mut errs = Vec::new();
        if self.schema != SCHEMA {
            errs.push(format!("schema: expected \"{SCHEMA}\", got \"{}\"", self.schema));
        }
        if let Err(e) = self.plant_tf() {
            errs.push(format!("plant: {e}"));
        }
        if self.bits.is_empty() {
            errs.push("bits: must be nonempty".into());
        }
        for (i, b) in self.bits.iter().enumerate() {
            if !(1..=52).contains(b) {
                errs.push(format!("bits[{i}]: must be in 1..=52, got {b}"));
            }
        }
        if self.lambdas.is_empty() {
            errs.push("lambdas: must be nonempty".into());
        }
        for (i, l) in self.lambdas.iter().enumerate() {
            if !(1..=64).contains(l) {
                errs.push(format!("lambdas[{i}]: must be in 1..=64, got {l}"));
            }
        }
        if !(self.loading_factor.is_finite() && self.loading_factor > 0.0) {
            errs.push(format!("loading_factor: must be positive, got {}", self.loading_factor));
        }
        if self.grid_points < FrequencyGrid::MIN_POINTS {
            errs.push(format!(
                "grid_points: must be at least {}, got {}",
                FrequencyGrid::MIN_POINTS,
                self.grid_points
            ));
        }
        for (i, nu) in self.extra_nu.iter().enumerate() {
            if !(nu.is_finite() && *nu > 1.0) {
                errs.push(format!("extra_nu[{i}]: nu must exceed 1, got {nu}"));
            }
        }
        if self.fit.order < 1 || self.fit.order > self.grid_points / 4 {
            errs.push(format!(
                "fit.order: must be in 1..={}, got {}",
                self.grid_points / 4,
                self.fit.order
            ));
        }
        let s = &self.sim;
        if s.length < 2000 {
            errs.push(format!("sim.length: must be at least 2000, got {}", s.length));
        }
        if s.seeds == 0 {
            errs.push("sim.seeds: must be at least 1".into());
        }
        if !(s.ct_pole.is_finite() && s.ct_pole > 0.0) {
            errs.push(format!("sim.ct_pole: must be positive, got {}", s.ct_pole));
        }
        if s.trace_length > s.length {
            errs.push(format!(
                "sim.trace_length: must not exceed sim.length ({}), got {}",
                s.length, s.trace_length
            ));
        }
        if s.whiteness_lags == 0 || s.whiteness_lags >= s.length / 2 {
            errs.push(format!("sim.whiteness_lags: must be in 1..{}, got {}", s.length / 2, s.whiteness_lags));
        }
        if s.bits.as_ref().is_some_and(|v| v.is_empty()) {
            errs.push("sim.bits: must be nonempty when present".into());
        }
        if s.lambdas.as_ref().is_some_and(|v| v.is_empty()) {
            errs.push("sim.lambdas: must be nonempty when present".into());
        }
        if let Some(bits) = &s.bits {
            for (i, b) in bits.iter().enumerate() {
                if !self.bits.contains(b) {
                    errs.push(format!("sim.bits[{i}]: {b} is not in bits"));
                }
            }
        }
        if let Some(lambdas) = &s.lambdas {
            for (i, l) in lambdas.iter().enumerate() {
                if !self.lambdas.contains(l) {
                    errs.push(format!("sim.lambdas[{i}]: {l} is not in lambdas"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }

    pub fn plant_tf(&self) -> efq::Result<ContinuousTF> {
        ContinuousTF::new(self.plant.num.clone(), self.plant.den.clone(), self.plant.sample_period)
    }

    pub fn grid(&self) -> efq::Result<FrequencyGrid> {
        FrequencyGrid::new(self.grid_points)
    }

    /// Sorted, deduplicated `(bits, lambda)` cells.
    pub fn cells(&self) -> Vec<(u32, usize)> {
        let mut cells: Vec<(u32, usize)> = self
            .bits
            .iter()
            .flat_map(|&b| self.lambdas.iter().map(move |&l| (b, l)))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"schema": "efq-config/1", "bits": [2, 3]}"#).unwrap();
        assert_eq!(cfg.bits, vec![2, 3]);
        assert_eq!(cfg.loading_factor, 4.0);
        assert_eq!(cfg.fit.method, FitMethod::Qcqp);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bitz": [1]}"#).is_err());
    }

    #[test]
    fn violations_carry_field_paths() {
        let mut cfg = ExperimentConfig {
            extra_nu: vec![2.0, 1.0],
            bits: vec![0, 4],
            ..Default::default()
        };
        cfg.plant.den = vec![1.0, -1.0];
        cfg.sim.seeds = 0;
        let Err(CliError::Config(errs)) = cfg.validate() else {
            panic!("expected validation failure");
        };
        let joined = errs.join("\n");
        for path in ["extra_nu[1]", "bits[0]", "plant:", "sim.seeds"] {
            assert!(joined.contains(path), "{path} missing from {joined}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.sim.base_seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
