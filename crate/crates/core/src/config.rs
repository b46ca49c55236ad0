//! Run configuration: one JSON document, every key optional.
//!
//! Defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `circuit.modes` | 3 |
//! | `circuit.probe` | `"fock"` (one photon per mode) |
//! | `circuit.alpha` | `√modes` (coherent probe in mode 0) |
//! | `circuit.phi0` | 0.01 (four-mode only) |
//! | `scan.resolution` | 256 |
//! | `scan.output` | none, required by `scan` |
//! | `scan.format` | from the output extension, else `csv` |
//! | `adaptive.true_phases` | `[1.0, 2.0]` |
//! | `adaptive.nu` | 10000 |
//! | `adaptive.fractions` | `[0.1, 0.45, 0.45]`: rough step, then one per target |
//! | `adaptive.repetitions` | 200 |
//! | `adaptive.seed` | 42 |
//! | `adaptive.output` | none, required by `adaptive` |
//! | `adaptive.bound` | 0.543 (3 modes), 0.437 (4 modes) |
//! | `adaptive.rough_controls` | `[[0, 0], THREE_MODE_ROUGH]` or `[[0, 0], FOUR_MODE_ROUGH]` |
//! | `adaptive.targets` | `[Q1, Q2]` (3 modes), `FOUR_MODE_TARGETS` (4 modes) |
//! | `tolerances.singular_condition` | 1e10 |
//! | `tolerances.refine` | 1e-5 (`null` also means default) |
//!
//! Unknown keys are rejected. Command-line flags override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::SearchOptions;
use crate::evolution::{EvolutionError, PhaseModel, Probe};
use crate::fisher::SINGULAR_CONDITION;
use crate::interferometer::Circuit;
use crate::landscape::{GridFormat, DEFAULT_RESOLUTION, MIN_RESOLUTION};
use crate::protocol::{AdaptiveConfig, ProtocolKind};

pub const DEFAULT_REFINE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Fock,
    Coherent,
    Distinguishable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitConfig {
    pub modes: usize,
    pub probe: ProbeKind,
    pub alpha: Option<f64>,
    pub phi0: f64,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            modes: 3,
            probe: ProbeKind::Fock,
            alpha: None,
            phi0: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub resolution: usize,
    pub output: Option<PathBuf>,
    pub format: Option<GridFormat>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            output: None,
            format: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveSection {
    pub true_phases: [f64; 2],
    pub nu: u64,
    pub fractions: Option<Vec<f64>>,
    pub repetitions: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub bound: Option<f64>,
    pub rough_controls: Option<Vec<[f64; 2]>>,
    pub targets: Option<Vec<[f64; 2]>>,
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        Self {
            true_phases: [1.0, 2.0],
            nu: 10_000,
            fractions: None,
            repetitions: 200,
            seed: 42,
            output: None,
            bound: None,
            rough_controls: None,
            targets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// FIMs with condition number at or above this count as singular.
    pub singular_condition: f64,
    /// Phase tolerance of simplex refinements (rad).
    pub refine: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            singular_condition: SINGULAR_CONDITION,
            refine: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub circuit: CircuitConfig,
    pub scan: ScanConfig,
    pub adaptive: AdaptiveSection,
    pub tolerances: Tolerances,
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub resolution: Option<usize>,
    pub phi0: Option<f64>,
    pub nu: Option<u64>,
    pub repetitions: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(v) = o.seed {
            self.adaptive.seed = v;
        }
        if let Some(v) = o.resolution {
            self.scan.resolution = v;
        }
        if let Some(v) = o.phi0 {
            self.circuit.phi0 = v;
        }
        if let Some(v) = o.nu {
            self.adaptive.nu = v;
        }
        if let Some(v) = o.repetitions {
            self.adaptive.repetitions = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.circuit;
        if !matches!(c.modes, 3 | 4) {
            return Err(invalid(format!(
                "circuit.modes must be 3 or 4, got {}",
                c.modes
            )));
        }
        if let Some(a) = c.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(invalid(format!("circuit.alpha must be positive, got {a}")));
            }
        }
        if !c.phi0.is_finite() {
            return Err(invalid("circuit.phi0 must be finite"));
        }
        if self.scan.resolution < MIN_RESOLUTION {
            return Err(invalid(format!(
                "scan.resolution must be at least {MIN_RESOLUTION}, got {}",
                self.scan.resolution
            )));
        }
        let a = &self.adaptive;
        if a.true_phases.iter().any(|p| !p.is_finite()) {
            return Err(invalid("adaptive.true_phases must be finite"));
        }
        if a.nu == 0 {
            return Err(invalid("adaptive.nu must be positive"));
        }
        if a.repetitions < 2 {
            return Err(invalid(format!(
                "adaptive.repetitions must be at least 2 for statistics, got {}",
                a.repetitions
            )));
        }
        if let Some(b) = a.bound {
            if !(b > 0.0) {
                return Err(invalid(format!("adaptive.bound must be positive, got {b}")));
            }
        }
        let t = &self.tolerances;
        if !(t.singular_condition > 1.0) {
            return Err(invalid("tolerances.singular_condition must exceed 1"));
        }
        if let Some(r) = t.refine {
            if !(r > 0.0) {
                return Err(invalid(format!(
                    "tolerances.refine must be positive, got {r}"
                )));
            }
        }
        // fraction count and sum; phi0 > 0 is checked when the protocol runs
        let mut protocol = self.protocol_config();
        if let ProtocolKind::FourMode { phi0 } = &mut protocol.kind {
            *phi0 = phi0.abs().max(f64::MIN_POSITIVE);
        }
        protocol.validate().map_err(|e| invalid(e.to_string()))
    }

    pub fn refine(&self) -> f64 {
        self.tolerances.refine.unwrap_or(DEFAULT_REFINE)
    }

    pub fn circuit(&self) -> Circuit {
        Circuit::for_modes(self.circuit.modes, self.circuit.phi0).expect("modes validated")
    }

    pub fn probe(&self) -> Probe {
        let n = self.circuit.modes;
        match self.circuit.probe {
            ProbeKind::Fock => Probe::fock(vec![1; n]),
            ProbeKind::Distinguishable => Probe::distinguishable(vec![1; n]),
            ProbeKind::Coherent => {
                Probe::coherent(self.circuit.alpha.unwrap_or((n as f64).sqrt()), 0)
            }
        }
    }

    pub fn model(&self) -> Result<PhaseModel, EvolutionError> {
        self.circuit().model(&self.probe())
    }

    /// Grid format: explicit, else from the output extension, else CSV.
    pub fn grid_format(&self) -> GridFormat {
        self.scan.format.unwrap_or_else(|| {
            match self
                .scan
                .output
                .as_ref()
                .and_then(|p| p.extension())
                .and_then(|e| e.to_str())
            {
                Some(e) if e.eq_ignore_ascii_case("json") => GridFormat::Json,
                _ => GridFormat::Csv,
            }
        })
    }

    pub fn protocol_config(&self) -> AdaptiveConfig {
        let a = &self.adaptive;
        let mut p = match self.circuit.modes {
            4 => AdaptiveConfig::four_mode(a.true_phases, self.circuit.phi0, a.nu),
            _ => AdaptiveConfig::three_mode(a.true_phases, a.nu),
        };
        if let Some(f) = &a.fractions {
            p.fractions = f.clone();
        }
        if let Some(r) = &a.rough_controls {
            p.rough_controls = r.clone();
        }
        if let Some(t) = &a.targets {
            p.targets = t.clone();
        }
        p.search = SearchOptions {
            refine_tol: self.refine(),
            ..p.search
        };
        p
    }

    pub fn bound(&self) -> f64 {
        self.adaptive
            .bound
            .unwrap_or_else(|| self.protocol_config().kind.default_bound())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.refine(), DEFAULT_REFINE);
        assert_eq!(c.bound(), 0.543);
        assert_eq!(c.protocol_config().fractions, vec![0.1, 0.45, 0.45]);
    }

    #[test]
    fn null_refine_means_default() {
        let c = RunConfig::from_json(r#"{"tolerances": {"refine": null}}"#).unwrap();
        assert_eq!(c.refine(), DEFAULT_REFINE);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_json(r#"{"circuit": {"arms": 3}}"#),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"extra": 1}"#),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            r#"{"circuit": {"modes": 5}}"#,
            r#"{"scan": {"resolution": 10}}"#,
            r#"{"adaptive": {"repetitions": 1}}"#,
            r#"{"adaptive": {"fractions": [0.5, 0.6]}}"#,
            r#"{"circuit": {"modes": 4}, "adaptive": {"fractions": [0.1, 0.9]}}"#,
            r#"{"circuit": {"probe": "coherent", "alpha": -1}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(bad), Err(ConfigError::Invalid(_))),
                "{bad}"
            );
        }
        // phi0 = 0 is a valid scan setting; the adaptive run rejects it later
        assert!(RunConfig::from_json(r#"{"circuit": {"modes": 4, "phi0": 0}}"#).is_ok());
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::from_json(r#"{"adaptive": {"seed": 1, "nu": 500}}"#).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            nu: Some(2000),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!((c.adaptive.seed, c.adaptive.nu), (9, 2000));
        assert!(c
            .apply(&Overrides {
                repetitions: Some(1),
                ..Overrides::default()
            })
            .is_err());
    }

    #[test]
    fn four_mode_defaults() {
        let c = RunConfig::from_json(r#"{"circuit": {"modes": 4, "probe": "coherent"}}"#).unwrap();
        assert_eq!(c.bound(), 0.437);
        assert_eq!(c.probe(), Probe::coherent(2.0, 0));
        assert_eq!(c.protocol_config().fractions, vec![0.1, 0.45, 0.45]);
    }

    #[test]
    fn format_follows_extension() {
        let mut c = RunConfig::default();
        c.scan.output = Some("grid.JSON".into());
        assert_eq!(c.grid_format(), GridFormat::Json);
        c.scan.format = Some(GridFormat::Csv);
        assert_eq!(c.grid_format(), GridFormat::Csv);
    }
}
