//! The four `mmzi` subcommands as library functions. Each takes a validated
//! [`RunConfig`] and a sink for its standard-output text.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::evolution::{EvolutionError, Probe};
use crate::fisher::{
    entanglement_witness, fisher_at, invert_fisher, qfim_for_model, separable_bounds, FisherError,
    SeparableBoundSpec, SeparableBounds, WitnessVerdict,
};
use crate::landscape::{
    export_grid, find_working_points, grid_minima, scan_grid, LandscapeError, WorkingPoint,
    MIN_RESOLUTION,
};
use crate::protocol::{monte_carlo, AdaptiveConfig, MonteCarloStats, ProtocolError};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CommandError {
    /// 1 for usage and config errors, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            CommandError::Runtime(_) => 2,
        }
    }
}

impl From<LandscapeError> for CommandError {
    fn from(e: LandscapeError) -> Self {
        CommandError::Runtime(e.to_string())
    }
}

impl From<EvolutionError> for CommandError {
    fn from(e: EvolutionError) -> Self {
        CommandError::Runtime(e.to_string())
    }
}

impl From<FisherError> for CommandError {
    fn from(e: FisherError) -> Self {
        CommandError::Runtime(e.to_string())
    }
}

impl From<ProtocolError> for CommandError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Config(_) | ProtocolError::Repetitions(_) => {
                CommandError::Config(ConfigError::Invalid(e.to_string()))
            }
            _ => CommandError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CommandError {
    fn from(e: serde_json::Error) -> Self {
        CommandError::Runtime(e.to_string())
    }
}

fn required(path: &Option<PathBuf>, key: &str) -> Result<PathBuf, CommandError> {
    path.clone().ok_or_else(|| {
        ConfigError::Invalid(format!("no output path: set {key} or pass --out")).into()
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CommandError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CommandError::Runtime(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMinimum {
    pub phases: [f64; 2],
    pub tr_finv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub resolution: usize,
    pub singular_cells: usize,
    pub min_tr_finv: Option<f64>,
    pub min_finv11: Option<f64>,
    pub min_finv22: Option<f64>,
    /// Local minima of the grid, best first.
    pub minima: Vec<GridMinimum>,
}

/// Scans the landscape, writes the grid file and prints a summary.
pub fn cmd_scan(config: &RunConfig, out: &mut dyn Write) -> Result<ScanSummary, CommandError> {
    let path = required(&config.scan.output, "scan.output")?;
    let model = config.model()?;
    let grid = scan_grid(
        &model,
        config.scan.resolution,
        config.tolerances.singular_condition,
    )?;
    let format = config.grid_format();
    export_grid(&grid, &path, format)?;

    let mut minima: Vec<GridMinimum> = match grid_minima(&grid) {
        Ok(cells) => cells
            .into_iter()
            .filter_map(|(i, j)| {
                let c = grid.cell(i, j);
                c.tr_finv.map(|t| GridMinimum {
                    phases: [c.phi1, c.phi2],
                    tr_finv: t,
                })
            })
            .collect(),
        Err(LandscapeError::AllSingular) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    minima.sort_by(|a, b| a.tr_finv.total_cmp(&b.tr_finv));
    let summary = ScanSummary {
        resolution: grid.resolution,
        singular_cells: grid.singular_count(),
        min_tr_finv: grid.min_trace().map(|(v, _)| v),
        min_finv11: grid.min_finv11().map(|(v, _)| v),
        min_finv22: grid.min_finv22().map(|(v, _)| v),
        minima,
    };

    writeln!(
        out,
        "grid {0}x{0} written to {1} ({format:?})",
        grid.resolution,
        path.display()
    )?;
    writeln!(out, "singular cells: {}", summary.singular_cells)?;
    match (summary.min_tr_finv, summary.minima.first()) {
        (Some(t), Some(m)) => writeln!(
            out,
            "min tr_finv = {t:.5} at ({:.4}, {:.4})",
            m.phases[0], m.phases[1]
        )?,
        _ => writeln!(out, "min tr_finv: every cell singular")?,
    }
    if let (Some(a), Some(b)) = (summary.min_finv11, summary.min_finv22) {
        writeln!(out, "min finv11 = {a:.5}, min finv22 = {b:.5}")?;
    }
    writeln!(out, "grid minima (tr_finv phi1 phi2):")?;
    for m in &summary.minima {
        writeln!(
            out,
            "  {:.5} {:.4} {:.4}",
            m.tr_finv, m.phases[0], m.phases[1]
        )?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalWitness {
    /// Best working point of a coarse landscape scan.
    pub phases: [f64; 2],
    pub tr_finv: f64,
    pub verdict: WitnessVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub probe: Probe,
    pub photons: f64,
    pub qfim: Vec<Vec<f64>>,
    /// `None` when the QFIM is singular.
    pub qfim_trace_inv: Option<f64>,
    pub separable_trace_min: f64,
    pub separable: SeparableBounds,
    pub quantum_witness: WitnessVerdict,
    pub classical_witness: Option<ClassicalWitness>,
}

/// QFIM, separable bounds and witness verdicts for the configured probe,
/// printed as one JSON document.
pub fn cmd_bounds(config: &RunConfig, out: &mut dyn Write) -> Result<BoundsReport, CommandError> {
    let model = config.model()?;
    let probe = config.probe();
    let photons = probe.mean_photons();
    let spec = SeparableBoundSpec::number_operators(photons, model.parameter_count())?;
    let fq = qfim_for_model(&model)?;
    let cond = config.tolerances.singular_condition;

    let grid = scan_grid(&model, MIN_RESOLUTION, cond)?;
    let classical_witness = match find_working_points(&grid, &model, config.refine(), cond) {
        Ok(points) => match points.first() {
            Some(best) => Some(ClassicalWitness {
                phases: best.phases,
                tr_finv: best.tr_finv,
                verdict: entanglement_witness(&fisher_at(&model, &best.phases)?, &spec)?,
            }),
            None => None,
        },
        Err(LandscapeError::AllSingular) => None,
        Err(e) => return Err(e.into()),
    };

    let report = BoundsReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        probe,
        photons,
        qfim: fq
            .entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        qfim_trace_inv: invert_fisher(&fq, cond).trace(),
        separable_trace_min: separable_bounds(&spec).trace_min,
        separable: separable_bounds(&spec),
        quantum_witness: entanglement_witness(&fq, &spec)?,
        classical_witness,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// File written by [`cmd_adaptive`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: RunConfig,
    pub protocol: AdaptiveConfig,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub estimates: Vec<[f64; 2]>,
    pub stats: MonteCarloStats,
}

/// Monte Carlo run of the adaptive protocol; writes the run record and
/// prints a summary table.
pub fn cmd_adaptive(config: &RunConfig, out: &mut dyn Write) -> Result<RunRecord, CommandError> {
    let path = required(&config.adaptive.output, "adaptive.output")?;
    let protocol = config.protocol_config();
    let seed = config.adaptive.seed;
    let run = monte_carlo(&protocol, config.adaptive.repetitions, seed, config.bound())?;
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        protocol,
        seed,
        seeds: run.seeds,
        estimates: run.estimates,
        stats: run.stats,
    };
    write_json(&path, &record)?;

    let s = &record.stats;
    let root = (s.nu as f64).sqrt();
    writeln!(
        out,
        "{}-mode adaptive protocol, nu = {}, p = {}, seed = {}, true phases = ({}, {})",
        config.circuit.modes, s.nu, s.repetitions, seed, s.true_phases[0], s.true_phases[1]
    )?;
    writeln!(
        out,
        "param  std*sqrt(nu)  bound  ratio  bias*sqrt(nu)  sigma*sqrt(nu)"
    )?;
    for i in 0..2 {
        writeln!(
            out,
            "phi{}   {:.4}        {:.3}  {:.3}  {:+.4}        {:.4}",
            i + 1,
            s.std_sqrt_nu[i],
            s.bound,
            s.ratio[i],
            s.bias[i] * root,
            s.mean_sigma[i] * root
        )?;
    }
    writeln!(out, "run record written to {}", path.display())?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkpointsReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub resolution: usize,
    pub working_points: Vec<WorkingPoint>,
}

/// Refined landscape minima as JSON, to `output` when given, else to `out`.
pub fn cmd_workpoints(
    config: &RunConfig,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> Result<WorkpointsReport, CommandError> {
    let model = config.model()?;
    let cond = config.tolerances.singular_condition;
    let grid = scan_grid(&model, config.scan.resolution, cond)?;
    let report = WorkpointsReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        resolution: grid.resolution,
        working_points: find_working_points(&grid, &model, config.refine(), cond)?,
    };
    match output {
        Some(path) => {
            write_json(path, &report)?;
            writeln!(
                out,
                "{} working points written to {}",
                report.working_points.len(),
                path.display()
            )?;
        }
        None => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> RunConfig {
        RunConfig::from_json(json).unwrap()
    }

    #[test]
    fn scan_needs_an_output() {
        let err =
            cmd_scan(&config(r#"{"scan": {"resolution": 64}}"#), &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn bounds_for_distinguishable_three_mode() {
        let mut out = Vec::new();
        let r = cmd_bounds(
            &config(r#"{"circuit": {"probe": "distinguishable"}}"#),
            &mut out,
        )
        .unwrap();
        assert!((r.qfim_trace_inv.unwrap() - 1.0).abs() < 1e-9);
        assert!((r.separable_trace_min - 2.0 / 3.0).abs() < 1e-12);
        assert!(!r.quantum_witness.entangled());
        let parsed: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(parsed["schema_version"], SCHEMA_VERSION);
    }

    #[test]
    fn four_mode_without_phi0_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(
            r#"{"circuit": {"modes": 4, "phi0": 0}, "adaptive": {"nu": 1000, "repetitions": 2}}"#,
        );
        c.adaptive.output = Some(dir.path().join("run.json"));
        let err = cmd_adaptive(&c, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("phi0"), "{err}");
    }
}
