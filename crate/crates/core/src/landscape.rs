//! Maps of `Tr[F⁻¹]` over the two unknown phases, working points, and the
//! neighbourhood of a working point where the FIM stays invertible.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::PhaseModel;
use crate::fisher::{fisher_at, invert_fisher};
use crate::optics::{phase_difference, wrap_phase};
use crate::simplex::{minimize, SimplexOptions};

/// Smallest accepted scan resolution per axis.
pub const MIN_RESOLUTION: usize = 64;
pub const DEFAULT_RESOLUTION: usize = 256;
/// Working points closer than this (rad) are merged.
pub const DEDUP_DISTANCE: f64 = 1e-3;
pub const STABILITY_SAMPLES: usize = 1000;
const CSV_HEADER: &str = "phi1,phi2,tr_finv,finv11,finv22,detF,singular";

#[derive(Debug, Error)]
pub enum LandscapeError {
    #[error("resolution {0} below the minimum of {MIN_RESOLUTION}")]
    Resolution(usize),
    #[error("landscapes need exactly two unknown phases, model has {0}")]
    ParameterCount(usize),
    #[error("every grid cell is singular")]
    AllSingular,
    #[error("empty grid")]
    EmptyGrid,
    #[error("stability radius must be > 0, got {0}")]
    Radius(f64),
    #[error("grid file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Metrics of one phase point. The inverse entries are absent where the FIM
/// is singular; `det_f` is absent where the FIM itself is undefined (an
/// outcome of vanishing probability with a finite slope).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub phi1: f64,
    pub phi2: f64,
    pub tr_finv: Option<f64>,
    pub finv11: Option<f64>,
    pub finv22: Option<f64>,
    #[serde(rename = "detF")]
    pub det_f: Option<f64>,
    pub singular: bool,
}

/// Uniform `resolution × resolution` grid over `[0, 2π)²`, stored row-major
/// with `φ2` varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub resolution: usize,
    pub cells: Vec<GridCell>,
}

impl LandscapeGrid {
    pub fn axis(resolution: usize) -> Vec<f64> {
        (0..resolution)
            .map(|k| k as f64 * TAU / resolution as f64)
            .collect()
    }

    pub fn cell(&self, i: usize, j: usize) -> &GridCell {
        &self.cells[i * self.resolution + j]
    }

    pub fn singular_count(&self) -> usize {
        self.cells.iter().filter(|c| c.singular).count()
    }

    fn min_by(&self, key: impl Fn(&GridCell) -> Option<f64>) -> Option<(f64, &GridCell)> {
        self.cells
            .iter()
            .filter_map(|c| key(c).map(|v| (v, c)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    pub fn min_trace(&self) -> Option<(f64, &GridCell)> {
        self.min_by(|c| c.tr_finv)
    }

    pub fn min_finv11(&self) -> Option<(f64, &GridCell)> {
        self.min_by(|c| c.finv11)
    }

    pub fn min_finv22(&self) -> Option<(f64, &GridCell)> {
        self.min_by(|c| c.finv22)
    }
}

/// Metrics of `model` at `phases` (two unknowns).
pub fn point_metrics(model: &PhaseModel, phases: [f64; 2], cond_threshold: f64) -> GridCell {
    let mut cell = GridCell {
        phi1: phases[0],
        phi2: phases[1],
        tr_finv: None,
        finv11: None,
        finv22: None,
        det_f: None,
        singular: true,
    };
    let Ok(f) = fisher_at(model, &phases) else {
        return cell;
    };
    cell.det_f = Some(f.determinant());
    if let Some(inv) = invert_fisher(&f, cond_threshold).matrix() {
        cell.tr_finv = Some(inv.trace());
        cell.finv11 = Some(inv[(0, 0)]);
        cell.finv22 = Some(inv[(1, 1)]);
        cell.singular = false;
    }
    cell
}

/// Evaluates the metrics on a `resolution²` grid, cells in parallel.
pub fn scan_grid(
    model: &PhaseModel,
    resolution: usize,
    cond_threshold: f64,
) -> Result<LandscapeGrid, LandscapeError> {
    if resolution < MIN_RESOLUTION {
        return Err(LandscapeError::Resolution(resolution));
    }
    if model.parameter_count() != 2 {
        return Err(LandscapeError::ParameterCount(model.parameter_count()));
    }
    let axis = LandscapeGrid::axis(resolution);
    let cells = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            point_metrics(
                model,
                [axis[k / resolution], axis[k % resolution]],
                cond_threshold,
            )
        })
        .collect();
    Ok(LandscapeGrid { resolution, cells })
}

/// Point of locally minimal `Tr[F⁻¹]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingPoint {
    pub phases: [f64; 2],
    pub tr_finv: f64,
    pub finv11: f64,
    pub finv22: f64,
}

/// Grid indices `(i, j)` of cells whose `Tr[F⁻¹]` is no larger than any of
/// their eight neighbours (wrapping around the torus; singular neighbours
/// count as `+∞`). Of a plateau of equal values only the first cell in
/// row-major order is kept, so a constant grid yields just `(0, 0)`.
pub fn grid_minima(grid: &LandscapeGrid) -> Result<Vec<(usize, usize)>, LandscapeError> {
    let n = grid.resolution;
    if n == 0 || grid.cells.is_empty() {
        return Err(LandscapeError::EmptyGrid);
    }
    if grid.cells.iter().all(|c| c.tr_finv.is_none()) {
        return Err(LandscapeError::AllSingular);
    }
    let value = |i: usize, j: usize| grid.cell(i, j).tr_finv.unwrap_or(f64::INFINITY);
    let mut minima = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let Some(v) = grid.cell(i, j).tr_finv else {
                continue;
            };
            let index = i * n + j;
            let mut keep = true;
            'scan: for di in [n - 1, 0, 1] {
                for dj in [n - 1, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = ((i + di) % n, (j + dj) % n);
                    let w = value(a, b);
                    if w < v || (w == v && a * n + b < index) {
                        keep = false;
                        break 'scan;
                    }
                }
            }
            if keep {
                minima.push((i, j));
            }
        }
    }
    Ok(minima)
}

/// Local minima of the grid refined by simplex descent to phase tolerance
/// `refine`, merged within [`DEDUP_DISTANCE`] and sorted by `Tr[F⁻¹]`.
pub fn find_working_points(
    grid: &LandscapeGrid,
    model: &PhaseModel,
    refine: f64,
    cond_threshold: f64,
) -> Result<Vec<WorkingPoint>, LandscapeError> {
    let starts = grid_minima(grid)?;
    let step = TAU / grid.resolution as f64;
    let objective = |x: &[f64]| {
        point_metrics(model, [x[0], x[1]], cond_threshold)
            .tr_finv
            .unwrap_or(f64::INFINITY)
    };
    let refined: Vec<WorkingPoint> = starts
        .par_iter()
        .filter_map(|&(i, j)| {
            let c = grid.cell(i, j);
            let options = SimplexOptions {
                initial_step: step / 2.0,
                tolerance: refine,
                max_iterations: 2000,
            };
            let r = minimize(objective, &[c.phi1, c.phi2], options);
            let phases = [wrap_phase(r.point[0]), wrap_phase(r.point[1])];
            let m = point_metrics(model, phases, cond_threshold);
            Some(WorkingPoint {
                phases,
                tr_finv: m.tr_finv?,
                finv11: m.finv11?,
                finv22: m.finv22?,
            })
        })
        .collect();
    let mut sorted = refined;
    sorted.sort_by(|a, b| a.tr_finv.total_cmp(&b.tr_finv));
    let mut points: Vec<WorkingPoint> = Vec::new();
    for p in sorted {
        if points
            .iter()
            .all(|q| torus_distance(p.phases, q.phases) > DEDUP_DISTANCE)
        {
            points.push(p);
        }
    }
    Ok(points)
}

/// Euclidean distance on the torus `[0, 2π)²`.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    phase_difference(a[0], b[0]).hypot(phase_difference(a[1], b[1]))
}

/// Singular samples found in a disc around a working point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub center: [f64; 2],
    pub radius: f64,
    pub samples: usize,
    pub singular_count: usize,
    /// Smallest `|det F|` among the samples (where `F` is defined).
    pub min_abs_det: f64,
}

/// Sunflower (Vogel) spiral: `samples` quasi-uniform points in a disc.
pub fn disc_samples(center: [f64; 2], radius: f64, samples: usize) -> Vec<[f64; 2]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..samples)
        .map(|k| {
            let r = radius * ((k as f64 + 0.5) / samples as f64).sqrt();
            let a = k as f64 * golden;
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        })
        .collect()
}

/// Counts singular FIMs among [`STABILITY_SAMPLES`] points within `radius` of `center`.
pub fn stability_region(
    model: &PhaseModel,
    center: [f64; 2],
    radius: f64,
    cond_threshold: f64,
) -> Result<StabilityReport, LandscapeError> {
    if !(radius > 0.0) {
        return Err(LandscapeError::Radius(radius));
    }
    let cells: Vec<GridCell> = disc_samples(center, radius, STABILITY_SAMPLES)
        .into_par_iter()
        .map(|p| point_metrics(model, p, cond_threshold))
        .collect();
    Ok(StabilityReport {
        center,
        radius,
        samples: cells.len(),
        singular_count: cells.iter().filter(|c| c.singular).count(),
        min_abs_det: cells
            .iter()
            .filter_map(|c| c.det_f.map(f64::abs))
            .fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    Csv,
    Json,
}

#[derive(Serialize, Deserialize)]
struct GridDocument {
    schema_version: u32,
    resolution: usize,
    records: Vec<GridCell>,
}

pub fn grid_to_csv(grid: &LandscapeGrid) -> String {
    fn field(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    let mut out = String::with_capacity(grid.cells.len() * 80);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for c in &grid.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.phi1,
            c.phi2,
            field(c.tr_finv),
            field(c.finv11),
            field(c.finv22),
            field(c.det_f),
            u8::from(c.singular)
        );
    }
    out
}

pub fn grid_from_csv(text: &str) -> Result<LandscapeGrid, LandscapeError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(LandscapeError::Parse("missing or wrong CSV header".into()));
    }
    let parse = |s: &str| -> Result<Option<f64>, LandscapeError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| LandscapeError::Parse(format!("bad number {s:?}")))
        }
    };
    let mut cells = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(LandscapeError::Parse(format!(
                "expected 7 fields: {line:?}"
            )));
        }
        let required =
            |s: &str| parse(s)?.ok_or_else(|| LandscapeError::Parse("missing phase".into()));
        cells.push(GridCell {
            phi1: required(f[0])?,
            phi2: required(f[1])?,
            tr_finv: parse(f[2])?,
            finv11: parse(f[3])?,
            finv22: parse(f[4])?,
            det_f: parse(f[5])?,
            singular: match f[6] {
                "0" => false,
                "1" => true,
                other => return Err(LandscapeError::Parse(format!("singular flag {other:?}"))),
            },
        });
    }
    grid_from_cells(cells)
}

fn grid_from_cells(cells: Vec<GridCell>) -> Result<LandscapeGrid, LandscapeError> {
    let resolution = (cells.len() as f64).sqrt().round() as usize;
    if resolution * resolution != cells.len() {
        return Err(LandscapeError::Parse(format!(
            "{} cells is not a square grid",
            cells.len()
        )));
    }
    Ok(LandscapeGrid { resolution, cells })
}

pub fn grid_to_json(grid: &LandscapeGrid) -> Result<String, LandscapeError> {
    let doc = GridDocument {
        schema_version: crate::SCHEMA_VERSION,
        resolution: grid.resolution,
        records: grid.cells.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn grid_from_json(text: &str) -> Result<LandscapeGrid, LandscapeError> {
    let doc: GridDocument = serde_json::from_str(text)?;
    let grid = grid_from_cells(doc.records)?;
    if grid.resolution != doc.resolution {
        return Err(LandscapeError::Parse(
            "resolution does not match the records".into(),
        ));
    }
    Ok(grid)
}

pub fn export_grid(
    grid: &LandscapeGrid,
    path: &Path,
    format: GridFormat,
) -> Result<(), LandscapeError> {
    let text = match format {
        GridFormat::Csv => grid_to_csv(grid),
        GridFormat::Json => grid_to_json(grid)?,
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn import_grid(path: &Path, format: GridFormat) -> Result<LandscapeGrid, LandscapeError> {
    let text = fs::read_to_string(path)?;
    match format {
        GridFormat::Csv => grid_from_csv(&text),
        GridFormat::Json => grid_from_json(&text),
    }
}
