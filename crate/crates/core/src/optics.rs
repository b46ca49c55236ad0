//! Unitary building blocks of a multiarm Mach-Zehnder interferometer.
//!
//! Mode transformations act on creation operators as
//! `a_j^† -> Σ_i U[i, j] a_i^†`, so column `j` of a matrix is the output
//! amplitude pattern of a photon entering mode `j`.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Unitarity tolerance applied to every constructed matrix.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("no {kind:?} splitter exists for {dim} modes")]
    UnsupportedMultiport { dim: usize, kind: MultiportKind },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not unitary (defect {defect:e})")]
    NotUnitary { defect: f64 },
    #[error("mode index {index} out of range for {dim} modes")]
    ModeOutOfRange { index: usize, dim: usize },
    #[error("mode {index} listed twice in the {list} phases")]
    DuplicateMode { index: usize, list: &'static str },
    #[error("dimension mismatch: {left} vs {right} modes")]
    DimensionMismatch { left: usize, right: usize },
}

/// Balanced multiport splitters with closed-form matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiportKind {
    /// 2-mode 50:50 splitter, `[[1, i], [i, 1]] / √2`.
    Balanced,
    /// 3-mode splitter: `3^(-1/2)` on the diagonal, `3^(-1/2) e^(i2π/3)` elsewhere.
    Tritter,
    /// 4-mode splitter: `1/2` on the diagonal, `-1/2` elsewhere.
    Quarter,
}

impl MultiportKind {
    pub fn modes(self) -> usize {
        match self {
            MultiportKind::Balanced => 2,
            MultiportKind::Tritter => 3,
            MultiportKind::Quarter => 4,
        }
    }
}

/// A square complex matrix that is unitary to within [`UNITARITY_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    entries: DMatrix<Complex64>,
}

impl UnitaryMatrix {
    /// Validates squareness and unitarity.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self, OpticsError> {
        if !entries.is_square() {
            return Err(OpticsError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let defect = unitarity_defect(&entries);
        if defect >= UNITARITY_TOLERANCE {
            return Err(OpticsError::NotUnitary { defect });
        }
        Ok(Self { entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn defect(&self) -> f64 {
        unitarity_defect(&self.entries)
    }

    /// Matrix product `self · rhs`, i.e. `rhs` acts first.
    pub fn then_after(&self, rhs: &UnitaryMatrix) -> Result<UnitaryMatrix, OpticsError> {
        if self.dim() != rhs.dim() {
            return Err(OpticsError::DimensionMismatch {
                left: self.dim(),
                right: rhs.dim(),
            });
        }
        UnitaryMatrix::new(&self.entries * &rhs.entries)
    }

    pub fn adjoint(&self) -> UnitaryMatrix {
        Self {
            entries: self.entries.adjoint(),
        }
    }
}

/// Max-absolute-entry norm of `U†U − 1`. Non-square input yields `f64::INFINITY`.
pub fn unitarity_defect(u: &DMatrix<Complex64>) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let gram = u.adjoint() * u;
    let n = u.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

pub fn multiport_unitary(dim: usize, kind: MultiportKind) -> Result<UnitaryMatrix, OpticsError> {
    if dim != kind.modes() {
        return Err(OpticsError::UnsupportedMultiport { dim, kind });
    }
    let entries = match kind {
        MultiportKind::Balanced => {
            let d = Complex64::new(FRAC_1_SQRT_2, 0.0);
            let o = Complex64::new(0.0, FRAC_1_SQRT_2);
            DMatrix::from_fn(2, 2, |i, j| if i == j { d } else { o })
        }
        MultiportKind::Tritter => {
            let scale = 3f64.sqrt().recip();
            let d = Complex64::new(scale, 0.0);
            let o = Complex64::from_polar(scale, TAU / 3.0);
            DMatrix::from_fn(3, 3, |i, j| if i == j { d } else { o })
        }
        MultiportKind::Quarter => DMatrix::from_fn(4, 4, |i, j| {
            Complex64::new(if i == j { 0.5 } else { -0.5 }, 0.0)
        }),
    };
    UnitaryMatrix::new(entries)
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed circular difference `a − b` reduced to `(−π, π]`.
pub fn phase_difference(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Unknown and control phase shifts, each a list of `(mode, phase)`.
///
/// Phases are stored reduced to `[0, 2π)`. A mode may carry both an unknown
/// and a control phase; only their sum enters the phase layer.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct PhaseConfig {
    unknown: Vec<(usize, f64)>,
    control: Vec<(usize, f64)>,
}

impl PhaseConfig {
    pub fn new(
        unknown: Vec<(usize, f64)>,
        control: Vec<(usize, f64)>,
    ) -> Result<Self, OpticsError> {
        check_distinct(&unknown, "unknown")?;
        check_distinct(&control, "control")?;
        let wrap = |v: Vec<(usize, f64)>| v.into_iter().map(|(m, p)| (m, wrap_phase(p))).collect();
        Ok(Self {
            unknown: wrap(unknown),
            control: wrap(control),
        })
    }

    pub fn unknown(&self) -> &[(usize, f64)] {
        &self.unknown
    }

    pub fn control(&self) -> &[(usize, f64)] {
        &self.control
    }

    pub fn unknown_modes(&self) -> Vec<usize> {
        self.unknown.iter().map(|&(m, _)| m).collect()
    }

    pub fn unknown_values(&self) -> Vec<f64> {
        self.unknown.iter().map(|&(_, p)| p).collect()
    }

    /// Same layout with the unknown phases replaced.
    pub fn with_unknown_values(&self, values: &[f64]) -> Self {
        assert_eq!(values.len(), self.unknown.len(), "unknown phase count");
        Self {
            unknown: self
                .unknown
                .iter()
                .zip(values)
                .map(|(&(m, _), &p)| (m, wrap_phase(p)))
                .collect(),
            control: self.control.clone(),
        }
    }

    /// Total phase per mode, θ_j = Σ unknown + Σ control on mode j.
    pub fn mode_phases(&self, dim: usize) -> Result<Vec<f64>, OpticsError> {
        let mut theta = vec![0.0; dim];
        for &(index, phase) in self.unknown.iter().chain(&self.control) {
            if index >= dim {
                return Err(OpticsError::ModeOutOfRange { index, dim });
            }
            theta[index] += phase;
        }
        Ok(theta)
    }
}

fn check_distinct(list: &[(usize, f64)], name: &'static str) -> Result<(), OpticsError> {
    for (k, &(index, _)) in list.iter().enumerate() {
        if list[..k].iter().any(|&(m, _)| m == index) {
            return Err(OpticsError::DuplicateMode { index, list: name });
        }
    }
    Ok(())
}

/// Diagonal phase layer `diag(e^(−iθ_j))`.
pub fn phase_layer(dim: usize, config: &PhaseConfig) -> Result<UnitaryMatrix, OpticsError> {
    let theta = config.mode_phases(dim)?;
    let mut entries = DMatrix::zeros(dim, dim);
    for (j, t) in theta.iter().enumerate() {
        entries[(j, j)] = Complex64::from_polar(1.0, -t);
    }
    Ok(UnitaryMatrix { entries })
}

/// `u_out · phase_layer(config) · u_in`.
pub fn compose_interferometer(
    u_in: &UnitaryMatrix,
    config: &PhaseConfig,
    u_out: &UnitaryMatrix,
) -> Result<UnitaryMatrix, OpticsError> {
    if u_in.dim() != u_out.dim() {
        return Err(OpticsError::DimensionMismatch {
            left: u_in.dim(),
            right: u_out.dim(),
        });
    }
    let layer = phase_layer(u_in.dim(), config)?;
    u_out.then_after(&layer)?.then_after(u_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn tritter_is_balanced_and_unitary() {
        let t = multiport_unitary(3, MultiportKind::Tritter).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.entry(i, j).norm_sqr() - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert!(t.defect() < 1e-14);
    }

    #[test]
    fn quarter_entries() {
        let q = multiport_unitary(4, MultiportKind::Quarter).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.5 } else { -0.5 };
                assert_eq!(q.entry(i, j), Complex64::new(want, 0.0));
            }
        }
        assert!(q.defect() < 1e-15);
    }

    #[test]
    fn unsupported_pairs_rejected() {
        assert!(matches!(
            multiport_unitary(4, MultiportKind::Tritter),
            Err(OpticsError::UnsupportedMultiport { .. })
        ));
        assert!(multiport_unitary(3, MultiportKind::Quarter).is_err());
    }

    #[test]
    fn identity_has_zero_defect() {
        assert_eq!(UnitaryMatrix::identity(4).defect(), 0.0);
    }

    #[test]
    fn perturbed_entry_is_detected() {
        let mut m = multiport_unitary(3, MultiportKind::Tritter)
            .unwrap()
            .matrix()
            .clone();
        m[(1, 2)] += Complex64::new(1e-3, 0.0);
        assert!(unitarity_defect(&m) >= 1e-4);
        assert!(matches!(
            UnitaryMatrix::new(m),
            Err(OpticsError::NotUnitary { .. })
        ));
    }

    #[test]
    fn phase_layer_entries() {
        let zero = PhaseConfig::new(vec![(0, 0.0), (1, 0.0)], vec![]).unwrap();
        assert_eq!(phase_layer(3, &zero).unwrap(), UnitaryMatrix::identity(3));

        let cfg = PhaseConfig::new(vec![(0, PI)], vec![]).unwrap();
        let layer = phase_layer(3, &cfg).unwrap();
        assert!((layer.entry(0, 0) - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(layer.entry(1, 1), Complex64::new(1.0, 0.0));

        let cfg = PhaseConfig::new(vec![], vec![(2, 0.01)]).unwrap();
        let layer = phase_layer(4, &cfg).unwrap();
        assert!((layer.entry(2, 2) - Complex64::from_polar(1.0, -0.01)).norm() < 1e-16);
        assert_eq!(layer.entry(3, 3), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn duplicate_and_out_of_range_modes() {
        assert!(matches!(
            PhaseConfig::new(vec![(1, 0.1), (1, 0.2)], vec![]),
            Err(OpticsError::DuplicateMode { index: 1, .. })
        ));
        // the same mode may appear once in each list
        assert!(PhaseConfig::new(vec![(1, 0.1)], vec![(1, 0.2)]).is_ok());
        let cfg = PhaseConfig::new(vec![(3, 0.1)], vec![]).unwrap();
        assert!(matches!(
            phase_layer(3, &cfg),
            Err(OpticsError::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn phases_are_wrapped() {
        let cfg = PhaseConfig::new(vec![(0, -0.5), (1, 7.0)], vec![(2, TAU)]).unwrap();
        assert!((cfg.unknown()[0].1 - (TAU - 0.5)).abs() < 1e-15);
        assert!((cfg.unknown()[1].1 - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(cfg.control()[0].1, 0.0);
        assert_eq!(wrap_phase(-1e-18), 0.0);
    }

    #[test]
    fn composition_rules() {
        let id = UnitaryMatrix::identity(3);
        let zero = PhaseConfig::new(vec![(0, 0.0), (1, 0.0)], vec![]).unwrap();
        assert_eq!(compose_interferometer(&id, &zero, &id).unwrap(), id);

        let t = multiport_unitary(3, MultiportKind::Tritter).unwrap();
        let tt = compose_interferometer(&t, &zero, &t).unwrap();
        let direct = t.matrix() * t.matrix();
        assert!((tt.matrix() - direct).map(|z| z.norm()).max() < 1e-15);

        let q = multiport_unitary(4, MultiportKind::Quarter).unwrap();
        assert!(matches!(
            compose_interferometer(&t, &zero, &q),
            Err(OpticsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn only_mode_sums_matter() {
        let t = multiport_unitary(3, MultiportKind::Tritter).unwrap();
        let a = PhaseConfig::new(vec![(0, 0.892), (1, 2.19)], vec![(0, 0.3), (1, -1.1)]).unwrap();
        let b = PhaseConfig::new(
            vec![(0, 0.892 + 0.4), (1, 2.19 - 2.0)],
            vec![(0, 0.3 - 0.4), (1, -1.1 + 2.0)],
        )
        .unwrap();
        let ua = compose_interferometer(&t, &a, &t).unwrap();
        let ub = compose_interferometer(&t, &b, &t).unwrap();
        assert!((ua.matrix() - ub.matrix()).map(|z| z.norm()).max() < 1e-14);
    }
}
