//! Classical and quantum Fisher information, their inverses, and the bounds
//! that separable probes cannot beat.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{Evaluation, EvolutionError, OutcomeDistribution, PhaseModel, PureState};
use crate::fock::FockState;

/// Condition number at or above which a FIM is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e10;
/// `|det F|` below which a FIM is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;
/// Outcomes less likely than this are dropped when their gradient vanishes.
pub const ZERO_PROBABILITY: f64 = 1e-14;
pub const ZERO_GRADIENT: f64 = 1e-10;
const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FisherError {
    #[error("outcome {outcome} has p = {probability:e} but gradient norm {gradient:e}")]
    SingularSupport {
        outcome: FockState,
        probability: f64,
        gradient: f64,
    },
    #[error("state is not normalized (norm² = {0})")]
    Unnormalized(f64),
    #[error("sector weights do not match the states: {0}")]
    WeightMismatch(String),
    #[error("invalid generators: {0}")]
    InvalidGenerators(String),
    #[error("invalid separable bound spec: {0}")]
    InvalidBoundSpec(String),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FisherKind {
    Classical,
    Quantum,
}

/// Symmetric PSD information matrix, entries in rad⁻².
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub kind: FisherKind,
    pub entries: DMatrix<f64>,
}

impl FisherMatrix {
    pub fn new(kind: FisherKind, entries: DMatrix<f64>) -> Self {
        Self { kind, entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.entries.diagonal().iter().copied().collect()
    }

    pub fn determinant(&self) -> f64 {
        self.entries.determinant()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect()
    }

    /// Ratio of extreme singular values; infinite for a rank-deficient matrix.
    pub fn condition_number(&self) -> f64 {
        let sv = self.entries.clone().svd(false, false).singular_values;
        let max = sv.max();
        let min = sv.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.kind, &self.entries * factor)
    }
}

/// Inverse of a FIM, or the reason it has none.
#[derive(Debug, Clone, PartialEq)]
pub enum FisherInverse {
    Regular(DMatrix<f64>),
    Singular { det: f64, condition: f64 },
}

impl FisherInverse {
    pub fn is_singular(&self) -> bool {
        matches!(self, FisherInverse::Singular { .. })
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            FisherInverse::Regular(m) => Some(m),
            FisherInverse::Singular { .. } => None,
        }
    }

    pub fn trace(&self) -> Option<f64> {
        self.matrix().map(|m| m.trace())
    }

    pub fn diagonal(&self) -> Option<Vec<f64>> {
        self.matrix()
            .map(|m| m.diagonal().iter().copied().collect())
    }
}

/// Fisher information `F_ij = Σ_x ∂_i p ∂_j p / p` of a distribution.
pub fn fisher_matrix(dist: &OutcomeDistribution) -> Result<FisherMatrix, FisherError> {
    let n = dist.parameter_count();
    let grads: Vec<f64> = dist.grads.iter().flatten().copied().collect();
    fisher_from_parts(&dist.probs, &grads, n)
        .map_err(|k| singular_support(&dist.outcomes[k], dist.probs[k], &grads[k * n..(k + 1) * n]))
}

/// As [`fisher_matrix`], straight from a [`PhaseModel`] evaluation.
pub fn fisher_from_evaluation(
    model: &PhaseModel,
    eval: &Evaluation,
) -> Result<FisherMatrix, FisherError> {
    fisher_from_parts(&eval.probs, &eval.grads, eval.parameters)
        .map_err(|k| singular_support(&model.outcomes()[k], eval.probs[k], eval.grad(k)))
}

/// Classical FIM of `model` at unknown phases `phases`.
pub fn fisher_at(model: &PhaseModel, phases: &[f64]) -> Result<FisherMatrix, FisherError> {
    fisher_from_evaluation(model, &model.evaluate(phases))
}

fn singular_support(outcome: &FockState, probability: f64, grad: &[f64]) -> FisherError {
    FisherError::SingularSupport {
        outcome: outcome.clone(),
        probability,
        gradient: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
    }
}

/// Core FIM sum over flat gradients; `Err(k)` names the offending outcome.
fn fisher_from_parts(probs: &[f64], grads: &[f64], n: usize) -> Result<FisherMatrix, usize> {
    let mut f = DMatrix::zeros(n, n);
    for (k, &p) in probs.iter().enumerate() {
        let g = &grads[k * n..(k + 1) * n];
        if p < ZERO_PROBABILITY {
            if g.iter().all(|v| v.abs() <= ZERO_GRADIENT) {
                continue;
            }
            return Err(k);
        }
        for i in 0..n {
            let gi = g[i] / p;
            for j in i..n {
                f[(i, j)] += gi * g[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            f[(i, j)] = f[(j, i)];
        }
    }
    Ok(FisherMatrix::new(FisherKind::Classical, f))
}

/// Inverts `f` unless its condition number reaches `cond_threshold` or
/// `|det f| < SINGULAR_DET`.
pub fn invert_fisher(f: &FisherMatrix, cond_threshold: f64) -> FisherInverse {
    let det = f.determinant();
    let condition = f.condition_number();
    if !(condition < cond_threshold) || det.abs() < SINGULAR_DET {
        return FisherInverse::Singular { det, condition };
    }
    match f.entries.clone().try_inverse() {
        Some(inv) => FisherInverse::Regular(inv),
        None => FisherInverse::Singular { det, condition },
    }
}

/// Mode whose number operator generates each unknown phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSet {
    modes: Vec<usize>,
}

impl GeneratorSet {
    pub fn new(modes: Vec<usize>) -> Result<Self, FisherError> {
        for (k, m) in modes.iter().enumerate() {
            if modes[..k].contains(m) {
                return Err(FisherError::InvalidGenerators(format!(
                    "mode {m} listed twice"
                )));
            }
        }
        Ok(Self { modes })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    fn check(&self, dim: usize) -> Result<(), FisherError> {
        match self.modes.iter().find(|&&m| m >= dim) {
            Some(m) => Err(FisherError::InvalidGenerators(format!(
                "mode {m} out of range for {dim} modes"
            ))),
            None => Ok(()),
        }
    }
}

/// QFIM of a pure state under number-operator generators: `4 Cov(N_i, N_j)`.
pub fn qfim_pure(state: &PureState, gens: &GeneratorSet) -> Result<FisherMatrix, FisherError> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(FisherError::Unnormalized(norm));
    }
    let dim = state.basis.first().map_or(0, FockState::modes);
    gens.check(dim)?;
    let n = gens.modes.len();
    let mut mean = vec![0.0; n];
    let mut second = DMatrix::<f64>::zeros(n, n);
    for (s, a) in state.basis.iter().zip(&state.amplitudes) {
        let w = a.norm_sqr();
        let occ: Vec<f64> = gens.modes.iter().map(|&m| f64::from(s.get(m))).collect();
        for i in 0..n {
            mean[i] += w * occ[i];
            for j in 0..n {
                second[(i, j)] += w * occ[i] * occ[j];
            }
        }
    }
    let f = DMatrix::from_fn(n, n, |i, j| 4.0 * (second[(i, j)] - mean[i] * mean[j]));
    Ok(FisherMatrix::new(FisherKind::Quantum, f))
}

/// QFIM of an incoherent mixture of pure states on distinct photon-number
/// sectors. Number-conserving evolution never couples the sectors, so the
/// QFIM is the weighted sum of the sector QFIMs.
pub fn qfim_sector_mixture(
    weights: &[f64],
    states: &[PureState],
    gens: &GeneratorSet,
) -> Result<FisherMatrix, FisherError> {
    if weights.len() != states.len() {
        return Err(FisherError::WeightMismatch(format!(
            "{} weights for {} states",
            weights.len(),
            states.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
        return Err(FisherError::WeightMismatch(format!(
            "weights sum to {total}"
        )));
    }
    let n = gens.modes.len();
    let mut f = DMatrix::zeros(n, n);
    for (w, s) in weights.iter().zip(states) {
        f += qfim_pure(s, gens)?.entries * *w;
    }
    Ok(FisherMatrix::new(FisherKind::Quantum, f))
}

/// QFIM of the probe held by `model`, generated by the model's unknown-phase modes.
pub fn qfim_for_model(model: &PhaseModel) -> Result<FisherMatrix, FisherError> {
    let gens = GeneratorSet::new(model.unknown_modes().to_vec())?;
    if let Some(photons) = model.single_photon_states() {
        // independent photons: information adds up
        let n = gens.modes.len();
        let mut f = DMatrix::zeros(n, n);
        for s in &photons {
            f += qfim_pure(s, &gens)?.entries;
        }
        return Ok(FisherMatrix::new(FisherKind::Quantum, f));
    }
    let sectors = model.sector_states().expect("pure or sector-mixture probe");
    let (weights, states): (Vec<f64>, Vec<PureState>) = sectors.into_iter().unzip();
    // the truncated Poisson tail is dropped, renormalize what is kept
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    qfim_sector_mixture(&weights, &states, &gens)
}

/// Photon number and single-qudit generator spectrum range per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableBoundSpec {
    pub photons: f64,
    pub g_max: Vec<f64>,
    pub g_min: Vec<f64>,
}

impl SeparableBoundSpec {
    pub fn new(photons: f64, g_max: Vec<f64>, g_min: Vec<f64>) -> Result<Self, FisherError> {
        if !(photons >= 1.0) {
            return Err(FisherError::InvalidBoundSpec(format!(
                "photon number {photons} < 1"
            )));
        }
        if g_max.len() != g_min.len() || g_max.is_empty() {
            return Err(FisherError::InvalidBoundSpec(
                "g_max and g_min lengths differ".into(),
            ));
        }
        if g_max.iter().zip(&g_min).any(|(a, b)| !(a > b)) {
            return Err(FisherError::InvalidBoundSpec("need g_max > g_min".into()));
        }
        Ok(Self {
            photons,
            g_max,
            g_min,
        })
    }

    /// Number-operator generators: each single-photon `ĝ_j` has spectrum {0, 1}.
    pub fn number_operators(photons: f64, parameters: usize) -> Result<Self, FisherError> {
        Self::new(photons, vec![1.0; parameters], vec![0.0; parameters])
    }

    pub fn parameters(&self) -> usize {
        self.g_max.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableBounds {
    /// Largest `F_jj` reachable without entanglement.
    pub f_jj_max: Vec<f64>,
    /// Smallest `[F⁻¹]_jj` reachable without entanglement.
    pub inv_diag_min: Vec<f64>,
    pub trace_min: f64,
}

pub fn separable_bounds(spec: &SeparableBoundSpec) -> SeparableBounds {
    let f_jj_max: Vec<f64> = spec
        .g_max
        .iter()
        .zip(&spec.g_min)
        .map(|(a, b)| spec.photons * (a - b).powi(2))
        .collect();
    let inv_diag_min: Vec<f64> = f_jj_max.iter().map(|f| 1.0 / f).collect();
    let trace_min = inv_diag_min.iter().sum();
    SeparableBounds {
        f_jj_max,
        inv_diag_min,
        trace_min,
    }
}

/// Which separable bounds a FIM violates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessVerdict {
    /// `F_jj` above the separable maximum.
    pub diagonal: Vec<bool>,
    /// `[F⁻¹]_jj` below the separable minimum; `None` when `F` is singular.
    pub inverse_diagonal: Option<Vec<bool>>,
    /// `Tr[F⁻¹]` below the separable minimum; `None` when `F` is singular.
    pub trace: Option<bool>,
    pub trace_value: Option<f64>,
}

impl WitnessVerdict {
    pub fn entangled(&self) -> bool {
        self.diagonal.iter().any(|&v| v)
            || self.inverse_diagonal.iter().flatten().any(|&v| v)
            || self.trace == Some(true)
    }
}

pub fn entanglement_witness(
    f: &FisherMatrix,
    spec: &SeparableBoundSpec,
) -> Result<WitnessVerdict, FisherError> {
    if f.dim() != spec.parameters() {
        return Err(FisherError::InvalidBoundSpec(format!(
            "{} parameters in the bound spec, FIM is {}x{}",
            spec.parameters(),
            f.dim(),
            f.dim()
        )));
    }
    let bounds = separable_bounds(spec);
    let diagonal = f
        .diagonal()
        .iter()
        .zip(&bounds.f_jj_max)
        .map(|(d, max)| *d > max * (1.0 + 1e-12))
        .collect();
    let inverse = invert_fisher(f, SINGULAR_CONDITION);
    let inverse_diagonal = inverse.diagonal().map(|d| {
        d.iter()
            .zip(&bounds.inv_diag_min)
            .map(|(v, min)| *v < min * (1.0 - 1e-12))
            .collect()
    });
    let trace_value = inverse.trace();
    Ok(WitnessVerdict {
        diagonal,
        inverse_diagonal,
        trace: trace_value.map(|t| t < bounds.trace_min * (1.0 - 1e-12)),
        trace_value,
    })
}
