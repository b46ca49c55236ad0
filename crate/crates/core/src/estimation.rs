//! Maximum-likelihood phase estimation with a Gaussian (or flat) prior, and
//! multinomial sampling of photon-counting outcomes.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{OutcomeDistribution, PhaseModel};
use crate::fisher::{fisher_at, invert_fisher, FisherKind, FisherMatrix, SINGULAR_CONDITION};
use crate::optics::{phase_difference, wrap_phase};
use crate::simplex::{minimize, SimplexOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("need at least one measurement")]
    NoSamples,
    #[error("prior sigmas must be positive and finite, got {0:?}")]
    PriorSigma(Vec<f64>),
    #[error("prior has {prior} parameters, model has {model}")]
    ParameterCount { prior: usize, model: usize },
    #[error("{counts} counts for {outcomes} outcomes")]
    CountLength { counts: usize, outcomes: usize },
    #[error("no data to estimate from")]
    NoData,
    #[error("neither the FIM nor the likelihood curvature gives an uncertainty at {0:?}")]
    NoUncertainty(Vec<f64>),
}

/// Independent Gaussian knowledge of each phase, on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, sigma: Vec<f64>) -> Result<Self, EstimationError> {
        if mean.len() != sigma.len() || sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(EstimationError::PriorSigma(sigma));
        }
        Ok(Self {
            mean: mean.into_iter().map(wrap_phase).collect(),
            sigma,
        })
    }

    /// Log density up to its normalization, deviations taken on the circle.
    pub fn log_density(&self, phases: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.sigma)
            .zip(phases)
            .map(|((m, s), p)| -0.5 * (phase_difference(*p, *m) / s).powi(2))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Flat,
    Gaussian(GaussianPrior),
}

impl Prior {
    pub fn log_density(&self, phases: &[f64]) -> f64 {
        match self {
            Prior::Flat => 0.0,
            Prior::Gaussian(g) => g.log_density(phases),
        }
    }
}

/// Occurrences of each outcome, in the model's outcome order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountRecord {
    pub counts: Vec<u64>,
}

impl CountRecord {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(outcome, count)` for the outcomes seen at least once.
    pub fn observed(&self) -> Vec<(usize, u64)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(k, &n)| (k, n))
            .collect()
    }

    pub fn merge(&mut self, other: &CountRecord) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Counts recorded with one interferometer setting.
#[derive(Debug, Clone)]
pub struct Observation {
    model: PhaseModel,
    counts: CountRecord,
    seen: Vec<usize>,
    weights: Vec<f64>,
}

impl Observation {
    pub fn new(model: PhaseModel, counts: CountRecord) -> Result<Self, EstimationError> {
        if counts.counts.len() != model.outcome_count() {
            return Err(EstimationError::CountLength {
                counts: counts.counts.len(),
                outcomes: model.outcome_count(),
            });
        }
        let (seen, weights) = counts
            .observed()
            .into_iter()
            .map(|(k, n)| (k, n as f64))
            .unzip();
        Ok(Self {
            model,
            counts,
            seen,
            weights,
        })
    }

    pub fn model(&self) -> &PhaseModel {
        &self.model
    }

    pub fn counts(&self) -> &CountRecord {
        &self.counts
    }

    /// `Σ_k n_k log p(k|φ)`; `−∞` when an observed outcome has `p = 0`.
    pub fn log_likelihood(&self, phases: &[f64]) -> f64 {
        let mut probs = vec![0.0; self.seen.len()];
        self.model.probabilities_of(phases, &self.seen, &mut probs);
        let mut total = 0.0;
        for (n, p) in self.weights.iter().zip(&probs) {
            if *p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += n * p.ln();
        }
        total
    }

    /// [`Observation::log_likelihood`] on the product grid `axis0 × axis1`,
    /// row-major with `axis1` fastest.
    pub fn grid_log_likelihood(&self, axis0: &[f64], axis1: &[f64]) -> Vec<f64> {
        let k = self.seen.len();
        let probs = self.model.probabilities_on_grid(axis0, axis1, &self.seen);
        (0..axis0.len() * axis1.len())
            .map(|cell| {
                let mut total = 0.0;
                for (n, p) in self.weights.iter().zip(&probs[cell * k..(cell + 1) * k]) {
                    if *p <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    total += n * p.ln();
                }
                total
            })
            .collect()
    }
}

/// `log prior(φ) + Σ_k n_k log p(k|φ)` for a single setting.
///
/// Panics if `counts` does not have one entry per model outcome.
pub fn log_likelihood(
    model: &PhaseModel,
    counts: &CountRecord,
    prior: &Prior,
    phases: &[f64],
) -> f64 {
    let obs = Observation::new(model.clone(), counts.clone()).expect("one count per outcome");
    joint_log_likelihood(std::slice::from_ref(&obs), prior, phases)
}

/// Log likelihood of several settings sharing the same unknown phases.
pub fn joint_log_likelihood(data: &[Observation], prior: &Prior, phases: &[f64]) -> f64 {
    prior.log_density(phases) + data.iter().map(|o| o.log_likelihood(phases)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Spacing of the coarse likelihood grid (rad).
    pub grid_step: f64,
    /// Phase tolerance of the simplex refinement (rad).
    pub refine_tol: f64,
    /// Half-width of the search window in prior sigmas.
    pub window_sigmas: f64,
    /// Coarse-grid maxima refined before picking the best.
    pub candidates: usize,
    /// Size of the flat-prior search box per axis; phases are identifiable
    /// only modulo the circuit's translation symmetry, so one cell suffices.
    pub flat_extent: [f64; 2],
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.02,
            refine_tol: 1e-5,
            window_sigmas: 4.0,
            candidates: 3,
            flat_extent: [TAU, TAU],
        }
    }
}

/// Result of [`ml_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub phases: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `Σ_s ν_s F_s` at the estimate, when regular.
    pub information: Option<Vec<Vec<f64>>>,
    pub log_likelihood: f64,
    /// Sigma came from the likelihood curvature because the FIM was singular.
    pub curvature_fallback: bool,
}

impl Estimate {
    pub fn information_matrix(&self) -> Option<DMatrix<f64>> {
        self.information.as_ref().map(|rows| {
            let n = rows.len();
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        })
    }
}

/// Coarse grid over the search window followed by simplex ascent from the
/// best grid maxima. Sigma is `√([(Σ ν_s F_s)⁻¹]_ii)` at the estimate, or the
/// inverse curvature of the log likelihood where the FIM is singular.
pub fn ml_estimate(
    data: &[Observation],
    prior: &Prior,
    options: &SearchOptions,
) -> Result<Estimate, EstimationError> {
    let n = check(data, prior)?;
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| match prior {
            Prior::Gaussian(g) if 2.0 * options.window_sigmas * g.sigma[i] < TAU => window_axis(
                g.mean[i],
                options.window_sigmas * g.sigma[i],
                options.grid_step,
            ),
            Prior::Gaussian(_) => full_axis(TAU, options.grid_step),
            Prior::Flat => full_axis(
                options.flat_extent.get(i).copied().unwrap_or(TAU),
                options.grid_step,
            ),
        })
        .collect();
    grid_search(data, prior, &axes, options)
}

/// ML restricted to the box `center ± half_width`, sampled every `step`
/// before the simplex polish. For sharp likelihoods whose maximum is known
/// to lie in a small region.
pub fn window_estimate(
    data: &[Observation],
    prior: &Prior,
    center: &[f64],
    half_width: &[f64],
    step: f64,
    options: &SearchOptions,
) -> Result<Estimate, EstimationError> {
    let n = check(data, prior)?;
    if center.len() != n || half_width.len() != n {
        return Err(EstimationError::ParameterCount {
            prior: center.len(),
            model: n,
        });
    }
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| window_axis(center[i], half_width[i], step))
        .collect();
    let options = SearchOptions {
        grid_step: step,
        ..*options
    };
    grid_search(data, prior, &axes, &options)
}

/// Local maxima of the coarse likelihood grid within `margin` nats of the
/// best, best first. The grid is the one [`ml_estimate`] searches.
pub fn likelihood_modes(
    data: &[Observation],
    options: &SearchOptions,
    margin: f64,
) -> Result<Vec<(Vec<f64>, f64)>, EstimationError> {
    let n = check(data, &Prior::Flat)?;
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            full_axis(
                options.flat_extent.get(i).copied().unwrap_or(TAU),
                options.grid_step,
            )
        })
        .collect();
    let (shape, values) = grid_values(data, &Prior::Flat, &axes);
    let maxima = grid_maxima(&shape, &values);
    let top = maxima.first().map_or(f64::NEG_INFINITY, |&k| values[k]);
    let mut point = vec![0.0; n];
    Ok(maxima
        .into_iter()
        .take_while(|&k| values[k] >= top - margin)
        .map(|k| {
            grid_point(k, &shape, &axes, &mut point);
            (point.clone(), values[k])
        })
        .collect())
}

fn check(data: &[Observation], prior: &Prior) -> Result<usize, EstimationError> {
    let first = data.first().ok_or(EstimationError::NoData)?;
    let n = first.model().parameter_count();
    if let Prior::Gaussian(g) = prior {
        if g.mean.len() != n {
            return Err(EstimationError::ParameterCount {
                prior: g.mean.len(),
                model: n,
            });
        }
    }
    Ok(n)
}

fn grid_values(data: &[Observation], prior: &Prior, axes: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let n = axes.len();
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let mut point = vec![0.0; n];
    let values = if n == 2 {
        let mut values = vec![0.0; total];
        for obs in data {
            for (v, l) in values
                .iter_mut()
                .zip(obs.grid_log_likelihood(&axes[0], &axes[1]))
            {
                *v += l;
            }
        }
        for (flat, v) in values.iter_mut().enumerate() {
            grid_point(flat, &shape, axes, &mut point);
            *v += prior.log_density(&point);
        }
        values
    } else {
        (0..total)
            .map(|flat| {
                grid_point(flat, &shape, axes, &mut point);
                joint_log_likelihood(data, prior, &point)
            })
            .collect()
    };
    (shape, values)
}

/// Grid maxima, best first; the overall best cell if none is strict.
fn grid_maxima(shape: &[usize], values: &[f64]) -> Vec<usize> {
    let total = values.len();
    let mut maxima: Vec<usize> = (0..total)
        .filter(|&k| is_grid_max(k, shape, values))
        .collect();
    maxima.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    if maxima.is_empty() {
        maxima.push(
            (0..total)
                .max_by(|&a, &b| values[a].total_cmp(&values[b]))
                .unwrap_or(0),
        );
    }
    maxima
}

fn grid_search(
    data: &[Observation],
    prior: &Prior,
    axes: &[Vec<f64>],
    options: &SearchOptions,
) -> Result<Estimate, EstimationError> {
    let objective = |x: &[f64]| joint_log_likelihood(data, prior, x);
    let (shape, values) = grid_values(data, prior, axes);
    let mut point = vec![0.0; axes.len()];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &k in grid_maxima(&shape, &values)
        .iter()
        .take(options.candidates.max(1))
    {
        grid_point(k, &shape, axes, &mut point);
        let r = minimize(
            |x| -objective(x),
            &point,
            SimplexOptions {
                initial_step: options.grid_step / 2.0,
                tolerance: options.refine_tol,
                max_iterations: 2000,
            },
        );
        if best.as_ref().is_none_or(|(_, v)| -r.value > *v) {
            best = Some((r.point, -r.value));
        }
    }
    let (raw, log_likelihood) = best.expect("at least one candidate");
    finish(data, &objective, raw, log_likelihood)
}

/// Simplex ascent of the joint likelihood from `start`, without a grid
/// search. For data whose maximum is already known to lie near `start`.
pub fn refine_estimate(
    data: &[Observation],
    prior: &Prior,
    start: &[f64],
    options: &SearchOptions,
) -> Result<Estimate, EstimationError> {
    let first = data.first().ok_or(EstimationError::NoData)?;
    if start.len() != first.model().parameter_count() {
        return Err(EstimationError::ParameterCount {
            prior: start.len(),
            model: first.model().parameter_count(),
        });
    }
    let objective = |x: &[f64]| joint_log_likelihood(data, prior, x);
    let r = minimize(
        |x| -objective(x),
        start,
        SimplexOptions {
            initial_step: options.grid_step / 2.0,
            tolerance: options.refine_tol,
            max_iterations: 2000,
        },
    );
    finish(data, &objective, r.point, -r.value)
}

fn finish(
    data: &[Observation],
    objective: &dyn Fn(&[f64]) -> f64,
    raw: Vec<f64>,
    log_likelihood: f64,
) -> Result<Estimate, EstimationError> {
    let n = raw.len();
    let phases: Vec<f64> = raw.iter().copied().map(wrap_phase).collect();

    let information = total_information(data, &phases);
    let cov = information.as_ref().and_then(|f| {
        invert_fisher(
            &FisherMatrix::new(FisherKind::Classical, f.clone()),
            SINGULAR_CONDITION,
        )
        .matrix()
        .cloned()
    });
    let (sigma, curvature_fallback) = match &cov {
        Some(cov) => ((0..n).map(|i| cov[(i, i)].sqrt()).collect(), false),
        None => (
            curvature_sigma(&objective, &phases)
                .ok_or_else(|| EstimationError::NoUncertainty(phases.clone()))?,
            true,
        ),
    };
    Ok(Estimate {
        sigma,
        information: cov
            .and(information)
            .map(|f| f.row_iter().map(|r| r.iter().copied().collect()).collect()),
        phases,
        log_likelihood,
        curvature_fallback,
    })
}

fn window_axis(center: f64, half: f64, step: f64) -> Vec<f64> {
    let steps = (2.0 * half / step).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|k| center - half + 2.0 * half * k as f64 / steps as f64)
        .collect()
}

fn full_axis(extent: f64, step: f64) -> Vec<f64> {
    let n = (extent / step).ceil() as usize;
    (0..n).map(|k| k as f64 * extent / n as f64).collect()
}

fn grid_point(mut flat: usize, shape: &[usize], axes: &[Vec<f64>], out: &mut [f64]) {
    for i in (0..shape.len()).rev() {
        out[i] = axes[i][flat % shape[i]];
        flat /= shape[i];
    }
}

/// Grid maximum against its axis neighbours (no wraparound; the window edges
/// count as lower).
fn is_grid_max(k: usize, shape: &[usize], values: &[f64]) -> bool {
    let v = values[k];
    if !v.is_finite() {
        return false;
    }
    let mut stride = 1;
    for i in (0..shape.len()).rev() {
        let idx = (k / stride) % shape[i];
        if idx > 0 && values[k - stride] > v {
            return false;
        }
        if idx + 1 < shape[i] && values[k + stride] >= v {
            return false;
        }
        stride *= shape[i];
    }
    true
}

/// `Σ_s ν_s F_s(φ)`, `None` if some FIM is undefined.
pub fn total_information(data: &[Observation], phases: &[f64]) -> Option<DMatrix<f64>> {
    let n = phases.len();
    let mut f = DMatrix::zeros(n, n);
    for o in data {
        let fi = fisher_at(o.model(), phases).ok()?;
        f += fi.entries * o.counts().total() as f64;
    }
    Some(f)
}

/// Sigma from the finite-difference Hessian of the log likelihood.
fn curvature_sigma(objective: &impl Fn(&[f64]) -> f64, at: &[f64]) -> Option<Vec<f64>> {
    let n = at.len();
    let h = 1e-4;
    let f0 = objective(at);
    let shifted = |i: usize, di: f64, j: usize, dj: f64| {
        let mut x = at.to_vec();
        x[i] += di;
        x[j] += dj;
        objective(&x)
    };
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        hess[(i, i)] = (shifted(i, h, i, 0.0) - 2.0 * f0 + shifted(i, -h, i, 0.0)) / (h * h);
        for j in 0..i {
            let v = (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h)
                + shifted(i, -h, j, -h))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let cov = (-hess).try_inverse()?;
    let sigma: Vec<f64> = (0..n).map(|i| cov[(i, i)]).collect();
    if sigma.iter().all(|v| v.is_finite() && *v > 0.0) {
        Some(sigma.iter().map(|v| v.sqrt()).collect())
    } else {
        None
    }
}

/// Multinomial draw of `nu` outcomes, by sequential conditional binomials.
pub fn sample_counts<R: Rng + ?Sized>(
    probs: &[f64],
    nu: u64,
    rng: &mut R,
) -> Result<CountRecord, EstimationError> {
    if nu == 0 {
        return Err(EstimationError::NoSamples);
    }
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = nu;
    let mut mass: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let p = p.max(0.0);
        if k + 1 == probs.len() {
            counts[k] = remaining;
            break;
        }
        let q = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let n = Binomial::new(remaining, q)
            .expect("valid binomial")
            .sample(rng);
        counts[k] = n;
        remaining -= n;
        mass -= p;
    }
    Ok(CountRecord { counts })
}

/// Seeded multinomial draw from a distribution.
pub fn sample_outcomes(
    dist: &OutcomeDistribution,
    nu: u64,
    seed: u64,
) -> Result<CountRecord, EstimationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_counts(&dist.probs, nu, &mut rng)
}
