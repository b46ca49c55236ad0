//! Adaptive two-phase estimation: a rough estimate, then measurements with
//! control phases that move the unknowns onto the circuit's working points.
//!
//! Three-mode circuit: rough step, `ν1` shots around Q1 and `ν2` around Q2,
//! combined with weights `ν1 F(Q1) + ν2 F(Q2)`. Four-mode circuit: rough step,
//! then the rest of the budget split between two points beside O1.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{
    likelihood_modes, ml_estimate, refine_estimate, sample_counts, window_estimate, CountRecord,
    Estimate, EstimationError, GaussianPrior, Observation, Prior, SearchOptions,
};
use crate::evolution::{EvolutionError, PhaseModel};
use crate::fisher::{fisher_at, invert_fisher, FisherError, SINGULAR_CONDITION};
use crate::interferometer::{Circuit, O1, Q1, Q2};
use crate::optics::{phase_difference, wrap_phase};

/// Expected `δφ√ν` at the three-mode working points with `ν1 = ν2`.
pub const THREE_MODE_BOUND: f64 = 0.543;
/// Expected `δφ√ν` for the four-mode protocol with `φ0 = 0.01`.
pub const FOUR_MODE_BOUND: f64 = 0.437;
/// `δφ√ν` reachable by separable three-photon probes.
pub const THREE_MODE_SEPARABLE: f64 = 0.577;
/// Four-mode quantum Cramér-Rao limit on `δφ√ν`.
pub const FOUR_MODE_QCRB: f64 = 0.433;

/// Rough-likelihood modes within this many nats of the best are re-examined
/// with every shot before the final estimate is picked.
const MODE_MARGIN: f64 = 20.0;
const MAX_MODES: usize = 4;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error("four-mode protocol needs phi0 > 0 so that O1 has a singularity-free neighbourhood, got {0}")]
    Stability(f64),
    #[error("Monte Carlo statistics need at least 2 repetitions, got {0}")]
    Repetitions(usize),
    #[error("FIM at working point {0:?} is singular")]
    SingularWorkingPoint([f64; 2]),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Fisher(#[from] FisherError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "circuit", rename_all = "snake_case")]
pub enum ProtocolKind {
    ThreeMode,
    FourMode { phi0: f64 },
}

impl ProtocolKind {
    pub fn circuit(&self) -> Circuit {
        match *self {
            ProtocolKind::ThreeMode => Circuit::three_mode(),
            ProtocolKind::FourMode { phi0 } => Circuit::four_mode(phi0),
        }
    }

    pub fn default_bound(&self) -> f64 {
        match self {
            ProtocolKind::ThreeMode => THREE_MODE_BOUND,
            ProtocolKind::FourMode { .. } => FOUR_MODE_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub kind: ProtocolKind,
    pub true_phases: [f64; 2],
    /// Total number of detected events.
    pub nu: u64,
    /// Budget fractions: the rough step, then one per target.
    pub fractions: Vec<f64>,
    /// Control settings of the rough step; its budget is split evenly.
    pub rough_controls: Vec<[f64; 2]>,
    /// Phase points the targeted steps steer the unknowns onto.
    pub targets: Vec<[f64; 2]>,
    /// Extra rough batches allowed when the rough FIM is singular.
    pub max_retries: usize,
    pub search: SearchOptions,
}

/// Second rough-step setting for the tritter. With `ψ = 0` alone the
/// statistics have reflection-type copies of every phase pair; a second
/// setting breaks them. Picked to maximise the worst-case two-setting
/// divergence between a phase pair and any non-shifted point 0.3 rad away.
pub const THREE_MODE_ROUGH: [f64; 2] = [2.0 * PI / 3.0, PI / 2.0];

/// Second rough-step setting for the quarter, chosen the same way.
pub const FOUR_MODE_ROUGH: [f64; 2] = [PI, PI / 3.0];

/// Four-mode targets, O1 shifted by `±0.1` along the first axis. At one
/// setting the statistics are nearly symmetric under reflection in the two
/// diagonals through `O1 + (φ0/2, φ0/2)`, so a point close to either diagonal
/// has a mirror image close to itself. A rough error can carry one target onto
/// a diagonal, but not both, and the two mirror images differ. Precision
/// drops by under 1% against O1 itself.
pub const FOUR_MODE_TARGETS: [[f64; 2]; 2] = [[O1[0] + 0.1, O1[1]], [O1[0] - 0.1, O1[1]]];

impl AdaptiveConfig {
    pub fn three_mode(true_phases: [f64; 2], nu: u64) -> Self {
        Self {
            kind: ProtocolKind::ThreeMode,
            true_phases,
            nu,
            fractions: vec![0.1, 0.45, 0.45],
            rough_controls: vec![[0.0, 0.0], THREE_MODE_ROUGH],
            targets: vec![Q1, Q2],
            max_retries: 3,
            search: SearchOptions::default(),
        }
    }

    pub fn four_mode(true_phases: [f64; 2], phi0: f64, nu: u64) -> Self {
        Self {
            kind: ProtocolKind::FourMode { phi0 },
            true_phases,
            nu,
            fractions: vec![0.1, 0.45, 0.45],
            rough_controls: vec![[0.0, 0.0], FOUR_MODE_ROUGH],
            targets: FOUR_MODE_TARGETS.to_vec(),
            max_retries: 3,
            search: SearchOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if let ProtocolKind::FourMode { phi0 } = self.kind {
            if !(phi0 > 0.0) {
                return Err(ProtocolError::Stability(phi0));
            }
        }
        if self.targets.is_empty() {
            return Err(ProtocolError::Config("no target point".into()));
        }
        let steps = self.targets.len() + 1;
        if self.fractions.len() != steps {
            return Err(ProtocolError::Config(format!(
                "expected {steps} budget fractions, got {}",
                self.fractions.len()
            )));
        }
        if self.fractions.iter().any(|f| !(*f > 0.0))
            || (self.fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(ProtocolError::Config(format!(
                "fractions must be positive and sum to 1, got {:?}",
                self.fractions
            )));
        }
        if self.rough_controls.is_empty() {
            return Err(ProtocolError::Config("no rough-step setting".into()));
        }
        let smallest = self.budget().into_iter().min().unwrap_or(0);
        if smallest < self.rough_controls.len() as u64 {
            return Err(ProtocolError::Config(format!(
                "nu = {} leaves an empty step",
                self.nu
            )));
        }
        Ok(())
    }

    /// Shots per step before any retry.
    pub fn budget(&self) -> Vec<u64> {
        let mut parts: Vec<u64> = self.fractions[..self.fractions.len() - 1]
            .iter()
            .map(|f| (f * self.nu as f64).round() as u64)
            .collect();
        let used: u64 = parts.iter().sum();
        parts.push(self.nu.saturating_sub(used));
        parts
    }
}

/// One batch of measurements at fixed control phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub label: String,
    pub controls: [f64; 2],
    pub nu: u64,
    pub counts: CountRecord,
    /// Knowledge of the phases after this step.
    pub posterior: GaussianPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub rough_retries: usize,
    pub estimate: [f64; 2],
    pub sigma: [f64; 2],
}

impl ProtocolTrace {
    pub fn total_shots(&self) -> u64 {
        self.steps.iter().map(|s| s.nu).sum()
    }
}

fn sample(
    model: &PhaseModel,
    truth: [f64; 2],
    nu: u64,
    rng: &mut ChaCha8Rng,
) -> Result<CountRecord, ProtocolError> {
    Ok(sample_counts(&model.probabilities(&truth), nu, rng)?)
}

fn posterior(e: &Estimate) -> Result<GaussianPrior, ProtocolError> {
    Ok(GaussianPrior::new(e.phases.clone(), e.sigma.clone())?)
}

struct Rough {
    estimate: Estimate,
    /// Coarse-grid likelihood maxima of the rough data, best first.
    modes: Vec<[f64; 2]>,
    data: Vec<Observation>,
    used: u64,
    retries: usize,
}

/// Rough step: flat-prior ML over one translation cell from all rough
/// settings jointly, with extra batches while the FIM at the estimate is
/// singular.
fn rough_step(
    config: &AdaptiveConfig,
    circuit: &Circuit,
    budget: u64,
    spare: u64,
    rng: &mut ChaCha8Rng,
    steps: &mut Vec<StepRecord>,
) -> Result<Rough, ProtocolError> {
    let probe = circuit.single_photon_probe();
    let models = config
        .rough_controls
        .iter()
        .map(|psi| circuit.model_with_controls(&probe, psi))
        .collect::<Result<Vec<_>, _>>()?;
    let settings = models.len() as u64;
    let mut pooled: Vec<CountRecord> = models
        .iter()
        .map(|m| CountRecord::new(vec![0; m.outcome_count()]))
        .collect();
    let search = rough_search(config, circuit);

    let mut used = 0;
    let mut retries = 0;
    loop {
        let first = steps.len();
        for (k, (m, psi)) in models.iter().zip(&config.rough_controls).enumerate() {
            let n = budget / settings + u64::from((k as u64) < budget % settings);
            let counts = sample(m, config.true_phases, n, rng)?;
            pooled[k].merge(&counts);
            steps.push(StepRecord {
                label: if retries == 0 {
                    "rough".into()
                } else {
                    format!("rough-retry-{retries}")
                },
                controls: *psi,
                nu: n,
                counts,
                posterior: GaussianPrior::new(vec![0.0, 0.0], vec![1.0, 1.0])?,
            });
        }
        used += budget;
        let data = models
            .iter()
            .zip(&pooled)
            .map(|(m, c)| Observation::new(m.clone(), c.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let modes = likelihood_modes(&data, &search, MODE_MARGIN)?;
        let mut estimate: Option<Estimate> = None;
        for (m, _) in modes.iter().take(search.candidates.max(1)) {
            let e = refine_estimate(&data, &Prior::Flat, m, &search)?;
            if estimate
                .as_ref()
                .is_none_or(|b| e.log_likelihood > b.log_likelihood)
            {
                estimate = Some(e);
            }
        }
        let estimate = estimate.expect("the grid has a best cell");
        let post = posterior(&estimate)?;
        for s in &mut steps[first..] {
            s.posterior = post.clone();
        }
        if !estimate.curvature_fallback || retries >= config.max_retries || used + budget > spare {
            return Ok(Rough {
                estimate,
                modes: modes.iter().map(|(m, _)| [m[0], m[1]]).collect(),
                data,
                used,
                retries,
            });
        }
        retries += 1;
    }
}

/// The rough likelihood is about 0.05 rad wide, so its mode scan runs on a
/// grid twice as coarse as the main one. Each mode is refined afterwards.
const ROUGH_COARSENING: f64 = 2.0;

fn rough_search(config: &AdaptiveConfig, circuit: &Circuit) -> SearchOptions {
    SearchOptions {
        flat_extent: circuit.fundamental_extent(),
        grid_step: ROUGH_COARSENING * config.search.grid_step,
        ..config.search
    }
}

/// ML estimate of the unknowns from `nu` shots with controls moving the
/// rough estimate onto `target`.
#[allow(clippy::too_many_arguments)]
fn targeted_step(
    label: String,
    circuit: &Circuit,
    config: &AdaptiveConfig,
    prior: &GaussianPrior,
    target: [f64; 2],
    nu: u64,
    rng: &mut ChaCha8Rng,
    steps: &mut Vec<StepRecord>,
) -> Result<(Estimate, Observation), ProtocolError> {
    let psi = [
        wrap_phase(target[0] - prior.mean[0]),
        wrap_phase(target[1] - prior.mean[1]),
    ];
    let model = circuit.model_with_controls(&circuit.single_photon_probe(), &psi)?;
    let counts = sample(&model, config.true_phases, nu, rng)?;
    let obs = Observation::new(model, counts.clone())?;
    let est = ml_estimate(
        std::slice::from_ref(&obs),
        &Prior::Gaussian(prior.clone()),
        &config.search,
    )?;
    steps.push(StepRecord {
        label,
        controls: psi,
        nu,
        counts,
        posterior: posterior(&est)?,
    });
    Ok((est, obs))
}

/// `ν F` at a working point of the uncontrolled circuit.
fn working_information(
    circuit: &Circuit,
    point: [f64; 2],
    nu: u64,
) -> Result<DMatrix<f64>, ProtocolError> {
    let model = circuit.model(&circuit.single_photon_probe())?;
    let f = fisher_at(&model, &point)?;
    if invert_fisher(&f, SINGULAR_CONDITION).is_singular() {
        return Err(ProtocolError::SingularWorkingPoint(point));
    }
    Ok(f.entries * nu as f64)
}

fn prior_information(prior: &GaussianPrior) -> DMatrix<f64> {
    DMatrix::from_fn(
        2,
        2,
        |i, j| if i == j { prior.sigma[i].powi(-2) } else { 0.0 },
    )
}

fn shares(budget: &[u64], used_by_rough: u64) -> Vec<u64> {
    // shots taken by rough retries come out of the later steps evenly
    let extra = used_by_rough - budget[0];
    let later = &budget[1..];
    let k = later.len() as u64;
    later
        .iter()
        .enumerate()
        .map(|(i, b)| b - extra / k - u64::from((i as u64) < extra % k))
        .collect()
}

fn step_label(kind: ProtocolKind, k: usize) -> String {
    match kind {
        ProtocolKind::ThreeMode => format!("q{}", k + 1),
        ProtocolKind::FourMode { .. } => format!("o1-{}", k + 1),
    }
}

/// One run of the protocol with its own random stream.
pub fn run_adaptive(config: &AdaptiveConfig, seed: u64) -> Result<ProtocolTrace, ProtocolError> {
    config.validate()?;
    let circuit = config.kind.circuit();
    let budget = config.budget();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::new();

    let spare = budget[0] + budget[1..].iter().copied().min().unwrap_or(0);
    let rough = rough_step(config, &circuit, budget[0], spare, &mut rng, &mut steps)?;
    let prior = posterior(&rough.estimate)?;
    let nus = shares(&budget, rough.used);
    let mut data = rough.data.clone();

    // Every targeted step starts from the same prior: combine their
    // posteriors with weights ν_k F(target_k), counting the prior once.
    let p = prior_information(&prior);
    let mut total = p.clone();
    let mut rhs = DVector::zeros(2);
    for (k, (&target, &nu)) in config.targets.iter().zip(&nus).enumerate() {
        let info = working_information(&circuit, target, nu)?;
        let (e, obs) = targeted_step(
            step_label(config.kind, k),
            &circuit,
            config,
            &prior,
            target,
            nu,
            &mut rng,
            &mut steps,
        )?;
        let d = DVector::from_iterator(
            2,
            (0..2).map(|i| phase_difference(e.phases[i], prior.mean[i])),
        );
        rhs += (&info + &p) * d;
        total += info;
        data.push(obs);
    }
    total -= &p * (config.targets.len() as f64 - 1.0);
    let shift = total
        .lu()
        .solve(&rhs)
        .ok_or(ProtocolError::SingularWorkingPoint(config.targets[0]))?;
    let fused = [prior.mean[0] + shift[0], prior.mean[1] + shift[1]];

    let e = final_estimate(config, &circuit, &rough, &prior, &data, fused)?;
    Ok(ProtocolTrace {
        seed,
        steps,
        rough_retries: rough.retries,
        estimate: [e.phases[0], e.phases[1]],
        sigma: [e.sigma[0], e.sigma[1]],
    })
}

/// Likelihood maximum of every recorded shot, searched in a window around
/// the fused estimate and around each other strong mode of the rough data,
/// so that a rough step that picked the wrong mirror image is overruled.
fn final_estimate(
    config: &AdaptiveConfig,
    circuit: &Circuit,
    rough: &Rough,
    prior: &GaussianPrior,
    data: &[Observation],
    fused: [f64; 2],
) -> Result<Estimate, ProtocolError> {
    let half: Vec<f64> = prior
        .sigma
        .iter()
        .map(|s| config.search.window_sigmas * s)
        .collect();
    let step = config.search.grid_step / 4.0;
    let mut starts = vec![fused];
    for &m in rough.modes.iter().take(MAX_MODES) {
        let near = circuit.nearest_copy(m, fused);
        let apart = (0..2).any(|i| phase_difference(near[i], fused[i]).abs() > half[i]);
        if apart {
            starts.push(m);
        }
    }
    let mut best: Option<Estimate> = None;
    for s in starts {
        let e = window_estimate(data, &Prior::Flat, &s, &half, step, &config.search)?;
        if best
            .as_ref()
            .is_none_or(|b| e.log_likelihood > b.log_likelihood)
        {
            best = Some(e);
        }
    }
    Ok(best.expect("the fused start is always searched"))
}

/// Seed of repetition `index`: the master seed advanced by `index` golden-ratio
/// increments, which keeps repetitions of different masters apart.
pub fn repetition_seed(master: u64, index: u64) -> u64 {
    master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloStats {
    pub repetitions: usize,
    pub nu: u64,
    pub true_phases: [f64; 2],
    /// Circular standard deviation of the estimates (rad).
    pub std: [f64; 2],
    /// Circular mean of estimate minus truth (rad).
    pub bias: [f64; 2],
    /// `std · √ν`.
    pub std_sqrt_nu: [f64; 2],
    pub bound: f64,
    /// `std · √ν / bound`.
    pub ratio: [f64; 2],
    /// Mean of the per-run reported sigmas.
    pub mean_sigma: [f64; 2],
    pub rough_retries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun {
    pub seeds: Vec<u64>,
    /// Final estimates, each moved to its translation copy nearest the truth.
    pub estimates: Vec<[f64; 2]>,
    pub stats: MonteCarloStats,
}

/// `p` independent runs seeded by [`repetition_seed`].
pub fn monte_carlo(
    config: &AdaptiveConfig,
    p: usize,
    master_seed: u64,
    bound: f64,
) -> Result<MonteCarloRun, ProtocolError> {
    let seeds: Vec<u64> = (0..p as u64)
        .map(|k| repetition_seed(master_seed, k))
        .collect();
    monte_carlo_with_seeds(config, &seeds, bound)
}

pub fn monte_carlo_with_seeds(
    config: &AdaptiveConfig,
    seeds: &[u64],
    bound: f64,
) -> Result<MonteCarloRun, ProtocolError> {
    if seeds.len() < 2 {
        return Err(ProtocolError::Repetitions(seeds.len()));
    }
    config.validate()?;
    let circuit = config.kind.circuit();
    let traces = seeds
        .par_iter()
        .map(|&s| run_adaptive(config, s))
        .collect::<Result<Vec<_>, _>>()?;
    let estimates: Vec<[f64; 2]> = traces
        .iter()
        .map(|t| circuit.nearest_copy(t.estimate, config.true_phases))
        .collect();

    let p = estimates.len() as f64;
    let mut std = [0.0; 2];
    let mut bias = [0.0; 2];
    let mut mean_sigma = [0.0; 2];
    for i in 0..2 {
        let dev: Vec<f64> = estimates
            .iter()
            .map(|e| phase_difference(e[i], config.true_phases[i]))
            .collect();
        let (s, c) = dev
            .iter()
            .fold((0.0, 0.0), |(s, c), d| (s + d.sin(), c + d.cos()));
        bias[i] = s.atan2(c);
        let ss: f64 = dev
            .iter()
            .map(|d| phase_difference(*d, bias[i]).powi(2))
            .sum();
        std[i] = (ss / (p - 1.0)).sqrt();
        mean_sigma[i] = traces.iter().map(|t| t.sigma[i]).sum::<f64>() / p;
    }
    let root = (config.nu as f64).sqrt();
    Ok(MonteCarloRun {
        seeds: seeds.to_vec(),
        estimates,
        stats: MonteCarloStats {
            repetitions: seeds.len(),
            nu: config.nu,
            true_phases: config.true_phases,
            std,
            bias,
            std_sqrt_nu: [std[0] * root, std[1] * root],
            bound,
            ratio: [std[0] * root / bound, std[1] * root / bound],
            mean_sigma,
            rough_retries: traces.iter().map(|t| t.rough_retries).sum(),
        },
    })
}
