//! Photon-counting statistics of a multiarm interferometer and their
//! derivatives with respect to the unknown phases.
//!
//! A [`PhaseModel`] fixes the splitters, the probe and the known phases once,
//! then evaluates `p(x|φ)` and `∂p/∂φ_j` cheaply at any unknown phase vector.
//! For Fock probes the amplitude is expanded over the intermediate basis `m`
//! between the two splitters,
//!
//! `A(x|φ) = Σ_m ⟨x|U_out|m⟩ e^(−i m·θ) ⟨m|U_in|probe⟩`,
//!
//! so each derivative just weights the terms by `−i m_j`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{enumerate_fock_basis, factorial, transition_amplitude, FockState};
use crate::optics::{OpticsError, PhaseConfig, UnitaryMatrix};

/// Default Poisson tail mass discarded when truncating coherent probes.
pub const COHERENT_TAIL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
    #[error("coherent probes are handled by coherent_distribution")]
    CoherentProbe,
    #[error("coherent_distribution needs a coherent probe")]
    NotCoherent,
    #[error("expected {expected} unknown phases, got {got}")]
    PhaseCount { expected: usize, got: usize },
}

/// Input state of the interferometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Probe {
    /// Indistinguishable photons in a Fock state.
    Fock { occupations: FockState },
    /// Coherent state of amplitude `alpha` in one input mode.
    Coherent { alpha: f64, mode: usize },
    /// One photon per listed occupation, each in its own internal state so
    /// that photons never interfere with each other.
    Distinguishable { occupations: FockState },
}

impl Probe {
    pub fn fock(occupations: Vec<u32>) -> Self {
        Probe::Fock {
            occupations: FockState::new(occupations),
        }
    }

    pub fn coherent(alpha: f64, mode: usize) -> Self {
        Probe::Coherent { alpha, mode }
    }

    pub fn distinguishable(occupations: Vec<u32>) -> Self {
        Probe::Distinguishable {
            occupations: FockState::new(occupations),
        }
    }

    /// Mean photon number.
    pub fn mean_photons(&self) -> f64 {
        match self {
            Probe::Fock { occupations } | Probe::Distinguishable { occupations } => {
                f64::from(occupations.total())
            }
            Probe::Coherent { alpha, .. } => alpha * alpha,
        }
    }

    pub fn validate(&self, modes: usize) -> Result<(), EvolutionError> {
        match self {
            Probe::Fock { occupations } | Probe::Distinguishable { occupations } => {
                if occupations.modes() != modes {
                    return Err(EvolutionError::InvalidProbe(format!(
                        "{occupations} has {} modes, interferometer has {modes}",
                        occupations.modes()
                    )));
                }
                if occupations.total() == 0 {
                    return Err(EvolutionError::InvalidProbe("no photons".into()));
                }
            }
            Probe::Coherent { alpha, mode } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(EvolutionError::InvalidProbe(format!(
                        "alpha must be > 0, got {alpha}"
                    )));
                }
                if *mode >= modes {
                    return Err(EvolutionError::InvalidProbe(format!(
                        "input mode {mode} out of range for {modes} modes"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Probabilities and gradients at one phase point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub probs: Vec<f64>,
    /// Row-major `outcomes × parameters`.
    pub grads: Vec<f64>,
    pub parameters: usize,
}

impl Evaluation {
    pub fn grad(&self, outcome: usize) -> &[f64] {
        &self.grads[outcome * self.parameters..(outcome + 1) * self.parameters]
    }
}

/// Outcome probabilities and their phase gradients at a given [`PhaseConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub outcomes: Vec<FockState>,
    pub probs: Vec<f64>,
    /// Per outcome, `∂p/∂φ_j` for each unknown phase (1/rad).
    pub grads: Vec<Vec<f64>>,
    pub phases: PhaseConfig,
}

impl OutcomeDistribution {
    pub fn parameter_count(&self) -> usize {
        self.phases.unknown().len()
    }

    pub fn total_probability(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `Σ_x ∂p/∂φ_j` for each parameter.
    pub fn gradient_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.parameter_count()];
        for g in &self.grads {
            for (s, v) in sums.iter_mut().zip(g) {
                *s += v;
            }
        }
        sums
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    Fock {
        photons: u32,
        /// Occupations of the intermediate basis, row-major `intermediates × modes`.
        occupancy: Vec<u8>,
        intermediates: usize,
        /// Row-major `outcomes × intermediates`.
        coeffs: Vec<Complex64>,
    },
    Distinguishable {
        photons: u32,
        inputs: Vec<usize>,
        /// Map from mixed-radix count index to outcome index.
        slot: Vec<usize>,
    },
    Coherent {
        alpha: f64,
        mode: usize,
    },
}

/// Interferometer `u_out · diag(e^(−iθ)) · u_in` with a fixed probe and fixed
/// known phases, evaluated at arbitrary values of the unknown phases.
#[derive(Debug, Clone)]
pub struct PhaseModel {
    u_in: UnitaryMatrix,
    u_out: UnitaryMatrix,
    unknown_modes: Vec<usize>,
    fixed_phases: Vec<f64>,
    outcomes: Vec<FockState>,
    probe: Probe,
    kernel: Kernel,
}

impl PhaseModel {
    /// `known` lists the control phases held fixed, `(mode, phase)`.
    pub fn new(
        u_in: &UnitaryMatrix,
        u_out: &UnitaryMatrix,
        probe: &Probe,
        unknown_modes: &[usize],
        known: &[(usize, f64)],
    ) -> Result<Self, EvolutionError> {
        Self::with_tail(u_in, u_out, probe, unknown_modes, known, COHERENT_TAIL)
    }

    /// As [`PhaseModel::new`], truncating coherent probes at Poisson tail `tail`.
    pub fn with_tail(
        u_in: &UnitaryMatrix,
        u_out: &UnitaryMatrix,
        probe: &Probe,
        unknown_modes: &[usize],
        known: &[(usize, f64)],
        tail: f64,
    ) -> Result<Self, EvolutionError> {
        let d = u_in.dim();
        if u_out.dim() != d {
            return Err(OpticsError::DimensionMismatch {
                left: d,
                right: u_out.dim(),
            }
            .into());
        }
        probe.validate(d)?;
        // validates indices and duplicates
        let layout = PhaseConfig::new(
            unknown_modes.iter().map(|&m| (m, 0.0)).collect(),
            known.to_vec(),
        )?;
        let fixed_phases = layout.mode_phases(d)?;

        let (outcomes, kernel) = match probe {
            Probe::Fock { occupations } => {
                let photons = occupations.total();
                let basis = enumerate_fock_basis(d, photons);
                let input: Vec<Complex64> = basis
                    .iter()
                    .map(|m| transition_amplitude(u_in, occupations, m))
                    .collect();
                let n = basis.len();
                let mut coeffs = Vec::with_capacity(n * n);
                for x in &basis {
                    for (m, c_in) in basis.iter().zip(&input) {
                        coeffs.push(transition_amplitude(u_out, m, x) * c_in);
                    }
                }
                let occupancy = basis
                    .iter()
                    .flat_map(|m| m.occupations().iter().map(|&k| k as u8))
                    .collect();
                let kernel = Kernel::Fock {
                    photons,
                    occupancy,
                    intermediates: n,
                    coeffs,
                };
                (basis, kernel)
            }
            Probe::Distinguishable { occupations } => {
                let photons = occupations.total();
                let basis = enumerate_fock_basis(d, photons);
                let radix = photons as usize + 1;
                let mut slot = vec![usize::MAX; radix.pow(d as u32)];
                for (k, s) in basis.iter().enumerate() {
                    slot[mixed_radix(s.occupations(), radix)] = k;
                }
                let kernel = Kernel::Distinguishable {
                    photons,
                    inputs: occupations.photon_modes(),
                    slot,
                };
                (basis, kernel)
            }
            Probe::Coherent { alpha, mode } => {
                let max_photons = poisson_cutoff(alpha * alpha, tail);
                let outcomes = (0..=max_photons)
                    .flat_map(|n| enumerate_fock_basis(d, n))
                    .collect();
                (
                    outcomes,
                    Kernel::Coherent {
                        alpha: *alpha,
                        mode: *mode,
                    },
                )
            }
        };
        Ok(Self {
            u_in: u_in.clone(),
            u_out: u_out.clone(),
            unknown_modes: unknown_modes.to_vec(),
            fixed_phases,
            outcomes,
            probe: probe.clone(),
            kernel,
        })
    }

    pub fn modes(&self) -> usize {
        self.u_in.dim()
    }

    pub fn outcomes(&self) -> &[FockState] {
        &self.outcomes
    }

    pub fn outcome_count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.unknown_modes.len()
    }

    pub fn unknown_modes(&self) -> &[usize] {
        &self.unknown_modes
    }

    /// Largest total photon number among the outcomes.
    pub fn max_photons(&self) -> u32 {
        self.outcomes.last().map_or(0, FockState::total)
    }

    fn mode_phases(&self, phases: &[f64]) -> Vec<f64> {
        assert_eq!(
            phases.len(),
            self.unknown_modes.len(),
            "unknown phase count"
        );
        let mut theta = self.fixed_phases.clone();
        for (&m, &p) in self.unknown_modes.iter().zip(phases) {
            theta[m] += p;
        }
        theta
    }

    /// Probabilities and gradients at unknown phases `phases`.
    pub fn evaluate(&self, phases: &[f64]) -> Evaluation {
        let mut probs = vec![0.0; self.outcomes.len()];
        let mut grads = vec![0.0; self.outcomes.len() * self.parameter_count()];
        self.fill(phases, &mut probs, Some(&mut grads));
        Evaluation {
            probs,
            grads,
            parameters: self.parameter_count(),
        }
    }

    /// Probabilities only, written into `out` (length [`Self::outcome_count`]).
    pub fn probabilities_into(&self, phases: &[f64], out: &mut [f64]) {
        self.fill(phases, out, None);
    }

    /// Probabilities of the listed outcome indices only, written into `out`.
    pub fn probabilities_of(&self, phases: &[f64], outcomes: &[usize], out: &mut [f64]) {
        if let Kernel::Fock {
            photons,
            occupancy,
            intermediates,
            coeffs,
        } = &self.kernel
        {
            let theta = self.mode_phases(phases);
            let phase = fock_phase_factors(&theta, *photons, occupancy, *intermediates);
            for (p, &x) in out.iter_mut().zip(outcomes) {
                let row = &coeffs[x * intermediates..(x + 1) * intermediates];
                let amp: Complex64 = row.iter().zip(&phase).map(|(c, e)| c * e).sum();
                *p = amp.norm_sqr();
            }
        } else {
            let all = self.probabilities(phases);
            for (p, &x) in out.iter_mut().zip(outcomes) {
                *p = all[x];
            }
        }
    }

    /// Probabilities of `outcomes` on the product grid `axis0 × axis1` of
    /// two unknown phases, at index `(i0 * axis1.len() + i1) * outcomes.len() + k`.
    ///
    /// Fock amplitudes are trigonometric polynomials of degree `N` in each
    /// phase, so the grid is filled one axis at a time.
    pub fn probabilities_on_grid(
        &self,
        axis0: &[f64],
        axis1: &[f64],
        outcomes: &[usize],
    ) -> Vec<f64> {
        assert_eq!(
            self.unknown_modes.len(),
            2,
            "grid evaluation needs two unknown phases"
        );
        let (n0, n1, k) = (axis0.len(), axis1.len(), outcomes.len());
        let mut out = vec![0.0; n0 * n1 * k];
        let Kernel::Fock {
            photons,
            occupancy,
            intermediates,
            coeffs,
        } = &self.kernel
        else {
            let mut probs = vec![0.0; k];
            for (i0, &a) in axis0.iter().enumerate() {
                for (i1, &b) in axis1.iter().enumerate() {
                    self.probabilities_of(&[a, b], outcomes, &mut probs);
                    let at = (i0 * n1 + i1) * k;
                    out[at..at + k].copy_from_slice(&probs);
                }
            }
            return out;
        };
        let d = self.fixed_phases.len();
        let deg = *photons as usize + 1;
        let (u0, u1) = (self.unknown_modes[0], self.unknown_modes[1]);
        let base = fock_phase_factors(&self.fixed_phases, *photons, occupancy, *intermediates);
        let powers = |axis: &[f64]| -> Vec<Complex64> {
            // [n * len + i] = e^(−i n φ_i)
            let mut p = vec![Complex64::new(1.0, 0.0); deg * axis.len()];
            for (i, &phi) in axis.iter().enumerate() {
                let z = Complex64::from_polar(1.0, -phi);
                for n in 1..deg {
                    p[n * axis.len() + i] = p[(n - 1) * axis.len() + i] * z;
                }
            }
            p
        };
        let (e0, e1) = (powers(axis0), powers(axis1));
        let zero = Complex64::new(0.0, 0.0);
        let mut fourier = vec![zero; deg * deg];
        let mut partial = vec![zero; deg * n1];
        let mut line = vec![zero; n1];
        for (slot, &x) in outcomes.iter().enumerate() {
            fourier.iter_mut().for_each(|v| *v = zero);
            let row = &coeffs[x * intermediates..(x + 1) * intermediates];
            for (m, (c, b)) in row.iter().zip(&base).enumerate() {
                let occ = &occupancy[m * d..(m + 1) * d];
                fourier[occ[u0] as usize * deg + occ[u1] as usize] += c * b;
            }
            // partial[a][i1] = Σ_b F[a][b] e^(−i b φ1)
            for a in 0..deg {
                for i1 in 0..n1 {
                    partial[a * n1 + i1] = (0..deg)
                        .map(|b| fourier[a * deg + b] * e1[b * n1 + i1])
                        .sum();
                }
            }
            for i0 in 0..n0 {
                line.iter_mut().for_each(|v| *v = zero);
                for a in 0..deg {
                    let w = e0[a * n0 + i0];
                    for (r, p) in line.iter_mut().zip(&partial[a * n1..(a + 1) * n1]) {
                        *r += w * p;
                    }
                }
                for (i1, amp) in line.iter().enumerate() {
                    out[(i0 * n1 + i1) * k + slot] = amp.norm_sqr();
                }
            }
        }
        out
    }

    pub fn probabilities(&self, phases: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outcomes.len()];
        self.fill(phases, &mut out, None);
        out
    }

    /// Full [`OutcomeDistribution`] record at `phases`.
    pub fn distribution(&self, phases: &[f64]) -> OutcomeDistribution {
        let eval = self.evaluate(phases);
        let n = eval.parameters;
        let known = self
            .fixed_phases
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(m, &p)| (m, p))
            .collect();
        let phases = PhaseConfig::new(
            self.unknown_modes
                .iter()
                .copied()
                .zip(phases.iter().copied())
                .collect(),
            known,
        )
        .expect("layout validated at construction");
        OutcomeDistribution {
            outcomes: self.outcomes.clone(),
            grads: eval
                .grads
                .chunks(n.max(1))
                .map(|c| c[..n].to_vec())
                .collect(),
            probs: eval.probs,
            phases,
        }
    }

    fn fill(&self, phases: &[f64], probs: &mut [f64], grads: Option<&mut [f64]>) {
        let theta = self.mode_phases(phases);
        match &self.kernel {
            Kernel::Fock {
                photons,
                occupancy,
                intermediates,
                coeffs,
            } => self.fill_fock(
                &theta,
                *photons,
                occupancy,
                *intermediates,
                coeffs,
                probs,
                grads,
            ),
            Kernel::Distinguishable {
                photons,
                inputs,
                slot,
            } => self.fill_distinguishable(&theta, *photons, inputs, slot, probs, grads),
            Kernel::Coherent { alpha, mode } => {
                self.fill_coherent(&theta, *alpha, *mode, probs, grads)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn fill_fock(
        &self,
        theta: &[f64],
        photons: u32,
        occupancy: &[u8],
        intermediates: usize,
        coeffs: &[Complex64],
        probs: &mut [f64],
        grads: Option<&mut [f64]>,
    ) {
        let d = theta.len();
        let phase = fock_phase_factors(theta, photons, occupancy, intermediates);
        let params = self.unknown_modes.len();
        match grads {
            None => {
                for (x, p) in probs.iter_mut().enumerate() {
                    let row = &coeffs[x * intermediates..(x + 1) * intermediates];
                    let amp: Complex64 = row.iter().zip(&phase).map(|(c, e)| c * e).sum();
                    *p = amp.norm_sqr();
                }
            }
            Some(grads) => {
                let mut d_amp = vec![Complex64::new(0.0, 0.0); params];
                for (x, p) in probs.iter_mut().enumerate() {
                    let row = &coeffs[x * intermediates..(x + 1) * intermediates];
                    let mut amp = Complex64::new(0.0, 0.0);
                    d_amp.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                    for (m, (c, e)) in row.iter().zip(&phase).enumerate() {
                        let term = c * e;
                        amp += term;
                        let occ = &occupancy[m * d..(m + 1) * d];
                        for (j, &mode) in self.unknown_modes.iter().enumerate() {
                            // ∂/∂φ_j e^(−i n θ) = −i n e^(−i n θ)
                            d_amp[j] += term * Complex64::new(0.0, -f64::from(occ[mode]));
                        }
                    }
                    *p = amp.norm_sqr();
                    for (j, da) in d_amp.iter().enumerate() {
                        grads[x * params + j] = 2.0 * (amp.conj() * da).re;
                    }
                }
            }
        }
    }

    /// Single-photon output amplitudes for a photon entering `input`, and
    /// their derivatives for each unknown phase.
    fn single_photon(&self, theta: &[f64], input: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let d = theta.len();
        let params = self.unknown_modes.len();
        let layer: Vec<Complex64> = theta
            .iter()
            .map(|t| Complex64::from_polar(1.0, -t))
            .collect();
        let mut amps = vec![Complex64::new(0.0, 0.0); d];
        let mut d_amps = vec![Complex64::new(0.0, 0.0); d * params];
        for x in 0..d {
            for (j, l) in layer.iter().enumerate() {
                amps[x] += self.u_out.entry(x, j) * l * self.u_in.entry(j, input);
            }
            for (k, &mode) in self.unknown_modes.iter().enumerate() {
                d_amps[x * params + k] = self.u_out.entry(x, mode)
                    * Complex64::new(0.0, -1.0)
                    * layer[mode]
                    * self.u_in.entry(mode, input);
            }
        }
        (amps, d_amps)
    }

    fn fill_distinguishable(
        &self,
        theta: &[f64],
        photons: u32,
        inputs: &[usize],
        slot: &[usize],
        probs: &mut [f64],
        grads: Option<&mut [f64]>,
    ) {
        let d = theta.len();
        let params = self.unknown_modes.len();
        let radix = photons as usize + 1;
        let size = slot.len();
        let strides: Vec<usize> = (0..d).map(|k| radix.pow((d - 1 - k) as u32)).collect();
        // dense distributions over partial count vectors
        let mut dist = vec![0.0; size];
        let mut dgrad = vec![0.0; size * params];
        dist[0] = 1.0;
        let mut next = vec![0.0; size];
        let mut next_grad = vec![0.0; size * params];
        for &input in inputs {
            let (amps, d_amps) = self.single_photon(theta, input);
            let q: Vec<f64> = amps.iter().map(Complex64::norm_sqr).collect();
            let dq: Vec<f64> = (0..d * params)
                .map(|i| 2.0 * (amps[i / params].conj() * d_amps[i]).re)
                .collect();
            next.iter_mut().for_each(|v| *v = 0.0);
            next_grad.iter_mut().for_each(|v| *v = 0.0);
            for idx in 0..size {
                let p = dist[idx];
                let g = &dgrad[idx * params..(idx + 1) * params];
                if p == 0.0 && g.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for x in 0..d {
                    // counts never exceed `photons`, so no carry
                    let target = idx + strides[x];
                    if target >= size || (idx / strides[x]) % radix == radix - 1 {
                        continue;
                    }
                    next[target] += p * q[x];
                    for j in 0..params {
                        next_grad[target * params + j] += g[j] * q[x] + p * dq[x * params + j];
                    }
                }
            }
            std::mem::swap(&mut dist, &mut next);
            std::mem::swap(&mut dgrad, &mut next_grad);
        }
        let mut grads = grads;
        for (idx, &k) in slot.iter().enumerate() {
            if k == usize::MAX {
                continue;
            }
            probs[k] = dist[idx];
            if let Some(g) = grads.as_deref_mut() {
                g[k * params..(k + 1) * params]
                    .copy_from_slice(&dgrad[idx * params..(idx + 1) * params]);
            }
        }
    }

    fn fill_coherent(
        &self,
        theta: &[f64],
        alpha: f64,
        mode: usize,
        probs: &mut [f64],
        grads: Option<&mut [f64]>,
    ) {
        let d = theta.len();
        let params = self.unknown_modes.len();
        let (amps, d_amps) = self.single_photon(theta, mode);
        let mean: Vec<f64> = amps.iter().map(|a| alpha * alpha * a.norm_sqr()).collect();
        let d_mean: Vec<f64> = (0..d * params)
            .map(|i| alpha * alpha * 2.0 * (amps[i / params].conj() * d_amps[i]).re)
            .collect();
        let max_n = self.max_photons() as usize;
        // pois[j][n] = e^(−μ_j) μ_j^n / n!
        let pois: Vec<Vec<f64>> = mean
            .iter()
            .map(|&mu| {
                let mut row = Vec::with_capacity(max_n + 1);
                let mut v = (-mu).exp();
                row.push(v);
                for n in 1..=max_n {
                    v *= mu / n as f64;
                    row.push(v);
                }
                row
            })
            .collect();
        let mut grads = grads;
        for (k, outcome) in self.outcomes.iter().enumerate() {
            let occ = outcome.occupations();
            let factors: Vec<f64> = (0..d).map(|j| pois[j][occ[j] as usize]).collect();
            probs[k] = factors.iter().product();
            if let Some(g) = grads.as_deref_mut() {
                for p in 0..params {
                    let mut total = 0.0;
                    for j in 0..d {
                        let n = occ[j] as usize;
                        // d/dμ pois(n, μ) = pois(n−1, μ) − pois(n, μ)
                        let lower = if n == 0 { 0.0 } else { pois[j][n - 1] };
                        let deriv = lower - pois[j][n];
                        let others: f64 = (0..d).filter(|&i| i != j).map(|i| factors[i]).product();
                        total += others * deriv * d_mean[j * params + p];
                    }
                    g[k * params + p] = total;
                }
            }
        }
    }

    /// State between the splitters before the phase layer, one pure state per
    /// photon-number sector with its weight. Fock probes give a single sector;
    /// a coherent probe without phase reference is the Poisson mixture of the
    /// `|N⟩` sectors of its input mode. Distinguishable probes are not pure in
    /// the mode basis and are handled photon by photon, see
    /// [`PhaseModel::single_photon_states`].
    pub fn sector_states(&self) -> Option<Vec<(f64, PureState)>> {
        match &self.probe {
            Probe::Fock { occupations } => {
                Some(vec![(1.0, PureState::after(&self.u_in, occupations))])
            }
            Probe::Distinguishable { .. } => None,
            Probe::Coherent { alpha, mode } => {
                let mu = alpha * alpha;
                let d = self.modes();
                Some(
                    (0..=self.max_photons())
                        .map(|n| {
                            let w = (-mu).exp() * mu.powi(n as i32) / factorial(n);
                            (
                                w,
                                PureState::after(&self.u_in, &FockState::single_mode(d, *mode, n)),
                            )
                        })
                        .collect(),
                )
            }
        }
    }

    /// Single-photon states after `u_in`, one per photon of a distinguishable probe.
    pub fn single_photon_states(&self) -> Option<Vec<PureState>> {
        match &self.kernel {
            Kernel::Distinguishable { inputs, .. } => {
                let d = self.modes();
                Some(
                    inputs
                        .iter()
                        .map(|&q| PureState::after(&self.u_in, &FockState::single_mode(d, q, 1)))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    pub fn u_in(&self) -> &UnitaryMatrix {
        &self.u_in
    }

    pub fn probe(&self) -> &Probe {
        &self.probe
    }
}

/// `e^(−i m·θ)` for every intermediate occupation `m`.
fn fock_phase_factors(
    theta: &[f64],
    photons: u32,
    occupancy: &[u8],
    intermediates: usize,
) -> Vec<Complex64> {
    let d = theta.len();
    let n_pow = photons as usize + 1;
    // powers[k * n_pow + n] = e^(−i n θ_k)
    let mut powers = vec![Complex64::new(1.0, 0.0); d * n_pow];
    for (k, t) in theta.iter().enumerate() {
        let z = Complex64::from_polar(1.0, -t);
        for n in 1..n_pow {
            powers[k * n_pow + n] = powers[k * n_pow + n - 1] * z;
        }
    }
    (0..intermediates)
        .map(|m| {
            occupancy[m * d..(m + 1) * d]
                .iter()
                .enumerate()
                .map(|(k, &n)| powers[k * n_pow + n as usize])
                .product()
        })
        .collect()
}

fn mixed_radix(occ: &[u32], radix: usize) -> usize {
    occ.iter().fold(0, |acc, &n| acc * radix + n as usize)
}

/// Smallest `N` with `P(Poisson(mean) > N) < tail`.
pub fn poisson_cutoff(mean: f64, tail: f64) -> u32 {
    let mut term = (-mean).exp();
    let mut cumulative = term;
    let mut n = 0u32;
    while 1.0 - cumulative >= tail && n < 10_000 {
        n += 1;
        term *= mean / f64::from(n);
        cumulative += term;
        // 1 − cumulative loses precision once the tail is tiny; sum it directly
        if 1.0 - cumulative < 1e-6 {
            let mut rest = 0.0;
            let mut t = term;
            let mut k = n;
            loop {
                k += 1;
                t *= mean / f64::from(k);
                rest += t;
                if t < rest * 1e-17 || t == 0.0 {
                    break;
                }
            }
            if rest < tail {
                return n;
            }
        }
    }
    n
}

/// Pure state on one photon-number sector, amplitudes over
/// [`enumerate_fock_basis`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    pub basis: Vec<FockState>,
    pub amplitudes: Vec<Complex64>,
}

impl PureState {
    /// `Û|input⟩`.
    pub fn after(u: &UnitaryMatrix, input: &FockState) -> Self {
        let basis = enumerate_fock_basis(u.dim(), input.total());
        let amplitudes = basis
            .iter()
            .map(|m| transition_amplitude(u, input, m))
            .collect();
        Self { basis, amplitudes }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum()
    }
}

/// Distribution of a Fock or distinguishable probe through
/// `u_out · phase_layer(config) · u_in`.
pub fn outcome_distribution(
    u_in: &UnitaryMatrix,
    config: &PhaseConfig,
    u_out: &UnitaryMatrix,
    probe: &Probe,
) -> Result<OutcomeDistribution, EvolutionError> {
    if matches!(probe, Probe::Coherent { .. }) {
        return Err(EvolutionError::CoherentProbe);
    }
    distribution_for(u_in, config, u_out, probe)
}

/// Photon-counting distribution of a coherent probe, truncated at total
/// photon number [`poisson_cutoff`]`(α², COHERENT_TAIL)`.
pub fn coherent_distribution(
    u_in: &UnitaryMatrix,
    config: &PhaseConfig,
    u_out: &UnitaryMatrix,
    probe: &Probe,
) -> Result<OutcomeDistribution, EvolutionError> {
    if !matches!(probe, Probe::Coherent { .. }) {
        return Err(EvolutionError::NotCoherent);
    }
    distribution_for(u_in, config, u_out, probe)
}

fn distribution_for(
    u_in: &UnitaryMatrix,
    config: &PhaseConfig,
    u_out: &UnitaryMatrix,
    probe: &Probe,
) -> Result<OutcomeDistribution, EvolutionError> {
    let model = PhaseModel::new(
        u_in,
        u_out,
        probe,
        &config.unknown_modes(),
        config.control(),
    )?;
    let mut dist = model.distribution(&config.unknown_values());
    dist.phases = config.clone();
    Ok(dist)
}

/// Dense `[output, input]` single-photon transfer matrix, mostly for tests.
pub fn composed_matrix(
    u_in: &UnitaryMatrix,
    config: &PhaseConfig,
    u_out: &UnitaryMatrix,
) -> DMatrix<Complex64> {
    crate::optics::compose_interferometer(u_in, config, u_out)
        .expect("consistent dimensions")
        .matrix()
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{multiport_unitary, MultiportKind};

    fn tritter() -> UnitaryMatrix {
        multiport_unitary(3, MultiportKind::Tritter).unwrap()
    }

    fn cfg(p1: f64, p2: f64) -> PhaseConfig {
        PhaseConfig::new(vec![(0, p1), (1, p2)], vec![]).unwrap()
    }

    #[test]
    fn fock_distribution_is_normalized_at_zero_phase() {
        let t = tritter();
        let dist =
            outcome_distribution(&t, &cfg(0.0, 0.0), &t, &Probe::fock(vec![1, 1, 1])).unwrap();
        assert_eq!(dist.outcomes.len(), 10);
        assert!((dist.total_probability() - 1.0).abs() < 1e-12);
        assert!(dist.gradient_sums().iter().all(|s| s.abs() < 1e-12));
        assert!(dist.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn fock_probabilities_match_composed_permanents() {
        let t = tritter();
        let config = cfg(0.892, 2.19);
        let u = UnitaryMatrix::new(composed_matrix(&t, &config, &t)).unwrap();
        let dist = outcome_distribution(&t, &config, &t, &Probe::fock(vec![1, 1, 1])).unwrap();
        let input = FockState::ones(3);
        for (x, p) in dist.outcomes.iter().zip(&dist.probs) {
            assert!((transition_amplitude(&u, &input, x).norm_sqr() - p).abs() < 1e-13);
        }
    }

    #[test]
    fn coherent_probe_rejected_by_fock_path() {
        let t = tritter();
        let probe = Probe::coherent(3f64.sqrt(), 0);
        assert_eq!(
            outcome_distribution(&t, &cfg(0.1, 0.2), &t, &probe),
            Err(EvolutionError::CoherentProbe)
        );
        assert_eq!(
            coherent_distribution(&t, &cfg(0.1, 0.2), &t, &Probe::fock(vec![1, 1, 1])),
            Err(EvolutionError::NotCoherent)
        );
    }

    #[test]
    fn coherent_through_identity_is_poisson() {
        let id = UnitaryMatrix::identity(3);
        let probe = Probe::coherent(3f64.sqrt(), 0);
        let dist = coherent_distribution(&id, &cfg(0.4, 1.3), &id, &probe).unwrap();
        for (x, p) in dist.outcomes.iter().zip(&dist.probs) {
            let occ = x.occupations();
            let want = if occ[1] == 0 && occ[2] == 0 {
                (-3.0f64).exp() * 3f64.powi(occ[0] as i32) / factorial(occ[0])
            } else {
                0.0
            };
            assert!((p - want).abs() < 1e-15, "{x}: {p} vs {want}");
        }
        assert!((dist.total_probability() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn poisson_cutoffs() {
        assert_eq!(poisson_cutoff(3.0, 1e-8), 17);
        assert_eq!(poisson_cutoff(4.0, 1e-8), 20);
        assert_eq!(poisson_cutoff(3.0, 1e-12), 22);
        assert_eq!(poisson_cutoff(4.0, 1e-12), 25);
    }

    #[test]
    fn invalid_probes() {
        let t = tritter();
        assert!(matches!(
            outcome_distribution(&t, &cfg(0.0, 0.0), &t, &Probe::fock(vec![0, 0, 0])),
            Err(EvolutionError::InvalidProbe(_))
        ));
        assert!(matches!(
            outcome_distribution(&t, &cfg(0.0, 0.0), &t, &Probe::fock(vec![1, 1])),
            Err(EvolutionError::InvalidProbe(_))
        ));
        assert!(matches!(
            coherent_distribution(&t, &cfg(0.0, 0.0), &t, &Probe::coherent(0.0, 0)),
            Err(EvolutionError::InvalidProbe(_))
        ));
        assert!(matches!(
            coherent_distribution(&t, &cfg(0.0, 0.0), &t, &Probe::coherent(1.0, 5)),
            Err(EvolutionError::InvalidProbe(_))
        ));
    }

    #[test]
    fn distinguishable_single_photon_matches_fock() {
        let t = tritter();
        let a = outcome_distribution(&t, &cfg(0.3, 1.1), &t, &Probe::fock(vec![0, 1, 0])).unwrap();
        let b = outcome_distribution(
            &t,
            &cfg(0.3, 1.1),
            &t,
            &Probe::distinguishable(vec![0, 1, 0]),
        )
        .unwrap();
        for k in 0..a.probs.len() {
            assert!((a.probs[k] - b.probs[k]).abs() < 1e-14);
            for j in 0..2 {
                assert!((a.grads[k][j] - b.grads[k][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn known_phases_shift_the_unknowns() {
        let t = tritter();
        let probe = Probe::fock(vec![1, 1, 1]);
        let shifted = PhaseModel::new(&t, &t, &probe, &[0, 1], &[(0, 0.25), (1, -0.5)]).unwrap();
        let plain = PhaseModel::new(&t, &t, &probe, &[0, 1], &[]).unwrap();
        let a = shifted.probabilities(&[1.0, 2.0]);
        let b = plain.probabilities(&[1.25, 1.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let t = tritter();
        let q = multiport_unitary(4, MultiportKind::Quarter).unwrap();
        let axis0 = [0.0, 0.7, 3.0];
        let axis1 = [5.9, 1.1];
        for (u, probe, known) in [
            (&t, Probe::fock(vec![1, 1, 1]), vec![(0, 0.3), (1, -1.2)]),
            (&q, Probe::fock(vec![1, 1, 1, 1]), vec![(2, 0.01)]),
            (&q, Probe::fock(vec![2, 0, 1, 0]), vec![]),
            (&t, Probe::distinguishable(vec![1, 1, 1]), vec![(1, 0.4)]),
        ] {
            let model = PhaseModel::new(u, u, &probe, &[0, 1], &known).unwrap();
            let picked = [0, 3, model.outcome_count() - 1];
            let grid = model.probabilities_on_grid(&axis0, &axis1, &picked);
            for (i0, a) in axis0.iter().enumerate() {
                for (i1, b) in axis1.iter().enumerate() {
                    let p = model.probabilities(&[*a, *b]);
                    for (k, &x) in picked.iter().enumerate() {
                        assert!((grid[(i0 * 2 + i1) * 3 + k] - p[x]).abs() < 1e-13);
                    }
                }
            }
        }
    }
}
