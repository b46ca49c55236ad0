//! Independent oracles shared by the property and acceptance suites. None of
//! them goes through the crate's Fock or Fisher machinery.

#![allow(dead_code)]

use std::collections::HashMap;

use mmzi::evolution::{PhaseModel, Probe};
use mmzi::interferometer::Circuit;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

/// Haar-ish random unitary: Q factor of a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| Complex64::new(gauss(rng), gauss(rng)));
    m.qr().q()
}

pub fn random_matrix<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Permanent by the defining sum over all permutations.
pub fn naive_permanent(m: &DMatrix<Complex64>) -> Complex64 {
    let n = m.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    permute(&mut perm, 0, &mut |p| {
        total += p
            .iter()
            .enumerate()
            .map(|(i, &j)| m[(i, j)])
            .product::<Complex64>();
    });
    total
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// `U|n⟩` by expanding `∏_k (Σ_j U[j,k] a_j†)^(n_k) / √(n_k!)` on the vacuum.
pub fn creation_operator_state(
    u: &DMatrix<Complex64>,
    input: &[u32],
) -> HashMap<Vec<u32>, Complex64> {
    let d = u.nrows();
    let mut state: HashMap<Vec<u32>, Complex64> =
        HashMap::from([(vec![0; d], Complex64::new(1.0, 0.0))]);
    let mut norm = 1.0;
    for (k, &n) in input.iter().enumerate() {
        for c in 0..n {
            norm *= f64::from(c + 1);
            let mut next: HashMap<Vec<u32>, Complex64> = HashMap::new();
            for (occ, amp) in &state {
                for j in 0..d {
                    let mut up = occ.clone();
                    up[j] += 1;
                    *next.entry(up).or_default() += amp * u[(j, k)] * f64::from(occ[j] + 1).sqrt();
                }
            }
            state = next;
        }
    }
    for amp in state.values_mut() {
        *amp /= norm.sqrt();
    }
    state
}

/// Counting distribution of distinguishable photons entering `inputs`
/// (one entry per photon) by summing over every assignment of exits.
pub fn brute_force_distinguishable(
    a: &DMatrix<Complex64>,
    inputs: &[usize],
) -> HashMap<Vec<u32>, f64> {
    let d = a.nrows();
    let n = inputs.len();
    let mut out: HashMap<Vec<u32>, f64> = HashMap::new();
    for code in 0..d.pow(n as u32) {
        let mut occ = vec![0u32; d];
        let mut p = 1.0;
        let mut c = code;
        for &q in inputs {
            let exit = c % d;
            c /= d;
            occ[exit] += 1;
            p *= a[(exit, q)].norm_sqr();
        }
        *out.entry(occ).or_default() += p;
    }
    out
}

/// Photon-number variance of each unknown mode after `u_in`, from first
/// principles: Fock probes via the creation-operator expansion, coherent
/// probes as Poisson light, distinguishable photons as independent Bernoulli
/// trials.
pub fn number_variances(u_in: &DMatrix<Complex64>, probe: &Probe, modes: &[usize]) -> Vec<f64> {
    match probe {
        Probe::Fock { occupations } => {
            let state = creation_operator_state(u_in, occupations.occupations());
            modes
                .iter()
                .map(|&j| {
                    let (m1, m2) = state.iter().fold((0.0, 0.0), |(a, b), (occ, amp)| {
                        let w = amp.norm_sqr();
                        let n = f64::from(occ[j]);
                        (a + w * n, b + w * n * n)
                    });
                    m2 - m1 * m1
                })
                .collect()
        }
        Probe::Coherent { alpha, mode } => modes
            .iter()
            .map(|&j| alpha * alpha * u_in[(j, *mode)].norm_sqr())
            .collect(),
        Probe::Distinguishable { occupations } => modes
            .iter()
            .map(|&j| {
                let mut v = 0.0;
                for (q, &n) in occupations.occupations().iter().enumerate() {
                    let p = u_in[(j, q)].norm_sqr();
                    v += f64::from(n) * p * (1.0 - p);
                }
                v
            })
            .collect(),
    }
}

/// `4 Σ_photons Cov(n_i, n_j)` for independent single photons.
pub fn distinguishable_qfim(
    u_in: &DMatrix<Complex64>,
    occupations: &[u32],
    modes: &[usize],
) -> DMatrix<f64> {
    let k = modes.len();
    let mut f = DMatrix::zeros(k, k);
    for (q, &n) in occupations.iter().enumerate() {
        let p: Vec<f64> = modes.iter().map(|&j| u_in[(j, q)].norm_sqr()).collect();
        for a in 0..k {
            for b in 0..k {
                let cov = if a == b { p[a] } else { 0.0 } - p[a] * p[b];
                f[(a, b)] += 4.0 * f64::from(n) * cov;
            }
        }
    }
    f
}

/// The six probes with tabulated quantum bounds: `|1..1⟩`, coherent light
/// with the same mean photon number, and distinguishable photons, for both
/// circuits.
pub fn probes() -> Vec<(&'static str, Circuit, Probe)> {
    let three = Circuit::three_mode();
    let four = Circuit::four_mode(0.01);
    vec![
        ("3-mode |1,1,1>", three.clone(), Probe::fock(vec![1, 1, 1])),
        (
            "3-mode coherent",
            three.clone(),
            Probe::coherent(3f64.sqrt(), 0),
        ),
        (
            "3-mode distinguishable",
            three,
            Probe::distinguishable(vec![1, 1, 1]),
        ),
        (
            "4-mode |1,1,1,1>",
            four.clone(),
            Probe::fock(vec![1, 1, 1, 1]),
        ),
        ("4-mode coherent", four.clone(), Probe::coherent(2.0, 0)),
        (
            "4-mode distinguishable",
            four,
            Probe::distinguishable(vec![1, 1, 1, 1]),
        ),
    ]
}

pub fn models() -> Vec<(&'static str, PhaseModel)> {
    probes()
        .into_iter()
        .map(|(name, c, p)| (name, c.model(&p).expect("valid probe")))
        .collect()
}

/// `‖∂p − FD‖ / ‖∂p‖` with central differences of step `h`.
pub fn gradient_error(model: &PhaseModel, phases: &[f64], h: f64) -> f64 {
    let eval = model.evaluate(phases);
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..phases.len() {
        let mut up = phases.to_vec();
        let mut down = phases.to_vec();
        up[j] += h;
        down[j] -= h;
        let pu = model.probabilities(&up);
        let pd = model.probabilities(&down);
        for x in 0..eval.probs.len() {
            let fd = (pu[x] - pd[x]) / (2.0 * h);
            let g = eval.grad(x)[j];
            num += (g - fd).powi(2);
            den += g * g;
        }
    }
    (num / den).sqrt()
}
