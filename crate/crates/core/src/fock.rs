//! Photon-number basis and multi-photon transition amplitudes.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::UnitaryMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("permanent needs a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("permanent of a {0}x{0} matrix is out of range")]
    TooLarge(usize),
}

/// Occupation numbers `|n_1, ..., n_d⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FockState(Vec<u32>);

impl FockState {
    pub fn new(occupations: Vec<u32>) -> Self {
        Self(occupations)
    }

    /// One photon in every mode.
    pub fn ones(modes: usize) -> Self {
        Self(vec![1; modes])
    }

    /// `photons` photons in `mode`, vacuum elsewhere.
    pub fn single_mode(modes: usize, mode: usize, photons: u32) -> Self {
        let mut occ = vec![0; modes];
        occ[mode] = photons;
        Self(occ)
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn occupations(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, mode: usize) -> u32 {
        self.0[mode]
    }

    /// `Π n_j!`
    pub fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&n| factorial(n)).product()
    }

    /// Mode index of each photon, e.g. `|2,0,1⟩ -> [0, 0, 2]`.
    pub fn photon_modes(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(mode, &n)| std::iter::repeat_n(mode, n as usize))
            .collect()
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (k, n) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// All occupation vectors of `photons` over `modes`, in lexicographically
/// descending order: `|N,0,..⟩` first, `|0,..,N⟩` last.
pub fn enumerate_fock_basis(modes: usize, photons: u32) -> Vec<FockState> {
    fn fill(prefix: &mut Vec<u32>, remaining_modes: usize, photons: u32, out: &mut Vec<FockState>) {
        if remaining_modes == 1 {
            prefix.push(photons);
            out.push(FockState(prefix.clone()));
            prefix.pop();
            return;
        }
        for k in (0..=photons).rev() {
            prefix.push(k);
            fill(prefix, remaining_modes - 1, photons - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if modes == 0 {
        if photons == 0 {
            out.push(FockState(Vec::new()));
        }
        return out;
    }
    fill(&mut Vec::with_capacity(modes), modes, photons, &mut out);
    out
}

/// Number of states in the `photons`-photon sector, `C(N+d−1, d−1)`.
pub fn sector_size(modes: usize, photons: u32) -> usize {
    if modes == 0 {
        return usize::from(photons == 0);
    }
    let (n, k) = (photons as u64 + modes as u64 - 1, modes as u64 - 1);
    let mut c = 1u64;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c as usize
}

/// Matrix permanent by Ryser's formula, visiting column subsets in Gray-code
/// order so each step updates the row sums with a single column.
pub fn permanent(m: &DMatrix<Complex64>) -> Result<Complex64, FockError> {
    if !m.is_square() {
        return Err(FockError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    if n > 30 {
        return Err(FockError::TooLarge(n));
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut previous = 0u64;
    for k in 1..(1u64 << n) {
        let gray = k ^ (k >> 1);
        let col = (gray ^ previous).trailing_zeros() as usize;
        let added = gray & (1 << col) != 0;
        previous = gray;
        for (i, s) in row_sums.iter_mut().enumerate() {
            if added {
                *s += m[(i, col)];
            } else {
                *s -= m[(i, col)];
            }
        }
        let prod: Complex64 = row_sums.iter().product();
        // (−1)^(n − |S|)
        if (n as u32 - gray.count_ones()).is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total)
}

/// `⟨output|Û|input⟩`; zero when photon numbers differ.
///
/// Panics if either state does not have `u.dim()` modes.
pub fn transition_amplitude(u: &UnitaryMatrix, input: &FockState, output: &FockState) -> Complex64 {
    assert_eq!(input.modes(), u.dim(), "input state mode count");
    assert_eq!(output.modes(), u.dim(), "output state mode count");
    if input.total() != output.total() {
        return Complex64::new(0.0, 0.0);
    }
    // all photons in one mode: the permanent collapses to a product
    if let Some(q) = single_occupied(input) {
        let n = input.total();
        let prod: Complex64 = (0..u.dim())
            .map(|j| u.entry(j, q).powu(output.get(j)))
            .product();
        return prod * (factorial(n) / output.factorial_product()).sqrt();
    }
    if let Some(p) = single_occupied(output) {
        let n = output.total();
        let prod: Complex64 = (0..u.dim())
            .map(|k| u.entry(p, k).powu(input.get(k)))
            .product();
        return prod * (factorial(n) / input.factorial_product()).sqrt();
    }
    let rows = output.photon_modes();
    let cols = input.photon_modes();
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |r, c| u.entry(rows[r], cols[c]));
    let perm = permanent(&sub).expect("square by construction");
    perm / (input.factorial_product() * output.factorial_product()).sqrt()
}

fn single_occupied(state: &FockState) -> Option<usize> {
    let mut occupied = state
        .occupations()
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0);
    match (occupied.next(), occupied.next()) {
        (Some((mode, _)), None) => Some(mode),
        _ => None,
    }
}

/// Matrix of `Û` restricted to the `photons`-photon sector, indexed
/// `[output, input]` over [`enumerate_fock_basis`].
pub fn sector_matrix(u: &UnitaryMatrix, photons: u32) -> (Vec<FockState>, DMatrix<Complex64>) {
    let basis = enumerate_fock_basis(u.dim(), photons);
    let n = basis.len();
    let m = DMatrix::from_fn(n, n, |x, s| transition_amplitude(u, &basis[s], &basis[x]));
    (basis, m)
}
