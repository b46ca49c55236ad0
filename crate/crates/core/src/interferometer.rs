//! The two multiarm interferometers studied here: a tritter MZI with two
//! unknown phases, and a quarter MZI with two unknown phases plus a small
//! known phase `φ0` that lifts a degeneracy of the symmetric circuit.

use std::f64::consts::{PI, TAU};

use crate::evolution::{EvolutionError, PhaseModel, Probe};
use crate::optics::{
    multiport_unitary, phase_difference, wrap_phase, MultiportKind, UnitaryMatrix,
};

/// Working points of the three-mode circuit.
pub const Q1: [f64; 2] = [0.892, 2.190];
pub const Q2: [f64; 2] = [2.190, 0.892];
/// Working point of the four-mode circuit.
pub const O1: [f64; 2] = [PI, PI];

/// Mode carrying `φ0` in the four-mode circuit; the last mode is the reference.
pub const PHI0_MODE: usize = 2;

/// Splitters, unknown-phase modes and fixed phases of an MZI.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub u_in: UnitaryMatrix,
    pub u_out: UnitaryMatrix,
    pub unknown_modes: Vec<usize>,
    /// Known phases present in every run, e.g. `φ0`.
    pub fixed: Vec<(usize, f64)>,
}

impl Circuit {
    /// Tritter MZI, unknown phases on modes 0 and 1, mode 2 as reference.
    pub fn three_mode() -> Self {
        let t = multiport_unitary(3, MultiportKind::Tritter).expect("tritter exists");
        Self {
            u_in: t.clone(),
            u_out: t,
            unknown_modes: vec![0, 1],
            fixed: Vec::new(),
        }
    }

    /// Quarter MZI, unknown phases on modes 0 and 1, `φ0` on [`PHI0_MODE`].
    pub fn four_mode(phi0: f64) -> Self {
        let q = multiport_unitary(4, MultiportKind::Quarter).expect("quarter exists");
        Self {
            u_in: q.clone(),
            u_out: q,
            unknown_modes: vec![0, 1],
            fixed: vec![(PHI0_MODE, phi0)],
        }
    }

    /// Preset for a mode count, 3 or 4.
    pub fn for_modes(modes: usize, phi0: f64) -> Option<Self> {
        match modes {
            3 => Some(Self::three_mode()),
            4 => Some(Self::four_mode(phi0)),
            _ => None,
        }
    }

    pub fn modes(&self) -> usize {
        self.u_in.dim()
    }

    /// Phase shifts `t` with `p(x|φ + t) = p(x|φ)` for every `φ` and every
    /// control setting when the probe is `|1,...,1⟩`. No measurement on this
    /// circuit tells `φ` from `φ + t`, so estimates are compared to the truth
    /// modulo these shifts.
    pub fn translations(&self) -> Vec<[f64; 2]> {
        match self.modes() {
            3 => vec![
                [0.0, 0.0],
                [TAU / 3.0, 2.0 * TAU / 3.0],
                [2.0 * TAU / 3.0, TAU / 3.0],
            ],
            4 => vec![[0.0, 0.0], [PI, PI]],
            _ => vec![[0.0, 0.0]],
        }
    }

    /// Search box `[0, a) × [0, b)` holding one representative of every
    /// class of [`Circuit::translations`].
    pub fn fundamental_extent(&self) -> [f64; 2] {
        [TAU / self.translations().len() as f64, TAU]
    }

    /// The copy `estimate + t` closest to `reference`, wrapped to `[0, 2π)`.
    pub fn nearest_copy(&self, estimate: [f64; 2], reference: [f64; 2]) -> [f64; 2] {
        self.translations()
            .iter()
            .map(|t| {
                [
                    wrap_phase(estimate[0] + t[0]),
                    wrap_phase(estimate[1] + t[1]),
                ]
            })
            .min_by(|a, b| distance(*a, reference).total_cmp(&distance(*b, reference)))
            .expect("identity shift always present")
    }

    /// `|1,...,1⟩`.
    pub fn single_photon_probe(&self) -> Probe {
        Probe::fock(vec![1; self.modes()])
    }

    pub fn model(&self, probe: &Probe) -> Result<PhaseModel, EvolutionError> {
        self.model_with_controls(probe, &vec![0.0; self.unknown_modes.len()])
    }

    /// Model with control phases `psi[j]` added on the mode of unknown `j`.
    pub fn model_with_controls(
        &self,
        probe: &Probe,
        psi: &[f64],
    ) -> Result<PhaseModel, EvolutionError> {
        assert_eq!(
            psi.len(),
            self.unknown_modes.len(),
            "one control phase per unknown"
        );
        let mut known = self.fixed.clone();
        known.extend(self.unknown_modes.iter().copied().zip(psi.iter().copied()));
        PhaseModel::new(&self.u_in, &self.u_out, probe, &self.unknown_modes, &known)
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    phase_difference(a[0], b[0]).hypot(phase_difference(a[1], b[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translations_leave_statistics_unchanged() {
        for circuit in [
            Circuit::three_mode(),
            Circuit::four_mode(0.01),
            Circuit::four_mode(0.3),
        ] {
            let probe = circuit.single_photon_probe();
            for psi in [[0.0, 0.0], [0.7, -1.3]] {
                let model = circuit.model_with_controls(&probe, &psi).unwrap();
                for phi in [[0.3, 1.7], [2.9, 5.1], [4.4, 0.2]] {
                    let p = model.probabilities(&phi);
                    for t in circuit.translations() {
                        let q = model.probabilities(&[phi[0] + t[0], phi[1] + t[1]]);
                        let diff = p
                            .iter()
                            .zip(&q)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max);
                        assert!(
                            diff < 1e-13,
                            "{} modes, shift {t:?}: {diff:e}",
                            circuit.modes()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn nearest_copy_picks_the_close_representative() {
        let c = Circuit::four_mode(0.01);
        let got = c.nearest_copy([0.1 + PI, 0.2 + PI], [0.12, 0.18]);
        assert!((got[0] - 0.1).abs() < 1e-12 && (got[1] - 0.2).abs() < 1e-12);
        let c = Circuit::three_mode();
        assert_eq!(c.fundamental_extent()[0], TAU / 3.0);
    }
}
