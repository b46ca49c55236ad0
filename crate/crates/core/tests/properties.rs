mod common;

use common::*;
use mmzi::evolution::{composed_matrix, Probe};
use mmzi::fisher::{
    fisher_at, invert_fisher, qfim_for_model, FisherInverse, FisherKind, FisherMatrix,
    SINGULAR_CONDITION,
};
use mmzi::fock::{enumerate_fock_basis, permanent, transition_amplitude, FockState};
use mmzi::interferometer::Circuit;
use mmzi::landscape::point_metrics;
use mmzi::optics::{
    compose_interferometer, multiport_unitary, phase_layer, MultiportKind, PhaseConfig,
    UnitaryMatrix,
};
use mmzi::protocol::{run_adaptive, AdaptiveConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

fn phase() -> impl Strategy<Value = f64> {
    0.0..TAU
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(100)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn permanent_matches_naive_expansion(n in 1usize..=5, seed in any::<u64>()) {
        let m = random_matrix(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let fast = permanent(&m).unwrap();
        let slow = naive_permanent(&m);
        prop_assert!((fast - slow).norm() < 1e-10 * (1.0 + slow.norm()), "{fast} vs {slow}");
    }

    #[test]
    fn amplitudes_match_creation_operators(
        occ in prop_oneof![
            prop::collection::vec(0u32..=2, 3),
            prop::collection::vec(0u32..=2, 4),
        ],
        seed in any::<u64>(),
    ) {
        let d = occ.len();
        let u = random_unitary(d, &mut ChaCha8Rng::seed_from_u64(seed));
        let uu = UnitaryMatrix::new(u.clone()).unwrap();
        let input = FockState::new(occ.clone());
        let oracle = creation_operator_state(&u, &occ);
        let n: u32 = occ.iter().sum();
        let mut total = 0.0;
        for out in enumerate_fock_basis(d, n) {
            let a = transition_amplitude(&uu, &input, &out);
            let want = oracle.get(out.occupations()).copied().unwrap_or_default();
            prop_assert!((a - want).norm() < 1e-10, "{out:?}: {a} vs {want}");
            total += a.norm_sqr();
        }
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn distinguishable_matches_brute_force(p1 in phase(), p2 in phase()) {
        let c = Circuit::three_mode();
        for occ in [vec![1, 1, 1], vec![2, 0, 1], vec![3, 0, 0]] {
            let m = c.model(&Probe::distinguishable(occ.clone())).unwrap();
            let cfg = PhaseConfig::new(vec![(0, p1), (1, p2)], vec![]).unwrap();
            let a = composed_matrix(&c.u_in, &cfg, &c.u_out);
            let inputs: Vec<usize> = occ.iter().enumerate().flat_map(|(q, &n)| std::iter::repeat_n(q, n as usize)).collect();
            let oracle = brute_force_distinguishable(&a, &inputs);
            let probs = m.probabilities(&[p1, p2]);
            for (x, out) in m.outcomes().iter().enumerate() {
                let want = oracle.get(out.occupations()).copied().unwrap_or(0.0);
                prop_assert!((probs[x] - want).abs() < 1e-12, "{out:?}");
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_gradients_to_zero(p1 in phase(), p2 in phase()) {
        for (name, m) in models() {
            let d = m.distribution(&[p1, p2]);
            prop_assert!((d.total_probability() - 1.0).abs() < 1e-10, "{name}: {}", d.total_probability());
            for s in d.gradient_sums() {
                prop_assert!(s.abs() < 1e-10, "{name}: {s}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences(p1 in phase(), p2 in phase()) {
        for (name, m) in models() {
            let e = gradient_error(&m, &[p1, p2], 1e-5);
            prop_assert!(e < 1e-6, "{name}: relative error {e}");
        }
    }

    #[test]
    fn cauchy_schwarz_and_quantum_bounds(p1 in phase(), p2 in phase()) {
        for (name, m) in models() {
            let f = fisher_at(&m, &[p1, p2]).unwrap();
            if let FisherInverse::Regular(inv) = invert_fisher(&f, SINGULAR_CONDITION) {
                for j in 0..2 {
                    prop_assert!(inv[(j, j)] * f.get(j, j) >= 1.0 - 1e-9, "{name}");
                }
            }
            let fq = qfim_for_model(&m).unwrap();
            for j in 0..2 {
                prop_assert!(f.get(j, j) <= fq.get(j, j) + 1e-9, "{name}");
            }
            let gap = SymmetricEigen::new(&fq.entries - &f.entries).eigenvalues.min();
            prop_assert!(gap >= -1e-9, "{name}: {gap}");
        }
    }

    #[test]
    fn trace_never_beats_the_quantum_limit(p1 in phase(), p2 in phase()) {
        for (name, m) in models() {
            let limit = invert_fisher(&qfim_for_model(&m).unwrap(), SINGULAR_CONDITION).trace().unwrap();
            if let Some(t) = point_metrics(&m, [p1, p2], SINGULAR_CONDITION).tr_finv {
                prop_assert!(t >= limit - 1e-9, "{name}: {t} < {limit}");
            }
        }
    }

    #[test]
    fn three_mode_landscape_is_swap_symmetric(p1 in phase(), p2 in phase()) {
        let c = Circuit::three_mode();
        let m = c.model(&c.single_photon_probe()).unwrap();
        let a = point_metrics(&m, [p1, p2], SINGULAR_CONDITION);
        let b = point_metrics(&m, [p2, p1], SINGULAR_CONDITION);
        prop_assert_eq!(a.singular, b.singular);
        if let (Some(ta), Some(tb)) = (a.tr_finv, b.tr_finv) {
            let tol = 1e-9 * (1.0 + ta.abs());
            prop_assert!((ta - tb).abs() < tol);
            prop_assert!((a.finv11.unwrap() - b.finv22.unwrap()).abs() < tol);
            prop_assert!((a.finv22.unwrap() - b.finv11.unwrap()).abs() < tol);
        }
    }

    #[test]
    fn only_mode_phase_sums_matter(p1 in phase(), p2 in phase(), x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let t = multiport_unitary(3, MultiportKind::Tritter).unwrap();
        let a = PhaseConfig::new(vec![(0, p1), (1, p2)], vec![(0, 0.3), (1, -0.7)]).unwrap();
        let b = PhaseConfig::new(vec![(0, p1 + x), (1, p2 + y)], vec![(0, 0.3 - x), (1, -0.7 - y)]).unwrap();
        let ua = compose_interferometer(&t, &a, &t).unwrap();
        let ub = compose_interferometer(&t, &b, &t).unwrap();
        prop_assert!((ua.matrix() - ub.matrix()).norm() < 1e-12);
        prop_assert!(ua.defect() < 1e-12);
    }

    #[test]
    fn composition_is_associative(seed in any::<u64>(), p1 in phase(), p2 in phase()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = UnitaryMatrix::new(random_unitary(4, &mut rng)).unwrap();
        let b = UnitaryMatrix::new(random_unitary(4, &mut rng)).unwrap();
        let cfg = PhaseConfig::new(vec![(0, p1), (2, p2)], vec![]).unwrap();
        let layer = phase_layer(4, &cfg).unwrap();
        let composed = compose_interferometer(&a, &cfg, &b).unwrap();
        let by_hand = b.then_after(&layer.then_after(&a).unwrap()).unwrap();
        prop_assert!((composed.matrix() - by_hand.matrix()).norm() < 1e-12);
        // layers on disjoint modes commute
        let other = phase_layer(4, &PhaseConfig::new(vec![(1, p2), (3, p1)], vec![]).unwrap()).unwrap();
        let ab = layer.then_after(&other).unwrap();
        let ba = other.then_after(&layer).unwrap();
        prop_assert!((ab.matrix() - ba.matrix()).norm() < 1e-12);
    }

    #[test]
    fn scalar_fim_saturates_the_chain(c in 1e-3..1e3f64, n in 1usize..=4) {
        let f = FisherMatrix::new(FisherKind::Classical, DMatrix::identity(n, n) * c);
        let inv = invert_fisher(&f, SINGULAR_CONDITION);
        let inv = inv.matrix().unwrap();
        for j in 0..n {
            prop_assert!((inv[(j, j)] * f.get(j, j) - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_spend_exactly_nu_and_stay_wrapped(
        nu in 500u64..4000,
        seed in any::<u64>(),
        p1 in phase(),
        p2 in phase(),
        four in any::<bool>(),
    ) {
        let c = if four {
            AdaptiveConfig::four_mode([p1, p2], 0.01, nu)
        } else {
            AdaptiveConfig::three_mode([p1, p2], nu)
        };
        let t = run_adaptive(&c, seed).unwrap();
        prop_assert_eq!(t.total_shots(), nu);
        prop_assert!(t.estimate.iter().all(|e| (0.0..TAU).contains(e)));
        prop_assert!(t.sigma.iter().all(|s| *s > 0.0 && s.is_finite()));
        prop_assert_eq!(&t, &run_adaptive(&c, seed).unwrap());
    }
}

#[test]
fn variance_bounds_the_qfim_and_products_add() {
    for (name, c, probe) in probes() {
        let m = c.model(&probe).unwrap();
        let fq = qfim_for_model(&m).unwrap();
        let var = number_variances(c.u_in.matrix(), &probe, &c.unknown_modes);
        for (j, v) in var.iter().enumerate() {
            assert!(
                fq.get(j, j) <= 4.0 * v + 1e-9,
                "{name}: {} > 4 * {v}",
                fq.get(j, j)
            );
        }
        if let Probe::Distinguishable { occupations } = &probe {
            let want =
                distinguishable_qfim(c.u_in.matrix(), occupations.occupations(), &c.unknown_modes);
            assert!((&fq.entries - want).norm() < 1e-10, "{name}");
        }
    }
}
