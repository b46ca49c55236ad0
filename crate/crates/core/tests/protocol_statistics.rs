//! Monte Carlo checks of the adaptive protocol. Each takes tens of seconds.

use mmzi::protocol::{monte_carlo, AdaptiveConfig, THREE_MODE_BOUND};

/// The spread of the final estimates matches the uncertainty predicted from
/// the Fisher information summed over every step of the run.
#[test]
fn variance_matches_summed_information() {
    let c = AdaptiveConfig::three_mode([1.3, 4.0], 10_000);
    let run = monte_carlo(&c, 1000, 7, THREE_MODE_BOUND).unwrap();
    for j in 0..2 {
        let observed = run.stats.std[j].powi(2);
        let predicted = run.stats.mean_sigma[j].powi(2);
        let ratio = observed / predicted;
        assert!(
            (ratio - 1.0).abs() < 0.15,
            "phase {j}: variance ratio {ratio}"
        );
    }
}

/// Four times the photons halves the spread.
#[test]
fn shot_noise_scaling() {
    let p = 400;
    let truth = [2.5, 2.0];
    let small = monte_carlo(
        &AdaptiveConfig::three_mode(truth, 2500),
        p,
        11,
        THREE_MODE_BOUND,
    )
    .unwrap();
    let large = monte_carlo(
        &AdaptiveConfig::three_mode(truth, 10_000),
        p,
        11,
        THREE_MODE_BOUND,
    )
    .unwrap();
    // each std carries relative error 1/√(2p); allow three standard errors of the ratio
    let tol = 3.0 / (p as f64).sqrt();
    for j in 0..2 {
        let ratio = small.stats.std[j] / large.stats.std[j];
        assert!(
            (ratio / 2.0 - 1.0).abs() < tol,
            "phase {j}: std ratio {ratio}"
        );
    }
}
