//! The four-arm adaptive protocol at a sweep of true phases, compared with
//! the working-point bound and the quantum limit.
//!
//! cargo run --release --example adaptive_four_mode -- [repetitions]

use mmzi::protocol::{monte_carlo, AdaptiveConfig, FOUR_MODE_BOUND, FOUR_MODE_QCRB};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(200);
    println!("bound {FOUR_MODE_BOUND}, quantum limit {FOUR_MODE_QCRB}, p = {reps}");
    for phi1 in [0.5, 1.5, 2.5, 3.5, 4.5] {
        let truth = [phi1, 2.0];
        let run = monte_carlo(
            &AdaptiveConfig::four_mode(truth, 0.01, 10_000),
            reps,
            42,
            FOUR_MODE_BOUND,
        )?;
        let s = &run.stats;
        println!(
            "truth ({phi1}, 2.0): std*sqrt(nu) = ({:.3}, {:.3})  bias*sqrt(nu) = ({:+.3}, {:+.3})",
            s.std_sqrt_nu[0],
            s.std_sqrt_nu[1],
            s.bias[0] * (s.nu as f64).sqrt(),
            s.bias[1] * (s.nu as f64).sqrt()
        );
    }
    Ok(())
}
