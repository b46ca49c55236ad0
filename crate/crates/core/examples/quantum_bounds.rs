//! Quantum Fisher bounds for Fock, coherent and distinguishable probes in
//! both circuits, with the separable limit and the witness verdict.
//!
//! cargo run --release --example quantum_bounds

use mmzi::evolution::Probe;
use mmzi::fisher::{
    entanglement_witness, invert_fisher, qfim_for_model, separable_bounds, SeparableBoundSpec,
    SINGULAR_CONDITION,
};
use mmzi::interferometer::Circuit;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cases = [
        (
            "3-mode |1,1,1>",
            Circuit::three_mode(),
            Probe::fock(vec![1, 1, 1]),
        ),
        (
            "3-mode coherent",
            Circuit::three_mode(),
            Probe::coherent(3f64.sqrt(), 0),
        ),
        (
            "3-mode distinguishable",
            Circuit::three_mode(),
            Probe::distinguishable(vec![1, 1, 1]),
        ),
        (
            "4-mode |1,1,1,1>",
            Circuit::four_mode(0.01),
            Probe::fock(vec![1, 1, 1, 1]),
        ),
        (
            "4-mode coherent",
            Circuit::four_mode(0.01),
            Probe::coherent(2.0, 0),
        ),
        (
            "4-mode distinguishable",
            Circuit::four_mode(0.01),
            Probe::distinguishable(vec![1, 1, 1, 1]),
        ),
    ];
    println!(
        "{:<24} {:>12} {:>16} {:>10}",
        "probe", "Tr[F_Q^-1]", "separable min", "entangled"
    );
    for (name, c, probe) in cases {
        let model = c.model(&probe)?;
        let fq = qfim_for_model(&model)?;
        let spec = SeparableBoundSpec::number_operators(probe.mean_photons(), 2)?;
        let tr = invert_fisher(&fq, SINGULAR_CONDITION)
            .trace()
            .ok_or("singular QFIM")?;
        let verdict = entanglement_witness(&fq, &spec)?;
        println!(
            "{name:<24} {tr:>12.6} {:>16.6} {:>10}",
            separable_bounds(&spec).trace_min,
            verdict.entangled()
        );
    }
    Ok(())
}
