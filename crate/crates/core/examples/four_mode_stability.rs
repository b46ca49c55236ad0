//! Four-mode |1,1,1,1⟩ landscape near O1 = (π, π) and how the singular
//! points around it depend on the control phase φ0.
//!
//! cargo run --release --example four_mode_stability

use mmzi::fisher::SINGULAR_CONDITION;
use mmzi::interferometer::{Circuit, O1};
use mmzi::landscape::{find_working_points, scan_grid, stability_region};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let circuit = Circuit::four_mode(0.001);
    let model = circuit.model(&circuit.single_photon_probe())?;
    let grid = scan_grid(&model, 256, SINGULAR_CONDITION)?;
    let (tr, at) = grid.min_trace().ok_or("all cells singular")?;
    println!(
        "phi0 = 0.001: min Tr[F^-1] = {tr:.4} at ({:.3}, {:.3})",
        at.phi1, at.phi2
    );
    let (d1, _) = grid.min_finv11().ok_or("all cells singular")?;
    let (d2, _) = grid.min_finv22().ok_or("all cells singular")?;
    println!(
        "  min diagonal entries {d1:.4}, {d2:.4}; {} singular cells",
        grid.singular_count()
    );
    for p in find_working_points(&grid, &model, 1e-6, SINGULAR_CONDITION)?
        .iter()
        .take(4)
    {
        println!(
            "  working point ({:.4}, {:.4}) tr {:.5}",
            p.phases[0], p.phases[1], p.tr_finv
        );
    }

    println!("\nsamples in a 0.1 rad disc around O1:");
    for phi0 in [0.001, 0.01, 0.03, 0.1, 0.3] {
        let model = Circuit::four_mode(phi0).model(&circuit.single_photon_probe())?;
        let r = stability_region(&model, O1, 0.1, SINGULAR_CONDITION)?;
        println!(
            "  phi0 = {phi0:<5}  singular {:>4}/{}  min |det F| = {:.3e}",
            r.singular_count, r.samples, r.min_abs_det
        );
    }
    Ok(())
}
