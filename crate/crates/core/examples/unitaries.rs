//! The balanced multiports and the full three- and four-arm interferometers:
//! matrices, unitarity defects and the effect of the phase layer.
//!
//! cargo run --release --example unitaries

use mmzi::interferometer::{Circuit, Q1};
use mmzi::optics::{compose_interferometer, multiport_unitary, MultiportKind, PhaseConfig};

fn show(name: &str, m: &nalgebra::DMatrix<num_complex::Complex64>) {
    println!("{name}:");
    for row in m.row_iter() {
        let cells: Vec<String> = row
            .iter()
            .map(|z| format!("{:+.3}{:+.3}i", z.re, z.im))
            .collect();
        println!("  {}", cells.join("  "));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for kind in [
        MultiportKind::Balanced,
        MultiportKind::Tritter,
        MultiportKind::Quarter,
    ] {
        let u = multiport_unitary(kind.modes(), kind)?;
        show(&format!("{kind:?} (defect {:.1e})", u.defect()), u.matrix());
    }

    let t = multiport_unitary(3, MultiportKind::Tritter)?;
    let phases = PhaseConfig::new(vec![(0, Q1[0]), (1, Q1[1])], vec![])?;
    let u = compose_interferometer(&t, &phases, &t)?;
    show(
        &format!("three-arm interferometer at Q1 (defect {:.1e})", u.defect()),
        u.matrix(),
    );

    let c = Circuit::four_mode(0.01);
    println!(
        "four-arm circuit: unknown modes {:?}, translation copies {:?}",
        c.unknown_modes,
        c.translations()
    );
    Ok(())
}
