//! Scans Tr[F⁻¹] for the three-mode |1,1,1⟩ interferometer and lists the
//! refined working points.
//!
//! cargo run --release --example landscape_scan -- [resolution] [out.csv]

use std::path::PathBuf;
use std::time::Instant;

use mmzi::fisher::SINGULAR_CONDITION;
use mmzi::interferometer::Circuit;
use mmzi::landscape::{export_grid, find_working_points, scan_grid, GridFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let resolution: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(256);
    let out = args.next().map(PathBuf::from);

    let circuit = Circuit::three_mode();
    let model = circuit.model(&circuit.single_photon_probe())?;
    let start = Instant::now();
    let grid = scan_grid(&model, resolution, SINGULAR_CONDITION)?;
    println!("{resolution}x{resolution} grid in {:.1?}", start.elapsed());

    if let Some((v, c)) = grid.min_trace() {
        println!("min Tr[F^-1] = {v:.4} at ({:.3}, {:.3})", c.phi1, c.phi2);
    }
    if let Some((v, c)) = grid.min_finv11() {
        println!("min [F^-1]_11 = {v:.4} at ({:.3}, {:.3})", c.phi1, c.phi2);
    }
    println!("singular cells: {}", grid.singular_count());

    let points = find_working_points(&grid, &model, 1e-6, SINGULAR_CONDITION)?;
    println!("{} local minima, best ten:", points.len());
    for p in points.iter().take(10) {
        println!(
            "  ({:.4}, {:.4})  tr {:.5}  diag ({:.4}, {:.4})",
            p.phases[0], p.phases[1], p.tr_finv, p.finv11, p.finv22
        );
    }

    if let Some(path) = out {
        export_grid(&grid, &path, GridFormat::Csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
