//! Landscape grids survive a round trip through both file formats.

use mmzi::fisher::SINGULAR_CONDITION;
use mmzi::interferometer::Circuit;
use mmzi::landscape::{export_grid, import_grid, scan_grid, GridFormat};

#[test]
fn grid_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (c, name) in [
        (Circuit::three_mode(), "three"),
        (Circuit::four_mode(0.01), "four"),
    ] {
        let model = c.model(&c.single_photon_probe()).unwrap();
        let grid = scan_grid(&model, 64, SINGULAR_CONDITION).unwrap();
        for (format, ext) in [(GridFormat::Csv, "csv"), (GridFormat::Json, "json")] {
            let path = dir.path().join(format!("{name}.{ext}"));
            export_grid(&grid, &path, format).unwrap();
            let back = import_grid(&path, format).unwrap();
            assert_eq!(back.resolution, grid.resolution);
            for (a, b) in grid.cells.iter().zip(&back.cells) {
                assert_eq!(a.singular, b.singular);
                let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
                    (Some(x), Some(y)) => (x - y).abs() <= 1e-12 * (1.0 + x.abs()),
                    (None, None) => true,
                    _ => false,
                };
                assert!(
                    close(Some(a.phi1), Some(b.phi1)) && close(Some(a.phi2), Some(b.phi2)),
                    "{name}.{ext}"
                );
                assert!(
                    close(a.tr_finv, b.tr_finv) && close(a.finv11, b.finv11),
                    "{name}.{ext}"
                );
                assert!(
                    close(a.finv22, b.finv22) && close(a.det_f, b.det_f),
                    "{name}.{ext}"
                );
            }
        }
    }
}

#[test]
fn missing_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(import_grid(&dir.path().join("none.csv"), GridFormat::Csv).is_err());
}
