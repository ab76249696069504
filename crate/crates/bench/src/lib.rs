//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use extnls_core::{ComplexField, ExteriorGrid, InitialData, ObstacleSpec, SymmetryClass};

/// Unit disk, R_out = 8.
pub fn disk_grid(h: f64) -> Arc<ExteriorGrid> {
    Arc::new(ExteriorGrid::build(&ObstacleSpec::ball(2, 1.0).unwrap(), 8.0, h).unwrap())
}

/// A moving Gaussian next to the obstacle.
pub fn bump(grid: &Arc<ExteriorGrid>) -> ComplexField {
    InitialData::GaussianBump { amplitude: 1.5, center: vec![1.8, 0.6], widths: vec![0.5, 0.5], wavevector: vec![1.0, -0.5] }
        .build(grid.clone(), &SymmetryClass::none(), None)
        .unwrap()
}
