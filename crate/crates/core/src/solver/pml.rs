//! Complex coordinate stretching for the absorbing frame.

use num_complex::Complex64;

use crate::domain::SimulationDomain;

/// Amplitude reflection the layer is designed for at normal incidence.
pub const DESIGN_REFLECTION: f64 = 1e-7;

/// Stretch factors along both axes at cell centres and at faces.
#[derive(Debug, Clone)]
pub struct Stretch {
    /// `sx` at cell centres `i`.
    pub x_center: Vec<Complex64>,
    /// `sx` at faces `i + 1/2`, length `nx - 1`.
    pub x_face: Vec<Complex64>,
    pub y_center: Vec<Complex64>,
    pub y_face: Vec<Complex64>,
}

fn profile(n: usize, layer: usize, strength: f64, pos: f64) -> Complex64 {
    if layer == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let l = layer as f64;
    let inner_lo = l - 0.5;
    let inner_hi = n as f64 - l - 0.5;
    let depth = if pos < inner_lo {
        inner_lo - pos
    } else if pos > inner_hi {
        pos - inner_hi
    } else {
        0.0
    };
    let t = depth / l;
    Complex64::new(1.0, strength * t * t)
}

impl Stretch {
    /// Quadratically graded stretching for angular frequency `omega`.
    pub fn new(domain: &SimulationDomain, omega: f64) -> Self {
        let layer = domain.pml_cells;
        let k = omega / domain.material.c_air;
        let strength = if layer == 0 {
            0.0
        } else {
            3.0 * (1.0 / DESIGN_REFLECTION).ln() / (2.0 * k * domain.h * layer as f64)
        };
        let axis = |n: usize| {
            let c = (0..n).map(|i| profile(n, layer, strength, i as f64)).collect();
            let f = (0..n.saturating_sub(1))
                .map(|i| profile(n, layer, strength, i as f64 + 0.5))
                .collect();
            (c, f)
        };
        let (x_center, x_face) = axis(domain.nx);
        let (y_center, y_face) = axis(domain.ny);
        Self {
            x_center,
            x_face,
            y_center,
            y_face,
        }
    }
}
