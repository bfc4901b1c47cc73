//! Frequency-adapted coefficients of the compact nine-point stencil.
//!
//! The stiffness operator is `Dxx (1 + beta dyy) + Dyy (1 + beta dxx)` and the
//! mass operator is `c + d * (sum of the four edge neighbours)` with
//! `c + 4 d = 1`. Both parameters are chosen so that plane waves travelling
//! along an axis or a diagonal have the exact free-space wavenumber.

/// Below this `k h` the closed forms lose precision; the limits are used.
const SMALL_KH: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeCoefficients {
    /// Weight of each cross-link pair in the stiffness operator.
    pub beta: f64,
    /// Mass weight on the diagonal.
    pub mass_center: f64,
    /// Mass weight on each edge neighbour.
    pub mass_edge: f64,
}

impl SchemeCoefficients {
    /// Coefficients for the dimensionless wavenumber `kh = omega h / c`.
    pub fn for_kh(kh: f64) -> Self {
        if kh < SMALL_KH {
            return Self {
                beta: 1.0 / 12.0,
                mass_center: 2.0 / 3.0,
                mass_edge: 1.0 / 12.0,
            };
        }
        let one_minus_cos = 2.0 * (0.5 * kh).sin().powi(2);
        let d = (1.0 - 2.0 * one_minus_cos / (kh * kh)) / (2.0 * one_minus_cos);
        let c = 1.0 - 4.0 * d;
        let s = kh / std::f64::consts::SQRT_2;
        let omc_s = 2.0 * (0.5 * s).sin().powi(2);
        let axis = 4.0 * omc_s;
        let mass = kh * kh * (c + 4.0 * d * s.cos());
        let beta = (axis - mass) / (2.0 * axis * omc_s);
        Self {
            beta,
            mass_center: c,
            mass_edge: d,
        }
    }

    /// Discrete dispersion residual for a plane wave with wavenumber `kh`
    /// travelling at angle `phi` (radians); zero means exact phase speed.
    pub fn dispersion(&self, kh: f64, phi: f64) -> f64 {
        let (kx, ky) = (kh * phi.cos(), kh * phi.sin());
        let dx = 2.0 * (1.0 - kx.cos());
        let dy = 2.0 * (1.0 - ky.cos());
        let stiff = dx + dy - 2.0 * self.beta * dx * dy;
        let mass = kh * kh * (self.mass_center + 2.0 * self.mass_edge * (kx.cos() + ky.cos()));
        stiff - mass
    }
}
