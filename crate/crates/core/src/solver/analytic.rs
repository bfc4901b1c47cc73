//! Closed-form free-field solutions used as validation references.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::domain::MaterialModel;
use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 12.0;

fn series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let (mut j, mut ysum) = (1.0, 0.0);
    let mut term = 1.0;
    let mut harmonic = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        harmonic += 1.0 / kf;
        j += term;
        ysum -= harmonic * term;
        if term.abs() < 1e-18 * j.abs().max(1e-300) && k > 5 {
            break;
        }
    }
    let y = 2.0 / PI * (((0.5 * x).ln() + EULER_GAMMA) * j + ysum);
    (j, y)
}

fn asymptotic(x: f64) -> (f64, f64) {
    // Hankel expansion; |a_k| = prod (2m-1)^2 / (k! 8^k), signs alternate in pairs
    let (mut p, mut q) = (1.0, 0.0);
    let mut a = 1.0;
    let mut xp = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        a *= (2.0 * kf - 1.0).powi(2) / (8.0 * kf);
        xp *= x;
        let t = a / xp;
        if t > last || t < 1e-17 {
            break;
        }
        last = t;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q -= sign * t;
        }
    }
    let chi = x - FRAC_PI_4;
    let amp = (2.0 / (PI * x)).sqrt();
    (
        amp * (p * chi.cos() - q * chi.sin()),
        amp * (p * chi.sin() + q * chi.cos()),
    )
}

/// Bessel functions of order zero `(J0(x), Y0(x))` for `x > 0`.
pub fn bessel_j0_y0(x: f64) -> (f64, f64) {
    if x < SERIES_LIMIT {
        series(x)
    } else {
        asymptotic(x)
    }
}

/// Outgoing Hankel function `H0(1)(x) = J0(x) + i Y0(x)`.
pub fn hankel0(x: f64) -> Complex64 {
    let (j, y) = bessel_j0_y0(x);
    Complex64::new(j, y)
}

/// Free-field pressure at distance `r` from a line source of volume
/// strength `amplitude` (time dependence `exp(-i omega t)`).
pub fn analytic_monopole_2d(
    frequency_hz: f64,
    r: f64,
    medium: &MaterialModel,
    amplitude: Complex64,
) -> Result<Complex64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "monopole field is singular at r = {r}"
        )));
    }
    let omega = 2.0 * PI * frequency_hz;
    let k = omega / medium.c_air;
    Ok(-amplitude * (omega * medium.rho_air / 4.0) * hankel0(k * r))
}

/// Power per unit depth radiated by the same source into free space (W/m).
pub fn free_field_power(frequency_hz: f64, medium: &MaterialModel, amplitude: Complex64) -> f64 {
    let omega = 2.0 * PI * frequency_hz;
    medium.rho_air * omega * amplitude.norm_sqr() / 8.0
}

/// Deviation of a computed free-field solution from the analytic one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticComparison {
    /// Relative L2 error over the cells outside the absorbing layer with
    /// `kr > 2`.
    pub relative_l2: f64,
    /// Largest relative magnitude error at the target-arc samples.
    pub arc_max_relative: f64,
    pub cells: usize,
}

/// Compares `p` (computed with no scatterer) against the outgoing-wave
/// solution for a source of strength `amplitude` at the domain source.
pub fn compare_with_analytic(
    domain: &crate::domain::SimulationDomain,
    p: &super::PressureField,
    amplitude: Complex64,
) -> Result<AnalyticComparison> {
    let f = p.frequency_hz;
    let k = 2.0 * PI * f / domain.material.c_air;
    let (mut num, mut den, mut cells) = (0.0, 0.0, 0);
    for c in 0..domain.unknowns() {
        if domain.in_pml(c) {
            continue;
        }
        let x = domain.cell_center(c);
        let r = (x[0] - domain.source_pos[0]).hypot(x[1] - domain.source_pos[1]);
        if k * r <= 2.0 {
            continue;
        }
        let pa = analytic_monopole_2d(f, r, &domain.material, amplitude)?;
        num += (p.values[c] - pa).norm_sqr();
        den += pa.norm_sqr();
        cells += 1;
    }
    if cells == 0 {
        return Err(Error::InvalidArgument("no cells with kr > 2 outside the absorbing layer".into()));
    }
    let mut arc_max: f64 = 0.0;
    for s in &domain.arc.samples {
        let r = (s.position[0] - domain.source_pos[0]).hypot(s.position[1] - domain.source_pos[1]);
        let pa = analytic_monopole_2d(f, r, &domain.material, amplitude)?;
        let ps: Complex64 = s.stencil.apply(&p.values);
        arc_max = arc_max.max((ps.norm() / pa.norm() - 1.0).abs());
    }
    Ok(AnalyticComparison {
        relative_l2: (num / den).sqrt(),
        arc_max_relative: arc_max,
        cells,
    })
}
