use crate::domain::DensityField;
use crate::error::{Error, Result};
use crate::scalar::Real;

fn check(beta: f64, eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("projection threshold {eta} not in (0, 1)")));
    }
    if !(beta.is_finite() && beta >= 1.0) {
        return Err(Error::InvalidArgument(format!("projection sharpness {beta} must be >= 1")));
    }
    Ok(())
}

/// Smoothed Heaviside threshold at `eta` with sharpness `beta`.
#[inline]
pub fn project<T: Real>(x: T, beta: T, eta: T) -> T {
    let a = (beta * eta).tanh();
    let den = a + (beta * (T::one() - eta)).tanh();
    (a + (beta * (x - eta)).tanh()) / den
}

/// d project / dx.
#[inline]
pub fn project_derivative<T: Real>(x: T, beta: T, eta: T) -> T {
    let den = (beta * eta).tanh() + (beta * (T::one() - eta)).tanh();
    let t = (beta * (x - eta)).tanh();
    beta * (T::one() - t * t) / den
}

pub fn apply_projection<T: Real>(xi_f: &DensityField<T>, beta: f64, eta: f64) -> Result<DensityField<T>> {
    check(beta, eta)?;
    let (b, e) = (T::lit(beta), T::lit(eta));
    let values = xi_f
        .values
        .iter()
        // zero stays exactly zero, which keeps cells outside the mask at air
        .map(|&x| project(x, b, e).max(T::zero()).min(T::one()))
        .collect();
    Ok(DensityField {
        nx: xi_f.nx,
        ny: xi_f.ny,
        values,
    })
}
