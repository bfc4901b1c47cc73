use serde::{Deserialize, Serialize};

use crate::domain::DensityField;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum solid-to-air density ratio accepted as a sound-hard material.
pub const MIN_DENSITY_CONTRAST: f64 = 1e3;

/// Air background and effective solid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// kg/m³
    pub rho_air: f64,
    /// m/s
    pub c_air: f64,
    pub rho_solid: f64,
    pub c_solid: f64,
}

impl Default for MaterialModel {
    /// Air at 20 °C; the solid has 10³ times the density and 10⁴ times the
    /// bulk modulus of air.
    fn default() -> Self {
        let rho_air = 1.204;
        let c_air = 343.0;
        Self {
            rho_air,
            c_air,
            rho_solid: 1e3 * rho_air,
            c_solid: c_air * 10f64.sqrt(),
        }
    }
}

/// Optional per-field overrides read from configuration files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialOverrides {
    pub rho_air: Option<f64>,
    pub c_air: Option<f64>,
    pub rho_solid: Option<f64>,
    pub c_solid: Option<f64>,
}

impl MaterialOverrides {
    pub fn resolve(&self) -> Result<MaterialModel> {
        let d = MaterialModel::default();
        let rho_air = self.rho_air.unwrap_or(d.rho_air);
        let c_air = self.c_air.unwrap_or(d.c_air);
        // solid defaults follow the air values so that contrasts are kept
        let m = MaterialModel {
            rho_air,
            c_air,
            rho_solid: self.rho_solid.unwrap_or(1e3 * rho_air),
            c_solid: self.c_solid.unwrap_or(c_air * 10f64.sqrt()),
        };
        m.validate()?;
        Ok(m)
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rho_air, self.c_air, self.rho_solid, self.c_solid];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!(
                "material parameters must be finite and positive, got {self:?}"
            )));
        }
        if self.rho_solid / self.rho_air < MIN_DENSITY_CONTRAST {
            return Err(Error::Config(format!(
                "solid/air density ratio {} is below the sound-hard limit {}",
                self.rho_solid / self.rho_air,
                MIN_DENSITY_CONTRAST
            )));
        }
        Ok(())
    }

    pub fn kappa_air(&self) -> f64 {
        self.rho_air * self.c_air * self.c_air
    }

    pub fn kappa_solid(&self) -> f64 {
        self.rho_solid * self.c_solid * self.c_solid
    }

    /// Inverse density at density-variable value `xi`.
    pub fn inv_rho<T: Real>(&self, xi: T) -> T {
        let a = T::lit(1.0 / self.rho_air);
        let s = T::lit(1.0 / self.rho_solid);
        (T::one() - xi) * a + xi * s
    }

    /// Inverse bulk modulus at density-variable value `xi`.
    pub fn inv_kappa<T: Real>(&self, xi: T) -> T {
        let a = T::lit(1.0 / self.kappa_air());
        let s = T::lit(1.0 / self.kappa_solid());
        (T::one() - xi) * a + xi * s
    }

    /// d(1/ρ)/dξ, constant because the interpolation is linear.
    pub fn inv_rho_slope(&self) -> f64 {
        1.0 / self.rho_solid - 1.0 / self.rho_air
    }

    /// d(1/κ)/dξ.
    pub fn inv_kappa_slope(&self) -> f64 {
        1.0 / self.kappa_solid() - 1.0 / self.kappa_air()
    }
}

/// Per-cell inverse density and inverse bulk modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFields<T> {
    pub inv_rho: Vec<T>,
    pub inv_kappa: Vec<T>,
}

/// Maps physical densities to acoustic coefficients, linearly in 1/ρ and 1/κ.
pub fn interpolate_material<T: Real>(
    xi_projected: &DensityField<T>,
    m: &MaterialModel,
) -> CoefficientFields<T> {
    let inv_rho = xi_projected.values.iter().map(|&x| m.inv_rho(x)).collect();
    let inv_kappa = xi_projected.values.iter().map(|&x| m.inv_kappa(x)).collect();
    CoefficientFields { inv_rho, inv_kappa }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(v: f64) -> DensityField<f64> {
        DensityField::new(3, 2, vec![v; 6]).unwrap()
    }

    #[test]
    fn endpoints_are_exact() {
        let m = MaterialModel::default();
        let air = interpolate_material(&field(0.0), &m);
        assert!(air.inv_rho.iter().all(|&v| v == 1.0 / m.rho_air));
        assert!(air.inv_kappa.iter().all(|&v| v == 1.0 / m.kappa_air()));
        let solid = interpolate_material(&field(1.0), &m);
        assert!(solid.inv_rho.iter().all(|&v| v == 1.0 / m.rho_solid));
        assert!(solid.inv_kappa.iter().all(|&v| v == 1.0 / m.kappa_solid()));
    }

    #[test]
    fn midpoint_is_mean_of_inverses() {
        let m = MaterialModel::default();
        let half = interpolate_material(&field(0.5), &m);
        let r = 0.5 * (1.0 / m.rho_air + 1.0 / m.rho_solid);
        let k = 0.5 * (1.0 / m.kappa_air() + 1.0 / m.kappa_solid());
        assert!((half.inv_rho[0] - r).abs() < 1e-15 * r.abs());
        assert!((half.inv_kappa[0] - k).abs() < 1e-15 * k.abs());
    }

    #[test]
    fn default_contrasts() {
        let m = MaterialModel::default();
        assert!((m.rho_solid / m.rho_air - 1e3).abs() < 1e-9);
        assert!((m.kappa_solid() / m.kappa_air() - 1e4).abs() < 1e-6);
    }

    #[test]
    fn rejects_soft_solid() {
        let o = MaterialOverrides {
            rho_solid: Some(10.0),
            ..Default::default()
        };
        assert!(o.resolve().is_err());
    }

    #[test]
    fn monotone_in_xi() {
        let m = MaterialModel::default();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            let (r, q) = (m.inv_rho(x), m.inv_kappa(x));
            assert!(r < prev.0 && q < prev.1);
            prev = (r, q);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let m = MaterialModel::default();
        let f = DensityField::<f32>::new(1, 1, vec![1.0]).unwrap();
        let c = interpolate_material(&f, &m);
        assert!((c.inv_rho[0] - (1.0 / m.rho_solid) as f32).abs() < 1e-9);
    }
}
