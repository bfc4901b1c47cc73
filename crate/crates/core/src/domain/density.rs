use std::path::Path;

use crate::domain::SimulationDomain;
use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Real;

/// Material density per grid cell: 0 is air, 1 is solid.
///
/// Stored over the whole grid; cells outside the design mask stay at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<T>,
}

impl<T: Real> DensityField<T> {
    pub fn new(nx: usize, ny: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::ShapeMismatch {
                context: "density field",
                expected: nx * ny,
                actual: values.len(),
            });
        }
        let f = Self { nx, ny, values };
        f.check_bounds()?;
        Ok(f)
    }

    pub fn zeros(domain: &SimulationDomain) -> Self {
        Self {
            nx: domain.nx,
            ny: domain.ny,
            values: vec![T::zero(); domain.nx * domain.ny],
        }
    }

    /// Scatters design variables (ordered as `domain.design_cells`) onto the grid.
    pub fn from_design_vars(domain: &SimulationDomain, vars: &[T]) -> Result<Self> {
        if vars.len() != domain.design_cells.len() {
            return Err(Error::ShapeMismatch {
                context: "design variables",
                expected: domain.design_cells.len(),
                actual: vars.len(),
            });
        }
        let mut f = Self::zeros(domain);
        for (&c, &v) in domain.design_cells.iter().zip(vars) {
            f.values[c] = v;
        }
        f.check_bounds()?;
        Ok(f)
    }

    pub fn design_vars(&self, domain: &SimulationDomain) -> Vec<T> {
        domain.design_cells.iter().map(|&c| self.values[c]).collect()
    }

    pub fn check_bounds(&self) -> Result<()> {
        if let Some((i, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::InvalidArgument(format!(
                "density {v} at cell {i} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// Checks the field matches the domain grid and is zero outside the mask.
    pub fn check_domain(&self, domain: &SimulationDomain) -> Result<()> {
        if self.nx != domain.nx || self.ny != domain.ny {
            return Err(Error::ShapeMismatch {
                context: "density field grid",
                expected: domain.nx * domain.ny,
                actual: self.nx * self.ny,
            });
        }
        if let Some(c) = (0..self.values.len())
            .find(|&c| !domain.design_mask[c] && self.values[c] != T::zero())
        {
            return Err(Error::InvalidArgument(format!(
                "density nonzero at cell {c} outside the design region"
            )));
        }
        Ok(())
    }

    /// Binary version: 1 where the value is at least `threshold`.
    pub fn thresholded(&self, threshold: T) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .map(|&v| if v >= threshold { T::one() } else { T::zero() })
                .collect(),
        }
    }

    pub fn solid_cells(&self, threshold: T) -> usize {
        self.values.iter().filter(|&&v| v >= threshold).count()
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let vals: Vec<f64> = self.values.iter().map(|v| v.as_f64()).collect();
        io::write_real_matrix(path, self.nx, self.ny, &vals)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let (nx, ny, vals) = io::read_real_matrix(path)?;
        Self::new(nx, ny, vals.into_iter().map(T::lit).collect())
    }

    /// 8-bit graymap: solid black, air white.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let pix: Vec<u8> = self
            .values
            .iter()
            .map(|v| {
                let g = (T::one() - *v).as_f64().clamp(0.0, 1.0);
                (g * 255.0).round() as u8
            })
            .collect();
        io::write_pgm(path, self.nx, self.ny, &pix)
    }
}
