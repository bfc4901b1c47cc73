use crate::domain::{DensityField, SimulationDomain};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Normalized cone-weighted averaging over the design cells.
///
/// Stored as a row-normalized sparse matrix acting on design variables;
/// cells outside the mask never contribute.
#[derive(Debug, Clone)]
pub struct DensityFilter<T> {
    rows: Vec<Vec<(usize, T)>>,
    radius_cells: f64,
}

impl<T: Real> DensityFilter<T> {
    /// `radius` in metres; must be at least one cell.
    pub fn new(domain: &SimulationDomain, radius: f64) -> Result<Self> {
        if !(radius >= domain.h * (1.0 - 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "filter radius {radius} m is smaller than the cell size {} m",
                domain.h
            )));
        }
        let r = radius / domain.h;
        let reach = r.floor() as i64;
        // design-variable index of every grid cell
        let mut slot = vec![usize::MAX; domain.nx * domain.ny];
        for (k, &c) in domain.design_cells.iter().enumerate() {
            slot[c] = k;
        }
        let rows = domain
            .design_cells
            .iter()
            .map(|&c| {
                let (i, j) = domain.ij(c);
                let mut row = Vec::new();
                let mut total = 0.0;
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        let (ii, jj) = (i as i64 + di, j as i64 + dj);
                        if ii < 0 || jj < 0 || ii >= domain.nx as i64 || jj >= domain.ny as i64 {
                            continue;
                        }
                        let w = r - (di as f64).hypot(dj as f64);
                        if w <= 0.0 {
                            continue;
                        }
                        let k = slot[ii as usize + domain.nx * jj as usize];
                        if k != usize::MAX {
                            row.push((k, w));
                            total += w;
                        }
                    }
                }
                row.into_iter().map(|(k, w)| (k, T::lit(w / total))).collect()
            })
            .collect();
        Ok(Self { rows, radius_cells: r })
    }

    pub fn radius_cells(&self) -> f64 {
        self.radius_cells
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows.len());
        self.rows
            .iter()
            .map(|row| row.iter().fold(T::zero(), |acc, &(k, w)| acc + w * x[k]))
            .collect()
    }

    /// Transposed filter, used to pull gradients back to raw variables.
    pub fn apply_transpose(&self, g: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows.len()];
        for (row, &gi) in self.rows.iter().zip(g) {
            for &(k, w) in row {
                out[k] += w * gi;
            }
        }
        out
    }
}

/// Filters a full-grid density field with a cone of the given radius (m).
pub fn apply_filter<T: Real>(
    domain: &SimulationDomain,
    xi: &DensityField<T>,
    radius: f64,
) -> Result<DensityField<T>> {
    xi.check_domain(domain)?;
    let f = DensityFilter::new(domain, radius)?;
    let vars = f.apply(&xi.design_vars(domain));
    DensityField::from_design_vars(domain, &vars.into_iter().map(|v| v.min(T::one()).max(T::zero())).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, tests::small_config};
    use proptest::prelude::*;

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut x = seed;
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    /// Direct double loop over every pair of design cells.
    fn brute_force(domain: &SimulationDomain, x: &[f64], r_cells: f64) -> Vec<f64> {
        let cells = &domain.design_cells;
        cells
            .iter()
            .map(|&a| {
                let (ia, ja) = domain.ij(a);
                let (mut num, mut den) = (0.0, 0.0);
                for (k, &b) in cells.iter().enumerate() {
                    let (ib, jb) = domain.ij(b);
                    let d = (ia as f64 - ib as f64).hypot(ja as f64 - jb as f64);
                    let w = (r_cells - d).max(0.0);
                    num += w * x[k];
                    den += w;
                }
                num / den
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_convolution() {
        let d = build_domain(&small_config()).unwrap();
        let x = lcg(7, d.design_cells.len());
        let f = DensityFilter::<f64>::new(&d, 3.0 * d.h).unwrap();
        let fast = f.apply(&x);
        let slow = brute_force(&d, &x, 3.0);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_is_fixed_point() {
        let d = build_domain(&small_config()).unwrap();
        let f = DensityFilter::<f64>::new(&d, 3.0 * d.h).unwrap();
        let y = f.apply(&vec![0.3; d.design_cells.len()]);
        assert!(y.iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn spike_spreads_and_keeps_mass() {
        let mut c = small_config();
        c.source_xy_m = [0.0, -0.016];
        c.source_clearance_cells = 0.0;
        let d = build_domain(&c).unwrap();
        let n = d.design_cells.len();
        let f = DensityFilter::<f64>::new(&d, 2.0 * d.h).unwrap();
        // spike in the middle, away from the mask boundary
        let k = n / 2;
        let mut x = vec![0.0; n];
        x[k] = 1.0;
        let y = f.apply(&x);
        assert!(y[k] < 1.0 && y[k] > 0.0);
        // interior rows share one normalization, so the output mass is conserved
        let total: f64 = y.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radius_below_cell_rejected() {
        let d = build_domain(&small_config()).unwrap();
        assert!(DensityFilter::<f64>::new(&d, 0.5 * d.h).is_err());
    }

    #[test]
    fn transpose_is_adjoint() {
        let d = build_domain(&small_config()).unwrap();
        let n = d.design_cells.len();
        let f = DensityFilter::<f64>::new(&d, 2.5 * d.h).unwrap();
        let (x, y) = (lcg(1, n), lcg(2, n));
        let lhs: f64 = f.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(f.apply_transpose(&y)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
    }

    #[test]
    fn full_grid_wrapper_keeps_outside_zero() {
        let d = build_domain(&small_config()).unwrap();
        let x = DensityField::from_design_vars(&d, &lcg(3, d.design_cells.len())).unwrap();
        let y = apply_filter(&d, &x, 2.0 * d.h).unwrap();
        y.check_domain(&d).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn linear(a in -2.0f64..2.0, b in -2.0f64..2.0, s1 in any::<u64>(), s2 in any::<u64>()) {
            let d = build_domain(&small_config()).unwrap();
            let n = d.design_cells.len();
            let f = DensityFilter::<f64>::new(&d, 3.0 * d.h).unwrap();
            let (x, y) = (lcg(s1, n), lcg(s2, n));
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = f.apply(&mix);
            let (fx, fy) = (f.apply(&x), f.apply(&y));
            for k in 0..n {
                prop_assert!((lhs[k] - (a * fx[k] + b * fy[k])).abs() < 1e-13);
            }
        }

        #[test]
        fn preserves_bounds(s in any::<u64>()) {
            let d = build_domain(&small_config()).unwrap();
            let f = DensityFilter::<f64>::new(&d, 3.0 * d.h).unwrap();
            let y = f.apply(&lcg(s, d.design_cells.len()));
            prop_assert!(y.iter().all(|v| *v >= 0.0 && *v <= 1.0 + 1e-15));
        }
    }
}
