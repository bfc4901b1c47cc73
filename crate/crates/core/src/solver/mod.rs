//! Frequency-domain Helmholtz solver on the cell-centred grid.
//!
//! Solves `-div(1/rho grad p) - omega^2/kappa p = i omega Q delta` with
//! complex coordinate stretching in the absorbing frame. The system is
//! scaled by `h^2` and stays complex symmetric for any material layout.

mod analytic;
mod pml;
mod scheme;
mod sensitivity;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Once};

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat, SymbolicSparseColMatRef};
use faer::prelude::Solve;
use faer::MatMut;
use num_complex::Complex64;

pub use analytic::{
    analytic_monopole_2d, bessel_j0_y0, compare_with_analytic, free_field_power, hankel0, AnalyticComparison,
};
pub use pml::{Stretch, DESIGN_REFLECTION};
pub use scheme::SchemeCoefficients;
pub use sensitivity::density_sensitivity;

use crate::domain::{CoefficientFields, DensityField, SimulationDomain};
use crate::error::{Error, Result};
use crate::interp::build_stencil;
use crate::io;

/// Relative residual every returned solution satisfies.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sparsity pattern and symbolic factorization shared by every solve on a
/// domain.
#[derive(Debug)]
pub struct SystemPattern {
    nx: usize,
    ny: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Value slot of entry (neighbour `o`, column `c`) at `9 c + o`, where
    /// `o = (di + 1) + 3 (dj + 1)`; `usize::MAX` if outside the grid.
    slots: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl SystemPattern {
    fn new(nx: usize, ny: usize) -> Result<Self> {
        let n = nx * ny;
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(9 * n);
        let mut slots = vec![usize::MAX; 9 * n];
        col_ptr.push(0);
        for j in 0..ny {
            for i in 0..nx {
                let c = i + nx * j;
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (ii, jj) = (i as i64 + di, j as i64 + dj);
                        if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                            continue;
                        }
                        let o = ((di + 1) + 3 * (dj + 1)) as usize;
                        slots[9 * c + o] = row_idx.len();
                        row_idx.push(ii as usize + nx * jj as usize);
                    }
                }
                col_ptr.push(row_idx.len());
            }
        }
        let sym = SymbolicSparseColMat::new_checked(n, n, col_ptr.clone(), None, row_idx.clone());
        let symbolic = SymbolicLu::try_new(sym.as_ref()).map_err(|e| Error::Solve {
            frequency_hz: f64::NAN,
            reason: format!("symbolic factorization: {e:?}"),
        })?;
        Ok(Self {
            nx,
            ny,
            col_ptr,
            row_idx,
            slots,
            symbolic,
        })
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    fn symbolic_ref(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(
            self.nx * self.ny,
            self.nx * self.ny,
            &self.col_ptr,
            None,
            &self.row_idx,
        )
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        let (ci, cj) = (col % self.nx, col / self.nx);
        let (ri, rj) = (row % self.nx, row / self.nx);
        let o = (ri + 1 - ci) + 3 * (rj + 1 - cj);
        self.slots[9 * col + o]
    }
}

pub(crate) fn pattern(domain: &SimulationDomain) -> Result<Arc<SystemPattern>> {
    if let Some(p) = domain.solver_cache.get() {
        return Ok(p.clone());
    }
    let p = Arc::new(SystemPattern::new(domain.nx, domain.ny)?);
    Ok(domain.solver_cache.get_or_init(|| p).clone())
}

/// A point volume source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    /// Grid cell holding the source.
    pub cell: usize,
    /// Complex volume-source strength (m^2/s per unit depth).
    pub amplitude: Complex64,
}

impl SourceSpec {
    /// Source at the domain's configured position.
    pub fn at_domain_source(domain: &SimulationDomain, amplitude: Complex64) -> Self {
        Self {
            cell: domain.source_cell,
            amplitude,
        }
    }

    pub fn validate(&self, domain: &SimulationDomain) -> Result<()> {
        if self.cell >= domain.unknowns() {
            return Err(Error::InvalidArgument(format!("source cell {} outside the grid", self.cell)));
        }
        if domain.in_pml(self.cell) {
            return Err(Error::InvalidArgument(format!(
                "source cell {} lies in the absorbing layer",
                self.cell
            )));
        }
        if !(self.amplitude.re.is_finite() && self.amplitude.im.is_finite()) {
            return Err(Error::InvalidArgument("source amplitude must be finite".into()));
        }
        Ok(())
    }
}

/// Sparse system for one frequency together with everything needed to
/// differentiate it with respect to the material layout.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub frequency_hz: f64,
    pub omega: f64,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub scheme: SchemeCoefficients,
    pub stretch: Stretch,
    /// Inverse density per cell.
    pub inv_rho: Vec<f64>,
    /// `h^2 omega^2 sx sy / kappa` per cell.
    pub mass: Vec<Complex64>,
    /// Link coefficients `(sy/sx) H(b_u, b_v)` for links `(i, j)-(i+1, j)`,
    /// indexed `i + (nx - 1) j`.
    pub link_x: Vec<Complex64>,
    /// Link coefficients for links `(i, j)-(i, j+1)`, indexed `i + nx j`.
    pub link_y: Vec<Complex64>,
    pub rhs: Vec<Complex64>,
    pub(crate) values: Vec<Complex64>,
    pub(crate) pattern: Arc<SystemPattern>,
}

#[inline]
pub(crate) fn harmonic(u: Complex64, v: Complex64) -> Complex64 {
    2.0 * u * v / (u + v)
}

/// Builds the system matrix and the right-hand side for `source`.
pub fn assemble(
    domain: &SimulationDomain,
    coeffs: &CoefficientFields<f64>,
    frequency_hz: f64,
    source: &SourceSpec,
) -> Result<AssembledSystem> {
    domain.check_frequency(frequency_hz)?;
    let n = domain.unknowns();
    if coeffs.inv_rho.len() != n || coeffs.inv_kappa.len() != n {
        return Err(Error::ShapeMismatch {
            context: "coefficient fields",
            expected: n,
            actual: coeffs.inv_rho.len().min(coeffs.inv_kappa.len()),
        });
    }
    source.validate(domain)?;
    let pattern = pattern(domain)?;
    let (nx, ny, h) = (domain.nx, domain.ny, domain.h);
    let omega = 2.0 * PI * frequency_hz;
    let scheme = SchemeCoefficients::for_kh(omega * h / domain.material.c_air);
    let stretch = Stretch::new(domain, omega);
    let mut values = vec![ZERO; pattern.nnz()];
    let mut add = |r: usize, c: usize, v: Complex64| {
        values[pattern.slot(r, c)] += v;
    };
    let sym = |add: &mut dyn FnMut(usize, usize, Complex64), r: usize, c: usize, v: Complex64| {
        add(r, c, v);
        if r != c {
            add(c, r, v);
        }
    };

    let b: Vec<Complex64> = coeffs.inv_rho.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut link_x = vec![ZERO; (nx - 1) * ny];
    for j in 0..ny {
        for i in 0..nx - 1 {
            let c = i + nx * j;
            link_x[i + (nx - 1) * j] =
                stretch.y_center[j] / stretch.x_face[i] * harmonic(b[c], b[c + 1]);
        }
    }
    let mut link_y = vec![ZERO; nx * (ny - 1)];
    for j in 0..ny - 1 {
        for i in 0..nx {
            let c = i + nx * j;
            link_y[c] = stretch.x_center[i] / stretch.y_face[j] * harmonic(b[c], b[c + nx]);
        }
    }
    let beta = scheme.beta;
    let direct = 1.0 - 2.0 * beta;

    // direct link terms
    for j in 0..ny {
        for i in 0..nx - 1 {
            let (u, v) = (i + nx * j, i + 1 + nx * j);
            let w = direct * link_x[i + (nx - 1) * j];
            sym(&mut add, u, u, w);
            sym(&mut add, v, v, w);
            sym(&mut add, u, v, -w);
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let (u, v) = (i + nx * j, i + nx * (j + 1));
            let w = direct * link_y[u];
            sym(&mut add, u, u, w);
            sym(&mut add, v, v, w);
            sym(&mut add, u, v, -w);
        }
    }
    // cross terms between parallel neighbouring links
    let cross = |add: &mut dyn FnMut(usize, usize, Complex64), u1: usize, v1: usize, u2: usize, v2: usize, w: Complex64| {
        sym(add, u1, u2, w);
        sym(add, v1, v2, w);
        sym(add, u1, v2, -w);
        sym(add, v1, u2, -w);
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (l1, l2) = (i + (nx - 1) * j, i + (nx - 1) * (j + 1));
            let w = beta * harmonic(link_x[l1], link_x[l2]);
            let (u1, u2) = (i + nx * j, i + nx * (j + 1));
            cross(&mut add, u1, u1 + 1, u2, u2 + 1, w);

            let (m1, m2) = (i + nx * j, i + 1 + nx * j);
            let w = beta * harmonic(link_y[m1], link_y[m2]);
            cross(&mut add, m1, m1 + nx, m2, m2 + nx, w);
        }
    }

    // mass
    let h2w2 = h * h * omega * omega;
    let mut mass = vec![ZERO; n];
    for j in 0..ny {
        for i in 0..nx {
            let c = i + nx * j;
            mass[c] = h2w2 * coeffs.inv_kappa[c] * stretch.x_center[i] * stretch.y_center[j];
        }
    }
    let (mc, md) = (scheme.mass_center, scheme.mass_edge);
    for j in 0..ny {
        for i in 0..nx {
            let c = i + nx * j;
            add(c, c, -mc * mass[c]);
            if i + 1 < nx {
                sym(&mut add, c, c + 1, -md * 0.5 * (mass[c] + mass[c + 1]));
            }
            if j + 1 < ny {
                sym(&mut add, c, c + nx, -md * 0.5 * (mass[c] + mass[c + nx]));
            }
        }
    }

    let mut sys = AssembledSystem {
        frequency_hz,
        omega,
        nx,
        ny,
        h,
        scheme,
        stretch,
        inv_rho: coeffs.inv_rho.clone(),
        mass,
        link_x,
        link_y,
        rhs: vec![ZERO; n],
        values,
        pattern,
    };
    sys.rhs = sys.source_vector(source);
    Ok(sys)
}

impl AssembledSystem {
    pub fn unknowns(&self) -> usize {
        self.nx * self.ny
    }

    /// Weights that spread a point value over a cell and its edge
    /// neighbours, consistent with the mass operator.
    pub fn point_weights(&self, cell: usize) -> Vec<(usize, f64)> {
        let (i, j) = (cell % self.nx, cell / self.nx);
        let mut w = vec![(cell, self.scheme.mass_center)];
        let d = self.scheme.mass_edge;
        if i > 0 {
            w.push((cell - 1, d));
        }
        if i + 1 < self.nx {
            w.push((cell + 1, d));
        }
        if j > 0 {
            w.push((cell - self.nx, d));
        }
        if j + 1 < self.ny {
            w.push((cell + self.nx, d));
        }
        w
    }

    /// Right-hand side for a point source, `i omega Q` spread by
    /// [`Self::point_weights`].
    pub fn source_vector(&self, source: &SourceSpec) -> Vec<Complex64> {
        let mut rhs = vec![ZERO; self.unknowns()];
        let q = Complex64::new(0.0, self.omega) * source.amplitude;
        for (c, w) in self.point_weights(source.cell) {
            rhs[c] += q * w;
        }
        rhs
    }

    /// Pressure reading at a cell consistent with the source regularization,
    /// so that readings and sources obey reciprocity exactly.
    pub fn point_value(&self, p: &[Complex64], cell: usize) -> Complex64 {
        self.point_weights(cell).iter().map(|&(c, w)| p[c] * w).sum()
    }

    /// Matrix entry `A[row, col]` (zero outside the pattern).
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let (ri, rj) = ((row % self.nx) as i64, (row / self.nx) as i64);
        let (ci, cj) = ((col % self.nx) as i64, (col / self.nx) as i64);
        if (ri - ci).abs() > 1 || (rj - cj).abs() > 1 {
            return ZERO;
        }
        self.values[self.pattern.slot(row, col)]
    }

    /// Non-zero entries as `(row, col, value)` in column order.
    pub fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let p = &self.pattern;
        let mut out = Vec::with_capacity(p.nnz());
        for c in 0..self.unknowns() {
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                out.push((p.row_idx[k], c, self.values[k]));
            }
        }
        out
    }

    /// `A x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = &self.pattern;
        let mut y = vec![ZERO; self.unknowns()];
        for (c, &xc) in x.iter().enumerate() {
            if xc == ZERO {
                continue;
            }
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                y[p.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    fn matrix(&self) -> SparseColMatRef<'_, usize, Complex64> {
        SparseColMatRef::new(self.pattern.symbolic_ref(), &self.values)
    }

    pub fn factorize(&self) -> Result<Factorization<'_>> {
        static SEQUENTIAL: Once = Once::new();
        // frequencies are solved in parallel above this level; keeping the
        // factorization itself sequential also makes it reproducible
        SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        let lu = Lu::try_new_with_symbolic(self.pattern.symbolic.clone(), self.matrix()).map_err(|e| {
            Error::Solve {
                frequency_hz: self.frequency_hz,
                reason: format!("factorization failed: {e:?}"),
            }
        })?;
        Ok(Factorization { system: self, lu })
    }
}

/// LU factors of an assembled system, reusable for forward and adjoint
/// right-hand sides.
pub struct Factorization<'a> {
    system: &'a AssembledSystem,
    lu: Lu<usize, Complex64>,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl Factorization<'_> {
    /// Solves `A x = b` to [`RESIDUAL_TOLERANCE`], refining if needed.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let sys = self.system;
        let fail = |reason: String| Error::Solve {
            frequency_hz: sys.frequency_hz,
            reason,
        };
        if b.len() != sys.unknowns() {
            return Err(Error::ShapeMismatch {
                context: "right-hand side",
                expected: sys.unknowns(),
                actual: b.len(),
            });
        }
        let bn = norm(b);
        if bn == 0.0 {
            return Ok(vec![ZERO; b.len()]);
        }
        let mut x = b.to_vec();
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, b.len(), 1));
        let mut rel = f64::INFINITY;
        for _ in 0..3 {
            let ax = sys.apply(&x);
            let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm(&r) / bn;
            if !rel.is_finite() {
                return Err(fail("factorization is singular or ill-conditioned".into()));
            }
            if rel < RESIDUAL_TOLERANCE {
                return Ok(x);
            }
            self.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut r, b.len(), 1));
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        Err(fail(format!("relative residual {rel:.3e} above {RESIDUAL_TOLERANCE:e}")))
    }

    pub fn system(&self) -> &AssembledSystem {
        self.system
    }
}

/// Complex pressure on every grid cell at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub nx: usize,
    pub ny: usize,
    pub frequency_hz: f64,
    pub values: Vec<Complex64>,
}

impl PressureField {
    pub fn file_name(frequency_hz: f64) -> String {
        format!("pressure_f{frequency_hz}.txt")
    }

    /// Writes `pressure_f<Hz>.txt` into `dir` and returns its path.
    pub fn write_text(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(self.frequency_hz));
        io::write_complex_matrix(&path, self.nx, self.ny, &self.values)?;
        Ok(path)
    }

    pub fn read_text(path: &Path, frequency_hz: f64) -> Result<Self> {
        let (nx, ny, values) = io::read_complex_matrix(path)?;
        Ok(Self {
            nx,
            ny,
            frequency_hz,
            values,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Factorizes and solves the system for its own right-hand side.
pub fn solve(sys: &AssembledSystem) -> Result<PressureField> {
    let values = sys.factorize()?.solve(&sys.rhs)?;
    Ok(PressureField {
        nx: sys.nx,
        ny: sys.ny,
        frequency_hz: sys.frequency_hz,
        values,
    })
}

/// Convenience: coefficients, assembly and solve for one density layout.
pub fn simulate(
    domain: &SimulationDomain,
    density: &DensityField<f64>,
    frequency_hz: f64,
    source: &SourceSpec,
) -> Result<PressureField> {
    let coeffs = crate::domain::interpolate_material(density, &domain.material);
    solve(&assemble(domain, &coeffs, frequency_hz, source)?)
}

/// Time-averaged power per unit depth crossing a circle of `radius`
/// centred on the source, from interpolated pressure and pressure
/// gradient. `density` is the physical layout the field was computed with;
/// the circle must stay in air and away from the absorbing frame.
pub fn radiated_power(
    domain: &SimulationDomain,
    field: &PressureField,
    density: &DensityField<f64>,
    radius: f64,
) -> Result<f64> {
    if field.nx != domain.nx || field.ny != domain.ny {
        return Err(Error::ShapeMismatch {
            context: "pressure field grid",
            expected: domain.unknowns(),
            actual: field.values.len(),
        });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("power circle radius must be positive, got {radius}")));
    }
    let h = domain.h;
    let n = ((16.0 * PI * radius / h).ceil() as usize).max(360);
    let omega = 2.0 * PI * field.frequency_hz;
    let rho = domain.material.rho_air;
    let ds = 2.0 * PI * radius / n as f64;
    let mut total = 0.0;
    for k in 0..n {
        let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
        let (nxv, nyv) = (t.cos(), t.sin());
        let pos = [domain.source_pos[0] + radius * nxv, domain.source_pos[1] + radius * nyv];
        let (gx, gy) = domain.to_index_coords(pos);
        let st = build_stencil(gx, gy, domain.nx, domain.ny, h, true)
            .ok_or_else(|| Error::InvalidArgument(format!("power circle of radius {radius} m leaves the grid")))?;
        if let Some(&c) = st.cells.iter().find(|&&c| domain.in_pml(c)) {
            return Err(Error::InvalidArgument(format!(
                "power circle of radius {radius} m reaches the absorbing layer at cell {c}"
            )));
        }
        if let Some(&c) = st.cells.iter().find(|&&c| density.values[c] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power circle of radius {radius} m crosses solid material at cell {c}"
            )));
        }
        let p = st.apply(&field.values);
        let dpn = st.apply_dx(&field.values) * nxv + st.apply_dy(&field.values) * nyv;
        let vr = dpn / Complex64::new(0.0, omega * rho);
        total += 0.5 * (p * vr.conj()).re * ds;
    }
    Ok(total)
}

#[cfg(test)]
mod tests;
