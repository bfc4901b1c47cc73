//! Computational grid, design/target regions, material model and the
//! density regularization chain.

mod density;
mod filter;
mod material;
mod projection;

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use density::DensityField;
pub use filter::{apply_filter, DensityFilter};
pub use material::{
    interpolate_material, CoefficientFields, MaterialModel, MaterialOverrides,
    MIN_DENSITY_CONTRAST,
};
pub use projection::{apply_projection, project, project_derivative};

use crate::error::{Error, Result};
use crate::interp::{build_stencil, stencil_start, Stencil, STENCIL_POINTS};

/// Minimum grid resolution in cells per wavelength.
pub const MIN_CELLS_PER_WAVELENGTH: f64 = 10.0;

/// Cells kept between the outermost sampled point and the absorbing layer.
const PML_MARGIN_CELLS: i64 = 2;

/// Geometry of a design problem as read from a configuration file.
///
/// Lengths are in metres, positions relative to the design-region centre,
/// angles in degrees measured from the +y axis towards +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Design-region width and height.
    pub size_m: [f64; 2],
    /// Cells per wavelength at `max_frequency_hz`.
    #[serde(default = "default_ppw")]
    pub resolution_ppw: f64,
    /// Highest frequency the grid must resolve.
    pub max_frequency_hz: f64,
    /// Explicit cell size; overrides `resolution_ppw` when given.
    #[serde(default)]
    pub cell_size_m: Option<f64>,
    #[serde(default)]
    pub source_xy_m: [f64; 2],
    /// Radius of the target arc around the source.
    pub target_radius_m: f64,
    #[serde(default = "default_span")]
    pub target_span_deg: [f64; 2],
    #[serde(default = "default_samples")]
    pub target_samples: usize,
    #[serde(default = "default_pml")]
    pub pml_cells: usize,
    /// Radius (in cells) of the air pocket kept around the source.
    #[serde(default = "default_clearance")]
    pub source_clearance_cells: f64,
    #[serde(default)]
    pub material: MaterialOverrides,
}

fn default_ppw() -> f64 {
    MIN_CELLS_PER_WAVELENGTH
}
fn default_span() -> [f64; 2] {
    [-90.0, 90.0]
}
fn default_samples() -> usize {
    181
}
fn default_pml() -> usize {
    20
}
fn default_clearance() -> f64 {
    2.0
}

impl DomainConfig {
    /// Copy with every length multiplied by `s` and the design frequency
    /// divided by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        let mut c = self.clone();
        c.size_m = [self.size_m[0] * s, self.size_m[1] * s];
        c.max_frequency_hz = self.max_frequency_hz / s;
        c.cell_size_m = self.cell_size_m.map(|h| h * s);
        c.source_xy_m = [self.source_xy_m[0] * s, self.source_xy_m[1] * s];
        c.target_radius_m = self.target_radius_m * s;
        c
    }
}

/// One quadrature point of the target arc.
#[derive(Debug, Clone)]
pub struct ArcSample {
    pub theta_deg: f64,
    /// Physical position (m).
    pub position: [f64; 2],
    /// Interpolation of the pressure at `position` from grid values.
    pub stencil: Stencil,
    /// Arc-length weight (m).
    pub weight: f64,
}

/// The target region: samples on a circle of fixed radius around the source.
#[derive(Debug, Clone)]
pub struct TargetArc {
    pub radius: f64,
    pub samples: Vec<ArcSample>,
}

impl TargetArc {
    pub fn angles_deg(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.theta_deg).collect()
    }

    pub fn length(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }
}

/// Uniform Cartesian grid with PML frame, design mask and target arc.
#[derive(Debug, Clone)]
pub struct SimulationDomain {
    pub config: DomainConfig,
    pub material: MaterialModel,
    pub nx: usize,
    pub ny: usize,
    /// Cell size (m).
    pub h: f64,
    pub pml_cells: usize,
    /// Physical coordinates of the centre of cell (0, 0).
    pub origin: [f64; 2],
    pub design_mask: Vec<bool>,
    /// Grid indices of the design cells in raster order; design variables
    /// are ordered the same way.
    pub design_cells: Vec<usize>,
    /// Design rectangle as `[i0, i1, j0, j1]` (half-open).
    pub design_rect: [usize; 4],
    pub source_cell: usize,
    /// Physical source position (a cell centre).
    pub source_pos: [f64; 2],
    pub arc: TargetArc,
    /// Radius of the default power-integration circle around the source.
    pub power_radius: f64,
    pub(crate) solver_cache: Arc<OnceLock<Arc<crate::solver::SystemPattern>>>,
}

fn odd_count(len: f64, h: f64) -> usize {
    let n = (len / h).round().max(1.0) as usize;
    if n % 2 == 1 {
        n
    } else if (len / h) >= n as f64 {
        n + 1
    } else {
        n - 1
    }
}

/// Builds the grid for `config`, checking every geometric invariant.
pub fn build_domain(config: &DomainConfig) -> Result<SimulationDomain> {
    let material = config.material.resolve()?;
    let f_max = config.max_frequency_hz;
    if !(f_max.is_finite() && f_max > 0.0) {
        return Err(Error::Config(format!("max_frequency_hz must be positive, got {f_max}")));
    }
    if config.size_m.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Config("size_m entries must be positive".into()));
    }
    let h = match config.cell_size_m {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => return Err(Error::Config(format!("cell_size_m must be positive, got {h}"))),
        None => {
            if !(config.resolution_ppw.is_finite() && config.resolution_ppw > 0.0) {
                return Err(Error::Config("resolution_ppw must be positive".into()));
            }
            material.c_air / (f_max * config.resolution_ppw)
        }
    };
    let ppw = material.c_air / (f_max * h);
    if ppw < MIN_CELLS_PER_WAVELENGTH * (1.0 - 1e-9) {
        return Err(Error::Resolution {
            frequency_hz: f_max,
            cells_per_wavelength: ppw,
            minimum: MIN_CELLS_PER_WAVELENGTH,
        });
    }

    let [lo_deg, hi_deg] = config.target_span_deg;
    if !(lo_deg < hi_deg && lo_deg >= -180.0 && hi_deg <= 180.0) {
        return Err(Error::Config(format!(
            "target_span_deg must be increasing within [-180, 180], got [{lo_deg}, {hi_deg}]"
        )));
    }
    if config.target_samples < 2 {
        return Err(Error::Config("target_samples must be at least 2".into()));
    }

    let ndx = odd_count(config.size_m[0], h);
    let ndy = odd_count(config.size_m[1], h);
    let half_x = (ndx as i64 - 1) / 2;
    let half_y = (ndy as i64 - 1) / 2;
    let half_diagonal = 0.5 * (ndx as f64 * h).hypot(ndy as f64 * h);
    let radius = config.target_radius_m;
    if !(radius >= 2.0 * half_diagonal) {
        return Err(Error::Config(format!(
            "target radius {radius} m is smaller than twice the design half-diagonal ({} m)",
            2.0 * half_diagonal
        )));
    }

    // Offsets below are in cells relative to the design-region centre cell.
    let src = [
        (config.source_xy_m[0] / h).round() as i64,
        (config.source_xy_m[1] / h).round() as i64,
    ];
    let n = config.target_samples;
    let thetas: Vec<f64> = (0..n)
        .map(|k| lo_deg + (hi_deg - lo_deg) * k as f64 / (n - 1) as f64)
        .collect();
    let arc_local: Vec<[f64; 2]> = thetas
        .iter()
        .map(|t| {
            let r = t.to_radians();
            [src[0] as f64 + radius * r.sin() / h, src[1] as f64 + radius * r.cos() / h]
        })
        .collect();

    let corner_dist = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
        .iter()
        .map(|(sx, sy)| {
            let cx = sx * (half_x as f64 + 0.5) - src[0] as f64;
            let cy = sy * (half_y as f64 + 0.5) - src[1] as f64;
            cx.hypot(cy) * h
        })
        .fold(0.0, f64::max);
    let power_radius = corner_dist + 4.0 * h;
    if power_radius >= radius {
        return Err(Error::Config(
            "target arc too close to the design region for power evaluation".into(),
        ));
    }

    let reach = |c: f64| (stencil_start(c), stencil_start(c) + STENCIL_POINTS as i64 - 1);
    let (mut xlo, mut xhi) = (-half_x, half_x);
    let (mut ylo, mut yhi) = (-half_y, half_y);
    let mut include = |x: f64, y: f64| {
        let (a, b) = reach(x);
        let (c, d) = reach(y);
        xlo = xlo.min(a);
        xhi = xhi.max(b);
        ylo = ylo.min(c);
        yhi = yhi.max(d);
    };
    for p in &arc_local {
        include(p[0], p[1]);
    }
    let rp = power_radius / h;
    include(src[0] as f64 - rp, src[1] as f64 - rp);
    include(src[0] as f64 + rp, src[1] as f64 + rp);
    // keep the box mirror-symmetric about the source column
    let ext = (src[0] - xlo).max(xhi - src[0]);
    xlo = src[0] - ext;
    xhi = src[0] + ext;

    let pml = config.pml_cells as i64;
    let off_x = pml + PML_MARGIN_CELLS - xlo;
    let off_y = pml + PML_MARGIN_CELLS - ylo;
    let nx = (xhi - xlo + 1 + 2 * (pml + PML_MARGIN_CELLS)) as usize;
    let ny = (yhi - ylo + 1 + 2 * (pml + PML_MARGIN_CELLS)) as usize;
    let origin = [-(off_x as f64) * h, -(off_y as f64) * h];

    let i0 = (off_x - half_x) as usize;
    let j0 = (off_y - half_y) as usize;
    let design_rect = [i0, i0 + ndx, j0, j0 + ndy];
    let si = (off_x + src[0]) as usize;
    let sj = (off_y + src[1]) as usize;
    let source_cell = si + nx * sj;
    let source_pos = [origin[0] + si as f64 * h, origin[1] + sj as f64 * h];

    let mut design_mask = vec![false; nx * ny];
    let mut design_cells = Vec::with_capacity(ndx * ndy);
    let clearance = config.source_clearance_cells.max(0.0);
    for j in j0..j0 + ndy {
        for i in i0..i0 + ndx {
            let di = i as f64 - si as f64;
            let dj = j as f64 - sj as f64;
            if di.hypot(dj) <= clearance {
                continue;
            }
            let c = i + nx * j;
            design_mask[c] = true;
            design_cells.push(c);
        }
    }
    if design_mask[source_cell] {
        return Err(Error::Config("source lies inside the design region".into()));
    }

    let in_pml = |c: usize| {
        let (i, j) = (c % nx, c / nx);
        let p = config.pml_cells;
        i < p || j < p || i >= nx - p || j >= ny - p
    };
    let weight = radius * (hi_deg - lo_deg).to_radians() / n as f64;
    let mut samples = Vec::with_capacity(n);
    for (theta, p) in thetas.iter().zip(&arc_local) {
        let gx = off_x as f64 + p[0];
        let gy = off_y as f64 + p[1];
        let stencil = build_stencil(gx, gy, nx, ny, h, false)
            .ok_or_else(|| Error::Config(format!("arc sample at {theta} deg leaves the grid")))?;
        if stencil.cells.iter().any(|&c| design_mask[c] || in_pml(c)) {
            return Err(Error::Config(format!(
                "arc sample at {theta} deg touches the design region or the PML"
            )));
        }
        samples.push(ArcSample {
            theta_deg: *theta,
            position: [origin[0] + gx * h, origin[1] + gy * h],
            stencil,
            weight,
        });
    }

    Ok(SimulationDomain {
        config: config.clone(),
        material,
        nx,
        ny,
        h,
        pml_cells: config.pml_cells,
        origin,
        design_mask,
        design_cells,
        design_rect,
        source_cell,
        source_pos,
        arc: TargetArc { radius, samples },
        power_radius,
        solver_cache: Arc::new(OnceLock::new()),
    })
}

impl SimulationDomain {
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let (i, j) = self.ij(cell);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    /// Continuous grid-index coordinates of a physical point.
    pub fn to_index_coords(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.origin[0]) / self.h, (p[1] - self.origin[1]) / self.h)
    }

    pub fn in_pml(&self, cell: usize) -> bool {
        let (i, j) = self.ij(cell);
        let p = self.pml_cells;
        i < p || j < p || i >= self.nx - p || j >= self.ny - p
    }

    pub fn unknowns(&self) -> usize {
        self.nx * self.ny
    }

    /// Highest frequency resolved with the minimum cells per wavelength.
    pub fn max_frequency(&self) -> f64 {
        self.material.c_air / (MIN_CELLS_PER_WAVELENGTH * self.h)
    }

    pub fn cells_per_wavelength(&self, frequency_hz: f64) -> f64 {
        self.material.c_air / (frequency_hz * self.h)
    }

    pub fn check_frequency(&self, frequency_hz: f64) -> Result<()> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frequency must be positive, got {frequency_hz}"
            )));
        }
        let ppw = self.cells_per_wavelength(frequency_hz);
        if ppw < MIN_CELLS_PER_WAVELENGTH * (1.0 - 1e-9) {
            return Err(Error::Resolution {
                frequency_hz,
                cells_per_wavelength: ppw,
                minimum: MIN_CELLS_PER_WAVELENGTH,
            });
        }
        Ok(())
    }

    /// Design rectangle with the same cells but a different material.
    pub fn with_material(&self, material: MaterialModel) -> Result<Self> {
        material.validate()?;
        let mut d = self.clone();
        d.material = material;
        d.solver_cache = Arc::new(OnceLock::new());
        Ok(d)
    }

    /// Grid cell mirrored about the vertical line through the source.
    pub fn mirror_cell(&self, cell: usize) -> Option<usize> {
        let (i, j) = self.ij(cell);
        let si = self.source_cell % self.nx;
        let mi = 2 * si as i64 - i as i64;
        (mi >= 0 && (mi as usize) < self.nx).then(|| mi as usize + self.nx * j)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn small_config() -> DomainConfig {
        DomainConfig {
            size_m: [0.04, 0.04],
            resolution_ppw: 10.0,
            max_frequency_hz: 8575.0,
            cell_size_m: None,
            source_xy_m: [0.0, 0.0],
            target_radius_m: 0.07,
            target_span_deg: [-90.0, 90.0],
            target_samples: 181,
            pml_cells: 12,
            source_clearance_cells: 1.5,
            material: MaterialOverrides::default(),
        }
    }

    #[test]
    fn full_scale_cell_size() {
        // 10 cm region at 12.8 kHz needs h <= c / f / 10
        let mut c = small_config();
        c.size_m = [0.1, 0.1];
        c.max_frequency_hz = 12_800.0;
        c.target_radius_m = 0.15;
        let d = build_domain(&c).unwrap();
        assert!(d.h <= 343.0 / 12_800.0 / 10.0 + 1e-15);
        assert!((d.h - 2.6796875e-3).abs() < 1e-9);
    }

    #[test]
    fn uniform_one_degree_sampling() {
        let d = build_domain(&small_config()).unwrap();
        let a = d.arc.angles_deg();
        assert_eq!(a.len(), 181);
        for w in a.windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-12);
        }
        assert_eq!(a[0], -90.0);
        assert_eq!(a[180], 90.0);
    }

    #[test]
    fn arc_weights_sum_to_arc_length() {
        let d = build_domain(&small_config()).unwrap();
        assert!((d.arc.length() - 0.07 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn small_target_radius_rejected() {
        let mut c = small_config();
        c.target_radius_m = 0.03;
        let e = build_domain(&c).unwrap_err();
        assert!(e.to_string().contains("twice the design half-diagonal"));
    }

    #[test]
    fn coarse_grid_rejected_with_frequency() {
        let mut c = small_config();
        c.resolution_ppw = 8.0;
        let e = build_domain(&c).unwrap_err();
        assert!(matches!(e, Error::Resolution { .. }));
        assert!(e.to_string().contains("8575"));
    }

    #[test]
    fn invariants_hold() {
        let d = build_domain(&small_config()).unwrap();
        assert!(d.design_cells.iter().all(|&c| !d.in_pml(c)));
        assert!(!d.design_mask[d.source_cell]);
        assert!(!d.in_pml(d.source_cell));
        // source at the design-region centre cell
        let [i0, i1, j0, j1] = d.design_rect;
        assert_eq!(d.ij(d.source_cell), ((i0 + i1 - 1) / 2, (j0 + j1 - 1) / 2));
        for s in &d.arc.samples {
            let r = (s.position[0] - d.source_pos[0]).hypot(s.position[1] - d.source_pos[1]);
            assert!((r - 0.07).abs() < 1e-12);
            assert!(s.stencil.cells.iter().all(|&c| !d.design_mask[c] && !d.in_pml(c)));
        }
        assert!(d.cells_per_wavelength(d.config.max_frequency_hz) >= 10.0 - 1e-9);
    }

    #[test]
    fn grid_mirror_symmetric_about_source() {
        let d = build_domain(&small_config()).unwrap();
        let (si, _) = d.ij(d.source_cell);
        assert_eq!(2 * si + 1, d.nx);
        for &c in &d.design_cells {
            assert!(d.design_mask[d.mirror_cell(c).unwrap()]);
        }
    }

    #[test]
    fn rescaling_keeps_grid() {
        let c = small_config();
        let a = build_domain(&c).unwrap();
        let b = build_domain(&c.rescaled(2.0)).unwrap();
        assert_eq!((a.nx, a.ny), (b.nx, b.ny));
        assert_eq!(a.design_cells, b.design_cells);
        assert!((b.h / a.h - 2.0).abs() < 1e-12);
    }
}
