//! Connected solid features of a blueprint and their one-at-a-time removal.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::domain::DensityField;
use crate::error::{Error, Result};
use crate::farfield::hue_to_rgb;
use crate::objective::DesignProblem;

/// Density at or above which a cell counts as solid.
pub const SOLID_THRESHOLD: f64 = 0.5;

/// 8-connected components of the solid cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLabeling {
    pub nx: usize,
    pub ny: usize,
    /// 0 for air, otherwise the feature id.
    pub labels: Vec<u32>,
    /// Cells of feature `id` at index `id - 1`, ascending.
    pub features: Vec<Vec<usize>>,
}

impl FeatureLabeling {
    pub fn count(&self) -> usize {
        self.features.len()
    }

    /// Cells of a feature; empty for unknown ids.
    pub fn cells(&self, id: usize) -> &[usize] {
        if id == 0 {
            return &[];
        }
        self.features.get(id - 1).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn area(&self, id: usize) -> usize {
        self.cells(id).len()
    }

    pub fn total_area(&self) -> usize {
        self.features.iter().map(Vec::len).sum()
    }

    /// Image with one hue per feature, air black.
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut px = Vec::with_capacity(self.labels.len());
        for j in (0..self.ny).rev() {
            for i in 0..self.nx {
                let l = self.labels[i + self.nx * j];
                px.push(if l == 0 {
                    [0, 0, 0]
                } else {
                    // golden-angle steps keep consecutive ids apart in hue
                    hue_to_rgb((l as f64 - 1.0) * 137.507_764, 1.0)
                });
            }
        }
        crate::io::write_ppm(path, self.nx, self.ny, &px)
    }
}

/// Labels the cells at or above [`SOLID_THRESHOLD`]; ids follow the raster
/// order of each component's first cell.
pub fn label_features(design: &DensityField<f64>) -> FeatureLabeling {
    let (nx, ny) = (design.nx, design.ny);
    let solid: Vec<bool> = design.values.iter().map(|&v| v >= SOLID_THRESHOLD).collect();
    let mut labels = vec![0u32; nx * ny];
    let mut features = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..nx * ny {
        if !solid[start] || labels[start] != 0 {
            continue;
        }
        let id = features.len() as u32 + 1;
        let mut cells = Vec::new();
        labels[start] = id;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            let (i, j) = ((c % nx) as i64, (c / nx) as i64);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                        continue;
                    }
                    let nb = a as usize + nx * b as usize;
                    if solid[nb] && labels[nb] == 0 {
                        labels[nb] = id;
                        queue.push_back(nb);
                    }
                }
            }
        }
        cells.sort_unstable();
        features.push(cells);
    }
    FeatureLabeling {
        nx,
        ny,
        labels,
        features,
    }
}

/// Copy of `design` with the cells of feature `id` set to air. Unknown ids
/// leave the design unchanged.
pub fn remove_feature(design: &DensityField<f64>, labeling: &FeatureLabeling, id: usize) -> DensityField<f64> {
    let mut out = design.clone();
    for &c in labeling.cells(id) {
        out.values[c] = 0.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: usize,
    pub area_cells: usize,
    pub phi: f64,
    pub delta_phi_percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub base_phi: f64,
    pub rows: Vec<FeatureRow>,
    /// Every feature removed at once.
    pub all_removed: FeatureRow,
    /// Design kept, source switched off.
    pub source_off: FeatureRow,
}

fn delta(phi: f64, base: f64) -> f64 {
    100.0 * (phi - base) / base
}

impl AblationReport {
    /// Ratio of the largest to the smallest single-feature `|dPhi|`.
    pub fn impact_span(&self) -> Option<f64> {
        let mags: Vec<f64> = self.rows.iter().map(|r| r.delta_phi_percent.abs()).collect();
        let max = mags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        (!mags.is_empty()).then(|| max / min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature_id,area_cells,delta_phi_percent\n");
        for r in &self.rows {
            writeln!(s, "{},{},{}", r.id, r.area_cells, r.delta_phi_percent).unwrap();
        }
        writeln!(s, "ALL_REMOVED,{},{}", self.all_removed.area_cells, self.all_removed.delta_phi_percent).unwrap();
        writeln!(s, "SOURCE_OFF,{},{}", self.source_off.area_cells, self.source_off.delta_phi_percent).unwrap();
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_string(path, &self.to_csv())
    }
}

/// Objective of the design with each feature removed in turn, with the
/// design region emptied and with the source off.
///
/// Features are labeled on the design thresholded at [`SOLID_THRESHOLD`],
/// but the objective is evaluated on `design` itself: removing a feature
/// sets its cells to air and leaves every other cell, including
/// sub-threshold cells next to it, unchanged.
pub fn ablation_study(design: &DensityField<f64>, problem: &DesignProblem) -> Result<(FeatureLabeling, AblationReport)> {
    design.check_domain(&problem.domain)?;
    let labeling = label_features(&design.thresholded(SOLID_THRESHOLD));
    let base_phi = problem.evaluate_physical(design, false)?.0.phi;
    if !(base_phi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "baseline objective {base_phi} leaves relative changes undefined"
        )));
    }
    let rows = (1..=labeling.count())
        .into_par_iter()
        .map(|id| {
            let phi = problem
                .evaluate_physical(&remove_feature(design, &labeling, id), false)
                .map_err(|e| Error::Feature {
                    feature: id,
                    source: Box::new(e),
                })?
                .0
                .phi;
            Ok(FeatureRow {
                id,
                area_cells: labeling.area(id),
                phi,
                delta_phi_percent: delta(phi, base_phi),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let empty = DensityField::zeros(&problem.domain);
    let phi_empty = problem.evaluate_physical(&empty, false)?.0.phi;
    let nf = problem.target.included_frequencies().len();
    let zero = vec![vec![Complex64::new(0.0, 0.0); problem.domain.unknowns()]; nf];
    let phi_off = problem.objective_of_fields(&zero)?.phi;
    let report = AblationReport {
        base_phi,
        rows,
        all_removed: FeatureRow {
            id: 0,
            area_cells: labeling.total_area(),
            phi: phi_empty,
            delta_phi_percent: delta(phi_empty, base_phi),
        },
        source_off: FeatureRow {
            id: 0,
            area_cells: 0,
            phi: phi_off,
            delta_phi_percent: delta(phi_off, base_phi),
        },
    };
    Ok((labeling, report))
}
