//! Far-field mismatch objective and its adjoint gradient.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    apply_projection, interpolate_material, project_derivative, DensityField, DensityFilter,
    SimulationDomain, TargetArc,
};
use crate::error::{Error, Result};
use crate::solver::{assemble, density_sensitivity, Factorization, PressureField, SourceSpec};
use crate::targets::TargetSpec;

/// How per-frequency values are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl Aggregation {
    fn combine(&self, v: &[f64]) -> f64 {
        match self {
            Aggregation::Mean => v.iter().sum::<f64>() / v.len() as f64,
            Aggregation::Max => v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Weight of each frequency's gradient in the total.
    fn weights(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Aggregation::Mean => vec![1.0 / v.len() as f64; v.len()],
            Aggregation::Max => {
                let mut best = 0;
                for (k, x) in v.iter().enumerate() {
                    if *x > v[best] {
                        best = k;
                    }
                }
                (0..v.len()).map(|k| if k == best { 1.0 } else { 0.0 }).collect()
            }
        }
    }
}

/// Band objective value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Objective {
    pub phi: f64,
    pub per_frequency_phi: Vec<f64>,
    pub frequencies: Vec<f64>,
}

/// Derivative of the objective with respect to every design variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub dphi_dxi: Vec<f64>,
}

/// Solution of the adjoint problem for one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointField {
    pub frequency_hz: f64,
    pub values: Vec<Complex64>,
}

fn check_target(target: &[f64], arc: &TargetArc) -> Result<()> {
    if target.len() != arc.samples.len() {
        return Err(Error::ShapeMismatch {
            context: "target magnitudes",
            expected: arc.samples.len(),
            actual: target.len(),
        });
    }
    Ok(())
}

/// `sum_s w_s (|p_s|^2 - |p_target,s|^2)^2` over the arc samples.
pub fn evaluate_phi(p: &[Complex64], target: &[f64], arc: &TargetArc) -> Result<f64> {
    check_target(target, arc)?;
    Ok(arc
        .samples
        .iter()
        .zip(target)
        .map(|(s, t)| {
            let ps: Complex64 = s.stencil.apply(p);
            s.weight * (ps.norm_sqr() - t * t).powi(2)
        })
        .sum())
}

/// Wirtinger derivative `d phi / d p` on the grid; nonzero only on the
/// cells used by the arc samples.
pub fn phi_gradient_source(p: &[Complex64], target: &[f64], arc: &TargetArc) -> Result<Vec<Complex64>> {
    check_target(target, arc)?;
    let mut g = vec![Complex64::new(0.0, 0.0); p.len()];
    for (s, t) in arc.samples.iter().zip(target) {
        let ps: Complex64 = s.stencil.apply(p);
        let scale = 2.0 * s.weight * (ps.norm_sqr() - t * t) * ps.conj();
        for (&c, &w) in s.stencil.cells.iter().zip(&s.stencil.weights) {
            g[c] += scale * w;
        }
    }
    Ok(g)
}

/// Solves `A^T lambda = -(d phi / d p)` with the forward factors.
pub fn adjoint_solve(
    factors: &Factorization<'_>,
    p: &PressureField,
    target: &[f64],
    arc: &TargetArc,
) -> Result<AdjointField> {
    let g = phi_gradient_source(&p.values, target, arc)?;
    let rhs: Vec<Complex64> = g.iter().map(|v| -v).collect();
    // the system matrix is complex symmetric, so A^T = A
    let values = factors.solve(&rhs)?;
    Ok(AdjointField {
        frequency_hz: p.frequency_hz,
        values,
    })
}

/// One frequency's contribution.
#[derive(Debug, Clone)]
pub struct FrequencyResult {
    pub frequency_hz: f64,
    pub phi: f64,
    pub field: PressureField,
    /// `d phi_f / d rho` per design cell, if requested.
    pub sensitivity: Option<Vec<f64>>,
}

/// Result of evaluating a design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: Objective,
    pub gradient: Option<Gradient>,
    /// Physical density the fields were computed with.
    pub physical: DensityField<f64>,
}

/// A complete design problem: grid, source, target and regularization.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub domain: SimulationDomain,
    pub target: TargetSpec,
    pub source: SourceSpec,
    pub filter: DensityFilter<f64>,
    pub eta: f64,
    pub aggregation: Aggregation,
}

impl DesignProblem {
    pub fn new(
        domain: SimulationDomain,
        target: TargetSpec,
        amplitude: Complex64,
        filter_radius_m: f64,
        eta: f64,
        aggregation: Aggregation,
    ) -> Result<Self> {
        target.check_arc(&domain)?;
        let filter = DensityFilter::new(&domain, filter_radius_m)?;
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Config(format!("projection threshold {eta} not in (0, 1)")));
        }
        let source = SourceSpec::at_domain_source(&domain, amplitude);
        source.validate(&domain)?;
        Ok(Self {
            domain,
            target,
            source,
            filter,
            eta,
            aggregation,
        })
    }

    pub fn design_len(&self) -> usize {
        self.domain.design_cells.len()
    }

    fn check_vars(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.design_len() {
            return Err(Error::ShapeMismatch {
                context: "design variables",
                expected: self.design_len(),
                actual: xi.len(),
            });
        }
        Ok(())
    }

    /// Filtered design variables.
    pub fn filtered(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_vars(xi)?;
        Ok(self.filter.apply(xi))
    }

    /// Filter then projection, scattered onto the grid.
    pub fn physical_density(&self, xi: &[f64], beta: f64) -> Result<DensityField<f64>> {
        let f = self.filtered(xi)?;
        let clamped: Vec<f64> = f.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let field = DensityField::from_design_vars(&self.domain, &clamped)?;
        apply_projection(&field, beta, self.eta)
    }

    /// Solves one frequency and optionally the matching adjoint.
    pub fn solve_frequency(
        &self,
        physical: &DensityField<f64>,
        frequency_hz: f64,
        target: Option<&[f64]>,
        with_sensitivity: bool,
    ) -> Result<FrequencyResult> {
        let coeffs = interpolate_material(physical, &self.domain.material);
        let sys = assemble(&self.domain, &coeffs, frequency_hz, &self.source)?;
        let factors = sys.factorize()?;
        let values = factors.solve(&sys.rhs)?;
        let field = PressureField {
            nx: sys.nx,
            ny: sys.ny,
            frequency_hz,
            values,
        };
        let phi = match target {
            Some(t) => evaluate_phi(&field.values, t, &self.domain.arc)?,
            None => 0.0,
        };
        let sensitivity = match (target, with_sensitivity) {
            (Some(t), true) => {
                let lambda = adjoint_solve(&factors, &field, t, &self.domain.arc)?;
                Some(density_sensitivity(
                    &self.domain,
                    &self.domain.material,
                    &sys,
                    &field.values,
                    &lambda.values,
                )?)
            }
            _ => None,
        };
        Ok(FrequencyResult {
            frequency_hz,
            phi,
            field,
            sensitivity,
        })
    }

    /// Objective (and optionally sensitivities to the physical density) of a
    /// physical layout, one task per included frequency.
    pub fn evaluate_physical(
        &self,
        physical: &DensityField<f64>,
        with_sensitivity: bool,
    ) -> Result<(Objective, Vec<FrequencyResult>)> {
        physical.check_domain(&self.domain)?;
        let jobs: Vec<(f64, &[f64])> = self.target.included().collect();
        let results = jobs
            .par_iter()
            .map(|&(f, t)| self.solve_frequency(physical, f, Some(t), with_sensitivity))
            .collect::<Result<Vec<_>>>()?;
        Ok((self.objective_from(&results), results))
    }

    fn objective_from(&self, results: &[FrequencyResult]) -> Objective {
        let per: Vec<f64> = results.iter().map(|r| r.phi).collect();
        Objective {
            phi: self.aggregation.combine(&per),
            per_frequency_phi: per,
            frequencies: results.iter().map(|r| r.frequency_hz).collect(),
        }
    }

    /// Objective for given fields on the arc (used for the source-off case).
    pub fn objective_of_fields(&self, fields: &[Vec<Complex64>]) -> Result<Objective> {
        let jobs: Vec<(f64, &[f64])> = self.target.included().collect();
        if fields.len() != jobs.len() {
            return Err(Error::ShapeMismatch {
                context: "pressure fields",
                expected: jobs.len(),
                actual: fields.len(),
            });
        }
        let per = jobs
            .iter()
            .zip(fields)
            .map(|(&(_, t), p)| evaluate_phi(p, t, &self.domain.arc))
            .collect::<Result<Vec<_>>>()?;
        Ok(Objective {
            phi: self.aggregation.combine(&per),
            per_frequency_phi: per,
            frequencies: jobs.iter().map(|j| j.0).collect(),
        })
    }

    /// Combines per-frequency sensitivities and chains them through the
    /// projection and the filter.
    pub fn total_gradient(&self, xi: &[f64], beta: f64, results: &[FrequencyResult]) -> Result<Gradient> {
        self.check_vars(xi)?;
        let n = self.design_len();
        let per: Vec<f64> = results.iter().map(|r| r.phi).collect();
        let weights = self.aggregation.weights(&per);
        let mut d_rho = vec![0.0; n];
        // ordered sum over frequencies keeps the result reproducible
        for (r, w) in results.iter().zip(&weights) {
            let s = r.sensitivity.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("missing sensitivity at {} Hz", r.frequency_hz))
            })?;
            if s.len() != n {
                return Err(Error::ShapeMismatch {
                    context: "sensitivity",
                    expected: n,
                    actual: s.len(),
                });
            }
            if *w != 0.0 {
                for (a, b) in d_rho.iter_mut().zip(s) {
                    *a += w * b;
                }
            }
        }
        let filtered = self.filter.apply(xi);
        let chained: Vec<f64> = d_rho
            .iter()
            .zip(&filtered)
            .map(|(g, &x)| g * project_derivative(x.clamp(0.0, 1.0), beta, self.eta))
            .collect();
        Ok(Gradient {
            dphi_dxi: self.filter.apply_transpose(&chained),
        })
    }

    /// Objective and, if requested, its gradient with respect to the raw
    /// design variables.
    pub fn evaluate(&self, xi: &[f64], beta: f64, with_gradient: bool) -> Result<Evaluation> {
        let physical = self.physical_density(xi, beta)?;
        let (objective, results) = self.evaluate_physical(&physical, with_gradient)?;
        let gradient = if with_gradient {
            Some(self.total_gradient(xi, beta, &results)?)
        } else {
            None
        };
        Ok(Evaluation {
            objective,
            gradient,
            physical,
        })
    }
}

/// Scatters a per-design-variable gradient onto the grid (zero elsewhere).
pub fn gradient_on_grid(domain: &SimulationDomain, g: &Gradient) -> Vec<f64> {
    let mut out = vec![0.0; domain.unknowns()];
    for (&c, &v) in domain.design_cells.iter().zip(&g.dphi_dxi) {
        out[c] = v;
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::domain::{build_domain, tests::small_config};
    use crate::targets::{equidistant, rainbow_target, LobeShape, TargetContext};

    pub(crate) fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut x = seed;
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    pub(crate) fn small_problem(nf: usize) -> DesignProblem {
        let d = build_domain(&small_config()).unwrap();
        let q = Complex64::new(1e-4, 0.0);
        let ctx = TargetContext::from_domain(&d, q);
        let band = [6_000.0, 8_000.0];
        let f = equidistant(band, nf).unwrap();
        let t = rainbow_target(&f, band, [-40.0, 40.0], LobeShape::default(), &ctx).unwrap();
        let h = d.h;
        DesignProblem::new(d, t, q, 2.0 * h, 0.5, Aggregation::Mean).unwrap()
    }

    #[test]
    fn matched_target_gives_zero() {
        let prob = small_problem(1);
        let xi = vec![0.3; prob.design_len()];
        let rho = prob.physical_density(&xi, 4.0).unwrap();
        let f = prob.target.frequencies[0];
        let r = prob.solve_frequency(&rho, f, None, false).unwrap();
        let t: Vec<f64> = prob.domain.arc.samples.iter().map(|s| s.stencil.apply(&r.field.values).norm()).collect();
        let pmax = t.iter().cloned().fold(0.0, f64::max);
        let phi = evaluate_phi(&r.field.values, &t, &prob.domain.arc).unwrap();
        assert!(phi < 1e-28 * pmax.powi(4) * prob.domain.arc.length());
        let g = phi_gradient_source(&r.field.values, &t, &prob.domain.arc).unwrap();
        assert!(g.iter().all(|v| v.norm() < 1e-13 * pmax.powi(3)));
    }

    #[test]
    fn unit_mismatch_on_unit_arc() {
        // |p|^2 = 2 and target 1 everywhere on an arc of length 1
        let prob = small_problem(1);
        let mut arc = prob.domain.arc.clone();
        let n = arc.samples.len();
        for s in &mut arc.samples {
            s.weight = 1.0 / n as f64;
        }
        let p = vec![Complex64::new(1.0, 1.0); prob.domain.unknowns()];
        let phi = evaluate_phi(&p, &vec![1.0; n], &arc).unwrap();
        assert!((phi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_quadrature() {
        let prob = small_problem(1);
        let arc = &prob.domain.arc;
        let n = prob.domain.unknowns();
        let re = lcg(1, n);
        let im = lcg(2, n);
        let p: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let t = lcg(3, arc.samples.len());
        let mut want = 0.0;
        for (k, s) in arc.samples.iter().enumerate() {
            let mut ps = Complex64::new(0.0, 0.0);
            for m in 0..s.stencil.cells.len() {
                ps += p[s.stencil.cells[m]] * s.stencil.weights[m];
            }
            let d = ps.re * ps.re + ps.im * ps.im - t[k] * t[k];
            want += d * d * s.weight;
        }
        let got = evaluate_phi(&p, &t, arc).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn adjoint_source_supported_on_arc_stencils() {
        let prob = small_problem(1);
        let n = prob.domain.unknowns();
        let p: Vec<Complex64> = lcg(4, n).into_iter().map(|v| Complex64::new(v, 0.5)).collect();
        let t = vec![0.1; prob.domain.arc.samples.len()];
        let g = phi_gradient_source(&p, &t, &prob.domain.arc).unwrap();
        let mut support = vec![false; n];
        for s in &prob.domain.arc.samples {
            for &c in &s.stencil.cells {
                support[c] = true;
            }
        }
        for c in 0..n {
            if !support[c] {
                assert_eq!(g[c], Complex64::new(0.0, 0.0));
            }
        }
    }

    fn fd_check(prob: &DesignProblem, beta: f64, seed: u64, cells: usize, tol: f64) {
        let n = prob.design_len();
        let xi: Vec<f64> = lcg(seed, n).iter().map(|v| 0.2 + 0.6 * v).collect();
        let g = prob.evaluate(&xi, beta, true).unwrap().gradient.unwrap();
        let picks: Vec<usize> = lcg(seed + 1, cells).iter().map(|v| (v * n as f64) as usize).collect();
        for k in picks {
            let step = 1e-5;
            let mut xp = xi.clone();
            let mut xm = xi.clone();
            xp[k] += step;
            xm[k] -= step;
            let fp = prob.evaluate(&xp, beta, false).unwrap().objective.phi;
            let fm = prob.evaluate(&xm, beta, false).unwrap().objective.phi;
            let fd = (fp - fm) / (2.0 * step);
            let rel = (fd - g.dphi_dxi[k]).abs() / fd.abs().max(g.dphi_dxi[k].abs());
            assert!(rel < tol, "var {k}: fd {fd} adjoint {} rel {rel}", g.dphi_dxi[k]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        fd_check(&small_problem(2), 8.0, 40, 6, 1e-3);
    }

    #[test]
    fn single_frequency_gradient_is_its_own_mean() {
        let prob = small_problem(1);
        let xi = vec![0.5; prob.design_len()];
        let e = prob.evaluate(&xi, 4.0, true).unwrap();
        assert_eq!(e.objective.phi, e.objective.per_frequency_phi[0]);
        let rho = prob.physical_density(&xi, 4.0).unwrap();
        let r = prob.solve_frequency(&rho, prob.target.frequencies[0], Some(prob.target.magnitudes[0].as_deref().unwrap()), true).unwrap();
        let g = prob.total_gradient(&xi, 4.0, &[r]).unwrap();
        assert_eq!(g, e.gradient.unwrap());
    }

    #[test]
    fn symmetric_problem_has_symmetric_gradient() {
        let d = build_domain(&small_config()).unwrap();
        let q = Complex64::new(1e-4, 0.0);
        let ctx = TargetContext::from_domain(&d, q);
        // the band centre maps to a lobe at 0 deg, which is mirror symmetric
        let t = rainbow_target(&[7_000.0], [6_000.0, 8_000.0], [-20.0, 20.0], LobeShape::default(), &ctx).unwrap();
        let h = d.h;
        let prob = DesignProblem::new(d, t, q, 2.0 * h, 0.5, Aggregation::Mean).unwrap();
        let zero = vec![0.0; prob.design_len()];
        let g = prob.evaluate(&zero, 8.0, true).unwrap().gradient.unwrap();
        let grid = gradient_on_grid(&prob.domain, &g);
        let scale = grid.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for &c in &prob.domain.design_cells {
            let m = prob.domain.mirror_cell(c).unwrap();
            assert!((grid[c] - grid[m]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn permutation_of_frequencies_leaves_phi_unchanged() {
        let prob = small_problem(3);
        let mut rev = prob.clone();
        rev.target.frequencies.reverse();
        rev.target.magnitudes.reverse();
        rev.target.centers_deg.reverse();
        let xi = lcg(7, prob.design_len());
        let a = prob.evaluate(&xi, 4.0, false).unwrap().objective.phi;
        let b = rev.evaluate(&xi, 4.0, false).unwrap().objective.phi;
        assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn max_aggregation_picks_worst_frequency() {
        let mut prob = small_problem(3);
        prob.aggregation = Aggregation::Max;
        let xi = lcg(8, prob.design_len());
        let e = prob.evaluate(&xi, 4.0, false).unwrap();
        let worst = e.objective.per_frequency_phi.iter().cloned().fold(0.0, f64::max);
        assert_eq!(e.objective.phi, worst);
    }
}
