//! Cross-module invariants checked through the public API.

use acoustic_topopt::domain::{build_domain, interpolate_material, DomainConfig, MaterialOverrides};
use acoustic_topopt::farfield::sweep_directivity;
use acoustic_topopt::objective::{gradient_on_grid, Aggregation, DesignProblem};
use acoustic_topopt::optimizer::{Constraints, MmaParams, MmaState};
use acoustic_topopt::solver::{assemble, solve, SourceSpec};
use acoustic_topopt::targets::{equidistant, rainbow_target, LobeShape, TargetContext};
use acoustic_topopt::{Complex64, DensityField};
use proptest::prelude::*;

fn small_config() -> DomainConfig {
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

fn problem(frequencies: &[f64]) -> DesignProblem {
    let d = build_domain(&small_config()).unwrap();
    let q = Complex64::new(1e-4, 0.0);
    let ctx = TargetContext::from_domain(&d, q);
    let t = rainbow_target(frequencies, [6000.0, 8000.0], [-40.0, 40.0], LobeShape::default(), &ctx).unwrap();
    let r = 2.0 * d.h;
    DesignProblem::new(d, t, q, r, 0.5, Aggregation::Mean).unwrap()
}

#[test]
fn domain_regions_are_disjoint_and_ordered() {
    let d = build_domain(&small_config()).unwrap();
    for &c in &d.design_cells {
        assert!(d.design_mask[c] && !d.in_pml(c));
    }
    let [i0, i1, j0, j1] = d.design_rect;
    let corner = d.cell_center(d.index(i1 - 1, j1 - 1));
    let half_diag = 0.5 * (0.04f64.hypot(0.04));
    assert!(d.arc.radius >= 2.0 * half_diag);
    for s in &d.arc.samples {
        for &c in &s.stencil.cells {
            assert!(!d.in_pml(c) && !d.design_mask[c], "arc stencil touches cell {c}");
        }
    }
    assert!(i0 < i1 && j0 < j1 && corner[0] > 0.0);
    let spacing: Vec<f64> = d.arc.angles_deg().windows(2).map(|w| w[1] - w[0]).collect();
    assert!(spacing.iter().all(|s| (s - 1.0).abs() < 1e-12));
}

#[test]
fn arc_inside_design_half_diagonal_is_rejected() {
    let mut c = small_config();
    c.target_radius_m = 0.03;
    assert!(build_domain(&c).is_err());
}

#[test]
fn under_resolved_frequency_is_named() {
    let mut c = small_config();
    c.resolution_ppw = 6.0;
    let msg = build_domain(&c).unwrap_err().to_string();
    assert!(msg.contains("8575"), "{msg}");
}

#[test]
fn solution_satisfies_residual_and_gradient_vanishes_outside_mask() {
    let p = problem(&[6500.0, 7500.0]);
    let n = p.design_len();
    let xi: Vec<f64> = (0..n).map(|k| ((k * 37) % 101) as f64 / 100.0).collect();
    let physical = p.physical_density(&xi, 8.0).unwrap();
    let coeffs = interpolate_material(&physical, &p.domain.material);
    let sys = assemble(&p.domain, &coeffs, 7100.0, &SourceSpec::at_domain_source(&p.domain, Complex64::new(1e-4, 0.0)))
        .unwrap();
    let field = solve(&sys).unwrap();
    let ap = sys.apply(&field.values);
    let num: f64 = ap.iter().zip(&sys.rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = sys.rhs.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    assert!(num / den < 1e-10);

    let g = p.evaluate(&xi, 8.0, true).unwrap().gradient.unwrap();
    let grid = gradient_on_grid(&p.domain, &g);
    for (c, v) in grid.iter().enumerate() {
        if !p.domain.design_mask[c] {
            assert_eq!(*v, 0.0);
        }
        assert!(v.is_finite());
    }
}

#[test]
fn objective_ignores_frequency_order() {
    let a = problem(&[6000.0, 7000.0, 8000.0]);
    let b = problem(&[8000.0, 6000.0, 7000.0]);
    let xi = vec![0.3; a.design_len()];
    let pa = a.evaluate(&xi, 4.0, false).unwrap().objective;
    let pb = b.evaluate(&xi, 4.0, false).unwrap().objective;
    assert!((pa.phi - pb.phi).abs() <= 1e-14 * pa.phi);
    let mean = pa.per_frequency_phi.iter().sum::<f64>() / 3.0;
    assert!((pa.phi - mean).abs() <= 1e-14 * mean && pa.phi >= 0.0);
}

#[test]
fn normalized_map_columns_peak_at_one() {
    let p = problem(&[6500.0]);
    let f = equidistant([6000.0, 8000.0], 3).unwrap();
    let xi = vec![0.7; p.design_len()];
    let phys = p.physical_density(&xi, 8.0).unwrap();
    let mut map = sweep_directivity(&p.domain, &phys, &f, &p.source).unwrap();
    assert!(map.power.iter().flatten().all(|v| *v >= 0.0));
    map.normalize();
    for col in &map.power {
        assert_eq!(col.iter().cloned().fold(0.0, f64::max), 1.0);
    }
}

#[test]
fn density_text_round_trip_is_exact() {
    let d = build_domain(&small_config()).unwrap();
    let vars: Vec<f64> = (0..d.design_cells.len()).map(|k| (k as f64 * 0.618_033_988_75).fract()).collect();
    let f = DensityField::from_design_vars(&d, &vars).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.txt");
    f.write_text(&path).unwrap();
    let back = DensityField::read_text(&path).unwrap();
    assert_eq!(back.design_vars(&d), vars);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filtered_projection_stays_in_unit_interval(
        seed in proptest::collection::vec(0.0f64..=1.0, 64),
        beta in 1.0f64..64.0,
    ) {
        let p = problem(&[7000.0]);
        let xi: Vec<f64> = (0..p.design_len()).map(|k| seed[k % seed.len()]).collect();
        let phys = p.physical_density(&xi, beta).unwrap();
        prop_assert!(phys.values.iter().all(|v| (0.0..=1.0).contains(v)));
        for (c, v) in phys.values.iter().enumerate() {
            if !p.domain.design_mask[c] {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn material_coefficients_are_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m = acoustic_topopt::domain::MaterialModel::default();
        let field = DensityField::new(2, 1, vec![lo, hi]).unwrap();
        let c = interpolate_material(&field, &m);
        prop_assert!(c.inv_rho[0] >= c.inv_rho[1]);
        prop_assert!(c.inv_kappa[0] >= c.inv_kappa[1]);
    }

    #[test]
    fn mma_iterates_respect_bounds(
        x0 in proptest::collection::vec(0.0f64..=1.0, 1..30),
        steps in 1usize..6,
        scale in 0.01f64..100.0,
    ) {
        let n = x0.len();
        let (lo, hi) = (vec![0.0; n], vec![1.0; n]);
        let mut st = MmaState::new(n, MmaParams::default());
        let mut x = x0.clone();
        for s in 0..steps {
            let g: Vec<f64> = (0..n).map(|j| scale * ((j + s) as f64 * 1.3).sin()).collect();
            x = st.update(&x, (&lo, &hi), &g, &Constraints::none()).unwrap();
            prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
