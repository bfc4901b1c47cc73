use super::*;
use crate::domain::{build_domain, tests::small_config, MaterialModel, TargetArc};

fn raw_domain(nx: usize, ny: usize, h: f64, pml: usize) -> SimulationDomain {
    let source_cell = nx / 2 + nx * (ny / 2);
    SimulationDomain {
        config: small_config(),
        material: MaterialModel::default(),
        nx,
        ny,
        h,
        pml_cells: pml,
        origin: [0.0, 0.0],
        design_mask: vec![false; nx * ny],
        design_cells: Vec::new(),
        design_rect: [0, 0, 0, 0],
        source_cell,
        source_pos: [(nx / 2) as f64 * h, (ny / 2) as f64 * h],
        arc: TargetArc {
            radius: 0.0,
            samples: Vec::new(),
        },
        power_radius: 0.0,
        solver_cache: Default::default(),
    }
}

fn lcg(seed: u64, n: usize) -> Vec<f64> {
    let mut x = seed;
    (0..n)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

fn unit_source(d: &SimulationDomain) -> SourceSpec {
    SourceSpec::at_domain_source(d, Complex64::new(1e-4, 0.0))
}

fn air(d: &SimulationDomain) -> DensityField<f64> {
    DensityField::zeros(d)
}

/// Dense reference assembly from explicit difference vectors.
fn dense_reference(
    nx: usize,
    ny: usize,
    h: f64,
    omega: f64,
    b: &[f64],
    inv_kappa: &[f64],
    s: SchemeCoefficients,
) -> Vec<Vec<Complex64>> {
    let n = nx * ny;
    let mut a = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let hm = |u: f64, v: f64| 2.0 * u * v / (u + v);
    let diff = |u: usize, v: usize| {
        let mut g = vec![0.0; n];
        g[u] = 1.0;
        g[v] = -1.0;
        g
    };
    let mut outer = |g1: &[f64], g2: &[f64], w: f64| {
        for r in 0..n {
            for c in 0..n {
                a[r][c] += w * g1[r] * g2[c];
            }
        }
    };
    let idx = |i: usize, j: usize| i + nx * j;
    let ax = |i: usize, j: usize| hm(b[idx(i, j)], b[idx(i + 1, j)]);
    let ay = |i: usize, j: usize| hm(b[idx(i, j)], b[idx(i, j + 1)]);
    for j in 0..ny {
        for i in 0..nx - 1 {
            let g = diff(idx(i, j), idx(i + 1, j));
            outer(&g, &g, (1.0 - 2.0 * s.beta) * ax(i, j));
            if j + 1 < ny {
                let g2 = diff(idx(i, j + 1), idx(i + 1, j + 1));
                let w = s.beta * hm(ax(i, j), ax(i, j + 1));
                outer(&g, &g2, w);
                outer(&g2, &g, w);
            }
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let g = diff(idx(i, j), idx(i, j + 1));
            outer(&g, &g, (1.0 - 2.0 * s.beta) * ay(i, j));
            if i + 1 < nx {
                let g2 = diff(idx(i + 1, j), idx(i + 1, j + 1));
                let w = s.beta * hm(ay(i, j), ay(i + 1, j));
                outer(&g, &g2, w);
                outer(&g2, &g, w);
            }
        }
    }
    let m: Vec<f64> = inv_kappa.iter().map(|k| h * h * omega * omega * k).collect();
    for j in 0..ny {
        for i in 0..nx {
            let c = idx(i, j);
            a[c][c] -= s.mass_center * m[c];
            let mut nb = Vec::new();
            if i > 0 {
                nb.push(c - 1);
            }
            if i + 1 < nx {
                nb.push(c + 1);
            }
            if j > 0 {
                nb.push(c - nx);
            }
            if j + 1 < ny {
                nb.push(c + nx);
            }
            for q in nb {
                a[c][q] -= s.mass_edge * 0.5 * (m[c] + m[q]);
            }
        }
    }
    a
}

#[test]
fn three_by_three_with_one_solid_cell_matches_hand_assembly() {
    let d = raw_domain(3, 3, 2e-3, 0);
    let mut xi = air(&d);
    xi.values[4] = 1.0;
    let coeffs = crate::domain::interpolate_material(&xi, &d.material);
    let f = 5_000.0;
    let sys = assemble(&d, &coeffs, f, &SourceSpec { cell: 0, amplitude: Complex64::new(1.0, 0.0) }).unwrap();
    let dense = dense_reference(3, 3, d.h, sys.omega, &coeffs.inv_rho, &coeffs.inv_kappa, sys.scheme);
    for r in 0..9 {
        for c in 0..9 {
            let e = sys.entry(r, c);
            assert!((e - dense[r][c]).norm() <= 1e-12 * dense[r][c].norm().max(1.0), "({r},{c}) {e} vs {}", dense[r][c]);
        }
    }
    // the centre's links to air use the harmonic mean of the two inverse densities
    let m = &d.material;
    let hm = 2.0 * m.inv_rho(1.0) * m.inv_rho(0.0) / (m.inv_rho(1.0) + m.inv_rho(0.0));
    assert!((sys.link_x[1 + 2 * 1] - hm).norm() < 1e-15 * hm);
    assert!((sys.link_x[2 * 1] - hm).norm() < 1e-15 * hm);
}

#[test]
fn homogeneous_air_stencil_weights_are_uniform() {
    let d = build_domain(&small_config()).unwrap();
    let coeffs = crate::domain::interpolate_material(&air(&d), &d.material);
    let sys = assemble(&d, &coeffs, 6_000.0, &unit_source(&d)).unwrap();
    let b = 1.0 / d.material.rho_air;
    let beta = sys.scheme.beta;
    let m = d.h * d.h * sys.omega.powi(2) / d.material.kappa_air();
    let edge = -(1.0 - 4.0 * beta) * b - sys.scheme.mass_edge * m;
    let corner = -2.0 * beta * b;
    let p = d.pml_cells + 1;
    for j in p..d.ny - p {
        for i in p..d.nx - p {
            let c = d.index(i, j);
            for nb in [c + 1, c - 1, c + d.nx, c - d.nx] {
                assert!((sys.entry(c, nb) - edge).norm() < 1e-12 * b);
            }
            for nb in [c + d.nx + 1, c + d.nx - 1, c - d.nx + 1, c - d.nx - 1] {
                assert!((sys.entry(c, nb) - corner).norm() < 1e-12 * b);
            }
        }
    }
}

#[test]
fn matrix_is_complex_symmetric() {
    let d = build_domain(&small_config()).unwrap();
    let xi = DensityField::from_design_vars(&d, &lcg(5, d.design_cells.len())).unwrap();
    let coeffs = crate::domain::interpolate_material(&xi, &d.material);
    let sys = assemble(&d, &coeffs, 7_000.0, &unit_source(&d)).unwrap();
    for (r, c, v) in sys.triplets() {
        assert_eq!(v, sys.entry(c, r));
    }
}

#[test]
fn frequency_above_resolution_limit_rejected() {
    let d = build_domain(&small_config()).unwrap();
    let coeffs = crate::domain::interpolate_material(&air(&d), &d.material);
    let e = assemble(&d, &coeffs, 9_000.0, &unit_source(&d)).unwrap_err();
    assert!(matches!(e, Error::Resolution { .. }));
}

#[test]
fn zero_source_gives_zero_field() {
    let d = build_domain(&small_config()).unwrap();
    let src = SourceSpec::at_domain_source(&d, Complex64::new(0.0, 0.0));
    let p = simulate(&d, &air(&d), 6_000.0, &src).unwrap();
    assert!(p.values.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
}

#[test]
fn doubling_the_source_doubles_the_field_exactly() {
    let d = build_domain(&small_config()).unwrap();
    let xi = DensityField::from_design_vars(&d, &lcg(9, d.design_cells.len())).unwrap();
    let s1 = unit_source(&d);
    let s2 = SourceSpec { amplitude: s1.amplitude * 2.0, ..s1 };
    let p1 = simulate(&d, &xi, 6_000.0, &s1).unwrap();
    let p2 = simulate(&d, &xi, 6_000.0, &s2).unwrap();
    for (a, b) in p1.values.iter().zip(&p2.values) {
        assert_eq!(*a * 2.0, *b);
    }
}

#[test]
fn residual_below_tolerance() {
    let d = build_domain(&small_config()).unwrap();
    let xi = DensityField::from_design_vars(&d, &lcg(11, d.design_cells.len())).unwrap();
    let coeffs = crate::domain::interpolate_material(&xi, &d.material);
    let sys = assemble(&d, &coeffs, 8_000.0, &unit_source(&d)).unwrap();
    let p = solve(&sys).unwrap();
    let ap = sys.apply(&p.values);
    let r: f64 = ap.iter().zip(&sys.rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let bn: f64 = sys.rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    assert!(r / bn < RESIDUAL_TOLERANCE);
    assert!(p.is_finite());
}

#[test]
fn reciprocity_on_random_design() {
    let d = build_domain(&small_config()).unwrap();
    let xi = DensityField::from_design_vars(&d, &lcg(13, d.design_cells.len())).unwrap();
    let coeffs = crate::domain::interpolate_material(&xi, &d.material);
    let a = d.source_cell;
    let b = d.arc.samples[40].stencil.cells[14];
    let q = Complex64::new(1e-4, 0.0);
    let sa = assemble(&d, &coeffs, 7_500.0, &SourceSpec { cell: a, amplitude: q }).unwrap();
    let sb = assemble(&d, &coeffs, 7_500.0, &SourceSpec { cell: b, amplitude: q }).unwrap();
    let pa = solve(&sa).unwrap();
    let pb = solve(&sb).unwrap();
    let ab = sa.point_value(&pa.values, b);
    let ba = sb.point_value(&pb.values, a);
    assert!((ab - ba).norm() / ab.norm() < 1e-8);
}

#[test]
fn free_field_matches_analytic_solution() {
    let d = build_domain(&small_config()).unwrap();
    let f = 7_000.0;
    let q = Complex64::new(1e-4, 0.0);
    let p = simulate(&d, &air(&d), f, &SourceSpec::at_domain_source(&d, q)).unwrap();
    let k = 2.0 * PI * f / d.material.c_air;
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..d.unknowns() {
        if d.in_pml(c) {
            continue;
        }
        let x = d.cell_center(c);
        let r = (x[0] - d.source_pos[0]).hypot(x[1] - d.source_pos[1]);
        if k * r <= 2.0 {
            continue;
        }
        let pa = analytic_monopole_2d(f, r, &d.material, q).unwrap();
        num += (p.values[c] - pa).norm_sqr();
        den += pa.norm_sqr();
    }
    let err = (num / den).sqrt();
    assert!(err < 0.02, "relative L2 error {err}");
}

#[test]
fn radiated_power_of_zero_field_is_zero() {
    let d = build_domain(&small_config()).unwrap();
    let p = PressureField {
        nx: d.nx,
        ny: d.ny,
        frequency_hz: 5_000.0,
        values: vec![Complex64::new(0.0, 0.0); d.unknowns()],
    };
    assert_eq!(radiated_power(&d, &p, &air(&d), d.power_radius).unwrap(), 0.0);
}

#[test]
fn free_field_power_is_radius_independent_and_matches_formula() {
    let d = build_domain(&small_config()).unwrap();
    let f = 6_500.0;
    let q = Complex64::new(1e-4, 0.0);
    let p = simulate(&d, &air(&d), f, &SourceSpec::at_domain_source(&d, q)).unwrap();
    let want = free_field_power(f, &d.material, q);
    for r in [0.3 * d.power_radius, 0.6 * d.power_radius, d.power_radius] {
        let got = radiated_power(&d, &p, &air(&d), r).unwrap();
        assert!((got / want - 1.0).abs() < 0.01, "r = {r}: {got} vs {want}");
    }
}

#[test]
fn power_circle_through_solid_rejected() {
    let d = build_domain(&small_config()).unwrap();
    let xi = DensityField::from_design_vars(&d, &vec![1.0; d.design_cells.len()]).unwrap();
    let p = simulate(&d, &xi, 6_000.0, &unit_source(&d)).unwrap();
    assert!(radiated_power(&d, &p, &xi, 3.0 * d.h).is_err());
}

#[test]
fn pressure_file_round_trip() {
    let d = build_domain(&small_config()).unwrap();
    let p = simulate(&d, &air(&d), 6_000.0, &unit_source(&d)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = p.write_text(dir.path()).unwrap();
    assert!(path.ends_with("pressure_f6000.txt"));
    let back = PressureField::read_text(&path, 6_000.0).unwrap();
    assert_eq!(back, p);
}

#[test]
fn sensitivity_matches_finite_difference_of_bilinear_form() {
    let d = build_domain(&small_config()).unwrap();
    let n = d.design_cells.len();
    let xi = lcg(17, n);
    let f = 7_000.0;
    let src = unit_source(&d);
    let p = lcg(19, d.unknowns()).iter().zip(lcg(23, d.unknowns())).map(|(a, b)| Complex64::new(*a, b)).collect::<Vec<_>>();
    let l = lcg(29, d.unknowns()).iter().zip(lcg(31, d.unknowns())).map(|(a, b)| Complex64::new(*a, b)).collect::<Vec<_>>();
    let form = |x: &[f64]| {
        let field = DensityField::from_design_vars(&d, x).unwrap();
        let coeffs = crate::domain::interpolate_material(&field, &d.material);
        let sys = assemble(&d, &coeffs, f, &src).unwrap();
        let ap = sys.apply(&p);
        2.0 * l.iter().zip(&ap).map(|(a, b)| a * b).sum::<Complex64>().re
    };
    let field = DensityField::from_design_vars(&d, &xi).unwrap();
    let coeffs = crate::domain::interpolate_material(&field, &d.material);
    let sys = assemble(&d, &coeffs, f, &src).unwrap();
    let g = density_sensitivity(&d, &d.material, &sys, &p, &l).unwrap();
    for k in (0..n).step_by(7) {
        let step = 1e-6;
        let mut xp = xi.clone();
        let mut xm = xi.clone();
        xp[k] += step;
        xm[k] -= step;
        let fd = (form(&xp) - form(&xm)) / (2.0 * step);
        assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-3), "cell {k}: fd {fd} adjoint {}", g[k]);
    }
}
