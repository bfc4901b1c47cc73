use num_complex::Complex64;

use super::AssembledSystem;
use crate::domain::{MaterialModel, SimulationDomain};
use crate::error::{Error, Result};

/// `dH(u, v) / du` of the harmonic mean.
#[inline]
fn harmonic_du(u: Complex64, v: Complex64) -> Complex64 {
    let s = u + v;
    2.0 * v * v / (s * s)
}

/// Derivative of `2 Re(lambda^T A p)` with respect to the physical density
/// of every design cell (ordered as `domain.design_cells`).
///
/// With `lambda` the adjoint field this is the design gradient of the
/// objective at fixed physical densities.
pub fn density_sensitivity(
    domain: &SimulationDomain,
    material: &MaterialModel,
    sys: &AssembledSystem,
    p: &[Complex64],
    lambda: &[Complex64],
) -> Result<Vec<f64>> {
    let n = sys.unknowns();
    if p.len() != n || lambda.len() != n {
        return Err(Error::ShapeMismatch {
            context: "state and adjoint fields",
            expected: n,
            actual: p.len().min(lambda.len()),
        });
    }
    let (nx, ny) = (sys.nx, sys.ny);
    let beta = sys.scheme.beta;
    let direct = 1.0 - 2.0 * beta;
    let (mc, md) = (sys.scheme.mass_center, sys.scheme.mass_edge);
    let b = |c: usize| Complex64::new(sys.inv_rho[c], 0.0);

    // differences across links
    let gx = |v: &[Complex64], i: usize, j: usize| v[i + nx * j] - v[i + 1 + nx * j];
    let gy = |v: &[Complex64], i: usize, j: usize| v[i + nx * j] - v[i + nx * (j + 1)];

    // d(lambda^T A p) / d a for the x-link (i, j)
    let sx = |i: usize, j: usize| -> Complex64 {
        let l = i + (nx - 1) * j;
        let a = sys.link_x[l];
        let (gl, gp) = (gx(lambda, i, j), gx(p, i, j));
        let mut s = direct * gl * gp;
        for jj in [j.wrapping_sub(1), j + 1] {
            if jj >= ny {
                continue;
            }
            let o = sys.link_x[i + (nx - 1) * jj];
            let (ol, op) = (gx(lambda, i, jj), gx(p, i, jj));
            s += beta * harmonic_du(a, o) * (gl * op + ol * gp);
        }
        s
    };
    let sy = |i: usize, j: usize| -> Complex64 {
        let l = i + nx * j;
        let a = sys.link_y[l];
        let (gl, gp) = (gy(lambda, i, j), gy(p, i, j));
        let mut s = direct * gl * gp;
        for ii in [i.wrapping_sub(1), i + 1] {
            if ii >= nx {
                continue;
            }
            let o = sys.link_y[ii + nx * j];
            let (ol, op) = (gy(lambda, ii, j), gy(p, ii, j));
            s += beta * harmonic_du(a, o) * (gl * op + ol * gp);
        }
        s
    };

    let drho = material.inv_rho_slope();
    let dkappa = sys.h * sys.h * sys.omega * sys.omega * material.inv_kappa_slope();
    let st = &sys.stretch;
    let out = domain
        .design_cells
        .iter()
        .map(|&c| {
            let (i, j) = (c % nx, c / nx);
            let bc = b(c);
            let mut total = Complex64::new(0.0, 0.0);
            // links whose harmonic mean involves this cell: d a / d b_c
            let mut link = |s: Complex64, ratio: Complex64, other: usize| {
                total += s * ratio * harmonic_du(bc, b(other)) * drho;
            };
            if i > 0 {
                link(sx(i - 1, j), st.y_center[j] / st.x_face[i - 1], c - 1);
            }
            if i + 1 < nx {
                link(sx(i, j), st.y_center[j] / st.x_face[i], c + 1);
            }
            if j > 0 {
                link(sy(i, j - 1), st.x_center[i] / st.y_face[j - 1], c - nx);
            }
            if j + 1 < ny {
                link(sy(i, j), st.x_center[i] / st.y_face[j], c + nx);
            }
            // mass terms
            let mut t = mc * lambda[c] * p[c];
            for nb in [
                (i > 0).then(|| c - 1),
                (i + 1 < nx).then(|| c + 1),
                (j > 0).then(|| c - nx),
                (j + 1 < ny).then(|| c + nx),
            ]
            .into_iter()
            .flatten()
            {
                t += md * 0.5 * (lambda[c] * p[nb] + lambda[nb] * p[c]);
            }
            total -= t * dkappa * st.x_center[i] * st.y_center[j];
            2.0 * total.re
        })
        .collect();
    Ok(out)
}
