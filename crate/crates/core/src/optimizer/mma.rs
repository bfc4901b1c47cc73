//! Method of moving asymptotes for `min f0(x)` subject to `f_i(x) <= 0` and
//! box bounds.
//!
//! Each outer step builds a separable convex approximation around the current
//! iterate and minimizes it. Without constraints the subproblem separates per
//! variable and has a closed-form minimizer; with constraints it is solved by
//! a primal-dual interior point method on the dual system of size `m + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tuning constants of the asymptote update and the approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmaParams {
    /// Initial asymptote distance as a fraction of the variable range.
    pub asy_init: f64,
    /// Asymptote growth factor when consecutive steps have the same sign.
    pub asy_incr: f64,
    /// Asymptote shrink factor when consecutive steps oscillate.
    pub asy_decr: f64,
    /// Maximum step per iteration as a fraction of the variable range.
    pub move_limit: f64,
    pub albefa: f64,
    pub raa0: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            asy_init: 0.5,
            asy_incr: 1.2,
            asy_decr: 0.7,
            move_limit: 0.2,
            albefa: 0.1,
            raa0: 1e-5,
        }
    }
}

impl MmaParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.asy_init > 0.0
            && self.asy_incr >= 1.0
            && self.asy_decr > 0.0
            && self.asy_decr <= 1.0
            && self.move_limit > 0.0
            && self.move_limit <= 1.0
            && self.albefa > 0.0
            && self.albefa < 1.0
            && self.raa0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid MMA parameters {self:?}")))
        }
    }
}

/// Iteration state carried between MMA updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmaState<T> {
    pub low: Vec<T>,
    pub upp: Vec<T>,
    pub xold1: Vec<T>,
    pub xold2: Vec<T>,
    /// Number of updates performed so far.
    pub iteration: usize,
    pub params: MmaParams,
}

/// Constraint values `f_i(x)` and their gradients (`m` rows of length `n`).
#[derive(Debug, Clone, Default)]
pub struct Constraints<T> {
    pub values: Vec<T>,
    pub gradients: Vec<Vec<T>>,
}

impl<T> Constraints<T> {
    pub fn none() -> Self {
        Self {
            values: Vec::new(),
            gradients: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Separable approximation built around one iterate.
#[derive(Debug, Clone)]
pub struct Subproblem<T> {
    pub low: Vec<T>,
    pub upp: Vec<T>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub p0: Vec<T>,
    pub q0: Vec<T>,
    pub p: Vec<Vec<T>>,
    pub q: Vec<Vec<T>>,
    pub b: Vec<T>,
}

impl<T: Real> Subproblem<T> {
    /// Value of the objective approximation at `x`, without the constant
    /// term.
    pub fn objective(&self, x: &[T]) -> T {
        x.iter()
            .enumerate()
            .map(|(j, &xj)| self.p0[j] / (self.upp[j] - xj) + self.q0[j] / (xj - self.low[j]))
            .sum()
    }
}

impl<T: Real> MmaState<T> {
    pub fn new(n: usize, params: MmaParams) -> Self {
        Self {
            low: vec![T::zero(); n],
            upp: vec![T::zero(); n],
            xold1: vec![T::zero(); n],
            xold2: vec![T::zero(); n],
            iteration: 0,
            params,
        }
    }

    /// Builds the approximation at `x` and advances the asymptotes.
    pub fn subproblem(
        &mut self,
        x: &[T],
        bounds: (&[T], &[T]),
        df0: &[T],
        cons: &Constraints<T>,
    ) -> Result<Subproblem<T>> {
        let n = x.len();
        let (xmin, xmax) = bounds;
        if df0.len() != n || xmin.len() != n || xmax.len() != n || self.low.len() != n {
            return Err(Error::ShapeMismatch {
                context: "MMA variables",
                expected: self.low.len(),
                actual: n,
            });
        }
        if df0.iter().any(|g| !g.is_finite()) {
            return Err(Error::Optimizer("non-finite objective gradient".into()));
        }
        for (i, row) in cons.gradients.iter().enumerate() {
            if row.len() != n {
                return Err(Error::ShapeMismatch {
                    context: "constraint gradient",
                    expected: n,
                    actual: row.len(),
                });
            }
            if row.iter().any(|g| !g.is_finite()) || !cons.values[i].is_finite() {
                return Err(Error::Optimizer(format!("non-finite data in constraint {i}")));
            }
        }
        if cons.gradients.len() != cons.values.len() {
            return Err(Error::ShapeMismatch {
                context: "constraint count",
                expected: cons.values.len(),
                actual: cons.gradients.len(),
            });
        }
        let pr = self.params;
        let l = T::lit;
        self.iteration += 1;
        for j in 0..n {
            let range = xmax[j] - xmin[j];
            if self.iteration <= 2 {
                self.low[j] = x[j] - l(pr.asy_init) * range;
                self.upp[j] = x[j] + l(pr.asy_init) * range;
            } else {
                let z = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if z < T::zero() {
                    l(pr.asy_decr)
                } else if z > T::zero() {
                    l(pr.asy_incr)
                } else {
                    T::one()
                };
                let lo = x[j] - factor * (self.xold1[j] - self.low[j]);
                let up = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = lo.max(x[j] - l(10.0) * range).min(x[j] - l(0.01) * range);
                self.upp[j] = up.min(x[j] + l(10.0) * range).max(x[j] + l(0.01) * range);
            }
        }
        let mut alpha = vec![T::zero(); n];
        let mut beta = vec![T::zero(); n];
        let mut p0 = vec![T::zero(); n];
        let mut q0 = vec![T::zero(); n];
        let m = cons.len();
        let mut p = vec![vec![T::zero(); n]; m];
        let mut q = vec![vec![T::zero(); n]; m];
        let mut b: Vec<T> = cons.values.iter().map(|v| -*v).collect();
        let split = |g: T, ux2: T, xl2: T, scale: T| {
            let gp = g.max(T::zero());
            let gm = (-g).max(T::zero());
            let pq = l(0.001) * (gp + gm) + l(pr.raa0) / scale;
            ((gp + pq) * ux2, (gm + pq) * xl2)
        };
        for j in 0..n {
            let range = xmax[j] - xmin[j];
            let a = self.low[j] + l(pr.albefa) * (x[j] - self.low[j]);
            alpha[j] = a.max(x[j] - l(pr.move_limit) * range).max(xmin[j]);
            let bb = self.upp[j] - l(pr.albefa) * (self.upp[j] - x[j]);
            beta[j] = bb.min(x[j] + l(pr.move_limit) * range).min(xmax[j]);
            let scale = range.max(l(1e-5));
            let ux1 = self.upp[j] - x[j];
            let xl1 = x[j] - self.low[j];
            let (pp, qq) = split(df0[j], ux1 * ux1, xl1 * xl1, scale);
            p0[j] = pp;
            q0[j] = qq;
            for i in 0..m {
                let (pp, qq) = split(cons.gradients[i][j], ux1 * ux1, xl1 * xl1, scale);
                p[i][j] = pp;
                q[i][j] = qq;
                b[i] += pp / ux1 + qq / xl1;
            }
        }
        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        Ok(Subproblem {
            low: self.low.clone(),
            upp: self.upp.clone(),
            alpha,
            beta,
            p0,
            q0,
            p,
            q,
            b,
        })
    }

    /// One MMA step: returns the next iterate.
    pub fn update(
        &mut self,
        x: &[T],
        bounds: (&[T], &[T]),
        df0: &[T],
        cons: &Constraints<T>,
    ) -> Result<Vec<T>> {
        let (xmin, xmax) = bounds;
        for j in 0..x.len().min(xmin.len()).min(xmax.len()) {
            if !(x[j] >= xmin[j] && x[j] <= xmax[j]) {
                return Err(Error::Optimizer(format!("variable {j} outside its bounds")));
            }
        }
        let sub = self.subproblem(x, bounds, df0, cons)?;
        let mut next = if cons.is_empty() {
            solve_unconstrained(&sub)
        } else {
            solve_dual(&sub, 1e-7)?
        };
        for j in 0..next.len() {
            next[j] = next[j].max(xmin[j]).min(xmax[j]);
        }
        Ok(next)
    }
}

/// Per-variable minimizer of `p/(u-x) + q/(x-l)` on `[alpha, beta]`.
pub fn solve_unconstrained<T: Real>(sub: &Subproblem<T>) -> Vec<T> {
    (0..sub.p0.len())
        .map(|j| {
            let (sp, sq) = (sub.p0[j].sqrt(), sub.q0[j].sqrt());
            let x = (sp * sub.low[j] + sq * sub.upp[j]) / (sp + sq);
            x.max(sub.alpha[j]).min(sub.beta[j])
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn dense_solve<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(k);
        if !(a[piv][k].abs() > T::zero()) {
            return Err(Error::Optimizer("singular MMA dual system".into()));
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for c in k..n {
                let v = a[k][c];
                a[i][c] -= f * v;
            }
            let v = b[k];
            b[i] -= f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..n {
            s -= a[k][c] * x[c];
        }
        x[k] = s / a[k][k];
    }
    Ok(x)
}

/// Interior point state of the constrained subproblem.
#[derive(Clone)]
struct Ip<T> {
    x: Vec<T>,
    y: Vec<T>,
    z: T,
    lam: Vec<T>,
    xsi: Vec<T>,
    eta: Vec<T>,
    mu: Vec<T>,
    zet: T,
    s: Vec<T>,
}

/// Standard elastic-variable constants (`a0 = 1`, `a = 0`, `c = 1000`, `d = 1`).
const C_ELASTIC: f64 = 1000.0;

fn residual<T: Real>(sub: &Subproblem<T>, v: &Ip<T>, epsi: T) -> Vec<T> {
    let n = v.x.len();
    let m = v.lam.len();
    let c = T::lit(C_ELASTIC);
    let mut r = Vec::with_capacity(3 * n + 4 * m + 2);
    let mut gvec = vec![T::zero(); m];
    for j in 0..n {
        let ux = sub.upp[j] - v.x[j];
        let xl = v.x[j] - sub.low[j];
        let mut plam = sub.p0[j];
        let mut qlam = sub.q0[j];
        for i in 0..m {
            plam += sub.p[i][j] * v.lam[i];
            qlam += sub.q[i][j] * v.lam[i];
            gvec[i] += sub.p[i][j] / ux + sub.q[i][j] / xl;
        }
        r.push(plam / (ux * ux) - qlam / (xl * xl) - v.xsi[j] + v.eta[j]);
    }
    for i in 0..m {
        r.push(c + v.y[i] - v.mu[i] - v.lam[i]);
    }
    r.push(T::one() - v.zet);
    for i in 0..m {
        r.push(gvec[i] - v.y[i] + v.s[i] - sub.b[i]);
    }
    for j in 0..n {
        r.push(v.xsi[j] * (v.x[j] - sub.alpha[j]) - epsi);
        r.push(v.eta[j] * (sub.beta[j] - v.x[j]) - epsi);
    }
    for i in 0..m {
        r.push(v.mu[i] * v.y[i] - epsi);
        r.push(v.lam[i] * v.s[i] - epsi);
    }
    r.push(v.zet * v.z - epsi);
    r
}

fn norm2<T: Real>(r: &[T]) -> T {
    r.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

fn norm_inf<T: Real>(r: &[T]) -> T {
    r.iter().fold(T::zero(), |a, v| a.max(v.abs()))
}

/// Primal-dual interior point solution of the constrained subproblem.
pub fn solve_dual<T: Real>(sub: &Subproblem<T>, eps_min: f64) -> Result<Vec<T>> {
    let n = sub.p0.len();
    let m = sub.b.len();
    let l = T::lit;
    let one = T::one();
    let half = l(0.5);
    let c = l(C_ELASTIC);
    let x: Vec<T> = (0..n).map(|j| half * (sub.alpha[j] + sub.beta[j])).collect();
    let mut v = Ip {
        xsi: (0..n).map(|j| (one / (x[j] - sub.alpha[j])).max(one)).collect(),
        eta: (0..n).map(|j| (one / (sub.beta[j] - x[j])).max(one)).collect(),
        x,
        y: vec![one; m],
        z: one,
        lam: vec![one; m],
        mu: vec![one.max(half * c); m],
        zet: one,
        s: vec![one; m],
    };
    let mut epsi = one;
    while epsi > l(eps_min) {
        let mut res = residual(sub, &v, epsi);
        let mut resnorm = norm2(&res);
        let mut resmax = norm_inf(&res);
        let mut inner = 0;
        while resmax > l(0.9) * epsi && inner < 200 {
            inner += 1;
            let mut gg = vec![vec![T::zero(); n]; m];
            let mut gvec = vec![T::zero(); m];
            let mut delx = vec![T::zero(); n];
            let mut diagx = vec![T::zero(); n];
            for j in 0..n {
                let ux = sub.upp[j] - v.x[j];
                let xl = v.x[j] - sub.low[j];
                let mut plam = sub.p0[j];
                let mut qlam = sub.q0[j];
                for i in 0..m {
                    plam += sub.p[i][j] * v.lam[i];
                    qlam += sub.q[i][j] * v.lam[i];
                    gvec[i] += sub.p[i][j] / ux + sub.q[i][j] / xl;
                    gg[i][j] = sub.p[i][j] / (ux * ux) - sub.q[i][j] / (xl * xl);
                }
                let xa = v.x[j] - sub.alpha[j];
                let bx = sub.beta[j] - v.x[j];
                delx[j] = plam / (ux * ux) - qlam / (xl * xl) - epsi / xa + epsi / bx;
                diagx[j] = l(2.0) * (plam / (ux * ux * ux) + qlam / (xl * xl * xl)) + v.xsi[j] / xa + v.eta[j] / bx;
            }
            let dely: Vec<T> = (0..m).map(|i| c + v.y[i] - v.lam[i] - epsi / v.y[i]).collect();
            let delz = one - epsi / v.z;
            let dellam: Vec<T> = (0..m).map(|i| gvec[i] - v.y[i] - sub.b[i] + epsi / v.lam[i]).collect();
            let diagy: Vec<T> = (0..m).map(|i| one + v.mu[i] / v.y[i]).collect();
            // reduced system in (dlam, dz)
            let mut aa = vec![vec![T::zero(); m + 1]; m + 1];
            let mut bb = vec![T::zero(); m + 1];
            for i in 0..m {
                let mut s = T::zero();
                for j in 0..n {
                    s += gg[i][j] * delx[j] / diagx[j];
                }
                bb[i] = dellam[i] + dely[i] / diagy[i] - s;
                for k in 0..m {
                    let mut acc = T::zero();
                    for j in 0..n {
                        acc += gg[i][j] * gg[k][j] / diagx[j];
                    }
                    aa[i][k] = acc;
                }
                aa[i][i] += v.s[i] / v.lam[i] + one / diagy[i];
            }
            bb[m] = delz;
            aa[m][m] = -v.zet / v.z;
            let sol = dense_solve(aa, bb)?;
            let dlam = &sol[..m];
            let dz = sol[m];
            let dx: Vec<T> = (0..n)
                .map(|j| {
                    let mut s = T::zero();
                    for i in 0..m {
                        s += gg[i][j] * dlam[i];
                    }
                    -delx[j] / diagx[j] - s / diagx[j]
                })
                .collect();
            let dy: Vec<T> = (0..m).map(|i| -dely[i] / diagy[i] + dlam[i] / diagy[i]).collect();
            let dxsi: Vec<T> = (0..n)
                .map(|j| {
                    let xa = v.x[j] - sub.alpha[j];
                    -v.xsi[j] + epsi / xa - v.xsi[j] * dx[j] / xa
                })
                .collect();
            let deta: Vec<T> = (0..n)
                .map(|j| {
                    let bx = sub.beta[j] - v.x[j];
                    -v.eta[j] + epsi / bx + v.eta[j] * dx[j] / bx
                })
                .collect();
            let dmu: Vec<T> = (0..m).map(|i| -v.mu[i] + epsi / v.y[i] - v.mu[i] * dy[i] / v.y[i]).collect();
            let dzet = -v.zet + epsi / v.z - v.zet * dz / v.z;
            let ds: Vec<T> = (0..m).map(|i| -v.s[i] + epsi / v.lam[i] - v.s[i] * dlam[i] / v.lam[i]).collect();

            let mut stm = one;
            let k = l(-1.01);
            let mut upd = |val: T, d: T| stm = stm.max(k * d / val);
            for i in 0..m {
                upd(v.y[i], dy[i]);
                upd(v.lam[i], dlam[i]);
                upd(v.mu[i], dmu[i]);
                upd(v.s[i], ds[i]);
            }
            upd(v.z, dz);
            upd(v.zet, dzet);
            for j in 0..n {
                upd(v.xsi[j], dxsi[j]);
                upd(v.eta[j], deta[j]);
                upd(v.x[j] - sub.alpha[j], dx[j]);
                upd(sub.beta[j] - v.x[j], -dx[j]);
            }
            let mut step = one / stm;
            let old = v.clone();
            let mut tries = 0;
            let mut newnorm = l(2.0) * resnorm;
            while newnorm > resnorm && tries < 50 {
                tries += 1;
                let add = |a: &[T], d: &[T]| -> Vec<T> { a.iter().zip(d).map(|(a, d)| *a + step * *d).collect() };
                v = Ip {
                    x: add(&old.x, &dx),
                    y: add(&old.y, &dy),
                    z: old.z + step * dz,
                    lam: add(&old.lam, dlam),
                    xsi: add(&old.xsi, &dxsi),
                    eta: add(&old.eta, &deta),
                    mu: add(&old.mu, &dmu),
                    zet: old.zet + step * dzet,
                    s: add(&old.s, &ds),
                };
                res = residual(sub, &v, epsi);
                newnorm = norm2(&res);
                step = step * half;
            }
            resnorm = newnorm;
            resmax = norm_inf(&res);
        }
        epsi = epsi * l(0.1);
    }
    if v.x.iter().any(|x| !x.is_finite()) {
        return Err(Error::Optimizer("MMA subproblem diverged".into()));
    }
    let viol: Vec<String> = (0..m)
        .filter(|&i| v.y[i] > l(1e-6))
        .map(|i| format!("constraint {i} violated by {:.3e}", v.y[i].as_f64()))
        .collect();
    if !viol.is_empty() {
        log::warn!("MMA subproblem infeasible: {}", viol.join(", "));
    }
    Ok(v.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CANT: [f64; 5] = [61.0, 37.0, 19.0, 7.0, 1.0];
    const C1: f64 = 0.0624;

    /// Minimum of `C1 * sum x` subject to `sum a_i / x_i^3 <= 1` from the KKT
    /// conditions: `x_i` is proportional to `a_i^(1/4)`.
    fn cantilever_optimum() -> f64 {
        let s: f64 = CANT.iter().map(|a| a.powf(0.25)).sum();
        C1 * s.powf(4.0 / 3.0)
    }

    fn run_cantilever<T: Real>(iters: usize) -> Vec<T> {
        let n = 5;
        let mut x = vec![T::lit(5.0); n];
        let xmin = vec![T::lit(1.0); n];
        let xmax = vec![T::lit(10.0); n];
        let params = MmaParams {
            move_limit: 1.0,
            ..MmaParams::default()
        };
        let mut st = MmaState::new(n, params);
        for _ in 0..iters {
            let df0 = vec![T::lit(C1); n];
            let g: T = (0..n).map(|j| T::lit(CANT[j]) / x[j].powi(3)).sum::<T>() - T::one();
            let dg: Vec<T> = (0..n).map(|j| T::lit(-3.0 * CANT[j]) / x[j].powi(4)).collect();
            let cons = Constraints {
                values: vec![g],
                gradients: vec![dg],
            };
            x = st.update(&x, (&xmin, &xmax), &df0, &cons).unwrap();
        }
        x
    }

    #[test]
    fn kkt_oracle_value() {
        assert!((cantilever_optimum() - 1.33996).abs() < 1e-4);
    }

    #[test]
    fn cantilever_converges_to_optimum() {
        let x: Vec<f64> = run_cantilever(30);
        let f: f64 = C1 * x.iter().sum::<f64>();
        let g: f64 = (0..5).map(|j| CANT[j] / x[j].powi(3)).sum::<f64>() - 1.0;
        assert!((f - cantilever_optimum()).abs() < 1e-2, "f = {f}");
        assert!(g < 1e-4, "g = {g}");
    }

    #[test]
    fn cantilever_single_precision() {
        let x: Vec<f32> = run_cantilever(30);
        let f = C1 as f32 * x.iter().sum::<f32>();
        assert!((f as f64 - cantilever_optimum()).abs() < 1e-2);
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let x: Vec<f64> = vec![0.3, 0.5, 0.9, 0.0, 1.0];
        let (lo, hi) = (vec![0.0; 5], vec![1.0; 5]);
        let mut st = MmaState::new(5, MmaParams::default());
        for _ in 0..4 {
            let nx = st.update(&x, (&lo, &hi), &[0.0; 5], &Constraints::none()).unwrap();
            for (a, b) in nx.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut st = MmaState::new(2, MmaParams::default());
        let r = st.update(&[0.5, 0.5], (&[0.0; 2], &[1.0; 2]), &[f64::NAN, 0.0], &Constraints::none());
        assert!(matches!(r, Err(Error::Optimizer(_))));
    }

    #[test]
    fn reciprocal_constraint_matches_kkt() {
        // min x1 + 2 x2 s.t. 1/x1 + 1/x2 <= 4; KKT gives x1 = sqrt(l), x2 = sqrt(l/2)
        let r = (1.0 + 2f64.sqrt()) / 4.0;
        let want = [r, r / 2f64.sqrt()];
        let (lo, hi) = (vec![0.1; 2], vec![5.0; 2]);
        let mut x = vec![2.0, 2.0];
        let mut st = MmaState::new(2, MmaParams { move_limit: 1.0, ..MmaParams::default() });
        for _ in 0..60 {
            let cons = Constraints {
                values: vec![1.0 / x[0] + 1.0 / x[1] - 4.0],
                gradients: vec![vec![-1.0 / (x[0] * x[0]), -1.0 / (x[1] * x[1])]],
            };
            x = st.update(&x, (&lo, &hi), &[1.0, 2.0], &cons).unwrap();
        }
        for k in 0..2 {
            assert!((x[k] - want[k]).abs() < 1e-4, "{x:?} vs {want:?}");
        }
    }

    proptest! {
        #[test]
        fn positive_gradient_moves_down_within_limit(
            x in proptest::collection::vec(0.0f64..1.0, 1..20),
            g in 1e-3f64..10.0,
        ) {
            let n = x.len();
            let (lo, hi) = (vec![0.0; n], vec![1.0; n]);
            let mut st = MmaState::new(n, MmaParams::default());
            let nx = st.update(&x, (&lo, &hi), &vec![g; n], &Constraints::none()).unwrap();
            for j in 0..n {
                prop_assert!(nx[j] <= x[j]);
                prop_assert!(x[j] - nx[j] <= 0.2 + 1e-12);
                prop_assert!(nx[j] >= 0.0 && nx[j] <= 1.0);
            }
        }

        #[test]
        fn subproblem_never_worse_than_current(
            x in proptest::collection::vec(0.0f64..1.0, 1..20),
            gs in proptest::collection::vec(-5.0f64..5.0, 20),
            steps in 1usize..5,
        ) {
            let n = x.len();
            let (lo, hi) = (vec![0.0; n], vec![1.0; n]);
            let mut st = MmaState::new(n, MmaParams::default());
            let mut cur = x.clone();
            for k in 0..steps {
                let g: Vec<f64> = (0..n).map(|j| gs[(j + k) % gs.len()]).collect();
                let sub = st.subproblem(&cur, (&lo, &hi), &g, &Constraints::none()).unwrap();
                let next = solve_unconstrained(&sub);
                prop_assert!(sub.objective(&next) <= sub.objective(&cur) + 1e-12 * sub.objective(&cur).abs());
                for v in &next {
                    prop_assert!(*v >= 0.0 && *v <= 1.0);
                }
                cur = next;
            }
        }

        #[test]
        fn asymptotes_bracket_iterate(
            x in proptest::collection::vec(0.0f64..1.0, 1..10),
            gs in proptest::collection::vec(-5.0f64..5.0, 10),
        ) {
            let n = x.len();
            let (lo, hi) = (vec![0.0; n], vec![1.0; n]);
            let mut st = MmaState::new(n, MmaParams::default());
            let mut cur = x.clone();
            for k in 0..6 {
                let g: Vec<f64> = (0..n).map(|j| gs[(j * 3 + k) % gs.len()]).collect();
                let sub = st.subproblem(&cur, (&lo, &hi), &g, &Constraints::none()).unwrap();
                for j in 0..n {
                    prop_assert!(sub.low[j] < sub.alpha[j] && sub.alpha[j] <= cur[j]);
                    prop_assert!(cur[j] <= sub.beta[j] && sub.beta[j] < sub.upp[j]);
                    prop_assert!(sub.low[j].is_finite() && sub.upp[j].is_finite());
                }
                cur = solve_unconstrained(&sub);
            }
        }
    }
}
