//! Tensor-product Lagrange interpolation on the cell-centred grid.

/// Number of grid points per axis used by every interpolation stencil.
pub const STENCIL_POINTS: usize = 6;

/// Weights of a point evaluation (and optionally its gradient) expressed
/// as a linear combination of grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub cells: Vec<usize>,
    pub weights: Vec<f64>,
    /// d/dx weights in physical units (1/m); empty if not requested.
    pub dx: Vec<f64>,
    /// d/dy weights in physical units (1/m); empty if not requested.
    pub dy: Vec<f64>,
}

impl Stencil {
    pub fn apply<T>(&self, values: &[T]) -> T
    where
        T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        self.cells
            .iter()
            .zip(&self.weights)
            .fold(T::default(), |acc, (&c, &w)| acc + values[c] * w)
    }

    pub fn apply_dx<T>(&self, values: &[T]) -> T
    where
        T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        self.cells
            .iter()
            .zip(&self.dx)
            .fold(T::default(), |acc, (&c, &w)| acc + values[c] * w)
    }

    pub fn apply_dy<T>(&self, values: &[T]) -> T
    where
        T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        self.cells
            .iter()
            .zip(&self.dy)
            .fold(T::default(), |acc, (&c, &w)| acc + values[c] * w)
    }
}

/// First grid index of the stencil around continuous index coordinate `x`.
pub fn stencil_start(x: f64) -> i64 {
    x.floor() as i64 - (STENCIL_POINTS as i64 / 2 - 1)
}

/// Lagrange basis values and derivatives at `t` for integer nodes
/// `0..STENCIL_POINTS` (t measured from the first node).
pub fn lagrange_1d(t: f64) -> ([f64; STENCIL_POINTS], [f64; STENCIL_POINTS]) {
    let mut val = [0.0; STENCIL_POINTS];
    let mut der = [0.0; STENCIL_POINTS];
    for k in 0..STENCIL_POINTS {
        let xk = k as f64;
        let mut v = 1.0;
        for m in 0..STENCIL_POINTS {
            if m != k {
                v *= (t - m as f64) / (xk - m as f64);
            }
        }
        val[k] = v;
        let mut d = 0.0;
        for m in 0..STENCIL_POINTS {
            if m == k {
                continue;
            }
            let mut prod = 1.0 / (xk - m as f64);
            for l in 0..STENCIL_POINTS {
                if l != k && l != m {
                    prod *= (t - l as f64) / (xk - l as f64);
                }
            }
            d += prod;
        }
        der[k] = d;
    }
    (val, der)
}

/// Builds the interpolation stencil at continuous index coordinates
/// `(x, y)` of a grid with `nx` columns. Returns `None` if the stencil
/// would leave the grid.
pub fn build_stencil(
    x: f64,
    y: f64,
    nx: usize,
    ny: usize,
    h: f64,
    with_gradient: bool,
) -> Option<Stencil> {
    let i0 = stencil_start(x);
    let j0 = stencil_start(y);
    let n = STENCIL_POINTS as i64;
    if i0 < 0 || j0 < 0 || i0 + n > nx as i64 || j0 + n > ny as i64 {
        return None;
    }
    let (wx, dwx) = lagrange_1d(x - i0 as f64);
    let (wy, dwy) = lagrange_1d(y - j0 as f64);
    let cap = STENCIL_POINTS * STENCIL_POINTS;
    let mut st = Stencil {
        cells: Vec::with_capacity(cap),
        weights: Vec::with_capacity(cap),
        dx: Vec::new(),
        dy: Vec::new(),
    };
    for (b, (&vy, &dvy)) in wy.iter().zip(&dwy).enumerate() {
        for (a, (&vx, &dvx)) in wx.iter().zip(&dwx).enumerate() {
            let cell = (i0 as usize + a) + nx * (j0 as usize + b);
            st.cells.push(cell);
            st.weights.push(vx * vy);
            if with_gradient {
                st.dx.push(dvx * vy / h);
                st.dy.push(vx * dvy / h);
            }
        }
    }
    Some(st)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_quintic_polynomials() {
        let f = |x: f64, y: f64| 1.0 + 0.3 * x - 0.2 * y * y + 0.01 * x.powi(5) + 0.02 * x * y.powi(3);
        let fx = |x: f64, y: f64| 0.3 + 0.05 * x.powi(4) + 0.02 * y.powi(3);
        let (nx, ny) = (12, 11);
        let h = 0.5;
        let grid: Vec<f64> = (0..nx * ny)
            .map(|c| f((c % nx) as f64, (c / nx) as f64))
            .collect();
        let st = build_stencil(4.3, 5.7, nx, ny, h, true).unwrap();
        assert!((st.apply(&grid) - f(4.3, 5.7)).abs() < 1e-9);
        // derivative in index units times 1/h
        assert!((st.apply_dx(&grid) - fx(4.3, 5.7) / h).abs() < 1e-8);
        let total: f64 = st.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn node_evaluation_is_exact_selection() {
        let st = build_stencil(5.0, 5.0, 12, 12, 1.0, false).unwrap();
        for (c, w) in st.cells.iter().zip(&st.weights) {
            let expect = if *c == 5 + 12 * 5 { 1.0 } else { 0.0 };
            assert!((w - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn out_of_grid_is_none() {
        assert!(build_stencil(1.0, 5.0, 12, 12, 1.0, false).is_none());
        assert!(build_stencil(9.5, 5.0, 12, 12, 1.0, false).is_none());
    }
}
