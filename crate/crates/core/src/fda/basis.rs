use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quadrature::piecewise_rule;
use crate::error::{Error, Result};

/// Clamped B-spline basis with equally spaced interior knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    /// Polynomial order (degree + 1); 4 is cubic.
    pub order: usize,
    /// Full knot vector, boundary knots repeated `order` times.
    pub knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(domain: (f64, f64), n_basis: usize, order: usize) -> Result<Self> {
        let (a, b) = domain;
        if order == 0 {
            return Err(Error::InvalidParameter("B-spline order must be >= 1".into()));
        }
        if n_basis < order {
            return Err(Error::InvalidParameter(format!(
                "n_basis ({n_basis}) must be at least the order ({order})"
            )));
        }
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid basis domain [{a}, {b}]")));
        }
        let interior = n_basis - order;
        let mut knots = vec![a; order];
        let step = (b - a) / (interior + 1) as f64;
        knots.extend((1..=interior).map(|i| a + i as f64 * step));
        knots.extend(std::iter::repeat_n(b, order));
        Ok(BSplineBasis { order, knots })
    }

    /// Basis from an explicit non-decreasing knot vector.
    pub fn from_knots(order: usize, knots: Vec<f64>) -> Result<Self> {
        if order == 0 || knots.len() < 2 * order {
            return Err(Error::InvalidParameter("knot vector too short for order".into()));
        }
        if knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidParameter("knots must be non-decreasing".into()));
        }
        let basis = BSplineBasis { order, knots };
        let (a, b) = basis.domain();
        if !(b > a) {
            return Err(Error::InvalidParameter("empty basis domain".into()));
        }
        Ok(basis)
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn degree(&self) -> usize {
        self.order - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.order - 1], self.knots[self.n_basis()])
    }

    /// Distinct knots inside the domain, i.e. the polynomial breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.knots[self.order - 1..=self.n_basis()].to_vec();
        b.dedup();
        b
    }

    /// The same basis translated by `delta`.
    pub fn shifted(&self, delta: f64) -> BSplineBasis {
        BSplineBasis {
            order: self.order,
            knots: self.knots.iter().map(|k| k + delta).collect(),
        }
    }

    fn span(&self, x: f64) -> usize {
        let p = self.degree();
        let n = self.n_basis();
        if x >= self.knots[n] {
            // Right end belongs to the last non-empty span.
            let mut i = n - 1;
            while i > p && self.knots[i] == self.knots[i + 1] {
                i -= 1;
            }
            return i;
        }
        // Largest i in [p, n-1] with knots[i] <= x.
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Values of all basis functions at `x`; zero outside the domain.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.eval_deriv(x, 0)
    }

    /// `deriv`-th derivative of all basis functions at `x`.
    pub fn eval_deriv(&self, x: f64, deriv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_basis()];
        let (a, b) = self.domain();
        if !(x >= a && x <= b) || deriv > self.degree() {
            return out;
        }
        let span = self.span(x);
        let ders = self.ders_basis_funs(span, x, deriv);
        let p = self.degree();
        for (j, v) in ders[deriv].iter().enumerate() {
            out[span - p + j] = *v;
        }
        out
    }

    /// Non-zero basis functions and their derivatives up to `n` on `span`
    /// (Piegl & Tiller, algorithm A2.3).
    fn ders_basis_funs(&self, span: usize, x: f64, n: usize) -> Vec<Vec<f64>> {
        let p = self.degree();
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; n + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let p_i = p as isize;
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p_i {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n as isize {
                let mut d = 0.0;
                let rk = r - k;
                let pk = p_i - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk as usize];
                }
                let j1 = if rk >= -1 { 1 } else { -rk };
                let j2 = if r - 1 <= pk { k - 1 } else { p_i - r };
                for j in j1..=j2 {
                    let (ju, rkj) = (j as usize, (rk + j) as usize);
                    a[s2][ju] = (a[s1][ju] - a[s1][ju - 1]) / ndu[(pk + 1) as usize][rkj];
                    d += a[s2][ju] * ndu[rkj][pk as usize];
                }
                if r <= pk {
                    a[s2][k as usize] = -a[s1][(k - 1) as usize] / ndu[(pk + 1) as usize][r as usize];
                    d += a[s2][k as usize] * ndu[r as usize][pk as usize];
                }
                ders[k as usize][r as usize] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().skip(1) {
            row.iter_mut().for_each(|v| *v *= factor);
            factor *= p as f64 - k as f64;
        }
        ders
    }

    /// Design matrix, one row per evaluation point.
    pub fn design(&self, points: &[f64], deriv: usize) -> DMatrix<f64> {
        let k = self.n_basis();
        let mut m = DMatrix::zeros(points.len(), k);
        for (i, &t) in points.iter().enumerate() {
            for (j, v) in self.eval_deriv(t, deriv).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `G[i][j] = ∫ B_i^(d1) B_j^(d2)` over the domain, integrated exactly.
    pub fn gram(&self, d1: usize, d2: usize) -> DMatrix<f64> {
        let k = self.n_basis();
        let (a, b) = self.domain();
        // Products have degree <= 2(order-1); `order` nodes per piece are exact.
        let mut g = DMatrix::zeros(k, k);
        for (t, w) in piecewise_rule(&self.breakpoints(), a, b, self.order) {
            let u = DVector::from_vec(self.eval_deriv(t, d1));
            let v = DVector::from_vec(self.eval_deriv(t, d2));
            g.ger(w, &u, &v, 1.0);
        }
        g
    }

    /// Roughness penalty `∫ B_i'' B_j''`.
    pub fn penalty(&self) -> DMatrix<f64> {
        self.gram(2, 2)
    }

    /// `∫_lo^hi B_i(t) w(t) dt` for every basis function. Exact when `w` is a
    /// piecewise polynomial of degree at most `w_degree` with breakpoints in
    /// `extra_breaks`.
    pub fn integrate_against<F: Fn(f64) -> f64>(
        &self,
        w: F,
        extra_breaks: &[f64],
        w_degree: usize,
        lo: f64,
        hi: f64,
    ) -> Vec<f64> {
        let mut breaks = self.breakpoints();
        breaks.extend_from_slice(extra_breaks);
        let m = (self.degree() + w_degree + 2).div_ceil(2);
        let mut out = vec![0.0; self.n_basis()];
        for (t, wt) in piecewise_rule(&breaks, lo, hi, m) {
            let f = w(t) * wt;
            for (o, b) in out.iter_mut().zip(self.eval(t)) {
                *o += b * f;
            }
        }
        out
    }
}
