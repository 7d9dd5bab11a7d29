use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::basis::BSplineBasis;
use super::quadrature::piecewise_rule;
use crate::error::{Error, Result};

/// A real function on a closed interval that is polynomial between known
/// breakpoints, so products of curves can be integrated exactly.
pub trait Curve {
    fn domain(&self) -> (f64, f64);
    fn eval(&self, t: f64) -> f64;
    fn breakpoints(&self) -> Vec<f64>;
    /// Polynomial degree between breakpoints.
    fn degree(&self) -> usize;
}

/// Basis-expanded curve `f(t) = Σ_k c_k B_k(t)` restricted to `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedCurve {
    pub unit_id: String,
    pub basis: BSplineBasis,
    pub coefs: Vec<f64>,
    pub domain: (f64, f64),
}

impl SmoothedCurve {
    pub fn new(unit_id: impl Into<String>, basis: BSplineBasis, coefs: Vec<f64>) -> Result<Self> {
        if coefs.len() != basis.n_basis() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for a basis of {} functions",
                coefs.len(),
                basis.n_basis()
            )));
        }
        let domain = basis.domain();
        Ok(SmoothedCurve {
            unit_id: unit_id.into(),
            basis,
            coefs,
            domain,
        })
    }

    pub fn coef_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefs)
    }

    pub fn deriv(&self, t: f64, order: usize) -> f64 {
        self.basis
            .eval_deriv(t, order)
            .iter()
            .zip(&self.coefs)
            .map(|(b, c)| b * c)
            .sum()
    }

    /// `g(t) = f(t - delta)` on the translated domain.
    pub fn shifted(&self, delta: f64) -> SmoothedCurve {
        SmoothedCurve {
            unit_id: self.unit_id.clone(),
            basis: self.basis.shifted(delta),
            coefs: self.coefs.clone(),
            domain: (self.domain.0 + delta, self.domain.1 + delta),
        }
    }

    pub fn restricted(&self, lo: f64, hi: f64) -> Result<SmoothedCurve> {
        let (a, b) = self.domain;
        let (lo, hi) = (lo.max(a), hi.min(b));
        if !(hi > lo) {
            return Err(Error::EmptyDomain(vec![self.unit_id.clone()]));
        }
        Ok(SmoothedCurve {
            domain: (lo, hi),
            ..self.clone()
        })
    }

    pub fn scaled(&self, factor: f64) -> SmoothedCurve {
        SmoothedCurve {
            coefs: self.coefs.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    /// True when both curves expand on identical knots.
    pub fn same_basis(&self, other: &SmoothedCurve) -> bool {
        self.basis == other.basis
    }

    /// Maximum over the domain, searched on a tenth-of-a-day grid.
    pub fn max_value(&self) -> f64 {
        dense_grid(self.domain, 0.1)
            .into_iter()
            .map(|t| self.eval(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Location of the maximum, refined by golden-section search around the
    /// best point of a tenth-of-a-day grid.
    pub fn argmax(&self) -> f64 {
        let grid = dense_grid(self.domain, 0.1);
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| self.eval(*a).total_cmp(&self.eval(*b)))
            .unwrap();
        let (mut lo, mut hi) = ((best - 0.1).max(self.domain.0), (best + 0.1).min(self.domain.1));
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if self.eval(m1) < self.eval(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        0.5 * (lo + hi)
    }

    /// Writes `day,value` at every integer day inside the domain.
    pub fn write_daily_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["day", "value"])?;
        for t in integer_days(self.domain) {
            w.write_record([t.to_string(), self.eval(t).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Curve for SmoothedCurve {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn eval(&self, t: f64) -> f64 {
        self.basis.eval(t).iter().zip(&self.coefs).map(|(b, c)| b * c).sum()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.basis.breakpoints()
    }

    fn degree(&self) -> usize {
        self.basis.degree()
    }
}

/// Values on a regular grid, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCurve {
    pub unit_id: String,
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl GridCurve {
    pub fn new(unit_id: impl Into<String>, start: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(step > 0.0) {
            return Err(Error::InvalidParameter("grid curve needs >= 2 points and a positive step".into()));
        }
        Ok(GridCurve {
            unit_id: unit_id.into(),
            start,
            step,
            values,
        })
    }

    /// Samples any curve on a grid.
    pub fn sample<C: Curve + ?Sized>(unit_id: &str, curve: &C, start: f64, step: f64, n: usize) -> Self {
        GridCurve {
            unit_id: unit_id.to_string(),
            start,
            step,
            values: (0..n).map(|i| curve.eval(start + i as f64 * step)).collect(),
        }
    }
}

impl Curve for GridCurve {
    fn domain(&self) -> (f64, f64) {
        (self.start, self.start + self.step * (self.values.len() - 1) as f64)
    }

    fn eval(&self, t: f64) -> f64 {
        let x = (t - self.start) / self.step;
        let last = self.values.len() - 1;
        if x <= 0.0 {
            return self.values[0];
        }
        if x >= last as f64 {
            return self.values[last];
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        if f == 0.0 {
            return self.values[i];
        }
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    fn breakpoints(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.start + i as f64 * self.step).collect()
    }

    fn degree(&self) -> usize {
        1
    }
}

/// Exact `∫_lo^hi f(t) g(t) dt` for piecewise polynomials.
pub fn integrate_product<F: Curve + ?Sized, G: Curve + ?Sized>(f: &F, g: &G, lo: f64, hi: f64) -> f64 {
    let mut breaks = f.breakpoints();
    breaks.extend(g.breakpoints());
    let m = (f.degree() + g.degree() + 2).div_ceil(2);
    piecewise_rule(&breaks, lo, hi, m)
        .into_iter()
        .map(|(t, w)| w * f.eval(t) * g.eval(t))
        .sum()
}

/// L2 inner product over the intersection of the two domains.
pub fn inner_product<F: Curve + ?Sized, G: Curve + ?Sized>(f: &F, g: &G) -> f64 {
    let (a1, b1) = f.domain();
    let (a2, b2) = g.domain();
    integrate_product(f, g, a1.max(a2), b1.min(b2))
}

pub(crate) fn dense_grid((a, b): (f64, f64), step: f64) -> Vec<f64> {
    let n = ((b - a) / step).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| a + i as f64 * step).collect();
    if *g.last().unwrap() < b {
        g.push(b);
    }
    g
}

/// Integer days `ceil(a)..=floor(b)`.
pub fn integer_days((a, b): (f64, f64)) -> Vec<f64> {
    let lo = (a - 1e-9).ceil() as i64;
    let hi = (b + 1e-9).floor() as i64;
    (lo..=hi).map(|d| d as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_translates_values() {
        let basis = BSplineBasis::new((0.0, 30.0), 8, 4).unwrap();
        let c = SmoothedCurve::new("u", basis, (0..8).map(|i| (i as f64).sin()).collect()).unwrap();
        let s = c.shifted(4.5);
        assert_eq!(s.domain, (4.5, 34.5));
        for t in [5.0, 12.3, 30.0] {
            assert!((s.eval(t) - c.eval(t - 4.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn product_integral_is_exact() {
        let basis = BSplineBasis::new((0.0, 10.0), 7, 4).unwrap();
        // The spline representing t^2 via quasi-interpolation is exact for cubics:
        // check ∫ f·g against a 2000-point Simpson rule instead.
        let f = SmoothedCurve::new("f", basis.clone(), vec![1.0, -2.0, 0.5, 3.0, 1.0, 0.0, 2.0]).unwrap();
        let g = GridCurve::new("g", 0.0, 1.0, (0..11).map(|i| (i * i % 7) as f64).collect()).unwrap();
        let exact = integrate_product(&f, &g, 0.0, 10.0);
        let n = 20_000;
        let h = 10.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let t = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f.eval(t) * g.eval(t);
        }
        s *= h / 3.0;
        assert!((exact - s).abs() < 1e-6, "{exact} vs {s}");
    }

    #[test]
    fn argmax_of_parabola() {
        // Spline reproduces the parabola -(t-3.37)^2 exactly (cubic space).
        let basis = BSplineBasis::new((0.0, 10.0), 10, 4).unwrap();
        let pts: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
        let phi = basis.design(&pts, 0);
        let y = DVector::from_iterator(pts.len(), pts.iter().map(|t| -(t - 3.37) * (t - 3.37)));
        let coefs = (phi.transpose() * &phi).cholesky().unwrap().solve(&(phi.transpose() * y));
        let c = SmoothedCurve::new("p", basis, coefs.iter().copied().collect()).unwrap();
        assert!((c.argmax() - 3.37).abs() < 1e-6);
    }

    #[test]
    fn integer_days_inclusive() {
        assert_eq!(integer_days((0.5, 3.0)), vec![1.0, 2.0, 3.0]);
        assert_eq!(integer_days((-2.0, -0.5)), vec![-2.0, -1.0]);
    }
}
