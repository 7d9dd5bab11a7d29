//! Roughness-penalized least squares on a B-spline basis and GCV selection of
//! the penalty.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::BSplineBasis;
use super::curve::{Curve, SmoothedCurve};
use crate::error::{Error, Result};
use crate::series::DailySeries;

/// `n_points` values spaced evenly in log10 between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, n_points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n_points >= 1);
    if n_points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n_points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n_points - 1) as f64))
        .collect()
}

/// Default penalty grid: 33 points from 1e-2 to 1e6.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-2, 1e6, 33)
}

/// Observed points of one series with the matrices the penalized solve
/// needs. Series day `i` sits at `t = i`.
#[derive(Debug, Clone)]
pub struct SmoothingProblem {
    pub times: Vec<f64>,
    pub y: DVector<f64>,
    design: DMatrix<f64>,
    gram: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcvScore {
    pub gcv: f64,
    pub sse: f64,
    /// `trace(H)`, the effective degrees of freedom.
    pub df: f64,
    pub n: usize,
}

impl SmoothingProblem {
    pub fn new(series: &DailySeries, basis: &BSplineBasis) -> Result<Self> {
        let (times, values): (Vec<f64>, Vec<f64>) = series
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i as f64, v)))
            .unzip();
        Self::from_points(&times, &values, basis)
    }

    pub fn from_points(times: &[f64], values: &[f64], basis: &BSplineBasis) -> Result<Self> {
        let (a, b) = basis.domain();
        if let Some(t) = times.iter().find(|t| **t < a || **t > b) {
            return Err(Error::InvalidParameter(format!(
                "observation at t = {t} outside basis domain [{a}, {b}]"
            )));
        }
        if times.len() < basis.n_basis() {
            return Err(Error::Singular(format!(
                "{} observed points for {} basis functions",
                times.len(),
                basis.n_basis()
            )));
        }
        let design = basis.design(times, 0);
        let gram = design.transpose() * &design;
        Ok(SmoothingProblem {
            times: times.to_vec(),
            y: DVector::from_column_slice(values),
            design,
            gram,
            penalty: basis.penalty(),
        })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    fn system(&self, lambda: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        let a = &self.gram + &self.penalty * lambda;
        a.cholesky()
            .ok_or_else(|| Error::Singular(format!("penalized normal equations not positive definite (lambda {lambda})")))
    }

    pub fn coefficients(&self, lambda: f64) -> Result<DVector<f64>> {
        self.coefficients_for(&self.y, lambda)
    }

    /// Coefficients for another response observed at the same points.
    pub fn coefficients_for(&self, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
        let chol = self.system(lambda)?;
        Ok(chol.solve(&(self.design.transpose() * y)))
    }

    pub fn gcv(&self, lambda: f64) -> Result<GcvScore> {
        let chol = self.system(lambda)?;
        let coefs = chol.solve(&(self.design.transpose() * &self.y));
        let resid = &self.y - &self.design * coefs;
        let sse = resid.norm_squared();
        let df = chol.solve(&self.gram).trace();
        let n = self.n() as f64;
        Ok(GcvScore {
            gcv: n * sse / (n - df).powi(2),
            sse,
            df,
            n: self.n(),
        })
    }
}

/// Minimizes `Σ (y_i - f(t_i))² + λ ∫ f''(t)² dt` over the basis.
pub fn penalized_smooth(series: &DailySeries, basis: &BSplineBasis, lambda: f64) -> Result<SmoothedCurve> {
    let problem = SmoothingProblem::new(series, basis)?;
    let coefs = problem.coefficients(lambda)?;
    SmoothedCurve::new(series.unit_id.clone(), basis.clone(), coefs.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvSelection {
    pub lambda: f64,
    /// Mean GCV over curves per grid value; `None` where the value was excluded.
    pub scores: Vec<(f64, Option<f64>)>,
    pub warnings: Vec<String>,
}

/// Picks the grid penalty minimizing the mean GCV across all curves; ties go
/// to the larger penalty.
pub fn gcv_select(series: &[DailySeries], basis: &BSplineBasis, grid: &[f64]) -> Result<GcvSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    if let Some(l) = grid.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidParameter(format!("negative lambda {l} in grid")));
    }
    if series.is_empty() {
        return Err(Error::InvalidParameter("no series to smooth".into()));
    }
    let problems = series
        .iter()
        .map(|s| SmoothingProblem::new(s, basis))
        .collect::<Result<Vec<_>>>()?;

    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut warnings = Vec::new();
    let mut scores = Vec::with_capacity(sorted.len());
    for &lambda in &sorted {
        let mut total = 0.0;
        let mut ok = true;
        for (p, s) in problems.iter().zip(series) {
            match p.gcv(lambda) {
                Ok(g) if g.df < g.n as f64 - 1e-9 => total += g.gcv,
                Ok(g) => {
                    warnings.push(format!(
                        "lambda {lambda}: df {:.3} >= n {} for {}; excluded",
                        g.df, g.n, s.unit_id
                    ));
                    ok = false;
                    break;
                }
                Err(e) => {
                    warnings.push(format!("lambda {lambda}: {e}; excluded"));
                    ok = false;
                    break;
                }
            }
        }
        scores.push((lambda, ok.then(|| total / problems.len() as f64)));
    }
    let mut best: Option<(f64, f64)> = None;
    for &(lambda, score) in &scores {
        let Some(score) = score else { continue };
        match best {
            Some((_, b)) if score > b * (1.0 + 1e-12) => {}
            _ => best = Some((lambda, score)),
        }
    }
    let (lambda, _) = best.ok_or_else(|| Error::Singular("every lambda in the grid was excluded".into()))?;
    Ok(GcvSelection { lambda, scores, warnings })
}

/// Divides a curve by its maximum over the domain.
pub fn normalize_by_max(curve: &SmoothedCurve) -> Result<SmoothedCurve> {
    let max = curve.max_value();
    if !(max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{}: cannot normalize a curve with maximum {max}",
            curve.unit_id
        )));
    }
    Ok(curve.scaled(1.0 / max))
}

/// Residuals of a smoothed curve at the observed days of its series.
pub fn residuals(series: &DailySeries, curve: &SmoothedCurve) -> Vec<f64> {
    series
        .values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| v - curve.eval(i as f64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SeriesKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn series(values: Vec<f64>) -> DailySeries {
        DailySeries::new(
            "u",
            "2020-02-01".parse().unwrap(),
            values.into_iter().map(Some).collect(),
            SeriesKind::RtMean,
        )
        .unwrap()
    }

    #[test]
    fn straight_line_survives_any_penalty() {
        let s = series((0..40).map(|i| 2.0 - 0.3 * i as f64).collect());
        let basis = BSplineBasis::new((0.0, 39.0), 10, 4).unwrap();
        for lambda in [0.0, 1.0, 1e4, 1e8] {
            let c = penalized_smooth(&s, &basis, lambda).unwrap();
            let err = residuals(&s, &c).iter().fold(0.0f64, |m, r| m.max(r.abs()));
            assert!(err < 1e-8, "lambda {lambda}: {err}");
        }
    }

    #[test]
    fn huge_penalty_tends_to_ols_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ys: Vec<f64> = (0..50)
            .map(|i| (i as f64 / 6.0).sin() * 3.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let s = series(ys.clone());
        let basis = BSplineBasis::new((0.0, 49.0), 12, 4).unwrap();
        let c = penalized_smooth(&s, &basis, 1e12).unwrap();
        // Closed-form simple linear regression.
        let n = ys.len() as f64;
        let xbar = (n - 1.0) / 2.0;
        let ybar = ys.iter().sum::<f64>() / n;
        let sxy: f64 = ys.iter().enumerate().map(|(i, y)| (i as f64 - xbar) * (y - ybar)).sum();
        let sxx: f64 = (0..ys.len()).map(|i| (i as f64 - xbar).powi(2)).sum();
        let slope = sxy / sxx;
        for i in 0..ys.len() {
            let ols = ybar + slope * (i as f64 - xbar);
            assert!((c.eval(i as f64) - ols).abs() < 1e-3);
        }
    }

    #[test]
    fn too_few_points_is_singular() {
        let s = series(vec![1.0, 2.0, 3.0]);
        let basis = BSplineBasis::new((0.0, 2.0), 5, 4).unwrap();
        assert!(matches!(penalized_smooth(&s, &basis, 1.0), Err(Error::Singular(_))));
    }

    #[test]
    fn trace_equals_sum_of_leverages() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = series((0..60).map(|_| rng.random_range(0.0..5.0)).collect());
        let basis = BSplineBasis::new((0.0, 59.0), 14, 4).unwrap();
        let p = SmoothingProblem::new(&s, &basis).unwrap();
        for lambda in [0.1, 10.0, 1000.0] {
            let df = p.gcv(lambda).unwrap().df;
            let a = p.gram.clone() + p.penalty.clone() * lambda;
            let ainv = a.try_inverse().unwrap();
            let leverage: f64 = (0..p.n())
                .map(|i| {
                    let row = p.design.row(i).transpose();
                    (row.transpose() * &ainv * &row)[(0, 0)]
                })
                .sum();
            assert!((df - leverage).abs() < 1e-8);
        }
    }

    #[test]
    fn ties_go_to_larger_lambda() {
        // Zero data: SSE is exactly 0 for every lambda, so GCV ties at 0
        // and the largest lambda wins.
        let s = series(vec![0.0; 30]);
        let basis = BSplineBasis::new((0.0, 29.0), 8, 4).unwrap();
        let sel = gcv_select(&[s], &basis, &[0.1, 1.0, 10.0]).unwrap();
        assert_eq!(sel.lambda, 10.0);
    }

    #[test]
    fn grid_validation() {
        let s = series(vec![1.0; 20]);
        let basis = BSplineBasis::new((0.0, 19.0), 6, 4).unwrap();
        assert!(gcv_select(&[s.clone()], &basis, &[]).is_err());
        assert!(gcv_select(&[s], &basis, &[-1.0]).is_err());
    }

    #[test]
    fn interpolating_lambda_is_excluded() {
        // n = n_basis: at lambda = 0 df = n, so GCV is undefined there.
        let s = series(vec![0.0, 1.0, 0.5, 2.0, 1.0, 3.0]);
        let basis = BSplineBasis::new((0.0, 5.0), 6, 4).unwrap();
        let sel = gcv_select(&[s], &basis, &[0.0, 1.0]).unwrap();
        assert_eq!(sel.scores[0].1, None);
        assert_eq!(sel.lambda, 1.0);
        assert_eq!(sel.warnings.len(), 1);
    }
}
