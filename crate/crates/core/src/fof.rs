//! Function-on-function regression
//! `y_i(t) = α(t) + ∫ β(s,t) x_i(s) ds [+ z_i β_pc(t)] + ε_i(t)`.
//!
//! `β` lives on a tensor product of cubic B-splines. Responses are observed
//! on the daily grid of the common domain and the integrals `∫ θ_k(s) x_i(s) ds`
//! are exact. The intercept is left unpenalized on the grid, which is the
//! same as fitting `β` to centered curves and setting
//! `α(t) = ȳ(t) - ∫ β(s,t) x̄(s) ds`; residuals then average to zero at
//! every grid day. Roughness penalties act on `∂²β/∂s²`, `∂²β/∂t²` and
//! `β_pc''`.
//!
//! Pointwise bands use the sandwich covariance of the penalized solve with
//! the within-curve residual covariance estimated on the grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fda::curve::{integer_days, Curve, GridCurve, SmoothedCurve};
use crate::fda::smooth::log_grid;
use crate::fda::BSplineBasis;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_LAG: f64 = 13.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    Fixed { lambda_s: f64, lambda_t: f64 },
    /// `λ_s = λ_t` chosen on the grid by GCV of the functional residuals.
    Gcv { grid: Vec<f64> },
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::Gcv { grid: log_grid(1e-3, 1e5, 17) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FofConfig {
    pub k_s: usize,
    pub k_t: usize,
    pub order: usize,
    pub penalty: Penalty,
}

impl Default for FofConfig {
    fn default() -> Self {
        FofConfig {
            k_s: DEFAULT_K,
            k_t: DEFAULT_K,
            order: 4,
            penalty: Penalty::default(),
        }
    }
}

/// Coefficient surface `β(s,t) = Σ_kl B_kl θ_k(s) ψ_l(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSurface {
    pub basis_s: BSplineBasis,
    pub basis_t: BSplineBasis,
    /// `K_s × K_t`.
    pub coefs: DMatrix<f64>,
}

impl TensorSurface {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let th = DVector::from_vec(self.basis_s.eval(s));
        let ps = DVector::from_vec(self.basis_t.eval(t));
        (th.transpose() * &self.coefs * ps)[(0, 0)]
    }

    /// L2 projection of `f` onto the tensor basis.
    pub fn project<F: Fn(f64, f64) -> f64>(basis_s: &BSplineBasis, basis_t: &BSplineBasis, f: F) -> Result<Self> {
        use crate::fda::quadrature::piecewise_rule;
        let (a_s, b_s) = basis_s.domain();
        let (a_t, b_t) = basis_t.domain();
        // Eight nodes per day-long piece: ample for smooth targets.
        let mut bs = basis_s.breakpoints();
        bs.extend(integer_days((a_s, b_s)));
        let mut bt = basis_t.breakpoints();
        bt.extend(integer_days((a_t, b_t)));
        let rs = piecewise_rule(&bs, a_s, b_s, 8);
        let rt = piecewise_rule(&bt, a_t, b_t, 8);
        let ths: Vec<Vec<f64>> = rs.iter().map(|(s, _)| basis_s.eval(*s)).collect();
        let pss: Vec<Vec<f64>> = rt.iter().map(|(t, _)| basis_t.eval(*t)).collect();
        let mut moments = DMatrix::zeros(basis_s.n_basis(), basis_t.n_basis());
        for ((s, ws), th) in rs.iter().zip(&ths) {
            for ((t, wt), ps) in rt.iter().zip(&pss) {
                let v = ws * wt * f(*s, *t);
                if v == 0.0 {
                    continue;
                }
                for (k, a) in th.iter().enumerate().filter(|(_, a)| **a != 0.0) {
                    for (l, b) in ps.iter().enumerate().filter(|(_, b)| **b != 0.0) {
                        moments[(k, l)] += v * a * b;
                    }
                }
            }
        }
        let gs = basis_s.gram(0, 0).cholesky().ok_or_else(|| Error::Singular("Gram in s".into()))?;
        let gt = basis_t.gram(0, 0).cholesky().ok_or_else(|| Error::Singular("Gram in t".into()))?;
        let left = gs.solve(&moments);
        let coefs = gt.solve(&left.transpose()).transpose();
        Ok(TensorSurface {
            basis_s: basis_s.clone(),
            basis_t: basis_t.clone(),
            coefs,
        })
    }
}

/// Scalar-covariate effect `β_pc(t) = Σ_l c_l ψ_l(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarEffect {
    pub coefs: DVector<f64>,
    /// Mean and standard deviation used to standardize the covariate.
    pub center: f64,
    pub scale: f64,
    cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FofFit {
    pub unit_ids: Vec<String>,
    pub domain: (f64, f64),
    /// Daily evaluation grid.
    pub grid: Vec<f64>,
    pub beta: TensorSurface,
    pub intercept: GridCurve,
    pub residuals: Vec<GridCurve>,
    pub r2: f64,
    pub lambda_s: f64,
    pub lambda_t: f64,
    /// Trace of the smoother for the penalized coefficients.
    pub effective_df: f64,
    pub scalar: Option<ScalarEffect>,
    pub partial_r2: Option<PartialR2>,
    pub warnings: Vec<String>,
    /// Covariance of the column-major coefficient vector (β block first).
    cov: DMatrix<f64>,
    n_units: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialR2 {
    pub mobility: f64,
    pub pc1: f64,
}

impl FofFit {
    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn beta(&self, s: f64, t: f64) -> f64 {
        self.beta.eval(s, t)
    }

    /// Pointwise standard error of `β(s,t)`.
    pub fn beta_se(&self, s: f64, t: f64) -> f64 {
        let ks = self.beta.basis_s.n_basis();
        let p = self.cov.nrows() / self.beta.basis_t.n_basis();
        let th = self.beta.basis_s.eval(s);
        let ps = self.beta.basis_t.eval(t);
        let mut g = DVector::zeros(self.cov.nrows());
        for (l, b) in ps.iter().enumerate() {
            for (k, a) in th.iter().enumerate().take(ks) {
                g[k + p * l] = a * b;
            }
        }
        (g.transpose() * &self.cov * &g)[(0, 0)].max(0.0).sqrt()
    }

    pub fn scalar_effect(&self, t: f64) -> Option<(f64, f64)> {
        let sc = self.scalar.as_ref()?;
        let ps = DVector::from_vec(self.beta.basis_t.eval(t));
        let est = sc.coefs.dot(&ps);
        let var = (ps.transpose() * &sc.cov * &ps)[(0, 0)].max(0.0);
        Some((est, var.sqrt()))
    }

    /// Prediction `α(t) + ∫ β(s,t) x(s) ds` on the grid.
    pub fn predict(&self, x: &SmoothedCurve) -> GridCurve {
        let z = DVector::from_vec(integrate_basis(&self.beta.basis_s, x, self.domain));
        let pred: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.intercept.values)
            .map(|(t, a)| {
                let ps = DVector::from_vec(self.beta.basis_t.eval(*t));
                a + (z.transpose() * &self.beta.coefs * ps)[(0, 0)]
            })
            .collect();
        GridCurve { unit_id: x.unit_id.clone(), start: self.grid[0], step: 1.0, values: pred }
    }
}

fn integrate_basis(basis: &BSplineBasis, x: &SmoothedCurve, (lo, hi): (f64, f64)) -> Vec<f64> {
    basis.integrate_against(|s| x.eval(s), &x.breakpoints(), x.degree(), lo, hi)
}

fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level must be in (0, 1), got {level}")));
    }
    Ok(Normal::standard().inverse_cdf(0.5 * (1.0 + level)))
}

/// Trapezoid weights of the daily grid.
fn trapezoid(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    w[0] = 0.5;
    w[n - 1] = 0.5;
    w
}

struct Prepared {
    ids: Vec<String>,
    domain: (f64, f64),
    grid: Vec<f64>,
    basis_s: BSplineBasis,
    basis_t: BSplineBasis,
    /// `n × T` responses.
    y: DMatrix<f64>,
    /// `n × K_s` basis integrals of the predictors, divided by `z_scale`.
    z: DMatrix<f64>,
    z_scale: f64,
    psi: DMatrix<f64>,
}

fn prepare<Y: Curve>(ys: &[Y], xs: &[SmoothedCurve], cfg: &FofConfig) -> Result<Prepared> {
    let n = ys.len();
    if n != xs.len() {
        return Err(Error::InvalidParameter(format!("{n} responses but {} predictors", xs.len())));
    }
    if n < 2 {
        return Err(Error::TooFewUnits { needed: 2, got: n });
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for d in ys.iter().map(|y| y.domain()).chain(xs.iter().map(|x| x.domain)) {
        lo = lo.max(d.0);
        hi = hi.min(d.1);
    }
    let grid = integer_days((lo, hi));
    if grid.len() < cfg.k_t.max(2) {
        return Err(Error::EmptyDomain(xs.iter().map(|x| x.unit_id.clone()).collect()));
    }
    let domain = (grid[0], *grid.last().unwrap());
    let basis_s = BSplineBasis::new(domain, cfg.k_s, cfg.order)?;
    let basis_t = BSplineBasis::new(domain, cfg.k_t, cfg.order)?;
    let t_len = grid.len();
    let y = DMatrix::from_fn(n, t_len, |i, j| ys[i].eval(grid[j]));
    let mut z = DMatrix::zeros(n, cfg.k_s);
    for (i, x) in xs.iter().enumerate() {
        for (k, v) in integrate_basis(&basis_s, x, domain).into_iter().enumerate() {
            z[(i, k)] = v;
        }
    }
    // Raw trip counts put the data block many orders of magnitude above the
    // penalty; the fit runs on unit-RMS integrals and β is rescaled at the end.
    let (zc, _) = center_columns(&z);
    let rms = (zc.norm_squared() / zc.len() as f64).sqrt();
    let z_scale = if rms > 0.0 && rms.is_finite() { rms } else { 1.0 };
    z /= z_scale;
    let psi = basis_t.design(&grid, 0);
    Ok(Prepared {
        ids: xs.iter().map(|x| x.unit_id.clone()).collect(),
        domain,
        grid,
        basis_s,
        basis_t,
        y,
        z,
        z_scale,
        psi,
    })
}

fn center_columns(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()));
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

/// One penalized solve of centered responses on a design whose first
/// `k_s` columns are functional-predictor integrals and the rest scalar
/// covariates.
struct Solve {
    /// `p × K_t` coefficients.
    gamma: DMatrix<f64>,
    /// `n × T` residuals.
    resid: DMatrix<f64>,
    df: f64,
    a_inv: DMatrix<f64>,
}

struct Penalties {
    gs: DMatrix<f64>,
    rs: DMatrix<f64>,
    gt: DMatrix<f64>,
    rt: DMatrix<f64>,
}

impl Penalties {
    fn new(p: &Prepared) -> Self {
        Penalties {
            gs: p.basis_s.gram(0, 0),
            rs: p.basis_s.penalty(),
            gt: p.basis_t.gram(0, 0),
            rt: p.basis_t.penalty(),
        }
    }

    /// Penalty matrix for a design with `k_s` functional and `n_scalar`
    /// scalar columns.
    fn matrix(&self, k_s: usize, n_scalar: usize, lambda_s: f64, lambda_t: f64) -> DMatrix<f64> {
        let p = k_s + n_scalar;
        let mut ps = DMatrix::zeros(p, p);
        let mut qs = DMatrix::zeros(p, p);
        if k_s > 0 {
            ps.view_mut((0, 0), (k_s, k_s)).copy_from(&self.rs);
            qs.view_mut((0, 0), (k_s, k_s)).copy_from(&self.gs);
        }
        for j in k_s..p {
            qs[(j, j)] = 1.0;
        }
        self.gt.kronecker(&ps) * lambda_s + self.rt.kronecker(&qs) * lambda_t
    }
}

fn solve(
    design: &DMatrix<f64>,
    yc: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
) -> Result<Solve> {
    let xtx = design.transpose() * design;
    let data = (psi.transpose() * psi).kronecker(&xtx);
    let a = &data + penalty;
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        // Effective df through the pseudo-inverse, for the report.
        let inv = pseudo_inverse(&eig, 1e-12 * max.max(f64::MIN_POSITIVE));
        let df = (inv * &data).trace();
        return Err(Error::RankDeficient {
            effective_df: df,
            message: "predictors carry no usable between-unit variation".into(),
        });
    }
    let a_inv = pseudo_inverse(&eig, 0.0);
    let rhs_m = design.transpose() * yc * psi;
    let rhs = DVector::from_column_slice(rhs_m.as_slice());
    let vec_gamma = &a_inv * rhs;
    let gamma = DMatrix::from_column_slice(design.ncols(), psi.ncols(), vec_gamma.as_slice());
    let resid = yc - design * &gamma * psi.transpose();
    let df = (&a_inv * &data).trace();
    Ok(Solve { gamma, resid, df, a_inv })
}

fn pseudo_inverse(eig: &nalgebra::SymmetricEigen<f64, nalgebra::Dyn>, cutoff: f64) -> DMatrix<f64> {
    let inv: DVector<f64> = eig.eigenvalues.map(|v| if v > cutoff { 1.0 / v } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

struct Fitted {
    solve: Solve,
    lambda_s: f64,
    lambda_t: f64,
}

fn fit_design(
    prep: &Prepared,
    pens: &Penalties,
    design: &DMatrix<f64>,
    yc: &DMatrix<f64>,
    k_s: usize,
    cfg: &FofConfig,
) -> Result<Fitted> {
    let n_scalar = design.ncols() - k_s;
    let n_obs = (prep.y.nrows() * prep.grid.len()) as f64;
    // The unpenalized grid intercept uses one df per grid day.
    let intercept_df = prep.grid.len() as f64;
    let candidates: Vec<(f64, f64)> = match &cfg.penalty {
        Penalty::Fixed { lambda_s, lambda_t } => vec![(*lambda_s, *lambda_t)],
        Penalty::Gcv { grid } => grid.iter().map(|l| (*l, *l)).collect(),
    };
    if candidates.is_empty() || candidates.iter().any(|(a, b)| !(*a >= 0.0 && *b >= 0.0)) {
        return Err(Error::InvalidParameter("penalties must be non-negative and the grid non-empty".into()));
    }
    let mut best: Option<(f64, Fitted)> = None;
    let mut last_err = None;
    for (ls, lt) in candidates {
        let pen = pens.matrix(k_s, n_scalar, ls, lt);
        let solve = match solve(design, yc, &prep.psi, &pen) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let total_df = solve.df + intercept_df;
        if total_df >= n_obs {
            last_err = Some(Error::RankDeficient {
                effective_df: total_df,
                message: format!("effective df exceeds the {n_obs} grid observations"),
            });
            continue;
        }
        let rss = solve.resid.norm_squared();
        let gcv = n_obs * rss / (n_obs - total_df).powi(2);
        if best.as_ref().is_none_or(|(b, _)| gcv < *b) {
            best = Some((gcv, Fitted { solve, lambda_s: ls, lambda_t: lt }));
        }
    }
    best.map(|(_, f)| f).ok_or_else(|| last_err.unwrap())
}

fn integrated_ss(m: &DMatrix<f64>) -> f64 {
    let w = trapezoid(m.ncols());
    m.row_iter()
        .map(|r| r.iter().zip(&w).map(|(v, w)| w * v * v).sum::<f64>())
        .sum()
}

fn r_squared(resid: &DMatrix<f64>, yc: &DMatrix<f64>) -> f64 {
    1.0 - integrated_ss(resid) / integrated_ss(yc)
}

/// Sandwich covariance of the column-major coefficient vector.
fn sandwich(solve: &Solve, design: &DMatrix<f64>, psi: &DMatrix<f64>, k_t: usize) -> Result<DMatrix<f64>> {
    let n = solve.resid.nrows() as f64;
    // Residual df per unit direction: centering costs one, the coefficients
    // cost their effective df spread over the K_t response directions.
    let dof = n - 1.0 - solve.df / k_t as f64;
    if !(dof > 0.0) {
        return Err(Error::RankDeficient {
            effective_df: solve.df,
            message: "no residual degrees of freedom left for the band".into(),
        });
    }
    let sigma = solve.resid.transpose() * &solve.resid / dof;
    let meat = (psi.transpose() * sigma * psi).kronecker(&(design.transpose() * design));
    Ok(&solve.a_inv * meat * &solve.a_inv)
}

/// Fits `y_i(t) = α(t) + ∫ β(s,t) x_i(s) ds + ε_i(t)` on the common domain.
pub fn fit_fof<Y: Curve>(ys: &[Y], xs: &[SmoothedCurve], cfg: &FofConfig) -> Result<FofFit> {
    let prep = prepare(ys, xs, cfg)?;
    let pens = Penalties::new(&prep);
    let (yc, ybar) = center_columns(&prep.y);
    let (zc, zbar) = center_columns(&prep.z);
    guard_variation(&zc, &prep.z)?;
    let fitted = fit_design(&prep, &pens, &zc, &yc, cfg.k_s, cfg)?;
    let cov = if prep.y.nrows() >= 3 {
        sandwich(&fitted.solve, &zc, &prep.psi, cfg.k_t)?
    } else {
        DMatrix::from_element(fitted.solve.a_inv.nrows(), fitted.solve.a_inv.ncols(), f64::NAN)
    };
    Ok(assemble(prep, fitted, &yc, &ybar, &zbar, cov, None, None, Vec::new()))
}

fn guard_variation(zc: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<()> {
    if zc.norm() <= 1e-10 * z.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient {
            effective_df: 0.0,
            message: "all predictor curves are identical".into(),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    prep: Prepared,
    fitted: Fitted,
    yc: &DMatrix<f64>,
    ybar: &DVector<f64>,
    zbar: &DVector<f64>,
    cov: DMatrix<f64>,
    scalar: Option<ScalarEffect>,
    partial_r2: Option<PartialR2>,
    warnings: Vec<String>,
) -> FofFit {
    let k_s = prep.basis_s.n_basis();
    let scaled = fitted.solve.gamma.rows(0, k_s).into_owned();
    // α(t_j) = ȳ(t_j) - z̄ᵀ B ψ(t_j)
    let offset = zbar.transpose() * &scaled * prep.psi.transpose();
    let beta_coefs = scaled / prep.z_scale;
    let p = fitted.solve.gamma.nrows();
    let unscale = |i: usize| if i % p < k_s { 1.0 / prep.z_scale } else { 1.0 };
    let cov = DMatrix::from_fn(cov.nrows(), cov.ncols(), |a, b| cov[(a, b)] * unscale(a) * unscale(b));
    let intercept_vals: Vec<f64> = (0..prep.grid.len()).map(|j| ybar[j] - offset[(0, j)]).collect();
    let residuals = fitted
        .solve
        .resid
        .row_iter()
        .zip(&prep.ids)
        .map(|(r, id)| GridCurve {
            unit_id: id.clone(),
            start: prep.grid[0],
            step: 1.0,
            values: r.iter().copied().collect(),
        })
        .collect();
    let r2 = r_squared(&fitted.solve.resid, yc);
    let n_units = prep.y.nrows();
    FofFit {
        unit_ids: prep.ids,
        domain: prep.domain,
        intercept: GridCurve { unit_id: "alpha".into(), start: prep.grid[0], step: 1.0, values: intercept_vals },
        grid: prep.grid,
        beta: TensorSurface { basis_s: prep.basis_s, basis_t: prep.basis_t, coefs: beta_coefs },
        residuals,
        r2,
        lambda_s: fitted.lambda_s,
        lambda_t: fitted.lambda_t,
        effective_df: fitted.solve.df,
        scalar,
        partial_r2,
        warnings,
        cov,
        n_units,
    }
}

/// Adds a per-unit scalar covariate `z_i β_pc(t)` (standardized internally)
/// and reports partial R² of each term by refit-and-drop.
pub fn fit_fof_with_scalar<Y: Curve>(
    ys: &[Y],
    xs: &[SmoothedCurve],
    z: &[f64],
    cfg: &FofConfig,
) -> Result<FofFit> {
    let prep = prepare(ys, xs, cfg)?;
    let n = prep.y.nrows();
    if z.len() != n {
        return Err(Error::InvalidParameter(format!("{} scalar values for {n} units", z.len())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("scalar covariate must be finite".into()));
    }
    let center = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|v| (v - center).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if !(var.sqrt() > 1e-12 * center.abs().max(1.0)) {
        return Err(Error::ConstantInput("scalar covariate has no variation".into()));
    }
    let scale = var.sqrt();
    let zs = DVector::from_iterator(n, z.iter().map(|v| (v - center) / scale));

    let pens = Penalties::new(&prep);
    let (yc, ybar) = center_columns(&prep.y);
    let (zc, zbar) = center_columns(&prep.z);
    guard_variation(&zc, &prep.z)?;
    let k_s = cfg.k_s;
    let mut design = DMatrix::zeros(n, k_s + 1);
    design.view_mut((0, 0), (n, k_s)).copy_from(&zc);
    design.set_column(k_s, &zs);

    let mut warnings = Vec::new();
    let collinearity = explained_by(&zc, &zs);
    if collinearity > 0.999 {
        warnings.push(format!(
            "scalar covariate is nearly collinear with the mobility integrals (R² {collinearity:.5}); system is near-singular"
        ));
    }

    let full = fit_design(&prep, &pens, &design, &yc, k_s, cfg)?;
    let r2_full = r_squared(&full.solve.resid, &yc);
    // Refits without each term, at the penalties chosen for the full model.
    let fixed = FofConfig {
        penalty: Penalty::Fixed { lambda_s: full.lambda_s, lambda_t: full.lambda_t },
        ..cfg.clone()
    };
    let only_scalar = DMatrix::from_column_slice(n, 1, zs.as_slice());
    let no_mob = fit_design(&prep, &pens, &only_scalar, &yc, 0, &fixed)?;
    let no_pc = fit_design(&prep, &pens, &zc, &yc, k_s, &fixed)?;
    let partial = PartialR2 {
        mobility: r2_full - r_squared(&no_mob.solve.resid, &yc),
        pc1: r2_full - r_squared(&no_pc.solve.resid, &yc),
    };

    let cov = if n >= 3 {
        sandwich(&full.solve, &design, &prep.psi, cfg.k_t)?
    } else {
        DMatrix::from_element(full.solve.a_inv.nrows(), full.solve.a_inv.ncols(), f64::NAN)
    };
    let p = k_s + 1;
    let k_t = cfg.k_t;
    let idx: Vec<usize> = (0..k_t).map(|l| k_s + p * l).collect();
    let scalar_cov = DMatrix::from_fn(k_t, k_t, |a, b| cov[(idx[a], idx[b])]);
    let scalar = ScalarEffect {
        coefs: full.solve.gamma.row(k_s).transpose(),
        center,
        scale,
        cov: scalar_cov,
    };
    Ok(assemble(prep, full, &yc, &ybar, &zbar, cov, Some(scalar), Some(partial), warnings))
}

/// R² of an unpenalized least-squares regression of `v` on the columns of `m`.
fn explained_by(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let svd = m.clone().svd(true, true);
    let Ok(coef) = svd.solve(v, 1e-12) else { return 0.0 };
    let fit = m * coef;
    let ss = v.norm_squared();
    if ss == 0.0 {
        0.0
    } else {
        1.0 - (v - fit).norm_squared() / ss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSurface {
    pub level: f64,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    /// Row-major over `(s, t)`: index `i * t.len() + j`.
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BandSurface {
    /// Grid cells where the band contains zero.
    pub fn non_significant(&self) -> Vec<bool> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| *l <= 0.0 && *u >= 0.0).collect()
    }
}

/// Pointwise `β̂ ± z_{(1+level)/2} SE` on the daily grid.
pub fn confidence_band(fit: &FofFit, level: f64) -> Result<BandSurface> {
    if fit.n_units < 3 {
        return Err(Error::TooFewUnits { needed: 3, got: fit.n_units });
    }
    let z = normal_quantile(level)?;
    let s = fit.grid.clone();
    let t = fit.grid.clone();
    let mut out = BandSurface {
        level,
        s: s.clone(),
        t: t.clone(),
        beta: Vec::with_capacity(s.len() * t.len()),
        se: Vec::with_capacity(s.len() * t.len()),
        lower: Vec::new(),
        upper: Vec::new(),
    };
    for &si in &s {
        for &tj in &t {
            let b = fit.beta(si, tj);
            let se = fit.beta_se(si, tj);
            out.beta.push(b);
            out.se.push(se);
            out.lower.push(b - z * se);
            out.upper.push(b + z * se);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSlice {
    pub lag: f64,
    pub level: f64,
    pub s: Vec<f64>,
    pub beta: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Maximal runs of `s` where the band excludes 0: `(start, end, sign)`.
    pub significant: Vec<(f64, f64, i8)>,
}

impl LagSlice {
    pub fn significance(&self) -> Vec<i8> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if *l > 0.0 { 1 } else if *u < 0.0 { -1 } else { 0 })
            .collect()
    }
}

/// `β(s, s + lag)` with its pointwise band over `{s : s, s + lag ∈ domain}`.
pub fn lag_slice(fit: &FofFit, lag: f64, level: f64) -> Result<LagSlice> {
    if !(lag >= 0.0) {
        return Err(Error::InvalidParameter(format!("lag must be >= 0, got {lag}")));
    }
    if fit.n_units < 3 {
        return Err(Error::TooFewUnits { needed: 3, got: fit.n_units });
    }
    let z = normal_quantile(level)?;
    let (a, b) = fit.domain;
    let s: Vec<f64> = fit.grid.iter().copied().filter(|s| s + lag <= b + 1e-9 && *s >= a).collect();
    if s.is_empty() {
        return Err(Error::EmptyDomain(vec![format!("lag {lag} exceeds domain length {}", b - a)]));
    }
    let mut slice = LagSlice {
        lag,
        level,
        s: s.clone(),
        beta: Vec::with_capacity(s.len()),
        lower: Vec::with_capacity(s.len()),
        upper: Vec::with_capacity(s.len()),
        significant: Vec::new(),
    };
    for &si in &s {
        let t = (si + lag).min(b);
        let v = fit.beta(si, t);
        let se = fit.beta_se(si, t);
        slice.beta.push(v);
        slice.lower.push(v - z * se);
        slice.upper.push(v + z * se);
    }
    let sig = slice.significance();
    let mut i = 0;
    while i < sig.len() {
        if sig[i] == 0 {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < sig.len() && sig[i + 1] == sig[start] {
            i += 1;
        }
        slice.significant.push((s[start], s[i], sig[start]));
        i += 1;
    }
    Ok(slice)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pc1 {
    pub scores: Vec<f64>,
    pub loadings: Vec<f64>,
    pub explained: f64,
}

/// First principal component of standardized per-unit covariates. The sign
/// makes the first covariate's loading non-negative.
pub fn compute_pc1(covariates: &[Vec<Option<f64>>]) -> Result<Pc1> {
    let n = covariates.len();
    if n < 2 {
        return Err(Error::TooFewUnits { needed: 2, got: n });
    }
    let p = covariates[0].len();
    if p < 2 {
        return Err(Error::InvalidParameter(format!("need >= 2 covariates, got {p}")));
    }
    let mut m = DMatrix::zeros(n, p);
    for (i, row) in covariates.iter().enumerate() {
        if row.len() != p {
            return Err(Error::InvalidParameter(format!("unit {i} has {} covariates, expected {p}", row.len())));
        }
        for (j, v) in row.iter().enumerate() {
            match v {
                Some(v) if v.is_finite() => m[(i, j)] = *v,
                _ => return Err(Error::InvalidParameter(format!("missing covariate {j} for unit {i}"))),
            }
        }
    }
    for j in 0..p {
        let col = m.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ConstantInput(format!("covariate {j} is constant")));
        }
        m.column_mut(j).apply(|v| *v = (*v - mean) / sd);
    }
    let corr = m.transpose() * &m / (n as f64 - 1.0);
    let eig = corr.symmetric_eigen();
    let (top, lam) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let mut v = eig.eigenvectors.column(top).into_owned();
    if v[0] < 0.0 {
        v = -v;
    }
    let scores = &m * &v;
    Ok(Pc1 {
        scores: scores.iter().copied().collect(),
        loadings: v.iter().copied().collect(),
        explained: lam / eig.eigenvalues.sum(),
    })
}
