//! First functional covariance component of two paired curve sets.
//!
//! For centered curves `x_i`, `y_i` the sample cross-covariance operator is
//! `Σ(s, t) = (n-1)⁻¹ Σ_i x_i(s) y_i(t)`. Its leading singular pair `(u, v)`
//! maximizes `cov(⟨x, u⟩, ⟨y, v⟩)` over unit-norm weight functions. With
//! coefficients `C`, `D` and Gram matrices `W_x = L_x L_xᵀ`, `W_y = L_y L_yᵀ`
//! this is the top singular pair of `L_xᵀ Cᵀ D L_y / (n-1)`, mapped back
//! through `L⁻ᵀ`. When both sets coincide it reduces to the first functional
//! principal component.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::BSplineBasis;
use super::curve::SmoothedCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveSet {
    /// Transmissibility curves (the first set passed to [`first_fcc`]).
    R,
    /// Mobility curves (the second set).
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FccResult {
    pub unit_ids: Vec<String>,
    pub mean_r: SmoothedCurve,
    pub mean_m: SmoothedCurve,
    /// Unit-L2-norm weight functions.
    pub weight_r: SmoothedCurve,
    pub weight_m: SmoothedCurve,
    pub scores_r: Vec<f64>,
    pub scores_m: Vec<f64>,
    /// Leading singular value over the sum of all singular values.
    pub explained: f64,
    /// Leading singular value: the covariance of the paired scores.
    pub covariance: f64,
}

impl FccResult {
    pub fn weight(&self, which: CurveSet) -> &SmoothedCurve {
        match which {
            CurveSet::R => &self.weight_r,
            CurveSet::M => &self.weight_m,
        }
    }

    pub fn mean(&self, which: CurveSet) -> &SmoothedCurve {
        match which {
            CurveSet::R => &self.mean_r,
            CurveSet::M => &self.mean_m,
        }
    }
}

struct Coefs {
    basis: BSplineBasis,
    centered: DMatrix<f64>,
    mean: DVector<f64>,
    gram: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

fn coefficient_matrix(curves: &[SmoothedCurve], label: &str) -> Result<Coefs> {
    let basis = curves[0].basis.clone();
    if let Some(c) = curves.iter().find(|c| c.basis != basis) {
        return Err(Error::BasisMismatch(format!("{label} curve {} uses a different basis", c.unit_id)));
    }
    let n = curves.len();
    let k = basis.n_basis();
    let mut m = DMatrix::zeros(n, k);
    for (i, c) in curves.iter().enumerate() {
        m.row_mut(i).copy_from(&DVector::from_column_slice(&c.coefs).transpose());
    }
    let mean = DVector::from_iterator(k, m.column_iter().map(|col| col.mean()));
    for mut row in m.row_iter_mut() {
        row -= mean.transpose();
    }
    let gram = basis.gram(0, 0);
    let chol_l = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("basis Gram matrix not positive definite".into()))?
        .l();
    Ok(Coefs { basis, centered: m, mean, gram, chol_l })
}

/// Leading mode of covariation between paired R and M curve sets.
pub fn first_fcc(set_r: &[SmoothedCurve], set_m: &[SmoothedCurve]) -> Result<FccResult> {
    let n = set_r.len();
    if n < 3 || set_m.len() < 3 {
        return Err(Error::TooFewUnits { needed: 3, got: n.min(set_m.len()) });
    }
    if set_m.len() != n {
        return Err(Error::InvalidParameter(format!("unpaired sets: {n} R curves, {} M curves", set_m.len())));
    }
    if let Some((r, m)) = set_r.iter().zip(set_m).find(|(r, m)| r.unit_id != m.unit_id) {
        return Err(Error::InvalidParameter(format!("unpaired units {} / {}", r.unit_id, m.unit_id)));
    }
    let x = coefficient_matrix(set_r, "R")?;
    let y = coefficient_matrix(set_m, "M")?;

    let cross = x.chol_l.transpose() * x.centered.transpose() * &y.centered * &y.chol_l / (n as f64 - 1.0);
    let svd = cross.svd(true, true);
    let (lead, sigma) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let total: f64 = svd.singular_values.iter().sum();
    if !(sigma > 0.0) {
        return Err(Error::ConstantInput("curves show no cross-covariation".into()));
    }
    let p = svd.u.as_ref().unwrap().column(lead).into_owned();
    let q = svd.v_t.as_ref().unwrap().row(lead).transpose();
    let mut a = x.chol_l.transpose().solve_upper_triangular(&p).unwrap();
    let mut b = y.chol_l.transpose().solve_upper_triangular(&q).unwrap();

    // Sign convention: the R weight function integrates to a non-negative value.
    let ones = DVector::from_element(a.len(), 1.0);
    let integral = (ones.transpose() * &x.gram * &a)[(0, 0)];
    let flip = if integral.abs() > 1e-12 {
        integral < 0.0
    } else {
        a.iter().copied().max_by(|u, v| u.abs().total_cmp(&v.abs())).unwrap_or(0.0) < 0.0
    };
    if flip {
        a = -a;
        b = -b;
    }

    let scores_r: Vec<f64> = (&x.centered * &x.gram * &a).iter().copied().collect();
    let scores_m: Vec<f64> = (&y.centered * &y.gram * &b).iter().copied().collect();
    let curve = |id: &str, basis: &BSplineBasis, v: &DVector<f64>| {
        SmoothedCurve::new(id, basis.clone(), v.iter().copied().collect())
    };
    Ok(FccResult {
        unit_ids: set_r.iter().map(|c| c.unit_id.clone()).collect(),
        mean_r: curve("mean_r", &x.basis, &x.mean)?,
        mean_m: curve("mean_m", &y.basis, &y.mean)?,
        weight_r: curve("fcc_r", &x.basis, &a)?,
        weight_m: curve("fcc_m", &y.basis, &b)?,
        scores_r,
        scores_m,
        explained: sigma / total,
        covariance: sigma,
    })
}

/// Rank-one reconstruction `mean + score · weight` of a curve.
pub fn project_fcc(curve: &SmoothedCurve, fcc: &FccResult, which: CurveSet) -> Result<SmoothedCurve> {
    let weight = fcc.weight(which);
    let mean = fcc.mean(which);
    if curve.basis != weight.basis {
        return Err(Error::BasisMismatch(format!("{} does not share the FCC basis", curve.unit_id)));
    }
    let gram = weight.basis.gram(0, 0);
    let centered = curve.coef_vector() - mean.coef_vector();
    let w = weight.coef_vector();
    let score = (centered.transpose() * &gram * &w)[(0, 0)];
    let coefs = mean.coef_vector() + w * score;
    Ok(SmoothedCurve {
        unit_id: curve.unit_id.clone(),
        basis: curve.basis.clone(),
        coefs: coefs.iter().copied().collect(),
        domain: curve.domain,
    })
}
