//! Shift registration of paired R/M curves.

use serde::{Deserialize, Serialize};

use super::curve::{Curve, SmoothedCurve};
use super::fcc::{project_fcc, CurveSet, FccResult};
use super::quadrature::piecewise_rule;
use crate::error::{Error, Result};

pub const DEFAULT_SHIFT_CAP: f64 = 20.0;
/// Spacing of the candidate shift grid, in days.
pub const SHIFT_STEP: f64 = 0.5;

/// Mean squared distance between `curve(t - delta)` and `target(t)` over
/// their overlap, or `None` when the overlap is empty.
pub fn shifted_distance<C: Curve + ?Sized, T: Curve + ?Sized>(curve: &C, target: &T, delta: f64) -> Option<f64> {
    let (a, b) = curve.domain();
    let (c, d) = target.domain();
    let lo = (a + delta).max(c);
    let hi = (b + delta).min(d);
    if !(hi > lo) {
        return None;
    }
    let mut breaks: Vec<f64> = curve.breakpoints().into_iter().map(|x| x + delta).collect();
    breaks.extend(target.breakpoints());
    let m = curve.degree().max(target.degree()) + 1;
    let sq: f64 = piecewise_rule(&breaks, lo, hi, m)
        .into_iter()
        .map(|(t, w)| w * (curve.eval(t - delta) - target.eval(t)).powi(2))
        .sum();
    Some(sq / (hi - lo))
}

/// Shift `δ ∈ {-cap, …, cap}` (step 0.5 day) minimizing the overlap-normalized
/// L2 distance between `curve(t - δ)` and `target(t)`; ties go to the
/// smaller `|δ|`.
pub fn estimate_shift<C: Curve + ?Sized, T: Curve + ?Sized>(curve: &C, target: &T, cap: f64) -> Result<f64> {
    if !(cap >= 0.0) || !cap.is_finite() {
        return Err(Error::InvalidParameter(format!("shift cap must be >= 0, got {cap}")));
    }
    let steps = (cap / SHIFT_STEP + 1e-9).floor() as i64;
    let mut best: Option<(f64, f64)> = None;
    // Visit 0, -0.5, +0.5, -1, +1, ... so the first minimum found is closest to 0.
    for k in 0..=steps {
        for sign in [-1i64, 1] {
            if k == 0 && sign == 1 {
                continue;
            }
            let delta = (sign * k) as f64 * SHIFT_STEP;
            let Some(dist) = shifted_distance(curve, target, delta) else { continue };
            match best {
                Some((_, b)) if dist >= b - 1e-12 * b.abs() => {}
                _ => best = Some((delta, dist)),
            }
        }
    }
    best.map(|(d, _)| d).ok_or_else(|| Error::EmptyDomain(vec!["<curve/target overlap>".into()]))
}

/// Shifts both curves of a unit by the same `delta`.
pub fn register_pair(r: &SmoothedCurve, m: &SmoothedCurve, delta: f64) -> (SmoothedCurve, SmoothedCurve) {
    (r.shifted(delta), m.shifted(delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub unit_ids: Vec<String>,
    pub shifts: Vec<f64>,
    pub cap: f64,
    pub common_domain: (f64, f64),
    pub curves_r: Vec<SmoothedCurve>,
    pub curves_m: Vec<SmoothedCurve>,
}

/// Intersection of `[lo_i, hi_i]`; on failure names the units that bound it.
pub fn intersect_domains(ids: &[String], domains: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut lo_id, mut hi_id) = (0, 0);
    for (i, &(a, b)) in domains.iter().enumerate() {
        if a > lo {
            lo = a;
            lo_id = i;
        }
        if b < hi {
            hi = b;
            hi_id = i;
        }
    }
    if !(hi > lo) {
        let mut offenders = vec![ids[lo_id].clone()];
        if hi_id != lo_id {
            offenders.push(ids[hi_id].clone());
        }
        return Err(Error::EmptyDomain(offenders));
    }
    Ok((lo, hi))
}

/// Applies per-unit shifts to paired curves and restricts all of them to the
/// common shifted domain.
pub fn register_all(
    rs: &[SmoothedCurve],
    ms: &[SmoothedCurve],
    shifts: &[f64],
    cap: f64,
) -> Result<RegistrationResult> {
    if rs.len() != ms.len() || rs.len() != shifts.len() || rs.is_empty() {
        return Err(Error::InvalidParameter("need one R curve, one M curve and one shift per unit".into()));
    }
    if let Some(d) = shifts.iter().find(|d| d.abs() > cap + 1e-12) {
        return Err(Error::InvalidParameter(format!("shift {d} exceeds cap {cap}")));
    }
    let mut shifted = Vec::with_capacity(rs.len());
    let mut ids = Vec::with_capacity(rs.len());
    let mut domains = Vec::with_capacity(rs.len());
    for ((r, m), &d) in rs.iter().zip(ms).zip(shifts) {
        let (r2, m2) = register_pair(r, m, d);
        ids.push(r.unit_id.clone());
        domains.push((r2.domain.0.max(m2.domain.0), r2.domain.1.min(m2.domain.1)));
        shifted.push((r2, m2));
    }
    let (lo, hi) = intersect_domains(&ids, &domains)?;
    let mut curves_r = Vec::with_capacity(rs.len());
    let mut curves_m = Vec::with_capacity(rs.len());
    for (r, m) in shifted {
        curves_r.push(r.restricted(lo, hi)?);
        curves_m.push(m.restricted(lo, hi)?);
    }
    Ok(RegistrationResult {
        unit_ids: ids,
        shifts: shifts.to_vec(),
        cap,
        common_domain: (lo, hi),
        curves_r,
        curves_m,
    })
}

/// Registers every unit's R curve to its own FCC projection and moves the
/// M curve by the same shift.
pub fn register_to_fcc(
    rs: &[SmoothedCurve],
    ms: &[SmoothedCurve],
    fcc: &FccResult,
    cap: f64,
) -> Result<RegistrationResult> {
    let shifts = rs
        .iter()
        .map(|r| {
            let target = project_fcc(r, fcc, CurveSet::R)?;
            estimate_shift(r, &target, cap)
        })
        .collect::<Result<Vec<_>>>()?;
    register_all(rs, ms, &shifts, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::basis::BSplineBasis;

    fn bump(center: f64) -> SmoothedCurve {
        let basis = BSplineBasis::new((0.0, 120.0), 40, 4).unwrap();
        let (a, b) = basis.domain();
        let n = basis.n_basis();
        // Greville abscissae give a good shape-preserving coefficient guess.
        let coefs = (0..n)
            .map(|i| {
                let g = basis.knots[i + 1..i + 4].iter().sum::<f64>() / 3.0;
                (-(g - center).powi(2) / 50.0).exp()
            })
            .collect();
        let c = SmoothedCurve::new("u", basis, coefs).unwrap();
        assert_eq!(c.domain, (a, b));
        c
    }

    #[test]
    fn identical_curve_needs_no_shift() {
        let c = bump(60.0);
        assert_eq!(estimate_shift(&c, &c, 20.0).unwrap(), 0.0);
    }

    #[test]
    fn constructed_shift_recovered_and_capped() {
        let c = bump(50.0);
        let target = c.shifted(7.0);
        assert!((estimate_shift(&c, &target, 20.0).unwrap() - 7.0).abs() <= 0.5);
        let far = c.shifted(30.0);
        assert_eq!(estimate_shift(&c, &far, 20.0).unwrap(), 20.0);
    }

    #[test]
    fn shift_is_antisymmetric() {
        let c = bump(55.0);
        for d in [-9.5, -3.0, 4.5, 12.0] {
            let s = c.shifted(d);
            let forward = estimate_shift(&c, &s, 20.0).unwrap();
            let back = estimate_shift(&s, &c, 20.0).unwrap();
            assert!((forward + back).abs() <= SHIFT_STEP, "{d}: {forward} {back}");
        }
    }

    #[test]
    fn opposite_shifts_shrink_domain_by_their_spread() {
        let r = vec![bump(50.0), bump(60.0)];
        let m = r.clone();
        let reg = register_all(&r, &m, &[5.0, -5.0], 20.0).unwrap();
        assert_eq!(reg.common_domain, (5.0, 115.0));
        let zero = register_all(&r, &m, &[0.0, 0.0], 20.0).unwrap();
        assert_eq!(zero.common_domain, (0.0, 120.0));
        assert_eq!(zero.curves_r[1], r[1]);
        assert!(register_all(&r, &m, &[25.0, 0.0], 20.0).is_err());
    }

    #[test]
    fn disjoint_domains_name_offenders() {
        let mut a = bump(50.0);
        a.unit_id = "a".into();
        let mut b = a.shifted(200.0);
        b.unit_id = "b".into();
        let err = register_all(&[a.clone(), b.clone()], &[a, b], &[0.0, 0.0], 20.0).unwrap_err();
        match err {
            Error::EmptyDomain(ids) => assert_eq!(ids, vec!["b".to_string(), "a".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_overlap_at_any_shift_errors() {
        let a = bump(50.0);
        let b = a.shifted(500.0);
        assert!(estimate_shift(&a, &b, 20.0).is_err());
    }
}
