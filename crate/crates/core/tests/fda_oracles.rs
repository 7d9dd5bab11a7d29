use epimob::fda::curve::Curve;
use epimob::fda::smooth::{gcv_select, SmoothingProblem};
use epimob::fda::{first_fcc, project_fcc, register_all, BSplineBasis, CurveSet, SmoothedCurve};
use epimob::series::{DailySeries, SeriesKind};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `∫ B_i'' B_j''` by Simpson's rule on each knot span; the integrand is a
/// quadratic there, so the rule is exact.
fn simpson_penalty(basis: &BSplineBasis) -> DMatrix<f64> {
    let k = basis.n_basis();
    let mut p = DMatrix::zeros(k, k);
    for w in basis.breakpoints().windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        for (x, wt) in [(a, 1.0), (m, 4.0), (b, 1.0)] {
            let d = DVector::from_vec(basis.eval_deriv(x, 2));
            p += &d * d.transpose() * (wt * (b - a) / 6.0);
        }
    }
    p
}

fn dense_gcv(times: &[f64], y: &[f64], basis: &BSplineBasis, lambda: f64) -> (f64, f64) {
    let n = times.len();
    let b = DMatrix::from_fn(n, basis.n_basis(), |i, j| basis.eval(times[i])[j]);
    let a = b.transpose() * &b + simpson_penalty(basis) * lambda;
    let hat = &b * a.try_inverse().unwrap() * b.transpose();
    let y = DVector::from_column_slice(y);
    let resid = &y - &hat * &y;
    let df = hat.trace();
    let nf = n as f64;
    (nf * resid.norm_squared() / (nf - df).powi(2), df)
}

#[test]
fn gcv_matches_explicit_hat_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let basis = BSplineBasis::new((0.0, 49.0), 12, 4).unwrap();
    let times: Vec<f64> = (0..50).map(f64::from).collect();
    let y: Vec<f64> = times
        .iter()
        .map(|t| (t / 7.0).sin() + 0.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let problem = SmoothingProblem::from_points(&times, &y, &basis).unwrap();
    for lambda in [1e-2, 0.3, 1.0, 10.0, 300.0, 1e4] {
        let got = problem.gcv(lambda).unwrap();
        let (gcv, df) = dense_gcv(&times, &y, &basis, lambda);
        assert!((got.gcv - gcv).abs() <= 1e-8 * gcv, "λ {lambda}: {} vs {gcv}", got.gcv);
        assert!((got.df - df).abs() <= 1e-8 * df);
    }
}

#[test]
fn zero_penalty_interpolates_when_points_equal_functions() {
    let basis = BSplineBasis::new((0.0, 30.0), 9, 4).unwrap();
    let times: Vec<f64> = (0..9).map(|i| i as f64 * 30.0 / 8.0).collect();
    let y: Vec<f64> = times.iter().map(|t| (t * 0.4).cos() * 3.0 + t).collect();
    let problem = SmoothingProblem::from_points(&times, &y, &basis).unwrap();
    let c = problem.coefficients(0.0).unwrap();
    let fit = problem.design() * c;
    for (f, v) in fit.iter().zip(&y) {
        assert!((f - v).abs() < 1e-8);
    }
}

#[test]
fn lines_survive_every_penalty() {
    let basis = BSplineBasis::new((0.0, 60.0), 16, 4).unwrap();
    let times: Vec<f64> = (0..61).map(f64::from).collect();
    let y: Vec<f64> = times.iter().map(|t| 2.5 - 0.3 * t).collect();
    let problem = SmoothingProblem::from_points(&times, &y, &basis).unwrap();
    for lambda in [0.0, 1.0, 1e3, 1e6] {
        let fit = problem.design() * problem.coefficients(lambda).unwrap();
        let err = fit.iter().zip(&y).map(|(f, v)| (f - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "λ {lambda}: {err}");
    }
}

#[test]
fn gcv_regimes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let basis = BSplineBasis::new((0.0, 99.0), 20, 4).unwrap();
    let grid = epimob::fda::smooth::log_grid(1e-2, 1e6, 33);
    let median = grid[grid.len() / 2];
    let start = chrono::NaiveDate::from_ymd_opt(2020, 2, 1).unwrap();
    let noise: Vec<f64> = (0..100).map(|_| 5.0 + rng.sample::<f64, _>(StandardNormal)).collect();
    let flat = DailySeries::dense("n", start, noise, SeriesKind::RtMean).unwrap();
    assert!(gcv_select(&[flat], &basis, &grid).unwrap().lambda >= median);
    let wiggly: Vec<f64> = (0..100).map(|t| (t as f64 / 4.0).sin() * 10.0 + 1e-3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let curved = DailySeries::dense("c", start, wiggly, SeriesKind::RtMean).unwrap();
    assert!(gcv_select(&[curved], &basis, &grid).unwrap().lambda <= median);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn smoothing_is_linear(
        y1 in prop::collection::vec(-10.0f64..10.0, 40),
        y2 in prop::collection::vec(-10.0f64..10.0, 40),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        lambda in 0.0f64..100.0,
    ) {
        let basis = BSplineBasis::new((0.0, 39.0), 10, 4).unwrap();
        let times: Vec<f64> = (0..40).map(f64::from).collect();
        let p = SmoothingProblem::from_points(&times, &y1, &basis).unwrap();
        let v1 = DVector::from_column_slice(&y1);
        let v2 = DVector::from_column_slice(&y2);
        let combo = p.coefficients_for(&(&v1 * a + &v2 * b), lambda).unwrap();
        let sep = p.coefficients_for(&v1, lambda).unwrap() * a + p.coefficients_for(&v2, lambda).unwrap() * b;
        prop_assert!((combo - sep).amax() < 1e-8);
    }

    #[test]
    fn common_domain_is_the_interval_intersection(shifts in prop::collection::vec(-20.0f64..20.0, 2..8)) {
        let basis = BSplineBasis::new((0.0, 100.0), 10, 4).unwrap();
        let curves: Vec<SmoothedCurve> = (0..shifts.len())
            .map(|i| SmoothedCurve::new(format!("u{i}"), basis.clone(), vec![i as f64; 10]).unwrap())
            .collect();
        let reg = register_all(&curves, &curves, &shifts, 20.0).unwrap();
        let lo = shifts.iter().map(|d| 0.0 + d).fold(f64::NEG_INFINITY, f64::max);
        let hi = shifts.iter().map(|d| 100.0 + d).fold(f64::INFINITY, f64::min);
        prop_assert!((reg.common_domain.0 - lo).abs() < 1e-12);
        prop_assert!((reg.common_domain.1 - hi).abs() < 1e-12);
        for c in reg.curves_r.iter().chain(&reg.curves_m) {
            prop_assert_eq!(c.domain(), reg.common_domain);
        }
    }
}

fn random_set(rng: &mut ChaCha8Rng, basis: &BSplineBasis, n: usize) -> Vec<SmoothedCurve> {
    (0..n)
        .map(|i| {
            let coefs = (0..basis.n_basis()).map(|_| rng.sample(StandardNormal)).collect();
            SmoothedCurve::new(format!("u{i}"), basis.clone(), coefs).unwrap()
        })
        .collect()
}

/// Symmetric square root through the eigendecomposition, a different route
/// from the Cholesky factor used by the library.
fn sym_sqrt(g: &DMatrix<f64>, inverse: bool) -> DMatrix<f64> {
    let e = g.clone().symmetric_eigen();
    let d = e.eigenvalues.map(|v| if inverse { 1.0 / v.sqrt() } else { v.sqrt() });
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

#[test]
fn leading_pair_matches_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let basis = BSplineBasis::new((0.0, 50.0), 6, 4).unwrap();
    for _ in 0..5 {
        let rs = random_set(&mut rng, &basis, 5);
        let ms = random_set(&mut rng, &basis, 5);
        let fcc = first_fcc(&rs, &ms).unwrap();
        let centered = |set: &[SmoothedCurve]| {
            let m = DMatrix::from_fn(5, 6, |i, k| set[i].coefs[k]);
            let mean = DVector::from_iterator(6, m.column_iter().map(|c| c.mean()));
            DMatrix::from_fn(5, 6, |i, k| m[(i, k)] - mean[k])
        };
        let (cr, cm) = (centered(&rs), centered(&ms));
        let g = basis.gram(0, 0);
        let (gh, gih) = (sym_sqrt(&g, false), sym_sqrt(&g, true));
        let op = &gh * cr.transpose() * &cm * &gh / 4.0;
        let svd = op.svd(true, true);
        let (k, &sigma) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let a = &gih * svd.u.as_ref().unwrap().column(k);
        let b = &gih * svd.v_t.as_ref().unwrap().row(k).transpose();
        let wr = fcc.weight_r.coef_vector();
        let wm = fcc.weight_m.coef_vector();
        let sign = if wr.dot(&a) < 0.0 { -1.0 } else { 1.0 };
        assert!((&wr - &a * sign).amax() < 1e-8, "R weight");
        assert!((&wm - &b * sign).amax() < 1e-8, "M weight");
        let cov = fcc.scores_r.iter().zip(&fcc.scores_m).map(|(x, y)| x * y).sum::<f64>() / 4.0;
        assert!((cov - sigma).abs() < 1e-8 * sigma, "{cov} vs {sigma}");
        let total: f64 = svd.singular_values.iter().sum();
        assert!((fcc.explained - sigma / total).abs() < 1e-8);
    }
}

#[test]
fn projection_of_the_mean_is_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let basis = BSplineBasis::new((0.0, 40.0), 8, 4).unwrap();
    let rs = random_set(&mut rng, &basis, 6);
    let ms = random_set(&mut rng, &basis, 6);
    let fcc = first_fcc(&rs, &ms).unwrap();
    for which in [CurveSet::R, CurveSet::M] {
        let p = project_fcc(fcc.mean(which), &fcc, which).unwrap();
        assert!((p.coef_vector() - fcc.mean(which).coef_vector()).amax() < 1e-10);
    }
    let other = BSplineBasis::new((0.0, 40.0), 9, 4).unwrap();
    let foreign = SmoothedCurve::new("x", other, vec![0.0; 9]).unwrap();
    assert!(project_fcc(&foreign, &fcc, CurveSet::R).is_err());
}
