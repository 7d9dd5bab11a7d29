//! Penalized B-spline smoothing with the penalty chosen by GCV.

use chrono::NaiveDate;
use epimob::fda::smooth::residuals;
use epimob::fda::{default_lambda_grid, gcv_select, penalized_smooth, BSplineBasis, Curve};
use epimob::series::{DailySeries, SeriesKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> epimob::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = NaiveDate::from_ymd_opt(2020, 2, 1).unwrap();
    let values: Vec<f64> = (0..120)
        .map(|t| {
            let t = t as f64;
            1.0 + 0.8 * (-((t - 40.0) / 12.0).powi(2)).exp() + 0.1 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let series = DailySeries::dense("demo", start, values, SeriesKind::RtMean)?;
    let basis = BSplineBasis::new((0.0, 119.0), 32, 4)?;

    let sel = gcv_select(std::slice::from_ref(&series), &basis, &default_lambda_grid())?;
    for (lambda, score) in sel.scores.iter().step_by(4) {
        println!("lambda {lambda:>10.3e}  GCV {}", score.map_or("-".into(), |s| format!("{s:.5}")));
    }
    let curve = penalized_smooth(&series, &basis, sel.lambda)?;
    let res = residuals(&series, &curve);
    let rms = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
    println!("chosen lambda {:.3e}; peak at day {:.1}; residual rms {rms:.4}", sel.lambda, curve.argmax());
    println!("f(40) = {:.3}, f'(40) = {:.4}", curve.eval(40.0), curve.deriv(40.0, 1));
    Ok(())
}
