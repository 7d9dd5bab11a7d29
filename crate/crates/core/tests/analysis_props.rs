use chrono::{Duration, NaiveDate};
use epimob::analysis::{
    cumulative_cases, delay_in_mobility_reduction, incidence_per_100k, pearson_fit, Delay, DelayOptions,
};
use epimob::rt::CaseSeries;
use epimob::series::{DailySeries, SeriesKind};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const RAW: DelayOptions = DelayOptions { mobility_ma7: false };

fn day(offset: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 2, 1).unwrap() + Duration::days(offset)
}

fn series(id: &str, start: NaiveDate, v: Vec<f64>, kind: SeriesKind) -> DailySeries {
    DailySeries::dense(id, start, v, kind).unwrap()
}

/// R crosses 1 on day `rise`, mobility falls to 40% of 100 on day `drop`.
fn trace(len: usize, rise: usize, drop: usize, start: NaiveDate) -> (DailySeries, DailySeries) {
    let r = (0..len).map(|t| if t < rise { 0.8 } else { 1.6 }).collect();
    let m = (0..len).map(|t| if t < drop { 100.0 } else { 40.0 }).collect();
    (series("u", start, r, SeriesKind::RtMean), series("u", start, m, SeriesKind::Mobility))
}

#[test]
fn lombardy_like_trace() {
    let (rt, mob) = trace(120, 8, 40, day(0));
    let rec = delay_in_mobility_reduction(&rt, &mob, 100.0, RAW).unwrap();
    assert_eq!(rec.delay, Delay::Days(32));
    assert_eq!(rec.first_supercritical, Some(day(8)));
    assert_eq!(rec.mr_date, Some(day(40)));
}

#[test]
fn same_day_and_earlier_drops_give_zero() {
    for drop in [5, 12, 20] {
        let (rt, mob) = trace(60, 20, drop, day(0));
        assert_eq!(delay_in_mobility_reduction(&rt, &mob, 100.0, RAW).unwrap().delay, Delay::Days(0));
    }
}

#[test]
fn markers_for_missing_crossings() {
    let (rt, mob) = trace(60, 100, 10, day(0));
    assert_eq!(delay_in_mobility_reduction(&rt, &mob, 100.0, RAW).unwrap().delay, Delay::Undefined);
    let (rt, mob) = trace(60, 10, 100, day(0));
    assert_eq!(delay_in_mobility_reduction(&rt, &mob, 100.0, RAW).unwrap().delay, Delay::Unbounded);
    assert!(delay_in_mobility_reduction(&rt, &mob, 0.0, RAW).is_err());
}

#[test]
fn threshold_is_inclusive() {
    let r = series("u", day(0), vec![1.2; 10], SeriesKind::RtMean);
    let m = series("u", day(0), vec![100.0, 90.0, 80.0, 70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 70.0], SeriesKind::Mobility);
    assert_eq!(delay_in_mobility_reduction(&r, &m, 100.0, RAW).unwrap().delay, Delay::Days(2));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn delay_ignores_joint_translation(
        rise in 0usize..50,
        drop in 0usize..70,
        shift in -300i64..300,
        smooth in any::<bool>(),
    ) {
        let opts = DelayOptions { mobility_ma7: smooth };
        let (r0, m0) = trace(80, rise, drop, day(0));
        let (r1, m1) = trace(80, rise, drop, day(shift));
        let a = delay_in_mobility_reduction(&r0, &m0, 100.0, opts).unwrap();
        let b = delay_in_mobility_reduction(&r1, &m1, 100.0, opts).unwrap();
        prop_assert_eq!(a.delay, b.delay);
        if let Some(d) = a.delay.days() {
            prop_assert!(d >= 0);
        }
    }

    #[test]
    fn incidence_is_a_prefix_sum(counts in prop::collection::vec(0.0f64..1e4, 1..60), pop in 1e3f64..1e7, k in 0usize..60) {
        let k = k % counts.len();
        let c = CaseSeries::new("u", day(0), counts.clone()).unwrap();
        let (total, inc) = cumulative_cases(&c, pop, day(k as i64)).unwrap();
        let oracle: f64 = counts[..=k].iter().sum();
        prop_assert!((total - oracle).abs() <= 1e-9 * oracle.max(1.0));
        prop_assert!((inc - 1e5 * oracle / pop).abs() <= 1e-9 * inc.max(1.0));
        prop_assert!(incidence_per_100k(&c, pop, day(counts.len() as i64)).is_err());
    }

    #[test]
    fn pearson_is_affine_invariant(
        pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 4..30),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let Ok(base) = pearson_fit(&xs, &ys) else { return Ok(()) };
        let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let fit = pearson_fit(&moved, &ys).unwrap();
        prop_assert!((fit.r - base.r).abs() < 1e-9);
        prop_assert!((fit.slope * a - base.slope).abs() < 1e-9 * (1.0 + base.slope.abs()));
        // r² equals the explained share of the least-squares line.
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - base.intercept - base.slope * x).powi(2)).sum();
        prop_assert!((base.r2 - (1.0 - sse / sst)).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&base.p_value));
    }
}

#[test]
fn exact_line_has_unit_correlation() {
    let xs: Vec<f64> = (0..20).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
    let fit = pearson_fit(&xs, &ys).unwrap();
    assert!((fit.r + 1.0).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
    assert!((fit.slope + 0.5).abs() < 1e-12 && (fit.intercept - 3.0).abs() < 1e-12);
    assert_eq!(fit.p_value, 0.0);
}

#[test]
fn five_point_closed_form() {
    // Sxx = 10, Syy = 10, Sxy = 9.
    let fit = pearson_fit(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 5.0, 4.0, 6.0]).unwrap();
    assert!((fit.r - 0.9).abs() < 1e-12);
    assert!((fit.slope - 0.9).abs() < 1e-12 && (fit.intercept - 1.3).abs() < 1e-12);
    // Student t with 3 df has a closed-form CDF.
    let t = 0.9 * (3.0 / 0.19f64).sqrt();
    let u = t / 3f64.sqrt();
    let upper = 0.5 - (u / (1.0 + u * u) + u.atan()) / std::f64::consts::PI;
    assert!((fit.p_value - 2.0 * upper).abs() < 1e-10, "{} vs {}", fit.p_value, 2.0 * upper);
}

#[test]
fn constant_and_short_inputs_fail() {
    assert!(pearson_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(pearson_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    assert!(pearson_fit(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
}

#[test]
fn shuffled_pairs_rarely_correlate() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let xs: Vec<f64> = (0..20).map(|_| rng.sample(StandardNormal)).collect();
    let mut ys: Vec<f64> = (0..20).map(|_| rng.sample(StandardNormal)).collect();
    // The expected share is about 0.9535, so the estimate needs enough
    // shuffles to resolve it from 0.95.
    let shuffles = 20_000;
    let below = (0..shuffles)
        .filter(|_| {
            ys.shuffle(&mut rng);
            pearson_fit(&xs, &ys).unwrap().r.abs() < 0.45
        })
        .count();
    assert!(below as f64 >= 0.95 * shuffles as f64, "{below}/{shuffles}");
}

/// Twenty units whose epidemics grow unchecked until mobility drops, so a
/// longer delay means more cases.
fn delay_incidence_ensemble(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut delays, mut incidence) = (Vec::new(), Vec::new());
    for u in 0..20 {
        let rise = rng.random_range(0..15usize);
        let delay = rng.random_range(5..40usize);
        let growth = 0.08 + 0.02 * rng.sample::<f64, _>(StandardNormal);
        let (rt, mob) = trace(120, rise, rise + delay, day(0));
        let counts: Vec<f64> = (0..120)
            .map(|t| {
                let log = if t < rise {
                    0.0
                } else if t < rise + delay {
                    growth * (t - rise) as f64
                } else {
                    growth * delay as f64 - 0.05 * (t - rise - delay) as f64
                };
                (5.0 * log.exp()).round()
            })
            .collect();
        let cases = CaseSeries::new(format!("u{u}"), day(0), counts).unwrap();
        let pop = 1e6 * (0.5 * rng.sample::<f64, _>(StandardNormal)).exp();
        let rec = delay_in_mobility_reduction(&rt, &mob, 100.0, DelayOptions::default()).unwrap();
        delays.push(rec.delay.days().unwrap() as f64);
        incidence.push(incidence_per_100k(&cases, pop, day(119)).unwrap().ln());
    }
    (delays, incidence)
}

#[test]
fn longer_delays_carry_higher_incidence() {
    let seeds = 50;
    let hits = (0..seeds)
        .filter(|&s| {
            let (d, inc) = delay_incidence_ensemble(s);
            let fit = pearson_fit(&d, &inc).unwrap();
            fit.slope > 0.0 && fit.p_value < 0.05
        })
        .count();
    assert!(hits as f64 >= 0.9 * seeds as f64, "{hits}/{seeds}");
}
