//! Delay in mobility reduction against cumulative incidence.

use chrono::{Duration, NaiveDate};
use epimob::analysis::{delay_in_mobility_reduction, incidence_per_100k, pearson_fit, DelayOptions};
use epimob::rt::CaseSeries;
use epimob::series::{DailySeries, SeriesKind};

fn main() -> epimob::Result<()> {
    let start = NaiveDate::from_ymd_opt(2020, 2, 1).unwrap();
    let (mut delays, mut incidence) = (Vec::new(), Vec::new());
    for (i, delay) in [8usize, 12, 15, 19, 22, 26, 32, 35].into_iter().enumerate() {
        let rise = 5 + i % 3;
        let drop = rise + delay;
        let r: Vec<f64> = (0..100).map(|t| if t < rise { 0.9 } else if t < drop { 1.5 } else { 0.8 }).collect();
        let m: Vec<f64> = (0..100).map(|t| if t < drop { 1000.0 } else { 450.0 }).collect();
        let cases: Vec<f64> = (0..100)
            .map(|t| {
                let grow = t.min(drop).saturating_sub(rise) as f64;
                let fall = t.saturating_sub(drop) as f64;
                (10.0 * (0.07 * grow - 0.03 * fall).exp()).round()
            })
            .collect();
        let id = format!("unit{i}");
        let rt = DailySeries::dense(&id, start, r, SeriesKind::RtMean)?;
        let mob = DailySeries::dense(&id, start, m, SeriesKind::Mobility)?;
        let rec = delay_in_mobility_reduction(&rt, &mob, 1000.0, DelayOptions::default())?;
        let inc = incidence_per_100k(&CaseSeries::new(&id, start, cases)?, 5e5, start + Duration::days(99))?;
        println!("{id}: first R>1 {:?}, reduced {:?}, delay {}, incidence {inc:.1}", rec.first_supercritical, rec.mr_date, rec.delay);
        delays.push(rec.delay.days().unwrap() as f64);
        incidence.push(inc);
    }
    let fit = pearson_fit(&delays, &incidence)?;
    println!("r = {:.3} (p = {:.2e}), slope {:.2} per day", fit.r, fit.p_value, fit.slope);
    Ok(())
}
