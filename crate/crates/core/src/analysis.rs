//! Delay in mobility reduction, cumulative incidence and their association.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rt::CaseSeries;
use crate::series::{column, parse_date, DailySeries};

/// Mobility must fall to this fraction of baseline to count as reduced.
pub const REDUCTION_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "days")]
pub enum Delay {
    Days(i64),
    /// `R_t` never exceeded 1.
    Undefined,
    /// Mobility never fell below the threshold after the first supercritical day.
    Unbounded,
}

impl Delay {
    pub fn days(self) -> Option<i64> {
        match self {
            Delay::Days(d) => Some(d),
            _ => None,
        }
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Days(d) => write!(f, "{d}"),
            Delay::Undefined => f.write_str("undefined"),
            Delay::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl FromStr for Delay {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "undefined" => Ok(Delay::Undefined),
            "unbounded" => Ok(Delay::Unbounded),
            other => other
                .parse()
                .map(Delay::Days)
                .map_err(|_| Error::InvalidParameter(format!("bad delay value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRecord {
    pub unit_id: String,
    pub first_supercritical: Option<NaiveDate>,
    pub mr_date: Option<NaiveDate>,
    pub delay: Delay,
    pub incidence_100k: Option<f64>,
    pub total_cases: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayOptions {
    /// Compare the 7-day centered moving average of mobility, not raw values.
    pub mobility_ma7: bool,
}

impl Default for DelayOptions {
    fn default() -> Self {
        DelayOptions { mobility_ma7: true }
    }
}

/// Days between the first `R_t > 1` and the first day on or after it with
/// `M_t <= 0.8 * baseline`. If mobility is already reduced on the first
/// supercritical day the delay is 0.
pub fn delay_in_mobility_reduction(
    rt: &DailySeries,
    mobility: &DailySeries,
    baseline: f64,
    opts: DelayOptions,
) -> Result<DelayRecord> {
    if !(baseline > 0.0) || !baseline.is_finite() {
        return Err(Error::InvalidParameter(format!("baseline must be > 0, got {baseline}")));
    }
    let overlap_lo = rt.start_date.max(mobility.start_date);
    let overlap_hi = rt.end_date().min(mobility.end_date());
    if rt.is_empty() || mobility.is_empty() || overlap_hi < overlap_lo {
        return Err(Error::EmptyDomain(vec![rt.unit_id.clone(), mobility.unit_id.clone()]));
    }
    let m = if opts.mobility_ma7 { mobility.moving_average(7)? } else { mobility.clone() };
    let mut record = DelayRecord {
        unit_id: rt.unit_id.clone(),
        first_supercritical: None,
        mr_date: None,
        delay: Delay::Undefined,
        incidence_100k: None,
        total_cases: None,
    };
    let Some(start) = rt
        .values
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_some_and(|r| r > 1.0))
        .map(|(i, _)| rt.date_at(i))
    else {
        return Ok(record);
    };
    record.first_supercritical = Some(start);
    let threshold = REDUCTION_FRACTION * baseline;
    let from = m.index_of(start).unwrap_or(0);
    let mr = (from..m.len())
        .filter(|&i| m.date_at(i) >= start)
        .find(|&i| m.values[i].is_some_and(|v| v <= threshold))
        .map(|i| m.date_at(i));
    match mr {
        Some(date) => {
            record.mr_date = Some(date);
            record.delay = Delay::Days((date - start).num_days());
        }
        None => record.delay = Delay::Unbounded,
    }
    Ok(record)
}

/// Cases per 100k inhabitants up to and including `as_of`.
pub fn incidence_per_100k(cases: &CaseSeries, population: f64, as_of: NaiveDate) -> Result<f64> {
    Ok(cumulative_cases(cases, population, as_of)?.1)
}

/// `(total cases, incidence per 100k)` up to `as_of`.
pub fn cumulative_cases(cases: &CaseSeries, population: f64, as_of: NaiveDate) -> Result<(f64, f64)> {
    if !(population > 0.0) {
        return Err(Error::InvalidParameter(format!("population must be > 0, got {population}")));
    }
    let idx = (as_of - cases.start_date).num_days();
    if idx < 0 || idx as usize >= cases.len() {
        return Err(Error::InvalidParameter(format!(
            "{}: as-of date {as_of} outside the series {}..{}",
            cases.unit_id,
            cases.start_date,
            cases.date_at(cases.len().saturating_sub(1))
        )));
    }
    let total: f64 = cases.counts[..=idx as usize].iter().sum();
    Ok((total, 1e5 * total / population))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonFit {
    pub n: usize,
    pub r: f64,
    /// Two-sided, from `t = r sqrt((n-2)/(1-r²))` with `n - 2` df.
    pub p_value: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn pearson_fit(xs: &[f64], ys: &[f64]) -> Result<PearsonFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::InvalidParameter(format!("{n} x values but {} y values", ys.len())));
    }
    if n < 3 {
        return Err(Error::TooFewUnits { needed: 3, got: n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite input".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput(
            if sxx == 0.0 { "x values are constant" } else { "y values are constant" }.into(),
        ));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else if df == 0.0 {
        1.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    let slope = sxy / sxx;
    Ok(PearsonFit {
        n,
        r,
        p_value,
        slope,
        intercept: my - slope * mx,
        r2: r * r,
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// `unit,first_supercritical,mr_date,delay_days,incidence_100k,total_cases`.
pub fn write_delay_csv<W: Write>(records: &[DelayRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["unit", "first_supercritical", "mr_date", "delay_days", "incidence_100k", "total_cases"])?;
    for r in records {
        w.write_record([
            r.unit_id.clone(),
            opt(&r.first_supercritical),
            opt(&r.mr_date),
            r.delay.to_string(),
            opt(&r.incidence_100k),
            opt(&r.total_cases),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_delay_csv<R: Read>(reader: R) -> Result<Vec<DelayRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = |name: &str| column(&headers, name);
    let (iu, is, im, id, ii, it) = (
        idx("unit")?,
        idx("first_supercritical")?,
        idx("mr_date")?,
        idx("delay_days")?,
        idx("incidence_100k")?,
        idx("total_cases")?,
    );
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let date = |i: usize| -> Result<Option<NaiveDate>> {
            let raw = rec.get(i).unwrap_or("");
            if raw.is_empty() { Ok(None) } else { parse_date(raw, line).map(Some) }
        };
        let num = |i: usize| -> Result<Option<f64>> {
            let raw = rec.get(i).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| Error::Parse { line, message: format!("bad number {raw:?}") })
        };
        out.push(DelayRecord {
            unit_id: rec.get(iu).unwrap_or("").to_string(),
            first_supercritical: date(is)?,
            mr_date: date(im)?,
            delay: rec.get(id).unwrap_or("").parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
            incidence_100k: num(ii)?,
            total_cases: num(it)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SeriesKind;
    use chrono::Duration;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn raw() -> DelayOptions {
        DelayOptions { mobility_ma7: false }
    }

    #[test]
    fn same_day_crossing_gives_zero() {
        let rt = DailySeries::dense("u", d("2020-02-20"), [0.8, 1.2, 1.3], SeriesKind::RtMean).unwrap();
        let m = DailySeries::dense("u", d("2020-02-20"), [100.0, 70.0, 60.0], SeriesKind::Mobility).unwrap();
        let rec = delay_in_mobility_reduction(&rt, &m, 100.0, raw()).unwrap();
        assert_eq!(rec.delay, Delay::Days(0));
        assert_eq!(rec.mr_date, Some(d("2020-02-21")));
    }

    #[test]
    fn markers() {
        let sub = DailySeries::dense("u", d("2020-02-20"), [0.8, 0.9], SeriesKind::RtMean).unwrap();
        let m = DailySeries::dense("u", d("2020-02-20"), [100.0, 100.0], SeriesKind::Mobility).unwrap();
        assert_eq!(delay_in_mobility_reduction(&sub, &m, 100.0, raw()).unwrap().delay, Delay::Undefined);
        let sup = DailySeries::dense("u", d("2020-02-20"), [1.8, 1.9], SeriesKind::RtMean).unwrap();
        assert_eq!(delay_in_mobility_reduction(&sup, &m, 100.0, raw()).unwrap().delay, Delay::Unbounded);
        assert!(delay_in_mobility_reduction(&sup, &m, 0.0, raw()).is_err());
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(5..60);
            let r: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.15) { 1.5 } else { 0.7 }).collect();
            let m: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 50.0 } else { 95.0 }).collect();
            let start = d("2020-01-01");
            let rs = DailySeries::dense("u", start, r.clone(), SeriesKind::RtMean).unwrap();
            let ms = DailySeries::dense("u", start, m.clone(), SeriesKind::Mobility).unwrap();
            let got = delay_in_mobility_reduction(&rs, &ms, 100.0, raw()).unwrap().delay;
            let expected = match r.iter().position(|v| *v > 1.0) {
                None => Delay::Undefined,
                Some(s) => match (s..n).find(|&i| m[i] <= 80.0) {
                    Some(i) => Delay::Days((i - s) as i64),
                    None => Delay::Unbounded,
                },
            };
            assert_eq!(got, expected);
            let shift = Duration::days(rng.random_range(-40..40));
            let rs2 = DailySeries { start_date: start + shift, ..rs };
            let ms2 = DailySeries { start_date: start + shift, ..ms };
            assert_eq!(delay_in_mobility_reduction(&rs2, &ms2, 100.0, raw()).unwrap().delay, expected);
        }
    }

    #[test]
    fn incidence() {
        let c = CaseSeries::new("u", d("2020-05-01"), vec![100.0, 200.0, 200.0, 7.0]).unwrap();
        assert_eq!(incidence_per_100k(&c, 1e5, d("2020-05-03")).unwrap(), 500.0);
        let z = CaseSeries::new("u", d("2020-05-01"), vec![0.0; 4]).unwrap();
        assert_eq!(incidence_per_100k(&z, 1e5, d("2020-05-04")).unwrap(), 0.0);
        assert!(incidence_per_100k(&c, 1e5, d("2020-05-05")).is_err());
        assert!(incidence_per_100k(&c, 0.0, d("2020-05-02")).is_err());
    }

    #[test]
    fn pearson_closed_form() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 1.0, 4.0, 3.0, 5.0];
        let fit = pearson_fit(&xs, &ys).unwrap();
        // Sxy = 8, Sxx = 10, Syy = 10.
        assert!((fit.r - 0.8).abs() < 1e-12);
        assert!((fit.slope - 0.8).abs() < 1e-12);
        assert!((fit.intercept - 0.6).abs() < 1e-12);
        // t = 0.8 sqrt(3 / 0.36) = 2.3094; two-sided p with 3 df.
        assert!((fit.p_value - 0.104088).abs() < 1e-5, "{}", fit.p_value);
        let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - fit.intercept - fit.slope * x).powi(2)).sum();
        assert!((fit.r2 - (1.0 - sse / 10.0)).abs() < 1e-10);
        assert!(pearson_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn delay_csv_round_trip() {
        let recs = vec![
            DelayRecord {
                unit_id: "a".into(),
                first_supercritical: Some(d("2020-02-21")),
                mr_date: Some(d("2020-03-24")),
                delay: Delay::Days(32),
                incidence_100k: Some(812.25),
                total_cases: Some(81225.0),
            },
            DelayRecord {
                unit_id: "b".into(),
                first_supercritical: None,
                mr_date: None,
                delay: Delay::Undefined,
                incidence_100k: None,
                total_cases: None,
            },
        ];
        let mut buf = Vec::new();
        write_delay_csv(&recs, &mut buf).unwrap();
        assert_eq!(read_delay_csv(buf.as_slice()).unwrap(), recs);
    }
}
