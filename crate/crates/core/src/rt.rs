//! Net reproduction number from a daily case series.
//!
//! Cases follow the renewal model `C(t) ~ Poisson(R_t · Λ(t))` with infection
//! pressure `Λ(t) = Σ_s φ(s) C(t-s)`. Given the observed history the
//! likelihood factorizes over days, so each day gets its own random-walk
//! Metropolis–Hastings chain.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::series::{centered_mean, column, parse_date, DailySeries, SeriesKind};

/// Shape of the serial-interval gamma used as the generation-time proxy.
pub const DEFAULT_GT_SHAPE: f64 = 1.87;
/// Rate (1/day) of the serial-interval gamma.
pub const DEFAULT_GT_RATE: f64 = 0.28;
pub const DEFAULT_MASS_CUTOFF: f64 = 0.999;

/// Discretized generation-time distribution `φ(1..=S)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTimeDist {
    pub shape: f64,
    pub rate: f64,
    /// `pmf[s - 1] = φ(s)`.
    pub pmf: Vec<f64>,
}

impl GenerationTimeDist {
    /// Builds a distribution from an explicit pmf over lags `1..=pmf.len()`.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() || pmf.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter("pmf must be non-empty and non-negative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("pmf has zero mass".into()));
        }
        let pmf: Vec<f64> = pmf.into_iter().map(|p| p / total).collect();
        let mean = pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum::<f64>();
        let var = pmf
            .iter()
            .enumerate()
            .map(|(i, p)| ((i + 1) as f64 - mean).powi(2) * p)
            .sum::<f64>();
        // Moment-matched gamma, informational only.
        let (shape, rate) = if var > 0.0 { (mean * mean / var, mean / var) } else { (f64::NAN, f64::NAN) };
        Ok(GenerationTimeDist { shape, rate, pmf })
    }

    pub fn horizon(&self) -> usize {
        self.pmf.len()
    }

    pub fn phi(&self, lag: usize) -> f64 {
        if lag == 0 || lag > self.pmf.len() {
            0.0
        } else {
            self.pmf[lag - 1]
        }
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }
}

impl Default for GenerationTimeDist {
    fn default() -> Self {
        discretize_generation_time(DEFAULT_GT_SHAPE, DEFAULT_GT_RATE, DEFAULT_MASS_CUTOFF)
            .expect("default gamma parameters are valid")
    }
}

/// Discretizes a gamma(shape, rate) generation time on integer lags.
///
/// Lag `s` receives the mass of `[s - 1/2, s + 1/2)` (clipped at 0); the
/// horizon `S` is the first lag whose cumulative mass reaches `mass_cutoff`,
/// and the pmf is renormalized over `1..=S`.
pub fn discretize_generation_time(
    shape: f64,
    rate: f64,
    mass_cutoff: f64,
) -> Result<GenerationTimeDist> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma shape and rate must be positive, got {shape}, {rate}"
        )));
    }
    if !(mass_cutoff > 0.0 && mass_cutoff < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mass cutoff must lie in (0, 1), got {mass_cutoff}"
        )));
    }
    let gamma = Gamma::new(shape, rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut pmf = Vec::new();
    let mut s = 1usize;
    loop {
        let hi = s as f64 + 0.5;
        let lo = (s as f64 - 0.5).max(0.0);
        pmf.push(gamma.cdf(hi) - gamma.cdf(lo));
        if gamma.cdf(hi) >= mass_cutoff || s >= 10_000 {
            break;
        }
        s += 1;
    }
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    Ok(GenerationTimeDist { shape, rate, pmf })
}

/// Daily case counts; smoothed series hold non-integer counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSeries {
    pub unit_id: String,
    pub start_date: NaiveDate,
    pub counts: Vec<f64>,
    pub raw: bool,
}

impl CaseSeries {
    pub fn new(unit_id: impl Into<String>, start_date: NaiveDate, counts: Vec<f64>) -> Result<Self> {
        if let Some(c) = counts.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("case counts must be finite and >= 0, got {c}")));
        }
        Ok(CaseSeries {
            unit_id: unit_id.into(),
            start_date,
            counts,
            raw: true,
        })
    }

    pub fn from_series(series: &DailySeries) -> Result<Self> {
        Self::new(series.unit_id.clone(), series.start_date, series.require_dense()?)
    }

    pub fn to_series(&self) -> DailySeries {
        DailySeries {
            unit_id: self.unit_id.clone(),
            start_date: self.start_date,
            values: self.counts.iter().copied().map(Some).collect(),
            kind: SeriesKind::Cases,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }
}

/// Centered moving average of the raw counts over `[g - half_width, g + half_width]`,
/// truncated at the series edges.
pub fn smooth_cases(raw: &CaseSeries, half_width: usize) -> Result<CaseSeries> {
    if raw.is_empty() {
        return Err(Error::InvalidParameter("cannot smooth an empty case series".into()));
    }
    let values: Vec<Option<f64>> = raw.counts.iter().copied().map(Some).collect();
    Ok(CaseSeries {
        counts: centered_mean(&values, half_width).into_iter().map(Option::unwrap).collect(),
        raw: false,
        ..raw.clone()
    })
}

/// `Λ(t) = Σ_{s=1..S} φ(s) C(t-s)`; lags before the series start contribute 0.
pub fn infection_pressure(cases: &CaseSeries, gt: &GenerationTimeDist, t: usize) -> f64 {
    (1..=gt.horizon().min(t))
        .map(|s| gt.phi(s) * cases.counts[t - s])
        .sum()
}

fn pressures(cases: &CaseSeries, gt: &GenerationTimeDist) -> Vec<f64> {
    (0..cases.len()).map(|t| infection_pressure(cases, gt, t)).collect()
}

/// Poisson log-pmf extended to real counts through `ln Γ(x + 1)`.
pub fn poisson_ln_pmf(count: f64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if count == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    count * mean.ln() - mean - ln_gamma(count + 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    /// Days with cases but no infection pressure; the renewal model cannot
    /// explain them (imported or seed cases) so they are left out.
    pub excluded_days: Vec<usize>,
}

/// Renewal-equation Poisson log-likelihood summed over every day with
/// `Λ(t) > 0`.
pub fn log_likelihood(
    cases: &CaseSeries,
    gt: &GenerationTimeDist,
    r: &[f64],
) -> Result<LogLikelihood> {
    if r.len() != cases.len() {
        return Err(Error::InvalidParameter(format!(
            "need one R value per day: {} cases, {} R values",
            cases.len(),
            r.len()
        )));
    }
    let mut value = 0.0;
    let mut excluded_days = Vec::new();
    for (t, lambda) in pressures(cases, gt).into_iter().enumerate() {
        let c = cases.counts[t];
        if lambda > 0.0 {
            if !(r[t] > 0.0) {
                return Err(Error::InvalidParameter(format!("R must be positive, got {} on day {t}", r[t])));
            }
            value += poisson_ln_pmf(c, r[t] * lambda);
        } else if c > 0.0 {
            excluded_days.push(t);
        }
    }
    Ok(LogLikelihood { value, excluded_days })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Standard deviation of the Gaussian step on `ln R`.
    pub proposal_sd: f64,
    /// Upper end of the flat prior on `(0, r_max]`.
    pub r_max: f64,
    pub rng_seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 12_000,
            burn_in: 2_000,
            thinning: 5,
            proposal_sd: 0.3,
            r_max: 12.0,
            rng_seed: 7,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidParameter("iterations must exceed burn_in".into()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be >= 1".into()));
        }
        if !(self.proposal_sd > 0.0) || !(self.r_max > 0.0) {
            return Err(Error::InvalidParameter("proposal_sd and r_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q97_5: f64,
}

impl Summary {
    pub fn from_samples(samples: &[f64]) -> Summary {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let sd = if samples.len() > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| quantile_sorted(&sorted, p);
        Summary {
            mean,
            sd,
            q2_5: q(0.025),
            q25: q(0.25),
            q50: q(0.5),
            q75: q(0.75),
            q97_5: q(0.975),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPosterior {
    pub samples: Vec<f64>,
    pub summary: Summary,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtPosterior {
    pub unit_id: String,
    pub start_date: NaiveDate,
    /// `None` where `Λ(t) = 0` and `R_t` is undefined.
    pub days: Vec<Option<DayPosterior>>,
    /// Days with cases but no infection pressure.
    pub excluded_days: Vec<usize>,
    pub warnings: Vec<String>,
}

impl RtPosterior {
    pub fn means(&self) -> Vec<Option<f64>> {
        self.days.iter().map(|d| d.as_ref().map(|d| d.summary.mean)).collect()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "mean", "sd", "q2.5", "q25", "q50", "q75", "q97.5", "acceptance"])?;
        for (i, day) in self.days.iter().enumerate() {
            let mut row = vec![self.date_at(i).to_string()];
            match day {
                Some(d) => {
                    let s = &d.summary;
                    row.extend(
                        [s.mean, s.sd, s.q2_5, s.q25, s.q50, s.q75, s.q97_5, d.acceptance]
                            .map(|x| x.to_string()),
                    );
                }
                None => row.extend(std::iter::repeat_n(String::new(), 8)),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads the posterior-mean column of an R_t CSV back into a series.
pub fn read_rt_means<R: Read>(reader: R, unit_id: &str) -> Result<DailySeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_c = column(&headers, "date")?;
    let mean_c = column(&headers, "mean")?;
    let mut start = None;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let date = parse_date(rec.get(date_c).unwrap_or(""), line)?;
        start.get_or_insert(date);
        let raw = rec.get(mean_c).unwrap_or("");
        values.push(if raw.is_empty() {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|e| Error::Parse { line, message: e.to_string() })?)
        });
    }
    let start = start.ok_or(Error::Parse { line: 1, message: "empty R_t file".into() })?;
    DailySeries::new(unit_id, start, values, SeriesKind::RtMean)
}

/// Samples the per-day posterior of `R_t` under a flat prior on `(0, r_max]`.
///
/// Each day's chain draws from its own RNG stream derived from
/// `(rng_seed, t)`, so the result does not depend on thread scheduling.
pub fn estimate_rt(
    cases: &CaseSeries,
    gt: &GenerationTimeDist,
    cfg: &McmcConfig,
) -> Result<RtPosterior> {
    cfg.validate()?;
    if cases.len() <= gt.horizon() {
        return Err(Error::InvalidParameter(format!(
            "case series ({} days) must be longer than the generation-time horizon ({} days)",
            cases.len(),
            gt.horizon()
        )));
    }
    let lambdas = pressures(cases, gt);
    let days: Vec<Option<DayPosterior>> = lambdas
        .par_iter()
        .enumerate()
        .map(|(t, &lambda)| {
            (lambda > 0.0).then(|| sample_day(cases.counts[t], lambda, t as u64, cfg))
        })
        .collect();

    let excluded_days = (0..cases.len())
        .filter(|&t| lambdas[t] <= 0.0 && cases.counts[t] > 0.0)
        .collect();
    let warnings = days
        .iter()
        .enumerate()
        .filter_map(|(t, d)| {
            let a = d.as_ref()?.acceptance;
            (!(0.1..=0.9).contains(&a)).then(|| {
                format!("{} {}: acceptance rate {a:.3} outside [0.1, 0.9]", cases.unit_id, cases.date_at(t))
            })
        })
        .collect();
    Ok(RtPosterior {
        unit_id: cases.unit_id.clone(),
        start_date: cases.start_date,
        days,
        excluded_days,
        warnings,
    })
}

fn sample_day(count: f64, lambda: f64, day: u64, cfg: &McmcConfig) -> DayPosterior {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(day);
    let ln_rmax = cfg.r_max.ln();
    // Target density of θ = ln R: likelihood × flat prior × Jacobian e^θ.
    let ln_target = |theta: f64| {
        if theta > ln_rmax {
            f64::NEG_INFINITY
        } else {
            count * theta - theta.exp() * lambda + theta
        }
    };
    let start = ((count + 1.0) / lambda).clamp(1e-6, 0.999 * cfg.r_max);
    let mut theta = start.ln();
    let mut current = ln_target(theta);
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity((cfg.iterations - cfg.burn_in) / cfg.thinning + 1);
    for it in 0..cfg.iterations {
        let step: f64 = rng.sample(StandardNormal);
        let proposal = theta + cfg.proposal_sd * step;
        let cand = ln_target(proposal);
        let u: f64 = rng.random();
        if u.ln() < cand - current {
            theta = proposal;
            current = cand;
            accepted += 1;
        }
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thinning == 0 {
            samples.push(theta.exp());
        }
    }
    DayPosterior {
        summary: Summary::from_samples(&samples),
        samples,
        acceptance: accepted as f64 / cfg.iterations as f64,
    }
}

/// Centered moving average of the posterior means; undefined days are skipped
/// inside each window.
pub fn rt_mean_series(post: &RtPosterior, ma_window: usize) -> Result<DailySeries> {
    if ma_window == 0 || ma_window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "moving-average window must be odd and >= 1, got {ma_window}"
        )));
    }
    DailySeries::new(
        post.unit_id.clone(),
        post.start_date,
        centered_mean(&post.means(), ma_window / 2),
        SeriesKind::RtMean,
    )
}
