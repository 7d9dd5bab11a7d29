//! Synthetic scenarios with known ground truth: renewal epidemics, epi-mob
//! mobility, known-β regression data and shifted curve sets.
//!
//! Day 0 is `start_date`. Simulations run over `[-burn_in_days, days)` so the
//! estimator has a full generation-time history by the start of the window.

use chrono::{Duration, NaiveDate};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fda::curve::{integer_days, GridCurve, SmoothedCurve};
use crate::fda::quadrature::piecewise_rule;
use crate::fda::BSplineBasis;
use crate::fof::TensorSurface;
use crate::rt::{discretize_generation_time, CaseSeries, GenerationTimeDist, DEFAULT_MASS_CUTOFF};
use crate::series::{DailySeries, SeriesKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RTrajectory {
    /// `values[k]` holds from `change_days[k-1]` (inclusive) onwards.
    Step { values: Vec<f64>, change_days: Vec<f64> },
    /// Linear interpolation through `(day, R)` points, constant outside.
    Linear { points: Vec<(f64, f64)> },
    /// `R(t)` is an affine image of the unit's noise-free mobility at `t - lag`,
    /// mapping the pre level to `r_pre` and the post level to `r_post`.
    EpiMob { r_pre: f64, r_post: f64, lag: f64 },
}

impl Default for RTrajectory {
    fn default() -> Self {
        RTrajectory::EpiMob { r_pre: 1.6, r_post: 0.7, lag: 13.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityRegime {
    /// Mean pre-lockdown trips per resident per day.
    pub trips_per_capita: f64,
    pub post_fraction: f64,
    pub switch_day: f64,
    /// Half-life of the excess over the post level once the switch is under way.
    pub half_life: f64,
    /// Relative height of the pre-lockdown mobility bump.
    pub bump: f64,
    pub bump_width: f64,
    /// Start of a partial restart, if any: mobility rises logistically from
    /// `post_fraction` to `reopen_fraction` around this day.
    pub reopen_day: Option<f64>,
    pub reopen_fraction: f64,
    pub reopen_half_life: f64,
    pub weekly_amplitude: f64,
    /// Standard deviation of multiplicative log-normal noise.
    pub noise_sd: f64,
    /// Unit switch days are uniform in `switch_day ± switch_jitter`.
    pub switch_jitter: f64,
}

impl Default for MobilityRegime {
    fn default() -> Self {
        MobilityRegime {
            trips_per_capita: 0.3,
            post_fraction: 0.4,
            switch_day: 38.0,
            half_life: 1.1,
            bump: 0.15,
            bump_width: 10.0,
            reopen_day: None,
            reopen_fraction: 0.7,
            reopen_half_life: 7.0,
            weekly_amplitude: 0.0,
            noise_sd: 0.0,
            switch_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub start_date: NaiveDate,
    pub days: usize,
    pub burn_in_days: usize,
    pub n_units: usize,
    pub seed_cases: f64,
    pub seed_days: usize,
    /// Unit seeding starts on a uniform day in `0..=seed_jitter` of the simulation.
    pub seed_jitter: usize,
    pub shape: f64,
    pub rate: f64,
    pub r: RTrajectory,
    pub mobility: MobilityRegime,
    /// Median unit population; units vary log-normally around it.
    pub population: f64,
    pub population_spread: f64,
    /// Replace Poisson draws by their means.
    pub deterministic: bool,
    pub explosive_cap: f64,
    pub rng_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            start_date: NaiveDate::from_ymd_opt(2020, 2, 1).unwrap(),
            days: 214,
            burn_in_days: 35,
            n_units: 20,
            seed_cases: 10.0,
            seed_days: 10,
            seed_jitter: 0,
            shape: crate::rt::DEFAULT_GT_SHAPE,
            rate: crate::rt::DEFAULT_GT_RATE,
            r: RTrajectory::default(),
            mobility: MobilityRegime::default(),
            population: 3e6,
            population_spread: 0.5,
            deterministic: false,
            explosive_cap: 1e7,
            rng_seed: 7,
        }
    }
}

/// The default ensemble: 20 units, jittered lockdown dates, mild noise.
pub fn epi_mob_scenario(n_units: usize, rng_seed: u64) -> Scenario {
    Scenario {
        n_units,
        rng_seed,
        mobility: MobilityRegime {
            weekly_amplitude: 0.05,
            noise_sd: 0.03,
            switch_jitter: 4.0,
            reopen_day: Some(93.0),
            ..MobilityRegime::default()
        },
        seed_jitter: 14,
        ..Scenario::default()
    }
}

/// Provincial mode.
pub const PROVINCE_UNITS: usize = 120;

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let m = &self.mobility;
        if !(m.post_fraction > 0.0 && m.post_fraction <= 1.0) {
            return bad(format!("post fraction must be in (0, 1], got {}", m.post_fraction));
        }
        if m.reopen_day.is_some() && !(m.reopen_half_life > 0.0 && m.reopen_fraction > 0.0) {
            return bad("reopening needs a positive half-life and level".into());
        }
        if !(m.half_life > 0.0) {
            return bad(format!("transition half-life must be > 0, got {}", m.half_life));
        }
        if self.days == 0 || self.n_units == 0 {
            return bad("days and n_units must be positive".into());
        }
        let span = -(self.burn_in_days as f64)..self.days as f64;
        if !span.contains(&(m.switch_day - m.switch_jitter)) || !span.contains(&(m.switch_day + m.switch_jitter)) {
            return bad(format!("switch day {} ± {} outside the domain", m.switch_day, m.switch_jitter));
        }
        if let RTrajectory::Step { change_days, .. } = &self.r {
            if let Some(d) = change_days.iter().find(|d| !span.contains(d)) {
                return bad(format!("R change day {d} outside the domain"));
            }
        }
        if !(self.seed_cases > 0.0) || self.seed_days == 0 {
            return bad("need seed cases > 0 on at least one early day".into());
        }
        if self.seed_jitter + self.seed_days > self.total_days() {
            return bad("seeding window runs past the simulated span".into());
        }
        if !(self.trips_ok() && self.population > 0.0 && self.explosive_cap > 0.0) {
            return bad("trips per capita, population and explosive cap must be positive".into());
        }
        match &self.r {
            RTrajectory::Step { values, change_days } if values.len() != change_days.len() + 1 => {
                bad("step trajectory needs one more value than change days".into())
            }
            RTrajectory::Step { values, .. } if values.iter().any(|v| !(*v >= 0.0)) => bad("R must be >= 0".into()),
            RTrajectory::Linear { points } if points.is_empty() => bad("linear trajectory needs points".into()),
            _ => Ok(()),
        }
    }

    fn trips_ok(&self) -> bool {
        self.mobility.trips_per_capita > 0.0
    }

    pub fn total_days(&self) -> usize {
        self.burn_in_days + self.days
    }

    /// Calendar date of the first simulated day.
    pub fn sim_start(&self) -> NaiveDate {
        self.start_date - Duration::days(self.burn_in_days as i64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Duration::days(self.days as i64 - 1)
    }

    /// Day index (relative to `start_date`) of every simulated day.
    fn day_axis(&self) -> impl Iterator<Item = f64> {
        let b = self.burn_in_days as i64;
        (-b..self.days as i64).map(|d| d as f64)
    }

    pub fn generation_time(&self) -> Result<GenerationTimeDist> {
        discretize_generation_time(self.shape, self.rate, DEFAULT_MASS_CUTOFF)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitParams {
    pub unit_id: String,
    pub index: usize,
    pub population: f64,
    pub pre_level: f64,
    pub switch_day: f64,
    /// Simulation day on which seeding starts.
    pub seed_day: usize,
}

fn unit_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-unit parameters drawn from stream 0 of the scenario seed.
pub fn unit_params(s: &Scenario) -> Vec<UnitParams> {
    let mut rng = unit_rng(s.rng_seed, 0);
    let width = s.n_units.to_string().len().max(2);
    (0..s.n_units)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            let population = (s.population * (s.population_spread * z).exp()).round().max(1.0);
            let jitter = if s.mobility.switch_jitter > 0.0 {
                rng.random_range(-s.mobility.switch_jitter..=s.mobility.switch_jitter)
            } else {
                0.0
            };
            let seed_day = if s.seed_jitter > 0 { rng.random_range(0..=s.seed_jitter) } else { 0 };
            UnitParams {
                unit_id: format!("unit{:0width$}", i + 1),
                index: i,
                population,
                pre_level: population * s.mobility.trips_per_capita,
                switch_day: s.mobility.switch_day + jitter,
                seed_day,
            }
        })
        .collect()
}

/// Noise-free mobility relative to the pre level: a pre-lockdown bump times a
/// logistic fall to `post_fraction`, plus an optional logistic restart.
pub fn mobility_shape(m: &MobilityRegime, switch_day: f64, t: f64) -> f64 {
    let tau = m.half_life / std::f64::consts::LN_2;
    let fall = 1.0 / (1.0 + ((t - switch_day) / tau).exp());
    let bump = 1.0 + m.bump * (-((t - switch_day) / m.bump_width).powi(2)).exp();
    let reopen = match m.reopen_day {
        Some(d) => {
            let tau = m.reopen_half_life / std::f64::consts::LN_2;
            (m.reopen_fraction - m.post_fraction) / (1.0 + (-(t - d) / tau).exp())
        }
        None => 0.0,
    };
    bump * (m.post_fraction + (1.0 - m.post_fraction) * fall) + reopen
}

/// Daily trips for one unit over the simulated span.
pub fn simulate_mobility(s: &Scenario, unit: &UnitParams) -> Result<DailySeries> {
    s.validate()?;
    let m = &s.mobility;
    let mut rng = unit_rng(s.rng_seed, 2 * unit.index as u64 + 1);
    let noise = Normal::new(0.0, m.noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let values: Vec<f64> = s
        .day_axis()
        .map(|t| {
            let weekday = t.rem_euclid(7.0);
            let weekly = 1.0 + m.weekly_amplitude * (2.0 * std::f64::consts::PI * weekday / 7.0).cos();
            let eps = if m.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            unit.pre_level * mobility_shape(m, unit.switch_day, t) * weekly * eps.exp()
        })
        .collect();
    DailySeries::dense(unit.unit_id.clone(), s.sim_start(), values, SeriesKind::Mobility)
}

/// Prescribed `R(t)` over the simulated span.
pub fn r_trajectory(s: &Scenario, unit: &UnitParams) -> Vec<f64> {
    s.day_axis()
        .map(|t| match &s.r {
            RTrajectory::Step { values, change_days } => values[change_days.iter().filter(|d| t >= **d).count()],
            RTrajectory::Linear { points } => interpolate(points, t),
            RTrajectory::EpiMob { r_pre, r_post, lag } => {
                let p = s.mobility.post_fraction;
                let x = mobility_shape(&s.mobility, unit.switch_day, t - lag);
                let scale = if p < 1.0 { (x - p) / (1.0 - p) } else { 1.0 };
                (r_post + (r_pre - r_post) * scale).max(0.0)
            }
        })
        .collect()
}

fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    let k = points.windows(2).position(|w| t < w[1].0).unwrap();
    let (a, b) = (points[k], points[k + 1]);
    a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
}

/// Runs `C(t) ~ Poisson(R(t) Λ(t))` forward from `seed_days` constant seed
/// days; `deterministic` uses the mean instead of a draw.
pub fn simulate_cases<G: Rng>(
    r: &[f64],
    seed_cases: f64,
    seed_days: usize,
    gt: &GenerationTimeDist,
    deterministic: bool,
    cap: f64,
    rng: &mut G,
) -> Result<Vec<f64>> {
    let mut c = vec![0.0; r.len()];
    for t in 0..r.len() {
        if t < seed_days {
            c[t] = seed_cases;
            continue;
        }
        let lambda: f64 = (1..=gt.horizon().min(t)).map(|s| gt.phi(s) * c[t - s]).sum();
        let mean = r[t] * lambda;
        c[t] = if deterministic || mean == 0.0 {
            mean
        } else {
            Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng)
        };
        if c[t] > cap {
            return Err(Error::Explosive { day: t, cap });
        }
    }
    Ok(c)
}

pub fn simulate_renewal(s: &Scenario, unit: &UnitParams) -> Result<CaseSeries> {
    s.validate()?;
    let gt = s.generation_time()?;
    let r = r_trajectory(s, unit);
    let mut rng = unit_rng(s.rng_seed, 2 * unit.index as u64 + 2);
    let mut counts = vec![0.0; unit.seed_day];
    counts.extend(simulate_cases(&r[unit.seed_day..], s.seed_cases, s.seed_days, &gt, s.deterministic, s.explosive_cap, &mut rng)?);
    CaseSeries::new(unit.unit_id.clone(), s.sim_start(), counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUnit {
    pub params: UnitParams,
    pub mobility: DailySeries,
    pub cases: CaseSeries,
    pub r_true: DailySeries,
}

/// Every unit of the scenario, simulated in parallel on independent streams.
pub fn generate_ensemble(s: &Scenario) -> Result<Vec<SyntheticUnit>> {
    s.validate()?;
    unit_params(s)
        .into_par_iter()
        .map(|p| {
            let mobility = simulate_mobility(s, &p)?;
            let cases = simulate_renewal(s, &p)?;
            let r_true = DailySeries::dense(p.unit_id.clone(), s.sim_start(), r_trajectory(s, &p), SeriesKind::RtMean)?;
            Ok(SyntheticUnit { params: p, mobility, cases, r_true })
        })
        .collect()
}

/// A coefficient surface known in closed form or on a tensor basis.
pub enum Beta0<'a> {
    Tensor(&'a TensorSurface),
    Fn(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
}

/// `exp(-(t - s - lag)² / denom)`.
pub fn lag_ridge(lag: f64, denom: f64) -> impl Fn(f64, f64) -> f64 + Sync {
    move |s, t| (-(t - s - lag).powi(2) / denom).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FofDataset {
    pub xs: Vec<SmoothedCurve>,
    /// Responses on the daily grid of the basis domain.
    pub ys: Vec<GridCurve>,
    /// The same responses without noise.
    pub signal: Vec<GridCurve>,
}

/// `x_i` with standard-normal coefficients on `basis`;
/// `y_i(t) = ∫ β₀(s,t) x_i(s) ds + ε_i(t)` with i.i.d. `N(0, noise_sd²)` daily noise.
pub fn make_fof_dataset(n_units: usize, basis: &BSplineBasis, beta0: &Beta0, noise_sd: f64, seed: u64) -> Result<FofDataset> {
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = basis.domain();
    let grid = integer_days(domain);
    let xs: Vec<SmoothedCurve> = (0..n_units)
        .map(|i| {
            let c = (0..basis.n_basis()).map(|_| rng.sample(StandardNormal)).collect();
            SmoothedCurve::new(format!("x{i:03}"), basis.clone(), c)
        })
        .collect::<Result<_>>()?;
    let signal: Vec<Vec<f64>> = match beta0 {
        Beta0::Tensor(surface) => xs
            .iter()
            .map(|x| {
                let z = DVector::from_vec(surface.basis_s.integrate_against(
                    |s| crate::fda::curve::Curve::eval(x, s),
                    &x.basis.breakpoints(),
                    x.basis.degree(),
                    domain.0,
                    domain.1,
                ));
                let row = z.transpose() * &surface.coefs;
                grid.iter().map(|t| row.dot(&DVector::from_vec(surface.basis_t.eval(*t)).transpose())).collect()
            })
            .collect(),
        Beta0::Fn(f) => {
            let mut breaks = basis.breakpoints();
            breaks.extend(grid.iter().copied());
            let rule = piecewise_rule(&breaks, domain.0, domain.1, 8);
            xs.par_iter()
                .map(|x| {
                    let xv: Vec<f64> = rule.iter().map(|(s, w)| w * crate::fda::curve::Curve::eval(x, *s)).collect();
                    grid.iter()
                        .map(|t| rule.iter().zip(&xv).map(|((s, _), wx)| f(*s, *t) * wx).sum())
                        .collect()
                })
                .collect()
        }
    };
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut ys = Vec::with_capacity(n_units);
    let mut clean = Vec::with_capacity(n_units);
    for (x, sig) in xs.iter().zip(signal) {
        let id = x.unit_id.replace('x', "y");
        let noisy: Vec<f64> = sig
            .iter()
            .map(|v| v + if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 })
            .collect();
        ys.push(GridCurve::new(id.clone(), grid[0], 1.0, noisy)?);
        clean.push(GridCurve::new(id, grid[0], 1.0, sig)?);
    }
    Ok(FofDataset { xs, ys, signal: clean })
}

/// Copies of `template` translated by each shift. Noise perturbs the spline
/// coefficients by `N(0, (noise · max|c|)²)` before the shift.
pub fn make_shifted_set(template: &SmoothedCurve, shifts: &[f64], noise: f64, seed: u64) -> Vec<SmoothedCurve> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = noise * template.coefs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    shifts
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut c = template.clone();
            c.unit_id = format!("{}_{i}", template.unit_id);
            if scale > 0.0 {
                for v in c.coefs.iter_mut() {
                    *v += scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
            c.shifted(d)
        })
        .collect()
}
