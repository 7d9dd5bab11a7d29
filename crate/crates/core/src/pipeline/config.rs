use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fda::register::DEFAULT_SHIFT_CAP;
use crate::od::Level;
use crate::rt::{McmcConfig, DEFAULT_GT_RATE, DEFAULT_GT_SHAPE, DEFAULT_MASS_CUTOFF};
use crate::synth::Scenario;

/// Input and output locations. Unset entries default to fixed names under
/// `out`, which is how consecutive stages find each other.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Raw `date,origin,destination,trips` table.
    pub od: Option<PathBuf>,
    pub hierarchy: Option<PathBuf>,
    /// Per-unit covariates for the pc1 term: `unit_id,<cov1>,<cov2>,...`.
    pub covariates: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub mobility: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub rt: Option<PathBuf>,
    pub fda: Option<PathBuf>,
    pub fof: Option<PathBuf>,
    pub delay: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowsParams {
    pub threshold: u64,
    /// Level of the raw records.
    pub input_level: Level,
    /// Aggregate to this level (needs a hierarchy).
    pub level: Option<Level>,
    pub window_start: Option<NaiveDate>,
    pub window_end: Option<NaiveDate>,
}

impl Default for FlowsParams {
    fn default() -> Self {
        FlowsParams {
            threshold: 15,
            input_level: Level::Municipality,
            level: None,
            window_start: None,
            window_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtParams {
    pub shape: f64,
    pub rate: f64,
    pub mass_cutoff: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub proposal_sd: f64,
    pub r_max: f64,
    /// Half-width of the centered case smoothing; 0 estimates on raw counts.
    pub smooth_half_width: usize,
    /// Moving-average window applied to posterior means downstream.
    pub ma_window: usize,
}

impl Default for RtParams {
    fn default() -> Self {
        let m = McmcConfig::default();
        RtParams {
            shape: DEFAULT_GT_SHAPE,
            rate: DEFAULT_GT_RATE,
            mass_cutoff: DEFAULT_MASS_CUTOFF,
            iterations: m.iterations,
            burn_in: m.burn_in,
            thinning: m.thinning,
            proposal_sd: m.proposal_sd,
            r_max: m.r_max,
            smooth_half_width: 4,
            ma_window: 7,
        }
    }
}

impl RtParams {
    pub fn mcmc(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            proposal_sd: self.proposal_sd,
            r_max: self.r_max,
            rng_seed: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdaParams {
    pub n_basis: usize,
    pub order: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_lambda: usize,
    pub cap: f64,
    /// Analysis window; defaults to the overlap of the R and mobility series.
    pub window_start: Option<NaiveDate>,
    pub window_end: Option<NaiveDate>,
}

impl Default for FdaParams {
    fn default() -> Self {
        FdaParams {
            n_basis: 32,
            order: 4,
            lambda_min: 1e-2,
            lambda_max: 1e6,
            n_lambda: 33,
            cap: DEFAULT_SHIFT_CAP,
            window_start: None,
            window_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FofParams {
    pub ks: usize,
    pub kt: usize,
    pub lag: f64,
    pub level: f64,
}

impl Default for FofParams {
    fn default() -> Self {
        FofParams { ks: crate::fof::DEFAULT_K, kt: crate::fof::DEFAULT_K, lag: crate::fof::DEFAULT_LAG, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayParams {
    pub as_of: NaiveDate,
    /// Baseline window; defaults to the first 14 days of each mobility series.
    pub baseline_start: Option<NaiveDate>,
    pub baseline_end: Option<NaiveDate>,
    pub mobility_ma7: bool,
    /// Ignore R estimates before this date.
    pub start: Option<NaiveDate>,
}

impl Default for DelayParams {
    fn default() -> Self {
        DelayParams {
            as_of: NaiveDate::from_ymd_opt(2020, 5, 15).unwrap(),
            baseline_start: None,
            baseline_end: None,
            mobility_ma7: true,
            start: None,
        }
    }
}

/// The whole pipeline configuration: one TOML file with a section per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Drives both the MCMC streams and the simulator.
    pub seed: u64,
    pub out: PathBuf,
    pub paths: Paths,
    pub flows: FlowsParams,
    pub rt: RtParams,
    pub fda: FdaParams,
    pub fof: FofParams,
    pub delay: DelayParams,
    pub simulate: Scenario,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            out: PathBuf::from("out"),
            paths: Paths::default(),
            flows: FlowsParams::default(),
            rt: RtParams::default(),
            fda: FdaParams::default(),
            fof: FofParams::default(),
            delay: DelayParams::default(),
            simulate: crate::synth::epi_mob_scenario(20, 7),
        }
    }
}

fn or_default(p: &Option<PathBuf>, root: &Path, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| root.join(name))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        super::require(path)?;
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn cases_path(&self) -> PathBuf {
        or_default(&self.paths.cases, &self.out, "cases")
    }
    pub fn mobility_path(&self) -> PathBuf {
        or_default(&self.paths.mobility, &self.out, "mobility")
    }
    pub fn population_path(&self) -> PathBuf {
        or_default(&self.paths.population, &self.out, "population.csv")
    }
    pub fn rt_path(&self) -> PathBuf {
        or_default(&self.paths.rt, &self.out, "rt")
    }
    pub fn fda_path(&self) -> PathBuf {
        or_default(&self.paths.fda, &self.out, "fda")
    }
    pub fn fof_path(&self) -> PathBuf {
        or_default(&self.paths.fof, &self.out, "fof")
    }
    pub fn delay_path(&self) -> PathBuf {
        or_default(&self.paths.delay, &self.out, "delay")
    }
    pub fn report_path(&self) -> PathBuf {
        or_default(&self.paths.report, &self.out, "report")
    }

    /// Scenario with the pipeline seed applied.
    pub fn scenario(&self) -> Scenario {
        Scenario { rng_seed: self.seed, ..self.simulate.clone() }
    }

    /// Range checks for every stage; violations map to exit code 3.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let r = &self.rt;
        if !(r.shape > 0.0 && r.rate > 0.0) {
            return bad("rt.shape and rt.rate must be > 0");
        }
        if !(r.mass_cutoff > 0.0 && r.mass_cutoff < 1.0) {
            return bad("rt.mass_cutoff must be in (0, 1)");
        }
        r.mcmc(self.seed).validate()?;
        if r.ma_window == 0 || r.ma_window % 2 == 0 {
            return bad("rt.ma_window must be odd and >= 1");
        }
        let f = &self.fda;
        if f.order < 2 || f.n_basis < f.order {
            return bad("fda.n_basis must be >= fda.order >= 2");
        }
        if !(f.lambda_min > 0.0 && f.lambda_max >= f.lambda_min) || f.n_lambda == 0 {
            return bad("fda lambda grid must satisfy 0 < lambda_min <= lambda_max, n_lambda >= 1");
        }
        if !(f.cap >= 0.0) {
            return bad("fda.cap must be >= 0");
        }
        let o = &self.fof;
        if o.ks < 4 || o.kt < 4 {
            return bad("fof.ks and fof.kt must be >= 4 for cubic splines");
        }
        if !(o.lag >= 0.0) {
            return bad("fof.lag must be >= 0");
        }
        if !(o.level > 0.0 && o.level < 1.0) {
            return bad("fof.level must be in (0, 1)");
        }
        if let (Some(a), Some(b)) = (f.window_start, f.window_end) {
            if b <= a {
                return bad("fda window end must follow its start");
            }
        }
        Ok(())
    }
}
