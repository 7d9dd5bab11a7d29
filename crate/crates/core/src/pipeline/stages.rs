use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{list_units, require, Outputs, PipelineConfig, Stage, StageReport};
use crate::analysis::{
    cumulative_cases, delay_in_mobility_reduction, pearson_fit, write_delay_csv, DelayOptions, DelayRecord,
    PearsonFit,
};
use crate::error::{Error, Result};
use crate::fda::register::register_all;
use crate::fda::smooth::{gcv_select, log_grid, normalize_by_max, penalized_smooth};
use crate::fda::{first_fcc, register_to_fcc, BSplineBasis, FccResult, SmoothedCurve};
use crate::fof::{compute_pc1, confidence_band, fit_fof, fit_fof_with_scalar, lag_slice, FofConfig, PartialR2};
use crate::od::{aggregate, ingest_flows, mobility_series, IngestOptions, SpatialHierarchy};
use crate::rt::{discretize_generation_time, estimate_rt, read_rt_means, smooth_cases, CaseSeries};
use crate::series::{DailySeries, SeriesKind};
use crate::synth::generate_ensemble;

fn open(path: &Path) -> Result<BufReader<File>> {
    require(path)?;
    Ok(BufReader::new(File::open(path)?))
}

fn csv_bytes<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub(crate) fn read_series(dir: &Path, unit: &str, kind: SeriesKind) -> Result<DailySeries> {
    DailySeries::read_csv(open(&dir.join(format!("{unit}.csv")))?, unit, kind)
}

pub(crate) fn read_rt_ma(dir: &Path, unit: &str, window: usize) -> Result<DailySeries> {
    read_rt_means(open(&dir.join(format!("{unit}.csv")))?, unit)?.moving_average(window)
}

/// The series on `start..=end`; days it does not cover are missing.
pub(crate) fn slice(s: &DailySeries, start: NaiveDate, end: NaiveDate) -> DailySeries {
    let n = (end - start).num_days() + 1;
    let values = (0..n.max(0))
        .map(|i| s.get(start + Duration::days(i)))
        .collect();
    DailySeries { start_date: start, values, ..s.clone() }
}

pub(crate) fn read_population(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let unit_c = headers
        .iter()
        .position(|h| h == "unit_id" || h == "unit")
        .ok_or(Error::Parse { line: 1, message: "missing `unit_id` column".into() })?;
    let pop_c = crate::series::column(&headers, "population")?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(pop_c).unwrap_or("");
        let pop: f64 = raw
            .parse()
            .map_err(|_| Error::Parse { line: i + 2, message: format!("bad population {raw:?}") })?;
        out.insert(rec.get(unit_c).unwrap_or("").to_string(), pop);
    }
    Ok(out)
}

fn load_curves(dir: &Path) -> Result<Vec<SmoothedCurve>> {
    require(dir)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths.iter().map(|p| Ok(serde_json::from_reader(open(p)?)?)).collect()
}

fn put_curve(out: &mut Outputs, dir: &str, c: &SmoothedCurve) -> Result<()> {
    out.put_json(format!("{dir}/{}.json", c.unit_id), c)?;
    let bytes = csv_bytes(|b| c.write_daily_csv(b))?;
    out.put(format!("{dir}/{}.csv", c.unit_id), &bytes)
}

fn intersect(a: Vec<String>, b: &[String]) -> Vec<String> {
    a.into_iter().filter(|u| b.contains(u)).collect()
}

/// Ingests the raw OD table, optionally aggregates it, and writes one
/// mobility series per unit.
pub fn flows_ingest(cfg: &PipelineConfig) -> Result<StageReport> {
    let od = cfg.paths.od.clone().ok_or_else(|| Error::MissingArtifact("paths.od".into()))?;
    let hierarchy = match &cfg.paths.hierarchy {
        Some(p) => Some(SpatialHierarchy::read_csv(open(p)?)?),
        None => None,
    };
    let p = &cfg.flows;
    let window = match (p.window_start, p.window_end) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(Error::InvalidParameter("flows window needs both start and end".into())),
    };
    let opts = IngestOptions {
        threshold: p.threshold,
        level: p.input_level,
        window,
        hierarchy: hierarchy.as_ref(),
        provenance: od.to_string_lossy().into_owned(),
    };
    let mut table = ingest_flows(open(&od)?, &opts)?;
    if let Some(target) = p.level.filter(|l| *l != p.input_level) {
        let h = hierarchy
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("aggregation needs paths.hierarchy".into()))?;
        table = aggregate(&table, h, target)?;
    }
    let mut out = Outputs::new(cfg.mobility_path());
    out.put("table/flows.csv", &csv_bytes(|b| table.write_csv(b))?)?;
    for unit in table.units() {
        let extract = mobility_series(&table, unit)?;
        out.warnings.extend(extract.notes);
        out.put(format!("{unit}.csv"), &csv_bytes(|b| extract.series.write_csv(b))?)?;
    }
    #[derive(Serialize)]
    struct Params<'a> {
        flows: &'a super::FlowsParams,
        suppressed_records: usize,
        records: usize,
    }
    let params = Params { flows: p, suppressed_records: table.suppressed_records, records: table.len() };
    let mut inputs: Vec<&Path> = vec![&od];
    if let Some(h) = &cfg.paths.hierarchy {
        inputs.push(h);
    }
    out.finish(Stage::FlowsIngest, "manifest.json", &params, &inputs)
}

/// Writes the synthetic ensemble as standard series files.
pub fn simulate(cfg: &PipelineConfig) -> Result<StageReport> {
    let scenario = cfg.scenario();
    let units = generate_ensemble(&scenario)?;
    let mut out = Outputs::new(PathBuf::new());
    let (cases, mobility, truth) = (cfg.cases_path(), cfg.mobility_path(), cfg.out.join("truth"));
    let mut pop = csv::Writer::from_writer(Vec::new());
    pop.write_record(["unit_id", "population"])?;
    for u in &units {
        let id = &u.params.unit_id;
        out.put(cases.join(format!("{id}.csv")), &csv_bytes(|b| u.cases.to_series().write_csv(b))?)?;
        out.put(mobility.join(format!("{id}.csv")), &csv_bytes(|b| u.mobility.write_csv(b))?)?;
        out.put(truth.join(format!("{id}.csv")), &csv_bytes(|b| u.r_true.write_csv(b))?)?;
        pop.write_record([id.clone(), u.params.population.to_string()])?;
    }
    let pop_bytes = pop.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.put(cfg.population_path(), &pop_bytes)?;
    out.put_json(cfg.out.join("truth/units.json"), &units.iter().map(|u| &u.params).collect::<Vec<_>>())?;
    out.finish(Stage::Simulate, cfg.out.join("simulate.manifest.json"), &scenario, &[])
}

/// Posterior `R_t` per unit. A single cases file gives a single output file
/// when the output path ends in `.csv`.
pub fn rt(cfg: &PipelineConfig) -> Result<StageReport> {
    let input = cfg.cases_path();
    require(&input)?;
    let target = cfg.rt_path();
    let single_file = input.is_file();
    let units: Vec<(String, PathBuf)> = if single_file {
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        vec![(stem, input.clone())]
    } else {
        list_units(&input)?.into_iter().map(|u| (u.clone(), input.join(format!("{u}.csv")))).collect()
    };
    if units.is_empty() {
        return Err(Error::MissingArtifact(input.join("<unit>.csv")));
    }
    let p = &cfg.rt;
    let gt = discretize_generation_time(p.shape, p.rate, p.mass_cutoff)?;
    let mcmc = p.mcmc(cfg.seed);
    let to_file = single_file && target.extension().is_some_and(|e| e == "csv");
    let (root, manifest) = if to_file {
        let mut m = target.as_os_str().to_owned();
        m.push(".manifest.json");
        (PathBuf::new(), PathBuf::from(m))
    } else {
        (target.clone(), PathBuf::from("manifest.json"))
    };
    let mut out = Outputs::new(root);
    for (unit, path) in &units {
        let series = DailySeries::read_csv(open(path)?, unit.as_str(), SeriesKind::Cases)?;
        let mut cases = CaseSeries::from_series(&series)?;
        if p.smooth_half_width > 0 {
            cases = smooth_cases(&cases, p.smooth_half_width)?;
        }
        let post = estimate_rt(&cases, &gt, &mcmc)?;
        if !post.warnings.is_empty() {
            out.warnings.push(format!("{unit}: {} days with acceptance outside [0.1, 0.9]", post.warnings.len()));
        }
        if !post.excluded_days.is_empty() {
            out.warnings.push(format!("{unit}: {} days excluded (cases without infection pressure)", post.excluded_days.len()));
        }
        let rel = if to_file { target.clone() } else { PathBuf::from(format!("{unit}.csv")) };
        out.put(rel, &csv_bytes(|b| post.write_csv(b))?)?;
    }
    #[derive(Serialize)]
    struct Params<'a> {
        rt: &'a super::RtParams,
        seed: u64,
        horizon: usize,
        generation_time_mean: f64,
    }
    let params = Params { rt: p, seed: cfg.seed, horizon: gt.horizon(), generation_time_mean: gt.mean() };
    out.finish(Stage::Rt, manifest, &params, &[&input])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSelection {
    /// Calendar date of day 0 of every curve domain.
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub n_basis: usize,
    pub order: usize,
    pub lambda_r: f64,
    pub lambda_m: f64,
    pub scores_r: Vec<(f64, Option<f64>)>,
    pub scores_m: Vec<(f64, Option<f64>)>,
}

fn read_selection(fda: &Path) -> Result<SmoothSelection> {
    Ok(serde_json::from_reader(open(&fda.join("smooth/selection.json"))?)?)
}

/// Smooths the moving-averaged R_t means and the mobility series of every
/// unit on a common window, with one GCV-selected penalty per set.
pub fn fda_smooth(cfg: &PipelineConfig) -> Result<StageReport> {
    let (rt_dir, mob_dir) = (cfg.rt_path(), cfg.mobility_path());
    let units = intersect(list_units(&rt_dir)?, &list_units(&mob_dir)?);
    if units.len() < 2 {
        return Err(Error::TooFewUnits { needed: 2, got: units.len() });
    }
    let mut rs = Vec::new();
    let mut ms = Vec::new();
    for u in &units {
        rs.push(read_rt_ma(&rt_dir, u, cfg.rt.ma_window)?);
        ms.push(read_series(&mob_dir, u, SeriesKind::Mobility)?);
    }
    let f = &cfg.fda;
    let first_value = |s: &DailySeries| s.values.iter().position(Option::is_some).map(|i| s.date_at(i));
    let last_value = |s: &DailySeries| s.values.iter().rposition(Option::is_some).map(|i| s.date_at(i));
    let start = match f.window_start {
        Some(d) => d,
        None => rs.iter().chain(&ms).map(first_value).max().flatten().ok_or_else(|| Error::EmptyDomain(units.clone()))?,
    };
    let end = match f.window_end {
        Some(d) => d,
        None => rs.iter().chain(&ms).map(last_value).min().flatten().ok_or_else(|| Error::EmptyDomain(units.clone()))?,
    };
    if end <= start {
        return Err(Error::EmptyDomain(units.clone()));
    }
    let rs: Vec<DailySeries> = rs.iter().map(|s| slice(s, start, end)).collect();
    let ms: Vec<DailySeries> = ms.iter().map(|s| slice(s, start, end)).collect();
    let n_days = (end - start).num_days() as f64;
    let basis = BSplineBasis::new((0.0, n_days), f.n_basis, f.order)?;
    let grid = log_grid(f.lambda_min, f.lambda_max, f.n_lambda);
    let sel_r = gcv_select(&rs, &basis, &grid)?;
    let sel_m = gcv_select(&ms, &basis, &grid)?;
    let mut out = Outputs::new(cfg.fda_path());
    out.warnings.extend(sel_r.warnings.iter().map(|w| format!("R: {w}")));
    out.warnings.extend(sel_m.warnings.iter().map(|w| format!("M: {w}")));
    for (r, m) in rs.iter().zip(&ms) {
        put_curve(&mut out, "smooth/r", &penalized_smooth(r, &basis, sel_r.lambda)?)?;
        put_curve(&mut out, "smooth/m", &penalized_smooth(m, &basis, sel_m.lambda)?)?;
    }
    let selection = SmoothSelection {
        window_start: start,
        window_end: end,
        n_basis: f.n_basis,
        order: f.order,
        lambda_r: sel_r.lambda,
        lambda_m: sel_m.lambda,
        scores_r: sel_r.scores,
        scores_m: sel_m.scores,
    };
    out.put_json("smooth/selection.json", &selection)?;
    out.finish(Stage::FdaSmooth, "smooth/manifest.json", f, &[&rt_dir, &mob_dir])
}

fn load_smooth(fda: &Path) -> Result<(Vec<SmoothedCurve>, Vec<SmoothedCurve>)> {
    let rs = load_curves(&fda.join("smooth/r"))?;
    let ms = load_curves(&fda.join("smooth/m"))?;
    if rs.is_empty() {
        return Err(Error::MissingArtifact(fda.join("smooth/r/<unit>.json")));
    }
    Ok((rs, ms))
}

fn normalized(cs: &[SmoothedCurve]) -> Result<Vec<SmoothedCurve>> {
    cs.iter().map(normalize_by_max).collect()
}

/// First functional covariance component of the max-normalized curves.
pub fn fda_fcc(cfg: &PipelineConfig) -> Result<StageReport> {
    let fda = cfg.fda_path();
    let (rs, ms) = load_smooth(&fda)?;
    let fcc = first_fcc(&normalized(&rs)?, &normalized(&ms)?)?;
    let mut out = Outputs::new(fda.join("fcc"));
    out.put_json("fcc.json", &fcc)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "mean_r", "mean_m", "weight_r", "weight_m"])?;
    for t in crate::fda::curve::integer_days(fcc.mean_r.domain) {
        use crate::fda::Curve;
        w.write_record([
            t.to_string(),
            fcc.mean_r.eval(t).to_string(),
            fcc.mean_m.eval(t).to_string(),
            fcc.weight_r.eval(t).to_string(),
            fcc.weight_m.eval(t).to_string(),
        ])?;
    }
    out.put("curves.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    #[derive(Serialize)]
    struct Params {
        explained: f64,
        covariance: f64,
    }
    let smooth = fda.join("smooth");
    out.finish(Stage::FdaFcc, "manifest.json", &Params { explained: fcc.explained, covariance: fcc.covariance }, &[&smooth])
}

/// Shifts each unit's normalized R curve onto its FCC projection and moves
/// the raw-scale R and M curves by the same amount.
pub fn fda_register(cfg: &PipelineConfig) -> Result<StageReport> {
    let fda = cfg.fda_path();
    let (rs, ms) = load_smooth(&fda)?;
    let fcc_path = fda.join("fcc/fcc.json");
    let fcc: FccResult = serde_json::from_reader(open(&fcc_path)?)?;
    let cap = cfg.fda.cap;
    let normalized_reg = register_to_fcc(&normalized(&rs)?, &normalized(&ms)?, &fcc, cap)?;
    let reg = register_all(&rs, &ms, &normalized_reg.shifts, cap)?;
    let mut out = Outputs::new(fda.join("registered"));
    for (r, m) in reg.curves_r.iter().zip(&reg.curves_m) {
        put_curve(&mut out, "r", r)?;
        put_curve(&mut out, "m", m)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["unit", "shift"])?;
    for (u, s) in reg.unit_ids.iter().zip(&reg.shifts) {
        w.write_record([u.clone(), s.to_string()])?;
    }
    out.put("shifts.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    #[derive(Serialize)]
    struct Params {
        cap: f64,
        common_domain: (f64, f64),
    }
    let smooth = fda.join("smooth");
    out.finish(
        Stage::FdaRegister,
        "manifest.json",
        &Params { cap, common_domain: reg.common_domain },
        &[&smooth, &fcc_path],
    )
}

/// Per-unit covariate rows keyed by unit id: `unit_id,<c1>,<c2>,...`.
fn read_covariates(path: &Path) -> Result<BTreeMap<String, Vec<Option<f64>>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| {
                if v.is_empty() || v.eq_ignore_ascii_case("na") {
                    Ok(None)
                } else {
                    v.parse().map(Some).map_err(|_| Error::Parse { line: i + 2, message: format!("bad covariate {v:?}") })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(rec.get(0).unwrap_or("").to_string(), vals);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FofSummary {
    pub n_units: usize,
    pub window_start: NaiveDate,
    pub domain: (f64, f64),
    pub r2: f64,
    pub partial_r2: Option<PartialR2>,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub effective_df: f64,
    pub lag: f64,
    pub level: f64,
    /// `(start day, end day, sign)` of the lag-slice runs whose band excludes 0.
    pub significant_intervals: Vec<(f64, f64, i8)>,
    pub significant_dates: Vec<(NaiveDate, NaiveDate, i8)>,
    pub pc1_loadings: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Function-on-function regression of registered R curves on registered
/// mobility curves.
pub fn fof(cfg: &PipelineConfig) -> Result<StageReport> {
    let fda = cfg.fda_path();
    let reg = fda.join("registered");
    let rs = load_curves(&reg.join("r"))?;
    let ms = load_curves(&reg.join("m"))?;
    if rs.is_empty() {
        return Err(Error::MissingArtifact(reg.join("r/<unit>.json")));
    }
    let selection = read_selection(&fda)?;
    let p = &cfg.fof;
    let fcfg = FofConfig { k_s: p.ks, k_t: p.kt, ..FofConfig::default() };
    let mut pc1_loadings = None;
    let fit = match &cfg.paths.covariates {
        Some(path) => {
            let table = read_covariates(path)?;
            let rows = rs
                .iter()
                .map(|c| {
                    table
                        .get(&c.unit_id)
                        .cloned()
                        .ok_or_else(|| Error::UnknownUnits(vec![c.unit_id.clone()]))
                })
                .collect::<Result<Vec<_>>>()?;
            let pc1 = compute_pc1(&rows)?;
            pc1_loadings = Some(pc1.loadings.clone());
            fit_fof_with_scalar(&rs, &ms, &pc1.scores, &fcfg)?
        }
        None => fit_fof(&rs, &ms, &fcfg)?,
    };
    let band = confidence_band(&fit, p.level)?;
    let slice = lag_slice(&fit, p.lag, p.level)?;
    let mut out = Outputs::new(cfg.fof_path());

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["s", "t", "beta", "se"])?;
    for (i, s) in band.s.iter().enumerate() {
        for (j, t) in band.t.iter().enumerate() {
            let k = i * band.t.len() + j;
            w.write_record([s.to_string(), t.to_string(), band.beta[k].to_string(), band.se[k].to_string()])?;
        }
    }
    out.put("surface.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["s", "beta", "lo", "hi", "significant"])?;
    for (k, sig) in slice.significance().iter().enumerate() {
        w.write_record([
            slice.s[k].to_string(),
            slice.beta[k].to_string(),
            slice.lower[k].to_string(),
            slice.upper[k].to_string(),
            sig.to_string(),
        ])?;
    }
    out.put("slice.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    if fit.scalar.is_some() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "beta_pc", "se"])?;
        for t in &fit.grid {
            let (b, se) = fit.scalar_effect(*t).unwrap();
            w.write_record([t.to_string(), b.to_string(), se.to_string()])?;
        }
        out.put("scalar_effect.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    }

    let day = |d: f64| selection.window_start + Duration::days(d.round() as i64);
    let summary = FofSummary {
        n_units: fit.n_units(),
        window_start: selection.window_start,
        domain: fit.domain,
        r2: fit.r2,
        partial_r2: fit.partial_r2,
        lambda_s: fit.lambda_s,
        lambda_t: fit.lambda_t,
        effective_df: fit.effective_df,
        lag: p.lag,
        level: p.level,
        significant_intervals: slice.significant.clone(),
        significant_dates: slice.significant.iter().map(|(a, b, s)| (day(*a), day(*b), *s)).collect(),
        pc1_loadings,
        warnings: fit.warnings.clone(),
    };
    out.warnings.extend(fit.warnings.iter().cloned());
    out.put_json("summary.json", &summary)?;
    let mut inputs: Vec<&Path> = vec![&reg];
    if let Some(c) = &cfg.paths.covariates {
        inputs.push(c);
    }
    out.finish(Stage::Fof, "manifest.json", p, &inputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayFit {
    pub fit: Option<PearsonFit>,
    /// Units left out of the fit because their delay is not a number.
    pub excluded: Vec<String>,
}

/// Delay in mobility reduction and cumulative incidence for every unit,
/// plus their linear fit.
pub fn delay(cfg: &PipelineConfig) -> Result<StageReport> {
    let (rt_dir, mob_dir, cases_dir, pop_path) =
        (cfg.rt_path(), cfg.mobility_path(), cfg.cases_path(), cfg.population_path());
    let units = intersect(intersect(list_units(&rt_dir)?, &list_units(&mob_dir)?), &list_units(&cases_dir)?);
    if units.is_empty() {
        return Err(Error::MissingArtifact(rt_dir.join("<unit>.csv")));
    }
    let pop = read_population(&pop_path)?;
    let p = &cfg.delay;
    let mut records: Vec<DelayRecord> = Vec::new();
    for u in &units {
        let mut r = read_rt_ma(&rt_dir, u, cfg.rt.ma_window)?;
        if let Some(start) = p.start {
            for (i, v) in r.values.iter_mut().enumerate() {
                if r.start_date + Duration::days(i as i64) < start {
                    *v = None;
                }
            }
        }
        let m = read_series(&mob_dir, u, SeriesKind::Mobility)?;
        let b_start = p.baseline_start.unwrap_or(m.start_date);
        let b_end = p.baseline_end.unwrap_or(b_start + Duration::days(13));
        let baseline = crate::od::baseline_mobility(&m, b_start, b_end)?;
        let mut rec = delay_in_mobility_reduction(&r, &m, baseline, DelayOptions { mobility_ma7: p.mobility_ma7 })?;
        let cases = CaseSeries::from_series(&read_series(&cases_dir, u, SeriesKind::Cases)?)?;
        let population = *pop.get(u).ok_or_else(|| Error::UnknownUnits(vec![u.clone()]))?;
        let (total, incidence) = cumulative_cases(&cases, population, p.as_of)?;
        rec.total_cases = Some(total);
        rec.incidence_100k = Some(incidence);
        records.push(rec);
    }
    let mut out = Outputs::new(cfg.delay_path());
    out.put("delay.csv", &csv_bytes(|b| write_delay_csv(&records, b))?)?;
    let (used, excluded): (Vec<&DelayRecord>, Vec<&DelayRecord>) =
        records.iter().partition(|r| r.delay.days().is_some());
    let xs: Vec<f64> = used.iter().map(|r| r.delay.days().unwrap() as f64).collect();
    let ys: Vec<f64> = used.iter().map(|r| r.incidence_100k.unwrap()).collect();
    let fit = match pearson_fit(&xs, &ys) {
        Ok(f) => Some(f),
        Err(e) => {
            out.warnings.push(format!("no delay-incidence fit: {e}"));
            None
        }
    };
    let result = DelayFit { fit, excluded: excluded.iter().map(|r| r.unit_id.clone()).collect() };
    out.put_json("fit.json", &result)?;
    #[derive(Serialize)]
    struct Params<'a> {
        delay: &'a super::DelayParams,
        ma_window: usize,
    }
    out.finish(
        Stage::Delay,
        "manifest.json",
        &Params { delay: p, ma_window: cfg.rt.ma_window },
        &[&rt_dir, &mob_dir, &cases_dir, &pop_path],
    )
}
