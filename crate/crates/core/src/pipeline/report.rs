use std::path::Path;

use chrono::Duration;
use serde::Serialize;

use super::stages::{read_rt_ma, read_series, DelayFit};
use super::svg::{self, Line, PALETTE};
use super::{list_units, require, Outputs, PipelineConfig, Stage, StageReport};
use crate::analysis::read_delay_csv;
use crate::error::{Error, Result};
use crate::series::{DailySeries, SeriesKind};

fn max_of(s: &DailySeries) -> Option<f64> {
    s.values.iter().flatten().copied().fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

fn normalize(v: Option<f64>, max: Option<f64>) -> Option<f64> {
    match (v, max) {
        (Some(v), Some(m)) if m > 0.0 => Some(v / m),
        _ => None,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn read_numeric_csv(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(std::fs::File::open(path)?);
    let headers = rdr.headers()?.clone();
    let idx = columns
        .iter()
        .map(|c| crate::series::column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(
            idx.iter()
                .map(|&i| {
                    let raw = rec.get(i).unwrap_or("");
                    raw.parse().map_err(|_| Error::Parse { line: n + 2, message: format!("bad number {raw:?}") })
                })
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(rows)
}

fn write_rows(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Per-unit line charts, the delay-incidence scatter and, when a regression
/// has been fitted, the β heatmap and the lag-slice band plot. Every SVG has
/// a CSV twin holding exactly the plotted numbers.
pub fn report(cfg: &PipelineConfig) -> Result<StageReport> {
    let (rt_dir, mob_dir, cases_dir, delay_dir, fof_dir) =
        (cfg.rt_path(), cfg.mobility_path(), cfg.cases_path(), cfg.delay_path(), cfg.fof_path());
    let units: Vec<String> = list_units(&rt_dir)?
        .into_iter()
        .filter(|u| mob_dir.join(format!("{u}.csv")).exists() && cases_dir.join(format!("{u}.csv")).exists())
        .collect();
    if units.is_empty() {
        return Err(Error::MissingArtifact(rt_dir.join("<unit>.csv")));
    }
    let delay_csv = delay_dir.join("delay.csv");
    let fit_json = delay_dir.join("fit.json");
    require(&delay_csv)?;
    require(&fit_json)?;

    let mut out = Outputs::new(cfg.report_path());
    for u in &units {
        let r = read_rt_ma(&rt_dir, u, cfg.rt.ma_window)?;
        let m = read_series(&mob_dir, u, SeriesKind::Mobility)?;
        let c = read_series(&cases_dir, u, SeriesKind::Cases)?;
        let start = r.start_date.min(m.start_date).min(c.start_date);
        let end = r.end_date().max(m.end_date()).max(c.end_date());
        let n = (end - start).num_days() + 1;
        let (mr, mm, mc) = (max_of(&r), max_of(&m), max_of(&c));
        let mut rows = Vec::with_capacity(n as usize);
        let mut lines: Vec<Line> = ["mobility", "R_t (7-day MA)", "cases"]
            .iter()
            .zip(PALETTE)
            .map(|(name, color)| Line { name: name.to_string(), color: color.to_string(), points: Vec::new() })
            .collect();
        for i in 0..n {
            let date = start + Duration::days(i);
            let (vm, vr, vc) = (m.get(date), r.get(date), c.get(date));
            let norm = [normalize(vm, mm), normalize(vr, mr), normalize(vc, mc)];
            for (line, v) in lines.iter_mut().zip(norm) {
                line.points.push((i as f64, v));
            }
            rows.push(vec![
                date.to_string(),
                opt(vm),
                opt(vr),
                opt(vc),
                opt(norm[0]),
                opt(norm[1]),
                opt(norm[2]),
            ]);
        }
        out.put(
            format!("units/{u}.csv"),
            &write_rows(
                &["date", "mobility", "rt_ma", "cases", "mobility_norm", "rt_norm", "cases_norm"],
                rows.into_iter(),
            )?,
        )?;
        let title = format!("{u}: normalized series from {start}");
        out.put(format!("units/{u}.svg"), svg::line_chart(&title, "day", "fraction of maximum", &lines).as_bytes())?;
    }

    let records = read_delay_csv(std::fs::File::open(&delay_csv)?)?;
    let fit: DelayFit = serde_json::from_reader(std::fs::File::open(&fit_json)?)?;
    let pts: Vec<(String, f64, f64)> = records
        .iter()
        .filter_map(|r| Some((r.unit_id.clone(), r.delay.days()? as f64, r.incidence_100k?)))
        .collect();
    out.put(
        "delay_incidence.csv",
        &write_rows(
            &["unit", "delay_days", "incidence_100k"],
            pts.iter().map(|(u, x, y)| vec![u.clone(), x.to_string(), y.to_string()]),
        )?,
    )?;
    let title = match &fit.fit {
        Some(f) => format!("Pearson r = {:.2}, p = {:.3}, r² = {:.2}", f.r, f.p_value, f.r2),
        None => "delay vs incidence".to_string(),
    };
    let xy: Vec<(f64, f64)> = pts.iter().map(|(_, x, y)| (*x, *y)).collect();
    out.put(
        "delay_incidence.svg",
        svg::scatter(&title, "delay in mobility reduction (days)", "cases per 100k", &xy, fit.fit.map(|f| (f.slope, f.intercept)))
            .as_bytes(),
    )?;

    let mut inputs: Vec<&Path> = vec![&rt_dir, &mob_dir, &cases_dir, &delay_dir];
    let surface = fof_dir.join("surface.csv");
    let slice = fof_dir.join("slice.csv");
    if surface.exists() && slice.exists() {
        let rows = read_numeric_csv(&surface, &["s", "t", "beta"])?;
        let mut xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        xs.dedup();
        let ys: Vec<f64> = rows.iter().take_while(|r| r[0] == rows[0][0]).map(|r| r[1]).collect();
        let values: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        out.put(
            "beta_surface.csv",
            &write_rows(&["s", "t", "beta"], rows.iter().map(|r| r.iter().map(f64::to_string).collect()))?,
        )?;
        out.put(
            "beta_surface.svg",
            svg::heatmap("coefficient surface β(s, t)", "s (mobility day)", "t (R_t day)", &xs, &ys, &values).as_bytes(),
        )?;
        let rows = read_numeric_csv(&slice, &["s", "beta", "lo", "hi"])?;
        out.put(
            "lag_slice.csv",
            &write_rows(&["s", "beta", "lo", "hi"], rows.iter().map(|r| r.iter().map(f64::to_string).collect()))?,
        )?;
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        out.put(
            "lag_slice.svg",
            svg::band_plot(
                &format!("β(s, s + {})", cfg.fof.lag),
                "s (day)",
                "effect",
                &col(0),
                &col(1),
                &col(2),
                &col(3),
            )
            .as_bytes(),
        )?;
        inputs.push(&fof_dir);
    } else {
        out.warnings.push("no regression artifacts; surface and lag-slice plots skipped".into());
    }

    #[derive(Serialize)]
    struct Params {
        units: usize,
        ma_window: usize,
    }
    out.finish(Stage::Report, "manifest.json", &Params { units: units.len(), ma_window: cfg.rt.ma_window }, &inputs)
}
