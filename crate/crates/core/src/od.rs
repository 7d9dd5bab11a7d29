//! Origin–destination flow ingestion, privacy suppression, spatial
//! aggregation and daily mobility series.
//!
//! Input flows are assumed to already satisfy the upstream dwell-time rule
//! (a trip is only counted after a stay of at least 30 minutes at the
//! destination). Nothing here re-derives it, since raw handset events are
//! not part of the input.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{column, parse_date, DailySeries, SeriesKind};

/// Administrative level, ordered from finest to coarsest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Municipality,
    Province,
    Region,
}

impl Level {
    fn parent(self) -> Option<Level> {
        match self {
            Level::Municipality => Some(Level::Province),
            Level::Province => Some(Level::Region),
            Level::Region => None,
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "municipality" => Ok(Level::Municipality),
            "province" => Ok(Level::Province),
            "region" => Ok(Level::Region),
            other => Err(Error::InvalidParameter(format!("unknown level `{other}`"))),
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Level::Municipality => "municipality",
            Level::Province => "province",
            Level::Region => "region",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialUnit {
    pub name: String,
    pub parent_id: Option<String>,
    pub level: Level,
    pub population: f64,
}

/// Municipality → province → region tree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpatialHierarchy {
    units: BTreeMap<String, SpatialUnit>,
}

impl SpatialHierarchy {
    /// Builds and validates a hierarchy. Every municipality needs a province
    /// parent, every province a region parent, and populations must be
    /// strictly positive.
    pub fn new(units: impl IntoIterator<Item = (String, SpatialUnit)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, unit) in units {
            if map.insert(id.clone(), unit).is_some() {
                return Err(Error::InvalidHierarchy(format!("duplicate unit id `{id}`")));
            }
        }
        let h = SpatialHierarchy { units: map };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        for (id, unit) in &self.units {
            if !(unit.population > 0.0) {
                return Err(Error::InvalidHierarchy(format!(
                    "unit `{id}` has non-positive population {}",
                    unit.population
                )));
            }
            match (unit.level.parent(), unit.parent_id.as_deref()) {
                (None, _) => {}
                (Some(_), None) => {
                    return Err(Error::InvalidHierarchy(format!(
                        "{} `{id}` has no parent",
                        unit.level
                    )))
                }
                (Some(want), Some(pid)) => {
                    let parent = self.units.get(pid).ok_or_else(|| {
                        Error::InvalidHierarchy(format!("unit `{id}` has unknown parent `{pid}`"))
                    })?;
                    if parent.level != want {
                        return Err(Error::InvalidHierarchy(format!(
                            "unit `{id}` ({}) has parent `{pid}` at level {}, expected {want}",
                            unit.level, parent.level
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads `unit_id,name,parent_id,level,population`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols = ["unit_id", "name", "parent_id", "level", "population"]
            .map(|c| column(&headers, c));
        let [id_c, name_c, parent_c, level_c, pop_c] = match cols {
            [Ok(a), Ok(b), Ok(c), Ok(d), Ok(e)] => [a, b, c, d, e],
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "hierarchy header must be unit_id,name,parent_id,level,population".into(),
                })
            }
        };
        let mut units = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let field = |c: usize| rec.get(c).unwrap_or("").to_string();
            let parent = field(parent_c);
            let level = field(level_c)
                .parse::<Level>()
                .map_err(|e| Error::Parse { line, message: e.to_string() })?;
            let population = field(pop_c).parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("bad population: {e}"),
            })?;
            units.push((
                field(id_c),
                SpatialUnit {
                    name: field(name_c),
                    parent_id: (!parent.is_empty()).then_some(parent),
                    level,
                    population,
                },
            ));
        }
        Self::new(units)
    }

    pub fn get(&self, id: &str) -> Option<&SpatialUnit> {
        self.units.get(id)
    }

    pub fn units_at(&self, level: Level) -> impl Iterator<Item = (&str, &SpatialUnit)> {
        self.units
            .iter()
            .filter(move |(_, u)| u.level == level)
            .map(|(id, u)| (id.as_str(), u))
    }

    /// The ancestor of `id` at `level` (or `id` itself when already there).
    pub fn ancestor_at(&self, id: &str, level: Level) -> Option<&str> {
        let (mut cur_id, mut cur) = self.units.get_key_value(id)?;
        while cur.level < level {
            let pid = cur.parent_id.as_deref()?;
            (cur_id, cur) = self.units.get_key_value(pid)?;
        }
        (cur.level == level).then_some(cur_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub date: NaiveDate,
    pub origin: String,
    pub destination: String,
    pub trips: u64,
}

pub type FlowKey = (NaiveDate, String, String);

/// Dated origin → destination trip counts at one spatial level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTable {
    pub level: Level,
    pub suppression_threshold: u64,
    pub suppressed_records: usize,
    pub provenance: String,
    /// Inclusive study window; when absent the span of the records is used.
    pub window: Option<(NaiveDate, NaiveDate)>,
    #[serde(skip)]
    records: BTreeMap<FlowKey, u64>,
}

impl FlowTable {
    pub fn from_records(
        level: Level,
        records: impl IntoIterator<Item = FlowRecord>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in records {
            insert_unique(&mut map, r)?;
        }
        Ok(FlowTable {
            level,
            suppression_threshold: 0,
            suppressed_records: 0,
            provenance: "in-memory".into(),
            window: None,
            records: map,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn trips(&self, date: NaiveDate, origin: &str, destination: &str) -> u64 {
        self.records
            .get(&(date, origin.to_string(), destination.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn records(&self) -> impl Iterator<Item = (&FlowKey, u64)> {
        self.records.iter().map(|(k, v)| (k, *v))
    }

    pub fn units(&self) -> BTreeSet<&str> {
        self.records
            .keys()
            .flat_map(|(_, o, d)| [o.as_str(), d.as_str()])
            .collect()
    }

    pub fn dates(&self) -> BTreeSet<NaiveDate> {
        self.records.keys().map(|(d, _, _)| *d).collect()
    }

    /// Total trips per day.
    pub fn daily_totals(&self) -> BTreeMap<NaiveDate, u64> {
        let mut totals = BTreeMap::new();
        for ((d, _, _), t) in &self.records {
            *totals.entry(*d).or_insert(0) += t;
        }
        totals
    }

    fn span(&self) -> Option<(NaiveDate, NaiveDate)> {
        self.window.or_else(|| {
            let dates = self.dates();
            Some((*dates.first()?, *dates.last()?))
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "origin", "destination", "trips"])?;
        for ((d, o, dst), t) in &self.records {
            w.write_record([d.to_string(), o.clone(), dst.clone(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn insert_unique(map: &mut BTreeMap<FlowKey, u64>, r: FlowRecord) -> Result<()> {
    let key = (r.date, r.origin, r.destination);
    if map.contains_key(&key) {
        let (date, origin, destination) = key;
        return Err(Error::DuplicateFlow {
            date,
            origin,
            destination,
        });
    }
    map.insert(key, r.trips);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IngestOptions<'a> {
    /// Records with `trips < threshold` are dropped.
    pub threshold: u64,
    pub level: Level,
    pub window: Option<(NaiveDate, NaiveDate)>,
    /// When given, origins and destinations must exist at `level`.
    pub hierarchy: Option<&'a SpatialHierarchy>,
    pub provenance: String,
}

impl Default for IngestOptions<'_> {
    fn default() -> Self {
        IngestOptions {
            threshold: 15,
            level: Level::Municipality,
            window: None,
            hierarchy: None,
            provenance: "csv".into(),
        }
    }
}

/// Streams a `date,origin,destination,trips` CSV into a [`FlowTable`],
/// suppressing sub-threshold flows.
pub fn ingest_flows<R: Read>(reader: R, opts: &IngestOptions<'_>) -> Result<FlowTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_c = column(&headers, "date")?;
    let origin_c = column(&headers, "origin")?;
    let dest_c = column(&headers, "destination")?;
    let trips_c = column(&headers, "trips")?;

    let mut records = BTreeMap::new();
    let mut suppressed = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let date = parse_date(field(date_c), line)?;
        if let Some((lo, hi)) = opts.window {
            if date < lo || date > hi {
                return Err(Error::Parse {
                    line,
                    message: format!("date {date} outside study window {lo}..={hi}"),
                });
            }
        }
        let origin = field(origin_c).to_string();
        let destination = field(dest_c).to_string();
        if origin.is_empty() || destination.is_empty() {
            return Err(Error::Parse { line, message: "empty unit id".into() });
        }
        if let Some(h) = opts.hierarchy {
            for id in [&origin, &destination] {
                match h.get(id) {
                    Some(u) if u.level == opts.level => {}
                    Some(u) => {
                        return Err(Error::Parse {
                            line,
                            message: format!("unit `{id}` is a {}, expected {}", u.level, opts.level),
                        })
                    }
                    None => {
                        return Err(Error::Parse {
                            line,
                            message: format!("unit `{id}` not in hierarchy"),
                        })
                    }
                }
            }
        }
        let trips = field(trips_c).parse::<u64>().map_err(|e| Error::Parse {
            line,
            message: format!("bad trip count `{}`: {e}", field(trips_c)),
        })?;
        let key = (date, origin, destination);
        if records.contains_key(&key) {
            let (date, origin, destination) = key;
            return Err(Error::DuplicateFlow { date, origin, destination });
        }
        if trips < opts.threshold {
            suppressed += 1;
            // Remember the key so later duplicates are still caught.
            records.insert(key, None);
        } else {
            records.insert(key, Some(trips));
        }
    }
    Ok(FlowTable {
        level: opts.level,
        suppression_threshold: opts.threshold,
        suppressed_records: suppressed,
        provenance: opts.provenance.clone(),
        window: opts.window,
        records: records.into_iter().filter_map(|(k, v)| Some((k, v?))).collect(),
    })
}

/// Sums flows over all child pairs to reach `target`.
pub fn aggregate(
    flows: &FlowTable,
    hierarchy: &SpatialHierarchy,
    target: Level,
) -> Result<FlowTable> {
    if flows.level >= target {
        return Err(Error::InvalidParameter(format!(
            "cannot aggregate {} flows to {target}",
            flows.level
        )));
    }
    let mut unresolved = BTreeSet::new();
    let mut out: BTreeMap<FlowKey, u64> = BTreeMap::new();
    for ((date, o, d), trips) in &flows.records {
        let po = hierarchy.ancestor_at(o, target);
        let pd = hierarchy.ancestor_at(d, target);
        match (po, pd) {
            (Some(po), Some(pd)) => {
                *out.entry((*date, po.to_string(), pd.to_string())).or_insert(0) += trips;
            }
            _ => {
                if po.is_none() {
                    unresolved.insert(o.clone());
                }
                if pd.is_none() {
                    unresolved.insert(d.clone());
                }
            }
        }
    }
    if !unresolved.is_empty() {
        return Err(Error::UnknownUnits(unresolved.into_iter().collect()));
    }
    Ok(FlowTable {
        level: target,
        records: out,
        provenance: format!("{} aggregated to {target}", flows.provenance),
        ..flows.clone()
    })
}

#[derive(Debug, Clone)]
pub struct MobilityExtract {
    pub series: DailySeries,
    pub notes: Vec<String>,
}

/// Daily mobility of a unit: in-flows from every other unit plus its
/// self-flow. Out-flows never count. Days on which the table holds no
/// records at all are missing.
pub fn mobility_series(flows: &FlowTable, unit: &str) -> Result<MobilityExtract> {
    if !flows.units().contains(unit) {
        return Err(Error::UnknownUnits(vec![unit.to_string()]));
    }
    let (start, end) = flows.span().expect("non-empty table has a span");
    let n = (end - start).num_days() as usize + 1;
    let observed = flows.dates();
    let mut inflow = vec![0u64; n];
    let mut outflow = vec![false; n];
    for ((date, o, d), trips) in &flows.records {
        let Some(i) = offset(start, n, *date) else { continue };
        if d == unit {
            inflow[i] += trips;
        } else if o == unit {
            outflow[i] = true;
        }
    }
    let mut notes = Vec::new();
    let values = (0..n)
        .map(|i| {
            let date = start + Duration::days(i as i64);
            if !observed.contains(&date) {
                return None;
            }
            if inflow[i] == 0 && outflow[i] {
                notes.push(format!("{unit} {date}: only out-flows recorded, mobility 0"));
            }
            Some(inflow[i] as f64)
        })
        .collect();
    Ok(MobilityExtract {
        series: DailySeries::new(unit, start, values, SeriesKind::Mobility)?,
        notes,
    })
}

fn offset(start: NaiveDate, n: usize, date: NaiveDate) -> Option<usize> {
    let k = (date - start).num_days();
    (k >= 0 && (k as usize) < n).then_some(k as usize)
}

/// Mean mobility over an inclusive window (the pre-epidemic reference level).
pub fn baseline_mobility(series: &DailySeries, start: NaiveDate, end: NaiveDate) -> Result<f64> {
    if end < start {
        return Err(Error::InvalidParameter(format!("empty baseline window {start}..={end}")));
    }
    let (Some(lo), Some(hi)) = (series.index_of(start), series.index_of(end)) else {
        return Err(Error::InvalidParameter(format!(
            "baseline window {start}..={end} not covered by {} ({}..={})",
            series.unit_id,
            series.start_date,
            series.end_date()
        )));
    };
    let window = &series.values[lo..=hi];
    let missing: Vec<NaiveDate> = window
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(i, _)| series.date_at(lo + i))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingDays {
            unit: series.unit_id.clone(),
            dates: missing,
        });
    }
    Ok(window.iter().flatten().sum::<f64>() / window.len() as f64)
}
