use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use epimob::od::{
    aggregate, baseline_mobility, ingest_flows, mobility_series, FlowRecord, FlowTable, IngestOptions, Level,
    SpatialHierarchy, SpatialUnit,
};
use epimob::series::{DailySeries, SeriesKind};
use proptest::prelude::*;

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 2, 1).unwrap()
}

fn unit(level: Level, parent: Option<String>) -> SpatialUnit {
    SpatialUnit { name: String::new(), parent_id: parent, level, population: 1000.0 }
}

/// `muni_to_prov[i]` is the province of municipality `m{i}`; provinces map to
/// regions by `prov_to_reg`.
fn hierarchy(muni_to_prov: &[usize], prov_to_reg: &[usize]) -> SpatialHierarchy {
    let mut units = Vec::new();
    for r in 0..=*prov_to_reg.iter().max().unwrap() {
        units.push((format!("r{r}"), unit(Level::Region, None)));
    }
    for (p, r) in prov_to_reg.iter().enumerate() {
        units.push((format!("p{p}"), unit(Level::Province, Some(format!("r{r}")))));
    }
    for (m, p) in muni_to_prov.iter().enumerate() {
        units.push((format!("m{m}"), unit(Level::Municipality, Some(format!("p{p}")))));
    }
    SpatialHierarchy::new(units).unwrap()
}

/// Dense `days × n × n` trip cube as a flow table (zero cells omitted).
fn table(prefix: &str, level: Level, cube: &[Vec<Vec<u64>>]) -> FlowTable {
    let mut recs = Vec::new();
    for (d, m) in cube.iter().enumerate() {
        for (o, row) in m.iter().enumerate() {
            for (t, &trips) in row.iter().enumerate() {
                if trips > 0 {
                    recs.push(FlowRecord {
                        date: day0() + Duration::days(d as i64),
                        origin: format!("{prefix}{o}"),
                        destination: format!("{prefix}{t}"),
                        trips,
                    });
                }
            }
        }
    }
    FlowTable::from_records(level, recs).unwrap()
}

fn cube(n: usize, days: usize) -> impl Strategy<Value = Vec<Vec<Vec<u64>>>> {
    prop::collection::vec(prop::collection::vec(prop::collection::vec(0u64..60, n), n), days)
}

fn toy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<Vec<Vec<u64>>>)> {
    (1usize..=3)
        .prop_flat_map(|n_prov| {
            (
                prop::collection::vec(0..n_prov, 5),
                prop::collection::vec(0usize..2, n_prov),
                cube(5, 4),
            )
        })
        .prop_filter("every province used", |(m2p, p2r, _)| {
            (0..p2r.len()).all(|p| m2p.contains(&p)) && p2r.contains(&0)
        })
}

fn csv_of(t: &FlowTable) -> String {
    let mut s = String::from("date,origin,destination,trips\n");
    for ((d, o, dst), trips) in t.records() {
        s.push_str(&format!("{d},{o},{dst},{trips}\n"));
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn aggregation_matches_double_loop_and_conserves_totals((m2p, p2r, c) in toy()) {
        let h = hierarchy(&m2p, &p2r);
        let flows = table("m", Level::Municipality, &c);
        let prov = aggregate(&flows, &h, Level::Province).unwrap();
        let mut oracle: BTreeMap<(NaiveDate, String, String), u64> = BTreeMap::new();
        for (d, m) in c.iter().enumerate() {
            for a in 0..5 {
                for b in 0..5 {
                    if m[a][b] > 0 {
                        let key = (day0() + Duration::days(d as i64), format!("p{}", m2p[a]), format!("p{}", m2p[b]));
                        *oracle.entry(key).or_insert(0) += m[a][b];
                    }
                }
            }
        }
        let got: BTreeMap<_, _> = prov.records().map(|(k, v)| (k.clone(), v)).collect();
        prop_assert_eq!(got, oracle);
        prop_assert_eq!(prov.daily_totals(), flows.daily_totals());
        let reg = aggregate(&prov, &h, Level::Region).unwrap();
        prop_assert_eq!(reg.daily_totals(), flows.daily_totals());
    }

    #[test]
    fn mobility_is_column_sum_plus_diagonal(c in cube(3, 6)) {
        let flows = table("u", Level::Region, &c);
        for u in 0..3 {
            let id = format!("u{u}");
            if !flows.units().contains(id.as_str()) {
                prop_assert!(mobility_series(&flows, &id).is_err());
                continue;
            }
            let s = mobility_series(&flows, &id).unwrap().series;
            for (d, m) in c.iter().enumerate() {
                let date = day0() + Duration::days(d as i64);
                let any_record = m.iter().flatten().any(|&v| v > 0);
                let expect: u64 = (0..3).map(|o| m[o][u]).sum();
                match s.get(date) {
                    Some(v) => prop_assert_eq!(v, expect as f64),
                    None => prop_assert!(!any_record || s.index_of(date).is_none()),
                }
            }
        }
    }

    #[test]
    fn mobility_ignores_record_order(c in cube(3, 4), seed in any::<u64>()) {
        let flows = table("u", Level::Region, &c);
        prop_assume!(!flows.is_empty());
        let mut recs: Vec<FlowRecord> = flows
            .records()
            .map(|((d, o, t), v)| FlowRecord { date: *d, origin: o.clone(), destination: t.clone(), trips: v })
            .collect();
        let mut state = seed | 1;
        for i in (1..recs.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            recs.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let shuffled = FlowTable::from_records(Level::Region, recs).unwrap();
        for u in flows.units() {
            prop_assert_eq!(
                mobility_series(&flows, u).unwrap().series,
                mobility_series(&shuffled, u).unwrap().series
            );
        }
    }

    #[test]
    fn suppression_never_increases_aggregates((m2p, p2r, c) in toy(), threshold in 0u64..40) {
        let h = hierarchy(&m2p, &p2r);
        let full = table("m", Level::Municipality, &c);
        let text = csv_of(&full);
        let opts = IngestOptions { threshold, ..IngestOptions::default() };
        let kept = ingest_flows(text.as_bytes(), &opts).unwrap();
        for (_, v) in kept.records() {
            prop_assert!(v >= threshold);
        }
        let dropped = full.records().filter(|(_, v)| *v < threshold).count();
        prop_assert_eq!(kept.suppressed_records, dropped);
        prop_assert_eq!(kept.len() + dropped, full.len());
        let a = aggregate(&kept, &h, Level::Province).unwrap();
        let b = aggregate(&full, &h, Level::Province).unwrap();
        for ((d, o, t), v) in a.records() {
            prop_assert!(v <= b.trips(*d, o, t));
        }
    }

    #[test]
    fn baseline_is_sum_over_fourteen(vals in prop::collection::vec(0.0f64..1e6, 20), start in 0usize..6) {
        let s = DailySeries::dense("u", day0(), vals.clone(), SeriesKind::Mobility).unwrap();
        let from = day0() + Duration::days(start as i64);
        let b = baseline_mobility(&s, from, from + Duration::days(13)).unwrap();
        let oracle = vals[start..start + 14].iter().sum::<f64>() / 14.0;
        prop_assert!((b - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }
}

#[test]
fn threshold_zero_keeps_every_row() {
    let text = "date,origin,destination,trips\n2020-02-01,a,b,0\n2020-02-01,b,a,3\n2020-02-02,a,a,14\n";
    let t = ingest_flows(text.as_bytes(), &IngestOptions { threshold: 0, ..IngestOptions::default() }).unwrap();
    assert_eq!(t.len(), 3);
    assert_eq!(t.suppressed_records, 0);
}

#[test]
fn two_municipalities_into_one_province_pair() {
    let h = hierarchy(&[0, 0, 1], &[0, 0]);
    let d = day0();
    let recs = [("m0", "m2", 20), ("m1", "m2", 20)].map(|(o, t, n)| FlowRecord {
        date: d,
        origin: o.into(),
        destination: t.into(),
        trips: n,
    });
    let prov = aggregate(&FlowTable::from_records(Level::Municipality, recs).unwrap(), &h, Level::Province).unwrap();
    assert_eq!(prov.trips(d, "p0", "p1"), 40);
}

#[test]
fn constant_and_arithmetic_baselines() {
    let c = DailySeries::dense("u", day0(), vec![42.0; 14], SeriesKind::Mobility).unwrap();
    assert_eq!(baseline_mobility(&c, day0(), day0() + Duration::days(13)).unwrap(), 42.0);
    let r = DailySeries::dense("u", day0(), (1..=14).map(f64::from), SeriesKind::Mobility).unwrap();
    assert_eq!(baseline_mobility(&r, day0(), day0() + Duration::days(13)).unwrap(), 7.5);
}

#[test]
fn missing_day_in_baseline_window_is_an_error() {
    let mut v: Vec<Option<f64>> = vec![Some(1.0); 14];
    v[5] = None;
    let s = DailySeries::new("u", day0(), v, SeriesKind::Mobility).unwrap();
    assert!(baseline_mobility(&s, day0(), day0() + Duration::days(13)).is_err());
}
