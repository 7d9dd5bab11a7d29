//! Aggregate municipal flows to provinces and read off a mobility series.

use epimob::od::{aggregate, baseline_mobility, ingest_flows, mobility_series, IngestOptions, Level, SpatialHierarchy};

const HIERARCHY: &str = "\
unit_id,name,parent_id,level,population
R1,North,,region,300000
P1,Alpha,R1,province,200000
P2,Beta,R1,province,100000
M1,Alpha town,P1,municipality,120000
M2,Alpha village,P1,municipality,80000
M3,Beta town,P2,municipality,100000
";

fn main() -> epimob::Result<()> {
    let hierarchy = SpatialHierarchy::read_csv(HIERARCHY.as_bytes())?;
    let mut csv = String::from("date,origin,destination,trips\n");
    for day in 1..=20 {
        let scale = if day <= 14 { 1.0 } else { 0.4 };
        for (o, d, trips) in [("M1", "M1", 900.0), ("M2", "M1", 300.0), ("M3", "M1", 40.0), ("M1", "M3", 60.0), ("M2", "M3", 9.0)] {
            csv.push_str(&format!("2020-02-{day:02},{o},{d},{}\n", (trips * scale) as u64));
        }
    }
    let flows = ingest_flows(csv.as_bytes(), &IngestOptions { hierarchy: Some(&hierarchy), ..IngestOptions::default() })?;
    println!("{} records kept, {} below threshold", flows.len(), flows.suppressed_records);

    let provinces = aggregate(&flows, &hierarchy, Level::Province)?;
    let p1 = mobility_series(&provinces, "P1")?.series;
    let base = baseline_mobility(&p1, p1.start_date, p1.date_at(13))?;
    for (i, v) in p1.values.iter().enumerate().skip(12) {
        println!("{}  M_t = {:>6}  ({:.0}% of baseline)", p1.date_at(i), v.unwrap(), 100.0 * v.unwrap() / base);
    }
    Ok(())
}
