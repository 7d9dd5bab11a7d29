//! Simulate an epidemic with a drop in transmission and recover R_t.

use epimob::rt::{estimate_rt, smooth_cases, McmcConfig};
use epimob::synth::{simulate_renewal, unit_params, RTrajectory, Scenario};

fn main() -> epimob::Result<()> {
    let scenario = Scenario {
        n_units: 1,
        days: 120,
        burn_in_days: 0,
        seed_cases: 30.0,
        r: RTrajectory::Step { values: vec![1.8, 0.8], change_days: vec![50.0] },
        ..Scenario::default()
    };
    let unit = &unit_params(&scenario)[0];
    let cases = simulate_renewal(&scenario, unit)?;
    let gt = scenario.generation_time()?;
    println!("generation time: {} days of support, mean {:.2}", gt.horizon(), gt.mean());

    let post = estimate_rt(&smooth_cases(&cases, 4)?, &gt, &McmcConfig::default())?;
    for t in (20..cases.len()).step_by(10) {
        if let Some(day) = &post.days[t] {
            let s = &day.summary;
            println!(
                "{}  cases {:>6}  R_t {:.2} [{:.2}, {:.2}]",
                post.date_at(t),
                cases.counts[t],
                s.mean,
                s.q2_5,
                s.q97_5
            );
        }
    }
    Ok(())
}
