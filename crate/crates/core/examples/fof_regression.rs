//! Function-on-function regression with a lagged coefficient surface.

use epimob::fda::BSplineBasis;
use epimob::fof::{fit_fof, lag_slice, FofConfig};
use epimob::synth::{lag_ridge, make_fof_dataset, Beta0};

fn main() -> epimob::Result<()> {
    let basis = BSplineBasis::new((0.0, 60.0), 15, 4)?;
    let ridge = lag_ridge(13.0, 32.0);
    let data = make_fof_dataset(20, &basis, &Beta0::Fn(&ridge), 0.05, 4)?;

    let fit = fit_fof(&data.ys, &data.xs, &FofConfig::default())?;
    println!("R² {:.3}, lambda {:.3e}, effective df {:.1}", fit.r2, fit.lambda_s, fit.effective_df);

    let slice = lag_slice(&fit, 13.0, 0.95)?;
    for i in (0..slice.s.len()).step_by(6) {
        println!(
            "s = {:>4}  beta(s, s+13) = {:>7.3}  [{:>7.3}, {:>7.3}]  truth {:.3}",
            slice.s[i],
            slice.beta[i],
            slice.lower[i],
            slice.upper[i],
            ridge(slice.s[i], slice.s[i] + 13.0)
        );
    }
    for (lo, hi, sign) in &slice.significant {
        println!("significant {} on [{lo}, {hi}]", if *sign > 0 { "positive" } else { "negative" });
    }
    Ok(())
}
