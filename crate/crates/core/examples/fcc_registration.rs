//! Leading covariance mode of paired curve sets, then shift registration.

use epimob::fda::{first_fcc, register_to_fcc, BSplineBasis, SmoothedCurve};

fn bump(id: &str, basis: &BSplineBasis, center: f64, width: f64, floor: f64) -> SmoothedCurve {
    let n = basis.n_basis();
    let (a, b) = basis.domain();
    let coefs = (0..n)
        .map(|k| {
            let x = a + (b - a) * k as f64 / (n - 1) as f64;
            floor + (-((x - center) / width).powi(2)).exp()
        })
        .collect();
    SmoothedCurve::new(id, basis.clone(), coefs).unwrap()
}

fn main() -> epimob::Result<()> {
    let basis = BSplineBasis::new((0.0, 150.0), 30, 4)?;
    let shifts = [-6.0, -3.0, 0.0, 2.0, 5.0, 8.0];
    let (mut rs, mut ms) = (Vec::new(), Vec::new());
    for (i, s) in shifts.iter().enumerate() {
        let id = format!("unit{i}");
        let height = 1.0 + 0.1 * i as f64;
        rs.push(bump(&id, &basis, 60.0 + s, 15.0, 0.5 * height));
        ms.push(bump(&id, &basis, 47.0 + s, 12.0, 0.4 / height));
    }

    let fcc = first_fcc(&rs, &ms)?;
    println!("first component explains {:.1}% (covariance {:.4})", 100.0 * fcc.explained, fcc.covariance);
    for (id, (a, b)) in fcc.unit_ids.iter().zip(fcc.scores_r.iter().zip(&fcc.scores_m)) {
        println!("{id:>12}  score R {a:>8.4}  score M {b:>8.4}");
    }

    let reg = register_to_fcc(&rs, &ms, &fcc, 20.0)?;
    println!("common domain after registration: {:?}", reg.common_domain);
    for (id, s) in reg.unit_ids.iter().zip(&reg.shifts) {
        println!("{id:>12}  shift {s:>5.1}");
    }
    Ok(())
}
