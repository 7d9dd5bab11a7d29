//! Gauss–Legendre rules for exact integration of piecewise polynomials.

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[-1, 1]`.
/// Exact for polynomials of degree `2m - 1`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Chebyshev initial guess, refined by Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_m(x), P_m'(x))`.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature nodes and weights over `[lo, hi]`: an `m`-point rule on every
/// piece between consecutive `breaks` that fall inside the interval.
pub fn piecewise_rule(breaks: &[f64], lo: f64, hi: f64, m: usize) -> Vec<(f64, f64)> {
    if !(hi > lo) {
        return Vec::new();
    }
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let (nodes, weights) = gauss_legendre(m);
    let mut rule = Vec::with_capacity((pts.len() - 1) * m);
    for w in pts.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let mid = 0.5 * (w[0] + w[1]);
        rule.extend(nodes.iter().zip(&weights).map(|(x, wt)| (mid + half * x, half * wt)));
    }
    rule
}

/// Integrates `f` over `[lo, hi]` with [`piecewise_rule`].
pub fn integrate_piecewise<F: FnMut(f64) -> f64>(
    breaks: &[f64],
    lo: f64,
    hi: f64,
    m: usize,
    mut f: F,
) -> f64 {
    piecewise_rule(breaks, lo, hi, m).into_iter().map(|(t, w)| w * f(t)).sum()
}
