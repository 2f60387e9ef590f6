//! R-linear rate fitting on synthetic and algorithmic error sequences.
use relocsplit::diagnostics::fit_linear_rate;

fn main() -> relocsplit::Result<()> {
    let geometric: Vec<f64> = (0..80).map(|n| 3.0 * 0.7f64.powi(n) * (1.0 + 0.2 * (n as f64).sin())).collect();
    let sublinear: Vec<f64> = (0..80).map(|n| 1.0 / (n as f64 + 1.0).powi(2)).collect();
    let fast: Vec<f64> = (0..80).map(|n| 0.1f64.powi(n)).collect();
    for (name, errs) in [("geometric", &geometric), ("sublinear", &sublinear), ("fast", &fast)] {
        match fit_linear_rate(errs, None) {
            Ok(f) => println!("{name:<10} C={:.4} r={:.4} R^2={:.4} slope ratio={:.3} [{}]", f.c, f.r, f.fit_quality, f.slope_ratio, f.label()),
            Err(e) => println!("{name:<10} {e}"),
        }
    }
    Ok(())
}
