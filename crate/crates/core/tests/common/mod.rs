//! Shared oracles and config builders for the integration suites.
//! Everything here is independent of the implementation paths it checks.

/// Separation of variables for the cubic `Y' = Y - Y³`:
/// `Y(τ, ξ) = ξ / sqrt(ξ² + (1 - ξ²) e^{-2τ})`.
pub fn cubic_closed_form(tau: f64, xi: f64) -> f64 {
    xi / (xi * xi + (1.0 - xi * xi) * (-2.0 * tau).exp()).sqrt()
}

/// Standard bump `a(x) = exp(-1/(1-x²))` on `|x| < 1`.
pub fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// Mean and unbiased variance.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn print_line(criterion: usize, pass: bool, detail: &str) {
    println!(
        "acceptance criterion {criterion:>2}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}
