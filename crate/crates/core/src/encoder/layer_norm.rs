//! Layer normalization of a single pre-activation vector.

/// Variance floor inside the square root. Small enough that normalized
/// outputs have unit variance to ~1e-12 for any non-degenerate input.
pub const LN_EPS: f64 = 1e-12;

/// Returns `(x̂, 1/σ)` with `x̂ = (a - mean) / sqrt(var + eps)`.
/// A constant input yields the zero vector.
pub fn normalize(a: &[f64]) -> (Vec<f64>, f64) {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    (a.iter().map(|v| (v - mean) * inv_std).collect(), inv_std)
}

/// Gradient w.r.t. the raw input given the gradient w.r.t. `x̂`.
pub fn normalize_backward(d_xhat: &[f64], xhat: &[f64], inv_std: f64) -> Vec<f64> {
    let n = xhat.len() as f64;
    let mean_d = d_xhat.iter().sum::<f64>() / n;
    let mean_dx = d_xhat.iter().zip(xhat).map(|(d, x)| d * x).sum::<f64>() / n;
    d_xhat
        .iter()
        .zip(xhat)
        .map(|(d, x)| inv_std * (d - mean_d - x * mean_dx))
        .collect()
}
