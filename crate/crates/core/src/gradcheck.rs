//! Central finite-difference checks for hand-written gradients.

use crate::optim::Parameters;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `tensor[index]` where the worst error occurred.
    pub worst: String,
    pub checked: usize,
}

/// Relative error with a denominator floor, so entries where both
/// gradients are essentially zero do not divide by zero.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against the fourth-order central difference
/// `(8[L(p+h) - L(p-h)] - [L(p+2h) - L(p-2h)]) / 12h` for every scalar of
/// every tensor of `params`.
pub fn check<P, F>(params: &P, analytic: &P, loss: F, step: f64, floor: f64) -> GradCheckReport
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let names: Vec<String> = params.tensors().iter().map(|t| t.name.clone()).collect();
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data.to_vec()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut probe = params.clone();
    for (ti, name) in names.iter().enumerate() {
        for i in 0..grads[ti].len() {
            let orig = probe.tensors_mut()[ti][i];
            let mut at = |delta: f64| {
                probe.tensors_mut()[ti][i] = orig + delta;
                loss(&probe)
            };
            let near = at(step) - at(-step);
            let far = at(2.0 * step) - at(-2.0 * step);
            probe.tensors_mut()[ti][i] = orig;
            let numeric = (8.0 * near - far) / (12.0 * step);
            let err = rel_error(grads[ti][i], numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = format!(
                        "{name}[{i}] analytic={:.6e} numeric={numeric:.6e}",
                        grads[ti][i]
                    );
                }
            }
        }
    }
    report
}
