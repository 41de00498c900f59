//! Central finite-difference checks for analytic gradients.

use crate::tensor::Tensor;
use crate::var::Var;

/// Worst disagreement found for one input tensor.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub input: usize,
    pub max_rel_error: f64,
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error with a floor on the denominator so that gradients that
/// are both essentially zero compare as equal.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the reverse-mode gradient of the scalar `f` with central
/// differences for every element of every input.
pub fn check_gradients(
    inputs: &[Tensor],
    f: impl Fn(&[Var]) -> Var,
    step: f64,
    floor: f64,
) -> Vec<GradCheckReport> {
    let vars: Vec<Var> = inputs.iter().cloned().map(Var::param).collect();
    let grads = f(&vars).backward();
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get_or_zeros(v)).collect();

    let eval = |which: usize, perturbed: Tensor| -> f64 {
        let vs: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| Var::constant(if i == which { perturbed.clone() } else { t.clone() }))
            .collect();
        f(&vs).item()
    };

    let mut reports = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        let mut report =
            GradCheckReport { input: i, max_rel_error: 0.0, worst_element: 0, analytic: 0.0, numeric: 0.0 };
        for e in 0..input.numel() {
            let mut plus = input.clone();
            plus.data_mut()[e] += step;
            let mut minus = input.clone();
            minus.data_mut()[e] -= step;
            let numeric = (eval(i, plus) - eval(i, minus)) / (2.0 * step);
            let a = analytic[i].data()[e];
            let err = relative_error(a, numeric, floor);
            if err > report.max_rel_error || e == 0 {
                report = GradCheckReport { input: i, max_rel_error: err, worst_element: e, analytic: a, numeric };
            }
        }
        reports.push(report);
    }
    reports
}
