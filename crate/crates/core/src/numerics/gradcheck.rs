//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates the forward computation, so it is
//! independent of the reverse sweep it checks.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Step used for central differences.
pub const STEP: f64 = 1e-5;

/// Gradients whose magnitude is below this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences with respect to every entry of every input.
///
/// `stride` > 1 checks only every `stride`-th entry of each input.
pub fn check<F>(inputs: &[Tensor], stride: usize, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_input: 0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        for idx in (0..input.numel()).step_by(stride.max(1)) {
            let orig = input.data()[idx];
            work[which].data_mut()[idx] = orig + STEP;
            let plus = eval(&work)?;
            work[which].data_mut()[idx] = orig - STEP;
            let minus = eval(&work)?;
            work[which].data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[which].data()[idx];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report = GradCheckReport {
                    max_rel_err: err,
                    worst_input: which,
                    worst_index: idx,
                    analytic: a,
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}
