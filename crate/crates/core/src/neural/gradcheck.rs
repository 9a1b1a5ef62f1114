use serde::{Deserialize, Serialize};

use super::module::Module;
use super::Tensor;

/// Magnitude below which gradients are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

/// Compares `analytic` (a gradient laid out like `model`) with central
/// differences `(f(p + eps) - f(p - eps)) / 2 eps` taken at every scalar
/// parameter of `model`.
///
/// Relative error is `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn grad_check<M, F>(model: &M, analytic: &M, eps: f64, loss: F) -> GradCheckReport
where
    M: Module + Clone,
    F: Fn(&M) -> f64,
{
    let mut probe = model.clone();
    let grads: Vec<(String, Vec<f64>)> = analytic
        .params()
        .into_iter()
        .map(|(n, t)| (n, t.data.clone()))
        .collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: String::new(),
        checked: 0,
    };
    for (p, (name, g)) in grads.iter().enumerate() {
        for (i, &gi) in g.iter().enumerate() {
            let orig = probe.params_mut()[p].1.data[i];
            probe.params_mut()[p].1.data[i] = orig + eps;
            let up = loss(&probe);
            probe.params_mut()[p].1.data[i] = orig - eps;
            let down = loss(&probe);
            probe.params_mut()[p].1.data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let abs = (gi - numeric).abs();
            let rel = abs / gi.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = rel;
                report.worst_param = format!("{name}[{i}]");
            }
        }
    }
    report
}

/// A free-standing list of named tensors, used to check gradients with
/// respect to inputs rather than layer parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorSet(pub Vec<(String, Tensor)>);

impl Module for TensorSet {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.0.iter().map(|(n, t)| (n.clone(), t)).collect()
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.0.iter_mut().map(|(n, t)| (n.clone(), t)).collect()
    }
}
