//! Central finite-difference checks of analytic gradients.
//!
//! The numeric side only ever calls the model's loss, never its backward
//! pass, so it stays independent of the code it checks.

use serde::{Deserialize, Serialize};

use crate::params::Parameters;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Denominator floor for the relative error, so entries whose true
/// gradient is zero are judged on absolute error instead.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            x[i] = point[i] + step;
            let plus = f(&x);
            x[i] = point[i] - step;
            let minus = f(&x);
            x[i] = point[i];
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

impl TensorCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// Compares `analytic` against central differences of `loss` around
/// `params`, tensor by tensor.
pub fn check_parameters<P, L>(params: &P, analytic: &P, mut loss: L, step: f64) -> Vec<TensorCheck>
where
    P: Parameters,
    L: FnMut(&P) -> f64,
{
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.as_slice().to_vec())
        .collect();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(names.len());
    for (ti, name) in names.into_iter().enumerate() {
        let n = grads[ti].len();
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for e in 0..n {
            let orig = probe.tensors_mut()[ti].as_slice()[e];
            probe.tensors_mut()[ti].as_mut_slice()[e] = orig + step;
            let plus = loss(&probe);
            probe.tensors_mut()[ti].as_mut_slice()[e] = orig - step;
            let minus = loss(&probe);
            probe.tensors_mut()[ti].as_mut_slice()[e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = grads[ti][e];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        out.push(TensorCheck {
            name,
            entries: n,
            max_relative_error: max_rel,
            max_absolute_error: max_abs,
        });
    }
    out
}
