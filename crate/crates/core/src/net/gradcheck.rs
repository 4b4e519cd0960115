//! Central finite-difference verification of graph gradients.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::Result;

/// Gradients this small are compared absolutely rather than relatively.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, GRADIENT_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADIENT_FLOOR)
}

/// Largest relative error between analytic and central-difference gradients
/// of the scalar built by `f` from `inputs`, over every input coordinate.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    check_gradients_sampled(inputs, eps, usize::MAX, f)
}

/// As [`check_gradients`] but probing at most `per_input` evenly spaced
/// coordinates of each input.
pub fn check_gradients_sampled<F>(inputs: &[Tensor<f64>], eps: f64, per_input: usize, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok((g, vars, out))
    };
    let (mut g, vars, out) = eval(inputs)?;
    g.backward(out)?;
    let analytic: Vec<Tensor<f64>> =
        vars.iter().map(|&v| g.grad(v).unwrap_or_else(|| Tensor::zeros(g.shape(v)))).collect();
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (t, grad) in analytic.iter().enumerate() {
        let n = inputs[t].len();
        let step = n.div_ceil(per_input.min(n).max(1));
        for i in (0..n).step_by(step.max(1)) {
            let base = inputs[t].data[i];
            probe[t].data[i] = base + eps;
            let (g_plus, _, o) = eval(&probe)?;
            let plus = g_plus.value(o).data[0];
            probe[t].data[i] = base - eps;
            let (g_minus, _, o) = eval(&probe)?;
            let minus = g_minus.value(o).data[0];
            probe[t].data[i] = base;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data[i], numeric));
        }
    }
    Ok(worst)
}
