//! Central finite-difference verification of analytic gradients (64-bit).

use super::graph::{Graph, Var};
use super::{Tensor, TensorError};

/// Perturbation used for central differences.
pub const STEP: f64 = 1e-6;

/// Default acceptance threshold on the relative error.
pub const TOLERANCE: f64 = 1e-4;

/// A scalar function of several tensors together with its claimed gradient.
pub trait Differentiable {
    fn eval(&self, inputs: &[Tensor<f64>]) -> Result<f64, TensorError>;
    fn gradient(&self, inputs: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>, TensorError>;
}

/// Adapts a graph-building closure: gradients come from [`Graph::backward`].
pub struct GraphFn<F>(pub F);

impl<F> GraphFn<F>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    fn build(&self, inputs: &[Tensor<f64>], track: bool) -> Result<(Graph<f64>, Vec<Var>, Var), TensorError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), track)).collect();
        let out = (self.0)(&mut g, &vars)?;
        Ok((g, vars, out))
    }
}

impl<F> Differentiable for GraphFn<F>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    fn eval(&self, inputs: &[Tensor<f64>]) -> Result<f64, TensorError> {
        let (g, _, out) = self.build(inputs, false)?;
        let v = g.value(out);
        if v.len() != 1 {
            return Err(TensorError::NonScalarLoss(v.shape().to_vec()));
        }
        Ok(v.data()[0])
    }

    fn gradient(&self, inputs: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>, TensorError> {
        let (g, vars, out) = self.build(inputs, true)?;
        let grads = g.backward(out)?;
        Ok(vars.iter().map(|&v| grads.get(v)).collect())
    }
}

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` where the maximum occurred.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < tolerance
    }
}

/// Compares `f.gradient` against central differences over every input coordinate.
pub fn gradient_check(f: &dyn Differentiable, inputs: &[Tensor<f64>]) -> Result<GradCheckReport, TensorError> {
    let analytic = f.gradient(inputs)?;
    let mut probe = inputs.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), coordinates: 0 };
    for (ti, grad) in analytic.iter().enumerate() {
        for k in 0..inputs[ti].len() {
            let x0 = inputs[ti].data()[k];
            probe[ti].data_mut()[k] = x0 + STEP;
            let plus = f.eval(&probe)?;
            probe[ti].data_mut()[k] = x0 - STEP;
            let minus = f.eval(&probe)?;
            probe[ti].data_mut()[k] = x0;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = grad.data()[k];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if !(err <= report.max_rel_error) {
                report.max_rel_error = err;
                report.worst = (ti, k);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}
