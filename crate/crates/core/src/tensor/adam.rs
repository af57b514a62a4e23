use std::collections::BTreeMap;

use super::scalar::Real;
use super::{Tensor, TensorError};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Optimizer state: step counter plus first/second moments keyed by parameter name.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, moments: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moments of `name`, if it has been updated.
    pub fn moments(&self, name: &str) -> Option<(&[T], &[T])> {
        self.moments.get(name).map(|m| (m.m.as_slice(), m.v.as_slice()))
    }

    /// One bias-corrected Adam update. Parameters without an entry in `grads`
    /// are updated with a zero gradient.
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor<T>>,
        grads: &BTreeMap<String, Tensor<T>>,
    ) -> Result<(), TensorError> {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bias1 = T::lit(1.0 - c.beta1.powi(t));
        let bias2 = T::lit(1.0 - c.beta2.powi(t));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.epsilon);
        for (name, param) in params.iter_mut() {
            let grad = grads.get(name);
            if let Some(g) = grad {
                if g.shape() != param.shape() {
                    return Err(TensorError::ShapeMismatch {
                        op: "adam_step",
                        lhs: param.shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    });
                }
            }
            let mom = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| Moments { m: vec![T::zero(); param.len()], v: vec![T::zero(); param.len()] });
            for i in 0..param.len() {
                let g = grad.map_or(T::zero(), |g| g.data()[i]);
                mom.m[i] = b1 * mom.m[i] + (T::one() - b1) * g;
                mom.v[i] = b2 * mom.v[i] + (T::one() - b2) * g * g;
                let m_hat = mom.m[i] / bias1;
                let v_hat = mom.v[i] / bias2;
                param.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> BTreeMap<String, Tensor<f64>> {
        BTreeMap::from([("p".to_string(), Tensor::scalar(v))])
    }

    /// Scalar Adam written out longhand.
    fn reference_trace(p0: f64, grads: &[f64], c: AdamConfig) -> Vec<f64> {
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        let mut out = vec![];
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let mh = m / (1.0 - c.beta1.powi(t));
            let vh = v / (1.0 - c.beta2.powi(t));
            p -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
            out.push(p);
        }
        out
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::<f64>::new(AdamConfig::default());
        let mut p = single(0.75);
        s.step(&mut p, &single(0.0)).unwrap();
        assert_eq!(p["p"].data()[0], 0.75);
        s.step(&mut p, &BTreeMap::new()).unwrap();
        assert_eq!(p["p"].data()[0], 0.75);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let c = AdamConfig::default();
        let mut s = AdamState::<f64>::new(c);
        let mut p = single(1.0);
        s.step(&mut p, &single(1.0)).unwrap();
        let moved = 1.0 - p["p"].data()[0];
        assert!((moved - c.learning_rate).abs() < 1e-11, "{moved}");
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn two_steps_match_scalar_trace() {
        let c = AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() };
        let grads = [0.3, -1.7];
        let expect = reference_trace(0.5, &grads, c);
        let mut s = AdamState::<f64>::new(c);
        let mut p = single(0.5);
        for (g, e) in grads.iter().zip(&expect) {
            s.step(&mut p, &single(*g)).unwrap();
            assert!((p["p"].data()[0] - e).abs() < 1e-10);
        }
        let (_, v) = s.moments("p").unwrap();
        assert!(v[0] >= 0.0);
    }

    #[test]
    fn rejects_mismatched_gradient() {
        let mut s = AdamState::<f64>::new(AdamConfig::default());
        let mut p = single(0.0);
        let g = BTreeMap::from([("p".to_string(), Tensor::zeros(vec![2]))]);
        assert!(s.step(&mut p, &g).is_err());
    }
}
