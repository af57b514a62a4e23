use super::TrainError;
use crate::tensor::{Graph, Real, Tensor, TensorError, Var};

fn same_shape<T: Real>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
    if g.shape(a) != g.shape(b) {
        return Err(TensorError::ShapeMismatch { op, lhs: g.shape(a).to_vec(), rhs: g.shape(b).to_vec() });
    }
    Ok(())
}

fn mean_abs_diff<T: Real>(g: &mut Graph<T>, op: &'static str, a: Var, b: Var) -> Result<Var, TensorError> {
    same_shape(g, op, a, b)?;
    let d = g.sub(a, b)?;
    let d = g.abs(d);
    Ok(g.mean(d))
}

/// Mean absolute error between the estimated and ground-truth defocus maps.
pub fn loss_dme<T: Real>(g: &mut Graph<T>, dm_e: Var, dm_gt: Var) -> Result<Var, TensorError> {
    mean_abs_diff(g, "loss_dme", dm_e, dm_gt)
}

/// Mean absolute error between the deblurred and sharp images.
pub fn loss_df<T: Real>(g: &mut Graph<T>, i_df: Var, i_gt: Var) -> Result<Var, TensorError> {
    mean_abs_diff(g, "loss_df", i_df, i_gt)
}

/// Per-sample `dm / mean(dm)` over each `1 x H x W` map.
pub fn weight_map<T: Real>(dm_gt: &Tensor<T>) -> Result<Tensor<T>, TrainError> {
    let (n, c, h, w) = dm_gt.dims4()?;
    if c != 1 {
        return Err(TensorError::InvalidShape(dm_gt.shape().to_vec()).into());
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(dm_gt.len());
    for (sample, plane) in dm_gt.data().chunks(hw).enumerate().take(n) {
        let mean = plane.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64;
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(TrainError::DegenerateMap { sample });
        }
        out.extend(plane.iter().map(|&v| T::lit(v.as_f64() / mean)));
    }
    Ok(Tensor::new(dm_gt.shape().to_vec(), out)?)
}

/// Mean of `(W * (i_df - i_gt))^2`, with `W` from [`weight_map`] broadcast over colour channels.
pub fn loss_wd<T: Real>(g: &mut Graph<T>, i_df: Var, i_gt: Var, dm_gt: &Tensor<T>) -> Result<Var, TrainError> {
    same_shape(g, "loss_wd", i_df, i_gt)?;
    let (n, _, h, w) = g.value(i_df).dims4()?;
    let (mn, _, mh, mw) = dm_gt.dims4()?;
    if (n, h, w) != (mn, mh, mw) {
        return Err(
            TensorError::ShapeMismatch { op: "loss_wd", lhs: g.shape(i_df).to_vec(), rhs: dm_gt.shape().to_vec() }.into()
        );
    }
    let weights = g.constant(weight_map(dm_gt)?);
    let d = g.sub(i_df, i_gt)?;
    let wd = g.mul(d, weights)?;
    let sq = g.square(wd);
    Ok(g.mean(sq))
}

/// `a * x + b * y`.
pub fn weighted_sum<T: Real>(g: &mut Graph<T>, a: f64, x: Var, b: f64, y: Var) -> Result<Var, TensorError> {
    let sx = g.scale(x, a);
    let sy = g.scale(y, b);
    g.add(sx, sy)
}

/// `lambda1 * l_dme + lambda2 * l_df`.
pub fn composite_loss_stage12<T: Real>(
    g: &mut Graph<T>,
    lambda1: f64,
    lambda2: f64,
    l_dme: Var,
    l_df: Var,
) -> Result<Var, TensorError> {
    weighted_sum(g, lambda1, l_dme, lambda2, l_df)
}

/// `lambda2 * l_df + lambda3 * l_wd`.
pub fn composite_loss_stage3<T: Real>(
    g: &mut Graph<T>,
    lambda2: f64,
    lambda3: f64,
    l_df: Var,
    l_wd: Var,
) -> Result<Var, TensorError> {
    weighted_sum(g, lambda2, l_df, lambda3, l_wd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v).data()[0]
    }

    #[test]
    fn constant_offset_and_uniform_difference() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_fn(vec![2, 1, 3, 3], |i| i as f64 * 0.1));
        let b = g.constant(g.value(a).map(|v| v + 0.5));
        let l = loss_dme(&mut g, b, a).unwrap();
        assert!((scalar(&g, l) - 0.5).abs() < 1e-12);
        let l0 = loss_dme(&mut g, a, a).unwrap();
        assert_eq!(scalar(&g, l0), 0.0);

        let x = g.constant(Tensor::full(vec![1, 3, 2, 2], 0.3));
        let y = g.constant(Tensor::full(vec![1, 3, 2, 2], 0.4));
        let l = loss_df(&mut g, x, y).unwrap();
        assert!((scalar(&g, l) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(vec![1, 1, 2, 2]));
        let b = g.constant(Tensor::zeros(vec![1, 1, 2, 3]));
        assert!(loss_dme(&mut g, a, b).is_err());
        assert!(loss_df(&mut g, a, b).is_err());
    }

    #[test]
    fn weight_map_examples() {
        let w = weight_map(&Tensor::full(vec![2, 1, 3, 2], 1.7f64)).unwrap();
        assert!(w.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let w = weight_map(&Tensor::new(vec![1, 1, 1, 2], vec![1.0f64, 3.0]).unwrap()).unwrap();
        assert_eq!(w.data(), &[0.5, 1.5]);
        let mut m = Tensor::full(vec![2, 1, 2, 2], 1.0f64);
        m.data_mut()[4..].iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(weight_map(&m), Err(TrainError::DegenerateMap { sample: 1 })));
    }

    #[test]
    fn constant_map_reduces_weighted_loss_to_mse() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![1, 3, 4, 4], 0.2));
        let y = g.constant(Tensor::full(vec![1, 3, 4, 4], 0.5));
        let l = loss_wd(&mut g, x, y, &Tensor::full(vec![1, 1, 4, 4], 2.0)).unwrap();
        assert!((scalar(&g, l) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn composite_examples() {
        let mut g = Graph::new();
        let one = g.constant(Tensor::scalar(1.0));
        let l1 = composite_loss_stage12(&mut g, 0.2, 0.9, one, one).unwrap();
        assert!((scalar(&g, l1) - 1.1).abs() < 1e-12);
        let l2 = composite_loss_stage3(&mut g, 0.9, 0.1, one, one).unwrap();
        assert!((scalar(&g, l2) - 1.0).abs() < 1e-12);
    }
}
