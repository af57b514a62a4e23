use super::layers::{check_aligned, conditioned_resblock, conv, conv_act, plain_resblock};
use super::{BoundParams, ModelParams, NetError};
use crate::tensor::{Graph, Real, Tensor, Var};

/// Blurry image `N x 3 x H x W` to a nonnegative defocus map `N x 1 x H x W`.
pub fn dme_forward<T: Real>(g: &mut Graph<T>, bp: &BoundParams, blurry: Var) -> Result<Var, NetError> {
    let mut f = conv_act(g, bp, "dme.head", blurry)?;
    for i in 0..bp.arch.dme_blocks {
        f = plain_resblock(g, bp, &format!("dme.block{i}"), f)?;
    }
    let m = conv(g, bp, "dme.tail", f)?;
    Ok(g.softplus(m))
}

/// Defocus map `N x 1 x H x W` to condition features `N x Cc x H x W`.
///
/// The baseline variant has no condition network; its condition is the map itself.
pub fn condition_forward<T: Real>(g: &mut Graph<T>, bp: &BoundParams, map: Var) -> Result<Var, NetError> {
    if !bp.variant.is_modulated() {
        return Ok(map);
    }
    let h = conv_act(g, bp, "cond.conv1", map)?;
    let h = conv_act(g, bp, "cond.conv2", h)?;
    conv(g, bp, "cond.conv3", h)
}

/// Blurry image plus condition features to a deblurred image (before clamping).
pub fn deblur_forward<T: Real>(g: &mut Graph<T>, bp: &BoundParams, blurry: Var, cond: Var) -> Result<Var, NetError> {
    check_aligned(g, "deblurring input", blurry, cond)?;
    let mut f = conv_act(g, bp, "deblur.head", blurry)?;
    for i in 0..bp.arch.deblur_blocks {
        f = conditioned_resblock(g, bp, f, cond, i)?;
    }
    let residual = conv(g, bp, "deblur.tail", f)?;
    Ok(g.add(blurry, residual)?)
}

/// Which defocus map conditions the deblurring network.
#[derive(Clone, Copy, Debug)]
pub enum MapSource {
    Estimated,
    /// A ground-truth map already placed on the graph (no gradient reaches `dme.*`).
    GroundTruth(Var),
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// Output of the estimation network, when it was run.
    pub estimated_map: Option<Var>,
    pub map_used: Var,
    pub deblurred: Var,
}

pub fn full_forward<T: Real>(
    g: &mut Graph<T>,
    bp: &BoundParams,
    blurry: Var,
    source: MapSource,
) -> Result<ForwardOutput, NetError> {
    let (estimated_map, map_used) = match source {
        MapSource::Estimated => {
            let m = dme_forward(g, bp, blurry)?;
            (Some(m), m)
        }
        MapSource::GroundTruth(m) => {
            check_aligned(g, "ground-truth map", blurry, m)?;
            (None, m)
        }
    };
    let cond = condition_forward(g, bp, map_used)?;
    let deblurred = deblur_forward(g, bp, blurry, cond)?;
    Ok(ForwardOutput { estimated_map, map_used, deblurred })
}

impl<T: Real> ModelParams<T> {
    /// Inference with the estimated map: returns `(map, deblurred clamped to [0, 1])`.
    pub fn infer(&self, blurry: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), NetError> {
        let mut g = Graph::new();
        let bp = self.bind(&mut g, false);
        let x = g.constant(blurry.clone());
        let out = full_forward(&mut g, &bp, x, MapSource::Estimated)?;
        let map = g.value(out.map_used).clone();
        let deblurred = g.value(out.deblurred).map(|v| v.max(T::zero()).min(T::one()));
        Ok((map, deblurred))
    }
}
