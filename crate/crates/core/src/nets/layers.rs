use super::{BoundParams, NetError, Variant, LEAKY_SLOPE};
use crate::tensor::{Graph, Real, Tensor, Var};

/// Modulation parameters of one SFT layer: `SFT(F) = gamma * F + beta`.
#[derive(Clone, Copy, Debug)]
pub struct SftParams {
    pub gamma: Var,
    pub beta: Var,
}

/// `ln(1 + sqrt 2)`: shifts a sigmoid so that `sqrt2 * sigmoid(0 + shift) == 1`.
const FACTOR_SHIFT: f64 = 0.881_373_587_019_543;

pub(crate) fn conv<T: Real>(g: &mut Graph<T>, bp: &BoundParams, prefix: &str, x: Var) -> Result<Var, NetError> {
    let w = bp.var(&format!("{prefix}.w"))?;
    let b = bp.var(&format!("{prefix}.b"))?;
    Ok(g.conv2d(x, w, b)?)
}

pub(crate) fn conv_act<T: Real>(g: &mut Graph<T>, bp: &BoundParams, prefix: &str, x: Var) -> Result<Var, NetError> {
    let y = conv(g, bp, prefix, x)?;
    Ok(g.leaky_relu(y, LEAKY_SLOPE))
}

pub(crate) fn spatial_dims<T: Real>(g: &Graph<T>, v: Var) -> Result<(usize, usize, usize), NetError> {
    let (n, _, h, w) = g.value(v).dims4()?;
    Ok((n, h, w))
}

pub(crate) fn check_aligned<T: Real>(g: &Graph<T>, what: &'static str, a: Var, b: Var) -> Result<(), NetError> {
    if spatial_dims(g, a)? != spatial_dims(g, b)? {
        return Err(NetError::Misaligned { what, lhs: g.shape(a).to_vec(), rhs: g.shape(b).to_vec() });
    }
    Ok(())
}

/// `gamma * f + beta` with broadcasting.
pub fn sft_apply<T: Real>(g: &mut Graph<T>, f: Var, p: &SftParams) -> Result<Var, NetError> {
    let scaled = g.mul(p.gamma, f)?;
    Ok(g.add(scaled, p.beta)?)
}

/// `2 * sigmoid(x)`: range `(0, 2)`, equal to 1 at `x = 0`.
fn gamma_activation<T: Real>(g: &mut Graph<T>, x: Var) -> Var {
    let s = g.sigmoid(x);
    g.scale(s, 2.0)
}

/// `sqrt2 * sigmoid(x + ln(1 + sqrt2))`: range `(0, sqrt2)`, equal to 1 at `x = 0`.
/// The product of a channel and a spatial factor stays in `(0, 2)`.
fn gamma_factor_activation<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var, NetError> {
    let shift = g.constant(Tensor::scalar(T::lit(FACTOR_SHIFT)));
    let shifted = g.add(x, shift)?;
    let s = g.sigmoid(shifted);
    Ok(g.scale(s, std::f64::consts::SQRT_2))
}

/// Two 3x3 convolutions with a leaky ReLU between them.
fn two_conv_head<T: Real>(g: &mut Graph<T>, bp: &BoundParams, prefix: &str, cond: Var) -> Result<Var, NetError> {
    let h = conv_act(g, bp, &format!("{prefix}.conv1"), cond)?;
    conv(g, bp, &format!("{prefix}.conv2"), h)
}

/// Modulation parameters of block `block` generated from the condition features.
pub fn generate_sft_params<T: Real>(
    g: &mut Graph<T>,
    bp: &BoundParams,
    cond: Var,
    block: usize,
) -> Result<SftParams, NetError> {
    let p = format!("deblur.block{block}.sft");
    match bp.variant {
        Variant::Baseline => Err(NetError::NoModulation(bp.variant)),
        Variant::Sft => {
            let gh = two_conv_head(g, bp, &format!("{p}.gamma"), cond)?;
            let gamma = gamma_activation(g, gh);
            let beta = two_conv_head(g, bp, &format!("{p}.beta"), cond)?;
            Ok(SftParams { gamma, beta })
        }
        Variant::SftDec | Variant::SftFdec => {
            // channel branch: C x 1 x 1; spatial branch: 1 x H x W
            let pooled = g.global_avg_pool_spatial(cond)?;
            let squeezed = g.mean_over_channels(cond)?;
            let gc = conv(g, bp, &format!("{p}.gamma_c"), pooled)?;
            let gc = gamma_factor_activation(g, gc)?;
            let gs = conv(g, bp, &format!("{p}.gamma_s"), squeezed)?;
            let gs = gamma_factor_activation(g, gs)?;
            let gamma = g.mul(gc, gs)?;
            let beta = if bp.variant == Variant::SftDec {
                two_conv_head(g, bp, &format!("{p}.beta"), cond)?
            } else {
                let bc = conv(g, bp, &format!("{p}.beta_c"), pooled)?;
                let bs = conv(g, bp, &format!("{p}.beta_s"), squeezed)?;
                g.mul(bc, bs)?
            };
            Ok(SftParams { gamma, beta })
        }
    }
}

/// `f + conv2(act(conv1(f)))`.
pub fn plain_resblock<T: Real>(g: &mut Graph<T>, bp: &BoundParams, prefix: &str, f: Var) -> Result<Var, NetError> {
    let h = conv_act(g, bp, &format!("{prefix}.conv1"), f)?;
    let r = conv(g, bp, &format!("{prefix}.conv2"), h)?;
    Ok(g.add(f, r)?)
}

/// Residual block of the deblurring network. Modulated variants apply one SFT
/// before the first convolution; the baseline concatenates `cond` onto the
/// block input instead. The skip path always carries the unmodulated `f`.
pub fn conditioned_resblock<T: Real>(
    g: &mut Graph<T>,
    bp: &BoundParams,
    f: Var,
    cond: Var,
    block: usize,
) -> Result<Var, NetError> {
    check_aligned(g, "conditioned res-block", f, cond)?;
    let prefix = format!("deblur.block{block}");
    let input = if bp.variant.is_modulated() {
        let sp = generate_sft_params(g, bp, cond, block)?;
        sft_apply(g, f, &sp)?
    } else {
        g.concat_channels(f, cond)?
    };
    let h = conv_act(g, bp, &format!("{prefix}.conv1"), input)?;
    let r = conv(g, bp, &format!("{prefix}.conv2"), h)?;
    Ok(g.add(f, r)?)
}
