use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ArchConfig, NetError, Variant};
use crate::image::CHANNELS;
use crate::tensor::{Graph, Real, Tensor, Var};

/// Named parameter tensors plus the architecture they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub arch: ArchConfig,
    pub variant: Variant,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

fn conv_entry(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, cout: usize, cin: usize, k: usize) {
    out.push((format!("{prefix}.w"), vec![cout, cin, k, k]));
    out.push((format!("{prefix}.b"), vec![cout]));
}

/// Every parameter tensor of `(arch, variant)` in construction order.
pub fn layout(arch: &ArchConfig, variant: Variant) -> Vec<(String, Vec<usize>)> {
    let mut v = Vec::new();
    let (cd, cc, cf) = (arch.dme_channels, arch.cond_channels, arch.deblur_channels);

    conv_entry(&mut v, "dme.head", cd, CHANNELS, 3);
    for i in 0..arch.dme_blocks {
        conv_entry(&mut v, &format!("dme.block{i}.conv1"), cd, cd, 3);
        conv_entry(&mut v, &format!("dme.block{i}.conv2"), cd, cd, 3);
    }
    conv_entry(&mut v, "dme.tail", 1, cd, 3);

    if variant.is_modulated() {
        conv_entry(&mut v, "cond.conv1", cc, 1, 3);
        conv_entry(&mut v, "cond.conv2", cc, cc, 3);
        conv_entry(&mut v, "cond.conv3", cc, cc, 3);
    }

    conv_entry(&mut v, "deblur.head", cf, CHANNELS, 3);
    for i in 0..arch.deblur_blocks {
        let p = format!("deblur.block{i}");
        let extra = if variant.is_modulated() { 0 } else { 1 };
        conv_entry(&mut v, &format!("{p}.conv1"), cf, cf + extra, 3);
        conv_entry(&mut v, &format!("{p}.conv2"), cf, cf, 3);
        match variant {
            Variant::Baseline => {}
            Variant::Sft => {
                for head in ["gamma", "beta"] {
                    conv_entry(&mut v, &format!("{p}.sft.{head}.conv1"), cc, cc, 3);
                    conv_entry(&mut v, &format!("{p}.sft.{head}.conv2"), cf, cc, 3);
                }
            }
            Variant::SftDec | Variant::SftFdec => {
                conv_entry(&mut v, &format!("{p}.sft.gamma_c"), cf, cc, 1);
                conv_entry(&mut v, &format!("{p}.sft.gamma_s"), 1, 1, 3);
                if variant == Variant::SftDec {
                    conv_entry(&mut v, &format!("{p}.sft.beta.conv1"), cc, cc, 3);
                    conv_entry(&mut v, &format!("{p}.sft.beta.conv2"), cf, cc, 3);
                } else {
                    conv_entry(&mut v, &format!("{p}.sft.beta_c"), cf, cc, 1);
                    conv_entry(&mut v, &format!("{p}.sft.beta_s"), 1, 1, 3);
                }
            }
        }
    }
    conv_entry(&mut v, "deblur.tail", CHANNELS, cf, 3);
    v
}

impl<T: Real> ModelParams<T> {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(arch: ArchConfig, variant: Variant, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        let mut fan_in = 1;
        for (name, shape) in layout(&arch, variant) {
            if name.ends_with(".w") {
                fan_in = shape[1..].iter().product::<usize>();
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let t = Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..bound)));
            tensors.insert(name, t);
        }
        Self { arch, variant, tensors }
    }

    pub fn zeros(arch: ArchConfig, variant: Variant) -> Self {
        let tensors = layout(&arch, variant).into_iter().map(|(n, s)| (n, Tensor::zeros(s))).collect();
        Self { arch, variant, tensors }
    }

    /// Checks names, shapes and finiteness against the layout of `(arch, variant)`.
    pub fn validate(&self) -> Result<(), NetError> {
        let expected = layout(&self.arch, self.variant);
        for (name, shape) in &expected {
            let t = self.tensors.get(name).ok_or_else(|| NetError::MissingParam(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(NetError::ParamShape { name: name.clone(), expected: shape.clone(), found: t.shape().to_vec() });
            }
            if !t.is_finite() {
                return Err(NetError::NonFinite(name.clone()));
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.iter().any(|(n, _)| n == *k)) {
            return Err(NetError::MissingParam(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, NetError> {
        self.tensors.get(name).ok_or_else(|| NetError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, NetError> {
        self.tensors.get_mut(name).ok_or_else(|| NetError::MissingParam(name.to_string()))
    }

    /// Number of scalar parameters whose name starts with `prefix`.
    pub fn count(&self, prefix: &str) -> usize {
        self.tensors.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch,
            variant: self.variant,
            tensors: self.tensors.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
        }
    }

    /// Places every tensor on `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> BoundParams {
        let vars = self.tensors.iter().map(|(k, t)| (k.clone(), g.leaf(t.clone(), requires_grad))).collect();
        BoundParams { arch: self.arch, variant: self.variant, vars }
    }
}

/// Parameters placed on a graph, by name.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub arch: ArchConfig,
    pub variant: Variant,
    pub vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var, NetError> {
        self.vars.get(name).copied().ok_or_else(|| NetError::MissingParam(name.to_string()))
    }

    /// Builds a `BoundParams` from existing graph variables, e.g. the inputs of a gradient check.
    pub fn from_vars(arch: ArchConfig, variant: Variant, names: impl IntoIterator<Item = String>, vars: &[Var]) -> Self {
        Self { arch, variant, vars: names.into_iter().zip(vars.iter().copied()).collect() }
    }
}
