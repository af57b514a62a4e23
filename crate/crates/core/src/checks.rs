//! The registered finite-difference gradient suite: every graph primitive,
//! the training losses and each sub-network, on small random shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nets::{
    condition_forward, conditioned_resblock, dme_forward, full_forward, ArchConfig, BoundParams, MapSource,
    ModelParams, NetError, Variant,
};
use crate::tensor::gradcheck::{gradient_check, Differentiable, GradCheckReport, GraphFn};
use crate::tensor::{Activation, Graph, Tensor, TensorError, Var};
use crate::train::{loss_df, loss_dme, loss_wd, TrainError};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub report: GradCheckReport,
}

type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>>;

struct Case {
    name: String,
    inputs: Vec<Tensor<f64>>,
    build: Build,
}

/// Adds a fixed error to the first gradient coordinate of the wrapped function.
struct Corrupted<'a>(&'a dyn Differentiable);

impl Differentiable for Corrupted<'_> {
    fn eval(&self, inputs: &[Tensor<f64>]) -> Result<f64, TensorError> {
        self.0.eval(inputs)
    }

    fn gradient(&self, inputs: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>, TensorError> {
        let mut g = self.0.gradient(inputs)?;
        let v = &mut g[0].data_mut()[0];
        *v += 0.1 + 0.5 * v.abs();
        Ok(g)
    }
}

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn positive(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(0.2..2.0))
}

/// `sum(out * r)` for a fixed random `r`, so every output element matters.
fn project(g: &mut Graph<f64>, out: Var, r: &Tensor<f64>) -> Result<Var, TensorError> {
    let rv = g.constant(r.clone());
    let p = g.mul(out, rv)?;
    Ok(g.sum(p))
}

fn net_err(e: NetError) -> TensorError {
    match e {
        NetError::Tensor(t) => t,
        other => TensorError::Composite(other.to_string()),
    }
}

fn train_err(e: TrainError) -> TensorError {
    match e {
        TrainError::Tensor(t) => t,
        other => TensorError::Composite(other.to_string()),
    }
}

fn dims4(rng: &mut ChaCha8Rng, c: usize) -> Vec<usize> {
    vec![rng.gen_range(1..=2), c, rng.gen_range(2..=8), rng.gen_range(2..=8)]
}

fn unary(name: &str, rng: &mut ChaCha8Rng, f: fn(&mut Graph<f64>, Var) -> Result<Var, TensorError>) -> Case {
    let c = rng.gen_range(1..=3);
    let shape = dims4(rng, c);
    let r = random(rng, shape.clone());
    Case {
        name: name.to_string(),
        inputs: vec![random(rng, shape)],
        build: Box::new(move |g, v| {
            let y = f(g, v[0])?;
            project(g, y, &r)
        }),
    }
}

fn binary(
    name: &str,
    rng: &mut ChaCha8Rng,
    broadcast: bool,
    f: fn(&mut Graph<f64>, Var, Var) -> Result<Var, TensorError>,
) -> Case {
    let c = rng.gen_range(1..=3);
    let a = dims4(rng, c);
    // the right operand broadcasts over batch and space
    let b = if broadcast { vec![1, c, 1, 1] } else { a.clone() };
    let r = random(rng, a.clone());
    Case {
        name: name.to_string(),
        inputs: vec![random(rng, a), random(rng, b)],
        build: Box::new(move |g, v| {
            let y = f(g, v[0], v[1])?;
            project(g, y, &r)
        }),
    }
}

fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut cases = Vec::new();
    for k in [1, 3] {
        let (n, cin, cout) = (rng.gen_range(1..=2), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let (h, w) = (rng.gen_range(3..=8), rng.gen_range(3..=8));
        let r = random(rng, vec![n, cout, h, w]);
        cases.push(Case {
            name: format!("conv2d_{k}x{k}"),
            inputs: vec![random(rng, vec![n, cin, h, w]), random(rng, vec![cout, cin, k, k]), random(rng, vec![cout])],
            build: Box::new(move |g, v| {
                let y = g.conv2d(v[0], v[1], v[2])?;
                project(g, y, &r)
            }),
        });
    }
    cases.push(unary("relu", rng, |g, x| Ok(g.activation(x, Activation::Relu))));
    cases.push(unary("leaky_relu", rng, |g, x| Ok(g.activation(x, Activation::LeakyRelu(0.1)))));
    cases.push(unary("sigmoid", rng, |g, x| Ok(g.activation(x, Activation::Sigmoid))));
    cases.push(unary("softplus", rng, |g, x| Ok(g.activation(x, Activation::Softplus))));
    cases.push(unary("scale", rng, |g, x| Ok(g.scale(x, -1.7))));
    cases.push(unary("abs", rng, |g, x| Ok(g.abs(x))));
    cases.push(unary("square", rng, |g, x| Ok(g.square(x))));
    cases.push(unary("sum", rng, |g, x| {
        let s = g.sum(x);
        Ok(g.square(s))
    }));
    cases.push(unary("mean", rng, |g, x| {
        let s = g.mean(x);
        Ok(g.square(s))
    }));
    cases.push(unary("global_avg_pool_spatial", rng, |g, x| g.global_avg_pool_spatial(x)));
    cases.push(unary("mean_over_channels", rng, |g, x| g.mean_over_channels(x)));
    cases.push(binary("add", rng, false, |g, a, b| g.add(a, b)));
    cases.push(binary("add_broadcast", rng, true, |g, a, b| g.add(a, b)));
    cases.push(binary("sub", rng, false, |g, a, b| g.sub(a, b)));
    cases.push(binary("sub_broadcast", rng, true, |g, a, b| g.sub(a, b)));
    cases.push(binary("mul", rng, false, |g, a, b| g.mul(a, b)));
    cases.push(binary("mul_broadcast", rng, true, |g, a, b| g.mul(a, b)));
    {
        let (n, h, w) = (rng.gen_range(1..=2), rng.gen_range(2..=8), rng.gen_range(2..=8));
        let (ca, cb) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let r = random(rng, vec![n, ca + cb, h, w]);
        cases.push(Case {
            name: "concat_channels".into(),
            inputs: vec![random(rng, vec![n, ca, h, w]), random(rng, vec![n, cb, h, w])],
            build: Box::new(move |g, v| {
                let y = g.concat_channels(v[0], v[1])?;
                project(g, y, &r)
            }),
        });
    }
    cases
}

fn loss_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let map = dims4(rng, 1);
    let img = vec![map[0], 3, map[2], map[3]];
    let dm_gt = positive(rng, map.clone());
    vec![
        Case {
            name: "loss_dme".into(),
            inputs: vec![random(rng, map.clone()), random(rng, map)],
            build: Box::new(|g, v| loss_dme(g, v[0], v[1])),
        },
        Case {
            name: "loss_df".into(),
            inputs: vec![random(rng, img.clone()), random(rng, img.clone())],
            build: Box::new(|g, v| loss_df(g, v[0], v[1])),
        },
        Case {
            name: "loss_wd".into(),
            inputs: vec![random(rng, img.clone()), random(rng, img)],
            build: Box::new(move |g, v| loss_wd(g, v[0], v[1], &dm_gt).map_err(train_err)),
        },
    ]
}

/// Parameters of a tiny model whose names start with one of `prefixes`.
fn subset(params: &ModelParams<f64>, prefixes: &[String]) -> (Vec<String>, Vec<Tensor<f64>>) {
    params.tensors.iter().filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p.as_str()))).map(|(k, t)| (k.clone(), t.clone())).unzip()
}

/// Sub-network case: the named parameters plus extra input tensors, all differentiated.
fn net_case(
    name: String,
    params: &ModelParams<f64>,
    prefixes: &[String],
    extra: Vec<Tensor<f64>>,
    out_shape: Vec<usize>,
    rng: &mut ChaCha8Rng,
    body: impl Fn(&mut Graph<f64>, &BoundParams, &[Var]) -> Result<Var, NetError> + 'static,
) -> Case {
    let (names, mut inputs) = subset(params, prefixes);
    let np = names.len();
    inputs.extend(extra);
    let (arch, variant) = (params.arch, params.variant);
    let r = random(rng, out_shape);
    Case {
        name,
        inputs,
        build: Box::new(move |g, v| {
            let bp = BoundParams::from_vars(arch, variant, names.clone(), &v[..np]);
            let y = body(g, &bp, &v[np..]).map_err(net_err)?;
            project(g, y, &r)
        }),
    }
}

fn network_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let arch = ArchConfig::tiny();
    let mut cases = Vec::new();
    let (h, w) = (rng.gen_range(3..=5), rng.gen_range(3..=5));
    let img = vec![1, 3, h, w];
    let map = vec![1, 1, h, w];

    let p = ModelParams::<f64>::init(arch, Variant::SftDec, rng.gen());
    cases.push(net_case("net_dme".into(), &p, &["dme.".into()], vec![random(rng, img.clone())], map.clone(), rng, |g, bp, x| {
        dme_forward(g, bp, x[0])
    }));
    cases.push(net_case(
        "net_condition".into(),
        &p,
        &["cond.".into()],
        vec![positive(rng, map.clone())],
        vec![1, arch.cond_channels, h, w],
        rng,
        |g, bp, x| condition_forward(g, bp, x[0]),
    ));

    for variant in Variant::ALL {
        let p = ModelParams::<f64>::init(arch, variant, rng.gen());
        let cond_c = if variant.is_modulated() { arch.cond_channels } else { 1 };
        let feats = vec![1, arch.deblur_channels, h, w];
        cases.push(net_case(
            format!("net_resblock_{variant}"),
            &p,
            &["deblur.block0.".into()],
            vec![random(rng, feats.clone()), random(rng, vec![1, cond_c, h, w])],
            feats,
            rng,
            |g, bp, x| conditioned_resblock(g, bp, x[0], x[1], 0),
        ));
        cases.push(net_case(
            format!("net_deblur_path_{variant}"),
            &p,
            &["cond.".into(), "deblur.".into()],
            vec![random(rng, img.clone()), positive(rng, map.clone())],
            img.clone(),
            rng,
            |g, bp, x| Ok(full_forward(g, bp, x[0], MapSource::GroundTruth(x[1]))?.deblurred),
        ));
    }
    let p = ModelParams::<f64>::init(arch, Variant::SftDec, rng.gen());
    cases.push(net_case(
        "net_full_estimated".into(),
        &p,
        &[String::new()],
        vec![random(rng, img.clone())],
        img,
        rng,
        |g, bp, x| Ok(full_forward(g, bp, x[0], MapSource::Estimated)?.deblurred),
    ));
    cases
}

fn registry(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = primitive_cases(&mut rng);
    cases.extend(loss_cases(&mut rng));
    cases.extend(network_cases(&mut rng));
    cases
}

/// Names of every registered check, in run order.
pub fn registered_checks() -> Vec<String> {
    registry(0).into_iter().map(|c| c.name).collect()
}

/// Runs every registered check. `corrupt` names a check whose analytic
/// gradient is deliberately perturbed, to exercise the harness itself.
pub fn run_gradient_suite(seed: u64, corrupt: Option<&str>) -> Result<Vec<CheckOutcome>, TensorError> {
    registry(seed)
        .into_iter()
        .map(|case| {
            let f = GraphFn(case.build);
            let report = if corrupt == Some(case.name.as_str()) {
                gradient_check(&Corrupted(&f), &case.inputs)?
            } else {
                gradient_check(&f, &case.inputs)?
            };
            Ok(CheckOutcome { name: case.name, report })
        })
        .collect()
}
