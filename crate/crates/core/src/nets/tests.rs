use super::*;
use crate::tensor::gradcheck::{gradient_check, GraphFn, TOLERANCE};
use crate::tensor::{Graph, Tensor, TensorError, Var};

fn wave(shape: Vec<usize>, phase: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |i| 0.5 + 0.4 * (i as f64 * 0.713 + phase).sin())
}

fn tensor_err(e: NetError) -> TensorError {
    match e {
        NetError::Tensor(t) => t,
        other => panic!("unexpected network error: {other}"),
    }
}

fn zero_prefix(p: &mut ModelParams<f64>, prefix: &str) {
    for (k, t) in p.tensors.iter_mut() {
        if k.starts_with(prefix) {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

#[test]
fn zeroed_sft_heads_are_identity() {
    let mut p = ModelParams::<f64>::init(ArchConfig::tiny(), Variant::Sft, 1);
    for head in ["gamma", "beta"] {
        zero_prefix(&mut p, &format!("deblur.block0.sft.{head}.conv2"));
    }
    let mut g = Graph::new();
    let bp = p.bind(&mut g, false);
    let cf = p.arch.deblur_channels;
    let cc = p.arch.cond_channels;
    let f = g.constant(wave(vec![2, cf, 5, 6], 0.0));
    let cond = g.constant(wave(vec![2, cc, 5, 6], 1.0));
    let sp = generate_sft_params(&mut g, &bp, cond, 0).unwrap();
    let out = sft_apply(&mut g, f, &sp).unwrap();
    assert_eq!(g.value(out), g.value(f));
}

#[test]
fn gamma_range_and_separability() {
    for variant in [Variant::Sft, Variant::SftDec, Variant::SftFdec] {
        let mut p = ModelParams::<f64>::init(ArchConfig::tiny(), variant, 7);
        // large weights push the sigmoids towards saturation
        for t in p.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= 6.0);
        }
        let mut g = Graph::new();
        let bp = p.bind(&mut g, false);
        let cond = g.constant(wave(vec![2, p.arch.cond_channels, 6, 5], 0.3));
        let sp = generate_sft_params(&mut g, &bp, cond, 0).unwrap();
        let gamma = g.value(sp.gamma).clone();
        assert!(gamma.data().iter().all(|&v| v > 0.0 && v < 2.0), "{variant}");
        if variant == Variant::Sft {
            continue;
        }
        let (n, c, h, w) = gamma.dims4().unwrap();
        assert_eq!((n, c, h, w), (2, p.arch.deblur_channels, 6, 5));
        for b in 0..n {
            for c0 in 0..c {
                for c1 in 0..c {
                    for p0 in 0..h * w {
                        for p1 in 0..h * w {
                            let at = |cc: usize, pp: usize| gamma.at4(b, cc, pp / w, pp % w);
                            let d = at(c0, p0) * at(c1, p1) - at(c0, p1) * at(c1, p0);
                            assert!(d.abs() < 1e-12, "{variant}: 2x2 minor {d}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn baseline_has_no_modulation() {
    let p = ModelParams::<f64>::init(ArchConfig::tiny(), Variant::Baseline, 0);
    let mut g = Graph::new();
    let bp = p.bind(&mut g, false);
    let cond = g.constant(wave(vec![1, 1, 4, 4], 0.0));
    assert_eq!(generate_sft_params(&mut g, &bp, cond, 0).unwrap_err(), NetError::NoModulation(Variant::Baseline));
}

#[test]
fn zero_residual_branch_is_identity() {
    let mut p = ModelParams::<f64>::init(ArchConfig::tiny(), Variant::SftDec, 2);
    zero_prefix(&mut p, "dme.block0.conv2");
    zero_prefix(&mut p, "deblur.block0.conv2");
    let mut g = Graph::new();
    let bp = p.bind(&mut g, false);
    let f = g.constant(wave(vec![1, p.arch.dme_channels, 4, 7], 0.0));
    let out = plain_resblock(&mut g, &bp, "dme.block0", f).unwrap();
    assert_eq!(g.value(out), g.value(f));

    let f = g.constant(wave(vec![1, p.arch.deblur_channels, 4, 7], 0.5));
    let cond = g.constant(wave(vec![1, p.arch.cond_channels, 4, 7], 0.9));
    let out = conditioned_resblock(&mut g, &bp, f, cond, 0).unwrap();
    assert_eq!(g.value(out), g.value(f));
}

#[test]
fn zero_tail_returns_blurry_input() {
    for variant in Variant::ALL {
        let mut p = ModelParams::<f64>::init(ArchConfig::tiny(), variant, 3);
        zero_prefix(&mut p, "deblur.tail");
        let x = wave(vec![2, 3, 5, 5], 0.1);
        let (_, y) = p.infer(&x).unwrap();
        assert_eq!(y, x, "{variant}");
    }
}

#[test]
fn shapes_are_preserved() {
    for variant in Variant::ALL {
        let p = ModelParams::<f32>::init(ArchConfig::tiny(), variant, 0);
        let x = Tensor::from_fn(vec![3, 3, 9, 4], |i| (i % 7) as f32 / 7.0);
        let (map, y) = p.infer(&x).unwrap();
        assert_eq!(map.shape(), &[3, 1, 9, 4]);
        assert!(map.data().iter().all(|&v| v >= 0.0));
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn misaligned_map_is_rejected() {
    let p = ModelParams::<f64>::init(ArchConfig::tiny(), Variant::Sft, 0);
    let mut g = Graph::new();
    let bp = p.bind(&mut g, false);
    let x = g.constant(wave(vec![1, 3, 6, 6], 0.0));
    let m = g.constant(wave(vec![1, 1, 6, 5], 0.0));
    let err = full_forward(&mut g, &bp, x, MapSource::GroundTruth(m)).unwrap_err();
    assert!(matches!(err, NetError::Misaligned { .. }), "{err}");
}

#[test]
fn ground_truth_source_keeps_gradients_out_of_estimator() {
    let p = ModelParams::<f64>::init(ArchConfig::tiny(), Variant::SftDec, 0);
    let mut g = Graph::new();
    let bp = p.bind(&mut g, true);
    let x = g.constant(wave(vec![1, 3, 5, 5], 0.0));
    let m = g.constant(wave(vec![1, 1, 5, 5], 0.4));
    let out = full_forward(&mut g, &bp, x, MapSource::GroundTruth(m)).unwrap();
    assert!(out.estimated_map.is_none());
    let loss = g.mean(out.deblurred);
    let grads = g.backward(loss).unwrap();
    for (name, &v) in &bp.vars {
        assert_eq!(grads.reached(v), !name.starts_with("dme."), "{name}");
    }
}

fn check_network(variant: Variant, source_gt: bool) {
    let p = ModelParams::<f64>::init(ArchConfig::tiny(), variant, 11);
    let names: Vec<String> = p.tensors.keys().cloned().collect();
    let inputs: Vec<Tensor<f64>> = p.tensors.values().cloned().collect();
    let arch = p.arch;
    let x = wave(vec![1, 3, 4, 4], 0.2);
    let target = wave(vec![1, 3, 4, 4], 2.0);
    let gt = wave(vec![1, 1, 4, 4], 1.3);
    let f = GraphFn(move |g: &mut Graph<f64>, vars: &[Var]| {
        let bp = BoundParams::from_vars(arch, variant, names.clone(), vars);
        let xb = g.constant(x.clone());
        let source = if source_gt { MapSource::GroundTruth(g.constant(gt.clone())) } else { MapSource::Estimated };
        let out = full_forward(g, &bp, xb, source).map_err(tensor_err)?;
        let t = g.constant(target.clone());
        let d = g.sub(out.deblurred, t)?;
        let sq = g.square(d);
        let mut loss = g.mean(sq);
        if let Some(m) = out.estimated_map {
            let mm = g.mean(m);
            loss = g.add(loss, mm)?;
        }
        Ok(loss)
    });
    let r = gradient_check(&f, &inputs).unwrap();
    assert!(r.passes(TOLERANCE), "{variant} gt={source_gt}: {r:?}");
}

#[test]
fn gradients_match_finite_differences_every_variant() {
    for variant in Variant::ALL {
        check_network(variant, false);
        check_network(variant, true);
    }
}
