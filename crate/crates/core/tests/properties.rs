use defocus_core::blur::{gaussian_kernel, BlurConfig, MapModel};
use defocus_core::formats::{decode_checkpoint, decode_dmf, encode_checkpoint, encode_dmf, parse_config, serialize_config, RunConfig};
use defocus_core::image::{DefocusMap, Image};
use defocus_core::metrics::ssim;
use defocus_core::nets::{ArchConfig, ModelParams, Variant};
use defocus_core::tensor::{Graph, Tensor};
use defocus_core::train::{
    composite_loss_stage12, composite_loss_stage3, loss_df, loss_dme, loss_wd, weight_map, AugmentDraw, ScheduleMode,
    TrainingConfig,
};
use defocus_core::dataset::Triplet;
use proptest::prelude::*;

fn values(len: usize, lo: f32, hi: f32) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(lo..hi, len)
}

fn map_strategy() -> impl Strategy<Value = DefocusMap> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| values(w * h, 0.0, 3.0).prop_map(move |d| DefocusMap::new(w, h, d)))
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    let train = (
        (0.0f64..2.0, 0.0f64..2.0, 0.0f64..2.0),
        prop::array::uniform3(0usize..500),
        (1usize..64, 1usize..256, 1e-6f64..1e-1),
        (0.0f64..0.999, 0.0f64..0.9999, 1e-12f64..1e-4),
        any::<u64>(),
        (prop::sample::select(Variant::ALL.to_vec()), any::<bool>(), any::<bool>(), any::<bool>()),
        prop::array::uniform5(1usize..64),
    );
    let blur = (1e-3f64..10.0, 0.0f64..0.1, 2usize..64, any::<bool>(), any::<u64>());
    (train, blur).prop_map(|(t, b)| {
        let ((l1, l2, l3), epochs, (batch, crop, lr), (b1, b2, eps), seed, (variant, e2e, flips, rotations), arch) = t;
        RunConfig {
            train: TrainingConfig {
                lambda1: l1,
                lambda2: l2,
                lambda3: l3,
                epochs,
                batch_size: batch,
                crop_size: crop,
                learning_rate: lr,
                beta1: b1,
                beta2: b2,
                epsilon: eps,
                seed,
                variant,
                arch: ArchConfig::from_array(arch),
                flips,
                rotations,
                schedule: if e2e { ScheduleMode::EndToEnd } else { ScheduleMode::ThreeStage },
            },
            blur: BlurConfig {
                sigma_max: b.0,
                noise_sigma: b.1,
                quantization_levels: b.2,
                map_model: if b.3 { MapModel::TiltedPlane } else { MapModel::GaussianField },
                seed: b.4,
            },
        }
    })
}

fn scalar(g: &Graph<f64>, v: defocus_core::tensor::Var) -> f64 {
    g.value(v).data()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_normalized_and_symmetric(sigma in 0.0f64..6.0) {
        let k = gaussian_kernel(sigma).unwrap();
        prop_assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let r = k.radius as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                prop_assert_eq!(k.at(dy, dx), k.at(-dy, dx));
                prop_assert_eq!(k.at(dy, dx), k.at(dx, dy));
            }
        }
    }

    #[test]
    fn dmf_round_trips_bytes(map in map_strategy()) {
        let bytes = encode_dmf(&map);
        let back = decode_dmf(&bytes).unwrap();
        prop_assert_eq!(encode_dmf(&back), bytes);
        prop_assert_eq!(back, map);
    }

    #[test]
    fn config_round_trips_text(cfg in run_config()) {
        let text = serialize_config(&cfg);
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(serialize_config(&back), text);
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn checkpoint_round_trips_and_detects_flips(seed in any::<u64>(), v in 0u32..4, flip in any::<prop::sample::Index>(), bit in 0u8..8) {
        let p = ModelParams::<f32>::init(ArchConfig::tiny(), Variant::from_id(v).unwrap(), seed);
        let bytes = encode_checkpoint(&p);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(encode_checkpoint(&back), bytes.clone());
        prop_assert_eq!(back, p);
        let mut bad = bytes;
        let i = flip.index(bad.len());
        bad[i] ^= 1 << bit;
        prop_assert!(decode_checkpoint(&bad).is_err());
    }

    #[test]
    fn augmentation_moves_every_plane_together(seed in any::<u64>(), w in 4usize..14, h in 4usize..14, crop in 1usize..4) {
        let n = w * h;
        let sharp = Image::new(w, h, (0..3 * n).map(|i| i as f32).collect());
        let blurry = Image::new(w, h, (0..3 * n).map(|i| (3 * n + i) as f32).collect());
        let map = DefocusMap::new(w, h, (0..n).map(|i| (i % 5) as f32 * 0.5).collect());
        let t = Triplet { id: "p".into(), sharp: sharp.clone(), blurry, map: map.clone() };
        let draw = AugmentDraw::sample(h, w, crop, true, true, seed).unwrap();
        let out = draw.apply(&t);
        prop_assert_eq!(&out.sharp, &draw.apply_image(&sharp));
        // the sharp and blurry values encode their source pixel, so both must
        // come from the same location
        for (a, b) in out.sharp.data.iter().zip(&out.blurry.data) {
            prop_assert_eq!(*b, *a + (3 * n) as f32);
        }
        for (i, &s) in out.sharp.data[..crop * crop].iter().enumerate() {
            prop_assert_eq!(out.map.data[i], map.data[s as usize]);
        }
    }

    #[test]
    fn full_size_draws_keep_the_map_histogram(seed in any::<u64>(), map in map_strategy()) {
        let side = map.width.min(map.height);
        let square = DefocusMap::new(side, side, (0..side * side).map(|i| map.data[(i / side) * map.width + i % side]).collect());
        let draw = AugmentDraw::sample(side, side, side, true, true, seed).unwrap();
        let mut before = square.data.clone();
        let mut after = draw.apply_map(&square).data;
        before.sort_by(f32::total_cmp);
        after.sort_by(f32::total_cmp);
        prop_assert_eq!(before, after);
    }

    #[test]
    fn weight_maps_have_unit_mean(n in 1usize..4, hw in 1usize..40, seed in any::<u64>()) {
        let t = Tensor::from_fn(vec![n, 1, 1, hw], |i| 0.01 + ((seed.wrapping_add(i as u64 * 2654435761) % 1000) as f64) / 300.0);
        let w = weight_map(&t).unwrap();
        for s in 0..n {
            let mean = w.data()[s * hw..(s + 1) * hw].iter().sum::<f64>() / hw as f64;
            prop_assert!((mean - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn losses_are_nonnegative_and_zero_on_targets(
        a in values(48, 0.0, 1.0), b in values(48, 0.0, 1.0), m in values(16, 0.05, 3.0)
    ) {
        let img = |v: &[f32]| Tensor::from_fn(vec![1, 3, 4, 4], |i| v[i] as f64);
        let map = Tensor::from_fn(vec![1, 1, 4, 4], |i| m[i] as f64);
        let mut g = Graph::new();
        let (x, y, dm) = (g.constant(img(&a)), g.constant(img(&b)), g.constant(map.clone()));
        let ldf = loss_df(&mut g, x, y).unwrap();
        let lwd = loss_wd(&mut g, x, y, &map).unwrap();
        let ldme = loss_dme(&mut g, dm, dm).unwrap();
        let same_df = loss_df(&mut g, x, x).unwrap();
        let same_wd = loss_wd(&mut g, x, x, &map).unwrap();
        prop_assert!(scalar(&g, ldf) >= 0.0 && scalar(&g, lwd) >= 0.0);
        prop_assert_eq!(scalar(&g, ldme), 0.0);
        prop_assert_eq!(scalar(&g, same_df), 0.0);
        prop_assert_eq!(scalar(&g, same_wd), 0.0);
    }

    #[test]
    fn composite_losses_are_linear_in_lambda(l1 in 0.0f64..2.0, l2 in 0.0f64..2.0, l3 in 0.0f64..2.0, x in 0.0f64..5.0, y in 0.0f64..5.0) {
        let mut g = Graph::new();
        let (a, b) = (g.constant(Tensor::scalar(x)), g.constant(Tensor::scalar(y)));
        let base = composite_loss_stage12(&mut g, l1, l2, a, b).unwrap();
        let doubled = composite_loss_stage12(&mut g, l1, 2.0 * l2, a, b).unwrap();
        prop_assert!((scalar(&g, doubled) - scalar(&g, base) - l2 * y).abs() < 1e-12);
        let base = composite_loss_stage3(&mut g, l2, l3, a, b).unwrap();
        let doubled = composite_loss_stage3(&mut g, 2.0 * l2, l3, a, b).unwrap();
        prop_assert!((scalar(&g, doubled) - scalar(&g, base) - l2 * x).abs() < 1e-12);
    }

    #[test]
    fn constant_map_reduces_stage_three_loss(a in values(48, 0.0, 1.0), b in values(48, 0.0, 1.0), sigma in 0.1f64..3.0) {
        let img = |v: &[f32]| Tensor::from_fn(vec![1, 3, 4, 4], |i| v[i] as f64);
        let map = Tensor::from_fn(vec![1, 1, 4, 4], |_| sigma);
        let mut g = Graph::new();
        let (x, y) = (g.constant(img(&a)), g.constant(img(&b)));
        let ldf = loss_df(&mut g, x, y).unwrap();
        let lwd = loss_wd(&mut g, x, y, &map).unwrap();
        let l = composite_loss_stage3(&mut g, 0.9, 0.1, ldf, lwd).unwrap();
        let n = a.len() as f64;
        let mae = a.iter().zip(&b).map(|(p, q)| (*p as f64 - *q as f64).abs()).sum::<f64>() / n;
        let mse = a.iter().zip(&b).map(|(p, q)| (*p as f64 - *q as f64).powi(2)).sum::<f64>() / n;
        prop_assert!((scalar(&g, l) - (0.9 * mae + 0.1 * mse)).abs() < 1e-12);
    }

    #[test]
    fn ssim_stays_in_range(a in values(3 * 144, 0.0, 1.0), b in values(3 * 144, 0.0, 1.0)) {
        let s = ssim(&Image::new(12, 12, a), &Image::new(12, 12, b)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}
