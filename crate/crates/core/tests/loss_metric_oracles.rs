use defocus_core::image::{DefocusMap, Image, CHANNELS};
use defocus_core::metrics::{mae, mse, psnr, psnr_from_mse, ssim};
use defocus_core::tensor::{Graph, Tensor};
use defocus_core::train::{loss_df, loss_dme, loss_wd, weight_map};
use defocus_oracles as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

fn image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::new(w, h, (0..CHANNELS * w * h).map(|_| rng.gen::<f32>()).collect())
}

fn planes(img: &Image) -> oracle::Planes {
    oracle::Planes { channels: 3, height: img.height, width: img.width, data: img.data.iter().map(|&v| v as f64).collect() }
}

fn as_f64(data: &[f32]) -> Vec<f64> {
    data.iter().map(|&v| v as f64).collect()
}

#[test]
fn losses_match_scalar_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let (n, h, w) = (rng.gen_range(1..4), rng.gen_range(1..9), rng.gen_range(1..9));
        let hw = h * w;
        let dm_e = random(&mut rng, &[n, 1, h, w], 0.0, 3.0);
        let dm_gt = random(&mut rng, &[n, 1, h, w], 0.05, 3.0);
        let i_df = random(&mut rng, &[n, 3, h, w], 0.0, 1.0);
        let i_gt = random(&mut rng, &[n, 3, h, w], 0.0, 1.0);

        let mut g = Graph::new();
        let (a, b) = (g.constant(dm_e.clone()), g.constant(dm_gt.clone()));
        let (x, y) = (g.constant(i_df.clone()), g.constant(i_gt.clone()));
        let l_dme = loss_dme(&mut g, a, b).unwrap();
        let l_df = loss_df(&mut g, x, y).unwrap();
        let l_wd = loss_wd(&mut g, x, y, &dm_gt).unwrap();
        let v = |var| g.value(var).data()[0];

        assert!((v(l_dme) - oracle::mean_abs_diff(dm_e.data(), dm_gt.data())).abs() < 1e-7);
        assert!((v(l_df) - oracle::mean_abs_diff(i_df.data(), i_gt.data())).abs() < 1e-7);
        let want = oracle::weighted_sq_loss(i_df.data(), i_gt.data(), dm_gt.data(), n, hw);
        assert!((v(l_wd) - want).abs() < 1e-7);

        let wm = weight_map(&dm_gt).unwrap();
        let want = oracle::weight_map(dm_gt.data(), n, hw);
        assert!(wm.data().iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-6));
        for s in 0..n {
            let mean = wm.data()[s * hw..(s + 1) * hw].iter().sum::<f64>() / hw as f64;
            assert!((mean - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn map_and_image_metrics_match_scalar_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (w, h) = (rng.gen_range(11..20), rng.gen_range(11..20));
        let a = DefocusMap::new(w, h, (0..w * h).map(|_| rng.gen_range(0.0..3.0)).collect());
        let b = DefocusMap::new(w, h, (0..w * h).map(|_| rng.gen_range(0.0..3.0)).collect());
        let (da, db) = (as_f64(&a.data), as_f64(&b.data));
        let m1 = mae(&a, &b).unwrap();
        let m2 = mse(&a, &b).unwrap();
        assert!((m1 - oracle::mean_abs_diff(&da, &db)).abs() < 1e-9);
        assert!((m2 - oracle::mean_sq_diff(&da, &db)).abs() < 1e-9);
        assert!(m2 >= m1 * m1 - 1e-9);

        let x = image(&mut rng, w, h);
        let y = image(&mut rng, w, h);
        assert!((psnr(&x, &y).unwrap() - oracle::psnr(&as_f64(&x.data), &as_f64(&y.data))).abs() < 1e-6);
    }
}

#[test]
fn ssim_matches_direct_window_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let (w, h) = (rng.gen_range(11..24), rng.gen_range(11..24));
        let x = image(&mut rng, w, h);
        // a correlated partner: x plus a little noise
        let y = Image::new(w, h, x.data.iter().map(|&v| (v + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0)).collect());
        let ours = ssim(&x, &y).unwrap();
        assert!((ours - oracle::ssim(&planes(&x), &planes(&y))).abs() < 1e-9);
        assert!((-1.0..=1.0).contains(&ours));
    }
}

#[test]
fn ssim_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = image(&mut rng, 16, 16);
    let y = image(&mut rng, 16, 16);
    assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-9);
    let c = Image::filled(12, 12, 0.2);
    let d = Image::filled(12, 12, 0.7);
    assert!((ssim(&c, &d).unwrap() - oracle::ssim_constants(0.2f32 as f64, 0.7f32 as f64)).abs() < 1e-9);
}

#[test]
fn psnr_closed_forms_and_monotone_noise() {
    assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-6);
    let base = Image::filled(32, 32, 0.5);
    assert_eq!(psnr(&base, &base).unwrap(), 100.0);

    // +-d on a checkerboard has MSE exactly d^2: doubling d costs 20 log10(2) dB
    let noisy = |d: f32| {
        let data = (0..3 * 32 * 32).map(|i| 0.5 + if (i + i / 32) % 2 == 0 { d } else { -d }).collect();
        Image::new(32, 32, data)
    };
    let mut last = f64::INFINITY;
    for d in [0.01f32, 0.02, 0.04, 0.08, 0.16] {
        let p = psnr(&noisy(d), &base).unwrap();
        assert!(p < last);
        last = p;
    }
    let drop = psnr(&noisy(0.05), &base).unwrap() - psnr(&noisy(0.1), &base).unwrap();
    assert!((drop - 20.0 * 2f64.log10()).abs() < 1e-3, "{drop}");
}

#[test]
fn mae_equals_dme_loss_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let a = DefocusMap::new(9, 7, (0..63).map(|_| rng.gen_range(0.0..3.0)).collect());
    let b = DefocusMap::new(9, 7, (0..63).map(|_| rng.gen_range(0.0..3.0)).collect());
    let mut g = Graph::<f64>::new();
    let (x, y) = (g.constant(a.to_tensor()), g.constant(b.to_tensor()));
    let l = loss_dme(&mut g, x, y).unwrap();
    assert_eq!(g.value(l).data()[0].to_bits(), mae(&a, &b).unwrap().to_bits());
}
