use proptest::prelude::*;

use vsrhpo_core::metrics::{mse, psnr, ssim, ssim_default, default_constants, Raster};

fn raster(h: usize, w: usize) -> impl Strategy<Value = Raster> {
    prop::collection::vec(0u8..=255, h * w)
        .prop_map(move |v| Raster::new(h, w, v.into_iter().map(f64::from).collect(), 255.0).unwrap())
}

fn pair() -> impl Strategy<Value = (Raster, Raster)> {
    (8usize..20, 8usize..20).prop_flat_map(|(h, w)| (raster(h, w), raster(h, w)))
}

proptest! {
    #[test]
    fn symmetric((a, b) in pair()) {
        prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert_eq!(ssim_default(&a, &b).unwrap(), ssim_default(&b, &a).unwrap());
    }

    #[test]
    fn self_similarity((a, _) in pair()) {
        prop_assert_eq!(ssim_default(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_bounded((a, b) in pair()) {
        let s = ssim_default(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn constant_offset(h in 1usize..12, w in 1usize..12, delta in 1u8..60, seed in prop::collection::vec(0u8..=195, 144)) {
        let base: Vec<f64> = seed[..h * w].iter().map(|&v| f64::from(v)).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + f64::from(delta)).collect();
        let a = Raster::new(h, w, base, 255.0).unwrap();
        let b = Raster::new(h, w, shifted, 255.0).unwrap();
        let expect = 20.0 * (255.0 / f64::from(delta)).log10();
        // 10*log10(m^2/d^2) and 20*log10(m/d) differ only by rounding
        prop_assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-12);
    }
}

#[test]
fn windowing_uses_full_tiles_only() {
    // a 9x9 raster has one full tile; the last row and column never enter
    let mut a = vec![50.0; 81];
    let mut b = a.clone();
    for i in 0..9 {
        a[8 * 9 + i] = 0.0;
        b[i * 9 + 8] = 255.0;
    }
    let a = Raster::new(9, 9, a, 255.0).unwrap();
    let b = Raster::new(9, 9, b, 255.0).unwrap();
    assert_eq!(ssim_default(&a, &b).unwrap(), 1.0);
}

#[test]
fn single_window_brute_force() {
    // one 8x8 tile computed by hand-written sums
    let a: Vec<f64> = (0..64).map(|i| (i * 3 % 256) as f64).collect();
    let b: Vec<f64> = (0..64).map(|i| ((i * 7 + 11) % 256) as f64).collect();
    let n = 64.0;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let (c1, c2) = default_constants(255.0);
    let expect = (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    let ra = Raster::new(8, 8, a, 255.0).unwrap();
    let rb = Raster::new(8, 8, b, 255.0).unwrap();
    assert!((ssim(&ra, &rb, c1, c2, 8).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn pgm_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pgm");
    let a = Raster::new(3, 2, vec![0.0, 10.0, 20.0, 30.0, 40.0, 255.0], 255.0).unwrap();
    a.write_pgm(&path).unwrap();
    assert_eq!(Raster::read_pgm(&path).unwrap(), a);
}
