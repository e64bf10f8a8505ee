use foveal_core::foveation::{foveate, FoveationConfig, Image};
use foveal_core::geometry::Point;
use proptest::prelude::*;

fn checker(w: u32, h: u32) -> Image {
    let data = (0..h)
        .flat_map(|y| (0..w).map(move |x| if (x / 2 + y / 2) % 2 == 0 { 230 } else { 20 }))
        .collect();
    Image::new(w, h, 1, data).unwrap()
}

/// Mean absolute difference from `reference` over pixels whose distance to
/// `c` lies in `[r0, r1)`.
fn ring_error(img: &Image, reference: &Image, c: Point, r0: f64, r1: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let r = (x as f64 - c.x).hypot(y as f64 - c.y);
            if r >= r0 && r < r1 {
                sum += (img.get(x, y, 0) as f64 - reference.get(x, y, 0) as f64).abs();
                n += 1;
            }
        }
    }
    sum / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flat_images_are_untouched(
        w in 8u32..64,
        h in 8u32..64,
        channels in prop::sample::select(vec![1u8, 3]),
        value in any::<u8>(),
        fx in 0.0f64..1.0,
        fy in 0.0f64..1.0,
    ) {
        let img = Image::filled(w, h, channels, value).unwrap();
        let p = Point::new(fx * (w - 1) as f64, fy * (h - 1) as f64);
        let out = foveate(&img, p, &FoveationConfig { sigma0: 6.0, ..Default::default() }).unwrap();
        prop_assert_eq!(out, img);
    }

    #[test]
    fn band_gains_fall_off_with_distance(level in 0usize..4, r in 0.0f64..500.0, dr in 0.0f64..100.0) {
        let c = FoveationConfig::default();
        let (a, b) = (c.band_gain(level, r), c.band_gain(level, r + dr));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
        // coarser bands reach further
        prop_assert!(c.band_gain(level + 1, r) >= a);
    }
}

#[test]
fn detail_survives_at_the_fixation_and_fades_away_from_it() {
    let img = checker(160, 160);
    let c = Point::new(40.0, 80.0);
    let out = foveate(&img, c, &FoveationConfig { levels: 4, sigma0: 16.0, growth: 2.0 }).unwrap();
    assert_eq!((out.width(), out.height(), out.channels()), (160, 160, 1));
    let rings: Vec<f64> = [(0.0, 6.0), (20.0, 30.0), (50.0, 70.0), (90.0, 120.0)]
        .iter()
        .map(|&(a, b)| ring_error(&out, &img, c, a, b))
        .collect();
    assert!(rings[0] <= 2.0, "{rings:?}");
    assert!(rings.windows(2).all(|w| w[1] >= w[0]), "{rings:?}");
    assert!(rings[3] > 20.0 * rings[0].max(1.0), "{rings:?}");
}

#[test]
fn foveation_is_deterministic_and_validates_input() {
    let img = checker(33, 17);
    let cfg = FoveationConfig::default();
    let p = Point::new(5.0, 9.0);
    assert_eq!(foveate(&img, p, &cfg).unwrap(), foveate(&img, p, &cfg).unwrap());
    assert!(foveate(&img, Point::new(40.0, 1.0), &cfg).unwrap_err().is_validation());
    assert!(Image::filled(4, 4, 4, 0).unwrap_err().is_validation());
    let bad = FoveationConfig { levels: 1, ..cfg };
    assert!(foveate(&img, p, &bad).unwrap_err().is_validation());
}

#[test]
fn png_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    let mut img = Image::filled(7, 5, 3, 10).unwrap();
    img.set(3, 2, 1, 200);
    img.write_png(&path).unwrap();
    assert_eq!(Image::read_png(&path).unwrap(), img);
    std::fs::write(&path, b"not a png").unwrap();
    assert!(Image::read_png(&path).is_err());
}
