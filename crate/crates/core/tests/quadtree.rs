use adagrid_core::quadtree::{build_quadtree, region_contrast, seed_splats, QuadNode, QuadtreeConfig, RgbImage, LUMA};
use adagrid_core::{DepthFrame, Intrinsics, SensorPose, Vec3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn node(x0: usize, y0: usize, w: usize, h: usize) -> QuadNode {
    QuadNode {
        x0,
        y0,
        w,
        h,
        contrast: 0.0,
        is_leaf: false,
    }
}

fn region(img: &RgbImage, n: &QuadNode) -> Vec<[f32; 3]> {
    let mut px = Vec::new();
    for y in n.y0..n.y0 + n.h {
        for x in n.x0..n.x0 + n.w {
            px.push(img.pixel(x, y));
        }
    }
    px
}

/// Two-pass luma-weighted mean squared deviation over a pixel list.
fn contrast_oracle(px: &[[f32; 3]]) -> f64 {
    let n = px.len() as f64;
    (0..3)
        .map(|k| {
            let m = px.iter().map(|p| p[k] as f64).sum::<f64>() / n;
            LUMA[k] * px.iter().map(|p| (p[k] as f64 - m).powi(2)).sum::<f64>() / n
        })
        .sum()
}

/// Blocky black and white image with a little noise.
fn random_image(rng: &mut ChaCha8Rng) -> RgbImage {
    let (w, h) = (rng.random_range(1..70), rng.random_range(1..70));
    let cell = rng.random_range(1..9);
    let palette: Vec<[f32; 3]> = (0..4).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let pick: Vec<usize> = (0..(w / cell + 1) * (h / cell + 1)).map(|_| rng.random_range(0..4)).collect();
    let data = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let base = palette[pick[(y / cell) * (w / cell + 1) + x / cell]];
            base.map(|c| (c + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0))
        })
        .collect();
    RgbImage::new(w, h, data).unwrap()
}

fn reference(img: &RgbImage, n: QuadNode, cfg: &QuadtreeConfig, leaves: &mut Vec<QuadNode>, internal: &mut Vec<QuadNode>) {
    let c = contrast_oracle(&region(img, &n));
    if c > cfg.contrast_threshold && n.w.min(n.h) > cfg.min_pixel {
        internal.push(QuadNode { contrast: c, ..n });
        let (wl, hl) = (n.w / 2, n.h / 2);
        for (x0, y0, w, h) in [
            (n.x0, n.y0, wl, hl),
            (n.x0, n.y0 + hl, wl, n.h - hl),
            (n.x0 + wl, n.y0, n.w - wl, hl),
            (n.x0 + wl, n.y0 + hl, n.w - wl, n.h - hl),
        ] {
            if w > 0 && h > 0 {
                reference(img, node(x0, y0, w, h), cfg, leaves, internal);
            }
        }
    } else {
        leaves.push(QuadNode {
            contrast: c,
            is_leaf: true,
            ..n
        });
    }
}

fn rect(n: &QuadNode) -> (usize, usize, usize, usize) {
    (n.x0, n.y0, n.w, n.h)
}

#[test]
fn contrast_examples() {
    let img = RgbImage::new(2, 1, vec![[0.0; 3], [1.0; 3]]).unwrap();
    let c = region_contrast(&img, &QuadNode::root(&img));
    assert!((c - 0.249975).abs() < 1e-9);
    assert!(((LUMA[0] + LUMA[1] + LUMA[2]) * 0.25 - 0.249975).abs() < 1e-15);
    let flat = RgbImage::new(3, 3, vec![[0.2, 0.7, 0.4]; 9]).unwrap();
    assert_eq!(region_contrast(&flat, &QuadNode::root(&flat)), 0.0);
}

#[test]
fn contrast_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let img = random_image(&mut rng);
        let (x0, y0) = (rng.random_range(0..img.width), rng.random_range(0..img.height));
        let n = node(x0, y0, rng.random_range(1..=img.width - x0), rng.random_range(1..=img.height - y0));
        let got = region_contrast(&img, &n);
        let want = contrast_oracle(&region(&img, &n));
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
}

proptest! {
    #[test]
    fn contrast_ignores_pixel_order(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng);
        let mut data = img.data.clone();
        data.shuffle(&mut rng);
        let shuffled = RgbImage::new(img.width, img.height, data).unwrap();
        let (a, b) = (region_contrast(&img, &QuadNode::root(&img)), region_contrast(&shuffled, &QuadNode::root(&img)));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
    }
}

#[test]
fn threshold_extremes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(&mut rng);
    let cfg = QuadtreeConfig {
        contrast_threshold: f64::INFINITY,
        min_pixel: 1,
    };
    let leaves = build_quadtree(&img, &cfg);
    assert_eq!(leaves.len(), 1);
    assert_eq!(rect(&leaves[0]), (0, 0, img.width, img.height));
    assert!(leaves[0].is_leaf);

    let uniform = RgbImage::new(64, 48, vec![[0.5; 3]; 64 * 48]).unwrap();
    assert_eq!(build_quadtree(&uniform, &QuadtreeConfig::default()).len(), 1);
}

#[test]
fn leaves_tile_and_match_the_recursive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut split = 0;
    for i in 0..50 {
        let img = random_image(&mut rng);
        let cfg = QuadtreeConfig {
            contrast_threshold: [0.1, 0.01, 0.001][i % 3],
            min_pixel: [1, 2, 4][i % 3],
        };
        let leaves = build_quadtree(&img, &cfg);
        if leaves.len() > 1 {
            split += 1;
        }
        // tiling: every pixel covered exactly once
        let mut cover = vec![0u8; img.width * img.height];
        for l in &leaves {
            assert!(l.is_leaf && l.w > 0 && l.h > 0);
            for y in l.y0..l.y0 + l.h {
                for x in l.x0..l.x0 + l.w {
                    cover[y * img.width + x] += 1;
                }
            }
            // each leaf fails the split guard
            assert!(l.contrast <= cfg.contrast_threshold || l.w.min(l.h) <= cfg.min_pixel);
        }
        assert_eq!(leaves.iter().map(|l| l.w * l.h).sum::<usize>(), img.width * img.height);
        assert!(cover.iter().all(|&c| c == 1));

        let (mut want, mut internal) = (Vec::new(), Vec::new());
        reference(&img, QuadNode::root(&img), &cfg, &mut want, &mut internal);
        for n in &internal {
            assert!(n.contrast > cfg.contrast_threshold && n.w.min(n.h) > cfg.min_pixel);
        }
        let mut got = leaves.clone();
        got.sort_by_key(rect);
        want.sort_by_key(rect);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(rect(g), rect(w));
            assert!((g.contrast - w.contrast).abs() <= 1e-10);
        }
    }
    assert!(split > 30);
}

#[test]
fn full_image_leaf_seeds_at_the_center() {
    let k = Intrinsics::new(500.0, 500.0, 249.5, 199.5).unwrap();
    let frame = DepthFrame::new(500, 400, vec![1.0; 500 * 400], None, k, SensorPose::IDENTITY).unwrap();
    let img = RgbImage::new(500, 400, vec![[0.2, 0.4, 0.6]; 500 * 400]).unwrap();
    let leaves = build_quadtree(&img, &QuadtreeConfig::default());
    let seeds = seed_splats(&leaves, &frame, Some(&img));
    assert_eq!(seeds.len(), 1);
    assert!(seeds[0].position.distance(Vec3::new(0.0, 0.0, 1.0)) < 1e-12);
    assert!((seeds[0].scale - 1.0).abs() < 1e-12);
    assert!((seeds[0].color[2] - 0.6).abs() < 1e-6);

    let pose = SensorPose::from_quaternion(Vec3::new(1.0, 2.0, 3.0), 0.0, 0.0, 0.0, 1.0).unwrap();
    let moved = DepthFrame::new(500, 400, vec![2.0; 500 * 400], None, k, pose).unwrap();
    let s = seed_splats(&leaves, &moved, None);
    assert!(s[0].position.distance(Vec3::new(1.0, 2.0, 5.0)) < 1e-12);
    assert!((s[0].scale - 2.0).abs() < 1e-12);
    assert_eq!(s[0].color, [0.0; 3]);
}

#[test]
fn invalid_depth_gives_no_seeds() {
    let k = Intrinsics::new(100.0, 100.0, 31.5, 31.5).unwrap();
    let frame = DepthFrame::new(64, 64, vec![0.0; 64 * 64], None, k, SensorPose::IDENTITY).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = (0..64 * 64).map(|_| if rng.random() { [1.0; 3] } else { [0.0; 3] }).collect();
    let img = RgbImage::new(64, 64, data).unwrap();
    let leaves = build_quadtree(&img, &QuadtreeConfig::default());
    assert!(leaves.len() > 100);
    assert!(seed_splats(&leaves, &frame, Some(&img)).is_empty());
}

#[test]
fn texture_attracts_more_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (w, h) = (128, 96);
    let data = (0..w * h)
        .map(|i| {
            if i % w < w / 2 && rng.random() {
                [1.0; 3]
            } else {
                [0.0; 3]
            }
        })
        .collect();
    let img = RgbImage::new(w, h, data).unwrap();
    let k = Intrinsics::new(100.0, 100.0, 63.5, 47.5).unwrap();
    let frame = DepthFrame::new(w, h, vec![1.5; w * h], None, k, SensorPose::IDENTITY).unwrap();
    let seeds = seed_splats(&build_quadtree(&img, &QuadtreeConfig::default()), &frame, Some(&img));
    let left = seeds.iter().filter(|s| s.position.x < 0.0).count();
    let right = seeds.len() - left;
    assert!(left > 10 * right.max(1), "{left} vs {right}");
    // seeds are smaller where the texture is
    let mean = |f: &dyn Fn(&&adagrid_core::quadtree::SplatSeed) -> bool| {
        let v: Vec<f64> = seeds.iter().filter(f).map(|s| s.scale).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(&|s| s.position.x < 0.0) < mean(&|s| s.position.x >= 0.0));
}
