use adagrid_core::integrate::{allocate_for_measurement, sdf_projective, sdf_ray};
use adagrid_core::{
    voxel_center, voxel_index, BlockCoord, DepthFrame, GridConfig, Intrinsics, MapConfig, PointCloudFrame, SensorPose,
    TsdfMap, Vec3, Voxel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

fn small_map(tau: f64) -> TsdfMap {
    let mut cfg = MapConfig::depth_camera();
    cfg.truncation = tau;
    cfg.streaming = None;
    cfg.grid.n_hash = 1 << 14;
    cfg.grid.heap_capacity = vec![1 << 16, 1 << 14];
    TsdfMap::new(cfg).unwrap()
}

#[test]
fn sdf_examples() {
    let o = Vec3::ZERO;
    let x = |v| Vec3::new(v, 0.0, 0.0);
    assert!((sdf_ray(x(1.0), x(0.9), o, 0.1) - 0.1).abs() < 1e-12);
    assert_eq!(sdf_ray(x(1.0), x(1.0), o, 0.1), 0.0);
    assert_eq!(sdf_ray(x(2.0), x(0.5), o, 0.1), 0.1);
    let z = |v| Vec3::new(0.0, 0.0, v);
    assert_eq!(sdf_projective(1.0, z(1.0), 0.1), 0.0);
    assert!((sdf_projective(1.0, z(0.95), 0.1) - 0.05).abs() < 1e-12);
    assert_eq!(sdf_projective(1.0, z(1.5), 0.1), -0.1);
}

#[test]
fn update_voxel_closed_forms() {
    let mut v = Voxel::EMPTY;
    v.update(0.05, None);
    assert_eq!((v.weight, v.variance()), (1, 0.0));
    v.update(0.07, None);
    assert_eq!(v.weight, 2);
    assert!((v.tsdf - 0.06).abs() < 1e-15);
    assert!((v.s2 - 0.0002).abs() < 1e-15);
    assert!((v.variance() - 0.0001).abs() < 1e-15);
}

#[test]
fn welford_matches_two_pass_on_1000_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let len = if i < 10 { i + 1 } else { rng.random_range(1..=10_000) };
        let centre = rng.random_range(-0.03..0.03);
        let spread = rng.random_range(1e-4..0.01);
        let xs: Vec<f64> = (0..len)
            .map(|_| (centre + spread * rng.random_range(-1.0..1.0f64)).clamp(-0.04, 0.04))
            .collect();
        let mut v = Voxel::EMPTY;
        xs.iter().for_each(|&x| v.update(x, None));
        let (mean, var) = two_pass(&xs);
        assert_eq!(v.weight as usize, len);
        assert!((v.tsdf - mean).abs() <= 1e-12, "sequence {i}: mean {} vs {mean}", v.tsdf);
        if len == 1 {
            assert_eq!(v.variance(), 0.0);
        } else {
            assert!(rel_close(v.variance(), var, 1e-9), "sequence {i}: {} vs {var}", v.variance());
        }
    }
}

proptest! {
    #[test]
    fn welford_property(xs in prop::collection::vec(-0.04f64..0.04, 2..300)) {
        let mut v = Voxel::EMPTY;
        for (k, &x) in xs.iter().enumerate() {
            v.update(x, None);
            prop_assert_eq!(v.weight as usize, k + 1);
            prop_assert!(v.tsdf.abs() <= 0.04 + 1e-15);
            prop_assert!(v.s2 >= 0.0);
        }
        let (_, var) = two_pass(&xs);
        prop_assert!((v.variance() - var).abs() <= 1e-9 * var + 1e-18);
    }

    #[test]
    fn fusion_order_barely_matters(mut xs in prop::collection::vec(-0.04f64..0.04, 1..200), seed: u64) {
        let fuse = |xs: &[f64]| {
            let mut v = Voxel::EMPTY;
            xs.iter().for_each(|&x| v.update(x, None));
            v
        };
        let a = fuse(&xs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..xs.len()).rev() {
            xs.swap(i, rng.random_range(0..=i));
        }
        let b = fuse(&xs);
        prop_assert_eq!(a.weight, b.weight);
        prop_assert!((a.tsdf - b.tsdf).abs() <= 1e-6);
        prop_assert!((a.variance() - b.variance()).abs() <= 1e-6);
    }
}

#[test]
fn voxel_index_examples() {
    let g = GridConfig::depth_camera();
    let c = BlockCoord::new(0, 0, 0);
    assert_eq!(voxel_index(Vec3::splat(0.005), c, 0, &g).unwrap(), 0);
    assert_eq!(voxel_index(Vec3::splat(0.0799), c, 0, &g).unwrap(), 511);
    assert!(voxel_index(Vec3::splat(0.081), c, 0, &g).is_err());
    // centre of a 4³ coarse block lies on the corner shared by the 8 central voxels
    let central: Vec<usize> = [1usize, 2]
        .iter()
        .flat_map(|&z| [1usize, 2].into_iter().flat_map(move |y| [1usize, 2].into_iter().map(move |x| x + 4 * (y + 4 * z))))
        .collect();
    let i = voxel_index(Vec3::splat(0.04), c, 1, &g).unwrap();
    assert!(central.contains(&i), "{i}");
    for idx in 0..512 {
        assert_eq!(voxel_index(voxel_center(c, 0, idx, &g), c, 0, &g).unwrap(), idx);
    }
}

#[test]
fn allocation_covers_the_ray_and_is_idempotent() {
    let mut cfg = MapConfig::depth_camera();
    cfg.grid.block_edge = 0.16;
    cfg.truncation = 0.1;
    cfg.streaming = None;
    let mut map = TsdfMap::new(cfg).unwrap();
    let dir = Vec3::new(0.3, -0.2, 1.0).normalized().unwrap();
    let o = Vec3::new(0.01, 0.02, 0.03);
    let p = o + dir * 0.5;
    allocate_for_measurement(&mut map, o, p, 0.1).unwrap();
    for i in 0..=600 {
        let q = o + dir * (0.6 * i as f64 / 600.0);
        assert!(map.table().contains(BlockCoord::containing(q, 0.16)), "gap at {q:?}");
    }
    let n = map.table().len();
    allocate_for_measurement(&mut map, o, p, 0.1).unwrap();
    assert_eq!(map.table().len(), n);
}

#[test]
fn allocation_keeps_coarse_blocks_coarse() {
    let mut map = small_map(0.04);
    let p = Vec3::new(0.05, 0.05, 0.5);
    let behind = BlockCoord::containing(Vec3::new(0.05, 0.05, 0.25), 0.08);
    map.table_mut().insert_block(behind, 1).unwrap();
    allocate_for_measurement(&mut map, Vec3::new(0.05, 0.05, 0.0), p, 0.04).unwrap();
    assert_eq!(map.table().find_block(behind).unwrap().1, 1);
    assert_eq!(map.table().find_block(BlockCoord::containing(p, 0.08)).unwrap().1, 0);
}

fn cloud(points: Vec<Vec3>) -> PointCloudFrame {
    PointCloudFrame {
        points,
        colors: None,
        pose: SensorPose::IDENTITY,
    }
}

#[test]
fn single_point_lands_in_its_voxel() {
    let mut map = small_map(0.04);
    let p = Vec3::new(0.123, -0.047, 0.611);
    let stats = map.integrate_pointcloud(&cloud(vec![p])).unwrap();
    assert_eq!(stats.measurements, 1);
    assert!(stats.voxels_updated > 0);
    let c = BlockCoord::containing(p, 0.08);
    let b = map.table().block(c).unwrap();
    let v = b.voxels[voxel_index(p, c, 0, map.grid()).unwrap()];
    assert_eq!(v.weight, 1);
    assert!(v.tsdf.abs() <= 0.01, "{}", v.tsdf);
}

#[test]
fn identical_frames_give_zero_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<Vec3> = (0..300)
        .map(|_| Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.8..1.2)))
        .collect();
    let mut once = small_map(0.04);
    once.integrate_pointcloud(&cloud(pts.clone())).unwrap();
    let mut map = small_map(0.04);
    map.integrate_pointcloud(&cloud(pts.clone())).unwrap();
    map.integrate_pointcloud(&cloud(pts)).unwrap();
    let mut updated = 0;
    for e in map.table().sorted_entries() {
        let twice = map.table().block(e.coord).unwrap();
        let single = once.table().block(e.coord).unwrap();
        for (a, b) in twice.voxels.iter().zip(&single.voxels) {
            assert_eq!(a.weight, 2 * b.weight);
            if b.weight == 1 {
                updated += 1;
                assert_eq!(a.variance(), 0.0);
                assert!((a.tsdf - b.tsdf).abs() < 1e-15);
            }
        }
    }
    assert!(updated > 0);
}

#[test]
fn empty_cloud_is_a_noop() {
    let mut map = small_map(0.04);
    let s = map.integrate_pointcloud(&cloud(vec![])).unwrap();
    assert!(s.empty_frame);
    assert_eq!((s.measurements, s.voxels_updated), (0, 0));
    assert!(map.table().is_empty());
    let s = map
        .integrate_pointcloud(&cloud(vec![Vec3::new(f64::NAN, 0.0, 1.0), Vec3::ZERO]))
        .unwrap();
    assert_eq!((s.skipped, s.measurements), (2, 0));
    assert!(map.table().is_empty());
}

fn plane_frame(z: f32) -> DepthFrame {
    let (w, h) = (80, 60);
    let k = Intrinsics::new(70.0, 70.0, 39.5, 29.5).unwrap();
    DepthFrame::new(w, h, vec![z; w * h], None, k, SensorPose::IDENTITY).unwrap()
}

#[test]
fn plane_zero_crossing_per_column() {
    let mut map = small_map(0.04);
    map.integrate_depth(&plane_frame(1.0)).unwrap();
    let g = map.grid().clone();
    let nu = g.fine_voxel_size();
    let mut columns = 0;
    // walk voxel columns near the optical axis
    for ix in -15..15 {
        for iy in -15..15 {
            let (x, y) = ((ix as f64 + 0.5) * nu, (iy as f64 + 0.5) * nu);
            let sample = |iz: i64| {
                let p = Vec3::new(x, y, (iz as f64 + 0.5) * nu);
                let c = BlockCoord::containing(p, g.block_edge);
                let b = map.table().block(c)?;
                let v = b.voxels[voxel_index(p, c, 0, &g).ok()?];
                (v.weight > 0).then_some((p.z, v.tsdf))
            };
            let mut crossing = None;
            for iz in 90..110 {
                if let (Some((za, da)), Some((zb, db))) = (sample(iz), sample(iz + 1)) {
                    if da > 0.0 && db <= 0.0 {
                        crossing = Some(za + (zb - za) * da / (da - db));
                    }
                }
            }
            let zc = crossing.unwrap_or_else(|| panic!("no crossing in column {ix},{iy}"));
            assert!((zc - 1.0).abs() <= nu / 2.0, "column {ix},{iy}: {zc}");
            columns += 1;
        }
    }
    assert_eq!(columns, 900);
}

#[test]
fn voxels_behind_the_camera_stay_untouched() {
    let mut map = small_map(0.04);
    map.integrate_depth(&plane_frame(0.5)).unwrap();
    for e in map.table().entries() {
        let b = map.table().block(e.coord).unwrap();
        for (i, v) in b.voxels.iter().enumerate() {
            if v.weight > 0 {
                assert!(voxel_center(e.coord, e.level, i, map.grid()).z > 0.0);
            }
        }
    }
}

#[test]
fn invalid_depth_is_a_noop() {
    let mut map = small_map(0.04);
    let mut f = plane_frame(1.0);
    f.depth.iter_mut().enumerate().for_each(|(i, d)| *d = if i % 2 == 0 { 0.0 } else { f32::NAN });
    let s = map.integrate_depth(&f).unwrap();
    assert!(s.empty_frame);
    assert_eq!(s.skipped, 80 * 60);
    assert!(map.table().is_empty());
}

fn noisy_clouds(seed: u64, n: usize) -> Vec<PointCloudFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let pose = SensorPose::from_quaternion(
                Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0),
                0.0,
                0.0,
                0.0,
                1.0,
            )
            .unwrap();
            let pts = (0..400)
                .map(|_| {
                    Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0 + rng.random_range(-0.004..0.004))
                })
                .collect();
            PointCloudFrame {
                points: pts,
                colors: None,
                pose,
            }
        })
        .collect()
}

fn fuse_all(frames: &[PointCloudFrame]) -> TsdfMap {
    let mut map = small_map(0.04);
    for f in frames {
        map.integrate_pointcloud(f).unwrap();
    }
    map
}

#[test]
fn rerunning_frames_reproduces_the_grid_bitwise() {
    let frames = noisy_clouds(8, 6);
    let a = fuse_all(&frames);
    let b = fuse_all(&frames);
    let blocks = |m: &TsdfMap| {
        m.table()
            .sorted_entries()
            .iter()
            .map(|e| m.table().block(e.coord).unwrap())
            .collect::<Vec<_>>()
    };
    let (ba, bb) = (blocks(&a), blocks(&b));
    assert_eq!(ba.len(), bb.len());
    for (x, y) in ba.iter().zip(&bb) {
        assert_eq!(x.coord, y.coord);
        for (u, v) in x.voxels.iter().zip(&y.voxels) {
            assert_eq!(u.tsdf.to_bits(), v.tsdf.to_bits());
            assert_eq!(u.s2.to_bits(), v.s2.to_bits());
            assert_eq!(u.weight, v.weight);
        }
    }
}

#[test]
fn frame_order_changes_fused_values_by_rounding_only() {
    let frames = noisy_clouds(9, 6);
    let a = fuse_all(&frames);
    let mut rev = frames.clone();
    rev.reverse();
    let b = fuse_all(&rev);
    for e in a.table().sorted_entries() {
        let x = a.table().block(e.coord).unwrap();
        let y = b.table().block(e.coord).unwrap();
        for (u, v) in x.voxels.iter().zip(&y.voxels) {
            assert_eq!(u.weight, v.weight);
            assert!((u.tsdf - v.tsdf).abs() <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn fused_distances_stay_in_band(seed: u64, tau in 0.02f64..0.1) {
        let mut map = small_map(tau);
        for f in noisy_clouds(seed, 2) {
            map.integrate_pointcloud(&f).unwrap();
        }
        for e in map.table().entries() {
            for v in map.table().block(e.coord).unwrap().voxels {
                prop_assert!(v.tsdf.abs() <= tau);
                prop_assert!(v.weight > 0 || (v.tsdf == 0.0 && v.s2 == 0.0));
            }
        }
    }
}
