use adagrid_core::codec::{decode_block, encode_block};
use adagrid_core::mesh::{extract_mesh, MeshOptions};
use adagrid_core::stream::{active_fill_fraction, select_evictable, stream_in, stream_out, Archive, Relevance, StreamingConfig};
use adagrid_core::{
    BlockCoord, Error, GridConfig, HashTable, Intrinsics, MapConfig, PointCloudFrame, SensorPose, TsdfMap, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(cap: usize) -> HashTable {
    HashTable::new(GridConfig {
        n_hash: 512,
        heap_capacity: vec![cap, cap],
        ..GridConfig::depth_camera()
    })
    .unwrap()
}

fn fill_block(t: &mut HashTable, c: BlockCoord, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, l) = t.find_block(c).unwrap();
    for v in t.voxels_mut(l, h).iter_mut() {
        for _ in 0..rng.random_range(0..4) {
            v.update(rng.random_range(-0.04..0.04), Some([rng.random(), rng.random(), rng.random()]));
        }
    }
}

#[test]
fn fill_fraction_examples() {
    let mut t = table(100);
    assert_eq!(active_fill_fraction(&t), 0.0);
    for i in 0..85 {
        t.insert_block(BlockCoord::new(i, 0, 0), 0).unwrap();
    }
    assert_eq!(active_fill_fraction(&t), 0.85);
    for i in 0..40 {
        t.insert_block(BlockCoord::new(i, 5, 0), 1).unwrap();
    }
    assert_eq!(active_fill_fraction(&t), 0.85);
    for i in 40..95 {
        t.insert_block(BlockCoord::new(i, 5, 0), 1).unwrap();
    }
    assert_eq!(active_fill_fraction(&t), 0.95);
}

#[test]
fn radius_selection() {
    let mut t = table(64);
    let near = BlockCoord::containing(Vec3::new(1.0, 0.0, 0.0), 0.08);
    t.insert_block(near, 0).unwrap();
    let rel = Relevance::Radius {
        center: Vec3::ZERO,
        radius: 50.0,
    };
    assert!(select_evictable(&t, &rel).is_empty());
    let far = BlockCoord::containing(Vec3::new(0.0, 60.0, 0.0), 0.08);
    t.insert_block(far, 0).unwrap();
    assert_eq!(select_evictable(&t, &rel), vec![far]);
}

/// Whether any corner of the block projects inside the image, checked directly.
fn any_corner_visible(c: BlockCoord, edge: f64, k: &Intrinsics, w: f64, h: f64) -> bool {
    c.corners(edge).iter().any(|p| {
        p.z > 0.0 && {
            let u = k.fx * p.x / p.z + k.cx;
            let v = k.fy * p.y / p.z + k.cy;
            (0.0..w).contains(&u) && (0.0..h).contains(&v)
        }
    })
}

#[test]
fn frustum_selection_matches_corner_projection() {
    let mut t = HashTable::new(GridConfig {
        n_hash: 1 << 14,
        heap_capacity: vec![8192, 8192],
        ..GridConfig::depth_camera()
    })
    .unwrap();
    let k = Intrinsics::new(100.0, 100.0, 50.0, 40.0).unwrap();
    let rel = Relevance::Frustum {
        pose: SensorPose::IDENTITY,
        intrinsics: k,
        width: 100,
        height: 80,
    };
    for x in -12..12 {
        for y in -10..10 {
            for z in -2..12 {
                t.insert_block(BlockCoord::new(x, y, z), 0).unwrap();
            }
        }
    }
    let sel: std::collections::HashSet<_> = select_evictable(&t, &rel).into_iter().collect();
    let mut straddling = 0;
    for e in t.entries() {
        let visible = any_corner_visible(e.coord, 0.08, &k, 100.0, 80.0);
        assert_eq!(sel.contains(&e.coord), !visible, "{:?}", e.coord);
        let all = e.coord.corners(0.08).iter().all(|p| {
            p.z > 0.0 && {
                let (u, v) = (100.0 * p.x / p.z + 50.0, 100.0 * p.y / p.z + 40.0);
                (0.0..100.0).contains(&u) && (0.0..80.0).contains(&v)
            }
        });
        if visible && !all {
            straddling += 1;
        }
    }
    assert!(straddling > 0);
}

#[test]
fn eviction_reaches_low_water_and_round_trips() {
    let mut t = table(100);
    for i in 0..90 {
        let c = BlockCoord::new(700 + i, 0, 0);
        t.insert_block(c, 0).unwrap();
        fill_block(&mut t, c, i as u64);
    }
    t.insert_block(BlockCoord::new(0, 0, 0), 0).unwrap();
    let originals: Vec<_> = t.sorted_entries().iter().map(|e| t.block(e.coord).unwrap()).collect();
    let mut a = Archive::new();
    let cfg = StreamingConfig::radius(5.0);
    let rel = Relevance::Radius {
        center: Vec3::ZERO,
        radius: 5.0,
    };
    let s = stream_out(&mut t, &mut a, &cfg, &rel, |_| false).unwrap();
    assert!(s.fill_before >= 0.85);
    assert!(s.fill_after <= 0.70, "{}", s.fill_after);
    assert_eq!(s.evicted, a.len());
    assert!(t.contains(BlockCoord::new(0, 0, 0)));
    // farthest first
    let kept_max = t.entries().iter().map(|e| e.coord.x).max().unwrap();
    assert!(a.records().all(|(c, _)| c.x > kept_max));
    for (c, _) in a.records() {
        assert!(!t.contains(*c));
    }
    let archived: Vec<BlockCoord> = a.records().map(|(c, _)| *c).collect();
    for c in archived {
        stream_in(&mut t, &mut a, c).unwrap();
    }
    assert!(a.is_empty());
    for b in originals {
        assert_eq!(t.block(b.coord).unwrap(), b);
    }
    assert!(matches!(stream_in(&mut t, &mut a, BlockCoord::new(0, 0, 0)), Err(Error::Contract(_))));
    assert_eq!(stream_in(&mut t, &mut a, BlockCoord::new(9, 9, 9)), Err(Error::NotFound(BlockCoord::new(9, 9, 9))));
}

#[test]
fn eviction_below_threshold_is_a_noop_and_nothing_evictable_errors() {
    let mut t = table(100);
    for i in 0..50 {
        t.insert_block(BlockCoord::new(i, 0, 0), 0).unwrap();
    }
    let mut a = Archive::new();
    let rel = Relevance::Radius {
        center: Vec3::ZERO,
        radius: 100.0,
    };
    let cfg = StreamingConfig::radius(100.0);
    assert_eq!(stream_out(&mut t, &mut a, &cfg, &rel, |_| false).unwrap().evicted, 0);
    for i in 50..90 {
        t.insert_block(BlockCoord::new(i, 0, 0), 0).unwrap();
    }
    assert!(matches!(
        stream_out(&mut t, &mut a, &cfg, &rel, |_| false),
        Err(Error::CapacityExceeded { .. })
    ));
    assert!(a.is_empty());
}

#[test]
fn codec_is_bit_exact() {
    let mut t = table(8);
    let c = BlockCoord::new(-3, 4, -5);
    t.insert_block(c, 1).unwrap();
    fill_block(&mut t, c, 77);
    let b = t.block(c).unwrap();
    let (back, used) = decode_block(&encode_block(&b), t.config()).unwrap();
    assert_eq!(used, encode_block(&b).len());
    for (x, y) in back.voxels.iter().zip(&b.voxels) {
        assert_eq!(x.tsdf.to_bits(), y.tsdf.to_bits());
        assert_eq!(x.s2.to_bits(), y.s2.to_bits());
        assert_eq!((x.weight, x.color), (y.weight, y.color));
    }
}

/// A sensor sliding along x over the plane z = 1.
fn sweep(n: usize) -> Vec<PointCloudFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    (0..n)
        .map(|i| {
            let x0 = 0.1 * i as f64;
            let pose = SensorPose::from_quaternion(Vec3::new(x0, 0.0, 0.0), 0.0, 0.0, 0.0, 1.0).unwrap();
            let points = (0..1500)
                .map(|_| Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0 + rng.random_range(-0.003..0.003)))
                .collect();
            PointCloudFrame {
                points,
                colors: None,
                pose,
            }
        })
        .collect()
}

fn sweep_map(cap: usize, streaming: bool) -> TsdfMap {
    let mut cfg = MapConfig::depth_camera();
    cfg.grid.n_hash = 4096;
    cfg.grid.heap_capacity = vec![cap, cap];
    cfg.streaming = streaming.then(|| StreamingConfig::radius(0.6));
    TsdfMap::new(cfg).unwrap()
}

#[test]
fn evicted_and_restored_map_meshes_like_the_unevicted_one() {
    let frames = sweep(40);
    let mut reference = sweep_map(20_000, false);
    for f in &frames {
        reference.integrate_pointcloud(f).unwrap();
    }
    let mut small = sweep_map(1500, true);
    let mut evicted = 0;
    for f in &frames {
        small.integrate_pointcloud(f).unwrap();
        let rel = small.pointcloud_relevance(f).unwrap().unwrap();
        evicted += small.stream_out(&rel).unwrap().evicted;
        assert!(active_fill_fraction(small.table()) < 0.85);
        for (c, _) in small.archive().records() {
            assert!(!small.table().contains(*c), "{c:?} live and archived");
        }
    }
    assert!(evicted > 0 && !small.archive().is_empty());
    assert!(reference.table().len() > 1500);

    // revisit the start: archived blocks come back on allocation
    let restored = small.integrate_pointcloud(&frames[0]).unwrap().blocks_streamed_in;
    assert!(restored > 0);
    reference.integrate_pointcloud(&frames[0]).unwrap();

    let mut all = sweep_map(20_000, false);
    let (table, archive) = small.parts_mut();
    let coords: Vec<BlockCoord> = archive.records().map(|(c, _)| *c).collect();
    for e in table.sorted_entries() {
        all.table_mut().write_block(table.block(e.coord).unwrap()).unwrap();
    }
    for c in coords {
        let rec = archive.take(c).unwrap();
        all.table_mut().write_block(decode_block(&rec, table.config()).unwrap().0).unwrap();
    }
    let opts = MeshOptions::new(0.01);
    let a = extract_mesh(reference.table(), &opts);
    let b = extract_mesh(all.table(), &opts);
    assert!(!a.is_empty());
    assert_eq!(a, b);
}
