use std::path::Path;

use adagrid::dataset::{
    read_depth_png, read_intrinsics, read_pointcloud, read_trajectory, write_depth_png, write_intrinsics,
    write_pointcloud, write_rgb_png, write_trajectory, DepthSequence, PointCloudSequence, TrajectoryEntry,
};
use adagrid::mapfile::{load_map, map_from_bytes, map_to_bytes, read_map_header, save_map};
use adagrid::ply::{mesh_to_bytes, parse_mesh, read_mesh, read_points, seeds_to_bytes, write_mesh, write_points};
use adagrid::{synth, Error};
use adagrid_core::mesh::{extract_mesh, Mesh, MeshOptions, Vertex};
use adagrid_core::quadtree::SplatSeed;
use adagrid_core::{Intrinsics, MapConfig, SensorPose, TsdfMap, Vec3};
use image::{ImageBuffer, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn poses(n: usize) -> Vec<SensorPose> {
    (0..n)
        .map(|i| {
            let a = 0.3 * i as f64;
            let (s, c) = (0.5 * a).sin_cos();
            SensorPose::from_quaternion(Vec3::new(i as f64, -0.5, 1.25), 0.0, s * 0.6, s * 0.8, c).unwrap()
        })
        .collect()
}

fn same_pose(a: &SensorPose, b: &SensorPose, tol: f64) -> bool {
    let probe = [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    probe.iter().all(|&p| a.to_world(p).distance(b.to_world(p)) < tol)
}

#[test]
fn trajectory_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trajectory.txt");
    let entries: Vec<TrajectoryEntry> = poses(5)
        .into_iter()
        .enumerate()
        .map(|(i, pose)| TrajectoryEntry {
            timestamp: 0.1 * i as f64,
            pose,
        })
        .collect();
    write_trajectory(&path, &entries).unwrap();
    let back = read_trajectory(&path).unwrap();
    assert_eq!(back.len(), 5);
    for (a, b) in entries.iter().zip(&back) {
        assert!((a.timestamp - b.timestamp).abs() < 1e-9);
        assert!(same_pose(&a.pose, &b.pose, 1e-12));
    }

    std::fs::write(&path, "0 0 0 0 0 0 0 1.002\n").unwrap();
    assert!(matches!(read_trajectory(&path), Err(Error::Format { .. })));
    std::fs::write(&path, "0 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n").unwrap();
    assert!(read_trajectory(&path).is_err());
    std::fs::write(&path, "0 0 0 0 0 0 1\n").unwrap();
    assert!(read_trajectory(&path).is_err());
    assert!(matches!(read_trajectory(&dir.path().join("missing.txt")), Err(Error::Io { .. })));
}

#[test]
fn intrinsics_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.txt");
    let k = Intrinsics::new(525.0, 524.5, 319.5, 239.25).unwrap();
    write_intrinsics(&path, &k).unwrap();
    assert_eq!(read_intrinsics(&path).unwrap(), k);
    std::fs::write(&path, "1 2 3\n").unwrap();
    assert!(read_intrinsics(&path).is_err());
}

#[test]
fn depth_units_follow_the_scale() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.png");
    let raw: Vec<u16> = vec![5000, 0, 1, 65535];
    ImageBuffer::<Luma<u16>, _>::from_raw(2, 2, raw).unwrap().save(&path).unwrap();
    let (w, h, d) = read_depth_png(&path, 1.0 / 5000.0).unwrap();
    assert_eq!((w, h), (2, 2));
    assert_eq!(d[0], 1.0);
    assert_eq!(d[1], 0.0);
    assert_eq!(d[2], (1.0f64 / 5000.0) as f32);

    let depth = vec![1.0f32, 0.0, f32::NAN, 2.5];
    write_depth_png(&path, 2, 2, &depth, 1.0 / 5000.0).unwrap();
    let (_, _, back) = read_depth_png(&path, 1.0 / 5000.0).unwrap();
    assert_eq!(back, vec![1.0, 0.0, 0.0, 2.5]);

    let rgb = dir.path().join("c.png");
    write_rgb_png(&rgb, 2, 2, &[[1, 2, 3]; 4]).unwrap();
    assert!(read_depth_png(&rgb, 1.0).is_err());
}

#[test]
fn three_frame_fixture_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let k = Intrinsics::new(40.0, 40.0, 15.5, 11.5).unwrap();
    let poses = poses(3);
    std::fs::create_dir_all(root.join("depth")).unwrap();
    std::fs::create_dir_all(root.join("rgb")).unwrap();
    let mut traj = Vec::new();
    for (i, pose) in poses.iter().enumerate() {
        let depth: Vec<f32> = (0..32 * 24).map(|p| 1.0 + 0.001 * (p % 7) as f32 + i as f32 * 0.1).collect();
        write_depth_png(&root.join(format!("depth/{i:03}.png")), 32, 24, &depth, 1.0 / 5000.0).unwrap();
        write_rgb_png(&root.join(format!("rgb/{i:03}.png")), 32, 24, &vec![[i as u8, 7, 9]; 32 * 24]).unwrap();
        traj.push(TrajectoryEntry {
            timestamp: i as f64,
            pose: *pose,
        });
    }
    write_trajectory(&root.join("trajectory.txt"), &traj).unwrap();
    write_intrinsics(&root.join("intrinsics.txt"), &k).unwrap();

    let seq = DepthSequence::open(root, 1.0 / 5000.0).unwrap();
    assert_eq!(seq.len(), 3);
    for (i, f) in seq.frames().enumerate() {
        let f = f.unwrap();
        assert!(same_pose(&f.pose, &poses[i], 1e-12));
        assert_eq!(f.intrinsics, k);
        assert_eq!((f.width, f.height), (32, 24));
        assert!((f.depth[0] - (1.0 + 0.1 * i as f32)).abs() < 2e-4);
        assert_eq!(f.color.as_ref().unwrap()[5], [i as u8, 7, 9]);
    }

    // a corrupt frame fails alone, with its index
    std::fs::write(root.join("depth/001.png"), b"not a png").unwrap();
    let seq = DepthSequence::open(root, 1.0 / 5000.0).unwrap();
    assert!(seq.frame(0).is_ok());
    assert!(matches!(seq.frame(1), Err(Error::Frame { frame: 1, .. })));
    // counts must agree
    std::fs::remove_file(root.join("rgb/002.png")).unwrap();
    assert!(DepthSequence::open(root, 1.0 / 5000.0).is_err());
}

#[test]
fn point_cloud_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<Vec3> = (0..100)
        .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
        .collect();
    let colors: Vec<[u8; 3]> = (0..100).map(|i| [i as u8, 2, 3]).collect();
    let bin = dir.path().join("a.bin");
    write_pointcloud(&bin, &pts, Some(&colors)).unwrap();
    let c = read_pointcloud(&bin).unwrap();
    assert_eq!(c.points.len(), 100);
    assert_eq!(c.skipped, 0);
    assert!(c.points.iter().all(|p| p.is_finite()));
    for (a, b) in c.points.iter().zip(&pts) {
        assert_eq!(a.x, b.x as f32 as f64);
    }
    assert_eq!(c.colors.unwrap(), colors);

    let mut with_nan = pts.clone();
    with_nan[10].y = f64::NAN;
    with_nan[20].z = f64::INFINITY;
    write_pointcloud(&bin, &with_nan, None).unwrap();
    let c = read_pointcloud(&bin).unwrap();
    assert_eq!((c.points.len(), c.skipped), (98, 2));
    assert!(c.colors.is_none());

    let xyz = dir.path().join("b.xyz");
    std::fs::write(&xyz, "# x y z r g b\n1 2 3 10 20 30\nnan 0 0 1 1 1\n4 5 6 40 50 60\n").unwrap();
    let c = read_pointcloud(&xyz).unwrap();
    assert_eq!(c.points, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]);
    assert_eq!(c.colors.unwrap(), vec![[10, 20, 30], [40, 50, 60]]);
    assert_eq!(c.skipped, 1);

    let empty = dir.path().join("c.bin");
    std::fs::write(&empty, b"").unwrap();
    let c = read_pointcloud(&empty).unwrap();
    assert!(c.points.is_empty() && c.skipped == 0);

    std::fs::write(&bin, [5u8, 0, 0, 0, 1, 2]).unwrap();
    assert!(read_pointcloud(&bin).is_err());
}

#[test]
fn point_cloud_sequence_pairs_by_index() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("clouds")).unwrap();
    let poses = poses(2);
    for i in 0..2 {
        write_pointcloud(&root.join(format!("clouds/{i}.bin")), &[Vec3::new(i as f64, 0.0, 1.0)], None).unwrap();
    }
    let traj: Vec<_> = poses
        .iter()
        .enumerate()
        .map(|(i, &pose)| TrajectoryEntry {
            timestamp: i as f64,
            pose,
        })
        .collect();
    write_trajectory(&root.join("trajectory.txt"), &traj).unwrap();
    let seq = PointCloudSequence::open(root).unwrap();
    let frames: Vec<_> = seq.frames().map(Result::unwrap).collect();
    assert_eq!(frames.len(), 2);
    assert_eq!(frames[1].points, vec![Vec3::new(1.0, 0.0, 1.0)]);
    assert!(same_pose(&frames[1].pose, &poses[1], 1e-12));
    write_trajectory(&root.join("trajectory.txt"), &traj[..1]).unwrap();
    assert!(PointCloudSequence::open(root).is_err());
}

fn small_mesh() -> Mesh {
    let v = |p: [f64; 3], n: [f64; 3], c: [f32; 3]| Vertex {
        position: Vec3::from_array(p),
        normal: Vec3::from_array(n),
        color: c,
    };
    Mesh {
        vertices: vec![
            v([0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]),
            v([0.125, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 1.0, 0.0]),
            v([0.0, 0.25, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            v([0.0, 0.0, 0.5], [0.6, 0.0, 0.8], [0.5, 0.5, 0.5]),
        ],
        triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    }
}

#[test]
fn ply_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ply");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mesh = Mesh {
        vertices: (0..300)
            .map(|_| Vertex {
                position: Vec3::new(rng.random(), rng.random(), rng.random()),
                normal: Vec3::new(0.0, 0.6, 0.8),
                color: [rng.random_range(0..=255) as f32 / 255.0, 0.0, 1.0],
            })
            .collect(),
        triangles: (0..200).map(|_| [rng.random_range(0..300), rng.random_range(0..300), rng.random_range(0..300)]).collect(),
    };
    write_mesh(&mesh, &path).unwrap();
    let back = read_mesh(&path).unwrap();
    assert_eq!(back.triangles, mesh.triangles);
    for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
        assert_eq!(b.position, Vec3::from_array(a.position.to_array().map(|c| c as f32 as f64)));
        assert!((b.normal - a.normal).norm() < 1e-7);
        for k in 0..3 {
            assert!((b.color[k] - a.color[k]).abs() < 1e-6);
        }
    }

    let empty = mesh_to_bytes(&Mesh::default());
    assert!(std::str::from_utf8(&empty).unwrap().contains("element vertex 0\n"));
    assert_eq!(parse_mesh(&empty).unwrap(), Mesh::default());

    let ascii = b"ply\nformat ascii 1.0\nelement vertex 4\nproperty double x\nproperty double y\nproperty double z\n\
element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
    let m = parse_mesh(ascii).unwrap();
    assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);

    let pts = dir.path().join("p.ply");
    write_points(&[Vec3::new(1.0, 2.0, 3.0)], &pts).unwrap();
    assert_eq!(read_points(&pts).unwrap(), vec![Vec3::new(1.0, 2.0, 3.0)]);
}

#[test]
fn ply_matches_golden_bytes() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tetrahedron.ply");
    let bytes = mesh_to_bytes(&small_mesh());
    if std::env::var_os("ADAGRID_BLESS").is_some() {
        std::fs::write(&golden, &bytes).unwrap();
    }
    assert_eq!(bytes, std::fs::read(&golden).unwrap());
    assert_eq!(bytes.len(), golden_header_len(&bytes) + 4 * 27 + 4 * 13);
}

fn golden_header_len(bytes: &[u8]) -> usize {
    let end = b"end_header\n";
    bytes.windows(end.len()).position(|w| w == end).unwrap() + end.len()
}

#[test]
fn seeds_ply_carries_scale() {
    let seeds = [SplatSeed {
        position: Vec3::new(1.0, 2.0, 3.0),
        scale: 0.25,
        color: [1.0, 0.0, 0.5],
    }];
    let bytes = seeds_to_bytes(&seeds);
    let head = golden_header_len(&bytes);
    assert!(std::str::from_utf8(&bytes[..head]).unwrap().contains("property float scale\n"));
    let body = &bytes[head..];
    assert_eq!(body.len(), 19);
    assert_eq!(f32::from_le_bytes(body[15..19].try_into().unwrap()), 0.25);
    assert_eq!(&body[12..15], &[255, 0, 128]);
    assert_eq!(parse_mesh(&bytes).unwrap().vertices[0].position, Vec3::new(1.0, 2.0, 3.0));
}

fn plane_map() -> TsdfMap {
    let mut cfg = MapConfig::depth_camera();
    cfg.grid.n_hash = 1 << 14;
    cfg.grid.heap_capacity = vec![8192, 4096];
    let mut map = TsdfMap::new(cfg).unwrap();
    for f in synth::plane(4).frames() {
        map.integrate_depth(&f.unwrap()).unwrap();
    }
    map
}

#[test]
fn map_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.map");
    let map = plane_map();
    save_map(&map, &path).unwrap();
    let back = load_map(&path, Some(map.config())).unwrap();
    let opts = MeshOptions::new(0.01);
    let a = extract_mesh(map.table(), &opts);
    assert!(!a.is_empty());
    assert_eq!(a, extract_mesh(back.table(), &opts));
    assert_eq!(map_to_bytes(&back), std::fs::read(&path).unwrap());
    let header = read_map_header(&path).unwrap();
    assert_eq!(header.grid, *map.grid());
    assert_eq!(header.live as usize, map.table().len());
    for e in map.table().entries() {
        assert_eq!(back.table().block(e.coord), map.table().block(e.coord));
    }
    let loose = load_map(&path, None).unwrap();
    assert_eq!(loose.table().len(), map.table().len());

    let empty = TsdfMap::new(MapConfig::depth_camera()).unwrap();
    let bytes = map_to_bytes(&empty);
    let back = map_from_bytes(Path::new("e.map"), &bytes, None).unwrap();
    assert!(back.table().is_empty() && back.archive().is_empty());
}

#[test]
fn map_header_is_checked() {
    let map = plane_map();
    let bytes = map_to_bytes(&map);
    let p = Path::new("x.map");

    let mut v = bytes.clone();
    v[8..12].copy_from_slice(&7u32.to_le_bytes());
    match map_from_bytes(p, &v, None) {
        Err(e @ Error::Version { found: 7, expected: 1 }) => {
            let msg = e.to_string();
            assert!(msg.contains('7') && msg.contains('1'), "{msg}");
        }
        other => panic!("{:?}", other.map(|_| ())),
    }

    // voxel size field
    let mut v = bytes.clone();
    v[20..28].copy_from_slice(&0.02f64.to_le_bytes());
    assert!(matches!(map_from_bytes(p, &v, None), Err(Error::Format { .. })));

    let mut other = map.config().clone();
    other.truncation = 0.05;
    assert!(map_from_bytes(p, &bytes, Some(&other)).is_err());
    assert!(map_from_bytes(p, &bytes[..bytes.len() - 1], None).is_err());
    assert!(map_from_bytes(p, b"PLY", None).is_err());
}
