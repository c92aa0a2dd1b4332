use adagrid::config::{PipelineConfig, SensorMode};
use adagrid::mapfile::map_to_bytes;
use adagrid::pipeline::{restore_all, run_pipeline, PipelineRun, SensorFrame};
use adagrid::ply::mesh_to_bytes;
use adagrid::{synth, Error};
use adagrid_core::mesh::extract_mesh;

fn plane_run(cfg: &PipelineConfig, frames: usize) -> PipelineRun {
    let fx = synth::plane(frames);
    run_pipeline(cfg, fx.frames().map(|f| f.map(SensorFrame::from))).unwrap()
}

#[test]
fn deterministic_runs_are_bit_identical() {
    let cfg = PipelineConfig::depth_camera();
    assert!(cfg.deterministic);
    let a = plane_run(&cfg, 10);
    let b = plane_run(&cfg, 10);
    assert!(!a.mesh.is_empty());
    assert_eq!(mesh_to_bytes(&a.mesh), mesh_to_bytes(&b.mesh));
    assert_eq!(map_to_bytes(&a.map), map_to_bytes(&b.map));

    // the overlapped reader only changes scheduling
    let mut fast = cfg.clone();
    fast.deterministic = false;
    let c = plane_run(&fast, 10);
    assert_eq!(map_to_bytes(&a.map), map_to_bytes(&c.map));
}

#[test]
fn report_fields_are_consistent() {
    let run = plane_run(&PipelineConfig::depth_camera(), 12);
    let r = &run.report;
    assert_eq!((r.frames, r.frames_failed), (12, 0));
    assert!(r.measurements > 0);
    let times = [
        r.ms_per_frame.ingest,
        r.ms_per_frame.integrate,
        r.ms_per_frame.merge,
        r.ms_per_frame.stream,
        r.mesh_ms,
        r.total_ms,
        r.fps,
        r.peak_fill,
    ];
    assert!(times.iter().all(|t| t.is_finite() && *t >= 0.0), "{r:?}");
    assert!(r.fps > 0.0 && r.total_ms > 0.0);
    assert_eq!(r.live_blocks_per_level.len(), 2);
    assert_eq!(r.live_blocks_per_level.iter().sum::<usize>(), run.map.table().len());
    for (live, peak) in r.live_blocks_per_level.iter().zip(&r.peak_blocks_per_level) {
        assert!(peak >= live);
    }
    assert_eq!((r.mesh_vertices, r.mesh_faces), (run.mesh.vertices.len(), run.mesh.triangles.len()));
    assert_eq!(r.archived_blocks, run.map.archive().len());
    let json = serde_json::to_value(r).unwrap();
    for key in ["frames", "ms_per_frame", "fps", "live_blocks_per_level", "peak_fill", "mesh_vertices", "mesh_faces"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn bad_frames_are_skipped() {
    let fx = synth::plane(6);
    let frames = fx.frames().enumerate().map(|(i, f)| {
        if i == 2 {
            Err(Error::Format {
                path: "depth/002.png".into(),
                msg: "corrupt".into(),
            })
        } else {
            f.map(SensorFrame::from)
        }
    });
    let run = run_pipeline(&PipelineConfig::depth_camera(), frames).unwrap();
    assert_eq!((run.report.frames, run.report.frames_failed), (6, 1));
    assert!(!run.mesh.is_empty());

    let mut bad = PipelineConfig::depth_camera();
    bad.truncation = 0.005;
    assert!(matches!(
        run_pipeline(&bad, std::iter::empty()),
        Err(Error::Config(_))
    ));
}

#[test]
fn flat_scene_meshes_with_fewer_vertices_when_merged() {
    let cfg = PipelineConfig::depth_camera();
    let multi = plane_run(&cfg, 30);
    let single = plane_run(&cfg.clone().single_resolution(), 30);
    assert!(multi.report.merged_blocks > 0);
    assert!(multi.report.live_blocks_per_level[1] > 0);
    assert!(
        multi.report.mesh_vertices < single.report.mesh_vertices,
        "{} vs {}",
        multi.report.mesh_vertices,
        single.report.mesh_vertices
    );
    // zero cadence turns merging off
    let mut off = cfg.clone();
    off.set("merge_cadence", "0").unwrap();
    assert_eq!(plane_run(&off, 30).report.merged_blocks, 0);
}

#[test]
fn point_cloud_mode_runs() {
    let fx = synth::plane(5);
    let cfg = PipelineConfig::point_cloud();
    assert_eq!(cfg.mode, SensorMode::PointCloud);
    let frames = fx.frames().map(|f| f.map(|d| SensorFrame::from(synth::depth_to_points(&d))));
    let run = run_pipeline(&cfg, frames).unwrap();
    assert_eq!(run.report.frames, 5);
    assert!(run.report.measurements > 0);
    assert!(!run.mesh.is_empty());
}

#[test]
fn streamed_run_restores_to_the_full_map() {
    let mut cfg = PipelineConfig::depth_camera();
    cfg.set("merge_cadence", "0").unwrap();
    let full = plane_run(&cfg, 12);
    let need = full.map.table().occupancy(0);
    cfg.set("heap_capacity", &format!("{},{}", need, need)).unwrap();
    let small = plane_run(&cfg, 12);
    assert_eq!(small.report.frames_failed, 0, "{:?}", small.report);
    assert!(small.report.evicted_blocks > 0 && !small.map.archive().is_empty());
    assert!(small.report.peak_fill < 1.0);
    let restored = restore_all(&small.map).unwrap();
    assert!(restored.archive().is_empty());
    assert_eq!(restored.table().len(), full.map.table().len());
    let opts = cfg.mesh_options();
    assert_eq!(extract_mesh(restored.table(), &opts), extract_mesh(full.map.table(), &opts));
}

#[test]
fn config_text_and_overrides() {
    let c = PipelineConfig::parse("mode = pointcloud\nsigma_threshold = 1e-4 # looser\n").unwrap();
    assert_eq!(c.mode, SensorMode::PointCloud);
    assert_eq!((c.voxel_size, c.block_edge, c.truncation), (0.2, 1.6, 0.8));
    assert_eq!(c.sigma_threshold, 1e-4);
    assert_eq!(PipelineConfig::parse(&c.to_text()).unwrap(), c);

    let mut d = PipelineConfig::depth_camera();
    assert_eq!((d.voxel_size, d.block_edge, d.truncation), (0.01, 0.08, 0.04));
    assert_eq!(d.n_hash, 1 << 17);
    assert_eq!((d.bucket_capacity, d.overflow_capacity), (10, 7));
    assert_eq!((d.quadtree_threshold, d.quadtree_min_pixel), (0.1, 1));
    d.set("voxel_size", "0.02").unwrap();
    assert_eq!(d.block_edge, 0.16);
    assert!(d.set("nonsense", "1").is_err());
    assert!(d.set("stream_mode", "sideways").is_err());
    assert!(d.set("n_hash", "many").is_err());
    assert!(PipelineConfig::parse("voxel_size 0.01\n").is_err());
    assert!(PipelineConfig::parse("block_edge = 0.1\n").is_err());
    assert!(PipelineConfig::parse("heap_capacity = 0,10\n").is_err());
    assert_eq!(d.mesh_options().collapse_eps, Some(0.005));
    d.set("collapse_eps", "0").unwrap();
    assert_eq!(d.mesh_options().collapse_eps, Some(0.0));
}
