use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adagrid::config::{PipelineConfig, SensorMode};
use adagrid::dataset::{self, DepthSequence, PointCloudSequence, TrajectoryEntry};
use adagrid::pipeline::{run_pipeline, SensorFrame};
use adagrid::{bench, mapfile, ply, synth, Error, Result};
use adagrid_core::metrics::{eval_reconstruction, SamplingConfig};
use adagrid_core::mesh::extract_mesh;
use adagrid_core::quadtree::{build_quadtree, seed_splats, QuadNode, RgbImage};
use adagrid_core::{DepthFrame, SensorPose};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

macro_rules! overrides {
    ($($key:ident),* $(,)?) => {
        /// Per-key overrides of the configuration file.
        #[derive(Args, Debug, Default)]
        struct ConfigOverrides {
            $(
                #[arg(long = stringify!($key), value_name = "VALUE", help_heading = "Config overrides")]
                $key: Option<String>,
            )*
        }

        impl ConfigOverrides {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

overrides!(
    mode,
    truncation,
    voxel_size,
    block_edge,
    num_levels,
    n_hash,
    bucket_capacity,
    overflow_capacity,
    heap_capacity,
    max_weight,
    sigma_threshold,
    merge_cadence,
    min_eligible_fraction,
    min_mean_weight,
    stream_mode,
    stream_radius,
    fill_threshold,
    low_water,
    quadtree_threshold,
    quadtree_min_pixel,
    deterministic,
    depth_scale,
    f_threshold,
    collapse_eps,
);

#[derive(Parser)]
#[command(name = "adagrid", version, about = "Multi-resolution TSDF reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => {
                let mode = match &self.overrides.mode {
                    Some(m) => m.parse()?,
                    None => SensorMode::Depth,
                };
                PipelineConfig::for_mode(mode)
            }
        };
        for (k, v) in self.overrides.pairs() {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fuse a dataset directory into a map and mesh
    Integrate {
        /// Dataset root (depth/, rgb/ or clouds/, trajectory.txt, intrinsics.txt)
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Run report (JSON); printed to stdout when omitted
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Extract a mesh from a saved map
    Mesh {
        map: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Vertex collapse radius in meters; negative disables collapsing
        #[arg(long, allow_negative_numbers = true)]
        collapse_eps: Option<f64>,
    },
    /// Compare a mesh with reference points; prints metrics JSON
    Eval {
        mesh: PathBuf,
        /// Reference points (PLY vertices)
        reference: PathBuf,
        #[arg(long, default_value_t = 0.10)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Subdivide an image by contrast and optionally seed splats from depth
    Quadtree {
        image: PathBuf,
        /// 16-bit depth PNG aligned with the image
        #[arg(long, requires = "intrinsics")]
        depth: Option<PathBuf>,
        #[arg(long)]
        intrinsics: Option<PathBuf>,
        /// Leaf CSV (x0,y0,w,h,contrast); printed to stdout when omitted
        #[arg(long)]
        leaves: Option<PathBuf>,
        /// Seed point cloud (PLY with a scale property)
        #[arg(long, requires = "depth")]
        seeds: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Multi- vs single-resolution benchmark on the room fixture
    Bench {
        #[arg(long, default_value_t = 40)]
        frames: usize,
        /// Emit JSON rows instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic dataset
    Synth {
        /// plane, sphere or room
        scene: String,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, short)]
        out: PathBuf,
        /// Write point clouds instead of depth images
        #[arg(long)]
        pointcloud: bool,
    },
}

fn write_json(value: &serde_json::Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn integrate(dataset_root: &Path, cfg: &PipelineConfig, map: Option<&Path>, mesh: Option<&Path>, report: Option<&Path>) -> Result<()> {
    let run = match cfg.mode {
        SensorMode::Depth => {
            let seq = DepthSequence::open(dataset_root, cfg.depth_scale)?;
            log::info!("{} depth frames", seq.len());
            run_pipeline(cfg, seq.frames().map(|f| f.map(SensorFrame::from)))?
        }
        SensorMode::PointCloud => {
            let seq = PointCloudSequence::open(dataset_root)?;
            log::info!("{} point clouds", seq.len());
            run_pipeline(cfg, seq.frames().map(|f| f.map(SensorFrame::from)))?
        }
    };
    if let Some(p) = map {
        mapfile::save_map(&run.map, p)?;
    }
    if let Some(p) = mesh {
        ply::write_mesh(&run.mesh, p)?;
    }
    log::info!(
        "{} frames ({} failed), {} vertices, {:.1} fps",
        run.report.frames,
        run.report.frames_failed,
        run.report.mesh_vertices,
        run.report.fps
    );
    write_json(&serde_json::to_value(&run.report).expect("serializable"), report)
}

fn synth_dataset(name: &str, frames: usize, out: &Path, pointcloud: bool) -> Result<()> {
    let fixture = synth::by_name(name, frames).ok_or_else(|| Error::Config(format!("unknown scene {name:?}")))?;
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    });
    let scale = PipelineConfig::depth_camera().depth_scale;
    mkdir(out)?;
    let mut trajectory = Vec::new();
    for i in 0..frames {
        let frame = fixture.frame(i)?;
        let stem = format!("{i:06}");
        if pointcloud {
            mkdir(&out.join("clouds"))?;
            let cloud = synth::depth_to_points(&frame);
            dataset::write_pointcloud(&out.join("clouds").join(stem + ".bin"), &cloud.points, cloud.colors.as_deref())?;
        } else {
            mkdir(&out.join("depth"))?;
            mkdir(&out.join("rgb"))?;
            dataset::write_depth_png(&out.join("depth").join(stem.clone() + ".png"), frame.width, frame.height, &frame.depth, scale)?;
            if let Some(c) = &frame.color {
                dataset::write_rgb_png(&out.join("rgb").join(stem + ".png"), frame.width, frame.height, c)?;
            }
        }
        trajectory.push(TrajectoryEntry {
            timestamp: i as f64 * 0.1,
            pose: frame.pose,
        });
    }
    dataset::write_trajectory(&out.join("trajectory.txt"), &trajectory)?;
    dataset::write_intrinsics(&out.join("intrinsics.txt"), &fixture.camera.intrinsics)?;
    ply::write_points(&fixture.visible_reference(bench::REFERENCE_SPACING), &out.join("reference.ply"))?;
    log::info!("wrote {frames} frames of {name} to {}", out.display());
    Ok(())
}

fn leaves_csv(leaves: &[QuadNode]) -> String {
    let mut s = String::from("x0,y0,w,h,contrast\n");
    for l in leaves {
        s.push_str(&format!("{},{},{},{},{}\n", l.x0, l.y0, l.w, l.h, l.contrast));
    }
    s
}

struct QuadtreeOutputs<'a> {
    depth: Option<&'a Path>,
    intrinsics: Option<&'a Path>,
    leaves: Option<&'a Path>,
    seeds: Option<&'a Path>,
}

fn quadtree(image: &Path, io: QuadtreeOutputs<'_>, cfg: &PipelineConfig) -> Result<()> {
    let (w, h, rgb) = dataset::read_rgb_png(image)?;
    let img = RgbImage::from_rgb8(w, h, &rgb)?;
    let leaves = build_quadtree(&img, &cfg.quadtree());
    let csv = leaves_csv(&leaves);
    match io.leaves {
        Some(p) => std::fs::write(p, csv).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => print!("{csv}"),
    }
    log::info!("{} leaves", leaves.len());
    if let (Some(d), Some(k), Some(out)) = (io.depth, io.intrinsics, io.seeds) {
        let (dw, dh, z) = dataset::read_depth_png(d, cfg.depth_scale)?;
        if (dw, dh) != (w, h) {
            return Err(Error::Format {
                path: d.to_path_buf(),
                msg: format!("depth is {dw}x{dh}, image {w}x{h}"),
            });
        }
        let frame = DepthFrame::new(w, h, z, Some(rgb), dataset::read_intrinsics(k)?, SensorPose::IDENTITY)?;
        let seeds = seed_splats(&leaves, &frame, Some(&img));
        log::info!("{} seeds", seeds.len());
        ply::write_seeds(&seeds, out)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Integrate {
            dataset,
            config,
            map,
            mesh,
            report,
        } => integrate(&dataset, &config.resolve()?, map.as_deref(), mesh.as_deref(), report.as_deref()),
        Command::Mesh { map, out, collapse_eps } => {
            let m = mapfile::load_map(&map, None)?;
            let mut opts = adagrid_core::mesh::MeshOptions::new(m.grid().fine_voxel_size());
            if let Some(eps) = collapse_eps {
                opts.collapse_eps = (eps >= 0.0).then_some(eps);
            }
            if !m.archive().is_empty() {
                log::warn!("{} archived blocks are not meshed", m.archive().len());
            }
            let mesh = extract_mesh(m.table(), &opts);
            log::info!("{} vertices, {} faces", mesh.vertices.len(), mesh.triangles.len());
            ply::write_mesh(&mesh, &out)
        }
        Command::Eval {
            mesh,
            reference,
            threshold,
            seed,
        } => {
            let mesh = ply::read_mesh(&mesh)?;
            let reference = ply::read_points(&reference)?;
            let sampling = SamplingConfig {
                seed,
                ..SamplingConfig::default()
            };
            let m = eval_reconstruction(&mesh, &reference, threshold, &sampling)?;
            write_json(
                &json!({
                    "accuracy": m.accuracy,
                    "completion": m.completion,
                    "chamfer_l1": m.chamfer_l1,
                    "precision": m.precision,
                    "recall": m.recall,
                    "fscore": m.fscore,
                    "threshold": threshold,
                }),
                None,
            )
        }
        Command::Quadtree {
            image,
            depth,
            intrinsics,
            leaves,
            seeds,
            config,
        } => quadtree(
            &image,
            QuadtreeOutputs {
                depth: depth.as_deref(),
                intrinsics: intrinsics.as_deref(),
                leaves: leaves.as_deref(),
                seeds: seeds.as_deref(),
            },
            &config.resolve()?,
        ),
        Command::Bench { frames, json } => {
            let rows = bench::run_suite(frames)?;
            if json {
                write_json(&serde_json::to_value(&rows).expect("serializable"), None)
            } else {
                print!("{}", bench::format_table(&rows));
                Ok(())
            }
        }
        Command::Synth {
            scene,
            frames,
            out,
            pointcloud,
        } => synth_dataset(&scene, frames, &out, pointcloud),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("ADAGRID_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
