//! Fixture benchmarks comparing multi- and single-resolution runs.

use std::fmt::Write as _;

use adagrid_core::metrics::{eval_reconstruction, Metrics, SamplingConfig};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::pipeline::{run_pipeline, PipelineRun, RunReport, SensorFrame};
use crate::synth::{self, Fixture};

/// Reference point spacing for fixture evaluation (m).
pub const REFERENCE_SPACING: f64 = 0.005;

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub scene: String,
    pub variant: String,
    pub report: RunReport,
    pub chamfer_l1: f64,
    pub fscore: f64,
}

pub fn run_fixture(fixture: &Fixture, config: &PipelineConfig) -> Result<PipelineRun> {
    run_pipeline(config, fixture.frames().map(|f| f.map(SensorFrame::from)))
}

pub fn evaluate(run: &PipelineRun, reference: &[adagrid_core::Vec3], threshold: f64) -> Result<Metrics> {
    Ok(eval_reconstruction(&run.mesh, reference, threshold, &SamplingConfig::default())?)
}

/// Single- and multi-resolution runs on one fixture, in that order.
pub fn compare(fixture: &Fixture, base: &PipelineConfig) -> Result<[BenchRow; 2]> {
    let reference = fixture.visible_reference(REFERENCE_SPACING);
    let row = |variant: &str, cfg: &PipelineConfig| -> Result<BenchRow> {
        let run = run_fixture(fixture, cfg)?;
        let m = evaluate(&run, &reference, cfg.f_threshold)?;
        Ok(BenchRow {
            scene: fixture.name.to_string(),
            variant: variant.to_string(),
            report: run.report,
            chamfer_l1: m.chamfer_l1,
            fscore: m.fscore,
        })
    };
    Ok([
        row("single", &base.clone().single_resolution())?,
        row("multi", base)?,
    ])
}

/// Runs the room fixture with `frames` frames.
pub fn run_suite(frames: usize) -> Result<Vec<BenchRow>> {
    Ok(compare(&synth::room(frames), &PipelineConfig::depth_camera())?.to_vec())
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:<7} {:>6} {:>10} {:>9} {:>9} {:>10} {:>10} {:>7}",
        "scene", "variant", "frames", "total ms", "ms/frame", "fps", "vertices", "chamfer", "F"
    );
    for r in rows {
        let p = &r.report;
        let per_frame = p.ms_per_frame.ingest + p.ms_per_frame.integrate + p.ms_per_frame.merge + p.ms_per_frame.stream;
        let _ = writeln!(
            s,
            "{:<8} {:<7} {:>6} {:>10.1} {:>9.2} {:>9.2} {:>10} {:>10.5} {:>7.4}",
            r.scene, r.variant, p.frames, p.total_ms, per_frame, p.fps, p.mesh_vertices, r.chamfer_l1, r.fscore
        );
    }
    for pair in rows.chunks(2) {
        if let [single, multi] = pair {
            let _ = writeln!(
                s,
                "{}: multi/single time ratio {:.3}, vertex reduction {:.2}x, chamfer ratio {:.3}",
                single.scene,
                multi.report.total_ms / single.report.total_ms,
                single.report.mesh_vertices as f64 / multi.report.mesh_vertices.max(1) as f64,
                multi.chamfer_l1 / single.chamfer_l1
            );
        }
    }
    s
}
