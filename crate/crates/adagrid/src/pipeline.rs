//! End-to-end driver: ingest, integrate, merge, stream, mesh.

use std::sync::mpsc;
use std::time::Instant;

use adagrid_core::adapt::apply_merges;
use adagrid_core::codec::decode_block;
use adagrid_core::mesh::{extract_mesh, Mesh};
use adagrid_core::stream::{active_fill_fraction, Archive};
use adagrid_core::{DepthFrame, HashTable, IntegrationStats, MapConfig, PointCloudFrame, TsdfMap};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SensorFrame {
    Depth(DepthFrame),
    PointCloud(PointCloudFrame),
}

impl From<DepthFrame> for SensorFrame {
    fn from(f: DepthFrame) -> Self {
        SensorFrame::Depth(f)
    }
}

impl From<PointCloudFrame> for SensorFrame {
    fn from(f: PointCloudFrame) -> Self {
        SensorFrame::PointCloud(f)
    }
}

/// Mean wall-clock milliseconds per frame of each stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub ingest: f64,
    pub integrate: f64,
    pub merge: f64,
    pub stream: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub frames: usize,
    pub frames_failed: usize,
    pub measurements: usize,
    pub ms_per_frame: StageTimes,
    pub mesh_ms: f64,
    pub total_ms: f64,
    /// Frames per second over ingest, integration, merging and streaming.
    pub fps: f64,
    pub live_blocks_per_level: Vec<usize>,
    pub peak_blocks_per_level: Vec<usize>,
    pub peak_fill: f64,
    pub archived_blocks: usize,
    pub archive_bytes: usize,
    pub merged_blocks: usize,
    pub evicted_blocks: usize,
    pub restored_blocks: usize,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
}

pub struct PipelineRun {
    pub map: TsdfMap,
    pub mesh: Mesh,
    pub report: RunReport,
}

/// Errors that leave the map unusable stop the run; anything else only
/// loses the current frame.
fn is_structural(e: &Error) -> bool {
    use adagrid_core::Error as C;
    match e {
        Error::Frame { .. } | Error::Io { .. } | Error::Format { .. } => false,
        Error::Core(C::Input(_) | C::HeapExhausted { .. } | C::SlotFull { .. } | C::CapacityExceeded { .. }) => false,
        _ => true,
    }
}

struct Counters {
    report: RunReport,
    stage_ms: StageTimes,
}

impl Counters {
    fn fold(&mut self, s: &IntegrationStats) {
        self.report.measurements += s.measurements;
        self.report.evicted_blocks += s.blocks_evicted;
        self.report.restored_blocks += s.blocks_streamed_in;
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn process(
    config: &PipelineConfig,
    map: &mut TsdfMap,
    index: usize,
    frame: SensorFrame,
    c: &mut Counters,
) -> Result<()> {
    let t = Instant::now();
    let (stats, relevance) = match &frame {
        SensorFrame::Depth(f) => (map.integrate_depth(f)?, Some(map.depth_relevance(f))),
        SensorFrame::PointCloud(f) => (map.integrate_pointcloud(f)?, map.pointcloud_relevance(f)?),
    };
    c.stage_ms.integrate += ms(t);
    c.fold(&stats);
    if stats.empty_frame {
        log::warn!("frame {index}: no usable measurements");
    }
    let table = map.table();
    for l in 0..table.num_levels() {
        let p = &mut c.report.peak_blocks_per_level[l as usize];
        *p = (*p).max(table.occupancy(l));
    }
    c.report.peak_fill = c.report.peak_fill.max(active_fill_fraction(table));

    if let Some(merge) = config.merge() {
        if (index + 1) % merge.cadence == 0 {
            let t = Instant::now();
            let m = apply_merges(map.table_mut(), &merge)?;
            c.stage_ms.merge += ms(t);
            c.report.merged_blocks += m.merged;
            log::debug!("frame {index}: merged {} blocks", m.merged);
        }
    }

    if let Some(rel) = relevance {
        let t = Instant::now();
        let ev = map.stream_out(&rel)?;
        c.stage_ms.stream += ms(t);
        c.report.evicted_blocks += ev.evicted;
        if ev.evicted > 0 {
            log::debug!(
                "frame {index}: evicted {} blocks, fill {:.3} -> {:.3}",
                ev.evicted,
                ev.fill_before,
                ev.fill_after
            );
        }
    }
    Ok(())
}

/// Runs the full pipeline over `frames`. In deterministic mode frames are
/// read and fused strictly in turn; otherwise reading the next frame overlaps
/// fusing the current one. Map mutation is serial in both modes.
pub fn run_pipeline<I>(config: &PipelineConfig, frames: I) -> Result<PipelineRun>
where
    I: Iterator<Item = Result<SensorFrame>> + Send,
{
    config.validate()?;
    let start = Instant::now();
    let mut map = TsdfMap::new(config.map_config())?;
    let levels = map.table().num_levels() as usize;
    let mut c = Counters {
        report: RunReport {
            peak_blocks_per_level: vec![0; levels],
            ..RunReport::default()
        },
        stage_ms: StageTimes::default(),
    };

    let mut handle = |index: usize, item: Result<SensorFrame>, ingest_ms: f64, c: &mut Counters| -> Result<()> {
        c.stage_ms.ingest += ingest_ms;
        c.report.frames += 1;
        let r = item.and_then(|f| process(config, &mut map, index, f, c));
        match r {
            Ok(()) => Ok(()),
            Err(e) if !is_structural(&e) => {
                log::warn!("{}", e.in_frame(index));
                c.report.frames_failed += 1;
                Ok(())
            }
            Err(e) => Err(e.in_frame(index)),
        }
    };

    if config.deterministic {
        let mut frames = frames;
        let mut index = 0;
        loop {
            let t = Instant::now();
            let Some(item) = frames.next() else { break };
            handle(index, item, ms(t), &mut c)?;
            index += 1;
        }
    } else {
        std::thread::scope(|s| -> Result<()> {
            let (tx, rx) = mpsc::sync_channel::<(Result<SensorFrame>, f64)>(1);
            s.spawn(move || {
                let mut frames = frames;
                loop {
                    let t = Instant::now();
                    let Some(item) = frames.next() else { break };
                    if tx.send((item, ms(t))).is_err() {
                        break;
                    }
                }
            });
            for (index, (item, ingest)) in rx.into_iter().enumerate() {
                // dropping the receiver on error stops the reader
                handle(index, item, ingest, &mut c)?;
            }
            Ok(())
        })?;
    }
    let frames_ms = ms(start);

    let t = Instant::now();
    let mesh = extract_mesh(map.table(), &config.mesh_options());
    let mesh_ms = ms(t);

    let n = c.report.frames.max(1) as f64;
    let s = &c.stage_ms;
    c.report.ms_per_frame = StageTimes {
        ingest: s.ingest / n,
        integrate: s.integrate / n,
        merge: s.merge / n,
        stream: s.stream / n,
    };
    c.report.mesh_ms = mesh_ms;
    c.report.total_ms = ms(start);
    c.report.fps = if frames_ms > 0.0 {
        c.report.frames as f64 / (frames_ms / 1e3)
    } else {
        0.0
    };
    c.report.live_blocks_per_level = (0..levels as u8).map(|l| map.table().occupancy(l)).collect();
    c.report.archived_blocks = map.archive().len();
    c.report.archive_bytes = map.archive().bytes();
    c.report.mesh_vertices = mesh.vertices.len();
    c.report.mesh_faces = mesh.triangles.len();
    Ok(PipelineRun {
        map,
        mesh,
        report: c.report,
    })
}

/// A map holding every live and archived block of `map` in heaps large
/// enough for all of them, without streaming.
pub fn restore_all(map: &TsdfMap) -> Result<TsdfMap> {
    let mut grid = map.grid().clone();
    let mut blocks = Vec::new();
    for e in map.table().sorted_entries() {
        blocks.push(map.table().block(e.coord).expect("entry is live"));
    }
    for (_, rec) in map.archive().records() {
        blocks.push(decode_block(rec, &grid)?.0);
    }
    for (l, cap) in grid.heap_capacity.iter_mut().enumerate() {
        *cap = blocks.iter().filter(|b| b.level as usize == l).count().max(1);
    }
    grid.n_hash = grid.n_hash.max(blocks.len());
    let mut table = HashTable::new(grid.clone())?;
    for b in blocks {
        table.write_block(b)?;
    }
    let config = MapConfig {
        grid,
        streaming: None,
        ..map.config().clone()
    };
    Ok(TsdfMap::from_parts(config, table, Archive::new())?)
}
