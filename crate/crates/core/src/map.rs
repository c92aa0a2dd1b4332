//! The active hash table together with its archive and fusion settings.

use alloc::format;
use alloc::vec::Vec;

use crate::block::BlockCoord;
use crate::config::GridConfig;
use crate::error::{Error, Result};
use crate::hash::HashTable;
use crate::integrate::{self, DepthFrame, IntegrationStats, PointCloudFrame};
use crate::stream::{self, Archive, EvictionStats, Relevance, StreamMode, StreamingConfig};
use crate::{FxHashMap, FxHashSet};

#[derive(Clone, Debug, PartialEq)]
pub struct MapConfig {
    pub grid: GridConfig,
    /// Truncation distance τ (m).
    pub truncation: f64,
    /// Optional cap on per-voxel weight; `None` keeps true observation counts.
    pub max_weight: Option<u32>,
    /// Eviction policy; `None` means heap exhaustion is a hard error.
    pub streaming: Option<StreamingConfig>,
}

impl MapConfig {
    /// 1 cm voxels, τ = 4 cm, frustum streaming.
    pub fn depth_camera() -> Self {
        Self {
            grid: GridConfig::depth_camera(),
            truncation: 0.04,
            max_weight: None,
            streaming: Some(StreamingConfig::frustum()),
        }
    }

    /// 20 cm voxels, τ = 0.8 m, 50 m radius streaming.
    pub fn point_cloud() -> Self {
        Self {
            grid: GridConfig::point_cloud(),
            truncation: 0.8,
            max_weight: None,
            streaming: Some(StreamingConfig::radius(stream::DEFAULT_RADIUS)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.truncation > self.grid.fine_voxel_size() && self.truncation.is_finite()) {
            return Err(Error::Config(format!(
                "truncation {} must exceed the fine voxel size {}",
                self.truncation,
                self.grid.fine_voxel_size()
            )));
        }
        if let Some(s) = &self.streaming {
            if !(0.0 < s.low_water && s.low_water < s.fill_threshold && s.fill_threshold <= 1.0) {
                return Err(Error::Config(format!(
                    "streaming needs 0 < low_water ({}) < fill_threshold ({}) <= 1",
                    s.low_water, s.fill_threshold
                )));
            }
            if let StreamMode::Radius { radius } = s.mode {
                if !(radius > 0.0) {
                    return Err(Error::Config(format!("streaming radius must be > 0, got {radius}")));
                }
            }
        }
        if self.max_weight == Some(0) {
            return Err(Error::Config("max_weight must be >= 1".into()));
        }
        Ok(())
    }
}

/// A block reached by the current frame.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FrameBlock {
    pub coord: BlockCoord,
    pub handle: u32,
    pub level: u8,
}

/// Blocks touched by one frame, in first-touch order.
#[derive(Default)]
pub(crate) struct FrameBlocks {
    index: FxHashMap<BlockCoord, usize>,
    pub blocks: Vec<FrameBlock>,
}

#[derive(Clone, Debug)]
pub struct TsdfMap {
    table: HashTable,
    archive: Archive,
    config: MapConfig,
    /// Blocks touched by the most recent frame; never evicted.
    pinned: FxHashSet<BlockCoord>,
}

impl TsdfMap {
    pub fn new(config: MapConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            table: HashTable::new(config.grid.clone())?,
            archive: Archive::new(),
            config,
            pinned: FxHashSet::default(),
        })
    }

    /// Rebuilds a map from parts, e.g. after loading from disk.
    pub fn from_parts(config: MapConfig, table: HashTable, archive: Archive) -> Result<Self> {
        config.validate()?;
        if *table.config() != config.grid {
            return Err(Error::Config("table grid differs from map config".into()));
        }
        if let Some((c, _)) = archive.records().find(|(c, _)| table.contains(**c)) {
            return Err(Error::Contract(format!("block {c:?} is both live and archived")));
        }
        Ok(Self {
            table,
            archive,
            config,
            pinned: FxHashSet::default(),
        })
    }

    #[inline]
    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    #[inline]
    pub fn grid(&self) -> &GridConfig {
        self.table.config()
    }

    #[inline]
    pub fn table(&self) -> &HashTable {
        &self.table
    }

    #[inline]
    pub fn table_mut(&mut self) -> &mut HashTable {
        &mut self.table
    }

    #[inline]
    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    /// Table and archive borrowed together.
    pub fn parts_mut(&mut self) -> (&mut HashTable, &mut Archive) {
        (&mut self.table, &mut self.archive)
    }

    pub fn integrate_depth(&mut self, frame: &DepthFrame) -> Result<IntegrationStats> {
        integrate::integrate_depth(self, frame)
    }

    pub fn integrate_pointcloud(&mut self, frame: &PointCloudFrame) -> Result<IntegrationStats> {
        integrate::integrate_pointcloud(self, frame)
    }

    /// Eviction context for a depth frame under the configured mode.
    pub fn depth_relevance(&self, frame: &DepthFrame) -> Relevance {
        match self.config.streaming.map(|s| s.mode) {
            Some(StreamMode::Radius { radius }) => Relevance::Radius {
                center: frame.pose.translation,
                radius,
            },
            _ => Relevance::Frustum {
                pose: frame.pose,
                intrinsics: frame.intrinsics,
                width: frame.width,
                height: frame.height,
            },
        }
    }

    /// Eviction context for a point-cloud frame; frustum mode needs a camera.
    pub fn pointcloud_relevance(&self, frame: &PointCloudFrame) -> Result<Option<Relevance>> {
        match self.config.streaming.map(|s| s.mode) {
            None => Ok(None),
            Some(StreamMode::Radius { radius }) => Ok(Some(Relevance::Radius {
                center: frame.pose.translation,
                radius,
            })),
            Some(StreamMode::Frustum) => Err(Error::Config(
                "frustum streaming requires a depth sensor; use radius mode for point clouds".into(),
            )),
        }
    }

    /// Runs the configured eviction policy; a no-op without streaming or
    /// below the fill threshold. Blocks of the latest frame are kept.
    pub fn stream_out(&mut self, relevance: &Relevance) -> Result<EvictionStats> {
        let Some(cfg) = self.config.streaming else {
            let fill = stream::active_fill_fraction(&self.table);
            return Ok(EvictionStats {
                evicted: 0,
                fill_before: fill,
                fill_after: fill,
            });
        };
        let pinned = &self.pinned;
        stream::stream_out(&mut self.table, &mut self.archive, &cfg, relevance, |c| pinned.contains(&c))
    }

    pub fn stream_in(&mut self, coord: BlockCoord) -> Result<u32> {
        stream::stream_in(&mut self.table, &mut self.archive, coord)
    }

    /// Ensures `coord` is live (restoring it from the archive or inserting it
    /// at the finest level) and records it as touched by the current frame.
    pub(crate) fn touch(
        &mut self,
        coord: BlockCoord,
        frame: &mut FrameBlocks,
        relevance: Option<&Relevance>,
        stats: &mut IntegrationStats,
    ) -> Result<usize> {
        if let Some(&i) = frame.index.get(&coord) {
            return Ok(i);
        }
        let (handle, level) = match self.table.find_block(coord) {
            Some(hl) => hl,
            None => {
                let restore = self.archive.contains(coord);
                let r = self.admit(coord, restore);
                let r = match (r, relevance, self.config.streaming) {
                    (Err(Error::HeapExhausted { .. }), Some(rel), Some(cfg)) => {
                        let index = &frame.index;
                        let ev = stream::stream_out(&mut self.table, &mut self.archive, &cfg, rel, |c| {
                            index.contains_key(&c)
                        })?;
                        stats.blocks_evicted += ev.evicted;
                        self.admit(coord, restore)
                    }
                    (r, _, _) => r,
                };
                let hl = r?;
                if restore {
                    stats.blocks_streamed_in += 1;
                } else {
                    stats.blocks_allocated += 1;
                }
                hl
            }
        };
        let i = frame.blocks.len();
        frame.blocks.push(FrameBlock { coord, handle, level });
        frame.index.insert(coord, i);
        Ok(i)
    }

    fn admit(&mut self, coord: BlockCoord, restore: bool) -> Result<(u32, u8)> {
        if restore {
            let h = stream::stream_in(&mut self.table, &mut self.archive, coord)?;
            let (_, level) = self.table.find_block(coord).ok_or(Error::NotFound(coord))?;
            Ok((h, level))
        } else {
            let ins = self.table.insert_block(coord, 0)?;
            Ok((ins.handle, ins.level))
        }
    }

    pub(crate) fn finish_frame(&mut self, frame: FrameBlocks) {
        self.pinned = frame.blocks.iter().map(|b| b.coord).collect();
    }
}
