//! Capacity-driven eviction of blocks to a host-side archive.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::block::BlockCoord;
use crate::codec::{decode_block, encode_block};
use crate::error::{Error, Result};
use crate::hash::HashTable;
use crate::integrate::{Intrinsics, SensorPose};
use crate::math::Vec3;

pub const DEFAULT_FILL_THRESHOLD: f64 = 0.85;
pub const DEFAULT_LOW_WATER: f64 = 0.70;
pub const DEFAULT_RADIUS: f64 = 50.0;

/// Serialized blocks that have left the active table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    records: BTreeMap<BlockCoord, Vec<u8>>,
    bytes: usize,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Total serialized size of archived records.
    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn contains(&self, coord: BlockCoord) -> bool {
        self.records.contains_key(&coord)
    }

    /// Records in coordinate order.
    pub fn records(&self) -> impl Iterator<Item = (&BlockCoord, &[u8])> {
        self.records.iter().map(|(c, r)| (c, r.as_slice()))
    }

    pub fn insert(&mut self, coord: BlockCoord, record: Vec<u8>) {
        self.bytes += record.len();
        if let Some(old) = self.records.insert(coord, record) {
            self.bytes -= old.len();
        }
    }

    pub fn take(&mut self, coord: BlockCoord) -> Option<Vec<u8>> {
        let r = self.records.remove(&coord)?;
        self.bytes -= r.len();
        Some(r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StreamMode {
    /// Evict blocks entirely outside the current camera frustum.
    Frustum,
    /// Evict blocks whose center is farther than `radius` from the sensor.
    Radius { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamingConfig {
    pub fill_threshold: f64,
    pub low_water: f64,
    pub mode: StreamMode,
}

impl StreamingConfig {
    pub fn frustum() -> Self {
        Self {
            fill_threshold: DEFAULT_FILL_THRESHOLD,
            low_water: DEFAULT_LOW_WATER,
            mode: StreamMode::Frustum,
        }
    }

    pub fn radius(radius: f64) -> Self {
        Self {
            mode: StreamMode::Radius { radius },
            ..Self::frustum()
        }
    }
}

/// The current sensor view used to decide which blocks are still relevant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Relevance {
    Frustum {
        pose: SensorPose,
        intrinsics: Intrinsics,
        width: usize,
        height: usize,
    },
    Radius {
        center: Vec3,
        radius: f64,
    },
}

impl Relevance {
    fn sensor_position(&self) -> Vec3 {
        match self {
            Relevance::Frustum { pose, .. } => pose.translation,
            Relevance::Radius { center, .. } => *center,
        }
    }

    /// True if a block with these world corners is outside the relevant region.
    fn is_irrelevant(&self, coord: BlockCoord, block_edge: f64) -> bool {
        match self {
            Relevance::Frustum {
                pose,
                intrinsics,
                width,
                height,
            } => coord.corners(block_edge).iter().all(|&c| {
                match intrinsics.project(pose.to_sensor(c)) {
                    None => true,
                    Some((u, v)) => {
                        !(u >= 0.0 && v >= 0.0 && u < *width as f64 && v < *height as f64)
                    }
                }
            }),
            Relevance::Radius { center, radius } => {
                coord.center(block_edge).distance(*center) > *radius
            }
        }
    }
}

/// Maximum over levels of live blocks / heap capacity.
pub fn active_fill_fraction(table: &HashTable) -> f64 {
    (0..table.num_levels())
        .map(|l| table.occupancy(l) as f64 / table.capacity(l) as f64)
        .fold(0.0, f64::max)
}

/// Live blocks outside the relevant region, farthest from the sensor first.
pub fn select_evictable(table: &HashTable, relevance: &Relevance) -> Vec<BlockCoord> {
    let edge = table.config().block_edge;
    let eye = relevance.sensor_position();
    let mut out: Vec<(f64, BlockCoord)> = table
        .entries()
        .into_iter()
        .filter(|e| relevance.is_irrelevant(e.coord, edge))
        .map(|e| (e.coord.center(edge).distance(eye), e.coord))
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    out.into_iter().map(|(_, c)| c).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvictionStats {
    pub evicted: usize,
    pub fill_before: f64,
    pub fill_after: f64,
}

/// Evicts irrelevant blocks once the fill reaches the threshold, until it is at
/// or below the low-water mark. Blocks for which `pinned` returns true are
/// never evicted.
pub fn stream_out(
    table: &mut HashTable,
    archive: &mut Archive,
    config: &StreamingConfig,
    relevance: &Relevance,
    pinned: impl Fn(BlockCoord) -> bool,
) -> Result<EvictionStats> {
    let fill_before = active_fill_fraction(table);
    if fill_before < config.fill_threshold {
        return Ok(EvictionStats {
            evicted: 0,
            fill_before,
            fill_after: fill_before,
        });
    }
    let candidates: Vec<BlockCoord> = select_evictable(table, relevance)
        .into_iter()
        .filter(|&c| !pinned(c))
        .collect();
    let level_fill = |t: &HashTable, l: u8| t.occupancy(l) as f64 / t.capacity(l) as f64;
    let mut evicted = 0;
    for &coord in &candidates {
        if active_fill_fraction(table) <= config.low_water {
            break;
        }
        let (_, level) = table.find_block(coord).ok_or(Error::NotFound(coord))?;
        // evicting from a level already below the mark does not help
        if level_fill(table, level) <= config.low_water {
            continue;
        }
        let block = table.remove_block(coord)?;
        archive.insert(coord, encode_block(&block));
        evicted += 1;
    }
    let fill_after = active_fill_fraction(table);
    if fill_after >= config.fill_threshold {
        return Err(Error::CapacityExceeded {
            fill: fill_after,
            threshold: config.fill_threshold,
            evicted,
            candidates: candidates.len(),
        });
    }
    Ok(EvictionStats {
        evicted,
        fill_before,
        fill_after,
    })
}

/// Re-inserts an archived block with its exact payload.
pub fn stream_in(table: &mut HashTable, archive: &mut Archive, coord: BlockCoord) -> Result<u32> {
    if table.contains(coord) {
        return Err(Error::Contract(alloc::format!("block {coord:?} is already live")));
    }
    let record = archive.take(coord).ok_or(Error::NotFound(coord))?;
    let block = match decode_block(&record, table.config()) {
        Ok((b, _)) => b,
        Err(e) => {
            archive.insert(coord, record);
            return Err(e);
        }
    };
    match table.write_block(block) {
        Ok(h) => Ok(h),
        Err(e) => {
            archive.insert(coord, record);
            Err(e)
        }
    }
}
