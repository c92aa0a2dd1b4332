use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Hard upper bound on resolution levels supported by the type model.
pub const MAX_LEVELS: usize = 4;

/// Geometry and capacity of the voxel grid and its hash table.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    /// Metric edge length of every block, identical at all levels (m).
    pub block_edge: f64,
    /// Voxels per block side at level 0.
    pub fine_voxels_per_side: u32,
    /// Number of resolution levels; level `l` has `fine_voxels_per_side >> l` voxels per side.
    pub num_levels: u8,
    /// Top-level hash slots.
    pub n_hash: usize,
    /// In-bucket entries per slot.
    pub bucket_capacity: usize,
    /// Maximum overflow-chain length per slot.
    pub overflow_capacity: usize,
    /// Block capacity of each level's heap.
    pub heap_capacity: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self::depth_camera()
    }
}

impl GridConfig {
    /// 1 cm fine voxels in 8 cm blocks.
    pub fn depth_camera() -> Self {
        Self {
            block_edge: 0.08,
            fine_voxels_per_side: 8,
            num_levels: 2,
            n_hash: 1 << 17,
            bucket_capacity: 10,
            overflow_capacity: 7,
            heap_capacity: vec![1 << 18, 1 << 17],
        }
    }

    /// 20 cm fine voxels in 1.6 m blocks.
    pub fn point_cloud() -> Self {
        Self {
            block_edge: 1.6,
            ..Self::depth_camera()
        }
    }

    /// Same geometry restricted to the finest level.
    pub fn single_resolution(mut self) -> Self {
        self.num_levels = 1;
        self.heap_capacity.truncate(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.block_edge > 0.0 && self.block_edge.is_finite()) {
            return Err(Error::Config(format!("block_edge must be > 0, got {}", self.block_edge)));
        }
        let levels = self.num_levels as usize;
        if levels == 0 || levels > MAX_LEVELS {
            return Err(Error::Config(format!(
                "num_levels must be in 1..={MAX_LEVELS}, got {levels}"
            )));
        }
        let coarsest = self.fine_voxels_per_side >> (levels - 1);
        if coarsest == 0 || coarsest << (levels - 1) != self.fine_voxels_per_side {
            return Err(Error::Config(format!(
                "{} voxels per side cannot be halved {} times",
                self.fine_voxels_per_side,
                levels - 1
            )));
        }
        if self.n_hash == 0 || self.bucket_capacity == 0 || self.overflow_capacity == 0 {
            return Err(Error::Config("hash capacities must be > 0".into()));
        }
        if self.heap_capacity.len() != levels || self.heap_capacity.iter().any(|&c| c == 0) {
            return Err(Error::Config(format!(
                "need {levels} non-zero heap capacities, got {:?}",
                self.heap_capacity
            )));
        }
        if self.heap_capacity.iter().any(|&c| c > u32::MAX as usize) {
            return Err(Error::Config("heap capacity exceeds u32 handles".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn voxels_per_side(&self, level: u8) -> u32 {
        self.fine_voxels_per_side >> level
    }

    #[inline]
    pub fn voxels_per_block(&self, level: u8) -> usize {
        let n = self.voxels_per_side(level) as usize;
        n * n * n
    }

    /// Voxel edge length at `level` (m).
    #[inline]
    pub fn voxel_size(&self, level: u8) -> f64 {
        self.block_edge / self.voxels_per_side(level) as f64
    }

    /// Finest voxel edge length (m).
    #[inline]
    pub fn fine_voxel_size(&self) -> f64 {
        self.voxel_size(0)
    }

    /// Number of half-fine-voxel units spanned by one block edge.
    #[inline]
    pub(crate) fn block_half_units(&self) -> i64 {
        2 * self.fine_voxels_per_side as i64
    }

    /// Voxel edge at `level` in half-fine-voxel units.
    #[inline]
    pub(crate) fn voxel_half_units(&self, level: u8) -> i64 {
        2i64 << level
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_geometry() {
        let c = GridConfig::depth_camera();
        c.validate().unwrap();
        assert_eq!(c.voxels_per_block(0), 512);
        assert_eq!(c.voxels_per_block(1), 64);
        assert!((c.voxel_size(0) - 0.01).abs() < 1e-15);
        assert!((c.voxel_size(1) - 2.0 * c.voxel_size(0)).abs() < 1e-15);
        assert!((GridConfig::point_cloud().fine_voxel_size() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_inconsistent_levels() {
        let mut c = GridConfig::depth_camera();
        c.num_levels = 5;
        assert!(c.validate().is_err());
        let mut c = GridConfig::depth_camera();
        c.heap_capacity = vec![10];
        assert!(c.validate().is_err());
        let mut c = GridConfig::depth_camera();
        c.fine_voxels_per_side = 6;
        c.num_levels = 3;
        assert!(c.validate().is_err());
    }
}
