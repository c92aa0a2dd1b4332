//! Variance-driven re-allocation of fine blocks at the coarser level.

use alloc::format;
use alloc::vec::Vec;

use crate::block::{linear_index, BlockCoord, VoxelBlock};
use crate::config::GridConfig;
use crate::error::{Error, Result};
use crate::hash::HashTable;
use crate::par;
use crate::voxel::Voxel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeConfig {
    /// Blocks with mean variance strictly below this merge (m²).
    pub sigma_threshold: f64,
    /// Minimum fraction of voxels with W ≥ 2 for the mean to count.
    pub min_eligible_fraction: f64,
    /// Minimum mean weight over eligible voxels.
    pub min_mean_weight: f64,
    /// Frames between merge passes.
    pub cadence: usize,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            sigma_threshold: 2.5e-5,
            min_eligible_fraction: 0.05,
            min_mean_weight: 3.0,
            cadence: 10,
        }
    }
}

/// Mean of `σ²` over voxels with `W ≥ 2`, or `+∞` when fewer than
/// `min_eligible_fraction` of the voxels qualify.
pub fn block_mean_variance(voxels: &[Voxel], min_eligible_fraction: f64) -> f64 {
    let (n, sum) = voxels
        .iter()
        .filter(|v| v.weight >= 2)
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v.variance()));
    if n == 0 || (n as f64) < min_eligible_fraction * voxels.len() as f64 {
        return f64::INFINITY;
    }
    sum / n as f64
}

/// Mean weight over voxels with `W ≥ 2`; zero if there are none.
fn eligible_mean_weight(voxels: &[Voxel]) -> f64 {
    let (n, w) = voxels
        .iter()
        .filter(|v| v.weight >= 2)
        .fold((0usize, 0u64), |(n, w), v| (n + 1, w + v.weight as u64));
    if n == 0 {
        0.0
    } else {
        w as f64 / n as f64
    }
}

fn is_candidate(voxels: &[Voxel], cfg: &MergeConfig) -> bool {
    block_mean_variance(voxels, cfg.min_eligible_fraction) < cfg.sigma_threshold
        && eligible_mean_weight(voxels) >= cfg.min_mean_weight
}

/// Level-0 blocks that pass the variance and evidence gates, in coordinate order.
pub fn select_merge_candidates(table: &HashTable, cfg: &MergeConfig) -> Result<Vec<BlockCoord>> {
    if !(cfg.sigma_threshold > 0.0) {
        return Err(Error::Contract(format!(
            "sigma_threshold must be > 0, got {}",
            cfg.sigma_threshold
        )));
    }
    let fine: Vec<_> = table
        .sorted_entries()
        .into_iter()
        .filter(|e| e.level == 0)
        .collect();
    let keep = par::map(&fine, |e| {
        table
            .voxels(0, e.handle)
            .is_some_and(|v| is_candidate(v, cfg))
    });
    Ok(fine
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(e, _)| e.coord)
        .collect())
}

/// Aggregates each 2×2×2 group of voxels into one voxel of the next level.
pub fn downsample_block(fine: &VoxelBlock, config: &GridConfig) -> Result<VoxelBlock> {
    if fine.level + 1 >= config.num_levels {
        return Err(Error::Contract(format!(
            "block {:?} at level {} has no coarser level",
            fine.coord, fine.level
        )));
    }
    let nf = config.voxels_per_side(fine.level) as usize;
    if fine.voxels.len() != nf * nf * nf {
        return Err(Error::Contract(format!(
            "block {:?} has {} voxels, expected {}",
            fine.coord,
            fine.voxels.len(),
            nf * nf * nf
        )));
    }
    let mut coarse = VoxelBlock::empty(fine.coord, fine.level + 1, config);
    let nc = nf / 2;
    for z in 0..nc {
        for y in 0..nc {
            for x in 0..nc {
                let mut acc = Voxel::EMPTY;
                for c in 0..8 {
                    let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                    acc = acc.combine(&fine.voxels[linear_index(2 * x + dx, 2 * y + dy, 2 * z + dz, nf)]);
                }
                coarse.voxels[linear_index(x, y, z, nc)] = acc;
            }
        }
    }
    Ok(coarse)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MergeStats {
    pub merged: usize,
}

/// Replaces every merge candidate by its downsampled block at the same coordinate.
pub fn apply_merges(table: &mut HashTable, cfg: &MergeConfig) -> Result<MergeStats> {
    let candidates = select_merge_candidates(table, cfg)?;
    let grid = table.config().clone();
    for &coord in &candidates {
        let fine = table.remove_block(coord)?;
        let coarse = downsample_block(&fine, &grid)?;
        if let Err(e) = table.write_block(coarse) {
            // keep the map intact if the coarse heap is full
            table.write_block(fine)?;
            return Err(e);
        }
    }
    Ok(MergeStats {
        merged: candidates.len(),
    })
}
