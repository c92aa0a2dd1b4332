//! Block coordinates and dense voxel payloads.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::GridConfig;
use crate::error::{Error, Result};
use crate::math::{floor, Vec3};
use crate::voxel::Voxel;

/// Integer index of a block's lower corner, in units of the block edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockCoord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl BlockCoord {
    #[inline]
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    /// Block containing `p` for blocks of edge `block_edge`.
    #[inline]
    pub fn containing(p: Vec3, block_edge: f64) -> Self {
        Self::new(
            floor(p.x / block_edge) as i32,
            floor(p.y / block_edge) as i32,
            floor(p.z / block_edge) as i32,
        )
    }

    #[inline]
    pub fn origin(self, block_edge: f64) -> Vec3 {
        Vec3::new(self.x as f64, self.y as f64, self.z as f64) * block_edge
    }

    #[inline]
    pub fn center(self, block_edge: f64) -> Vec3 {
        self.origin(block_edge) + Vec3::splat(0.5 * block_edge)
    }

    #[inline]
    pub fn offset(self, dx: i32, dy: i32, dz: i32) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }

    #[inline]
    pub fn axis(self, a: usize) -> i32 {
        match a {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn to_array(self) -> [i32; 3] {
        [self.x, self.y, self.z]
    }

    /// The eight cuboid corners in world coordinates.
    pub fn corners(self, block_edge: f64) -> [Vec3; 8] {
        let o = self.origin(block_edge);
        let mut out = [o; 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = o + Vec3::new(
                (i & 1) as f64 * block_edge,
                ((i >> 1) & 1) as f64 * block_edge,
                ((i >> 2) & 1) as f64 * block_edge,
            );
        }
        out
    }
}

/// Linear offset of voxel `(x, y, z)` in a block with `n` voxels per side;
/// `x` varies fastest.
#[inline]
pub fn linear_index(x: usize, y: usize, z: usize, n: usize) -> usize {
    x + n * (y + n * z)
}

/// Inverse of [`linear_index`].
#[inline]
pub fn unlinear_index(idx: usize, n: usize) -> [usize; 3] {
    [idx % n, (idx / n) % n, idx / (n * n)]
}

/// Dense voxel payload of one block at a given level.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelBlock {
    pub coord: BlockCoord,
    pub level: u8,
    pub voxels: Vec<Voxel>,
}

impl VoxelBlock {
    pub fn empty(coord: BlockCoord, level: u8, config: &GridConfig) -> Self {
        Self {
            coord,
            level,
            voxels: vec![Voxel::EMPTY; config.voxels_per_block(level)],
        }
    }

    pub fn voxels_per_side(&self) -> usize {
        // cube root of a power-of-two-cubed length
        let mut n = 1;
        while n * n * n < self.voxels.len() {
            n += 1;
        }
        n
    }

    pub fn is_unobserved(&self) -> bool {
        self.voxels.iter().all(|v| v.weight == 0)
    }

    /// Sum of observation counts over all voxels.
    pub fn total_weight(&self) -> u64 {
        self.voxels.iter().map(|v| v.weight as u64).sum()
    }

    /// Row-major offset of the voxel containing `p`.
    pub fn voxel_index(&self, p: Vec3, config: &GridConfig) -> Result<usize> {
        voxel_index(p, self.coord, self.level, config)
    }
}

/// Row-major offset of the voxel containing world point `p` inside block
/// `coord` at `level`. Points on the upper faces belong to the next block.
pub fn voxel_index(p: Vec3, coord: BlockCoord, level: u8, config: &GridConfig) -> Result<usize> {
    let n = config.voxels_per_side(level) as i64;
    let nu = config.voxel_size(level);
    let o = coord.origin(config.block_edge);
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let i = floor((p[a] - o[a]) / nu) as i64;
        if !(0..n).contains(&i) || !p[a].is_finite() {
            return Err(Error::Contract(format!(
                "point {p:?} lies outside block {coord:?} at level {level}"
            )));
        }
        idx[a] = i as usize;
    }
    Ok(linear_index(idx[0], idx[1], idx[2], n as usize))
}

/// World position of the center of voxel `idx` in block `coord` at `level`.
#[inline]
pub fn voxel_center(coord: BlockCoord, level: u8, idx: usize, config: &GridConfig) -> Vec3 {
    let n = config.voxels_per_side(level) as usize;
    let nu = config.voxel_size(level);
    let [x, y, z] = unlinear_index(idx, n);
    coord.origin(config.block_edge)
        + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * nu
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voxel_index_corners() {
        let cfg = GridConfig::depth_camera();
        let b = BlockCoord::new(0, 0, 0);
        assert_eq!(voxel_index(Vec3::splat(0.005), b, 0, &cfg).unwrap(), 0);
        assert_eq!(voxel_index(Vec3::splat(0.075), b, 0, &cfg).unwrap(), 511);
        assert!(voxel_index(Vec3::splat(0.085), b, 0, &cfg).is_err());
        assert!(voxel_index(Vec3::splat(-0.001), b, 0, &cfg).is_err());
    }

    #[test]
    fn coarse_center_lands_on_a_central_voxel() {
        // oracle: enumerate every voxel and keep those whose closed cell contains the point
        let cfg = GridConfig::depth_camera();
        let b = BlockCoord::new(-2, 3, 1);
        let p = b.center(cfg.block_edge);
        let idx = voxel_index(p, b, 1, &cfg).unwrap();
        let nu = cfg.voxel_size(1);
        let central: Vec<usize> = (0..64)
            .filter(|&i| {
                let c = voxel_center(b, 1, i, &cfg);
                (0..3).all(|a| (p[a] - c[a]).abs() <= 0.5 * nu + 1e-12)
            })
            .collect();
        assert_eq!(central.len(), 8);
        assert!(central.contains(&idx));
    }

    #[test]
    fn negative_block_containment() {
        let b = BlockCoord::containing(Vec3::new(-0.01, 0.0, 0.159), 0.08);
        assert_eq!(b, BlockCoord::new(-1, 0, 1));
        let cfg = GridConfig::depth_camera();
        let c = voxel_center(b, 0, 0, &cfg);
        assert!((c - Vec3::new(-0.075, 0.005, 0.085)).norm() < 1e-12);
        assert_eq!(voxel_index(c, b, 0, &cfg).unwrap(), 0);
    }
}
