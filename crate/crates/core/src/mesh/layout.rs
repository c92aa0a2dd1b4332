//! Cell bounds of a block after truncation against finer neighbours.

use alloc::vec::Vec;

use crate::block::BlockCoord;
use crate::config::GridConfig;

/// Block faces in `[-x, +x, -y, +y, -z, +z]` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    NegX = 0,
    PosX = 1,
    NegY = 2,
    PosY = 3,
    NegZ = 4,
    PosZ = 5,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::NegX, Face::PosX, Face::NegY, Face::PosY, Face::NegZ, Face::PosZ];

    #[inline]
    pub fn axis(self) -> usize {
        self as usize / 2
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self as usize % 2 == 1
    }

    /// Neighbouring block across this face.
    pub fn neighbor(self, c: BlockCoord) -> BlockCoord {
        let d = if self.is_positive() { 1 } else { -1 };
        match self.axis() {
            0 => c.offset(d, 0, 0),
            1 => c.offset(0, d, 0),
            _ => c.offset(0, 0, d),
        }
    }
}

/// Corner positions of a block's own-level cells along each axis, in units of
/// half a fine voxel relative to the block origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellExtent {
    pub axes: [Vec<i64>; 3],
    /// Faces shared with a finer neighbour.
    pub finer: [bool; 6],
}

impl CellExtent {
    /// Lower and upper bound of the (possibly truncated) cell box on `axis`.
    pub fn bounds(&self, axis: usize) -> (i64, i64) {
        let a = &self.axes[axis];
        (a[0], a[a.len() - 1])
    }

    /// Bounds in meters for a block at `coord`.
    pub fn world_bounds(&self, coord: BlockCoord, grid: &GridConfig) -> [(f64, f64); 3] {
        let unit = 0.5 * grid.fine_voxel_size();
        core::array::from_fn(|a| {
            let (lo, hi) = self.bounds(a);
            let o = coord.axis(a) as f64 * grid.block_edge;
            (o + lo as f64 * unit, o + hi as f64 * unit)
        })
    }

    pub fn is_truncated(&self) -> bool {
        self.finer.iter().any(|&f| f)
    }
}

/// Cell corner lattice of a block at `level` whose faces flagged in `finer`
/// border finer blocks. Each such face pulls the outermost cells in by half
/// a voxel of this level; finest-level blocks are never truncated.
pub fn effective_cell_extent(level: u8, grid: &GridConfig, finer: [bool; 6]) -> CellExtent {
    let bu = grid.block_half_units();
    let vu = grid.voxel_half_units(level);
    let finer = if level == 0 { [false; 6] } else { finer };
    let axes = core::array::from_fn(|a| {
        let lo = if finer[2 * a] { vu / 2 } else { 0 };
        let hi = if finer[2 * a + 1] { bu - vu / 2 } else { bu };
        let mut v = Vec::with_capacity((bu / vu + 2) as usize);
        v.push(lo);
        v.extend((1..bu / vu).map(|i| i * vu).filter(|&p| p > lo && p < hi));
        v.push(hi);
        v
    });
    CellExtent { axes, finer }
}
