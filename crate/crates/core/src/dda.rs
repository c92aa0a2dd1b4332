//! Amanatides–Woo traversal of the block grid.

use alloc::vec::Vec;

use crate::block::BlockCoord;
use crate::math::{floor, Vec3};

/// Blocks whose cuboid the segment `origin → endpoint` intersects, in
/// traversal order, each exactly once.
///
/// Cells are half-open, so a segment that only grazes a face or edge at a
/// single parameter value without entering the neighbour does not visit it.
/// When the ray crosses an edge or corner exactly, the axes are stepped one
/// at a time (lowest axis first), which may visit a block touched only at
/// that point.
pub fn dda_blocks(origin: Vec3, endpoint: Vec3, block_edge: f64) -> Vec<BlockCoord> {
    let mut out = Vec::new();
    dda_visit(origin, endpoint, block_edge, |c| out.push(c));
    out
}

/// Callback form of [`dda_blocks`].
pub fn dda_visit(origin: Vec3, endpoint: Vec3, block_edge: f64, mut visit: impl FnMut(BlockCoord)) {
    debug_assert!(block_edge > 0.0);
    let a = origin / block_edge;
    let b = endpoint / block_edge;
    let d = b - a;
    let mut cell = [floor(a.x) as i64, floor(a.y) as i64, floor(a.z) as i64];
    let last = [floor(b.x) as i64, floor(b.y) as i64, floor(b.z) as i64];

    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for i in 0..3 {
        if d[i] > 0.0 {
            step[i] = 1;
            t_delta[i] = 1.0 / d[i];
            t_max[i] = ((cell[i] + 1) as f64 - a[i]) / d[i];
        } else if d[i] < 0.0 {
            step[i] = -1;
            t_delta[i] = -1.0 / d[i];
            t_max[i] = (cell[i] as f64 - a[i]) / d[i];
        }
    }

    let emit = |c: &[i64; 3], visit: &mut dyn FnMut(BlockCoord)| {
        visit(BlockCoord::new(c[0] as i32, c[1] as i32, c[2] as i32))
    };
    emit(&cell, &mut visit);
    // Manhattan distance bounds the number of steps.
    let mut remaining: i64 = (0..3).map(|i| (last[i] - cell[i]).abs()).sum();
    while remaining > 0 {
        let mut axis = 0;
        for i in 1..3 {
            if t_max[i] < t_max[axis] {
                axis = i;
            }
        }
        if t_max[axis] > 1.0 {
            break;
        }
        cell[axis] += step[axis];
        t_max[axis] += t_delta[axis];
        remaining -= 1;
        emit(&cell, &mut visit);
    }
}
