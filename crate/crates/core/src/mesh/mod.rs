//! Isosurface extraction over the mixed-resolution grid.
//!
//! Marching Cubes cells are voxel cubes: their corners sit on the voxel
//! corner lattice and corner values are interpolated from the voxels around
//! each corner. Positions are handled internally as integers in units of half
//! a fine voxel, so every lattice of every level is exact.

mod collapse;
mod extract;
mod layout;
mod sample;
pub(crate) mod tables;

pub use collapse::collapse_vertices;
pub use extract::{cell_triangles, extract_mesh, CellVertex, MeshOptions};
pub use layout::{effective_cell_extent, CellExtent, Face};
pub use sample::{sample_corner, CornerSample, CornerSampler};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vertex {
    pub position: Vec3,
    /// Unit normal pointing towards positive distances (free space).
    pub normal: Vec3,
    pub color: [f32; 3],
}

/// Indexed triangle mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize].position,
            self.vertices[b as usize].position,
            self.vertices[c as usize].position,
        ]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Checks index ranges and unit normals.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::Contract(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if let Some((i, v)) = self
            .vertices
            .iter()
            .enumerate()
            .find(|(_, v)| (v.normal.norm() - 1.0).abs() > 1e-4)
        {
            return Err(Error::Contract(format!("vertex {i} normal {:?} is not unit length", v.normal)));
        }
        Ok(())
    }
}
