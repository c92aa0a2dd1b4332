//! Marching Cubes over every live block.
//!
//! A block meshes exactly its own cuboid. Finest-level blocks use one cell per
//! voxel. A coarser block uses its own voxel lattice, except that each face
//! shared with a finer block pulls the boundary cells in by half a coarse
//! voxel (see [`effective_cell_extent`]); the slab this frees is meshed with
//! fine-lattice cells. Their corners on the shared face are sampled directly,
//! so they agree with the finer neighbour. Corners inside the block are
//! interpolated along the coarse cell edges, so they agree with the
//! truncated coarse cells.

use alloc::vec;
use alloc::vec::Vec;

use super::collapse::collapse_vertices;
use super::layout::{effective_cell_extent, CellExtent, Face};
use super::sample::{CornerSample, CornerSampler};
use super::tables::{CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRIANGLE_TABLE};
use super::{Mesh, Vertex};
use crate::hash::{HashEntry, HashTable};
use crate::math::Vec3;
use crate::par;
use crate::FxHashMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshOptions {
    pub iso: f64,
    /// Vertex collapsing radius (m); `None` skips collapsing.
    pub collapse_eps: Option<f64>,
}

impl MeshOptions {
    /// Iso 0 and a collapse radius of a quarter fine voxel.
    pub fn new(fine_voxel_size: f64) -> Self {
        Self {
            iso: 0.0,
            collapse_eps: Some(0.25 * fine_voxel_size),
        }
    }

    pub fn without_collapse() -> Self {
        Self {
            iso: 0.0,
            collapse_eps: None,
        }
    }
}

/// Zero-crossing vertex on cell edge `edge`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellVertex {
    pub edge: usize,
    pub position: Vec3,
    /// Unit gradient of the cell's trilinear interpolant; zero if degenerate.
    pub normal: Vec3,
    pub color: [f32; 3],
}

/// Triangulates one cell spanning `min..max` with corners in table order.
/// Returns nothing if any corner is invalid. Triangles wind counter-clockwise
/// when seen from the positive side.
pub fn cell_triangles(corners: &[CornerSample; 8], min: Vec3, max: Vec3, iso: f64) -> Vec<[CellVertex; 3]> {
    let mut verts = [None; 12];
    let mut tris = Vec::new();
    march(corners, min, max, iso, &mut verts, &mut tris);
    tris.into_iter()
        .map(|t| t.map(|e| verts[e].expect("vertex computed for emitted edge")))
        .collect()
}

#[inline]
fn corner_position(i: usize, min: Vec3, max: Vec3) -> Vec3 {
    let o = CORNER_OFFSETS[i];
    Vec3::new(
        if o[0] == 0 { min.x } else { max.x },
        if o[1] == 0 { min.y } else { max.y },
        if o[2] == 0 { min.z } else { max.z },
    )
}

fn edge_vertex(edge: usize, corners: &[CornerSample; 8], min: Vec3, max: Vec3, iso: f64) -> CellVertex {
    let [a, b] = EDGE_CORNERS[edge];
    let (va, vb) = (corners[a].sdf, corners[b].sdf);
    let t = if vb == va { 0.5 } else { (iso - va) / (vb - va) };
    let pa = corner_position(a, min, max);
    let pb = corner_position(b, min, max);
    let position = pa.lerp(pb, t);
    let ext = max - min;
    let s = Vec3::new(
        (position.x - min.x) / ext.x,
        (position.y - min.y) / ext.y,
        (position.z - min.z) / ext.z,
    );
    let mut g = [0.0; 3];
    for (i, c) in corners.iter().enumerate() {
        let o = CORNER_OFFSETS[i];
        let f = |ax: usize| if o[ax] == 1 { s[ax] } else { 1.0 - s[ax] };
        let d = |ax: usize| if o[ax] == 1 { 1.0 } else { -1.0 };
        g[0] += c.sdf * d(0) * f(1) * f(2);
        g[1] += c.sdf * f(0) * d(1) * f(2);
        g[2] += c.sdf * f(0) * f(1) * d(2);
    }
    let grad = Vec3::new(g[0] / ext.x, g[1] / ext.y, g[2] / ext.z);
    let ca = corners[a].color;
    let cb = corners[b].color;
    let tf = t as f32;
    CellVertex {
        edge,
        position,
        normal: grad.normalized().unwrap_or(Vec3::ZERO),
        color: core::array::from_fn(|k| ca[k] + (cb[k] - ca[k]) * tf),
    }
}

/// Marching Cubes on one cell: fills `verts` for crossing edges and appends
/// each triangle as three edge indices.
fn march(
    corners: &[CornerSample; 8],
    min: Vec3,
    max: Vec3,
    iso: f64,
    verts: &mut [Option<CellVertex>; 12],
    tris: &mut Vec<[usize; 3]>,
) {
    if corners.iter().any(|c| !c.valid) {
        return;
    }
    let mut case = 0usize;
    for (i, c) in corners.iter().enumerate() {
        if c.sdf < iso {
            case |= 1 << i;
        }
    }
    if EDGE_TABLE[case] == 0 {
        return;
    }
    let row = &TRIANGLE_TABLE[case];
    let mut k = 0;
    while k + 2 < row.len() && row[k] >= 0 {
        let tri = [row[k] as usize, row[k + 2] as usize, row[k + 1] as usize];
        for &e in &tri {
            if verts[e].is_none() {
                verts[e] = Some(edge_vertex(e, corners, min, max, iso));
            }
        }
        tris.push(tri);
        k += 3;
    }
}

type EdgeKey = ([i64; 3], [i64; 3]);

#[derive(Default)]
struct BlockMesh {
    keys: Vec<EdgeKey>,
    verts: Vec<CellVertex>,
    tris: Vec<[u32; 3]>,
}

struct BlockCtx<'s, 'a> {
    sampler: &'s CornerSampler<'a>,
    level: u8,
    origin: [i64; 3],
    ext: CellExtent,
    /// Bracketing positions per axis for interpolated corners.
    lambda: [Vec<i64>; 3],
    bu: i64,
    raw: Vec<Option<CornerSample>>,
    value: Vec<Option<CornerSample>>,
}

impl BlockCtx<'_, '_> {
    #[inline]
    fn slot(&self, q: [i64; 3]) -> usize {
        let n = (self.bu / 2 + 1) as usize;
        let i = |a: usize| (q[a] / 2) as usize;
        i(0) + n * (i(1) + n * i(2))
    }

    fn raw(&mut self, q: [i64; 3]) -> CornerSample {
        let s = self.slot(q);
        if let Some(v) = self.raw[s] {
            return v;
        }
        let v = self.sampler.sample_units([
            self.origin[0] + q[0],
            self.origin[1] + q[1],
            self.origin[2] + q[2],
        ]);
        self.raw[s] = Some(v);
        v
    }

    fn on_finer_face(&self, q: [i64; 3]) -> bool {
        (0..3).any(|a| (q[a] == 0 && self.ext.finer[2 * a]) || (q[a] == self.bu && self.ext.finer[2 * a + 1]))
    }

    /// Corner value at local position `q` (even units).
    fn value(&mut self, q: [i64; 3]) -> CornerSample {
        if self.level == 0 || !self.ext.is_truncated() || self.on_finer_face(q) {
            return self.raw(q);
        }
        let s = self.slot(q);
        if let Some(v) = self.value[s] {
            return v;
        }
        let mut brackets = [(q[0], q[0], 0.0); 3];
        for (a, br) in brackets.iter_mut().enumerate() {
            let lam = &self.lambda[a];
            if lam.binary_search(&q[a]).is_err() {
                let hi = lam.partition_point(|&p| p < q[a]);
                let (l, h) = (lam[hi - 1], lam[hi]);
                *br = (l, h, (q[a] - l) as f64 / (h - l) as f64);
            } else {
                *br = (q[a], q[a], 0.0);
            }
        }
        let mut out = CornerSample {
            sdf: 0.0,
            valid: true,
            source_level: u8::MAX,
            color: [0.0; 3],
        };
        for c in 0..8 {
            let mut w = 1.0;
            let mut p = [0i64; 3];
            let mut skip = false;
            for a in 0..3 {
                let (l, h, t) = brackets[a];
                let upper = (c >> a) & 1 == 1;
                if l == h && upper {
                    skip = true;
                    break;
                }
                p[a] = if upper { h } else { l };
                w *= if l == h {
                    1.0
                } else if upper {
                    t
                } else {
                    1.0 - t
                };
            }
            if skip || w == 0.0 {
                continue;
            }
            let r = self.raw(p);
            if !r.valid {
                out = CornerSample::INVALID;
                break;
            }
            out.sdf += w * r.sdf;
            for k in 0..3 {
                out.color[k] += (w as f32) * r.color[k];
            }
            out.source_level = out.source_level.min(r.source_level);
        }
        self.value[s] = Some(out);
        out
    }
}

fn mesh_block(sampler: &CornerSampler<'_>, table: &HashTable, e: &HashEntry, iso: f64) -> BlockMesh {
    let mut out = BlockMesh::default();
    // every cell has a corner that only sees this block's voxels
    match table.voxels(e.level, e.handle) {
        Some(v) if v.iter().any(|v| v.weight > 0) => {}
        _ => return out,
    }
    let grid = sampler.grid();
    let bu = grid.block_half_units();
    let finer: [bool; 6] = core::array::from_fn(|f| {
        sampler
            .level_of(Face::ALL[f].neighbor(e.coord))
            .is_some_and(|l| l < e.level)
    });
    let ext = effective_cell_extent(e.level, grid, finer);
    let lambda = core::array::from_fn(|a| {
        let mut l = ext.axes[a].clone();
        if finer[2 * a] {
            l.insert(0, 0);
        }
        if finer[2 * a + 1] {
            l.push(bu);
        }
        l
    });
    let n = (bu / 2 + 1) as usize;
    let mut ctx = BlockCtx {
        sampler,
        level: e.level,
        origin: [e.coord.x as i64 * bu, e.coord.y as i64 * bu, e.coord.z as i64 * bu],
        ext,
        lambda,
        bu,
        raw: vec![None; n * n * n],
        value: vec![None; n * n * n],
    };
    let unit = sampler.unit();
    let mut local: FxHashMap<EdgeKey, u32> = FxHashMap::default();
    let mut tris: Vec<[usize; 3]> = Vec::new();

    let mut cell = |ctx: &mut BlockCtx, lo: [i64; 3], hi: [i64; 3], out: &mut BlockMesh| {
        let mut corners = [CornerSample::INVALID; 8];
        let mut qs = [[0i64; 3]; 8];
        for (i, off) in CORNER_OFFSETS.iter().enumerate() {
            let q: [i64; 3] = core::array::from_fn(|a| if off[a] == 0 { lo[a] } else { hi[a] });
            qs[i] = q;
            corners[i] = ctx.value(q);
            if !corners[i].valid {
                return;
            }
        }
        let world = |q: [i64; 3]| {
            Vec3::new(
                (ctx.origin[0] + q[0]) as f64 * unit,
                (ctx.origin[1] + q[1]) as f64 * unit,
                (ctx.origin[2] + q[2]) as f64 * unit,
            )
        };
        let (min, max) = (world(lo), world(hi));
        let mut verts = [None; 12];
        tris.clear();
        march(&corners, min, max, iso, &mut verts, &mut tris);
        let origin = ctx.origin;
        for tri in tris.iter() {
            let idx = tri.map(|edge| {
                let [a, b] = EDGE_CORNERS[edge];
                let ga: [i64; 3] = core::array::from_fn(|k| origin[k] + qs[a][k]);
                let gb: [i64; 3] = core::array::from_fn(|k| origin[k] + qs[b][k]);
                let key = if ga <= gb { (ga, gb) } else { (gb, ga) };
                let v = verts[edge].expect("vertex computed for emitted edge");
                *local.entry(key).or_insert_with(|| {
                    out.keys.push(key);
                    out.verts.push(CellVertex { normal: Vec3::ZERO, ..v });
                    (out.verts.len() - 1) as u32
                })
            });
            for (&i, &edge) in idx.iter().zip(tri) {
                let v = verts[edge].expect("vertex computed for emitted edge");
                out.verts[i as usize].normal += v.normal;
            }
            out.tris.push(idx);
        }
    };

    let axes = ctx.ext.axes.clone();
    for wz in axes[2].windows(2) {
        for wy in axes[1].windows(2) {
            for wx in axes[0].windows(2) {
                cell(&mut ctx, [wx[0], wy[0], wz[0]], [wx[1], wy[1], wz[1]], &mut out);
            }
        }
    }
    if e.level > 0 && ctx.ext.is_truncated() {
        let bounds: [(i64, i64); 3] = core::array::from_fn(|a| ctx.ext.bounds(a));
        let cells = bu / 2;
        for z in 0..cells {
            for y in 0..cells {
                for x in 0..cells {
                    let lo = [2 * x, 2 * y, 2 * z];
                    let hi = [lo[0] + 2, lo[1] + 2, lo[2] + 2];
                    let inside = (0..3).all(|a| lo[a] >= bounds[a].0 && hi[a] <= bounds[a].1);
                    if !inside {
                        cell(&mut ctx, lo, hi, &mut out);
                    }
                }
            }
        }
    }
    out
}

/// Extracts the `iso` level set of every live block, merges shared edge
/// vertices, and collapses near-coincident vertices.
pub fn extract_mesh(table: &HashTable, opts: &MeshOptions) -> Mesh {
    let sampler = CornerSampler::new(table);
    let entries = table.sorted_entries();
    let parts = par::map(&entries, |e| mesh_block(&sampler, table, e, opts.iso));

    let mut mesh = Mesh::default();
    let mut global: FxHashMap<EdgeKey, u32> = FxHashMap::default();
    let mut normals: Vec<Vec3> = Vec::new();
    for part in parts {
        let remap: Vec<u32> = part
            .keys
            .iter()
            .zip(&part.verts)
            .map(|(k, v)| {
                let i = *global.entry(*k).or_insert_with(|| {
                    mesh.vertices.push(Vertex {
                        position: v.position,
                        normal: Vec3::ZERO,
                        color: v.color,
                    });
                    normals.push(Vec3::ZERO);
                    (mesh.vertices.len() - 1) as u32
                });
                normals[i as usize] += v.normal;
                i
            })
            .collect();
        for t in &part.tris {
            let t = t.map(|i| remap[i as usize]);
            if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] {
                mesh.triangles.push(t);
            }
        }
    }
    finalize_normals(&mut mesh, &normals);
    match opts.collapse_eps {
        Some(eps) => collapse_vertices(&mesh, eps),
        None => mesh,
    }
}

/// Normalizes accumulated gradients, falling back to face normals.
pub(crate) fn finalize_normals(mesh: &mut Mesh, acc: &[Vec3]) {
    let mut face = vec![Vec3::ZERO; mesh.vertices.len()];
    for i in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(i);
        let n = (b - a).cross(c - a);
        for &v in &mesh.triangles[i] {
            face[v as usize] += n;
        }
    }
    for (i, v) in mesh.vertices.iter_mut().enumerate() {
        v.normal = acc[i]
            .normalized()
            .or_else(|| face[i].normalized())
            .unwrap_or(Vec3::new(0.0, 0.0, 1.0));
    }
}
