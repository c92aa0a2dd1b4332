//! Corner samples gathered across resolution levels.

use crate::block::{linear_index, BlockCoord};
use crate::config::GridConfig;
use crate::hash::HashTable;
use crate::math::{round, Vec3};
use crate::voxel::Voxel;
use crate::FxHashMap;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CornerSample {
    /// Interpolated distance (m); zero when invalid.
    pub sdf: f64,
    pub valid: bool,
    /// Finest level among contributing voxels.
    pub source_level: u8,
    pub color: [f32; 3],
}

impl CornerSample {
    pub const INVALID: CornerSample = CornerSample {
        sdf: 0.0,
        valid: false,
        source_level: 0,
        color: [0.0; 3],
    };
}

/// Read-only view of the live blocks used to sample lattice corners.
pub struct CornerSampler<'a> {
    grid: GridConfig,
    blocks: FxHashMap<BlockCoord, (u8, Option<&'a [Voxel]>)>,
}

impl<'a> CornerSampler<'a> {
    pub fn new(table: &'a HashTable) -> Self {
        let blocks = table
            .entries()
            .into_iter()
            .map(|e| (e.coord, (e.level, table.voxels(e.level, e.handle))))
            .collect();
        Self {
            grid: table.config().clone(),
            blocks,
        }
    }

    #[inline]
    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    /// Level of a live block.
    #[inline]
    pub fn level_of(&self, coord: BlockCoord) -> Option<u8> {
        self.blocks.get(&coord).map(|b| b.0)
    }

    /// Length of one position unit (half a fine voxel) in meters.
    #[inline]
    pub fn unit(&self) -> f64 {
        0.5 * self.grid.fine_voxel_size()
    }

    /// Samples the corner at world position `p`, snapped to the nearest unit.
    pub fn sample_at(&self, p: Vec3) -> CornerSample {
        let u = self.unit();
        self.sample_units([
            round(p.x / u) as i64,
            round(p.y / u) as i64,
            round(p.z / u) as i64,
        ])
    }

    /// Samples the corner at integer position `p` (units of half a fine voxel).
    ///
    /// The voxels of any level containing the eight points `p ± η` in each
    /// octant contribute with weight `Π max(0, 1 − |p − c| / ν) · ν_fine / ν`,
    /// where `c` is the voxel center and `ν` its edge. Unobserved voxels are
    /// ignored.
    pub fn sample_units(&self, p: [i64; 3]) -> CornerSample {
        let bu = self.grid.block_half_units();
        let mut seen: [(BlockCoord, usize); 8] = [(BlockCoord::default(), usize::MAX); 8];
        let mut n_seen = 0;
        let (mut wsum, mut dsum) = (0.0, 0.0);
        let mut csum = [0.0f64; 3];
        let mut finest = u8::MAX;
        for oct in 0..8 {
            // unit cell holding p - η (k = p - 1) or p + η (k = p) on each axis
            let mut k = [0i64; 3];
            for (a, ka) in k.iter_mut().enumerate() {
                *ka = if (oct >> a) & 1 == 0 { p[a] - 1 } else { p[a] };
            }
            let coord = BlockCoord::new(
                k[0].div_euclid(bu) as i32,
                k[1].div_euclid(bu) as i32,
                k[2].div_euclid(bu) as i32,
            );
            let Some(&(level, voxels)) = self.blocks.get(&coord) else {
                continue;
            };
            let vu = self.grid.voxel_half_units(level);
            let n = self.grid.voxels_per_side(level) as usize;
            let idx = [
                (k[0].rem_euclid(bu) / vu) as usize,
                (k[1].rem_euclid(bu) / vu) as usize,
                (k[2].rem_euclid(bu) / vu) as usize,
            ];
            let lin = linear_index(idx[0], idx[1], idx[2], n);
            if seen[..n_seen].contains(&(coord, lin)) {
                continue;
            }
            seen[n_seen] = (coord, lin);
            n_seen += 1;
            let Some(v) = voxels.map(|vs| vs[lin]) else {
                continue;
            };
            if v.weight == 0 {
                continue;
            }
            let origin = [coord.x as i64 * bu, coord.y as i64 * bu, coord.z as i64 * bu];
            let mut w = 2.0 / vu as f64;
            for a in 0..3 {
                let center = (origin[a] + vu * idx[a] as i64) as f64 + 0.5 * vu as f64;
                w *= (1.0 - (p[a] as f64 - center).abs() / vu as f64).max(0.0);
            }
            if w <= 0.0 {
                continue;
            }
            wsum += w;
            dsum += w * v.tsdf;
            for (c, vc) in csum.iter_mut().zip(v.color) {
                *c += w * vc as f64;
            }
            finest = finest.min(level);
        }
        if wsum <= 0.0 {
            return CornerSample::INVALID;
        }
        CornerSample {
            sdf: dsum / wsum,
            valid: true,
            source_level: finest,
            color: [
                (csum[0] / wsum) as f32,
                (csum[1] / wsum) as f32,
                (csum[2] / wsum) as f32,
            ],
        }
    }
}

/// One-off corner sample at world position `corner`.
///
/// `home_level` is the level whose lattice the corner lies on; it only
/// affects snapping, since the sample itself draws on every level.
pub fn sample_corner(table: &HashTable, corner: Vec3, home_level: u8) -> CornerSample {
    let sampler = CornerSampler::new(table);
    let step = sampler.grid().voxel_size(home_level.min(sampler.grid().num_levels - 1));
    let snapped = Vec3::new(
        round(corner.x / step) * step,
        round(corner.y / step) * step,
        round(corner.z / step) * step,
    );
    sampler.sample_at(snapped)
}
