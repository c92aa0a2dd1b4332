//! Sensor models and TSDF fusion of point clouds and depth images.

use alloc::format;
use alloc::vec::Vec;

use crate::block::{linear_index, voxel_center, BlockCoord};
use crate::dda::dda_visit;
use crate::error::{Error, Result};
use crate::map::{FrameBlocks, TsdfMap};
use crate::math::{clamp, floor, round, sqrt, Mat3, Vec3};
use crate::par;
use crate::voxel::Voxel;

/// Rigid world-from-sensor transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl SensorPose {
    pub const IDENTITY: SensorPose = SensorPose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    /// Checks that `rotation` is orthonormal with determinant +1 to 1e-6.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let rtr = rotation.transpose().mul_mat(&rotation);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (rtr.rows[i][j] - expect).abs() > 1e-6 {
                    return Err(Error::Input(format!("rotation is not orthonormal: {rotation:?}")));
                }
            }
        }
        if (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!(
                "rotation has determinant {}",
                rotation.determinant()
            )));
        }
        if !translation.is_finite() {
            return Err(Error::Input(format!("translation is not finite: {translation:?}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// From a unit quaternion; the quaternion is renormalized.
    pub fn from_quaternion(translation: Vec3, qx: f64, qy: f64, qz: f64, qw: f64) -> Result<Self> {
        let n = sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Input("zero or non-finite quaternion".into()));
        }
        Self::new(Mat3::from_quaternion(qx / n, qy / n, qz / n, qw / n), translation)
    }

    /// Camera at `eye` looking at `target` (optical axis +z, image y down).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let z = (target - eye)
            .normalized()
            .ok_or_else(|| Error::Input("eye and target coincide".into()))?;
        let y = (z * up.dot(z) - up)
            .normalized()
            .ok_or_else(|| Error::Input("up is parallel to the view direction".into()))?;
        let x = y.cross(z);
        Self::new(Mat3::from_columns(x, y, z), eye)
    }

    #[inline]
    pub fn to_world(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    #[inline]
    pub fn to_sensor(&self, x: Vec3) -> Vec3 {
        self.rotation.transpose_mul_vec(x - self.translation)
    }
}

/// Pinhole intrinsics in pixels. Pixel `(u, v)` has its center at integer
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite()) {
            return Err(Error::Input(format!("invalid intrinsics fx={fx} fy={fy} cx={cx} cy={cy}")));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Continuous pixel coordinates of a camera-frame point in front of the camera.
    #[inline]
    pub fn project(&self, x: Vec3) -> Option<(f64, f64)> {
        if x.z <= 0.0 {
            return None;
        }
        Some((self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy))
    }

    /// Camera-frame ray through pixel `(u, v)` with unit z component.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        self.ray(u, v) * z
    }
}

#[inline]
pub fn is_valid_depth(d: f32) -> bool {
    d.is_finite() && d > 0.0
}

/// Depth image in meters along the optical axis; 0 or NaN marks invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub color: Option<Vec<[u8; 3]>>,
    pub intrinsics: Intrinsics,
    pub pose: SensorPose,
}

impl DepthFrame {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f32>,
        color: Option<Vec<[u8; 3]>>,
        intrinsics: Intrinsics,
        pose: SensorPose,
    ) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::Input(format!(
                "depth has {} pixels, expected {width}x{height}",
                depth.len()
            )));
        }
        if let Some(c) = &color {
            if c.len() != depth.len() {
                return Err(Error::Input(format!("color has {} pixels, depth {}", c.len(), depth.len())));
            }
        }
        if depth.iter().any(|d| d.is_infinite() || *d < 0.0) {
            return Err(Error::Input("depth values must be finite and non-negative, or NaN".into()));
        }
        Ok(Self {
            width,
            height,
            depth,
            color,
            intrinsics,
            pose,
        })
    }

    #[inline]
    pub fn depth_at(&self, u: usize, v: usize) -> f32 {
        self.depth[v * self.width + u]
    }

    #[inline]
    pub fn color_at(&self, u: usize, v: usize) -> Option<[f32; 3]> {
        self.color.as_ref().map(|c| rgb_unit(c[v * self.width + u]))
    }

    pub fn valid_pixels(&self) -> usize {
        self.depth.iter().filter(|d| is_valid_depth(**d)).count()
    }
}

#[inline]
pub(crate) fn rgb_unit(c: [u8; 3]) -> [f32; 3] {
    [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0]
}

/// Points in the sensor frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudFrame {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub pose: SensorPose,
}

/// Truncated signed distance of `x` to the surface point `p` seen from `o`,
/// measured along the ray direction.
#[inline]
pub fn sdf_ray(p: Vec3, x: Vec3, o: Vec3, tau: f64) -> f64 {
    let n = (p - o) * (1.0 / (p - o).norm());
    clamp((p - x).dot(n), -tau, tau)
}

/// Truncated difference between the measured range `d` and the distance of
/// the camera-frame point `x` from the optical center.
#[inline]
pub fn sdf_projective(d: f64, x: Vec3, tau: f64) -> f64 {
    clamp(d - x.norm(), -tau, tau)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    /// Points or valid pixels fused.
    pub measurements: usize,
    /// Non-finite points, zero-length points or invalid pixels skipped.
    pub skipped: usize,
    /// Blocks newly inserted at the finest level.
    pub blocks_allocated: usize,
    /// Distinct blocks traversed by this frame's rays.
    pub blocks_touched: usize,
    /// Blocks restored from the archive.
    pub blocks_streamed_in: usize,
    /// Blocks evicted to make room during allocation.
    pub blocks_evicted: usize,
    pub voxels_updated: usize,
    /// Set when the frame had no usable measurement.
    pub empty_frame: bool,
}

/// Allocates every block the ray from `origin` to `p + τ·n̂` crosses and
/// returns their handles in traversal order. Existing blocks keep their level.
pub fn allocate_for_measurement(map: &mut TsdfMap, origin: Vec3, p: Vec3, tau: f64) -> Result<Vec<u32>> {
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("truncation must be > 0, got {tau}")));
    }
    let n = (p - origin)
        .normalized()
        .ok_or_else(|| Error::Contract("measurement coincides with the sensor origin".into()))?;
    let mut frame = FrameBlocks::default();
    let mut stats = IntegrationStats::default();
    let mut coords = Vec::new();
    dda_visit(origin, p + n * tau, map.grid().block_edge, |c| coords.push(c));
    let mut out = Vec::with_capacity(coords.len());
    for c in coords {
        let i = map.touch(c, &mut frame, None, &mut stats)?;
        out.push(frame.blocks[i].handle);
    }
    map.finish_frame(frame);
    Ok(out)
}

/// Voxels of a block at `level` crossed by the segment `a → b`, which must lie
/// within the block up to rounding.
fn voxels_on_segment(coord: BlockCoord, level: u8, map: &TsdfMap, a: Vec3, b: Vec3, out: &mut Vec<usize>) {
    let grid = map.grid();
    let n = grid.voxels_per_side(level) as i64;
    let nu = grid.voxel_size(level);
    let o = coord.origin(grid.block_edge);
    out.clear();
    let mut last = usize::MAX;
    dda_visit(a - o, b - o, nu, |v| {
        let ix = (v.x as i64).clamp(0, n - 1) as usize;
        let iy = (v.y as i64).clamp(0, n - 1) as usize;
        let iz = (v.z as i64).clamp(0, n - 1) as usize;
        let idx = linear_index(ix, iy, iz, n as usize);
        if idx != last && !out.contains(&idx) {
            out.push(idx);
        }
        last = idx;
    });
}

/// Parameter interval of the line `o + t·n` inside the block cuboid.
fn clip_to_block(coord: BlockCoord, edge: f64, o: Vec3, n: Vec3) -> Option<(f64, f64)> {
    let lo = coord.origin(edge);
    let hi = lo + Vec3::splat(edge);
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if n[a] == 0.0 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
        } else {
            let ta = (lo[a] - o[a]) / n[a];
            let tb = (hi[a] - o[a]) / n[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

struct RayWork {
    block: usize,
    point: usize,
}

/// Fuses a point cloud: each point's ray allocates blocks, and the voxels the
/// ray crosses within `τ` of the point receive the ray-projected distance.
pub fn integrate_pointcloud(map: &mut TsdfMap, frame: &PointCloudFrame) -> Result<IntegrationStats> {
    let tau = map.config().truncation;
    let edge = map.grid().block_edge;
    let relevance = map.pointcloud_relevance(frame)?;
    let o = frame.pose.translation;
    let mut stats = IntegrationStats::default();
    let mut blocks = FrameBlocks::default();
    let mut rays: Vec<(Vec3, Vec3, f64, Option<[f32; 3]>)> = Vec::new();
    let mut work: Vec<RayWork> = Vec::new();
    let mut coords = Vec::new();

    for (i, ps) in frame.points.iter().enumerate() {
        let p = frame.pose.to_world(*ps);
        let len = (p - o).norm();
        if !ps.is_finite() || !p.is_finite() || !(len > 0.0) {
            stats.skipped += 1;
            continue;
        }
        let n = (p - o) * (1.0 / len);
        let point = rays.len();
        rays.push((p, n, len, frame.colors.as_ref().map(|c| rgb_unit(c[i]))));
        coords.clear();
        dda_visit(o, p + n * tau, edge, |c| coords.push(c));
        for &c in &coords {
            let b = map.touch(c, &mut blocks, relevance.as_ref(), &mut stats)?;
            // only blocks reaching into the band around p hold voxels to update
            if let Some((_, t1)) = clip_to_block(c, edge, o, n) {
                if t1 >= len - tau {
                    work.push(RayWork { block: b, point });
                }
            }
        }
    }
    stats.measurements = rays.len();
    stats.empty_frame = rays.is_empty();
    stats.blocks_touched = blocks.blocks.len();

    // group by block, keeping point order within each block
    work.sort_by_key(|w| (blocks.blocks[w.block].coord, w.point));
    let mut jobs: Vec<(usize, core::ops::Range<usize>)> = Vec::new();
    let mut s = 0;
    while s < work.len() {
        let mut e = s + 1;
        while e < work.len() && work[e].block == work[s].block {
            e += 1;
        }
        jobs.push((work[s].block, s..e));
        s = e;
    }
    let targets: Vec<(u8, u32)> = jobs
        .iter()
        .map(|(b, _)| (blocks.blocks[*b].level, blocks.blocks[*b].handle))
        .collect();
    let cap = map.config().max_weight;
    let map_ref: &TsdfMap = map;
    // per-job voxel lists are computed against the immutable map first
    let plans: Vec<Vec<(usize, f64, Option<[f32; 3]>)>> = par::map(&jobs, |(b, range)| {
        let blk = &blocks.blocks[*b];
        let mut plan = Vec::new();
        let mut hits = Vec::new();
        for w in &work[range.clone()] {
            let (p, n, len, rgb) = rays[w.point];
            let Some((t0, t1)) = clip_to_block(blk.coord, edge, o, n) else {
                continue;
            };
            let t0 = t0.max(0.0).max(len - tau);
            let t1 = t1.min(len + tau);
            if t0 > t1 {
                continue;
            }
            voxels_on_segment(blk.coord, blk.level, map_ref, o + n * t0, o + n * t1, &mut hits);
            for &idx in &hits {
                let x = voxel_center(blk.coord, blk.level, idx, map_ref.grid());
                let s = (p - x).dot(n);
                if s.abs() <= tau {
                    plan.push((idx, s, rgb));
                }
            }
        }
        plan
    });
    let mut slices = map.table_mut().voxels_mut_many(&targets);
    let mut zipped: Vec<(&mut [Voxel], &Vec<(usize, f64, Option<[f32; 3]>)>)> =
        slices.drain(..).zip(plans.iter()).collect();
    par::for_each_mut(&mut zipped, |(voxels, plan)| {
        for &(idx, s, rgb) in plan.iter() {
            voxels[idx].update_capped(clamp(s, -tau, tau), rgb, cap);
        }
    });
    stats.voxels_updated = plans.iter().map(|p| p.len()).sum();
    map.finish_frame(blocks);
    Ok(stats)
}

/// Fuses a depth image: valid pixels allocate blocks along their rays, then
/// every voxel of the touched blocks is projected into the image and updated
/// with the nearest pixel's range.
pub fn integrate_depth(map: &mut TsdfMap, frame: &DepthFrame) -> Result<IntegrationStats> {
    let tau = map.config().truncation;
    let edge = map.grid().block_edge;
    let relevance = map.depth_relevance(frame);
    let intr = frame.intrinsics;
    let o = frame.pose.translation;
    let (w, h) = (frame.width, frame.height);
    let mut stats = IntegrationStats::default();
    let mut blocks = FrameBlocks::default();

    // range along each pixel's ray; NaN where invalid
    let mut range = alloc::vec![f64::NAN; w * h];
    let mut coords = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let z = frame.depth_at(u, v);
            if !is_valid_depth(z) {
                stats.skipped += 1;
                continue;
            }
            let ray = intr.ray(u as f64, v as f64);
            let r = z as f64 * ray.norm();
            range[v * w + u] = r;
            let p = frame.pose.to_world(ray * z as f64);
            let n = (p - o) * (1.0 / r);
            coords.clear();
            dda_visit(o, p + n * tau, edge, |c| coords.push(c));
            for &c in &coords {
                map.touch(c, &mut blocks, Some(&relevance), &mut stats)?;
            }
            stats.measurements += 1;
        }
    }
    stats.empty_frame = stats.measurements == 0;
    stats.blocks_touched = blocks.blocks.len();
    if stats.empty_frame {
        map.finish_frame(blocks);
        return Ok(stats);
    }

    let mut order: Vec<usize> = (0..blocks.blocks.len()).collect();
    order.sort_by_key(|&i| blocks.blocks[i].coord);
    let live: Vec<usize> = order
        .into_iter()
        .filter(|&i| block_may_update(blocks.blocks[i].coord, edge, frame, &range, tau))
        .collect();
    let targets: Vec<(u8, u32)> = live
        .iter()
        .map(|&i| (blocks.blocks[i].level, blocks.blocks[i].handle))
        .collect();
    let cap = map.config().max_weight;
    let grid = map.grid().clone();
    let mut slices = map.table_mut().voxels_mut_many(&targets);
    let mut jobs: Vec<(&mut [Voxel], BlockCoord, u8, usize)> = slices
        .drain(..)
        .zip(live.iter())
        .map(|(s, &i)| (s, blocks.blocks[i].coord, blocks.blocks[i].level, 0))
        .collect();
    par::for_each_mut(&mut jobs, |(voxels, coord, level, updated)| {
        for (idx, vox) in voxels.iter_mut().enumerate() {
            let xc = frame.pose.to_sensor(voxel_center(*coord, *level, idx, &grid));
            let Some((uf, vf)) = intr.project(xc) else {
                continue;
            };
            let (u, v) = (round(uf), round(vf));
            if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
                continue;
            }
            let (u, v) = (u as usize, v as usize);
            let d = range[v * w + u];
            if d.is_nan() {
                continue;
            }
            let s = d - xc.norm();
            if s.abs() <= tau {
                vox.update_capped(sdf_projective(d, xc, tau), frame.color_at(u, v), cap);
                *updated += 1;
            }
        }
    });
    stats.voxels_updated = jobs.iter().map(|j| j.3).sum();
    map.finish_frame(blocks);
    Ok(stats)
}

/// Conservative test whether any voxel of the block can pass the projective
/// band test: compares the block's range interval widened by `τ` with the
/// ranges found in its projected pixel footprint.
fn block_may_update(coord: BlockCoord, edge: f64, frame: &DepthFrame, range: &[f64], tau: f64) -> bool {
    let (w, h) = (frame.width as f64, frame.height as f64);
    let o = frame.pose.translation;
    let lo = coord.origin(edge);
    let hi = lo + Vec3::splat(edge);
    let nearest = o.max(lo).min(hi);
    let r_min = nearest.distance(o);
    let mut r_max: f64 = 0.0;
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in coord.corners(edge) {
        r_max = r_max.max(c.distance(o));
        match frame.intrinsics.project(frame.pose.to_sensor(c)) {
            // block reaches behind the image plane; skip pruning
            None => return true,
            Some((u, v)) => {
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
        }
    }
    let ua = floor(u0 - 1.0).max(0.0);
    let ub = (floor(u1 + 1.0) + 1.0).min(w);
    let va = floor(v0 - 1.0).max(0.0);
    let vb = (floor(v1 + 1.0) + 1.0).min(h);
    if ua >= ub || va >= vb {
        return false;
    }
    let (ua, ub, va, vb) = (ua as usize, ub as usize, va as usize, vb as usize);
    let (lo_band, hi_band) = (r_min - tau, r_max + tau);
    for v in va..vb {
        for &d in &range[v * frame.width + ua..v * frame.width + ub] {
            if d >= lo_band && d <= hi_band {
                return true;
            }
        }
    }
    false
}
