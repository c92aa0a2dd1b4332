//! Analytic scenes and a ray-casting depth camera for fixtures.

use std::f64::consts::PI;

use adagrid_core::{DepthFrame, Intrinsics, PointCloudFrame, SensorPose, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

const HIT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Two-sided rectangle spanned by `center ± half[0]·u ± half[1]·v`.
    Rect { center: Vec3, u: Vec3, v: Vec3, half: [f64; 2] },
    /// Solid axis-aligned box.
    Cuboid { min: Vec3, max: Vec3 },
}

impl Shape {
    /// Nearest hit distance along the unit ray `o + t·d`, `t > 0`.
    pub fn intersect(&self, o: Vec3, d: Vec3) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > HIT_EPS)
            }
            Shape::Rect { center, u, v, half } => {
                let n = u.cross(v);
                let denom = n.dot(d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = n.dot(center - o) / denom;
                if t <= HIT_EPS {
                    return None;
                }
                let q = o + d * t - center;
                (q.dot(u).abs() <= half[0] && q.dot(v).abs() <= half[1]).then_some(t)
            }
            Shape::Cuboid { min, max } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if d[a].abs() < 1e-15 {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (ta, tb) = ((min[a] - o[a]) / d[a], (max[a] - o[a]) / d[a]);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if t0 > t1 {
                    None
                } else if t0 > HIT_EPS {
                    Some(t0)
                } else if t1 > HIT_EPS {
                    Some(t1)
                } else {
                    None
                }
            }
        }
    }

    /// Unsigned distance to the surface.
    pub fn distance(&self, p: Vec3) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => (p.distance(center) - radius).abs(),
            Shape::Rect { center, u, v, half } => {
                let q = p - center;
                let n = u.cross(v);
                let du = (q.dot(u).abs() - half[0]).max(0.0);
                let dv = (q.dot(v).abs() - half[1]).max(0.0);
                (du * du + dv * dv + q.dot(n).powi(2)).sqrt()
            }
            Shape::Cuboid { min, max } => {
                let c = (min + max) * 0.5;
                let h = (max - min) * 0.5;
                let q = Vec3::new((p.x - c.x).abs() - h.x, (p.y - c.y).abs() - h.y, (p.z - c.z).abs() - h.z);
                let outside = q.max(Vec3::ZERO).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                (outside + inside).abs()
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Shape::Rect { half, .. } => 4.0 * half[0] * half[1],
            Shape::Cuboid { min, max } => {
                let e = max - min;
                2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
            }
        }
    }

    /// Deterministic surface points about `spacing` apart.
    pub fn sample(&self, spacing: f64) -> Vec<Vec3> {
        match *self {
            Shape::Sphere { center, radius } => {
                let n = ((self.area() / (spacing * spacing)).ceil() as usize).max(1);
                fibonacci_sphere(n).into_iter().map(|d| center + d * radius).collect()
            }
            Shape::Rect { center, u, v, half } => {
                let nu = ((2.0 * half[0] / spacing).ceil() as usize).max(1);
                let nv = ((2.0 * half[1] / spacing).ceil() as usize).max(1);
                let mut out = Vec::with_capacity((nu + 1) * (nv + 1));
                for j in 0..=nv {
                    for i in 0..=nu {
                        let a = -half[0] + 2.0 * half[0] * i as f64 / nu as f64;
                        let b = -half[1] + 2.0 * half[1] * j as f64 / nv as f64;
                        out.push(center + u * a + v * b);
                    }
                }
                out
            }
            Shape::Cuboid { min, max } => cuboid_faces(min, max).iter().flat_map(|f| f.sample(spacing)).collect(),
        }
    }
}

fn cuboid_faces(min: Vec3, max: Vec3) -> [Shape; 6] {
    let c = (min + max) * 0.5;
    let h = (max - min) * 0.5;
    let (x, y, z) = (Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
    let rect = |center, u, v, half| Shape::Rect { center, u, v, half };
    [
        rect(c - x * h.x, y, z, [h.y, h.z]),
        rect(c + x * h.x, y, z, [h.y, h.z]),
        rect(c - y * h.y, x, z, [h.x, h.z]),
        rect(c + y * h.y, x, z, [h.x, h.z]),
        rect(c - z * h.z, x, y, [h.x, h.y]),
        rect(c + z * h.z, x, y, [h.x, h.y]),
    ]
}

/// `n` near-uniform unit directions.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Surface {
    pub shape: Shape,
    pub color: [u8; 3],
    /// Standard deviation of additive depth noise on this surface (m).
    pub noise: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scene {
    pub surfaces: Vec<Surface>,
}

impl Scene {
    pub fn add(&mut self, shape: Shape, color: [u8; 3], noise: f64) -> &mut Self {
        self.surfaces.push(Surface { shape, color, noise });
        self
    }

    /// Nearest surface hit: distance and surface index.
    pub fn raycast(&self, o: Vec3, d: Vec3) -> Option<(f64, usize)> {
        self.surfaces
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.shape.intersect(o, d).map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Unsigned distance to the nearest surface.
    pub fn distance(&self, p: Vec3) -> f64 {
        self.surfaces
            .iter()
            .map(|s| s.shape.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Reference points over every surface.
    pub fn reference_points(&self, spacing: f64) -> Vec<Vec3> {
        self.surfaces.iter().flat_map(|s| s.shape.sample(spacing)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
}

impl Camera {
    /// Pinhole camera with the principal point at the image center.
    pub fn new(width: usize, height: usize, focal: f64) -> Result<Self> {
        Ok(Self {
            width,
            height,
            intrinsics: Intrinsics::new(
                focal,
                focal,
                (width as f64 - 1.0) / 2.0,
                (height as f64 - 1.0) / 2.0,
            )?,
        })
    }
}

/// Renders z-depth and color; pixels that miss every surface are invalid.
/// Noise is drawn from a generator seeded with `seed`.
pub fn render_depth(scene: &Scene, camera: &Camera, pose: SensorPose, seed: u64) -> Result<DepthFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (w, h) = (camera.width, camera.height);
    let mut depth = vec![0f32; w * h];
    let mut color = vec![[0u8; 3]; w * h];
    for v in 0..h {
        for u in 0..w {
            let ray = camera.intrinsics.ray(u as f64, v as f64);
            let len = ray.norm();
            let d = pose.rotation.mul_vec(ray * (1.0 / len));
            let Some((t, i)) = scene.raycast(pose.translation, d) else {
                continue;
            };
            let s = &scene.surfaces[i];
            let mut z = t / len;
            if s.noise > 0.0 {
                z += s.noise * unit.sample(&mut rng);
            }
            if z > 0.0 {
                depth[v * w + u] = z as f32;
                color[v * w + u] = s.color;
            }
        }
    }
    Ok(DepthFrame::new(w, h, depth, Some(color), camera.intrinsics, pose)?)
}

/// Converts a depth frame into a sensor-frame point cloud.
pub fn depth_to_points(frame: &DepthFrame) -> PointCloudFrame {
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for v in 0..frame.height {
        for u in 0..frame.width {
            let z = frame.depth_at(u, v);
            if adagrid_core::integrate::is_valid_depth(z) {
                points.push(frame.intrinsics.backproject(u as f64, v as f64, z as f64));
                colors.push(frame.color.as_ref().map_or([0; 3], |c| c[v * frame.width + u]));
            }
        }
    }
    PointCloudFrame {
        points,
        colors: frame.color.as_ref().map(|_| colors),
        pose: frame.pose,
    }
}

/// A named scene with its trajectory and camera.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub scene: Scene,
    pub camera: Camera,
    pub poses: Vec<SensorPose>,
    pub seed: u64,
}

impl Fixture {
    pub fn frame(&self, i: usize) -> Result<DepthFrame> {
        render_depth(&self.scene, &self.camera, self.poses[i], self.seed.wrapping_add(i as u64))
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<DepthFrame>> + Send + '_ {
        (0..self.poses.len()).map(move |i| self.frame(i))
    }

    /// Noise-free surface points seen by at least one camera, thinned to one
    /// point per `spacing`-sized cell.
    pub fn visible_reference(&self, spacing: f64) -> Vec<Vec3> {
        let mut cells = std::collections::BTreeMap::new();
        for &pose in &self.poses {
            for v in 0..self.camera.height {
                for u in 0..self.camera.width {
                    let ray = self.camera.intrinsics.ray(u as f64, v as f64);
                    let d = pose.rotation.mul_vec(ray * (1.0 / ray.norm()));
                    if let Some((t, _)) = self.scene.raycast(pose.translation, d) {
                        let p = pose.translation + d * t;
                        let key = [p.x, p.y, p.z].map(|c| (c / spacing).floor() as i64);
                        cells.entry(key).or_insert(p);
                    }
                }
            }
        }
        cells.into_values().collect()
    }
}

fn look(eye: Vec3, target: Vec3) -> SensorPose {
    let up = Vec3::new(0.0, 0.0, 1.0);
    let up = if (target - eye).cross(up).norm() < 1e-6 * (target - eye).norm() {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        up
    };
    SensorPose::look_at(eye, target, up).expect("distinct eye and target")
}

/// 2 m × 2 m plane at `z = 0` viewed from about 1.2 m by `frames` cameras.
pub fn plane(frames: usize) -> Fixture {
    let mut scene = Scene::default();
    scene.add(
        Shape::Rect {
            center: Vec3::ZERO,
            u: Vec3::new(1.0, 0.0, 0.0),
            v: Vec3::new(0.0, 1.0, 0.0),
            half: [1.0, 1.0],
        },
        [180, 180, 180],
        0.0,
    );
    let poses = (0..frames)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / frames.max(1) as f64;
            look(Vec3::new(0.15 * a.cos(), 0.15 * a.sin(), 1.2), Vec3::ZERO)
        })
        .collect();
    Fixture {
        name: "plane",
        scene,
        camera: Camera::new(160, 120, 150.0).expect("valid camera"),
        poses,
        seed: 1,
    }
}

/// Unit sphere at the origin seen from `frames` directions at 3 m.
pub fn sphere(frames: usize) -> Fixture {
    let mut scene = Scene::default();
    scene.add(
        Shape::Sphere {
            center: Vec3::ZERO,
            radius: 1.0,
        },
        [200, 120, 60],
        0.0,
    );
    let poses = fibonacci_sphere(frames).into_iter().map(|d| look(d * 3.0, Vec3::ZERO)).collect();
    Fixture {
        name: "sphere",
        scene,
        camera: Camera::new(320, 240, 300.0).expect("valid camera"),
        poses,
        seed: 2,
    }
}

/// Closed room with a table carrying a cluster of small spheres, orbited by
/// `frames` cameras. Flat surfaces dominate the area.
pub fn room(frames: usize) -> Fixture {
    let noise = 0.002;
    let mut scene = Scene::default();
    let (lo, hi) = (Vec3::new(-1.2, -1.2, 0.0), Vec3::new(1.2, 1.2, 1.6));
    for (i, face) in cuboid_faces(lo, hi).into_iter().enumerate() {
        let shade = 150 + 15 * i as u8;
        scene.add(face, [shade, shade, 140], noise);
    }
    scene.add(
        Shape::Cuboid {
            min: Vec3::new(-0.3, -0.3, 0.0),
            max: Vec3::new(0.3, 0.3, 0.5),
        },
        [120, 80, 40],
        noise,
    );
    // clutter: small spheres on the table top
    let mut k = 0u32;
    for j in 0..4 {
        for i in 0..4 {
            let r = 0.025 + 0.01 * ((i + j) % 3) as f64;
            let c = Vec3::new(-0.15 + 0.1 * i as f64, -0.15 + 0.1 * j as f64, 0.5 + r * 0.8);
            scene.add(Shape::Sphere { center: c, radius: r }, [40, 60 + (k * 10) as u8, 200], noise);
            k += 1;
        }
    }
    let poses = (0..frames)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / frames.max(1) as f64;
            let eye = Vec3::new(0.85 * a.cos(), 0.85 * a.sin(), 1.0 + 0.1 * (3.0 * a).sin());
            let target = Vec3::new(-0.3 * a.cos(), -0.3 * a.sin(), 0.45);
            look(eye, target)
        })
        .collect();
    Fixture {
        name: "room",
        scene,
        camera: Camera::new(240, 180, 200.0).expect("valid camera"),
        poses,
        seed: 3,
    }
}

/// Fixture by name: `plane`, `sphere` or `room`.
pub fn by_name(name: &str, frames: usize) -> Option<Fixture> {
    match name {
        "plane" => Some(plane(frames)),
        "sphere" => Some(sphere(frames)),
        "room" => Some(room(frames)),
        _ => None,
    }
}
