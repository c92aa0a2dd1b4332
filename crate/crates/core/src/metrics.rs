//! Accuracy, completion, Chamfer-L1 and F-score between a reconstruction and
//! reference points.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{ceil, sqrt, Vec3};
use crate::mesh::Mesh;
use crate::par;

/// Static 3-d tree for nearest-neighbour queries.
pub struct KdTree {
    points: Vec<Vec3>,
    /// Implicit balanced tree over a permutation of point indices.
    order: Vec<u32>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        Self::build(points, &mut order, 0);
        Self {
            points: points.to_vec(),
            order,
        }
    }

    fn build(points: &[Vec3], idx: &mut [u32], depth: usize) {
        if idx.len() <= 1 {
            return;
        }
        let axis = depth % 3;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize][axis].total_cmp(&points[b as usize][axis])
        });
        let (lo, hi) = idx.split_at_mut(mid);
        Self::build(points, lo, depth + 1);
        Self::build(points, &mut hi[1..], depth + 1);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of and distance to the nearest point.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.order.len(), 0, &mut best);
        Some((best.0, sqrt(best.1)))
    }

    fn search(&self, q: Vec3, lo: usize, hi: usize, depth: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let i = self.order[mid] as usize;
        let p = self.points[i];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && i < best.0) {
            *best = (i, d2);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    /// Mean distance from reconstruction samples to the reference (m).
    pub accuracy: f64,
    /// Mean distance from reference points to the reconstruction (m).
    pub completion: f64,
    pub chamfer_l1: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    /// Samples per square meter.
    pub density: f64,
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    /// 10 samples per cm², at most one million.
    fn default() -> Self {
        Self {
            density: 10.0 * 1e4,
            max_samples: 1_000_000,
            seed: 0,
        }
    }
}

/// Area-uniform random points on the mesh surface.
pub fn sample_mesh(mesh: &Mesh, cfg: &SamplingConfig) -> Vec<Vec3> {
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for i in 0..mesh.triangles.len() {
        total += mesh.triangle_area(i);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Vec::new();
    }
    let n = (ceil(total * cfg.density) as usize).clamp(1, cfg.max_samples.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..n)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let t = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
            let [a, b, c] = mesh.triangle(t);
            let (r1, r2) = (sqrt(rng.random::<f64>()), rng.random::<f64>());
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect()
}

/// Metrics between two point sets. Precision and recall count distances
/// `≤ threshold`.
pub fn eval_points(pred: &[Vec3], reference: &[Vec3], threshold: f64) -> Result<Metrics> {
    if pred.is_empty() || reference.is_empty() {
        return Err(Error::Input(format!(
            "need non-empty inputs, got {} predicted and {} reference points",
            pred.len(),
            reference.len()
        )));
    }
    let ref_tree = KdTree::new(reference);
    let pred_tree = KdTree::new(pred);
    let d_pred = par::map(pred, |p| ref_tree.nearest(*p).map_or(f64::INFINITY, |n| n.1));
    let d_ref = par::map(reference, |p| pred_tree.nearest(*p).map_or(f64::INFINITY, |n| n.1));
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let frac = |d: &[f64]| d.iter().filter(|&&x| x <= threshold).count() as f64 / d.len() as f64;
    let (accuracy, completion) = (mean(&d_pred), mean(&d_ref));
    let (precision, recall) = (frac(&d_pred), frac(&d_ref));
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        accuracy,
        completion,
        chamfer_l1: 0.5 * (accuracy + completion),
        precision,
        recall,
        fscore,
    })
}

/// Samples `mesh` by area and compares the samples with `reference`.
pub fn eval_reconstruction(
    mesh: &Mesh,
    reference: &[Vec3],
    threshold: f64,
    sampling: &SamplingConfig,
) -> Result<Metrics> {
    if mesh.is_empty() {
        return Err(Error::Input("mesh has no triangles".into()));
    }
    let samples = sample_mesh(mesh, sampling);
    eval_points(&samples, reference, threshold)
}
