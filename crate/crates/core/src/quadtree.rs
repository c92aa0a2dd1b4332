//! Contrast-driven image quadtree and depth-seeded splats.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::integrate::{is_valid_depth, DepthFrame};
use crate::math::Vec3;
use crate::par;

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.2989, 0.5870, 0.1140];

/// RGB image with channels in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Input(format!(
                "image of {} pixels does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_rgb8(width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<Self> {
        Self::new(width, height, rgb.iter().map(|&c| crate::integrate::rgb_unit(c)).collect())
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadNode {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub contrast: f64,
    pub is_leaf: bool,
}

impl QuadNode {
    pub fn root(image: &RgbImage) -> Self {
        Self {
            x0: 0,
            y0: 0,
            w: image.width,
            h: image.height,
            contrast: 0.0,
            is_leaf: false,
        }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Midpoint split into top-left, bottom-left, top-right, bottom-right,
    /// with floored midpoints and empty children omitted.
    pub fn subdivide(&self) -> Vec<QuadNode> {
        let (wl, hl) = (self.w / 2, self.h / 2);
        let (wr, hr) = (self.w - wl, self.h - hl);
        let child = |x0, y0, w, h| QuadNode {
            x0,
            y0,
            w,
            h,
            contrast: 0.0,
            is_leaf: false,
        };
        [
            child(self.x0, self.y0, wl, hl),
            child(self.x0, self.y0 + hl, wl, hr),
            child(self.x0 + wl, self.y0, wr, hl),
            child(self.x0 + wl, self.y0 + hl, wr, hr),
        ]
        .into_iter()
        .filter(|c| c.w > 0 && c.h > 0)
        .collect()
    }
}

/// Luma-weighted per-channel mean squared deviation of the pixels in `node`.
pub fn region_contrast(image: &RgbImage, node: &QuadNode) -> f64 {
    let n = node.area() as f64;
    let rows = node.y0..node.y0 + node.h;
    let mut mean = [0.0f64; 3];
    for y in rows.clone() {
        for p in &image.data[y * image.width + node.x0..y * image.width + node.x0 + node.w] {
            for k in 0..3 {
                mean[k] += p[k] as f64;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut ss = [0.0f64; 3];
    for y in rows {
        for p in &image.data[y * image.width + node.x0..y * image.width + node.x0 + node.w] {
            for k in 0..3 {
                let d = p[k] as f64 - mean[k];
                ss[k] += d * d;
            }
        }
    }
    (0..3).map(|k| LUMA[k] * ss[k] / n).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadtreeConfig {
    pub contrast_threshold: f64,
    /// A node splits only while `min(w, h)` exceeds this.
    pub min_pixel: usize,
}

impl Default for QuadtreeConfig {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.1,
            min_pixel: 1,
        }
    }
}

/// Breadth-first, level-synchronous subdivision. Returns the leaves in the
/// order they were finalized.
pub fn build_quadtree(image: &RgbImage, cfg: &QuadtreeConfig) -> Vec<QuadNode> {
    let mut leaves = Vec::new();
    let mut frontier = alloc::vec![QuadNode::root(image)];
    while !frontier.is_empty() {
        let contrasts = par::map(&frontier, |n| region_contrast(image, n));
        let mut next = Vec::new();
        for (mut node, c) in frontier.into_iter().zip(contrasts) {
            node.contrast = c;
            if c > cfg.contrast_threshold && node.w.min(node.h) > cfg.min_pixel {
                next.extend(node.subdivide());
            } else {
                node.is_leaf = true;
                leaves.push(node);
            }
        }
        frontier = next;
    }
    leaves
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatSeed {
    pub position: Vec3,
    /// Metric footprint of the leaf at its depth (m).
    pub scale: f64,
    pub color: [f32; 3],
}

/// One seed per leaf whose center pixel has valid depth. The seed sits at the
/// back-projected leaf center, its scale is `w · d / fx` and its color the
/// leaf's mean color (from `image`, else the frame's color, else black).
pub fn seed_splats(leaves: &[QuadNode], frame: &DepthFrame, image: Option<&RgbImage>) -> Vec<SplatSeed> {
    let mut seeds = Vec::new();
    for leaf in leaves {
        let cu = leaf.x0 as f64 + (leaf.w as f64 - 1.0) / 2.0;
        let cv = leaf.y0 as f64 + (leaf.h as f64 - 1.0) / 2.0;
        let (pu, pv) = (leaf.x0 + (leaf.w - 1) / 2, leaf.y0 + (leaf.h - 1) / 2);
        if pu >= frame.width || pv >= frame.height {
            continue;
        }
        let d = frame.depth_at(pu, pv);
        if !is_valid_depth(d) {
            continue;
        }
        let d = d as f64;
        let position = frame.pose.to_world(frame.intrinsics.backproject(cu, cv, d));
        let mut color = [0.0f64; 3];
        for y in leaf.y0..leaf.y0 + leaf.h {
            for x in leaf.x0..leaf.x0 + leaf.w {
                let c = match image {
                    Some(img) => img.pixel(x, y),
                    None => frame.color_at(x, y).unwrap_or([0.0; 3]),
                };
                for k in 0..3 {
                    color[k] += c[k] as f64;
                }
            }
        }
        let n = leaf.area() as f64;
        seeds.push(SplatSeed {
            position,
            scale: leaf.w as f64 * d / frame.intrinsics.fx,
            color: color.map(|c| (c / n) as f32),
        });
    }
    seeds
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn black_white_pair() {
        let img = RgbImage::new(2, 1, vec![[0.0; 3], [1.0; 3]]).unwrap();
        let c = region_contrast(&img, &QuadNode::root(&img));
        assert!((c - 0.249975).abs() < 1e-12, "{c}");
    }

    #[test]
    fn uniform_is_single_leaf() {
        let img = RgbImage::new(37, 21, vec![[0.3, 0.6, 0.1]; 37 * 21]).unwrap();
        let leaves = build_quadtree(&img, &QuadtreeConfig::default());
        assert_eq!(leaves.len(), 1);
        assert_eq!((leaves[0].w, leaves[0].h), (37, 21));
    }

    #[test]
    fn odd_split_and_degenerate_children() {
        let n = QuadNode {
            x0: 3,
            y0: 4,
            w: 5,
            h: 1,
            contrast: 0.0,
            is_leaf: false,
        };
        let kids = n.subdivide();
        // h = 1 leaves only the bottom row of children
        assert_eq!(kids.len(), 2);
        assert_eq!((kids[0].x0, kids[0].y0, kids[0].w, kids[0].h), (3, 4, 2, 1));
        assert_eq!((kids[1].x0, kids[1].y0, kids[1].w, kids[1].h), (5, 4, 3, 1));
    }
}
