//! Plain `key = value` pipeline configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use adagrid_core::adapt::MergeConfig;
use adagrid_core::mesh::MeshOptions;
use adagrid_core::quadtree::QuadtreeConfig;
use adagrid_core::stream::{StreamMode, StreamingConfig, DEFAULT_FILL_THRESHOLD, DEFAULT_LOW_WATER, DEFAULT_RADIUS};
use adagrid_core::{GridConfig, MapConfig};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorMode {
    Depth,
    PointCloud,
}

impl FromStr for SensorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(SensorMode::Depth),
            "pointcloud" => Ok(SensorMode::PointCloud),
            _ => Err(Error::Config(format!("mode must be depth or pointcloud, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for SensorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SensorMode::Depth => "depth",
            SensorMode::PointCloud => "pointcloud",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub mode: SensorMode,
    pub truncation: f64,
    pub voxel_size: f64,
    pub block_edge: f64,
    pub num_levels: u8,
    pub n_hash: usize,
    pub bucket_capacity: usize,
    pub overflow_capacity: usize,
    pub heap_capacity: Vec<usize>,
    /// Zero disables weight capping.
    pub max_weight: u32,
    pub sigma_threshold: f64,
    /// Frames between merge passes; zero disables merging.
    pub merge_cadence: usize,
    pub min_eligible_fraction: f64,
    pub min_mean_weight: f64,
    /// `frustum`, `radius` or `off`.
    pub stream_mode: String,
    pub stream_radius: f64,
    pub fill_threshold: f64,
    pub low_water: f64,
    pub quadtree_threshold: f64,
    pub quadtree_min_pixel: usize,
    pub deterministic: bool,
    /// Meters per raw depth unit.
    pub depth_scale: f64,
    pub f_threshold: f64,
    /// Negative selects the default of a quarter fine voxel.
    pub collapse_eps: f64,
}

/// Every configuration key, in file order.
pub const KEYS: &[&str] = &[
    "mode",
    "truncation",
    "voxel_size",
    "block_edge",
    "num_levels",
    "n_hash",
    "bucket_capacity",
    "overflow_capacity",
    "heap_capacity",
    "max_weight",
    "sigma_threshold",
    "merge_cadence",
    "min_eligible_fraction",
    "min_mean_weight",
    "stream_mode",
    "stream_radius",
    "fill_threshold",
    "low_water",
    "quadtree_threshold",
    "quadtree_min_pixel",
    "deterministic",
    "depth_scale",
    "f_threshold",
    "collapse_eps",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::depth_camera()
    }
}

impl PipelineConfig {
    pub fn depth_camera() -> Self {
        let grid = GridConfig::depth_camera();
        let merge = MergeConfig::default();
        let qt = QuadtreeConfig::default();
        Self {
            mode: SensorMode::Depth,
            truncation: 0.04,
            voxel_size: grid.fine_voxel_size(),
            block_edge: grid.block_edge,
            num_levels: grid.num_levels,
            n_hash: grid.n_hash,
            bucket_capacity: grid.bucket_capacity,
            overflow_capacity: grid.overflow_capacity,
            heap_capacity: grid.heap_capacity,
            max_weight: 0,
            sigma_threshold: merge.sigma_threshold,
            merge_cadence: merge.cadence,
            min_eligible_fraction: merge.min_eligible_fraction,
            min_mean_weight: merge.min_mean_weight,
            stream_mode: "frustum".into(),
            stream_radius: DEFAULT_RADIUS,
            fill_threshold: DEFAULT_FILL_THRESHOLD,
            low_water: DEFAULT_LOW_WATER,
            quadtree_threshold: qt.contrast_threshold,
            quadtree_min_pixel: qt.min_pixel,
            deterministic: true,
            depth_scale: 1.0 / 5000.0,
            f_threshold: 0.10,
            collapse_eps: -1.0,
        }
    }

    pub fn point_cloud() -> Self {
        Self {
            mode: SensorMode::PointCloud,
            truncation: 0.8,
            voxel_size: 0.2,
            block_edge: 1.6,
            stream_mode: "radius".into(),
            f_threshold: 0.20,
            ..Self::depth_camera()
        }
    }

    pub fn for_mode(mode: SensorMode) -> Self {
        match mode {
            SensorMode::Depth => Self::depth_camera(),
            SensorMode::PointCloud => Self::point_cloud(),
        }
    }

    /// Restricts the grid to the finest level.
    pub fn single_resolution(mut self) -> Self {
        self.num_levels = 1;
        self.heap_capacity.truncate(1);
        self
    }

    /// Sets one key. `voxel_size` also moves `block_edge` to eight voxels.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "mode" => self.mode = parse(key, v)?,
            "truncation" => self.truncation = parse(key, v)?,
            "voxel_size" => {
                self.voxel_size = parse(key, v)?;
                self.block_edge = 8.0 * self.voxel_size;
            }
            "block_edge" => self.block_edge = parse(key, v)?,
            "num_levels" => self.num_levels = parse(key, v)?,
            "n_hash" => self.n_hash = parse(key, v)?,
            "bucket_capacity" => self.bucket_capacity = parse(key, v)?,
            "overflow_capacity" => self.overflow_capacity = parse(key, v)?,
            "heap_capacity" => {
                self.heap_capacity = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "max_weight" => self.max_weight = parse(key, v)?,
            "sigma_threshold" => self.sigma_threshold = parse(key, v)?,
            "merge_cadence" => self.merge_cadence = parse(key, v)?,
            "min_eligible_fraction" => self.min_eligible_fraction = parse(key, v)?,
            "min_mean_weight" => self.min_mean_weight = parse(key, v)?,
            "stream_mode" => match v {
                "frustum" | "radius" | "off" => self.stream_mode = v.into(),
                _ => return Err(Error::Config(format!("stream_mode must be frustum, radius or off, got {v:?}"))),
            },
            "stream_radius" => self.stream_radius = parse(key, v)?,
            "fill_threshold" => self.fill_threshold = parse(key, v)?,
            "low_water" => self.low_water = parse(key, v)?,
            "quadtree_threshold" => self.quadtree_threshold = parse(key, v)?,
            "quadtree_min_pixel" => self.quadtree_min_pixel = parse(key, v)?,
            "deterministic" => self.deterministic = parse(key, v)?,
            "depth_scale" => self.depth_scale = parse(key, v)?,
            "f_threshold" => self.f_threshold = parse(key, v)?,
            "collapse_eps" => self.collapse_eps = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. A `mode` line selects
    /// that mode's defaults before the other keys apply.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mode = match pairs.iter().rev().find(|(k, _)| k == "mode") {
            Some((_, v)) => v.parse()?,
            None => SensorMode::Depth,
        };
        let mut cfg = Self::for_mode(mode);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    /// Serializes every key; `parse` reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for &k in KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "mode" => self.mode.to_string(),
            "truncation" => self.truncation.to_string(),
            "voxel_size" => self.voxel_size.to_string(),
            "block_edge" => self.block_edge.to_string(),
            "num_levels" => self.num_levels.to_string(),
            "n_hash" => self.n_hash.to_string(),
            "bucket_capacity" => self.bucket_capacity.to_string(),
            "overflow_capacity" => self.overflow_capacity.to_string(),
            "heap_capacity" => self
                .heap_capacity
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "max_weight" => self.max_weight.to_string(),
            "sigma_threshold" => self.sigma_threshold.to_string(),
            "merge_cadence" => self.merge_cadence.to_string(),
            "min_eligible_fraction" => self.min_eligible_fraction.to_string(),
            "min_mean_weight" => self.min_mean_weight.to_string(),
            "stream_mode" => self.stream_mode.clone(),
            "stream_radius" => self.stream_radius.to_string(),
            "fill_threshold" => self.fill_threshold.to_string(),
            "low_water" => self.low_water.to_string(),
            "quadtree_threshold" => self.quadtree_threshold.to_string(),
            "quadtree_min_pixel" => self.quadtree_min_pixel.to_string(),
            "deterministic" => self.deterministic.to_string(),
            "depth_scale" => self.depth_scale.to_string(),
            "f_threshold" => self.f_threshold.to_string(),
            "collapse_eps" => self.collapse_eps.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) {
            return Err(Error::Config(format!("voxel_size must be > 0, got {}", self.voxel_size)));
        }
        if (self.block_edge - 8.0 * self.voxel_size).abs() > 1e-9 * self.block_edge.abs().max(1.0) {
            return Err(Error::Config(format!(
                "block_edge {} must be 8 x voxel_size {}",
                self.block_edge, self.voxel_size
            )));
        }
        if !(self.truncation > self.voxel_size) {
            return Err(Error::Config(format!(
                "truncation {} must exceed voxel_size {}",
                self.truncation, self.voxel_size
            )));
        }
        if self.depth_scale <= 0.0 || self.f_threshold <= 0.0 || self.stream_radius <= 0.0 {
            return Err(Error::Config("depth_scale, f_threshold and stream_radius must be > 0".into()));
        }
        if self.quadtree_threshold < 0.0 {
            return Err(Error::Config("quadtree_threshold must be >= 0".into()));
        }
        self.map_config().validate()?;
        Ok(())
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            block_edge: self.block_edge,
            fine_voxels_per_side: 8,
            num_levels: self.num_levels,
            n_hash: self.n_hash,
            bucket_capacity: self.bucket_capacity,
            overflow_capacity: self.overflow_capacity,
            heap_capacity: self.heap_capacity.clone(),
        }
    }

    pub fn streaming(&self) -> Option<StreamingConfig> {
        let mode = match self.stream_mode.as_str() {
            "frustum" => StreamMode::Frustum,
            "radius" => StreamMode::Radius {
                radius: self.stream_radius,
            },
            _ => return None,
        };
        Some(StreamingConfig {
            fill_threshold: self.fill_threshold,
            low_water: self.low_water,
            mode,
        })
    }

    pub fn map_config(&self) -> MapConfig {
        MapConfig {
            grid: self.grid(),
            truncation: self.truncation,
            max_weight: (self.max_weight > 0).then_some(self.max_weight),
            streaming: self.streaming(),
        }
    }

    /// Merge policy, or `None` with a single level or zero cadence.
    pub fn merge(&self) -> Option<MergeConfig> {
        (self.num_levels > 1 && self.merge_cadence > 0).then_some(MergeConfig {
            sigma_threshold: self.sigma_threshold,
            min_eligible_fraction: self.min_eligible_fraction,
            min_mean_weight: self.min_mean_weight,
            cadence: self.merge_cadence,
        })
    }

    pub fn mesh_options(&self) -> MeshOptions {
        let mut opts = MeshOptions::new(self.voxel_size);
        if self.collapse_eps >= 0.0 {
            opts.collapse_eps = Some(self.collapse_eps);
        }
        opts
    }

    pub fn quadtree(&self) -> QuadtreeConfig {
        QuadtreeConfig {
            contrast_threshold: self.quadtree_threshold,
            min_pixel: self.quadtree_min_pixel,
        }
    }
}
