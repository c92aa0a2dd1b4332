//! Depth-image and point-cloud sequences on disk.
//!
//! Dataset directory layout:
//!
//! ```text
//! trajectory.txt   timestamp tx ty tz qx qy qz qw, one line per frame
//! intrinsics.txt   fx fy cx cy                  (depth datasets)
//! depth/*.png      16-bit depth, sorted by name (depth datasets)
//! rgb/*.png        optional 8-bit color
//! clouds/*.bin     point clouds (or *.xyz / *.txt ASCII)
//! reference.ply    optional ground-truth points
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use adagrid_core::integrate::is_valid_depth;
use adagrid_core::{DepthFrame, Intrinsics, PointCloudFrame, SensorPose, Vec3};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};

/// Largest tolerated deviation of a trajectory quaternion from unit norm.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryEntry {
    pub timestamp: f64,
    pub pose: SensorPose,
}

/// Non-empty lines with `#` comments stripped, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn numbers(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::format(path, format!("line {line}: {t:?} is not a number")))
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_trajectory(path: &Path, text: &str) -> Result<Vec<TrajectoryEntry>> {
    let mut out: Vec<TrajectoryEntry> = Vec::new();
    for (line, l) in content_lines(text) {
        let v = numbers(path, line, l)?;
        if v.len() != 8 {
            return Err(Error::format(path, format!("line {line}: expected 8 values, got {}", v.len())));
        }
        let q_norm = (v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]).sqrt();
        if (q_norm - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(Error::format(path, format!("line {line}: quaternion norm {q_norm} is not 1")));
        }
        if let Some(prev) = out.last() {
            if !(v[0] > prev.timestamp) {
                return Err(Error::format(
                    path,
                    format!("line {line}: timestamp {} does not increase", v[0]),
                ));
            }
        }
        let pose = SensorPose::from_quaternion(Vec3::new(v[1], v[2], v[3]), v[4], v[5], v[6], v[7])
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        out.push(TrajectoryEntry { timestamp: v[0], pose });
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryEntry>> {
    parse_trajectory(path, &read_text(path)?)
}

/// Quaternion `(x, y, z, w)` of a rotation matrix.
fn rotation_quaternion(pose: &SensorPose) -> [f64; 4] {
    let m = |r: usize, c: usize| pose.rotation.column(c)[r];
    let tr = m(0, 0) + m(1, 1) + m(2, 2);
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [(m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s, 0.25 * s]
    } else if m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2) {
        let s = (1.0 + m(0, 0) - m(1, 1) - m(2, 2)).sqrt() * 2.0;
        [0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s, (m(2, 1) - m(1, 2)) / s]
    } else if m(1, 1) > m(2, 2) {
        let s = (1.0 + m(1, 1) - m(0, 0) - m(2, 2)).sqrt() * 2.0;
        [(m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s, (m(0, 2) - m(2, 0)) / s]
    } else {
        let s = (1.0 + m(2, 2) - m(0, 0) - m(1, 1)).sqrt() * 2.0;
        [(m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s, (m(1, 0) - m(0, 1)) / s]
    };
    let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    q.map(|c| c / n)
}

pub fn write_trajectory(path: &Path, entries: &[TrajectoryEntry]) -> Result<()> {
    let mut s = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for e in entries {
        let t = e.pose.translation;
        let [qx, qy, qz, qw] = rotation_quaternion(&e.pose);
        s.push_str(&format!(
            "{:.6} {:?} {:?} {:?} {:?} {:?} {:?} {:?}\n",
            e.timestamp, t.x, t.y, t.z, qx, qy, qz, qw
        ));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let text = read_text(path)?;
    let mut values = Vec::new();
    for (line, l) in content_lines(&text) {
        values.extend(numbers(path, line, l)?);
    }
    if values.len() != 4 {
        return Err(Error::format(path, format!("expected fx fy cx cy, got {} values", values.len())));
    }
    Intrinsics::new(values[0], values[1], values[2], values[3]).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_intrinsics(path: &Path, k: &Intrinsics) -> Result<()> {
    fs::write(path, format!("# fx fy cx cy\n{:?} {:?} {:?} {:?}\n", k.fx, k.fy, k.cx, k.cy))
        .map_err(|e| Error::io(path, e))
}

/// Files in `dir` with one of `extensions`, sorted by name.
pub fn list_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if path.is_file() && ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Depth in meters from a 16-bit single-channel PNG; raw 0 is invalid.
pub fn read_depth_png(path: &Path, scale: f64) -> Result<(usize, usize, Vec<f32>)> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        other => {
            return Err(Error::format(
                path,
                format!("depth must be 16-bit single channel, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = img.dimensions();
    let depth = img
        .into_raw()
        .into_iter()
        .map(|raw| if raw == 0 { 0.0 } else { (raw as f64 * scale) as f32 })
        .collect();
    Ok((w as usize, h as usize, depth))
}

/// Writes depth as 16-bit units of `scale` meters; invalid or out-of-range
/// depths become 0.
pub fn write_depth_png(path: &Path, width: usize, height: usize, depth: &[f32], scale: f64) -> Result<()> {
    let raw: Vec<u16> = depth
        .iter()
        .map(|&d| {
            let r = (d as f64 / scale).round();
            if is_valid_depth(d) && r >= 1.0 && r <= u16::MAX as f64 {
                r as u16
            } else {
                0
            }
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, raw).expect("buffer matches dimensions");
    img.save(path).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_rgb_png(path: &Path) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?.to_rgb8();
    let (w, h) = img.dimensions();
    let px = img.pixels().map(|p| p.0).collect();
    Ok((w as usize, h as usize, px))
}

pub fn write_rgb_png(path: &Path, width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<()> {
    let raw: Vec<u8> = rgb.iter().flatten().copied().collect();
    image::RgbImage::from_raw(width as u32, height as u32, raw)
        .expect("buffer matches dimensions")
        .save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// An on-disk depth sequence, read lazily frame by frame.
#[derive(Clone, Debug)]
pub struct DepthSequence {
    pub depth_files: Vec<PathBuf>,
    pub rgb_files: Option<Vec<PathBuf>>,
    pub trajectory: Vec<TrajectoryEntry>,
    pub intrinsics: Intrinsics,
    pub depth_scale: f64,
}

/// Opens a depth sequence; depth images, color images and trajectory entries
/// are paired by index and their counts must agree.
pub fn read_depth_sequence(
    depth_dir: &Path,
    rgb_dir: Option<&Path>,
    trajectory: &Path,
    intrinsics: &Path,
    depth_scale: f64,
) -> Result<DepthSequence> {
    let depth_files = list_files(depth_dir, &["png"])?;
    let rgb_files = rgb_dir.map(|d| list_files(d, &["png"])).transpose()?;
    let trajectory_entries = read_trajectory(trajectory)?;
    if depth_files.len() != trajectory_entries.len() {
        return Err(Error::format(
            depth_dir,
            format!(
                "{} depth images but {} trajectory entries",
                depth_files.len(),
                trajectory_entries.len()
            ),
        ));
    }
    if let Some(rgb) = &rgb_files {
        if rgb.len() != depth_files.len() {
            return Err(Error::format(
                depth_dir,
                format!("{} depth images but {} color images", depth_files.len(), rgb.len()),
            ));
        }
    }
    Ok(DepthSequence {
        depth_files,
        rgb_files,
        trajectory: trajectory_entries,
        intrinsics: read_intrinsics(intrinsics)?,
        depth_scale,
    })
}

impl DepthSequence {
    /// Standard dataset layout under `root`.
    pub fn open(root: &Path, depth_scale: f64) -> Result<Self> {
        let rgb = root.join("rgb");
        read_depth_sequence(
            &root.join("depth"),
            rgb.is_dir().then_some(rgb.as_path()),
            &root.join("trajectory.txt"),
            &root.join("intrinsics.txt"),
            depth_scale,
        )
    }

    pub fn len(&self) -> usize {
        self.depth_files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth_files.is_empty()
    }

    pub fn frame(&self, i: usize) -> Result<DepthFrame> {
        self.load(i).map_err(|e| e.in_frame(i))
    }

    fn load(&self, i: usize) -> Result<DepthFrame> {
        let path = &self.depth_files[i];
        let (w, h, depth) = read_depth_png(path, self.depth_scale)?;
        let color = match &self.rgb_files {
            Some(files) => {
                let (cw, ch, rgb) = read_rgb_png(&files[i])?;
                if (cw, ch) != (w, h) {
                    return Err(Error::format(&files[i], format!("color is {cw}x{ch}, depth {w}x{h}")));
                }
                Some(rgb)
            }
            None => None,
        };
        Ok(DepthFrame::new(w, h, depth, color, self.intrinsics, self.trajectory[i].pose)?)
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<DepthFrame>> + Send + '_ {
        (0..self.len()).map(move |i| self.frame(i))
    }
}

/// Points read from one file; non-finite points are dropped and counted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CloudFile {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub skipped: usize,
}

impl CloudFile {
    fn push(&mut self, p: [f64; 3], c: Option<[u8; 3]>) {
        let p = Vec3::new(p[0], p[1], p[2]);
        if !p.is_finite() {
            self.skipped += 1;
            return;
        }
        self.points.push(p);
        if let (Some(colors), Some(c)) = (self.colors.as_mut(), c) {
            colors.push(c);
        }
    }
}

/// Binary: `u32` count, `count × 3` `f32` coordinates, then optionally
/// `count × 3` RGB bytes, all little-endian. ASCII (`.xyz`, `.txt`): one
/// `x y z [r g b]` line per point.
pub fn read_pointcloud(path: &Path) -> Result<CloudFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        log::warn!("{}: empty point cloud", path.display());
        return Ok(CloudFile::default());
    }
    let ascii = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("xyz") | Some("txt") | Some("XYZ") | Some("TXT")
    );
    if ascii {
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
        let lines: Vec<(usize, &str)> = content_lines(&text).collect();
        let mut out = CloudFile {
            colors: lines.first().is_some_and(|(_, l)| l.split_whitespace().count() == 6).then(Vec::new),
            ..CloudFile::default()
        };
        let width = if out.colors.is_some() { 6 } else { 3 };
        for (line, l) in lines {
            let v: Vec<&str> = l.split_whitespace().collect();
            if v.len() != width {
                return Err(Error::format(path, format!("line {line}: expected {width} fields, got {}", v.len())));
            }
            let mut xyz = [0.0; 3];
            for k in 0..3 {
                // Rust parses "NaN" and "inf"; lowercase "nan" is common in exports
                let t = if v[k].eq_ignore_ascii_case("nan") { "NaN" } else { v[k] };
                xyz[k] = t
                    .parse()
                    .map_err(|_| Error::format(path, format!("line {line}: bad coordinate {:?}", v[k])))?;
            }
            let c = if width == 6 {
                let mut c = [0u8; 3];
                for k in 0..3 {
                    c[k] = v[3 + k]
                        .parse()
                        .map_err(|_| Error::format(path, format!("line {line}: bad color {:?}", v[3 + k])))?;
                }
                Some(c)
            } else {
                None
            };
            out.push(xyz, c);
        }
        if out.skipped > 0 {
            log::warn!("{}: skipped {} non-finite points", path.display(), out.skipped);
        }
        return Ok(out);
    }

    let mut r = &bytes[..];
    let n = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::format(path, "truncated count"))? as usize;
    let rest = bytes.len() - 4;
    let with_color = if rest == 12 * n {
        false
    } else if rest == 15 * n {
        true
    } else {
        return Err(Error::format(
            path,
            format!("{rest} payload bytes fit neither {n} points nor {n} colored points"),
        ));
    };
    let mut xyz = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = [0.0; 3];
        for c in p.iter_mut() {
            *c = r.read_f32::<LittleEndian>().expect("length checked") as f64;
        }
        xyz.push(p);
    }
    let mut out = CloudFile {
        colors: with_color.then(Vec::new),
        ..CloudFile::default()
    };
    for p in xyz {
        let c = with_color.then(|| {
            let mut c = [0u8; 3];
            c.copy_from_slice(&r[..3]);
            r = &r[3..];
            c
        });
        out.push(p, c);
    }
    if out.skipped > 0 {
        log::warn!("{}: skipped {} non-finite points", path.display(), out.skipped);
    }
    Ok(out)
}

pub fn write_pointcloud(path: &Path, points: &[Vec3], colors: Option<&[[u8; 3]]>) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 15 * points.len());
    buf.write_u32::<LittleEndian>(points.len() as u32).expect("vec write");
    for p in points {
        for c in [p.x, p.y, p.z] {
            buf.write_f32::<LittleEndian>(c as f32).expect("vec write");
        }
    }
    if let Some(colors) = colors {
        assert_eq!(colors.len(), points.len(), "one color per point");
        buf.extend(colors.iter().flatten());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct PointCloudSequence {
    pub files: Vec<PathBuf>,
    pub trajectory: Vec<TrajectoryEntry>,
}

pub fn read_pointcloud_sequence(dir: &Path, trajectory: &Path) -> Result<PointCloudSequence> {
    let files = list_files(dir, &["bin", "xyz", "txt"])?;
    let trajectory_entries = read_trajectory(trajectory)?;
    if files.len() != trajectory_entries.len() {
        return Err(Error::format(
            dir,
            format!(
                "{} point clouds but {} trajectory entries",
                files.len(),
                trajectory_entries.len()
            ),
        ));
    }
    Ok(PointCloudSequence {
        files,
        trajectory: trajectory_entries,
    })
}

impl PointCloudSequence {
    pub fn open(root: &Path) -> Result<Self> {
        read_pointcloud_sequence(&root.join("clouds"), &root.join("trajectory.txt"))
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn frame(&self, i: usize) -> Result<PointCloudFrame> {
        let cloud = read_pointcloud(&self.files[i]).map_err(|e| e.in_frame(i))?;
        Ok(PointCloudFrame {
            points: cloud.points,
            colors: cloud.colors,
            pose: self.trajectory[i].pose,
        })
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<PointCloudFrame>> + Send + '_ {
        (0..self.len()).map(move |i| self.frame(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_validation() {
        let p = Path::new("t.txt");
        let ok = "# comment\n0.0 1 2 3 0 0 0 1\n0.1 1 2 3 0 0 0.7071068 0.7071068\n";
        let t = parse_trajectory(p, ok).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].pose.translation, Vec3::new(1.0, 2.0, 3.0));
        assert!(parse_trajectory(p, "0 0 0 0 0 0 0 1.01\n").is_err());
        assert!(parse_trajectory(p, "0 0 0 0 0 0 0 1.0005\n").is_ok());
        assert!(parse_trajectory(p, "1 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1\n").is_err());
        assert!(parse_trajectory(p, "1 0 0 0 0 0 1\n").is_err());
    }

    #[test]
    fn quaternion_of_rotation() {
        let pose = SensorPose::from_quaternion(Vec3::ZERO, 0.1, -0.4, 0.3, 0.86).unwrap();
        let q = rotation_quaternion(&pose);
        let back = SensorPose::from_quaternion(Vec3::ZERO, q[0], q[1], q[2], q[3]).unwrap();
        for c in 0..3 {
            assert!((back.rotation.column(c) - pose.rotation.column(c)).norm() < 1e-12);
        }
    }
}
