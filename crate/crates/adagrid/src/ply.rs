//! PLY meshes.
//!
//! Written layout (binary little-endian, stable):
//!
//! ```text
//! ply
//! format binary_little_endian 1.0
//! element vertex N
//! property float x / y / z
//! property float nx / ny / nz
//! property uchar red / green / blue
//! element face M
//! property list uchar int vertex_indices
//! end_header
//! ```
//!
//! Each vertex record is 27 bytes and each face 13 bytes. The reader also
//! accepts ASCII files and other scalar types and skips unknown properties.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use adagrid_core::mesh::{Mesh, Vertex};
use adagrid_core::quadtree::SplatSeed;
use adagrid_core::Vec3;
use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};

fn color_byte(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn header(vertices: usize, faces: Option<usize>) -> String {
    let mut h = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {vertices}\n\
         property float x\nproperty float y\nproperty float z\n\
         property float nx\nproperty float ny\nproperty float nz\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n"
    );
    if let Some(f) = faces {
        h.push_str(&format!("element face {f}\nproperty list uchar int vertex_indices\n"));
    }
    h.push_str("end_header\n");
    h
}

pub fn mesh_to_bytes(mesh: &Mesh) -> Vec<u8> {
    let mut out = header(mesh.vertices.len(), Some(mesh.triangles.len())).into_bytes();
    out.reserve(27 * mesh.vertices.len() + 13 * mesh.triangles.len());
    for v in &mesh.vertices {
        for c in [v.position.x, v.position.y, v.position.z, v.normal.x, v.normal.y, v.normal.z] {
            out.write_f32::<LittleEndian>(c as f32).expect("vec write");
        }
        out.extend(v.color.map(color_byte));
    }
    for t in &mesh.triangles {
        out.push(3);
        for &i in t {
            out.write_i32::<LittleEndian>(i as i32).expect("vec write");
        }
    }
    out
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&mesh_to_bytes(mesh)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Point set as a face-less PLY with zero normals and grey color.
pub fn write_points(points: &[Vec3], path: &Path) -> Result<()> {
    let mut out = header(points.len(), None).into_bytes();
    for p in points {
        for c in [p.x, p.y, p.z, 0.0, 0.0, 0.0] {
            out.write_f32::<LittleEndian>(c as f32).expect("vec write");
        }
        out.extend([128u8; 3]);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Splat seeds as a face-less PLY: position, color and a `scale` property.
pub fn seeds_to_bytes(seeds: &[SplatSeed]) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property float scale\nend_header\n",
        seeds.len()
    )
    .into_bytes();
    for s in seeds {
        for c in s.position.to_array() {
            out.write_f32::<LittleEndian>(c as f32).expect("vec write");
        }
        out.extend(s.color.map(color_byte));
        out.write_f32::<LittleEndian>(s.scale as f32).expect("vec write");
    }
    out
}

pub fn write_seeds(seeds: &[SplatSeed], path: &Path) -> Result<()> {
    fs::write(path, seeds_to_bytes(seeds)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => LittleEndian::read_i16(b) as f64,
            Scalar::U16 => LittleEndian::read_u16(b) as f64,
            Scalar::I32 => LittleEndian::read_i32(b) as f64,
            Scalar::U32 => LittleEndian::read_u32(b) as f64,
            Scalar::F32 => LittleEndian::read_f32(b) as f64,
            Scalar::F64 => LittleEndian::read_f64(b),
        }
    }
}

#[derive(Clone, Debug)]
struct Property {
    name: String,
    /// `Some(count type)` for list properties.
    list: Option<Scalar>,
    ty: Scalar,
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Pulls values from either an ASCII token stream or little-endian bytes.
enum Source<'a> {
    Ascii(std::str::SplitAsciiWhitespace<'a>),
    Binary(&'a [u8]),
}

impl Source<'_> {
    fn next(&mut self, ty: Scalar) -> Option<f64> {
        match self {
            Source::Ascii(it) => it.next()?.parse().ok(),
            Source::Binary(b) => {
                let n = ty.size();
                if b.len() < n {
                    return None;
                }
                let v = ty.read(&b[..n]);
                *b = &b[n..];
                Some(v)
            }
        }
    }
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&bytes).map_err(|msg| Error::format(path, msg))
}

pub fn parse_mesh(bytes: &[u8]) -> std::result::Result<Mesh, String> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or("missing end_header")?;
    let body_start = bytes[end..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| end + p + 1)
        .ok_or("header not terminated")?;
    let head = std::str::from_utf8(&bytes[..end]).map_err(|_| "header is not ASCII")?;
    let mut lines = head.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err("not a PLY file".into());
    }
    let mut ascii = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", "ascii", _] => ascii = Some(true),
            ["format", "binary_little_endian", _] => ascii = Some(false),
            ["format", other, _] => return Err(format!("unsupported format {other}")),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count {count}"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                el.props.push(Property {
                    name: name.to_string(),
                    list: Some(Scalar::parse(ct).ok_or(format!("unknown type {ct}"))?),
                    ty: Scalar::parse(ty).ok_or(format!("unknown type {ty}"))?,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                el.props.push(Property {
                    name: name.to_string(),
                    list: None,
                    ty: Scalar::parse(ty).ok_or(format!("unknown type {ty}"))?,
                });
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(format!("unexpected header line {line:?}")),
        }
    }
    let ascii = ascii.ok_or("missing format line")?;
    let body = &bytes[body_start..];
    let text;
    let mut src = if ascii {
        text = std::str::from_utf8(body).map_err(|_| "ASCII body is not UTF-8")?;
        Source::Ascii(text.split_ascii_whitespace())
    } else {
        Source::Binary(body)
    };

    let mut mesh = Mesh::default();
    for el in &elements {
        let idx = |n: &str| el.props.iter().position(|p| p.name == n);
        let pos = [idx("x"), idx("y"), idx("z")];
        let nrm = [idx("nx"), idx("ny"), idx("nz")];
        let col = [idx("red"), idx("green"), idx("blue")];
        let faces = idx("vertex_indices").or(idx("vertex_index"));
        let mut scalars = vec![0.0; el.props.len()];
        for _ in 0..el.count {
            let mut list = Vec::new();
            for (k, p) in el.props.iter().enumerate() {
                match p.list {
                    None => scalars[k] = src.next(p.ty).ok_or_else(|| format!("truncated {} data", el.name))?,
                    Some(ct) => {
                        let n = src.next(ct).ok_or_else(|| format!("truncated {} data", el.name))? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(src.next(p.ty).ok_or_else(|| format!("truncated {} data", el.name))?);
                        }
                        if Some(k) == faces {
                            list = items;
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    let get = |i: Option<usize>| i.map_or(0.0, |i| scalars[i]);
                    if pos.iter().any(Option::is_none) {
                        return Err("vertex element lacks x, y or z".into());
                    }
                    let color = if col.iter().all(Option::is_some) {
                        col.map(|i| (get(i) / 255.0) as f32)
                    } else {
                        [0.0; 3]
                    };
                    mesh.vertices.push(Vertex {
                        position: Vec3::new(get(pos[0]), get(pos[1]), get(pos[2])),
                        normal: Vec3::new(get(nrm[0]), get(nrm[1]), get(nrm[2])),
                        color,
                    });
                }
                "face" => {
                    if list.len() < 3 {
                        return Err(format!("face with {} indices", list.len()));
                    }
                    // fan-triangulate polygons
                    for j in 1..list.len() - 1 {
                        mesh.triangles.push([list[0] as u32, list[j] as u32, list[j + 1] as u32]);
                    }
                }
                _ => {}
            }
        }
    }
    let n = mesh.vertices.len() as u32;
    if let Some(t) = mesh.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
        return Err(format!("face {t:?} indexes past {n} vertices"));
    }
    Ok(mesh)
}

/// Vertex positions of a PLY file, for reference point sets.
pub fn read_points(path: &Path) -> Result<Vec<Vec3>> {
    Ok(read_mesh(path)?.vertices.into_iter().map(|v| v.position).collect())
}
