//! Map persistence.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "ADAGRID\0" | version u32
//! block_edge f64 | voxel_size f64 | fine_voxels_per_side u32 | num_levels u8
//! n_hash u64 | bucket_capacity u64 | overflow_capacity u64
//! heap_capacity u64 x num_levels | truncation f64 | max_weight u32 (0 = none)
//! live u64 | archived u64
//! live block records, sorted by coordinate
//! archived block records, sorted by coordinate
//! ```
//!
//! Records use the archive codec, so a saved map never depends on handle
//! assignment or hash-slot order.

use std::fs;
use std::path::Path;

use adagrid_core::codec::{decode_block, encode_block_into};
use adagrid_core::stream::Archive;
use adagrid_core::{GridConfig, HashTable, MapConfig, TsdfMap};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ADAGRID\0";
pub const VERSION: u32 = 1;

/// Grid and fusion settings stored in a map file.
#[derive(Clone, Debug, PartialEq)]
pub struct MapHeader {
    pub grid: GridConfig,
    pub truncation: f64,
    pub max_weight: Option<u32>,
    pub live: u64,
    pub archived: u64,
}

pub fn map_to_bytes(map: &TsdfMap) -> Vec<u8> {
    let g = map.grid();
    let mut out = Vec::new();
    let w = &mut out;
    w.extend_from_slice(MAGIC);
    w.write_u32::<LittleEndian>(VERSION).expect("vec write");
    w.write_f64::<LittleEndian>(g.block_edge).expect("vec write");
    w.write_f64::<LittleEndian>(g.fine_voxel_size()).expect("vec write");
    w.write_u32::<LittleEndian>(g.fine_voxels_per_side).expect("vec write");
    w.write_u8(g.num_levels).expect("vec write");
    for v in [g.n_hash, g.bucket_capacity, g.overflow_capacity] {
        w.write_u64::<LittleEndian>(v as u64).expect("vec write");
    }
    for &c in &g.heap_capacity {
        w.write_u64::<LittleEndian>(c as u64).expect("vec write");
    }
    w.write_f64::<LittleEndian>(map.config().truncation).expect("vec write");
    w.write_u32::<LittleEndian>(map.config().max_weight.unwrap_or(0)).expect("vec write");
    let entries = map.table().sorted_entries();
    w.write_u64::<LittleEndian>(entries.len() as u64).expect("vec write");
    w.write_u64::<LittleEndian>(map.archive().len() as u64).expect("vec write");
    for e in &entries {
        let block = map.table().block(e.coord).expect("entry is live");
        encode_block_into(&block, w);
    }
    // archive records iterate in coordinate order
    for (_, rec) in map.archive().records() {
        w.extend_from_slice(rec);
    }
    out
}

pub fn save_map(map: &TsdfMap, path: &Path) -> Result<()> {
    fs::write(path, map_to_bytes(map)).map_err(|e| Error::io(path, e))
}

fn short(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |_| Error::format(path, "truncated header")
}

fn read_header(path: &Path, r: &mut &[u8]) -> Result<MapHeader> {
    let mut magic = [0u8; 8];
    std::io::Read::read_exact(r, &mut magic).map_err(short(path))?;
    if &magic != MAGIC {
        return Err(Error::format(path, "not a map file"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(short(path))?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let block_edge = r.read_f64::<LittleEndian>().map_err(short(path))?;
    let voxel_size = r.read_f64::<LittleEndian>().map_err(short(path))?;
    let fine_voxels_per_side = r.read_u32::<LittleEndian>().map_err(short(path))?;
    let num_levels = r.read_u8().map_err(short(path))?;
    let mut caps = [0usize; 3];
    for c in caps.iter_mut() {
        *c = r.read_u64::<LittleEndian>().map_err(short(path))? as usize;
    }
    let mut heap_capacity = Vec::new();
    for _ in 0..num_levels {
        heap_capacity.push(r.read_u64::<LittleEndian>().map_err(short(path))? as usize);
    }
    let truncation = r.read_f64::<LittleEndian>().map_err(short(path))?;
    let max_weight = r.read_u32::<LittleEndian>().map_err(short(path))?;
    let live = r.read_u64::<LittleEndian>().map_err(short(path))?;
    let archived = r.read_u64::<LittleEndian>().map_err(short(path))?;
    let grid = GridConfig {
        block_edge,
        fine_voxels_per_side,
        num_levels,
        n_hash: caps[0],
        bucket_capacity: caps[1],
        overflow_capacity: caps[2],
        heap_capacity,
    };
    grid.validate().map_err(|e| Error::format(path, e.to_string()))?;
    if grid.fine_voxel_size() != voxel_size {
        return Err(Error::format(
            path,
            format!(
                "voxel size {voxel_size} disagrees with block edge {block_edge} / {fine_voxels_per_side}"
            ),
        ));
    }
    Ok(MapHeader {
        grid,
        truncation,
        max_weight: (max_weight > 0).then_some(max_weight),
        live,
        archived,
    })
}

pub fn read_map_header(path: &Path) -> Result<MapHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_header(path, &mut &bytes[..])
}

/// Loads a map. With `expected`, the stored grid and fusion settings must
/// match it exactly and its streaming policy is used; without, streaming is
/// off.
pub fn load_map(path: &Path, expected: Option<&MapConfig>) -> Result<TsdfMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    map_from_bytes(path, &bytes, expected)
}

pub fn map_from_bytes(path: &Path, bytes: &[u8], expected: Option<&MapConfig>) -> Result<TsdfMap> {
    let mut r = bytes;
    let header = read_header(path, &mut r)?;
    let config = match expected {
        Some(cfg) => {
            if cfg.grid != header.grid {
                return Err(Error::format(
                    path,
                    format!("stored grid {:?} differs from configured {:?}", header.grid, cfg.grid),
                ));
            }
            if cfg.truncation != header.truncation || cfg.max_weight != header.max_weight {
                return Err(Error::format(
                    path,
                    format!(
                        "stored truncation {} / max weight {:?} differ from configured {} / {:?}",
                        header.truncation, header.max_weight, cfg.truncation, cfg.max_weight
                    ),
                ));
            }
            cfg.clone()
        }
        None => MapConfig {
            grid: header.grid.clone(),
            truncation: header.truncation,
            max_weight: header.max_weight,
            streaming: None,
        },
    };
    let mut table = HashTable::new(header.grid.clone())?;
    for i in 0..header.live {
        let (block, used) = decode_block(r, &header.grid).map_err(|e| Error::format(path, format!("live block {i}: {e}")))?;
        r = &r[used..];
        table
            .write_block(block)
            .map_err(|e| Error::format(path, format!("live block {i}: {e}")))?;
    }
    let mut archive = Archive::new();
    for i in 0..header.archived {
        let (block, used) =
            decode_block(r, &header.grid).map_err(|e| Error::format(path, format!("archived block {i}: {e}")))?;
        archive.insert(block.coord, r[..used].to_vec());
        r = &r[used..];
    }
    if !r.is_empty() {
        return Err(Error::format(path, format!("{} trailing bytes", r.len())));
    }
    Ok(TsdfMap::from_parts(config, table, archive)?)
}
