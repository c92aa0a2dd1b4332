//! Binary block record shared by the streaming archive and map files.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 12    | coord x, y, z as `i32` |
//! | 1     | level `u8` |
//! | 1     | 1 if a voxel array follows, 0 for an all-empty block |
//! | 32·n  | per voxel: tsdf `f64`, weight `u32`, color 3×`f32`, s2 `f64` |
//!
//! `n` is the voxel count of the level under the reader's grid config.

use alloc::format;
use alloc::vec::Vec;

use crate::block::{BlockCoord, VoxelBlock};
use crate::config::GridConfig;
use crate::error::{Error, Result};
use crate::voxel::Voxel;

pub const RECORD_HEADER_BYTES: usize = 14;
pub const VOXEL_BYTES: usize = 32;

/// Appends the record for `block` to `out`.
pub fn encode_block_into(block: &VoxelBlock, out: &mut Vec<u8>) {
    for c in block.coord.to_array() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out.push(block.level);
    let dense = block.voxels.iter().any(|v| *v != Voxel::EMPTY);
    out.push(dense as u8);
    if dense {
        out.reserve(block.voxels.len() * VOXEL_BYTES);
        for v in &block.voxels {
            out.extend_from_slice(&v.tsdf.to_le_bytes());
            out.extend_from_slice(&v.weight.to_le_bytes());
            for c in v.color {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.extend_from_slice(&v.s2.to_le_bytes());
        }
    }
}

pub fn encode_block(block: &VoxelBlock) -> Vec<u8> {
    let mut out = Vec::new();
    encode_block_into(block, &mut out);
    out
}

/// Decodes one record from the front of `bytes`, returning the block and the
/// number of bytes consumed.
pub fn decode_block(bytes: &[u8], config: &GridConfig) -> Result<(VoxelBlock, usize)> {
    let mut r = Reader { bytes, pos: 0 };
    let coord = BlockCoord::new(r.i32()?, r.i32()?, r.i32()?);
    let level = r.u8()?;
    if level >= config.num_levels {
        return Err(Error::Codec(format!(
            "block {coord:?} has level {level}, grid has {} levels",
            config.num_levels
        )));
    }
    let mut block = VoxelBlock::empty(coord, level, config);
    match r.u8()? {
        0 => {}
        1 => {
            for v in block.voxels.iter_mut() {
                let tsdf = r.f64()?;
                let weight = r.u32()?;
                let color = [r.f32()?, r.f32()?, r.f32()?];
                let s2 = r.f64()?;
                *v = Voxel {
                    tsdf,
                    weight,
                    color,
                    s2,
                };
            }
        }
        f => return Err(Error::Codec(format!("block {coord:?} has payload flag {f}"))),
    }
    Ok((block, r.pos))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::Codec(format!("record truncated at byte {} of {}", self.pos, self.bytes.len()))
        })?;
        self.pos = end;
        Ok(s.try_into().expect("slice length is N"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_dense_and_empty() {
        let cfg = GridConfig::depth_camera();
        let mut b = VoxelBlock::empty(BlockCoord::new(-3, 7, 0), 1, &cfg);
        b.voxels[9].update(-0.013, Some([0.25, 0.5, 1.0]));
        b.voxels[9].update(0.007, None);
        let bytes = encode_block(&b);
        assert_eq!(bytes.len(), RECORD_HEADER_BYTES + 64 * VOXEL_BYTES);
        let (back, used) = decode_block(&bytes, &cfg).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back, b);

        let e = VoxelBlock::empty(BlockCoord::new(1, 2, 3), 0, &cfg);
        let bytes = encode_block(&e);
        assert_eq!(bytes.len(), RECORD_HEADER_BYTES);
        assert_eq!(decode_block(&bytes, &cfg).unwrap().0, e);
    }

    #[test]
    fn rejects_truncated_and_bad_level() {
        let cfg = GridConfig::depth_camera();
        let mut b = VoxelBlock::empty(BlockCoord::new(0, 0, 0), 0, &cfg);
        b.voxels[0].update(0.01, None);
        let bytes = encode_block(&b);
        assert!(decode_block(&bytes[..bytes.len() - 1], &cfg).is_err());
        let mut bad = bytes.clone();
        bad[12] = 5;
        assert!(decode_block(&bad, &cfg).is_err());
    }
}
