//! Flat spatial hash table from block coordinates to per-level block heaps.
//!
//! Every slot owns a fixed bucket of `bucket_capacity` entries. Entries that do
//! not fit are chained through a shared overflow pool; the entry's `offset`
//! field is the pool index of the next chain node. A chain is limited to
//! `overflow_capacity` nodes.
//!
//! Each resolution level has its own fixed-capacity heap with a free list.
//! Heap slots are materialized lazily: an allocated block whose voxels have
//! never been written reads back as all-empty voxels without holding memory.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::block::{BlockCoord, VoxelBlock};
use crate::config::GridConfig;
use crate::error::{Error, Result};
use crate::voxel::Voxel;

pub const HASH_P1: i64 = 73_856_093;
pub const HASH_P2: i64 = 19_349_669;
pub const HASH_P3: i64 = 83_492_791;

const NIL: u32 = u32::MAX;

/// Slot index of `coord`: `(x·p1 ⊕ y·p2 ⊕ z·p3) mod n_hash`, evaluated in
/// wrapping 64-bit arithmetic and reduced to `[0, n_hash)`.
#[inline]
pub fn hash_key(coord: BlockCoord, n_hash: usize) -> usize {
    debug_assert!(n_hash > 0);
    let h = (coord.x as i64).wrapping_mul(HASH_P1)
        ^ (coord.y as i64).wrapping_mul(HASH_P2)
        ^ (coord.z as i64).wrapping_mul(HASH_P3);
    h.rem_euclid(n_hash as i64) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashEntry {
    pub coord: BlockCoord,
    /// Pool index of the next overflow node (`u32::MAX` terminates).
    pub offset: u32,
    /// Slot in `heaps[level]`.
    pub handle: u32,
    pub level: u8,
}

impl HashEntry {
    const VACANT: HashEntry = HashEntry {
        coord: BlockCoord::new(0, 0, 0),
        offset: NIL,
        handle: NIL,
        level: 0,
    };
}

/// Fixed-capacity block storage for one resolution level.
#[derive(Clone, Debug)]
struct BlockHeap {
    voxels_per_block: usize,
    allocated: Vec<bool>,
    payload: Vec<Option<Box<[Voxel]>>>,
    free: Vec<u32>,
    live: usize,
}

impl BlockHeap {
    fn new(capacity: usize, voxels_per_block: usize) -> Self {
        Self {
            voxels_per_block,
            allocated: vec![false; capacity],
            payload: (0..capacity).map(|_| None).collect(),
            // pop() hands out low handles first
            free: (0..capacity as u32).rev().collect(),
            live: 0,
        }
    }

    fn capacity(&self) -> usize {
        self.allocated.len()
    }

    fn alloc(&mut self) -> Option<u32> {
        let h = self.free.pop()?;
        self.allocated[h as usize] = true;
        self.live += 1;
        Some(h)
    }

    fn release(&mut self, h: u32) -> Option<Box<[Voxel]>> {
        debug_assert!(self.allocated[h as usize]);
        self.allocated[h as usize] = false;
        self.live -= 1;
        self.free.push(h);
        self.payload[h as usize].take()
    }

    fn get(&self, h: u32) -> Option<&[Voxel]> {
        self.payload[h as usize].as_deref()
    }

    fn get_mut(&mut self, h: u32) -> &mut [Voxel] {
        let n = self.voxels_per_block;
        self.payload[h as usize].get_or_insert_with(|| vec![Voxel::EMPTY; n].into_boxed_slice())
    }
}

/// Result of an idempotent insert.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inserted {
    pub handle: u32,
    pub level: u8,
    /// False when the coordinate was already live.
    pub created: bool,
}

#[derive(Clone, Debug)]
pub struct HashTable {
    config: GridConfig,
    bucket: Vec<HashEntry>,
    bucket_len: Vec<u8>,
    overflow_head: Vec<u32>,
    overflow_len: Vec<u8>,
    pool: Vec<HashEntry>,
    pool_free: Vec<u32>,
    heaps: Vec<BlockHeap>,
    live: usize,
}

enum Location {
    Bucket(usize),
    /// (previous pool node or NIL for the head, this pool node)
    Chain(u32, u32),
}

impl HashTable {
    pub fn new(config: GridConfig) -> Result<Self> {
        config.validate()?;
        if config.bucket_capacity > u8::MAX as usize || config.overflow_capacity > u8::MAX as usize
        {
            return Err(Error::Config("bucket and overflow capacity must be <= 255".into()));
        }
        let heaps = (0..config.num_levels)
            .map(|l| BlockHeap::new(config.heap_capacity[l as usize], config.voxels_per_block(l)))
            .collect();
        Ok(Self {
            bucket: vec![HashEntry::VACANT; config.n_hash * config.bucket_capacity],
            bucket_len: vec![0; config.n_hash],
            overflow_head: vec![NIL; config.n_hash],
            overflow_len: vec![0; config.n_hash],
            pool: Vec::new(),
            pool_free: Vec::new(),
            heaps,
            live: 0,
            config,
        })
    }

    #[inline]
    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    /// Number of live blocks across all levels.
    #[inline]
    pub fn len(&self) -> usize {
        self.live
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    /// Live blocks in `heaps[level]`.
    pub fn occupancy(&self, level: u8) -> usize {
        self.heaps[level as usize].live
    }

    pub fn capacity(&self, level: u8) -> usize {
        self.heaps[level as usize].capacity()
    }

    pub fn num_levels(&self) -> u8 {
        self.heaps.len() as u8
    }

    #[inline]
    fn slot_of(&self, coord: BlockCoord) -> usize {
        hash_key(coord, self.config.n_hash)
    }

    fn locate(&self, coord: BlockCoord) -> Option<(usize, Location)> {
        let slot = self.slot_of(coord);
        let base = slot * self.config.bucket_capacity;
        let len = self.bucket_len[slot] as usize;
        if let Some(i) = self.bucket[base..base + len].iter().position(|e| e.coord == coord) {
            return Some((slot, Location::Bucket(base + i)));
        }
        let mut prev = NIL;
        let mut cur = self.overflow_head[slot];
        while cur != NIL {
            let e = &self.pool[cur as usize];
            if e.coord == coord {
                return Some((slot, Location::Chain(prev, cur)));
            }
            prev = cur;
            cur = e.offset;
        }
        None
    }

    fn entry_at(&self, loc: &Location) -> &HashEntry {
        match *loc {
            Location::Bucket(i) => &self.bucket[i],
            Location::Chain(_, n) => &self.pool[n as usize],
        }
    }

    /// Handle and level of a live block.
    #[inline]
    pub fn find_block(&self, coord: BlockCoord) -> Option<(u32, u8)> {
        self.locate(coord).map(|(_, loc)| {
            let e = self.entry_at(&loc);
            (e.handle, e.level)
        })
    }

    #[inline]
    pub fn contains(&self, coord: BlockCoord) -> bool {
        self.locate(coord).is_some()
    }

    /// Entries examined by a lookup of `coord` (hit or miss).
    pub fn probe_length(&self, coord: BlockCoord) -> usize {
        let slot = self.slot_of(coord);
        let base = slot * self.config.bucket_capacity;
        let len = self.bucket_len[slot] as usize;
        if let Some(i) = self.bucket[base..base + len].iter().position(|e| e.coord == coord) {
            return i + 1;
        }
        let mut probes = len;
        let mut cur = self.overflow_head[slot];
        while cur != NIL {
            probes += 1;
            if self.pool[cur as usize].coord == coord {
                break;
            }
            cur = self.pool[cur as usize].offset;
        }
        probes.max(1)
    }

    /// Allocates a zeroed block for `coord` at `level`, or returns the live
    /// entry unchanged if `coord` is already present (at any level).
    pub fn insert_block(&mut self, coord: BlockCoord, level: u8) -> Result<Inserted> {
        if let Some((handle, level)) = self.find_block(coord) {
            return Ok(Inserted {
                handle,
                level,
                created: false,
            });
        }
        if level >= self.num_levels() {
            return Err(Error::Contract(alloc::format!(
                "level {level} out of range ({} levels)",
                self.num_levels()
            )));
        }
        let slot = self.slot_of(coord);
        let in_bucket = (self.bucket_len[slot] as usize) < self.config.bucket_capacity;
        if !in_bucket && self.overflow_len[slot] as usize >= self.config.overflow_capacity {
            return Err(Error::SlotFull {
                slot,
                coord,
                bucket_capacity: self.config.bucket_capacity,
                overflow_capacity: self.config.overflow_capacity,
            });
        }
        let heap = &mut self.heaps[level as usize];
        let Some(handle) = heap.alloc() else {
            return Err(Error::HeapExhausted {
                level,
                capacity: heap.capacity(),
            });
        };
        let entry = HashEntry {
            coord,
            offset: NIL,
            handle,
            level,
        };
        if in_bucket {
            let i = slot * self.config.bucket_capacity + self.bucket_len[slot] as usize;
            self.bucket[i] = entry;
            self.bucket_len[slot] += 1;
        } else {
            // append at the tail so chain order follows insertion order
            let node = self.alloc_pool_node(entry);
            let mut cur = self.overflow_head[slot];
            if cur == NIL {
                self.overflow_head[slot] = node;
            } else {
                while self.pool[cur as usize].offset != NIL {
                    cur = self.pool[cur as usize].offset;
                }
                self.pool[cur as usize].offset = node;
            }
            self.overflow_len[slot] += 1;
        }
        self.live += 1;
        Ok(Inserted {
            handle,
            level,
            created: true,
        })
    }

    fn alloc_pool_node(&mut self, entry: HashEntry) -> u32 {
        if let Some(n) = self.pool_free.pop() {
            self.pool[n as usize] = entry;
            n
        } else {
            self.pool.push(entry);
            (self.pool.len() - 1) as u32
        }
    }

    /// Removes `coord`, frees its heap slot and returns the voxel payload.
    pub fn remove_block(&mut self, coord: BlockCoord) -> Result<VoxelBlock> {
        let (slot, loc) = self.locate(coord).ok_or(Error::NotFound(coord))?;
        let entry = *self.entry_at(&loc);
        match loc {
            Location::Bucket(i) => {
                let base = slot * self.config.bucket_capacity;
                let last = base + self.bucket_len[slot] as usize - 1;
                self.bucket[i] = self.bucket[last];
                self.bucket[last] = HashEntry::VACANT;
                self.bucket_len[slot] -= 1;
                // refill the bucket from the chain head
                let head = self.overflow_head[slot];
                if head != NIL {
                    let mut moved = self.pool[head as usize];
                    self.overflow_head[slot] = moved.offset;
                    self.overflow_len[slot] -= 1;
                    self.pool_free.push(head);
                    moved.offset = NIL;
                    self.bucket[last] = moved;
                    self.bucket_len[slot] += 1;
                }
            }
            Location::Chain(prev, node) => {
                let next = self.pool[node as usize].offset;
                if prev == NIL {
                    self.overflow_head[slot] = next;
                } else {
                    self.pool[prev as usize].offset = next;
                }
                self.overflow_len[slot] -= 1;
                self.pool_free.push(node);
            }
        }
        self.live -= 1;
        let heap = &mut self.heaps[entry.level as usize];
        let n = heap.voxels_per_block;
        let voxels = match heap.release(entry.handle) {
            Some(b) => b.into_vec(),
            None => vec![Voxel::EMPTY; n],
        };
        Ok(VoxelBlock {
            coord,
            level: entry.level,
            voxels,
        })
    }

    /// Inserts `block` at its level and stores its voxels. Fails if the
    /// coordinate is already live.
    pub fn write_block(&mut self, block: VoxelBlock) -> Result<u32> {
        if self.contains(block.coord) {
            return Err(Error::Contract(alloc::format!(
                "block {:?} is already live",
                block.coord
            )));
        }
        let expected = self.config.voxels_per_block(block.level.min(self.num_levels().saturating_sub(1)));
        if block.voxels.len() != expected || block.level >= self.num_levels() {
            return Err(Error::Contract(alloc::format!(
                "payload of {} voxels does not match level {}",
                block.voxels.len(),
                block.level
            )));
        }
        let ins = self.insert_block(block.coord, block.level)?;
        if !block.is_unobserved() || block.voxels.iter().any(|v| *v != Voxel::EMPTY) {
            self.heaps[block.level as usize].payload[ins.handle as usize] =
                Some(block.voxels.into_boxed_slice());
        }
        Ok(ins.handle)
    }

    /// Voxels of a live block, or `None` if it has never been written.
    #[inline]
    pub fn voxels(&self, level: u8, handle: u32) -> Option<&[Voxel]> {
        self.heaps[level as usize].get(handle)
    }

    /// Mutable voxels of a live block, materializing it if needed.
    #[inline]
    pub fn voxels_mut(&mut self, level: u8, handle: u32) -> &mut [Voxel] {
        debug_assert!(self.heaps[level as usize].allocated[handle as usize]);
        self.heaps[level as usize].get_mut(handle)
    }

    /// Copy of a live block's payload.
    pub fn block(&self, coord: BlockCoord) -> Option<VoxelBlock> {
        let (handle, level) = self.find_block(coord)?;
        let voxels = match self.voxels(level, handle) {
            Some(v) => v.to_vec(),
            None => vec![Voxel::EMPTY; self.config.voxels_per_block(level)],
        };
        Some(VoxelBlock {
            coord,
            level,
            voxels,
        })
    }

    /// All live entries in slot order.
    pub fn entries(&self) -> Vec<HashEntry> {
        let mut out = Vec::with_capacity(self.live);
        for slot in 0..self.config.n_hash {
            let base = slot * self.config.bucket_capacity;
            out.extend_from_slice(&self.bucket[base..base + self.bucket_len[slot] as usize]);
            let mut cur = self.overflow_head[slot];
            while cur != NIL {
                out.push(self.pool[cur as usize]);
                cur = self.pool[cur as usize].offset;
            }
        }
        out
    }

    /// All live entries ordered by block coordinate.
    pub fn sorted_entries(&self) -> Vec<HashEntry> {
        let mut out = self.entries();
        out.sort_unstable_by_key(|e| e.coord);
        out
    }

    /// Mutable payloads for a set of distinct `(level, handle)` pairs, in the
    /// order given. Blocks are materialized.
    pub fn voxels_mut_many(&mut self, targets: &[(u8, u32)]) -> Vec<&mut [Voxel]> {
        let mut per_level: Vec<Vec<(usize, u32)>> = vec![Vec::new(); self.heaps.len()];
        for (i, &(level, handle)) in targets.iter().enumerate() {
            per_level[level as usize].push((i, handle));
        }
        let mut out: Vec<Option<&mut [Voxel]>> = (0..targets.len()).map(|_| None).collect();
        for (heap, mut wanted) in self.heaps.iter_mut().zip(per_level) {
            if wanted.is_empty() {
                continue;
            }
            wanted.sort_unstable_by_key(|&(_, h)| h);
            let n = heap.voxels_per_block;
            let mut want = wanted.into_iter().peekable();
            for (h, slot) in heap.payload.iter_mut().enumerate() {
                let Some(&(i, wh)) = want.peek() else { break };
                if wh as usize != h {
                    continue;
                }
                want.next();
                assert!(want.peek().map_or(true, |&(_, nh)| nh != wh), "duplicate target handle {wh}");
                let voxels = slot.get_or_insert_with(|| vec![Voxel::EMPTY; n].into_boxed_slice());
                out[i] = Some(&mut voxels[..]);
            }
        }
        out.into_iter()
            .map(|o| o.expect("target handle is not allocated"))
            .collect()
    }

    /// Number of materialized payloads per level.
    pub fn materialized(&self, level: u8) -> usize {
        self.heaps[level as usize]
            .payload
            .iter()
            .filter(|p| p.is_some())
            .count()
    }
}
