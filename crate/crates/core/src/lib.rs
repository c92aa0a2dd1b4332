//! Variance-adaptive multi-resolution TSDF mapping on a flat spatial hash.
//!
//! Blocks of constant metric size live in one hash table; each block stores a
//! dense voxel array whose resolution depends on its level. Fine blocks whose
//! fused distances have settled are re-allocated at the coarser level, and
//! meshing stitches the two resolutions together.
//!
//! The crate is `no_std` with `alloc`. Enable `parallel` for rayon-backed
//! integration and meshing.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adapt;
pub mod block;
pub mod codec;
pub mod config;
pub mod dda;
pub mod error;
pub mod hash;
pub mod integrate;
pub mod map;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod quadtree;
pub mod stream;
pub mod voxel;

mod par;

pub use block::{voxel_center, voxel_index, BlockCoord, VoxelBlock};
pub use config::GridConfig;
pub use error::{Error, Result};
pub use hash::{hash_key, HashEntry, HashTable};
pub use integrate::{DepthFrame, IntegrationStats, Intrinsics, PointCloudFrame, SensorPose};
pub use map::{MapConfig, TsdfMap};
pub use math::{Mat3, Vec3};
pub use mesh::Mesh;
pub use voxel::Voxel;

pub(crate) type FxHashMap<K, V> = hashbrown::HashMap<K, V, rustc_hash::FxBuildHasher>;
pub(crate) type FxHashSet<K> = hashbrown::HashSet<K, rustc_hash::FxBuildHasher>;
