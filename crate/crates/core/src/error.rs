use alloc::string::String;

use crate::block::BlockCoord;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A hash slot's in-bucket entries and overflow chain are both full.
    #[error("hash slot {slot} is full (bucket {bucket_capacity} + overflow {overflow_capacity}) while inserting {coord:?}")]
    SlotFull {
        slot: usize,
        coord: BlockCoord,
        bucket_capacity: usize,
        overflow_capacity: usize,
    },

    #[error("heap for level {level} exhausted (capacity {capacity} blocks)")]
    HeapExhausted { level: u8, capacity: usize },

    #[error("block {0:?} not found")]
    NotFound(BlockCoord),

    #[error("fill {fill:.3} still at or above threshold {threshold:.3} after evicting {evicted} blocks; {candidates} candidates were available")]
    CapacityExceeded {
        fill: f64,
        threshold: f64,
        evicted: usize,
        candidates: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed block record: {0}")]
    Codec(String),

    #[error("invalid input: {0}")]
    Input(String),
}
