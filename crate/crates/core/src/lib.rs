//! Simulator for tiled VR video delivery over an MEC-assisted wireless link.
//!
//! The crate models the tile plane and viewpoints, Markov-modulated Zipf
//! popularity of viewpoints, the per-slot latency/energy cost of a hybrid
//! offloading + cache-replacement decision, and an exhaustive single-slot
//! oracle for checking all of the above.

pub mod environment;
pub mod error;
pub mod oracle;
pub mod popularity;
pub mod tiling;

pub use environment::{
    AblationFlags, CacheState, EnvConfig, Environment, Forecaster, HybridAction, SlotOutcome,
    SystemState,
};
pub use error::{CoreError, EnvError, FeasibilityError};
pub use oracle::SlotSnapshot;
pub use tiling::{TileGrid, TileId, TileSet};
