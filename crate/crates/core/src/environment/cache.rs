//! Fixed-capacity tile caches and the paired store/delete update.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::action::HybridAction;
use crate::error::{CoreError, FeasibilityError};
use crate::tiling::{TileId, TileSet};

/// Tile cache kept exactly full.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheState {
    tiles: TileSet,
    capacity: usize,
}

impl CacheState {
    pub fn new(tiles: TileSet, capacity: usize) -> Result<Self, CoreError> {
        if tiles.len() != capacity {
            return Err(CoreError::SizeMismatch {
                what: "cache contents",
                expected: capacity,
                actual: tiles.len(),
            });
        }
        if tiles.as_slice().first() == Some(&0) {
            return Err(CoreError::InvalidConfig("tile ids are 1-based".into()));
        }
        Ok(Self { tiles, capacity })
    }

    /// Fills a cache with `capacity` distinct tiles drawn uniformly from `1..=tile_count`.
    pub fn random<R: Rng + ?Sized>(
        tile_count: usize,
        capacity: usize,
        rng: &mut R,
    ) -> Result<Self, CoreError> {
        if capacity > tile_count {
            return Err(CoreError::InvalidConfig(format!(
                "cache capacity {capacity} exceeds tile count {tile_count}"
            )));
        }
        let ids = sample(rng, tile_count, capacity)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        Self::new(TileSet::from_unsorted(ids), capacity)
    }

    pub fn tiles(&self) -> &TileSet {
        &self.tiles
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn contains(&self, id: TileId) -> bool {
        self.tiles.contains(id)
    }

    /// Tile held in the `m`-th cache slot (ascending id order).
    pub fn slot(&self, m: usize) -> Option<TileId> {
        self.tiles.as_slice().get(m).copied()
    }
}

/// Checks every constraint on `action` for serving `fov` from the given caches.
pub fn validate_action(
    local: &CacheState,
    mec: &CacheState,
    fov: &TileSet,
    action: &HybridAction,
    caching_enabled: bool,
    segmentation_enabled: bool,
) -> Result<(), FeasibilityError> {
    let z = fov.len();
    if action.offload.len() != z {
        return Err(FeasibilityError::OffloadWidth {
            expected: z,
            actual: action.offload.len(),
        });
    }
    let widths = [
        (action.store_local.len(), z, true),
        (action.delete_local.len(), local.capacity(), true),
        (action.store_mec.len(), z, false),
        (action.delete_mec.len(), mec.capacity(), false),
    ];
    for (actual, expected, is_local) in widths {
        if actual != expected {
            let msg = format!("bit group has width {actual}, expected {expected}");
            return Err(if is_local {
                FeasibilityError::LocalReplacement(msg)
            } else {
                FeasibilityError::MecReplacement(msg)
            });
        }
    }
    if !segmentation_enabled {
        let first = action.offload.first().copied().unwrap_or(false);
        if action.offload.iter().any(|&o| o != first) {
            return Err(FeasibilityError::PartialOffload);
        }
    }
    if !caching_enabled && action.has_replacement() {
        return Err(FeasibilityError::ReplacementDisabled);
    }
    for (pos, tile) in fov.iter().enumerate() {
        if action.store_local[pos] {
            if action.offload[pos] {
                return Err(FeasibilityError::LocalReplacement(format!(
                    "tile {tile} is computed at the MEC server, cannot be stored locally"
                )));
            }
            if local.contains(tile) {
                return Err(FeasibilityError::LocalReplacement(format!(
                    "tile {tile} is already cached locally"
                )));
            }
        }
        if action.store_mec[pos] {
            if !action.offload[pos] {
                return Err(FeasibilityError::MecReplacement(format!(
                    "tile {tile} is computed locally, cannot be stored at the MEC server"
                )));
            }
            if mec.contains(tile) {
                return Err(FeasibilityError::MecReplacement(format!(
                    "tile {tile} is already cached at the MEC server"
                )));
            }
        }
    }
    let (stores, deletes) = (count(&action.store_local), count(&action.delete_local));
    if stores != deletes {
        return Err(FeasibilityError::LocalParity { stores, deletes });
    }
    let (stores, deletes) = (count(&action.store_mec), count(&action.delete_mec));
    if stores != deletes {
        return Err(FeasibilityError::MecParity { stores, deletes });
    }
    Ok(())
}

fn count(bits: &[bool]) -> usize {
    bits.iter().filter(|&&b| b).count()
}

fn replace(
    cache: &CacheState,
    fov: &TileSet,
    store: &[bool],
    delete: &[bool],
) -> Vec<TileId> {
    let mut tiles: Vec<TileId> = cache
        .tiles
        .iter()
        .zip(delete)
        .filter(|(_, &d)| !d)
        .map(|(t, _)| t)
        .collect();
    tiles.extend(fov.iter().zip(store).filter(|(_, &s)| s).map(|(t, _)| t));
    tiles
}

/// Applies the store/delete bits of a validated action and returns the new
/// caches. Validation is repeated here so the function is safe on its own.
pub fn apply_caching(
    local: &CacheState,
    mec: &CacheState,
    fov: &TileSet,
    action: &HybridAction,
    caching_enabled: bool,
    segmentation_enabled: bool,
) -> Result<(CacheState, CacheState), FeasibilityError> {
    validate_action(local, mec, fov, action, caching_enabled, segmentation_enabled)?;
    let new_local = TileSet::from_unsorted(replace(local, fov, &action.store_local, &action.delete_local));
    if new_local.len() != local.capacity {
        return Err(FeasibilityError::LocalCapacity {
            expected: local.capacity,
            actual: new_local.len(),
        });
    }
    let new_mec = TileSet::from_unsorted(replace(mec, fov, &action.store_mec, &action.delete_mec));
    if new_mec.len() != mec.capacity {
        return Err(FeasibilityError::MecCapacity {
            expected: mec.capacity,
            actual: new_mec.len(),
        });
    }
    Ok((
        CacheState {
            tiles: new_local,
            capacity: local.capacity,
        },
        CacheState {
            tiles: new_mec,
            capacity: mec.capacity,
        },
    ))
}
