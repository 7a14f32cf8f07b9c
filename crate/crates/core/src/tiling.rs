//! Geometry of the unfolded 2D video plane.
//!
//! Tiles are numbered `1..=N` row-major and viewpoints `1..=K` row-major over
//! the lattice of admissible FoV anchors. These ids are the canonical scheme
//! shared by caches, actions and state vectors throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// 1-based tile id.
pub type TileId = usize;

/// Raw grid parameters as they appear in a config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub fov_rows: usize,
    pub fov_cols: usize,
    pub step_horizontal_tiles: usize,
    pub step_vertical_tiles: usize,
    pub total_bits: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 7,
            fov_rows: 2,
            fov_cols: 2,
            step_horizontal_tiles: 1,
            step_vertical_tiles: 1,
            total_bits: 5_250_000_000,
        }
    }
}

/// Validated tile plane geometry. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    n_rows: usize,
    n_cols: usize,
    fov_rows: usize,
    fov_cols: usize,
    delta_h: usize,
    delta_v: usize,
    total_bits: u64,
}

/// Top-left anchor of a viewpoint's FoV (0-based row/column).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Viewpoint {
    pub index: usize,
    pub row: usize,
    pub col: usize,
}

/// Sorted, duplicate-free set of tile ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TileSet(Vec<TileId>);

impl TileSet {
    pub fn from_unsorted(mut ids: Vec<TileId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: TileId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn as_slice(&self) -> &[TileId] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = TileId> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection(&self, other: &TileSet) -> TileSet {
        TileSet(self.iter().filter(|&id| other.contains(id)).collect())
    }
}

impl TileGrid {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        fov_rows: usize,
        fov_cols: usize,
        delta_h: usize,
        delta_v: usize,
        total_bits: u64,
    ) -> Result<Self, CoreError> {
        let bad = |msg: String| Err(CoreError::InvalidGrid(msg));
        if n_rows == 0 || n_cols == 0 || fov_rows == 0 || fov_cols == 0 {
            return bad("grid and FoV dimensions must be positive".into());
        }
        if fov_rows > n_rows || fov_cols > n_cols {
            return bad(format!(
                "FoV {fov_rows}x{fov_cols} does not fit in grid {n_rows}x{n_cols}"
            ));
        }
        if delta_h == 0 || delta_v == 0 {
            return bad("viewpoint steps must be at least 1".into());
        }
        if !(n_cols - fov_cols).is_multiple_of(delta_h) {
            return bad(format!(
                "horizontal step {delta_h} does not divide {}",
                n_cols - fov_cols
            ));
        }
        if !(n_rows - fov_rows).is_multiple_of(delta_v) {
            return bad(format!(
                "vertical step {delta_v} does not divide {}",
                n_rows - fov_rows
            ));
        }
        let n = (n_rows * n_cols) as u64;
        if total_bits == 0 || !total_bits.is_multiple_of(n) {
            return bad(format!(
                "total size {total_bits} bit is not a positive multiple of {n} tiles"
            ));
        }
        Ok(Self {
            n_rows,
            n_cols,
            fov_rows,
            fov_cols,
            delta_h,
            delta_v,
            total_bits,
        })
    }

    pub fn from_config(cfg: &GridConfig) -> Result<Self, CoreError> {
        Self::new(
            cfg.rows,
            cfg.cols,
            cfg.fov_rows,
            cfg.fov_cols,
            cfg.step_horizontal_tiles,
            cfg.step_vertical_tiles,
            cfg.total_bits,
        )
    }

    pub fn rows(&self) -> usize {
        self.n_rows
    }

    pub fn cols(&self) -> usize {
        self.n_cols
    }

    /// Number of tiles `N`.
    pub fn tile_count(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Tiles per FoV `Z`.
    pub fn fov_size(&self) -> usize {
        self.fov_rows * self.fov_cols
    }

    /// Size of one tile in bits (`Q / N`, exact).
    pub fn tile_bits(&self) -> u64 {
        self.total_bits / self.tile_count() as u64
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    fn anchor_cols(&self) -> usize {
        (self.n_cols - self.fov_cols) / self.delta_h + 1
    }

    fn anchor_rows(&self) -> usize {
        (self.n_rows - self.fov_rows) / self.delta_v + 1
    }

    /// Number of distinct viewpoints `K`.
    pub fn viewpoint_count(&self) -> usize {
        self.anchor_cols() * self.anchor_rows()
    }

    pub fn viewpoint(&self, k: usize) -> Result<Viewpoint, CoreError> {
        let count = self.viewpoint_count();
        if k == 0 || k > count {
            return Err(CoreError::ViewpointOutOfRange { index: k, count });
        }
        let ordinal = k - 1;
        Ok(Viewpoint {
            index: k,
            row: (ordinal / self.anchor_cols()) * self.delta_v,
            col: (ordinal % self.anchor_cols()) * self.delta_h,
        })
    }

    /// Tiles covered by the FoV of viewpoint `k`.
    pub fn fov_tiles(&self, k: usize) -> Result<TileSet, CoreError> {
        let vp = self.viewpoint(k)?;
        let mut ids = Vec::with_capacity(self.fov_size());
        for r in vp.row..vp.row + self.fov_rows {
            for c in vp.col..vp.col + self.fov_cols {
                ids.push(r * self.n_cols + c + 1);
            }
        }
        // Row-major traversal of a rectangle is already sorted.
        Ok(TileSet(ids))
    }

    pub fn overlap(&self, k1: usize, k2: usize) -> Result<TileSet, CoreError> {
        Ok(self.fov_tiles(k1)?.intersection(&self.fov_tiles(k2)?))
    }

    /// Binary tile-membership vector of a tile set, length `N`.
    pub fn indicator(&self, tiles: &TileSet) -> Vec<f64> {
        let mut v = vec![0.0; self.tile_count()];
        for id in tiles.iter() {
            v[id - 1] = 1.0;
        }
        v
    }
}
