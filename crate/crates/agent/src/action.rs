//! Continuous actor output and its decoding into a feasible hybrid action.

use rand::Rng;
use vrmec_core::environment::{AblationFlags, CacheState, Environment, HybridAction};
use vrmec_core::{EnvError, TileSet};

/// Widths of the five bit groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionLayout {
    pub fov_tiles: usize,
    pub local_capacity: usize,
    pub mec_capacity: usize,
}

/// Group order of scores and thresholds.
pub const GROUPS: usize = 5;

impl ActionLayout {
    pub fn score_len(&self) -> usize {
        3 * self.fov_tiles + self.local_capacity + self.mec_capacity
    }

    /// Scores followed by the five thresholds.
    pub fn len(&self) -> usize {
        self.score_len() + GROUPS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Ranges of offload, store_local, delete_local, store_mec, delete_mec.
    pub fn ranges(&self) -> [std::ops::Range<usize>; GROUPS] {
        let z = self.fov_tiles;
        let a = z;
        let b = a + z;
        let c = b + self.local_capacity;
        let d = c + z;
        let e = d + self.mec_capacity;
        [0..a, a..b, b..c, c..d, d..e]
    }
}

/// Actor output: one score per bit and one threshold per group, all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawActionOutput {
    pub layout: ActionLayout,
    pub values: Vec<f64>,
}

impl RawActionOutput {
    pub fn new(layout: ActionLayout, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), layout.len(), "raw action width");
        Self { layout, values }
    }

    pub fn scores(&self, group: usize) -> &[f64] {
        &self.values[self.layout.ranges()[group].clone()]
    }

    pub fn threshold(&self, group: usize) -> f64 {
        self.values[self.layout.score_len() + group]
    }
}

/// The parts of the current slot the decoder needs.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub fov: &'a TileSet,
    pub local: &'a CacheState,
    pub mec: &'a CacheState,
    pub flags: AblationFlags,
}

impl<'a> SlotView<'a> {
    pub fn of(env: &'a Environment) -> Result<Self, EnvError> {
        Ok(Self {
            fov: env.current_fov()?,
            local: env.local_cache()?,
            mec: env.mec_cache()?,
            flags: env.flags(),
        })
    }
}

/// Keeps the `keep` highest-scoring set bits; ties go to the lower index.
fn keep_top(bits: &mut [bool], scores: &[f64], keep: usize) {
    let mut on: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
    on.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    for &i in &on[keep.min(on.len())..] {
        bits[i] = false;
    }
}

fn balance(store: &mut [bool], store_scores: &[f64], delete: &mut [bool], delete_scores: &[f64]) {
    let s = store.iter().filter(|&&b| b).count();
    let d = delete.iter().filter(|&&b| b).count();
    let n = s.min(d);
    keep_top(store, store_scores, n);
    keep_top(delete, delete_scores, n);
}

/// Thresholds every group, then repairs the result into a feasible action.
pub fn binarize_and_repair(raw: &RawActionOutput, view: &SlotView<'_>) -> HybridAction {
    let layout = raw.layout;
    assert_eq!(layout.fov_tiles, view.fov.len(), "layout/FoV mismatch");
    let bits = |g: usize| -> Vec<bool> {
        let t = raw.threshold(g);
        raw.scores(g).iter().map(|&s| s >= t).collect()
    };
    let mut offload = bits(0);
    if !view.flags.segmentation_enabled {
        let scores = raw.scores(0);
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        offload = vec![mean >= raw.threshold(0); scores.len()];
    }
    let mut store_local = bits(1);
    let mut delete_local = bits(2);
    let mut store_mec = bits(3);
    let mut delete_mec = bits(4);
    for (z, tile) in view.fov.iter().enumerate() {
        if offload[z] || view.local.contains(tile) {
            store_local[z] = false;
        }
        if !offload[z] || view.mec.contains(tile) {
            store_mec[z] = false;
        }
    }
    balance(&mut store_local, raw.scores(1), &mut delete_local, raw.scores(2));
    balance(&mut store_mec, raw.scores(3), &mut delete_mec, raw.scores(4));
    if !view.flags.caching_replacement_enabled {
        for g in [&mut store_local, &mut delete_local, &mut store_mec, &mut delete_mec] {
            g.iter_mut().for_each(|b| *b = false);
        }
    }
    HybridAction {
        offload,
        store_local,
        delete_local,
        store_mec,
        delete_mec,
    }
}

/// Uniform scores and thresholds pushed through the same decoder.
pub fn random_raw<R: Rng + ?Sized>(layout: ActionLayout, rng: &mut R) -> RawActionOutput {
    RawActionOutput::new(layout, (0..layout.len()).map(|_| rng.random::<f64>()).collect())
}

pub fn random_policy<R: Rng + ?Sized>(view: &SlotView<'_>, layout: ActionLayout, rng: &mut R) -> HybridAction {
    binarize_and_repair(&random_raw(layout, rng), view)
}
