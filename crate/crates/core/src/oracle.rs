//! Exhaustive single-slot reference.
//!
//! Everything here is written directly from the model definitions and does
//! not call into the environment's cost or cache code, so the two can be
//! checked against each other.

use serde::{Deserialize, Serialize};

use crate::environment::{AblationFlags, ChannelConfig, ComputeConfig, CostWeights, HybridAction, SlotOutcome};
use crate::error::{CoreError, EnvError, FeasibilityError};
use crate::tiling::GridConfig;

pub const MAX_FOV_TILES: usize = 6;
pub const MAX_LOCAL_CACHE: usize = 4;
pub const MAX_MEC_CACHE: usize = 10;

/// Frozen copy of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSnapshot {
    pub grid: GridConfig,
    pub channel: ChannelConfig,
    pub compute: ComputeConfig,
    pub weights: CostWeights,
    pub flags: AblationFlags,
    pub output_ratio: f64,
    /// Sorted tile ids held by the headset.
    pub local_cache: Vec<usize>,
    /// Sorted tile ids held by the MEC server.
    pub mec_cache: Vec<usize>,
    pub request: usize,
    pub channel_gain: f64,
}

impl SlotSnapshot {
    /// Requested FoV tiles, ascending.
    pub fn fov(&self) -> Result<Vec<usize>, CoreError> {
        let g = &self.grid;
        if g.step_horizontal_tiles == 0 || g.step_vertical_tiles == 0 || g.fov_cols > g.cols || g.fov_rows > g.rows {
            return Err(CoreError::InvalidGrid("bad snapshot grid".into()));
        }
        let across = (g.cols - g.fov_cols) / g.step_horizontal_tiles + 1;
        let down = (g.rows - g.fov_rows) / g.step_vertical_tiles + 1;
        let k = self.request;
        if k == 0 || k > across * down {
            return Err(CoreError::ViewpointOutOfRange {
                index: k,
                count: across * down,
            });
        }
        let top = (k - 1) / across * g.step_vertical_tiles;
        let left = (k - 1) % across * g.step_horizontal_tiles;
        let mut tiles = Vec::new();
        for r in top..top + g.fov_rows {
            for c in left..left + g.fov_cols {
                tiles.push(r * g.cols + c + 1);
            }
        }
        Ok(tiles)
    }

    fn check_guards(&self) -> Result<(), CoreError> {
        let z = self.grid.fov_rows * self.grid.fov_cols;
        if z > MAX_FOV_TILES || self.local_cache.len() > MAX_LOCAL_CACHE || self.mec_cache.len() > MAX_MEC_CACHE {
            return Err(CoreError::InstanceTooLarge(format!(
                "Z={z}, M_L={}, M_E={} (limits {MAX_FOV_TILES}, {MAX_LOCAL_CACHE}, {MAX_MEC_CACHE})",
                self.local_cache.len(),
                self.mec_cache.len()
            )));
        }
        Ok(())
    }
}

/// All `k`-subsets of `0..n` as membership masks, in lexicographic order of
/// the index lists.
fn subsets(n: usize, k: usize) -> Vec<Vec<bool>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if k == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k {
                break;
            }
            cur[i] = true;
            rec(i + 1, n, k - 1, cur, out);
            cur[i] = false;
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut vec![false; n], &mut out);
    out
}

/// Balanced store/delete choices for one cache: stores over `candidates`
/// (FoV positions), deletes over `capacity` slots.
fn replacements(z: usize, candidates: &[usize], capacity: usize, enabled: bool) -> Vec<(Vec<bool>, Vec<bool>)> {
    let max_r = if enabled { candidates.len().min(capacity) } else { 0 };
    let mut out = Vec::new();
    for r in 0..=max_r {
        for pick in subsets(candidates.len(), r) {
            let mut store = vec![false; z];
            for (i, &chosen) in pick.iter().enumerate() {
                if chosen {
                    store[candidates[i]] = true;
                }
            }
            for delete in subsets(capacity, r) {
                out.push((store.clone(), delete));
            }
        }
    }
    out
}

/// Every feasible hybrid action for the snapshot, each exactly once.
pub fn enumerate_feasible(snapshot: &SlotSnapshot) -> Result<Vec<HybridAction>, CoreError> {
    snapshot.check_guards()?;
    let fov = snapshot.fov()?;
    let z = fov.len();
    let patterns: Vec<Vec<bool>> = if snapshot.flags.segmentation_enabled {
        (0..1usize << z)
            .map(|m| (0..z).map(|i| m >> (z - 1 - i) & 1 == 1).collect())
            .collect()
    } else {
        vec![vec![false; z], vec![true; z]]
    };
    let caching = snapshot.flags.caching_replacement_enabled;
    let mut actions = Vec::new();
    for offload in patterns {
        let local_candidates: Vec<usize> = (0..z)
            .filter(|&i| !offload[i] && !snapshot.local_cache.contains(&fov[i]))
            .collect();
        let mec_candidates: Vec<usize> = (0..z)
            .filter(|&i| offload[i] && !snapshot.mec_cache.contains(&fov[i]))
            .collect();
        let local = replacements(z, &local_candidates, snapshot.local_cache.len(), caching);
        let mec = replacements(z, &mec_candidates, snapshot.mec_cache.len(), caching);
        for (store_local, delete_local) in &local {
            for (store_mec, delete_mec) in &mec {
                actions.push(HybridAction {
                    offload: offload.clone(),
                    store_local: store_local.clone(),
                    delete_local: delete_local.clone(),
                    store_mec: store_mec.clone(),
                    delete_mec: delete_mec.clone(),
                });
            }
        }
    }
    Ok(actions)
}

fn check_feasible(snapshot: &SlotSnapshot, fov: &[usize], a: &HybridAction) -> Result<(), FeasibilityError> {
    let z = fov.len();
    if a.offload.len() != z {
        return Err(FeasibilityError::OffloadWidth {
            expected: z,
            actual: a.offload.len(),
        });
    }
    if a.store_local.len() != z || a.delete_local.len() != snapshot.local_cache.len() {
        return Err(FeasibilityError::LocalReplacement("wrong bit-group width".into()));
    }
    if a.store_mec.len() != z || a.delete_mec.len() != snapshot.mec_cache.len() {
        return Err(FeasibilityError::MecReplacement("wrong bit-group width".into()));
    }
    if !snapshot.flags.segmentation_enabled && a.offload.iter().any(|&o| o != a.offload[0]) {
        return Err(FeasibilityError::PartialOffload);
    }
    if !snapshot.flags.caching_replacement_enabled && a.has_replacement() {
        return Err(FeasibilityError::ReplacementDisabled);
    }
    for i in 0..z {
        if a.store_local[i] && (a.offload[i] || snapshot.local_cache.contains(&fov[i])) {
            return Err(FeasibilityError::LocalReplacement(format!("tile {} not storable", fov[i])));
        }
        if a.store_mec[i] && (!a.offload[i] || snapshot.mec_cache.contains(&fov[i])) {
            return Err(FeasibilityError::MecReplacement(format!("tile {} not storable", fov[i])));
        }
    }
    let ones = |v: &[bool]| v.iter().filter(|&&b| b).count();
    if ones(&a.store_local) != ones(&a.delete_local) {
        return Err(FeasibilityError::LocalParity {
            stores: ones(&a.store_local),
            deletes: ones(&a.delete_local),
        });
    }
    if ones(&a.store_mec) != ones(&a.delete_mec) {
        return Err(FeasibilityError::MecParity {
            stores: ones(&a.store_mec),
            deletes: ones(&a.delete_mec),
        });
    }
    Ok(())
}

/// Slot cost recomputed from scratch.
pub fn recompute_cost(snapshot: &SlotSnapshot, action: &HybridAction) -> Result<SlotOutcome, EnvError> {
    let fov = snapshot.fov()?;
    check_feasible(snapshot, &fov, action)?;

    let n_tiles = (snapshot.grid.rows * snapshot.grid.cols) as f64;
    let tau = snapshot.grid.total_bits as f64 / n_tiles;
    let phi = snapshot.output_ratio;
    let ch = &snapshot.channel;
    let cp = &snapshot.compute;

    let mut from_mec_cache = 0.0;
    let mut from_cloud = 0.0;
    let mut rendered = 0.0;
    let mut fetched_by_mec = 0.0;
    let mut n_mec = 0.0;
    let mut n_local = 0.0;
    for (i, &tile) in fov.iter().enumerate() {
        let at_local = snapshot.local_cache.contains(&tile);
        let at_mec = snapshot.mec_cache.contains(&tile);
        if action.offload[i] {
            n_mec += 1.0;
            rendered += phi * tau;
            if !at_mec {
                fetched_by_mec += tau;
            }
        } else {
            n_local += 1.0;
            if !at_local && at_mec {
                from_mec_cache += tau;
            }
            if !at_local && !at_mec {
                from_cloud += tau;
            }
        }
    }

    let snr = ch.tx_power_w * snapshot.channel_gain / ch.noise_power_w;
    let r_wl = ch.bandwidth_hz * (1.0 + snr).log2();
    let r_bh = ch.backhaul_rate_bps;

    let compute_mec = cp.cycles_per_bit * tau * n_mec / cp.f_mec_hz;
    let compute_local = cp.cycles_per_bit * tau * n_local / cp.f_local_hz;
    let t_mec = fetched_by_mec / r_bh + rendered / r_wl + compute_mec;
    let first_leg = f64::max(from_cloud / r_bh, from_mec_cache / r_wl);
    let t_local = first_leg + from_cloud / r_wl + compute_local;
    let t_total = if t_mec > t_local { t_mec } else { t_local };

    let e_mec = cp.kappa_mec * cp.f_mec_hz * cp.f_mec_hz * cp.cycles_per_bit * tau * n_mec;
    let e_local = cp.kappa_local * cp.f_local_hz * cp.f_local_hz * cp.cycles_per_bit * tau * n_local;
    let d_2d = from_mec_cache + from_cloud;
    let e_tx = ch.tx_power_w * (d_2d + rendered) / r_wl;
    let e_total = e_mec + e_local + e_tx;

    let w = &snapshot.weights;
    let cost = w.omega * w.latency_scale * t_total + (1.0 - w.omega) * w.energy_scale * e_total;

    Ok(SlotOutcome {
        d_2d_down: d_2d,
        d_mec_down: from_mec_cache,
        d_cloud_down: from_cloud,
        d_3d_down: rendered,
        d_mec_back: fetched_by_mec,
        d_local_back: from_cloud,
        t_mec,
        t_local,
        t_total,
        e_mec,
        e_local,
        e_tx,
        e_total,
        cost,
        reward: -cost,
    })
}

/// Cheapest feasible action for this slot alone. Ties go to the
/// lexicographically smallest bit string.
pub fn best_myopic(snapshot: &SlotSnapshot) -> Result<(HybridAction, f64), EnvError> {
    let mut best: Option<(HybridAction, f64, String)> = None;
    for action in enumerate_feasible(snapshot)? {
        let cost = recompute_cost(snapshot, &action)?.cost;
        let better = match &best {
            None => true,
            Some((_, c, bits)) => cost < *c || (cost == *c && action.bit_string() < *bits),
        };
        if better {
            let bits = action.bit_string();
            best = Some((action, cost, bits));
        }
    }
    let (action, cost, _) = best.expect("the idle action is always feasible");
    Ok((action, cost))
}
