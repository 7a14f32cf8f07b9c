//! Per-slot latency/energy accounting.

use serde::{Deserialize, Serialize};

use super::cache::CacheState;
use super::channel::ChannelConfig;
use crate::error::CoreError;
use crate::tiling::TileSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeConfig {
    pub f_mec_hz: f64,
    pub f_local_hz: f64,
    pub cycles_per_bit: f64,
    /// Effective switched capacitance of the MEC CPU, J/(cycle·Hz²).
    pub kappa_mec: f64,
    /// Effective switched capacitance of the headset CPU, J/(cycle·Hz²).
    pub kappa_local: f64,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        Self {
            f_mec_hz: 10e9,
            f_local_hz: 3e9,
            cycles_per_bit: 15.0,
            kappa_mec: 1e-29,
            kappa_local: 1e-28,
        }
    }
}

impl ComputeConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let fields = [
            ("f_mec_hz", self.f_mec_hz),
            ("f_local_hz", self.f_local_hz),
            ("cycles_per_bit", self.cycles_per_bit),
            ("kappa_mec", self.kappa_mec),
            ("kappa_local", self.kappa_local),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CoreError::InvalidConfig(format!(
                    "compute.{name} must be positive, got {value}"
                )));
            }
        }
        if self.f_local_hz >= self.f_mec_hz {
            return Err(CoreError::InvalidConfig(
                "compute.f_local_hz must be below compute.f_mec_hz".into(),
            ));
        }
        Ok(())
    }
}

/// Weighting of latency against energy in the slot cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    /// Latency weight in `[0, 1]`; energy gets `1 - omega`.
    pub omega: f64,
    /// Multiplies the latency term (seconds). 1.0 keeps raw units.
    pub latency_scale: f64,
    /// Multiplies the energy term (joules). 1.0 keeps raw units.
    pub energy_scale: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            omega: 0.8,
            latency_scale: 1.0,
            energy_scale: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(CoreError::InvalidConfig(format!(
                "omega must lie in [0, 1], got {}",
                self.omega
            )));
        }
        if !(self.latency_scale > 0.0 && self.energy_scale > 0.0) {
            return Err(CoreError::InvalidConfig(
                "cost scale factors must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Bits moved over each link in one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferSizes {
    pub d_2d_down: f64,
    pub d_mec_down: f64,
    pub d_cloud_down: f64,
    pub d_3d_down: f64,
    pub d_mec_back: f64,
    pub d_local_back: f64,
}

/// Full cost breakdown of one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub d_2d_down: f64,
    pub d_mec_down: f64,
    pub d_cloud_down: f64,
    pub d_3d_down: f64,
    pub d_mec_back: f64,
    pub d_local_back: f64,
    pub t_mec: f64,
    pub t_local: f64,
    pub t_total: f64,
    pub e_mec: f64,
    pub e_local: f64,
    pub e_tx: f64,
    pub e_total: f64,
    pub cost: f64,
    pub reward: f64,
}

impl SlotOutcome {
    pub const FIELD_NAMES: [&'static str; 15] = [
        "d_2d_down",
        "d_mec_down",
        "d_cloud_down",
        "d_3d_down",
        "d_mec_back",
        "d_local_back",
        "t_mec",
        "t_local",
        "t_total",
        "e_mec",
        "e_local",
        "e_tx",
        "e_total",
        "cost",
        "reward",
    ];

    /// Field values in [`Self::FIELD_NAMES`] order.
    pub fn values(&self) -> [f64; 15] {
        [
            self.d_2d_down,
            self.d_mec_down,
            self.d_cloud_down,
            self.d_3d_down,
            self.d_mec_back,
            self.d_local_back,
            self.t_mec,
            self.t_local,
            self.t_total,
            self.e_mec,
            self.e_local,
            self.e_tx,
            self.e_total,
            self.cost,
            self.reward,
        ]
    }

    pub fn fields(&self) -> impl Iterator<Item = (&'static str, f64)> {
        Self::FIELD_NAMES.into_iter().zip(self.values())
    }
}

/// Transfer sizes for serving `fov` under `offload` (bit `z` refers to the
/// `z`-th FoV tile in ascending id order).
pub fn transfer_sizes(
    local: &CacheState,
    mec: &CacheState,
    fov: &TileSet,
    offload: &[bool],
    tile_bits: f64,
    output_ratio: f64,
) -> Result<TransferSizes, CoreError> {
    if offload.len() != fov.len() {
        return Err(CoreError::SizeMismatch {
            what: "offload vector",
            expected: fov.len(),
            actual: offload.len(),
        });
    }
    let mut sizes = TransferSizes::default();
    for (tile, &at_mec) in fov.iter().zip(offload) {
        if at_mec {
            sizes.d_3d_down += tile_bits * output_ratio;
            if !mec.contains(tile) {
                sizes.d_mec_back += tile_bits;
            }
        } else if !local.contains(tile) {
            if mec.contains(tile) {
                sizes.d_mec_down += tile_bits;
            } else {
                sizes.d_cloud_down += tile_bits;
            }
        }
    }
    sizes.d_2d_down = sizes.d_mec_down + sizes.d_cloud_down;
    sizes.d_local_back = sizes.d_cloud_down;
    Ok(sizes)
}

/// Latency, energy and weighted cost of a slot.
#[allow(clippy::too_many_arguments)]
pub fn slot_cost(
    sizes: &TransferSizes,
    rate: f64,
    compute: &ComputeConfig,
    channel: &ChannelConfig,
    offload: &[bool],
    tile_bits: f64,
    weights: &CostWeights,
) -> SlotOutcome {
    let at_mec = offload.iter().filter(|&&o| o).count() as f64;
    let at_local = offload.len() as f64 - at_mec;
    let w = compute.cycles_per_bit;

    let t_com_mec = w * tile_bits * at_mec / compute.f_mec_hz;
    let t_com_local = w * tile_bits * at_local / compute.f_local_hz;
    let e_mec = compute.kappa_mec * compute.f_mec_hz.powi(2) * w * tile_bits * at_mec;
    let e_local =
        compute.kappa_local * compute.f_local_hz.powi(2) * w * tile_bits * at_local;

    let backhaul = channel.backhaul_rate_bps;
    let t_mec = sizes.d_mec_back / backhaul + sizes.d_3d_down / rate + t_com_mec;
    // Cloud fetch over the backhaul runs in parallel with the MEC-held tiles on
    // the downlink; cloud tiles are then forwarded over the downlink.
    let t_local = (sizes.d_local_back / backhaul).max(sizes.d_mec_down / rate)
        + sizes.d_local_back / rate
        + t_com_local;
    let t_total = t_mec.max(t_local);

    let t_down = (sizes.d_2d_down + sizes.d_3d_down) / rate;
    let e_tx = channel.tx_power_w * t_down;
    let e_total = e_mec + e_local + e_tx;

    let cost = weights.omega * weights.latency_scale * t_total
        + (1.0 - weights.omega) * weights.energy_scale * e_total;

    SlotOutcome {
        d_2d_down: sizes.d_2d_down,
        d_mec_down: sizes.d_mec_down,
        d_cloud_down: sizes.d_cloud_down,
        d_3d_down: sizes.d_3d_down,
        d_mec_back: sizes.d_mec_back,
        d_local_back: sizes.d_local_back,
        t_mec,
        t_local,
        t_total,
        e_mec,
        e_local,
        e_tx,
        e_total,
        cost,
        reward: -cost,
    }
}
