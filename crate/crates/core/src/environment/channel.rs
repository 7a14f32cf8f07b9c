//! Downlink channel: Rayleigh block fading over a path-loss law.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    pub distance_m: f64,
    pub pathloss_exponent: f64,
    pub backhaul_rate_bps: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 20e6,
            tx_power_w: dbm_to_watts(30.0),
            noise_power_w: dbm_to_watts(-105.0),
            distance_m: 100.0,
            pathloss_exponent: 2.0,
            backhaul_rate_bps: 10e9,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let fields = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("noise_power_w", self.noise_power_w),
            ("distance_m", self.distance_m),
            ("pathloss_exponent", self.pathloss_exponent),
            ("backhaul_rate_bps", self.backhaul_rate_bps),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CoreError::InvalidConfig(format!(
                    "channel.{name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// `g · d^-α` for a given small-scale fading power `g`.
    pub fn gain_for_fading(&self, fading: f64) -> f64 {
        fading * self.distance_m.powf(-self.pathloss_exponent)
    }
}

/// Draws the slot's channel gain `h`; the fading power is unit-mean
/// exponential (squared Rayleigh envelope).
pub fn draw_channel<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> f64 {
    let fading: f64 = Exp1.sample(rng);
    cfg.gain_for_fading(fading)
}

/// Shannon rate of the downlink in bit/s.
pub fn downlink_rate(gain: f64, cfg: &ChannelConfig) -> f64 {
    let snr = cfg.tx_power_w * gain / cfg.noise_power_w;
    cfg.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2
}
