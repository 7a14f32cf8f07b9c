//! Flattening of the observed system state into the networks' input.

use vrmec_core::environment::SystemState;
use vrmec_core::TileGrid;

use crate::predictor::encode_request;
use crate::AgentError;

/// What fills the popularity segment of the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopularityInput {
    /// The forecast pmf, `K` entries.
    Forecast,
    /// The raw request window, `T_r` FoV encodings of `N` entries each.
    History,
}

/// `[local cache, MEC cache, popularity segment, scaled gain]`.
#[derive(Debug, Clone)]
pub struct StateEncoder {
    input: PopularityInput,
    tiles: usize,
    viewpoints: usize,
    window: usize,
    gain_scale: f64,
    /// Row `k-1` is the FoV encoding of viewpoint `k`.
    encodings: Vec<Vec<f64>>,
}

impl StateEncoder {
    pub fn new(grid: &TileGrid, window: usize, input: PopularityInput, gain_scale: f64) -> Result<Self, AgentError> {
        if !(gain_scale > 0.0 && gain_scale.is_finite()) {
            return Err(AgentError::Config("gain_scale must be positive".into()));
        }
        let encodings = (1..=grid.viewpoint_count())
            .map(|k| encode_request(grid, k))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            input,
            tiles: grid.tile_count(),
            viewpoints: grid.viewpoint_count(),
            window,
            gain_scale,
            encodings,
        })
    }

    pub fn input(&self) -> PopularityInput {
        self.input
    }

    pub fn dim(&self) -> usize {
        let middle = match self.input {
            PopularityInput::Forecast => self.viewpoints,
            PopularityInput::History => self.window * self.tiles,
        };
        2 * self.tiles + middle + 1
    }

    pub fn encode(&self, state: &SystemState) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&state.local_cache_vec);
        v.extend_from_slice(&state.mec_cache_vec);
        match self.input {
            PopularityInput::Forecast => v.extend_from_slice(&state.predicted_popularity),
            PopularityInput::History => {
                for &k in &state.recent_requests {
                    v.extend_from_slice(&self.encodings[k - 1]);
                }
            }
        }
        v.push(state.channel_gain * self.gain_scale);
        debug_assert_eq!(v.len(), self.dim());
        v
    }
}

/// Forecast-mode encoding of one state.
pub fn vectorize_state(state: &SystemState, gain_scale: f64) -> Vec<f64> {
    let mut v = state.local_cache_vec.clone();
    v.extend_from_slice(&state.mec_cache_vec);
    v.extend_from_slice(&state.predicted_popularity);
    v.push(state.channel_gain * gain_scale);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use vrmec_core::environment::{EnvConfig, Environment};
    use vrmec_core::tiling::GridConfig;

    #[test]
    fn dimensions_and_segments() {
        let mut env = Environment::new(EnvConfig::default()).unwrap();
        let s = env.reset(4);
        let grid = TileGrid::from_config(&GridConfig::default()).unwrap();
        let enc = StateEncoder::new(&grid, 20, PopularityInput::Forecast, 1e4).unwrap();
        let v = enc.encode(&s);
        assert_eq!(v.len(), 95);
        assert_eq!(v, vectorize_state(&s, 1e4));
        assert_eq!(v[..35].iter().sum::<f64>(), 3.0);
        assert_eq!(v[35..70].iter().sum::<f64>(), 8.0);
        assert!((v[70..94].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(v[94], s.channel_gain * 1e4);

        let hist = StateEncoder::new(&grid, 20, PopularityInput::History, 1e4).unwrap();
        let h = hist.encode(&s);
        assert_eq!(h.len(), 2 * 35 + 20 * 35 + 1);
        assert_eq!(hist.dim(), h.len());
        assert_eq!(h[70..770].iter().sum::<f64>(), 80.0);
        let last = *s.recent_requests.last().unwrap();
        assert_eq!(&h[735..770], encode_request(&grid, last).unwrap().as_slice());
    }
}
