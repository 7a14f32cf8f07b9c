//! One-slot transition engine.
//!
//! Each slot: evaluate the hybrid action against the current request and
//! channel, update both caches, advance the popularity chain, sample the next
//! request, draw the next channel gain and refresh the popularity forecast.

mod action;
mod cache;
mod channel;
mod cost;

pub use action::HybridAction;
pub use cache::{apply_caching, validate_action, CacheState};
pub use channel::{dbm_to_watts, downlink_rate, draw_channel, ChannelConfig};
pub use cost::{slot_cost, transfer_sizes, ComputeConfig, CostWeights, SlotOutcome, TransferSizes};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, EnvError};
use crate::oracle::SlotSnapshot;
use crate::popularity::{MarkovZipfProcess, PopularityConfig, RequestRecorder};
use crate::tiling::{GridConfig, TileGrid, TileSet};

/// Which of the two mechanisms are available to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub caching_replacement_enabled: bool,
    pub segmentation_enabled: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self::config(1).unwrap()
    }
}

impl AblationFlags {
    /// Configs 1-4: (caching, segmentation) = (T,T), (F,T), (T,F), (F,F).
    pub fn config(n: u8) -> Option<Self> {
        let (caching, segmentation) = match n {
            1 => (true, true),
            2 => (false, true),
            3 => (true, false),
            4 => (false, false),
            _ => return None,
        };
        Some(Self {
            caching_replacement_enabled: caching,
            segmentation_enabled: segmentation,
        })
    }

    pub fn config_number(&self) -> u8 {
        match (self.caching_replacement_enabled, self.segmentation_enabled) {
            (true, true) => 1,
            (false, true) => 2,
            (true, false) => 3,
            (false, false) => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub grid: GridConfig,
    pub popularity: PopularityConfig,
    pub channel: ChannelConfig,
    pub compute: ComputeConfig,
    /// `M_L`, in tiles.
    pub local_cache_tiles: usize,
    /// `M_E`, in tiles.
    pub mec_cache_tiles: usize,
    /// Size ratio of a rendered 3D tile to its 2D source.
    pub output_ratio: f64,
    pub weights: CostWeights,
    pub flags: AblationFlags,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            popularity: PopularityConfig::default(),
            channel: ChannelConfig::default(),
            compute: ComputeConfig::default(),
            local_cache_tiles: 3,
            mec_cache_tiles: 8,
            output_ratio: 3.0,
            weights: CostWeights::default(),
            flags: AblationFlags::default(),
        }
    }
}

impl EnvConfig {
    /// Validates every field and returns the grid it describes.
    pub fn validate(&self) -> Result<TileGrid, CoreError> {
        let grid = TileGrid::from_config(&self.grid)?;
        MarkovZipfProcess::from_config(&self.popularity, grid.viewpoint_count())?;
        if self.popularity.window_slots == 0 {
            return Err(CoreError::InvalidConfig(
                "popularity.window_slots must be at least 1".into(),
            ));
        }
        self.channel.validate()?;
        self.compute.validate()?;
        self.weights.validate()?;
        let n = grid.tile_count();
        if self.local_cache_tiles == 0 || self.mec_cache_tiles == 0 {
            return Err(CoreError::InvalidConfig("cache capacities must be at least 1 tile".into()));
        }
        if self.mec_cache_tiles > n {
            return Err(CoreError::InvalidConfig(format!(
                "mec_cache_tiles {} exceeds the {n} tiles of the video",
                self.mec_cache_tiles
            )));
        }
        if self.local_cache_tiles > self.mec_cache_tiles {
            return Err(CoreError::InvalidConfig(format!(
                "local_cache_tiles {} exceeds mec_cache_tiles {}",
                self.local_cache_tiles, self.mec_cache_tiles
            )));
        }
        if !(self.output_ratio > 0.0 && self.output_ratio.is_finite()) {
            return Err(CoreError::InvalidConfig("output_ratio must be positive".into()));
        }
        Ok(grid)
    }
}

/// What the policy observes at the start of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub local_cache_vec: Vec<f64>,
    pub mec_cache_vec: Vec<f64>,
    /// Forecast of next slot's viewpoint pmf.
    pub predicted_popularity: Vec<f64>,
    pub channel_gain: f64,
    /// Request window, oldest first, ending with the current request.
    pub recent_requests: Vec<usize>,
    /// Viewpoint requested in the current slot.
    pub request: usize,
}

/// Source of the popularity forecast placed in the state.
pub trait Forecaster {
    /// Maps a full request window (oldest first) to a pmf over viewpoints.
    fn forecast(&mut self, window: &[usize]) -> Vec<f64>;
}

/// Always predicts the uniform pmf.
#[derive(Debug, Clone)]
pub struct UniformForecaster {
    viewpoints: usize,
}

impl UniformForecaster {
    pub fn new(viewpoints: usize) -> Self {
        Self { viewpoints }
    }
}

impl Forecaster for UniformForecaster {
    fn forecast(&mut self, _window: &[usize]) -> Vec<f64> {
        vec![1.0 / self.viewpoints as f64; self.viewpoints]
    }
}

/// Empirical request frequencies over the window.
#[derive(Debug, Clone)]
pub struct FrequencyForecaster {
    viewpoints: usize,
}

impl FrequencyForecaster {
    pub fn new(viewpoints: usize) -> Self {
        Self { viewpoints }
    }
}

impl Forecaster for FrequencyForecaster {
    fn forecast(&mut self, window: &[usize]) -> Vec<f64> {
        let mut p = vec![0.0; self.viewpoints];
        if window.is_empty() {
            return vec![1.0 / self.viewpoints as f64; self.viewpoints];
        }
        for &k in window {
            p[k - 1] += 1.0;
        }
        let n = window.len() as f64;
        p.iter_mut().for_each(|x| *x /= n);
        p
    }
}

struct Live {
    rng: ChaCha8Rng,
    local: CacheState,
    mec: CacheState,
    recorder: RequestRecorder,
    request: usize,
    fov: TileSet,
    gain: f64,
    forecast: Vec<f64>,
}

pub struct Environment {
    config: EnvConfig,
    grid: TileGrid,
    chain: MarkovZipfProcess,
    forecaster: Box<dyn Forecaster + Send>,
    live: Option<Live>,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("config", &self.config)
            .field("initialized", &self.live.is_some())
            .finish()
    }
}

impl Environment {
    /// Environment with a uniform forecaster.
    pub fn new(config: EnvConfig) -> Result<Self, CoreError> {
        let grid = config.validate()?;
        let k = grid.viewpoint_count();
        Self::with_forecaster(config, Box::new(UniformForecaster::new(k)))
    }

    pub fn with_forecaster(
        config: EnvConfig,
        forecaster: Box<dyn Forecaster + Send>,
    ) -> Result<Self, CoreError> {
        let grid = config.validate()?;
        let chain = MarkovZipfProcess::from_config(&config.popularity, grid.viewpoint_count())?;
        Ok(Self {
            config,
            grid,
            chain,
            forecaster,
            live: None,
        })
    }

    pub fn set_forecaster(&mut self, forecaster: Box<dyn Forecaster + Send>) {
        self.forecaster = forecaster;
        if let Some(live) = self.live.as_mut() {
            live.forecast = self.forecaster.forecast(&live.recorder.to_vec());
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    pub fn flags(&self) -> AblationFlags {
        self.config.flags
    }

    /// Starts a new episode.
    pub fn reset(&mut self, seed: u64) -> SystemState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.grid.tile_count();
        // Capacities were validated against N, so these fills cannot fail.
        let local = CacheState::random(n, self.config.local_cache_tiles, &mut rng).unwrap();
        let mec = CacheState::random(n, self.config.mec_cache_tiles, &mut rng).unwrap();
        let state = rng.random_range(0..self.chain.state_count());
        self.chain.set_state(state);
        let mut recorder = RequestRecorder::new(self.config.popularity.window_slots);
        let mut request = 0;
        for i in 0..recorder.capacity() {
            if i > 0 {
                self.chain.advance(&mut rng);
            }
            request = self.chain.sample_request(&mut rng);
            recorder.record(request);
        }
        let gain = draw_channel(&self.config.channel, &mut rng);
        let forecast = self.forecaster.forecast(&recorder.to_vec());
        let fov = self.grid.fov_tiles(request).unwrap();
        self.live = Some(Live {
            rng,
            local,
            mec,
            recorder,
            request,
            fov,
            gain,
            forecast,
        });
        self.state().unwrap()
    }

    fn live(&self) -> Result<&Live, EnvError> {
        self.live.as_ref().ok_or(EnvError::Uninitialized)
    }

    pub fn state(&self) -> Result<SystemState, EnvError> {
        let live = self.live()?;
        Ok(SystemState {
            local_cache_vec: self.grid.indicator(live.local.tiles()),
            mec_cache_vec: self.grid.indicator(live.mec.tiles()),
            predicted_popularity: live.forecast.clone(),
            channel_gain: live.gain,
            recent_requests: live.recorder.to_vec(),
            request: live.request,
        })
    }

    pub fn local_cache(&self) -> Result<&CacheState, EnvError> {
        Ok(&self.live()?.local)
    }

    pub fn mec_cache(&self) -> Result<&CacheState, EnvError> {
        Ok(&self.live()?.mec)
    }

    /// Tiles of the currently requested FoV.
    pub fn current_fov(&self) -> Result<&TileSet, EnvError> {
        Ok(&self.live()?.fov)
    }

    /// Current state of the hidden popularity chain.
    pub fn chain_state(&self) -> usize {
        self.chain.current_state()
    }

    /// Checks `action` against the current slot without changing anything.
    pub fn validate(&self, action: &HybridAction) -> Result<(), EnvError> {
        let live = self.live()?;
        let flags = self.config.flags;
        validate_action(
            &live.local,
            &live.mec,
            &live.fov,
            action,
            flags.caching_replacement_enabled,
            flags.segmentation_enabled,
        )?;
        Ok(())
    }

    /// Cost of `action` in the current slot, without changing anything.
    pub fn evaluate(&self, action: &HybridAction) -> Result<SlotOutcome, EnvError> {
        let live = self.live()?;
        self.validate(action)?;
        Ok(self.outcome(live, action))
    }

    fn outcome(&self, live: &Live, action: &HybridAction) -> SlotOutcome {
        outcome_for(
            &self.config,
            &live.local,
            &live.mec,
            &live.fov,
            live.gain,
            self.grid.tile_bits() as f64,
            action,
        )
    }

    /// Everything needed to evaluate the current slot in isolation.
    pub fn snapshot(&self) -> Result<SlotSnapshot, EnvError> {
        let live = self.live()?;
        Ok(SlotSnapshot {
            grid: self.config.grid.clone(),
            channel: self.config.channel.clone(),
            compute: self.config.compute.clone(),
            weights: self.config.weights.clone(),
            flags: self.config.flags,
            output_ratio: self.config.output_ratio,
            local_cache: live.local.tiles().as_slice().to_vec(),
            mec_cache: live.mec.tiles().as_slice().to_vec(),
            request: live.request,
            channel_gain: live.gain,
        })
    }

    /// Executes one slot.
    pub fn step(&mut self, action: &HybridAction) -> Result<(SlotOutcome, SystemState), EnvError> {
        let flags = self.config.flags;
        let live = self.live()?;
        let (local, mec) = apply_caching(
            &live.local,
            &live.mec,
            &live.fov,
            action,
            flags.caching_replacement_enabled,
            flags.segmentation_enabled,
        )?;
        let outcome = self.outcome(live, action);
        check_outcome(&outcome);

        let live = self.live.as_mut().unwrap();
        live.local = local;
        live.mec = mec;
        self.chain.advance(&mut live.rng);
        live.request = self.chain.sample_request(&mut live.rng);
        live.recorder.record(live.request);
        live.fov = self.grid.fov_tiles(live.request)?;
        live.gain = draw_channel(&self.config.channel, &mut live.rng);
        live.forecast = self.forecaster.forecast(&live.recorder.to_vec());
        Ok((outcome, self.state()?))
    }
}

fn outcome_for(
    config: &EnvConfig,
    local: &CacheState,
    mec: &CacheState,
    fov: &TileSet,
    gain: f64,
    tile_bits: f64,
    action: &HybridAction,
) -> SlotOutcome {
    // Widths were validated by the caller.
    let sizes = transfer_sizes(local, mec, fov, &action.offload, tile_bits, config.output_ratio)
        .expect("offload width validated");
    let rate = downlink_rate(gain, &config.channel);
    slot_cost(
        &sizes,
        rate,
        &config.compute,
        &config.channel,
        &action.offload,
        tile_bits,
        &config.weights,
    )
}

fn check_outcome(o: &SlotOutcome) {
    assert_eq!(o.t_total, o.t_mec.max(o.t_local));
    assert_eq!(o.d_2d_down, o.d_mec_down + o.d_cloud_down);
    assert_eq!(o.reward, -o.cost);
    assert!(o.values().iter().take(13).all(|v| *v >= 0.0 && v.is_finite()));
}

/// Evaluates `action` on a snapshot with the environment's own cost code.
pub fn evaluate_snapshot(
    snapshot: &SlotSnapshot,
    action: &HybridAction,
) -> Result<SlotOutcome, EnvError> {
    let grid = TileGrid::from_config(&snapshot.grid)?;
    let local = CacheState::new(
        TileSet::from_unsorted(snapshot.local_cache.clone()),
        snapshot.local_cache.len(),
    )?;
    let mec = CacheState::new(
        TileSet::from_unsorted(snapshot.mec_cache.clone()),
        snapshot.mec_cache.len(),
    )?;
    let fov = grid.fov_tiles(snapshot.request)?;
    validate_action(
        &local,
        &mec,
        &fov,
        action,
        snapshot.flags.caching_replacement_enabled,
        snapshot.flags.segmentation_enabled,
    )?;
    let config = EnvConfig {
        grid: snapshot.grid.clone(),
        channel: snapshot.channel.clone(),
        compute: snapshot.compute.clone(),
        weights: snapshot.weights.clone(),
        output_ratio: snapshot.output_ratio,
        flags: snapshot.flags,
        local_cache_tiles: local.capacity(),
        mec_cache_tiles: mec.capacity(),
        popularity: PopularityConfig {
            gamma_space: vec![],
            transition: vec![],
            window_slots: 1,
        },
    };
    Ok(outcome_for(
        &config,
        &local,
        &mec,
        &fov,
        snapshot.channel_gain,
        grid.tile_bits() as f64,
        action,
    ))
}
