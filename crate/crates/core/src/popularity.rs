//! Viewpoint popularity: Zipf distributions whose exponent follows a hidden
//! Markov chain, plus the fixed-length request recorder that feeds the
//! forecaster.

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Seed used to draw the default transition matrix.
pub const DEFAULT_TRANSITION_SEED: u64 = 0x5EED_2021;

/// Zipf exponents visited by the default chain.
pub const DEFAULT_GAMMA_SPACE: [f64; 4] = [0.7, 1.0, 1.5, 2.5];

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopularityConfig {
    pub gamma_space: Vec<f64>,
    /// Row-stochastic: `transition[i][j]` is the probability of moving from
    /// exponent `i` to exponent `j`.
    pub transition: Vec<Vec<f64>>,
    pub window_slots: usize,
}

impl Default for PopularityConfig {
    fn default() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_TRANSITION_SEED);
        Self {
            gamma_space: DEFAULT_GAMMA_SPACE.to_vec(),
            transition: random_transition(DEFAULT_GAMMA_SPACE.len(), &mut rng),
            window_slots: 20,
        }
    }
}

/// Viewpoint request distribution for one exponent.
#[derive(Debug, Clone)]
pub struct ZipfPmf {
    gamma: f64,
    probabilities: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl ZipfPmf {
    pub fn new(gamma: f64, k: usize) -> Result<Self, CoreError> {
        if k == 0 {
            return Err(CoreError::InvalidPopularity("K must be at least 1".into()));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(CoreError::InvalidPopularity(format!(
                "Zipf exponent must be finite and non-negative, got {gamma}"
            )));
        }
        let weights: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-gamma)).collect();
        let norm: f64 = weights.iter().sum();
        let probabilities: Vec<f64> = weights.iter().map(|w| w / norm).collect();
        Self::from_parts(gamma, probabilities)
    }

    /// Arbitrary pmf over viewpoints `1..=len`; used for degenerate cases.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self, CoreError> {
        let total: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidPopularity(
                "probabilities must be non-negative and sum to 1".into(),
            ));
        }
        Self::from_parts(f64::NAN, probabilities)
    }

    fn from_parts(gamma: f64, probabilities: Vec<f64>) -> Result<Self, CoreError> {
        let sampler = WeightedIndex::new(&probabilities)
            .map_err(|e| CoreError::InvalidPopularity(e.to_string()))?;
        Ok(Self {
            gamma,
            probabilities,
            sampler,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Draws a 1-based viewpoint index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng) + 1
    }
}

/// `p_k = k^-γ / Σ_l l^-γ` for `k = 1..=K`.
pub fn zipf_pmf(gamma: f64, k: usize) -> Result<ZipfPmf, CoreError> {
    ZipfPmf::new(gamma, k)
}

/// A strictly positive random row-stochastic matrix.
pub fn random_transition<R: Rng + ?Sized>(states: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..states)
        .map(|_| {
            let raw: Vec<f64> = (0..states).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// Zipf exponent modulated by a hidden finite-state Markov chain.
#[derive(Debug, Clone)]
pub struct MarkovZipfProcess {
    gamma_space: Vec<f64>,
    transition: Vec<Vec<f64>>,
    rows: Vec<WeightedIndex<f64>>,
    pmfs: Vec<ZipfPmf>,
    current: usize,
}

impl MarkovZipfProcess {
    pub fn new(
        gamma_space: Vec<f64>,
        transition: Vec<Vec<f64>>,
        viewpoints: usize,
    ) -> Result<Self, CoreError> {
        let n = gamma_space.len();
        if n == 0 {
            return Err(CoreError::InvalidPopularity("empty exponent space".into()));
        }
        if transition.len() != n || transition.iter().any(|row| row.len() != n) {
            return Err(CoreError::InvalidPopularity(format!(
                "transition matrix must be {n}x{n}"
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(CoreError::InvalidPopularity(format!(
                    "transition row {i} is not a probability vector (sum {total})"
                )));
            }
        }
        let rows = transition
            .iter()
            .map(|row| {
                WeightedIndex::new(row).map_err(|e| CoreError::InvalidPopularity(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pmfs = gamma_space
            .iter()
            .map(|&g| ZipfPmf::new(g, viewpoints))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            gamma_space,
            transition,
            rows,
            pmfs,
            current: 0,
        })
    }

    pub fn from_config(cfg: &PopularityConfig, viewpoints: usize) -> Result<Self, CoreError> {
        Self::new(cfg.gamma_space.clone(), cfg.transition.clone(), viewpoints)
    }

    pub fn state_count(&self) -> usize {
        self.gamma_space.len()
    }

    pub fn current_state(&self) -> usize {
        self.current
    }

    pub fn set_state(&mut self, state: usize) {
        assert!(state < self.state_count(), "chain state out of range");
        self.current = state;
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_space[self.current]
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn current_pmf(&self) -> &ZipfPmf {
        &self.pmfs[self.current]
    }

    /// Moves the chain one step and returns the new exponent.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        self.current = self.rows[self.current].sample(rng);
        self.gamma()
    }

    /// Draws a viewpoint from the current exponent's distribution.
    pub fn sample_request<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.current_pmf().sample(rng)
    }

    /// Simulates `len` slots, returning each slot's request together with the
    /// pmf it was drawn from. The chain advances before every slot but the
    /// first.
    pub fn trace<R: Rng + ?Sized>(&mut self, len: usize, rng: &mut R) -> Vec<(usize, Vec<f64>)> {
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            if i > 0 {
                self.advance(rng);
            }
            let k = self.sample_request(rng);
            out.push((k, self.current_pmf().probabilities().to_vec()));
        }
        out
    }
}

/// FIFO of the last `capacity` requested viewpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecorder {
    capacity: usize,
    window: VecDeque<usize>,
}

impl RequestRecorder {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "recorder capacity must be positive");
        Self {
            capacity,
            window: VecDeque::with_capacity(capacity),
        }
    }

    pub fn record(&mut self, k: usize) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(k);
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.capacity
    }

    /// Oldest first.
    pub fn to_vec(&self) -> Vec<usize> {
        self.window.iter().copied().collect()
    }
}
