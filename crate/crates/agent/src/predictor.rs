//! Popularity forecaster: two LSTM layers and a softmax head mapping the
//! window of recent viewpoint requests to next slot's viewpoint pmf.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vrmec_core::environment::Forecaster;
use vrmec_core::TileGrid;
use vrmec_nn::dropout::dropout;
use vrmec_nn::loss::mse;
use vrmec_nn::{Activation, Adam, Dense, Lstm, Matrix, Params};

use crate::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    /// Number of minibatch updates in pre-training.
    pub iterations: usize,
    /// Length of the simulated request trace used for pre-training.
    pub trace_slots: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-3,
            dropout: 0.35,
            batch_size: 32,
            iterations: 1750,
            trace_slots: 4000,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(AgentError::Config("predictor hidden width and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(AgentError::Config("predictor learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AgentError::Config("predictor dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One training pair: a request window and the pmf of the slot after it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSample {
    pub window: Vec<usize>,
    pub label: Vec<f64>,
}

/// Tile-membership indicator of viewpoint `k`'s FoV.
pub fn encode_request(grid: &TileGrid, k: usize) -> Result<Vec<f64>, AgentError> {
    Ok(grid.indicator(&grid.fov_tiles(k)?))
}

/// Sliding windows over a `(request, pmf)` trace: window `i` covers
/// requests `i..i+window` and is labelled with the pmf of slot `i+window`.
pub fn build_dataset(trace: &[(usize, Vec<f64>)], window: usize) -> Result<Vec<PredictorSample>, AgentError> {
    if window == 0 || trace.len() <= window {
        return Err(AgentError::Data(format!(
            "trace of {} slots is too short for a window of {window}",
            trace.len()
        )));
    }
    Ok((0..trace.len() - window)
        .map(|i| PredictorSample {
            window: trace[i..i + window].iter().map(|(k, _)| *k).collect(),
            label: trace[i + window].1.clone(),
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct LstmPredictor {
    grid: TileGrid,
    window: usize,
    dropout: f64,
    lower: Lstm,
    upper: Lstm,
    head: Dense,
    /// Rows are the FoV encodings of viewpoints 1..=K.
    encodings: Matrix,
}

impl LstmPredictor {
    pub fn new(grid: &TileGrid, window: usize, cfg: &PredictorConfig, rng: &mut dyn RngCore) -> Result<Self, AgentError> {
        cfg.validate()?;
        if window == 0 {
            return Err(AgentError::Config("window must be at least 1".into()));
        }
        let n = grid.tile_count();
        let k = grid.viewpoint_count();
        let mut encodings = Array2::zeros((k, n));
        for v in 1..=k {
            for (j, x) in encode_request(grid, v)?.into_iter().enumerate() {
                encodings[[v - 1, j]] = x;
            }
        }
        Ok(Self {
            grid: grid.clone(),
            window,
            dropout: cfg.dropout,
            lower: Lstm::new(n, cfg.hidden, rng),
            upper: Lstm::new(cfg.hidden, cfg.hidden, rng),
            head: Dense::new(cfg.hidden, k, Activation::Softmax, rng),
            encodings,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn viewpoints(&self) -> usize {
        self.grid.viewpoint_count()
    }

    /// Time-major batch of encodings: element `t` is `batch × N`.
    fn encode_batch(&self, windows: &[&[usize]]) -> Result<Vec<Matrix>, AgentError> {
        let k = self.viewpoints();
        for w in windows {
            if w.len() != self.window {
                return Err(AgentError::Data(format!(
                    "request window has {} entries, expected {}",
                    w.len(),
                    self.window
                )));
            }
            if let Some(&bad) = w.iter().find(|&&v| v == 0 || v > k) {
                return Err(AgentError::Data(format!("viewpoint {bad} outside 1..={k}")));
            }
        }
        Ok((0..self.window)
            .map(|t| {
                let rows: Vec<usize> = windows.iter().map(|w| w[t] - 1).collect();
                self.encodings.select(Axis(0), &rows)
            })
            .collect())
    }

    /// Forecast pmf for the slot after `window`.
    pub fn predict(&self, window: &[usize]) -> Result<Vec<f64>, AgentError> {
        Ok(self.predict_batch(&[window])?.row(0).to_vec())
    }

    pub fn predict_batch(&self, windows: &[&[usize]]) -> Result<Matrix, AgentError> {
        let xs = self.encode_batch(windows)?;
        let h1 = self.lower.predict(&xs)?;
        let h2 = self.upper.predict(&h1)?;
        Ok(self.head.predict(h2.last().unwrap())?)
    }

    /// Mean squared error of the forecasts over a dataset.
    pub fn evaluate(&self, data: &[PredictorSample]) -> Result<f64, AgentError> {
        let mut total = 0.0;
        for chunk in data.chunks(256) {
            let windows: Vec<&[usize]> = chunk.iter().map(|s| s.window.as_slice()).collect();
            let pred = self.predict_batch(&windows)?;
            let refs: Vec<&PredictorSample> = chunk.iter().collect();
            total += mse(&pred, &labels(&refs))?.0 * chunk.len() as f64;
        }
        Ok(total / data.len() as f64)
    }

    /// One Adam step on a minibatch; returns the pre-step loss.
    fn train_batch(&mut self, batch: &[&PredictorSample], adam: &mut Adam, rng: &mut dyn RngCore) -> Result<f64, AgentError> {
        let windows: Vec<&[usize]> = batch.iter().map(|s| s.window.as_slice()).collect();
        let xs = self.encode_batch(&windows)?;
        let (h1, t1) = self.lower.forward(&xs)?;
        let mut masks1 = Vec::with_capacity(h1.len());
        let mut h1d = Vec::with_capacity(h1.len());
        for h in &h1 {
            let (y, m) = dropout(h, self.dropout, rng)?;
            h1d.push(y);
            masks1.push(m);
        }
        let (h2, t2) = self.upper.forward(&h1d)?;
        let (last, mask2) = dropout(h2.last().unwrap(), self.dropout, rng)?;
        let (y, th) = self.head.forward(&last)?;
        let (loss, dy) = mse(&y, &labels(batch))?;

        let (dlast, gh) = self.head.backward(&th, &dy)?;
        let mut dh2 = vec![Array2::zeros(dlast.dim()); h2.len()];
        *dh2.last_mut().unwrap() = dlast * &mask2;
        let (dh1d, g2) = self.upper.backward(&t2, &dh2)?;
        let dh1: Vec<Matrix> = dh1d.into_iter().zip(&masks1).map(|(d, m)| d * m).collect();
        let (_, g1) = self.lower.backward(&t1, &dh1)?;

        let mut grads = g1;
        grads.extend(g2);
        grads.push(gh.weight);
        grads.push(gh.bias);
        adam.step(self, &grads)?;
        Ok(loss)
    }

    /// Pre-trains on `data` with shuffled minibatches. Returns the mean
    /// training loss of every pass over the data (the last pass may be
    /// partial).
    pub fn train(&mut self, data: &[PredictorSample], cfg: &PredictorConfig, seed: u64) -> Result<Vec<f64>, AgentError> {
        if data.is_empty() {
            return Err(AgentError::Data("empty predictor dataset".into()));
        }
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adam = Adam::new(cfg.learning_rate);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut curve = Vec::new();
        let mut done = 0;
        while done < cfg.iterations {
            order.shuffle(&mut rng);
            let mut sum = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(cfg.batch_size) {
                if done == cfg.iterations {
                    break;
                }
                let batch: Vec<&PredictorSample> = chunk.iter().map(|&i| &data[i]).collect();
                sum += self.train_batch(&batch, &mut adam, &mut rng)?;
                batches += 1;
                done += 1;
            }
            curve.push(sum / batches as f64);
        }
        Ok(curve)
    }
}

fn labels(samples: &[&PredictorSample]) -> Matrix {
    let k = samples[0].label.len();
    Array2::from_shape_fn((samples.len(), k), |(i, j)| samples[i].label[j])
}

impl Params for LstmPredictor {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.lower.tensors();
        v.extend(self.upper.tensors());
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.lower.tensors_mut();
        v.extend(self.upper.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}

impl Forecaster for LstmPredictor {
    fn forecast(&mut self, window: &[usize]) -> Vec<f64> {
        // The environment always hands over a full window of valid ids.
        self.predict(window).expect("well-formed request window")
    }
}

/// Mean squared error of the uniform forecast.
pub fn uniform_mse(data: &[PredictorSample]) -> f64 {
    let k = data[0].label.len() as f64;
    data.iter()
        .map(|s| s.label.iter().map(|p| (p - 1.0 / k).powi(2)).sum::<f64>() / k)
        .sum::<f64>()
        / data.len() as f64
}

/// Mean squared error of the empirical request frequencies in each window.
pub fn frequency_mse(data: &[PredictorSample]) -> f64 {
    let k = data[0].label.len();
    data.iter()
        .map(|s| {
            let mut freq = vec![0.0; k];
            for &v in &s.window {
                freq[v - 1] += 1.0 / s.window.len() as f64;
            }
            freq.iter().zip(&s.label).map(|(f, p)| (f - p).powi(2)).sum::<f64>() / k as f64
        })
        .sum::<f64>()
        / data.len() as f64
}
