use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use crate::activation::sigmoid;
use crate::{check_cols, uniform_init, Matrix, NnError, Params};

/// Single LSTM layer. Gate blocks are stacked in the order input, forget,
/// candidate, output along the rows of `weight`, which acts on `[x, h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `4H × (in + H)`.
    pub weight: Matrix,
    /// `1 × 4H`.
    pub bias: Matrix,
    inputs: usize,
    hidden: usize,
}

/// Carried `(h, c)` for stepping one sequence at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Matrix,
    pub cell: Matrix,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            hidden: Array2::zeros((batch, hidden)),
            cell: Array2::zeros((batch, hidden)),
        }
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    xh: Matrix,
    i: Matrix,
    f: Matrix,
    g: Matrix,
    o: Matrix,
    c_prev: Matrix,
    c: Matrix,
    tanh_c: Matrix,
}

#[derive(Debug, Clone)]
pub struct LstmTape {
    steps: Vec<StepCache>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = inputs + hidden;
        Self {
            weight: uniform_init(4 * hidden, fan_in, fan_in, rng),
            bias: uniform_init(1, 4 * hidden, fan_in, rng),
            inputs,
            hidden,
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            weight: Array2::zeros((4 * hidden, inputs + hidden)),
            bias: Array2::zeros((1, 4 * hidden)),
            inputs,
            hidden,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn cell(&self, x: &Matrix, state: &LstmState) -> Result<StepCache, NnError> {
        check_cols("lstm input", x, self.inputs)?;
        if state.hidden.nrows() != x.nrows() {
            return Err(NnError::Shape {
                what: "lstm state batch",
                expected: vec![x.nrows(), self.hidden],
                actual: vec![state.hidden.nrows(), state.hidden.ncols()],
            });
        }
        let h = self.hidden;
        let xh = concatenate![Axis(1), x.view(), state.hidden.view()];
        let mut a = xh.dot(&self.weight.t());
        a += &self.bias;
        let i = a.slice(s![.., 0..h]).mapv(sigmoid);
        let f = a.slice(s![.., h..2 * h]).mapv(sigmoid);
        let g = a.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
        let o = a.slice(s![.., 3 * h..]).mapv(sigmoid);
        let c = &f * &state.cell + &i * &g;
        Ok(StepCache {
            xh,
            tanh_c: c.mapv(f64::tanh),
            i,
            f,
            g,
            o,
            c_prev: state.cell.clone(),
            c,
        })
    }

    /// Advances `state` by one step and returns the new hidden output.
    pub fn step(&self, x: &Matrix, state: &mut LstmState) -> Result<Matrix, NnError> {
        let cache = self.cell(x, state)?;
        state.hidden = &cache.o * &cache.tanh_c;
        state.cell = cache.c;
        Ok(state.hidden.clone())
    }

    /// Runs a sequence from a zero state; returns every hidden output.
    pub fn predict(&self, xs: &[Matrix]) -> Result<Vec<Matrix>, NnError> {
        let batch = xs.first().map_or(0, |x| x.nrows());
        let mut state = LstmState::zeros(batch, self.hidden);
        xs.iter().map(|x| self.step(x, &mut state)).collect()
    }

    pub fn forward(&self, xs: &[Matrix]) -> Result<(Vec<Matrix>, LstmTape), NnError> {
        let batch = xs.first().map_or(0, |x| x.nrows());
        let mut state = LstmState::zeros(batch, self.hidden);
        let mut hs = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let cache = self.cell(x, &state)?;
            state.hidden = &cache.o * &cache.tanh_c;
            state.cell = cache.c.clone();
            hs.push(state.hidden.clone());
            steps.push(cache);
        }
        Ok((hs, LstmTape { steps }))
    }

    /// Backpropagation through time. `dhs[t]` is the gradient reaching the
    /// hidden output at step `t` from outside the recurrence.
    pub fn backward(&self, tape: &LstmTape, dhs: &[Matrix]) -> Result<(Vec<Matrix>, Vec<Matrix>), NnError> {
        if dhs.len() != tape.steps.len() {
            return Err(NnError::Shape {
                what: "lstm upstream gradients",
                expected: vec![tape.steps.len()],
                actual: vec![dhs.len()],
            });
        }
        let h = self.hidden;
        let batch = tape.steps.first().map_or(0, |s| s.i.nrows());
        let mut dw = Array2::zeros(self.weight.dim());
        let mut db = Array2::zeros(self.bias.dim());
        let mut dh_next = Array2::zeros((batch, h));
        let mut dc_next = Array2::zeros((batch, h));
        let mut dxs = vec![Array2::zeros((0, 0)); dhs.len()];
        for (t, st) in tape.steps.iter().enumerate().rev() {
            let dh = &dhs[t] + &dh_next;
            let d_o = &dh * &st.tanh_c;
            let dc = &dh * &st.o * &st.tanh_c.mapv(|v| 1.0 - v * v) + &dc_next;
            let d_i = &dc * &st.g;
            let d_g = &dc * &st.i;
            let d_f = &dc * &st.c_prev;
            dc_next = &dc * &st.f;
            let da = concatenate![
                Axis(1),
                (&d_i * &st.i.mapv(|v| v * (1.0 - v))).view(),
                (&d_f * &st.f.mapv(|v| v * (1.0 - v))).view(),
                (&d_g * &st.g.mapv(|v| 1.0 - v * v)).view(),
                (&d_o * &st.o.mapv(|v| v * (1.0 - v))).view()
            ];
            dw += &da.t().dot(&st.xh);
            db += &da.sum_axis(Axis(0)).insert_axis(Axis(0));
            let dxh = da.dot(&self.weight);
            dxs[t] = dxh.slice(s![.., ..self.inputs]).to_owned();
            dh_next = dxh.slice(s![.., self.inputs..]).to_owned();
        }
        Ok((dxs, vec![dw, db]))
    }
}

impl Params for Lstm {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }
}
