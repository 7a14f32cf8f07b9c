use ndarray::{Array2, Axis};
use rand::Rng;

use crate::activation::Activation;
use crate::{check_cols, uniform_init, Matrix, NnError, Params};

/// `y = act(x·Wᵀ + b)` over a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub weight: Matrix,
    /// `1 × out`.
    pub bias: Matrix,
    pub activation: Activation,
}

/// Values cached by [`Dense::forward`].
#[derive(Debug, Clone)]
pub struct DenseTape {
    input: Matrix,
    output: Matrix,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            weight: uniform_init(outputs, inputs, inputs, rng),
            bias: uniform_init(1, outputs, inputs, rng),
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array2::zeros((1, outputs)),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix, NnError> {
        check_cols("dense input", x, self.inputs())?;
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        self.activation.apply(&mut z);
        Ok(z)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseTape), NnError> {
        let y = self.predict(x)?;
        Ok((
            y.clone(),
            DenseTape {
                input: x.clone(),
                output: y,
            },
        ))
    }

    /// Returns the input gradient and the parameter gradients.
    pub fn backward(&self, tape: &DenseTape, dy: &Matrix) -> Result<(Matrix, DenseGrads), NnError> {
        if dy.dim() != tape.output.dim() {
            return Err(NnError::Shape {
                what: "dense upstream gradient",
                expected: vec![tape.output.nrows(), tape.output.ncols()],
                actual: vec![dy.nrows(), dy.ncols()],
            });
        }
        let dz = self.activation.backward(&tape.output, dy);
        let weight = dz.t().dot(&tape.input);
        let bias = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dx = dz.dot(&self.weight);
        Ok((dx, DenseGrads { weight, bias }))
    }
}

impl Params for Dense {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }
}
