use rand::{Rng, RngCore};

use crate::activation::Activation;
use crate::dense::{Dense, DenseTape};
use crate::dropout::dropout;
use crate::{Matrix, NnError, Params};

/// Stack of dense layers, with optional dropout after every hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct MlpTape {
    layers: Vec<DenseTape>,
    masks: Vec<Option<Matrix>>,
}

impl Mlp {
    /// `sizes` lists the input width, every hidden width, and the output width.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect();
        Self { layers, dropout: 0.0 }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    /// Inference pass (dropout off).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix, NnError> {
        let mut h = self.layers[0].predict(x)?;
        for layer in &self.layers[1..] {
            h = layer.predict(&h)?;
        }
        Ok(h)
    }

    /// Training pass. Dropout is applied only when `rng` is given.
    pub fn forward(&self, x: &Matrix, mut rng: Option<&mut dyn RngCore>) -> Result<(Matrix, MlpTape), NnError> {
        let mut tape = MlpTape {
            layers: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, t) = layer.forward(&h)?;
            tape.layers.push(t);
            h = y;
            let mask = match rng.as_deref_mut() {
                Some(r) if i < last && self.dropout > 0.0 => {
                    let (y, m) = dropout(&h, self.dropout, r)?;
                    h = y;
                    Some(m)
                }
                _ => None,
            };
            tape.masks.push(mask);
        }
        Ok((h, tape))
    }

    /// Input gradient and parameter gradients (weight, bias per layer).
    pub fn backward(&self, tape: &MlpTape, dy: &Matrix) -> Result<(Matrix, Vec<Matrix>), NnError> {
        let mut grads = Vec::with_capacity(2 * self.layers.len());
        let mut d = dy.clone();
        for ((layer, t), mask) in self.layers.iter().zip(&tape.layers).zip(&tape.masks).rev() {
            if let Some(m) = mask {
                d *= m;
            }
            let (dx, g) = layer.backward(t, &d)?;
            grads.push(g.bias);
            grads.push(g.weight);
            d = dx;
        }
        grads.reverse();
        Ok((d, grads))
    }
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_without_rng_equals_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 8, 8, 2], Activation::Relu, Activation::Sigmoid, &mut rng).with_dropout(0.5);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - j as f64) * 0.2);
        let (y, _) = net.forward(&x, None).unwrap();
        assert_eq!(y, net.predict(&x).unwrap());
        assert_eq!(net.parameter_count(), 3 * 8 + 8 + 8 * 8 + 8 + 8 * 2 + 2);
    }

    #[test]
    fn gradient_order_matches_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Linear, &mut rng);
        let x = Array2::ones((2, 3));
        let (y, tape) = net.forward(&x, None).unwrap();
        let (dx, grads) = net.backward(&tape, &Array2::ones(y.dim())).unwrap();
        assert_eq!(dx.dim(), (2, 3));
        let shapes: Vec<_> = grads.iter().map(|g| g.dim()).collect();
        assert_eq!(shapes, net.shapes());
    }
}
