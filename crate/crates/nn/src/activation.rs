use ndarray::Axis;

use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax.
    Softmax,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, z: &mut Matrix) {
        match self {
            Self::Linear => {}
            Self::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Self::Tanh => z.mapv_inplace(f64::tanh),
            Self::Sigmoid => z.mapv_inplace(sigmoid),
            Self::Softmax => {
                for mut row in z.axis_iter_mut(Axis(0)) {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
            }
        }
    }

    /// Gradient with respect to the pre-activation, given the activation
    /// output `y` and the upstream gradient `dy`.
    pub fn backward(self, y: &Matrix, dy: &Matrix) -> Matrix {
        match self {
            Self::Linear => dy.clone(),
            Self::Relu => {
                let mut dz = dy.clone();
                dz.zip_mut_with(y, |d, &v| {
                    if v <= 0.0 {
                        *d = 0.0
                    }
                });
                dz
            }
            Self::Tanh => {
                let mut dz = dy.clone();
                dz.zip_mut_with(y, |d, &v| *d *= 1.0 - v * v);
                dz
            }
            Self::Sigmoid => {
                let mut dz = dy.clone();
                dz.zip_mut_with(y, |d, &v| *d *= v * (1.0 - v));
                dz
            }
            Self::Softmax => {
                let mut dz = dy.clone();
                for (mut d, yr) in dz.axis_iter_mut(Axis(0)).zip(y.axis_iter(Axis(0))) {
                    let dot = d.dot(&yr);
                    d.zip_mut_with(&yr, |g, &p| *g = p * (*g - dot));
                }
                dz
            }
        }
    }
}
