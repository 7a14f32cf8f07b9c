//! Minimal differentiable building blocks.
//!
//! There is no general autograd graph: each layer caches what its backward
//! pass needs in an explicit tape returned from `forward`, and gradients are
//! returned as plain matrices in the same order as [`Params::tensors`].

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod mlp;

use ndarray::Array2;
use thiserror::Error;

pub use activation::Activation;
pub use adam::Adam;
pub use dense::Dense;
pub use lstm::Lstm;
pub use mlp::Mlp;

/// Row-major batch of vectors: one sample per row.
pub type Matrix = Array2<f64>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected:?}, got {actual:?}")]
    Shape {
        what: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything holding trainable matrices.
pub trait Params {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Shapes of all tensors, in order.
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| t.dim()).collect()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Overwrites every tensor with `src`, checking shapes.
    fn load(&mut self, src: &[Matrix]) -> Result<(), NnError> {
        let mut dst = self.tensors_mut();
        if dst.len() != src.len() {
            return Err(NnError::Shape {
                what: "tensor count",
                expected: vec![dst.len()],
                actual: vec![src.len()],
            });
        }
        for (d, s) in dst.iter_mut().zip(src) {
            if d.dim() != s.dim() {
                return Err(NnError::Shape {
                    what: "tensor",
                    expected: vec![d.nrows(), d.ncols()],
                    actual: vec![s.nrows(), s.ncols()],
                });
            }
            d.assign(s);
        }
        Ok(())
    }

    fn to_tensors(&self) -> Vec<Matrix> {
        self.tensors().into_iter().cloned().collect()
    }
}

/// `target ← rate·online + (1 − rate)·target`, tensor by tensor.
pub fn soft_update<P: Params + ?Sized>(target: &mut P, online: &P, rate: f64) -> Result<(), NnError> {
    let src = online.tensors();
    let mut dst = target.tensors_mut();
    if src.len() != dst.len() {
        return Err(NnError::Shape {
            what: "soft update",
            expected: vec![dst.len()],
            actual: vec![src.len()],
        });
    }
    for (d, s) in dst.iter_mut().zip(src) {
        if d.dim() != s.dim() {
            return Err(NnError::Shape {
                what: "soft update tensor",
                expected: vec![d.nrows(), d.ncols()],
                actual: vec![s.nrows(), s.ncols()],
            });
        }
        d.zip_mut_with(s, |t, &o| *t = rate * o + (1.0 - rate) * *t);
    }
    Ok(())
}

pub(crate) fn check_cols(what: &'static str, x: &Matrix, cols: usize) -> Result<(), NnError> {
    if x.ncols() != cols {
        return Err(NnError::Shape {
            what,
            expected: vec![x.nrows(), cols],
            actual: vec![x.nrows(), x.ncols()],
        });
    }
    Ok(())
}

/// Uniform initialization in `±1/√fan_in`.
pub(crate) fn uniform_init<R: rand::Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}
