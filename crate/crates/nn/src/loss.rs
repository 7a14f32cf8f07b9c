use crate::{Matrix, NnError};

/// Mean squared error over all entries, and its gradient.
pub fn mse(prediction: &Matrix, target: &Matrix) -> Result<(f64, Matrix), NnError> {
    if prediction.dim() != target.dim() {
        return Err(NnError::Shape {
            what: "mse",
            expected: vec![target.nrows(), target.ncols()],
            actual: vec![prediction.nrows(), prediction.ncols()],
        });
    }
    let n = prediction.len() as f64;
    let diff = prediction - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}
