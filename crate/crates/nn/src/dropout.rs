use rand::Rng;

use crate::{Matrix, NnError};

/// Inverted dropout. Returns the output and the scaled keep-mask (needed for
/// the backward pass, which is an elementwise product with the mask).
pub fn dropout<R: Rng + ?Sized>(x: &Matrix, rate: f64, rng: &mut R) -> Result<(Matrix, Matrix), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::Invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask = x.mapv(|_| if rng.random::<f64>() < rate { 0.0 } else { scale });
    Ok((x * &mask, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64);
        let (y, _) = dropout(&x, 0.0, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn binomial_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let x = Array2::from_elem((1000, 1000), 1.0);
        let (y, _) = dropout(&x, 0.35, &mut rng).unwrap();
        let zeros = y.iter().filter(|&&v| v == 0.0).count() as f64;
        let sigma = (n as f64 * 0.35 * 0.65).sqrt();
        assert!((zeros - 0.35 * n as f64).abs() <= 3.0 * sigma);
        let mean = y.sum() / n as f64;
        assert!((mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dropout(&Array2::zeros((1, 1)), 1.0, &mut rng).is_err());
    }
}
