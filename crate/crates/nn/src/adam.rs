use ndarray::Array2;

use crate::{Matrix, NnError, Params};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<P: Params + ?Sized>(&mut self, params: &mut P, grads: &[Matrix]) -> Result<(), NnError> {
        let mut tensors = params.tensors_mut();
        if tensors.len() != grads.len() {
            return Err(NnError::Shape {
                what: "adam gradient count",
                expected: vec![tensors.len()],
                actual: vec![grads.len()],
            });
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.dim())).collect();
            self.v = self.m.clone();
        }
        for ((p, g), m) in tensors.iter().zip(grads).zip(&self.m) {
            if p.dim() != g.dim() || m.dim() != g.dim() {
                return Err(NnError::Shape {
                    what: "adam gradient",
                    expected: vec![p.nrows(), p.ncols()],
                    actual: vec![g.nrows(), g.ncols()],
                });
            }
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
        drop(tensors);
        if !params.all_finite() {
            return Err(NnError::NonFinite("parameters after Adam step"));
        }
        Ok(())
    }
}
