//! Central finite-difference gradient verification.

use crate::{Matrix, Params};

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_relative_error: f64,
    /// (tensor index, flat element index) of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }

    fn merge(self, other: GradReport) -> GradReport {
        let worst = if other.max_relative_error > self.max_relative_error {
            other
        } else {
            self
        };
        GradReport {
            checked: self.checked + other.checked,
            ..worst
        }
    }
}

fn check_tensor(
    tensor_index: usize,
    analytic: &Matrix,
    len: usize,
    step: f64,
    mut perturb: impl FnMut(usize, f64),
    mut loss: impl FnMut() -> f64,
) -> GradReport {
    let mut report = GradReport {
        max_relative_error: 0.0,
        worst: (tensor_index, 0),
        checked: 0,
    };
    for j in 0..len {
        perturb(j, step);
        let plus = loss();
        perturb(j, -2.0 * step);
        let minus = loss();
        perturb(j, step);
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic.as_slice().map_or_else(|| analytic.iter().nth(j).copied().unwrap(), |s| s[j]);
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_relative_error || !err.is_finite() {
            report.max_relative_error = if err.is_finite() { err } else { f64::INFINITY };
            report.worst = (tensor_index, j);
        }
    }
    report
}

/// Compares `analytic` (one gradient per tensor of `model`) against central
/// differences of `loss`.
pub fn check_params<P: Params>(model: &mut P, analytic: &[Matrix], step: f64, mut loss: impl FnMut(&P) -> f64) -> GradReport {
    assert_eq!(analytic.len(), model.tensors().len(), "one gradient per tensor");
    let mut total = GradReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (ti, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let cell = std::cell::RefCell::new(&mut *model);
        let report = check_tensor(
            ti,
            grad,
            len,
            step,
            |j, delta| {
                let mut m = cell.borrow_mut();
                let mut tensors = m.tensors_mut();
                let t = &mut tensors[ti];
                *t.iter_mut().nth(j).unwrap() += delta;
            },
            || loss(&cell.borrow()),
        );
        total = total.merge(report);
    }
    total
}

/// Same check for the gradient with respect to an input matrix.
pub fn check_input(x: &Matrix, analytic: &Matrix, step: f64, mut loss: impl FnMut(&Matrix) -> f64) -> GradReport {
    let cell = std::cell::RefCell::new(x.clone());
    check_tensor(
        0,
        analytic,
        x.len(),
        step,
        |j, delta| *cell.borrow_mut().iter_mut().nth(j).unwrap() += delta,
        || loss(&cell.borrow()),
    )
}
