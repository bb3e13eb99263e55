//! Central finite-difference gradient estimation. This is the independent
//! oracle used to verify the tape's backward pass; run it in f64 mode.

use crate::error::Result;
use crate::numerics::tensor::Tensor;

/// Per-coordinate central difference of a scalar function of a tensor.
pub fn finite_difference_gradient<F>(mut f: F, at: &Tensor, epsilon: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut grad = Tensor::zeros(at.shape().to_vec());
    let mut probe = at.clone();
    for i in 0..at.len() {
        let orig = at.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let fp = f(&probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * epsilon);
    }
    Ok(grad)
}

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor); the standard gradient-check statistic.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / a.l2_norm().max(b.l2_norm()).max(1e-12)
}
