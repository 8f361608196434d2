//! Finite-difference validation of tape gradients.

use super::tape::{Tape, TensorId};
use super::{Tensor, TensorError, TensorResult};

/// Compares the tape gradient of a scalar loss against central differences.
///
/// `build` receives a fresh tape and the id of the probe leaf and must return
/// the loss node. The probe starts from `at`; the returned value is the
/// maximum relative error `|analytic - numeric| / max(1, |analytic|)` over
/// all coordinates.
///
/// The loss is evaluated twice at the starting point first; the two values
/// must be bitwise identical, otherwise the build closure is nondeterministic
/// and the check reports that instead of a meaningless error bound.
pub fn finite_diff_check<F>(at: &Tensor, build: F, epsilon: f64) -> TensorResult<f64>
where
    F: Fn(&mut Tape, TensorId) -> TensorResult<TensorId>,
{
    let eval = |data: &[f64]| -> TensorResult<f64> {
        let mut tape = Tape::new();
        let probe = tape.leaf(Tensor::new(at.shape.clone(), data.to_vec())?.with_grad());
        let loss = build(&mut tape, probe)?;
        let value = tape.value(loss);
        if value.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: value.shape.clone(),
            });
        }
        Ok(value.data[0])
    };

    let first = eval(&at.data)?;
    let second = eval(&at.data)?;
    if first.to_bits() != second.to_bits() {
        return Err(TensorError::NonDeterministic {
            a: first,
            b: second,
        });
    }

    let analytic = {
        let mut tape = Tape::new();
        let probe = tape.leaf(at.clone().with_grad());
        let loss = build(&mut tape, probe)?;
        tape.backward(loss)?;
        match tape.grad(probe) {
            Some(g) => g.to_vec(),
            None => vec![0.0; at.numel()],
        }
    };

    let mut worst = 0.0f64;
    let mut point = at.data.clone();
    for i in 0..point.len() {
        let orig = point[i];
        point[i] = orig + epsilon;
        let plus = eval(&point)?;
        point[i] = orig - epsilon;
        let minus = eval(&point)?;
        point[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}
