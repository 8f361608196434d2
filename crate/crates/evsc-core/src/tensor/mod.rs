//! Dense f64 tensors with a reverse-mode autodiff tape.
//!
//! Everything learned in this crate runs through [`Tape`]: forward ops append
//! nodes, [`Tape::backward`] sweeps the tape once in reverse, and gradients
//! land back in a [`ParamStore`] for the optimizers in [`optim`].

mod gradcheck;
mod optim;
mod store;
mod tape;

pub use gradcheck::finite_diff_check;
pub use optim::{sgd_step, AdamState};
pub use store::{fnv1a64, ParamStore};
pub use tape::{Tape, TensorId};

use thiserror::Error;

/// A dense row-major tensor of 64-bit floats.
///
/// Values are immutable once placed on a tape; `grad` is the accumulation
/// buffer used by parameters between optimizer steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::BadShape {
                what: format!("zero extent in shape {shape:?}"),
            });
        }
        if data.len() != numel {
            return Err(TensorError::BadShape {
                what: format!("data length {} != product of shape {shape:?}", data.len()),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                op: "tensor construction".into(),
                value: *bad,
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self, TensorError> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    /// Adds `delta` into the grad buffer, allocating zeros on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        let numel = self.numel();
        debug_assert_eq!(delta.len(), numel);
        let grad = self.grad.get_or_insert_with(|| vec![0.0; numel]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

/// Errors from tensor construction, tape ops, and optimizers.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape error: {what}")]
    BadShape { what: String },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite value {value} produced by {op}")]
    NonFinite { op: String, value: f64 },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("loss is detached: no tape input requires a gradient")]
    DetachedLoss,
    #[error("parameter {name} has no gradient")]
    MissingGrad { name: String },
    #[error("parameter {name} not found in store")]
    UnknownParam { name: String },
    #[error("parameter {name} already exists in store")]
    DuplicateParam { name: String },
    #[error("function is not deterministic: two evaluations differ ({a} vs {b})")]
    NonDeterministic { a: f64, b: f64 },
    #[error("{what}")]
    Invalid { what: String },
}

pub type TensorResult<T> = Result<T, TensorError>;
