//! Minimal dense numeric engine.
//!
//! Forward passes record a small tape per layer; backward passes walk it in
//! reverse. Only the layer vocabulary needed by the adapter and the
//! denoiser exists: affine, ReLU, concatenation, add/scale, MSE and
//! softmax cross-entropy.

mod checkpoint;
mod ema;
mod gradcheck;
mod layers;
mod loss;
mod optim;
mod params;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, Tensor, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
pub use ema::{ema_decay, EmaState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{affine_apply, affine_backward, Activation, Affine, AffineTape};
pub use loss::{log_softmax_rows, mse_loss, softmax_cross_entropy, softmax_rows};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{Param, ParamId, ParamStore};

use ndarray::{Array2, LinalgScalar, ScalarOperand};
use num_traits::Float;

use crate::error::{Error, Result};

/// Real types the engine runs in: `f32` for training, `f64` for checks.
pub trait Scalar:
    LinalgScalar
    + ScalarOperand
    + Float
    + Default
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
{
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

pub type DenseMatrix<F> = Array2<F>;

pub(crate) fn ensure_finite<F: Scalar>(a: &Array2<F>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite values in {what}")))
    }
}

/// Convert a matrix between scalar types.
pub fn cast<A: Scalar, B: Scalar>(a: &Array2<A>) -> Array2<B> {
    a.mapv(|v| B::lit(v.as_f64()))
}
