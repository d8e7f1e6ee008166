use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ensure_finite, ParamId, ParamStore, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
}

/// What `affine_backward` needs from the forward pass.
#[derive(Debug, Clone)]
pub struct AffineTape<F> {
    pub input: Array2<F>,
    /// Post-activation output (the ReLU mask is `output > 0`).
    pub output: Array2<F>,
    pub activation: Activation,
}

/// `y = act(x W^T + b)` over a batch of row vectors.
///
/// `weight` is `(out, in)`, `bias` is `(1, out)`, `x` is `(batch, in)`.
pub fn affine_apply<F: Scalar>(
    weight: &Array2<F>,
    bias: &Array2<F>,
    x: &Array2<F>,
    activation: Activation,
) -> Result<(Array2<F>, AffineTape<F>)> {
    let (out_dim, in_dim) = weight.dim();
    if x.ncols() != in_dim {
        return Err(Error::dims("affine input", in_dim, x.ncols()));
    }
    if bias.dim() != (1, out_dim) {
        return Err(Error::dims("affine bias", out_dim, bias.len()));
    }
    let mut y = x.dot(&weight.t());
    y += bias;
    if activation == Activation::Relu {
        y.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
    }
    ensure_finite(&y, "affine output")?;
    let tape = AffineTape {
        input: x.clone(),
        output: y.clone(),
        activation,
    };
    Ok((y, tape))
}

/// Accumulate `dW`, `db` and return `dx` for upstream gradient `dy`.
///
/// The ReLU derivative at 0 is 0.
pub fn affine_backward<F: Scalar>(
    weight: &Array2<F>,
    tape: &AffineTape<F>,
    mut dy: Array2<F>,
    dweight: &mut Array2<F>,
    dbias: &mut Array2<F>,
) -> Array2<F> {
    if tape.activation == Activation::Relu {
        ndarray::Zip::from(&mut dy)
            .and(&tape.output)
            .for_each(|g, &o| {
                if o <= F::zero() {
                    *g = F::zero();
                }
            });
    }
    ndarray::linalg::general_mat_mul(F::one(), &dy.t(), &tape.input, F::one(), dweight);
    *dbias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(weight)
}

/// An affine layer whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    /// Glorot-uniform weights, zero bias.
    pub fn new<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((out_dim, in_dim), || {
            F::lit(rng.random_range(-limit..=limit))
        });
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Array2::zeros((1, out_dim)));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        store: &ParamStore<F>,
        x: &Array2<F>,
        activation: Activation,
    ) -> Result<(Array2<F>, AffineTape<F>)> {
        affine_apply(
            store.value(self.weight),
            store.value(self.bias),
            x,
            activation,
        )
    }

    /// Forward without keeping a tape.
    pub fn apply<F: Scalar>(
        &self,
        store: &ParamStore<F>,
        x: &Array2<F>,
        activation: Activation,
    ) -> Result<Array2<F>> {
        self.forward(store, x, activation).map(|(y, _)| y)
    }

    pub fn backward<F: Scalar>(
        &self,
        store: &mut ParamStore<F>,
        tape: &AffineTape<F>,
        dy: Array2<F>,
    ) -> Array2<F> {
        let mut dw = std::mem::take(store.grad_mut(self.weight));
        let mut db = std::mem::take(store.grad_mut(self.bias));
        let dx = affine_backward(store.value(self.weight), tape, dy, &mut dw, &mut db);
        *store.grad_mut(self.weight) = dw;
        *store.grad_mut(self.bias) = db;
        dx
    }
}
