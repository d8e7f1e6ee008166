use ndarray::{Array2, Axis};

use super::Scalar;
use crate::error::{Error, Result};

pub fn log_softmax_rows<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = row
            .iter()
            .map(|&v| (v - max).exp())
            .fold(F::zero(), |a, b| a + b)
            .ln()
            + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax_rows<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    log_softmax_rows(logits).mapv(|v| v.exp())
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the
/// logits. `shift`, when given, is added to every row before the softmax
/// (the logit-adjusted loss).
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Array2<F>,
    labels: &[usize],
    shift: Option<&[F]>,
) -> Result<(F, Array2<F>)> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return Err(Error::dims("cross-entropy labels", n, labels.len()));
    }
    if n == 0 {
        return Err(Error::EmptyInput("cross-entropy batch".into()));
    }
    let mut z = logits.clone();
    if let Some(shift) = shift {
        if shift.len() != c {
            return Err(Error::dims("logit adjustment", c, shift.len()));
        }
        for mut row in z.rows_mut() {
            row.iter_mut().zip(shift).for_each(|(v, &s)| *v += s);
        }
    }
    let logp = log_softmax_rows(&z);
    let inv_n = F::one() / F::lit(n as f64);
    let mut loss = F::zero();
    let mut grad = logp.mapv(|v| v.exp());
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::dims("class label", c, y));
        }
        loss -= logp[[i, y]];
        grad[[i, y]] -= F::one();
    }
    grad.mapv_inplace(|g| g * inv_n);
    let loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite cross-entropy".into()));
    }
    Ok((loss, grad))
}

/// `mean_i w_i * |pred_i - target_i|^2 / d` and its gradient w.r.t. `pred`.
pub fn mse_loss<F: Scalar>(
    pred: &Array2<F>,
    target: &Array2<F>,
    row_weights: &[F],
) -> Result<(F, Array2<F>)> {
    if pred.dim() != target.dim() {
        return Err(Error::dims("mse target", pred.len(), target.len()));
    }
    let (n, d) = pred.dim();
    if row_weights.len() != n {
        return Err(Error::dims("mse weights", n, row_weights.len()));
    }
    let diff = pred - target;
    let scale = F::one() / F::lit((n * d) as f64);
    let mut loss = F::zero();
    let mut grad = diff.clone();
    for ((row, mut g), &w) in diff
        .axis_iter(Axis(0))
        .zip(grad.axis_iter_mut(Axis(0)))
        .zip(row_weights)
    {
        loss += w * row.iter().map(|&v| v * v).fold(F::zero(), |a, b| a + b);
        let k = F::lit(2.0) * w * scale;
        g.mapv_inplace(|v| v * k);
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite mse".into()));
    }
    Ok((loss, grad))
}
