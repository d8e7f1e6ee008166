//! The task adapter: a stack of affine layers over frozen embeddings.
//!
//! Layer `i` (1-based) maps `Z^(i-1)` to `Z^(i)`; `Z^(0)` is the embedding
//! space itself. ReLU follows every layer but the last, whose output is the
//! class logits. Softmax only appears inside losses and predictions.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    softmax_cross_entropy, softmax_rows, Activation, Affine, AffineTape, Checkpoint,
    OptimizerConfig, OptimizerKind, OptimizerState, ParamStore, Scalar, Tensor,
};
use crate::rng;
use crate::sampler::AugmentationSet;
use crate::store::{LatentDataset, Split};

pub const DEFAULT_HIDDEN: [usize; 2] = [512, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterModel<F = f32> {
    dims: Vec<usize>,
    layers: Vec<Affine>,
    pub params: ParamStore<F>,
    frozen_prefix: usize,
}

/// `[m, hidden.., c]` adapter with Glorot-initialized weights.
pub fn build_adapter(m: usize, c: usize, hidden: &[usize], seed: u64) -> Result<AdapterModel<f32>> {
    let mut dims = vec![m];
    dims.extend_from_slice(hidden);
    dims.push(c);
    if dims.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "adapter dims must be positive: {dims:?}"
        )));
    }
    let mut r = rng::stream(seed, "adapter-init", &[]);
    let mut params = ParamStore::new();
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            Affine::new(
                &mut params,
                &format!("adapter.{}", i + 1),
                w[0],
                w[1],
                &mut r,
            )
        })
        .collect();
    Ok(AdapterModel {
        dims,
        layers,
        params,
        frozen_prefix: 0,
    })
}

impl<F: Scalar> AdapterModel<F> {
    /// Number of affine layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Width of `Z^(l)`.
    pub fn latent_dim(&self, l: usize) -> Result<usize> {
        self.check_layer(l)?;
        Ok(self.dims[l])
    }

    pub fn frozen_prefix(&self) -> usize {
        self.frozen_prefix
    }

    fn check_layer(&self, l: usize) -> Result<()> {
        if l >= self.num_layers() {
            return Err(Error::InvalidLayer {
                layer: l,
                layers: self.num_layers(),
            });
        }
        Ok(())
    }

    fn activation(&self, i: usize) -> Activation {
        if i + 1 < self.num_layers() {
            Activation::Relu
        } else {
            Activation::None
        }
    }

    /// Freeze layers `1..=l` (their parameters stop receiving updates).
    pub fn freeze_prefix(&mut self, l: usize) -> Result<()> {
        if l > self.num_layers() {
            return Err(Error::InvalidLayer {
                layer: l,
                layers: self.num_layers(),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let frozen = i < l;
            self.params.set_frozen(layer.weight, frozen);
            self.params.set_frozen(layer.bias, frozen);
        }
        self.frozen_prefix = l;
        Ok(())
    }

    /// Run layers `l+1..=L` on vectors from `Z^(l)`, keeping tapes.
    pub fn forward_from(&self, l: usize, x: &Array2<F>) -> Result<(Array2<F>, Vec<AffineTape<F>>)> {
        self.check_layer(l)?;
        if x.ncols() != self.dims[l] {
            return Err(Error::dims(
                format!("adapter input at Z^({l})"),
                self.dims[l],
                x.ncols(),
            ));
        }
        let mut h = x.clone();
        let mut tapes = Vec::with_capacity(self.num_layers() - l);
        for i in l..self.num_layers() {
            let (y, tape) = self.layers[i].forward(&self.params, &h, self.activation(i))?;
            tapes.push(tape);
            h = y;
        }
        Ok((h, tapes))
    }

    /// Backpropagate `dlogits` through the layers run by `forward_from(l)`.
    pub fn backward_from(&mut self, l: usize, tapes: &[AffineTape<F>], dlogits: Array2<F>) {
        let mut d = dlogits;
        for (i, tape) in (l..self.num_layers()).zip(tapes).rev() {
            d = self.layers[i].backward(&mut self.params, tape, d);
        }
    }

    pub fn logits(&self, x: &Array2<F>) -> Result<Array2<F>> {
        self.forward_from(0, x).map(|(y, _)| y)
    }

    pub fn predict_proba(&self, x: &Array2<F>) -> Result<Array2<F>> {
        Ok(softmax_rows(&self.logits(x)?))
    }

    pub fn predict(&self, x: &Array2<F>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(x)?))
    }

    /// Map a batch from `Z^(0)` into `Z^(l)`.
    pub fn tap_batch(&self, x: &Array2<F>, l: usize) -> Result<Array2<F>> {
        self.check_layer(l)?;
        if x.ncols() != self.dims[0] {
            return Err(Error::dims("adapter input", self.dims[0], x.ncols()));
        }
        let mut h = x.clone();
        for i in 0..l {
            h = self.layers[i].apply(&self.params, &h, self.activation(i))?;
        }
        Ok(h)
    }

    /// SHA-256 over the serialized parameters of layers `1..=l`.
    pub fn prefix_checksum(&self, l: usize) -> Result<String> {
        let mut ck = Checkpoint::default();
        for layer in &self.layers[..l.min(self.num_layers())] {
            ck.push(Tensor::matrix("w", self.params.value(layer.weight)));
            ck.push(Tensor::matrix("b", self.params.value(layer.bias)));
        }
        ck.id()
    }

    pub fn cast<G: Scalar>(&self) -> AdapterModel<G> {
        AdapterModel {
            dims: self.dims.clone(),
            layers: self.layers.clone(),
            params: self.params.cast(),
            frozen_prefix: self.frozen_prefix,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push(Tensor::vector(
            "__meta__.adapter_dims",
            self.dims.iter().map(|&d| d as f32).collect(),
        ));
        ck.push_params(&self.params);
        ck
    }
}

impl AdapterModel<f32> {
    pub fn tap_latent(&self, z0: &[f32], l: usize) -> Result<Vec<f32>> {
        let x = Array2::from_shape_vec((1, z0.len()), z0.to_vec()).unwrap();
        Ok(self.tap_batch(&x, l)?.into_raw_vec_and_offset().0)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let dims: Vec<usize> = ck
            .get("__meta__.adapter_dims")?
            .data
            .iter()
            .map(|&d| d as usize)
            .collect();
        if dims.len() < 2 {
            return Err(Error::Format(
                "adapter checkpoint needs at least two dims".into(),
            ));
        }
        let mut model = build_adapter(dims[0], *dims.last().unwrap(), &dims[1..dims.len() - 1], 0)?;
        ck.load_params(&mut model.params)?;
        Ok(model)
    }
}

pub fn argmax_rows<F: Scalar>(a: &Array2<F>) -> Vec<usize> {
    a.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// `logits + tau * ln(priors)`.
pub fn la_adjust<F: Scalar>(logits: &[F], class_priors: &[f64], tau: f64) -> Result<Vec<F>> {
    let shift = la_shift::<F>(class_priors, tau)?;
    if shift.len() != logits.len() {
        return Err(Error::dims("class priors", logits.len(), shift.len()));
    }
    Ok(logits.iter().zip(&shift).map(|(&z, &s)| z + s).collect())
}

fn la_shift<F: Scalar>(class_priors: &[f64], tau: f64) -> Result<Vec<F>> {
    if class_priors.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidPrior(format!(
            "priors must be positive: {class_priors:?}"
        )));
    }
    let total: f64 = class_priors.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidPrior(format!("priors sum to {total}, not 1")));
    }
    Ok(class_priors.iter().map(|&p| F::lit(tau * p.ln())).collect())
}

/// Normalized train-split class frequencies.
pub fn class_priors(dataset: &LatentDataset) -> Vec<f64> {
    let counts = dataset.manifest().train_class_counts();
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&n| {
            if total == 0 {
                0.0
            } else {
                n as f64 / total as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    LogitAdjusted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Linear ramp from 0 over this many epochs, then constant.
    pub warmup_epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub la_tau: f64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            warmup_epochs: 10,
            seed: 0,
            loss: LossKind::CrossEntropy,
            la_tau: 1.0,
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bad learning rate {}",
                self.lr
            )));
        }
        Ok(())
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub train_accuracy: f64,
}

pub type History = Vec<EpochStats>;

/// Stack vectors into a `(n, d)` matrix.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f32]>, d: usize) -> Array2<f32> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        debug_assert_eq!(r.len(), d);
        data.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, d), data).unwrap()
}

/// Mini-batch training of layers `start+1..=L` on `(x, y)` drawn from
/// `Z^(start)`. Shuffles are reseeded per epoch from `(seed, epoch)`.
fn fit(
    model: &mut AdapterModel<f32>,
    start: usize,
    x: &Array2<f32>,
    y: &[usize],
    cfg: &TrainConfig,
    shift: Option<Vec<f32>>,
) -> Result<History> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    let mut opt = OptimizerState::new(cfg.optimizer_config(), &model.params);
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let warmup_steps = cfg.warmup_epochs * steps_per_epoch;
    let mut global_step = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let mut r = rng::stream(cfg.seed, "adapter-shuffle", &[epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            model.params.zero_grad();
            let (logits, tapes) = model.forward_from(start, &xb)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &yb, shift.as_deref())?;
            correct += argmax_rows(&logits)
                .iter()
                .zip(&yb)
                .filter(|(p, t)| p == t)
                .count();
            model.backward_from(start, &tapes, dlogits);
            opt.lr = if warmup_steps > 0 {
                cfg.lr * ((global_step + 1) as f64 / warmup_steps as f64).min(1.0)
            } else {
                cfg.lr
            };
            opt.step(&mut model.params)?;
            loss_sum += loss as f64 * batch.len() as f64;
            global_step += 1;
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / n as f64,
            lr: opt.lr,
            train_accuracy: correct as f64 / n as f64,
        });
    }
    model.params.zero_grad();
    Ok(history)
}

fn loss_shift(cfg: &TrainConfig, priors: &[f64]) -> Result<Option<Vec<f32>>> {
    match cfg.loss {
        LossKind::CrossEntropy => Ok(None),
        LossKind::LogitAdjusted => la_shift(priors, cfg.la_tau).map(Some),
    }
}

/// Stage 1: train every adapter layer on the (imbalanced) train split.
pub fn train_stage1(
    model: &mut AdapterModel<f32>,
    dataset: &LatentDataset,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if dataset.dim() != model.input_dim() {
        return Err(Error::dims(
            "stage-1 dataset",
            model.input_dim(),
            dataset.dim(),
        ));
    }
    if dataset.manifest().c != model.num_classes() {
        return Err(Error::dims(
            "stage-1 classes",
            model.num_classes(),
            dataset.manifest().c,
        ));
    }
    let train: Vec<_> = dataset.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::EmptyDataset("train split is empty".into()));
    }
    let x = stack_rows(train.iter().map(|r| r.vector.as_slice()), dataset.dim());
    let y: Vec<usize> = train.iter().map(|r| r.class_id as usize).collect();
    let shift = loss_shift(cfg, &class_priors(dataset))?;
    model.freeze_prefix(0)?;
    fit(model, 0, &x, &y, cfg, shift)
}

/// Stage 3: freeze layers `1..=l` and fine-tune the rest on ground-truth
/// latents plus augmented latents, both living in `Z^(l)` and fed straight
/// into layer `l+1`. Samples are mixed in shared shuffled batches.
///
/// `class_priors` is only consulted for the logit-adjusted loss; when absent
/// the frequencies of the fine-tuning set are used.
pub fn finetune_stage3(
    model: &mut AdapterModel<f32>,
    l: usize,
    gt: &LatentDataset,
    aug: &AugmentationSet,
    cfg: &TrainConfig,
    class_priors: Option<&[f64]>,
) -> Result<History> {
    cfg.validate()?;
    let d = model.latent_dim(l)?;
    if gt.dim() != d {
        return Err(Error::dims(
            format!("ground-truth latents in Z^({l})"),
            d,
            gt.dim(),
        ));
    }
    if !aug.is_empty() && aug.dim() != d {
        return Err(Error::dims(
            format!("augmented latents in Z^({l})"),
            d,
            aug.dim(),
        ));
    }
    let gt_train: Vec<_> = gt.split(Split::Train).collect();
    let rows = gt_train.iter().map(|r| r.vector.as_slice()).chain(
        aug.vectors
            .rows()
            .into_iter()
            .map(|r| r.to_slice().unwrap()),
    );
    let x = stack_rows(rows, d);
    let y: Vec<usize> = gt_train
        .iter()
        .map(|r| r.class_id as usize)
        .chain(aug.labels.iter().map(|&(c, _)| c as usize))
        .collect();
    let c = model.num_classes();
    if let Some(&bad) = y.iter().find(|&&label| label >= c) {
        return Err(Error::dims("fine-tuning label", c, bad));
    }
    let priors = match class_priors {
        Some(p) => p.to_vec(),
        None => {
            let mut counts = vec![0f64; c];
            y.iter().for_each(|&label| counts[label] += 1.0);
            let total = y.len().max(1) as f64;
            counts.into_iter().map(|n| n / total).collect()
        }
    };
    let shift = loss_shift(cfg, &priors)?;
    model.freeze_prefix(l)?;
    fit(model, l, &x, &y, cfg, shift)
}

/// Accuracy helper used by tests and reports.
pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64
}

/// Convenience: `Z^(0)` matrix and labels for one split (optionally one
/// subdomain) of a dataset.
pub fn split_matrix(
    dataset: &LatentDataset,
    split: Split,
    subdomain: Option<usize>,
) -> (Array2<f32>, Vec<usize>) {
    let recs: Vec<_> = dataset
        .split(split)
        .filter(|r| subdomain.is_none_or(|k| r.subdomain_id as usize == k))
        .collect();
    let x = stack_rows(recs.iter().map(|r| r.vector.as_slice()), dataset.dim());
    (x, recs.iter().map(|r| r.class_id as usize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::sampler::Provenance;
    use crate::store::{make_synthetic, TransferFamily};
    use rand_distr::{Distribution, StandardNormal};

    fn family(n_train: usize) -> LatentDataset {
        make_synthetic(
            &TransferFamily {
                m: 8,
                c: 3,
                k: 2,
                n_train,
                n_test: 20,
                ..Default::default()
            }
            .spec()
            .unwrap(),
        )
        .unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 60,
            warmup_epochs: 2,
            ..Default::default()
        }
    }

    fn empty_aug(d: usize) -> AugmentationSet {
        AugmentationSet::empty(
            d,
            Provenance {
                method: "none".into(),
                checkpoint_id: None,
                sampler: None,
                seed: 0,
            },
        )
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (l, shift) in [(0, None), (1, Some(vec![0.3, -0.2, 0.1])), (2, None)] {
            let mut model = build_adapter(4, 3, &[5, 6], 9).unwrap().cast::<f64>();
            model.freeze_prefix(l).unwrap();
            let mut r = rng::stream(2, "x", &[]);
            let x = Array2::from_shape_simple_fn((7, model.dims()[l]), || {
                StandardNormal.sample(&mut r)
            });
            let y = [0, 1, 2, 2, 1, 0, 1];
            let mut params = std::mem::take(&mut model.params);
            let report = grad_check(
                &mut params,
                |p, need_grad| {
                    std::mem::swap(&mut model.params, p);
                    let out = (|| {
                        let (logits, tapes) = model.forward_from(l, &x)?;
                        let (loss, d) = softmax_cross_entropy(&logits, &y, shift.as_deref())?;
                        if need_grad {
                            model.backward_from(l, &tapes, d);
                        }
                        Ok(loss)
                    })();
                    std::mem::swap(&mut model.params, p);
                    out
                },
                1e-5,
            )
            .unwrap();
            assert!(report.passes(1e-4), "l={l}: {report:?}");
            let trainable: usize = [20 + 5, 30 + 6, 18 + 3][l..].iter().sum();
            assert_eq!(report.checked, trainable);
        }
    }

    #[test]
    fn stage1_learns_separable_classes() {
        let ds = family(40);
        let mut model = build_adapter(8, 3, &[16], 1).unwrap();
        let history = train_stage1(&mut model, &ds, &quick()).unwrap();
        assert_eq!(history.len(), 60);
        assert!(history.last().unwrap().loss < history[0].loss);
        let (x, y) = split_matrix(&ds, Split::Test, None);
        let acc = accuracy(&model.predict(&x).unwrap(), &y);
        assert!(acc > 0.95, "{acc}");
        // 8 steps per epoch, 16 warmup steps
        assert_eq!(history[0].lr, 1e-3 * 8.0 / 16.0);
    }

    #[test]
    fn stage3_leaves_frozen_prefix_untouched() {
        let ds = family(10);
        let mut model = build_adapter(8, 3, &[16, 12], 1).unwrap();
        train_stage1(&mut model, &ds, &quick()).unwrap();
        for l in [1, 2] {
            let before = model.clone();
            let gt = {
                let (x, _) = split_matrix(&ds, Split::Train, None);
                let z = model.tap_batch(&x, l).unwrap();
                let mut man = crate::store::DatasetManifest::new(z.ncols(), 3, 2);
                man.source_tag = "tap".into();
                let recs = ds
                    .split(Split::Train)
                    .zip(z.rows())
                    .map(|(r, v)| crate::store::LatentRecord {
                        vector: v.to_vec(),
                        ..r.clone()
                    })
                    .collect();
                LatentDataset::new(man, recs).unwrap()
            };
            let mut tuned = model.clone();
            finetune_stage3(&mut tuned, l, &gt, &empty_aug(gt.dim()), &quick(), None).unwrap();
            assert_eq!(
                tuned.prefix_checksum(l).unwrap(),
                before.prefix_checksum(l).unwrap()
            );
            assert_ne!(
                tuned.prefix_checksum(l + 1).unwrap(),
                before.prefix_checksum(l + 1).unwrap()
            );
            assert_eq!(tuned.frozen_prefix(), l);
        }
    }

    #[test]
    fn stage3_rejects_wrong_latent_space() {
        let ds = family(5);
        let mut model = build_adapter(8, 3, &[16], 1).unwrap();
        // Z^(0) latents fed at l = 1
        let err = finetune_stage3(&mut model, 1, &ds, &empty_aug(8), &quick(), None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(matches!(
            model.latent_dim(2),
            Err(Error::InvalidLayer {
                layer: 2,
                layers: 2
            })
        ));
        assert!(matches!(
            model.freeze_prefix(3),
            Err(Error::InvalidLayer { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = build_adapter(5, 4, &[7, 3], 3).unwrap();
        let back = AdapterModel::from_checkpoint(
            &Checkpoint::from_bytes(&model.to_checkpoint().to_bytes().unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back.params, model.params);
        assert_eq!(back.dims(), model.dims());
        assert_eq!(
            back.prefix_checksum(2).unwrap(),
            model.prefix_checksum(2).unwrap()
        );
    }

    #[test]
    fn tapping_composes_layers() {
        let model = build_adapter(3, 2, &[4, 5], 4).unwrap();
        let z0 = [0.5f32, -1.0, 2.0];
        assert_eq!(model.tap_latent(&z0, 0).unwrap(), z0.to_vec());
        let z2 = model.tap_latent(&z0, 2).unwrap();
        assert_eq!(z2.len(), 5);
        assert!(z2.iter().all(|&v| v >= 0.0));
        let z1 = Array2::from_shape_vec((1, 4), model.tap_latent(&z0, 1).unwrap()).unwrap();
        let (logits_from_1, _) = model.forward_from(1, &z1).unwrap();
        let direct = model
            .logits(&Array2::from_shape_vec((1, 3), z0.to_vec()).unwrap())
            .unwrap();
        for (a, b) in logits_from_1.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn logit_adjustment() {
        let out = la_adjust(&[1.0f64, 2.0], &[0.25, 0.75], 1.0).unwrap();
        assert!((out[0] - (1.0 + 0.25f64.ln())).abs() < 1e-12);
        assert!((out[1] - (2.0 + 0.75f64.ln())).abs() < 1e-12);
        assert!(matches!(
            la_adjust(&[1.0f64, 2.0], &[0.0, 1.0], 1.0),
            Err(Error::InvalidPrior(_))
        ));
        assert!(matches!(
            la_adjust(&[1.0f64, 2.0], &[0.5, 0.6], 1.0),
            Err(Error::InvalidPrior(_))
        ));
        assert_eq!(
            la_adjust(&[1.0f64, 2.0], &[0.5, 0.5], 0.0).unwrap(),
            vec![1.0, 2.0]
        );
    }
}
