//! Conditioning vectors for the denoiser.
//!
//! A condition is built by concatenating a learnable class embedding with a
//! mode-dependent extra part (nothing, a latent drawn from the target
//! subdomain's pool, or an external semantic vector) and projecting the
//! result affinely to the condition width. A learnable null vector of the
//! same width stands in for dropped conditions and drives guidance.

use std::f64::consts::PI;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Affine, AffineTape, ParamId, ParamStore, Scalar};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    ClassOnly,
    #[default]
    ClassPlusSubdomainLatent,
    ClassPlusSemanticVector,
}

impl ConditionMode {
    pub(crate) fn code(self) -> f32 {
        match self {
            ConditionMode::ClassOnly => 0.0,
            ConditionMode::ClassPlusSubdomainLatent => 1.0,
            ConditionMode::ClassPlusSemanticVector => 2.0,
        }
    }

    pub(crate) fn from_code(code: f32) -> Result<Self> {
        match code as i32 {
            0 => Ok(ConditionMode::ClassOnly),
            1 => Ok(ConditionMode::ClassPlusSubdomainLatent),
            2 => Ok(ConditionMode::ClassPlusSemanticVector),
            other => Err(Error::Format(format!(
                "unknown condition mode code {other}"
            ))),
        }
    }
}

/// Which label selects a semantic vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SemanticKey {
    #[default]
    Class,
    Subdomain,
}

/// External per-label vectors (e.g. text-encoder outputs for class names).
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticVectors {
    pub key: SemanticKey,
    pub width: usize,
    /// Indexed by the key's label id; `None` where no vector was supplied.
    pub vectors: Vec<Option<Vec<f32>>>,
}

impl SemanticVectors {
    /// Build from a dataset whose class ids are the label keys (K = 1).
    pub fn from_dataset(ds: &crate::store::LatentDataset, key: SemanticKey) -> Self {
        let n = ds.manifest().c;
        let mut vectors = vec![None; n];
        for r in ds.records() {
            vectors[r.class_id as usize] = Some(r.vector.clone());
        }
        Self {
            key,
            width: ds.dim(),
            vectors,
        }
    }
}

/// A resolved condition request: class id plus the extra vector (empty in
/// class-only mode).
#[derive(Debug, Clone, PartialEq)]
pub struct CondInput {
    pub class_id: usize,
    pub extra: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVector {
    pub values: Vec<f32>,
    pub is_null: bool,
}

#[derive(Debug, Clone)]
pub struct CondTape<F> {
    classes: Vec<usize>,
    null_rows: Vec<bool>,
    projection: AffineTape<F>,
}

/// Structure and data of the conditioning pathway. Learnable tensors live
/// in the owning model's [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSource {
    pub mode: ConditionMode,
    pub num_classes: usize,
    pub embed_width: usize,
    pub width: usize,
    pub extra_width: usize,
    class_table: ParamId,
    projection: Affine,
    null_vector: ParamId,
    /// Ground-truth latents per subdomain, rows are vectors.
    pub subdomain_pool: Vec<Array2<f32>>,
    pub semantic: Option<SemanticVectors>,
}

impl ConditionSource {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        mode: ConditionMode,
        num_classes: usize,
        embed_width: usize,
        width: usize,
        extra_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_classes == 0 || embed_width == 0 || width == 0 {
            return Err(Error::InvalidConfig(
                "condition widths must be positive".into(),
            ));
        }
        let extra_width = match mode {
            ConditionMode::ClassOnly => 0,
            _ if extra_width == 0 => {
                return Err(Error::InvalidConfig(format!(
                    "{mode:?} needs a nonzero extra width"
                )))
            }
            _ => extra_width,
        };
        let table = Array2::from_shape_simple_fn((num_classes, embed_width), || {
            F::lit(StandardNormal.sample(rng))
        });
        let class_table = store.add("cond.class_table", table);
        let projection = Affine::new(store, "cond.proj", embed_width + extra_width, width, rng);
        let null_vector = store.add("cond.null", Array2::zeros((1, width)));
        Ok(Self {
            mode,
            num_classes,
            embed_width,
            width,
            extra_width,
            class_table,
            projection,
            null_vector,
            subdomain_pool: Vec::new(),
            semantic: None,
        })
    }

    pub fn null_vector_id(&self) -> ParamId {
        self.null_vector
    }

    /// Replace subdomain pools; rows must have the extra width.
    pub fn set_subdomain_pool(&mut self, pools: Vec<Array2<f32>>) -> Result<()> {
        for p in &pools {
            if p.nrows() > 0 && p.ncols() != self.extra_width {
                return Err(Error::dims("subdomain pool", self.extra_width, p.ncols()));
            }
        }
        self.subdomain_pool = pools;
        Ok(())
    }

    pub fn set_semantic(&mut self, semantic: SemanticVectors) -> Result<()> {
        if semantic.width != self.extra_width {
            return Err(Error::dims(
                "semantic vectors",
                self.extra_width,
                semantic.width,
            ));
        }
        self.semantic = Some(semantic);
        Ok(())
    }

    /// Pick the extra part for `(class_id, subdomain_id)`. Subdomain-latent
    /// mode draws one pool row uniformly from `rng`.
    pub fn resolve(
        &self,
        class_id: usize,
        subdomain_id: usize,
        rng: &mut StreamRng,
    ) -> Result<CondInput> {
        if class_id >= self.num_classes {
            return Err(Error::MissingCondition(format!(
                "class {class_id} outside embedding table of {}",
                self.num_classes
            )));
        }
        let extra = match self.mode {
            ConditionMode::ClassOnly => Vec::new(),
            ConditionMode::ClassPlusSubdomainLatent => {
                let pool = self
                    .subdomain_pool
                    .get(subdomain_id)
                    .filter(|p| p.nrows() > 0)
                    .ok_or(Error::EmptySubdomainPool(subdomain_id))?;
                let i = rng.random_range(0..pool.nrows());
                pool.row(i).to_vec()
            }
            ConditionMode::ClassPlusSemanticVector => {
                let sem = self
                    .semantic
                    .as_ref()
                    .ok_or_else(|| Error::MissingCondition("no semantic vectors loaded".into()))?;
                let key = match sem.key {
                    SemanticKey::Class => class_id,
                    SemanticKey::Subdomain => subdomain_id,
                };
                sem.vectors
                    .get(key)
                    .and_then(|v| v.clone())
                    .ok_or_else(|| {
                        Error::MissingCondition(format!(
                            "no semantic vector for {:?} {key}",
                            sem.key
                        ))
                    })?
            }
        };
        Ok(CondInput { class_id, extra })
    }

    /// Project a batch of requests; rows flagged in `null_rows` get the null vector.
    pub fn forward<F: Scalar>(
        &self,
        params: &ParamStore<F>,
        inputs: &[CondInput],
        null_rows: &[bool],
    ) -> Result<(Array2<F>, CondTape<F>)> {
        if inputs.len() != null_rows.len() {
            return Err(Error::dims(
                "condition null mask",
                inputs.len(),
                null_rows.len(),
            ));
        }
        let table = params.value(self.class_table);
        let e = self.embed_width;
        let mut cat = Array2::<F>::zeros((inputs.len(), e + self.extra_width));
        for (i, inp) in inputs.iter().enumerate() {
            if inp.class_id >= self.num_classes {
                return Err(Error::MissingCondition(format!("class {}", inp.class_id)));
            }
            if inp.extra.len() != self.extra_width {
                return Err(Error::dims(
                    "condition extra part",
                    self.extra_width,
                    inp.extra.len(),
                ));
            }
            cat.slice_mut(s![i, ..e]).assign(&table.row(inp.class_id));
            for (j, &v) in inp.extra.iter().enumerate() {
                cat[[i, e + j]] = F::lit(v as f64);
            }
        }
        let (mut y, projection) =
            self.projection
                .forward(params, &cat, crate::nn::Activation::None)?;
        let null = params.value(self.null_vector);
        for (i, &is_null) in null_rows.iter().enumerate() {
            if is_null {
                y.row_mut(i).assign(&null.row(0));
            }
        }
        let tape = CondTape {
            classes: inputs.iter().map(|c| c.class_id).collect(),
            null_rows: null_rows.to_vec(),
            projection,
        };
        Ok((y, tape))
    }

    pub fn backward<F: Scalar>(
        &self,
        params: &mut ParamStore<F>,
        tape: &CondTape<F>,
        mut dy: Array2<F>,
    ) {
        {
            let dnull = params.grad_mut(self.null_vector);
            for (i, &is_null) in tape.null_rows.iter().enumerate() {
                if is_null {
                    let row = dy.row(i).to_owned();
                    let mut g = dnull.row_mut(0);
                    g += &row;
                    dy.row_mut(i).fill(F::zero());
                }
            }
        }
        let dcat = self.projection.backward(params, &tape.projection, dy);
        let dtable = params.grad_mut(self.class_table);
        for (i, &c) in tape.classes.iter().enumerate() {
            if tape.null_rows[i] {
                continue;
            }
            let mut g = dtable.row_mut(c);
            g += &dcat.slice(s![i, ..self.embed_width]);
        }
    }

    /// The null condition.
    pub fn null_condition<F: Scalar>(&self, params: &ParamStore<F>) -> ConditionVector {
        ConditionVector {
            values: params
                .value(self.null_vector)
                .row(0)
                .iter()
                .map(|v| v.as_f64() as f32)
                .collect(),
            is_null: true,
        }
    }

    /// Resolve and project one condition.
    pub fn build_condition<F: Scalar>(
        &self,
        params: &ParamStore<F>,
        class_id: usize,
        subdomain_id: usize,
        rng: &mut StreamRng,
    ) -> Result<ConditionVector> {
        let input = self.resolve(class_id, subdomain_id, rng)?;
        let (y, _) = self.forward(params, &[input], &[false])?;
        Ok(ConditionVector {
            values: y
                .index_axis(Axis(0), 0)
                .iter()
                .map(|v| v.as_f64() as f32)
                .collect(),
            is_null: false,
        })
    }
}

/// With probability `p` replace `cond` by the null condition. Always draws
/// exactly one uniform from `rng`.
pub fn drop_condition(
    cond: &ConditionVector,
    null: &ConditionVector,
    p: f64,
    rng: &mut StreamRng,
) -> ConditionVector {
    if should_drop(p, rng) {
        null.clone()
    } else {
        cond.clone()
    }
}

pub(crate) fn should_drop(p: f64, rng: &mut StreamRng) -> bool {
    let u: f64 = rng.random();
    u < p
}

/// Fixed random Fourier features of `c_noise = ln(sigma) / 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding {
    pub freqs: Vec<f32>,
}

impl TimeEmbedding {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "time embedding dim {dim} must be even and positive"
            )));
        }
        let mut r = rng::stream(seed, "fourier-frequencies", &[dim as u64]);
        Ok(Self {
            freqs: (0..dim / 2)
                .map(|_| StandardNormal.sample(&mut r))
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.freqs.len()
    }

    /// Interleaved `(sin, cos)` pairs, one per frequency.
    pub fn embed(&self, sigma: f64) -> Result<Vec<f64>> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidSigma(sigma));
        }
        let c_noise = sigma.ln() / 4.0;
        let mut out = Vec::with_capacity(self.dim());
        for &f in &self.freqs {
            let a = 2.0 * PI * f as f64 * c_noise;
            out.push(a.sin());
            out.push(a.cos());
        }
        Ok(out)
    }

    /// One embedding row per sigma.
    pub fn embed_batch<F: Scalar>(&self, sigmas: &[f64]) -> Result<Array2<F>> {
        let mut out = Array2::zeros((sigmas.len(), self.dim()));
        for (i, &s) in sigmas.iter().enumerate() {
            for (j, v) in self.embed(s)?.into_iter().enumerate() {
                out[[i, j]] = F::lit(v);
            }
        }
        Ok(out)
    }
}

/// Time embedding with frequencies drawn from `seed`.
pub fn time_embed(sigma: f64, dim: usize, seed: u64) -> Result<Vec<f64>> {
    TimeEmbedding::new(dim, seed)?.embed(sigma)
}
