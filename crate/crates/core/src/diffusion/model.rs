use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::condition::{
    CondInput, CondTape, ConditionMode, ConditionSource, ConditionVector, SemanticKey,
    SemanticVectors, TimeEmbedding,
};
use crate::error::{Error, Result};
use crate::nn::{
    ensure_finite, mse_loss, Activation, Affine, AffineTape, Checkpoint, ParamStore, Scalar, Tensor,
};
use crate::rng::{self, StreamRng};

/// Backbone size. Widths are shared by every residual block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub width: usize,
    pub depth: usize,
    pub cond_width: usize,
    pub embed_width: usize,
    pub time_dim: usize,
    /// Dropout inside residual blocks during training.
    pub dropout: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            width: 512,
            depth: 3,
            cond_width: 256,
            embed_width: 256,
            time_dim: 256,
            dropout: 0.0,
        }
    }
}

impl DenoiserConfig {
    /// Named sizes used by sweeps: `tiny`, `small`, `base`.
    pub fn preset(name: &str) -> Result<Self> {
        let sized = |w: usize, depth: usize| Self {
            width: w,
            depth,
            cond_width: w.min(256),
            embed_width: w.min(256),
            time_dim: w.min(256),
            dropout: 0.0,
        };
        match name {
            "tiny" => Ok(sized(64, 1)),
            "small" => Ok(sized(128, 2)),
            "base" => Ok(Self::default()),
            other => Err(Error::InvalidConfig(format!(
                "unknown denoiser size `{other}`"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [
            self.width,
            self.depth,
            self.cond_width,
            self.embed_width,
            self.time_dim,
        ]
        .contains(&0)
        {
            return Err(Error::InvalidConfig(
                "denoiser widths and depth must be positive".into(),
            ));
        }
        if !self.time_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig("time_dim must be even".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    inject: Affine,
    fc1: Affine,
    fc2: Affine,
}

#[derive(Debug, Clone)]
struct BlockTape<F> {
    h_in: Array2<F>,
    inject: AffineTape<F>,
    fc1: AffineTape<F>,
    fc2: AffineTape<F>,
}

#[derive(Debug, Clone)]
pub struct NetTape<F> {
    m: Array2<F>,
    time: AffineTape<F>,
    input: AffineTape<F>,
    blocks: Vec<BlockTape<F>>,
    h: Array2<F>,
    output: AffineTape<F>,
}

/// One training batch with all randomness already drawn.
#[derive(Debug, Clone)]
pub struct DiffusionBatch<F> {
    pub x0: Array2<F>,
    pub noise: Array2<F>,
    pub sigmas: Vec<f64>,
    pub cond: Vec<CondInput>,
    pub dropped: Vec<bool>,
    /// One inverted-dropout mask per residual block, or empty for no dropout.
    pub masks: Vec<Array2<F>>,
}

/// Residual dense backbone. The condition plus a projection of the time
/// embedding forms a mapping vector whose ReLU is injected at the entry of
/// every residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    pub latent_dim: usize,
    pub num_classes: usize,
    pub config: DenoiserConfig,
    pub condition: ConditionSource,
    pub time: TimeEmbedding,
    time_proj: Affine,
    input: Affine,
    blocks: Vec<Block>,
    output: Affine,
}

fn scale_rows<F: Scalar>(a: &mut Array2<F>, scales: &[f64]) {
    for (mut row, &s) in a.rows_mut().into_iter().zip(scales) {
        let s = F::lit(s);
        row.mapv_inplace(|v| v * s);
    }
}

fn relu_mask<F: Scalar>(grad: &mut Array2<F>, pre: &Array2<F>) {
    Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= F::zero() {
            *g = F::zero();
        }
    });
}

impl DenoiserNet {
    pub fn new<F: Scalar>(
        params: &mut ParamStore<F>,
        latent_dim: usize,
        num_classes: usize,
        mode: ConditionMode,
        extra_width: usize,
        config: DenoiserConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if latent_dim == 0 {
            return Err(Error::InvalidConfig("latent width must be positive".into()));
        }
        let mut r = rng::stream(seed, "denoiser-init", &[]);
        let condition = ConditionSource::new(
            params,
            mode,
            num_classes,
            config.embed_width,
            config.cond_width,
            extra_width,
            &mut r,
        )?;
        let time = TimeEmbedding::new(config.time_dim, seed)?;
        let time_proj = Affine::new(
            params,
            "denoiser.time_proj",
            config.time_dim,
            config.cond_width,
            &mut r,
        );
        let input = Affine::new(params, "denoiser.input", latent_dim, config.width, &mut r);
        let blocks: Vec<Block> = (0..config.depth)
            .map(|i| Block {
                inject: Affine::new(
                    params,
                    &format!("denoiser.block{i}.inject"),
                    config.cond_width,
                    2 * config.width,
                    &mut r,
                ),
                fc1: Affine::new(
                    params,
                    &format!("denoiser.block{i}.fc1"),
                    config.width,
                    config.width,
                    &mut r,
                ),
                fc2: Affine::new(
                    params,
                    &format!("denoiser.block{i}.fc2"),
                    config.width,
                    config.width,
                    &mut r,
                ),
            })
            .collect();
        let output = Affine::new(params, "denoiser.output", config.width, latent_dim, &mut r);
        // Residual branches and the output start at zero, so a fresh model
        // denoises as pure skip and each block starts as identity.
        params.value_mut(output.weight).fill(F::zero());
        for b in &blocks {
            params.value_mut(b.fc2.weight).fill(F::zero());
        }
        Ok(Self {
            latent_dim,
            num_classes,
            config,
            condition,
            time,
            time_proj,
            input,
            blocks,
            output,
        })
    }

    /// Raw network `F(x_in; temb, cond)`.
    pub fn trunk<F: Scalar>(
        &self,
        params: &ParamStore<F>,
        x_in: &Array2<F>,
        temb: &Array2<F>,
        cond: &Array2<F>,
        masks: &[Array2<F>],
    ) -> Result<(Array2<F>, NetTape<F>)> {
        if cond.ncols() != self.config.cond_width {
            return Err(Error::dims(
                "condition width",
                self.config.cond_width,
                cond.ncols(),
            ));
        }
        if !masks.is_empty() && masks.len() != self.blocks.len() {
            return Err(Error::dims("dropout masks", self.blocks.len(), masks.len()));
        }
        let (t, time) = self.time_proj.forward(params, temb, Activation::None)?;
        if t.nrows() != cond.nrows() {
            return Err(Error::dims("condition rows", t.nrows(), cond.nrows()));
        }
        let m = cond + &t;
        let e = m.mapv(|v| v.max(F::zero()));
        let (mut h, input) = self.input.forward(params, x_in, Activation::None)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut hs = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let (inj, inject) = b.inject.forward(params, &e, Activation::None)?;
            let w = self.config.width;
            let g = &h * &inj.slice(ndarray::s![.., ..w]).mapv(|v| v + F::one())
                + inj.slice(ndarray::s![.., w..]);
            hs.push(h);
            let (mut a, fc1) = b.fc1.forward(params, &g, Activation::Relu)?;
            if let Some(mask) = masks.get(i) {
                a *= mask;
            }
            let (o, fc2) = b.fc2.forward(params, &a, Activation::None)?;
            h = g + &o;
            blocks.push(BlockTape {
                inject,
                fc1,
                fc2,
                h_in: hs.pop().unwrap(),
            });
        }
        let hr = h.mapv(|v| v.max(F::zero()));
        let (out, output) = self.output.forward(params, &hr, Activation::None)?;
        Ok((
            out,
            NetTape {
                m,
                time,
                input,
                blocks,
                h,
                output,
            },
        ))
    }

    /// Accumulate parameter gradients; returns the gradient w.r.t. `cond`.
    pub fn trunk_backward<F: Scalar>(
        &self,
        params: &mut ParamStore<F>,
        tape: &NetTape<F>,
        masks: &[Array2<F>],
        dout: Array2<F>,
    ) -> Array2<F> {
        let mut dh = self.output.backward(params, &tape.output, dout);
        relu_mask(&mut dh, &tape.h);
        let mut de = Array2::zeros(tape.m.dim());
        for (i, (b, bt)) in self.blocks.iter().zip(&tape.blocks).enumerate().rev() {
            let mut da = b.fc2.backward(params, &bt.fc2, dh.clone());
            if let Some(mask) = masks.get(i) {
                da *= mask;
            }
            let dg = b.fc1.backward(params, &bt.fc1, da) + &dh;
            let w = self.config.width;
            let gamma = bt.inject.output.slice(ndarray::s![.., ..w]);
            let mut dinj = Array2::zeros((dg.nrows(), 2 * w));
            dinj.slice_mut(ndarray::s![.., ..w])
                .assign(&(&dg * &bt.h_in));
            dinj.slice_mut(ndarray::s![.., w..]).assign(&dg);
            de += &b.inject.backward(params, &bt.inject, dinj);
            dh = &dg * &gamma.mapv(|v| v + F::one());
        }
        self.input.backward(params, &tape.input, dh);
        relu_mask(&mut de, &tape.m);
        self.time_proj.backward(params, &tape.time, de.clone());
        de
    }

    fn precondition<F: Scalar>(
        &self,
        params: &ParamStore<F>,
        schedule: &NoiseSchedule,
        x: &Array2<F>,
        sigmas: &[f64],
        cond: &Array2<F>,
        masks: &[Array2<F>],
    ) -> Result<(Array2<F>, NetTape<F>)> {
        if x.ncols() != self.latent_dim {
            return Err(Error::dims("denoiser input", self.latent_dim, x.ncols()));
        }
        if sigmas.len() != x.nrows() {
            return Err(Error::dims("sigmas", x.nrows(), sigmas.len()));
        }
        let temb = self.time.embed_batch::<F>(sigmas)?;
        let mut x_in = x.clone();
        scale_rows(
            &mut x_in,
            &sigmas.iter().map(|&s| schedule.c_in(s)).collect::<Vec<_>>(),
        );
        let (mut out, tape) = self.trunk(params, &x_in, &temb, cond, masks)?;
        scale_rows(
            &mut out,
            &sigmas
                .iter()
                .map(|&s| schedule.c_out(s))
                .collect::<Vec<_>>(),
        );
        let mut skip = x.clone();
        scale_rows(
            &mut skip,
            &sigmas
                .iter()
                .map(|&s| schedule.c_skip(s))
                .collect::<Vec<_>>(),
        );
        Ok((skip + &out, tape))
    }

    /// `D(x; sigma, c) = c_skip x + c_out F(c_in x; sigma, c)` row by row.
    pub fn denoise<F: Scalar>(
        &self,
        params: &ParamStore<F>,
        schedule: &NoiseSchedule,
        x: &Array2<F>,
        sigmas: &[f64],
        cond: &Array2<F>,
    ) -> Result<Array2<F>> {
        ensure_finite(x, "denoiser input")?;
        let (d, _) = self.precondition(params, schedule, x, sigmas, cond, &[])?;
        ensure_finite(&d, "denoiser output")?;
        Ok(d)
    }

    /// Weighted denoising loss on a batch with frozen randomness; with
    /// `need_grad` the gradients are accumulated into `params`.
    pub fn loss<F: Scalar>(
        &self,
        params: &mut ParamStore<F>,
        schedule: &NoiseSchedule,
        batch: &DiffusionBatch<F>,
        need_grad: bool,
    ) -> Result<F> {
        let (cond, ctape): (Array2<F>, CondTape<F>) =
            self.condition
                .forward(params, &batch.cond, &batch.dropped)?;
        let mut noisy = batch.noise.clone();
        scale_rows(&mut noisy, &batch.sigmas);
        noisy += &batch.x0;
        let (d, tape) =
            self.precondition(params, schedule, &noisy, &batch.sigmas, &cond, &batch.masks)?;
        let weights: Vec<F> = batch
            .sigmas
            .iter()
            .map(|&s| F::lit(schedule.loss_weight(s)))
            .collect();
        let (loss, mut dd) = mse_loss(&d, &batch.x0, &weights)?;
        if need_grad {
            scale_rows(
                &mut dd,
                &batch
                    .sigmas
                    .iter()
                    .map(|&s| schedule.c_out(s))
                    .collect::<Vec<_>>(),
            );
            let dcond = self.trunk_backward(params, &tape, &batch.masks, dd);
            self.condition.backward(params, &ctape, dcond);
        }
        Ok(loss)
    }
}

/// A trained denoiser. `params` holds the published (EMA) weights.
#[derive(Debug, Clone)]
pub struct DenoiserModel {
    pub net: DenoiserNet,
    pub params: ParamStore<f32>,
    pub schedule: NoiseSchedule,
}

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

impl DenoiserModel {
    /// Fresh model. Schedule constants are rounded to `f32` so a checkpoint
    /// reload reproduces the model exactly.
    pub fn new(
        latent_dim: usize,
        num_classes: usize,
        mode: ConditionMode,
        extra_width: usize,
        config: DenoiserConfig,
        schedule: NoiseSchedule,
        seed: u64,
    ) -> Result<Self> {
        let schedule = NoiseSchedule {
            sigma_min: quantize(schedule.sigma_min),
            sigma_max: quantize(schedule.sigma_max),
            sigma_data: quantize(schedule.sigma_data),
        };
        schedule.validate()?;
        let mut params = ParamStore::new();
        let net = DenoiserNet::new(
            &mut params,
            latent_dim,
            num_classes,
            mode,
            extra_width,
            config,
            seed,
        )?;
        Ok(Self {
            net,
            params,
            schedule,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.net.latent_dim
    }

    pub fn cond_width(&self) -> usize {
        self.net.config.cond_width
    }

    pub fn condition(&self) -> &ConditionSource {
        &self.net.condition
    }

    pub fn build_condition(
        &self,
        class_id: usize,
        subdomain_id: usize,
        rng: &mut StreamRng,
    ) -> Result<ConditionVector> {
        self.net
            .condition
            .build_condition(&self.params, class_id, subdomain_id, rng)
    }

    pub fn null_condition(&self) -> ConditionVector {
        self.net.condition.null_condition(&self.params)
    }

    /// Denoise a batch at a shared noise level; `cond` rows are condition vectors.
    pub fn denoise_batch(
        &self,
        x: &Array2<f32>,
        sigma: f64,
        cond: &Array2<f32>,
    ) -> Result<Array2<f32>> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidSigma(sigma));
        }
        self.net.denoise(
            &self.params,
            &self.schedule,
            x,
            &vec![sigma; x.nrows()],
            cond,
        )
    }

    pub fn precondition_denoise(
        &self,
        x_noisy: &[f32],
        sigma: f64,
        cond: &ConditionVector,
    ) -> Result<Vec<f32>> {
        if x_noisy.len() != self.latent_dim() {
            return Err(Error::dims(
                "noisy latent",
                self.latent_dim(),
                x_noisy.len(),
            ));
        }
        if cond.values.len() != self.cond_width() {
            return Err(Error::dims(
                "condition vector",
                self.cond_width(),
                cond.values.len(),
            ));
        }
        let x = Array2::from_shape_vec((1, x_noisy.len()), x_noisy.to_vec()).unwrap();
        let c = Array2::from_shape_vec((1, cond.values.len()), cond.values.clone()).unwrap();
        Ok(self
            .denoise_batch(&x, sigma, &c)?
            .into_raw_vec_and_offset()
            .0)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let cfg = &self.net.config;
        let cond = &self.net.condition;
        let key_code = match cond.semantic.as_ref().map(|s| s.key) {
            None => -1.0,
            Some(SemanticKey::Class) => 0.0,
            Some(SemanticKey::Subdomain) => 1.0,
        };
        let mut ck = Checkpoint::default();
        ck.push(Tensor::vector(
            "__meta__.denoiser",
            vec![
                self.net.latent_dim as f32,
                self.net.num_classes as f32,
                cfg.width as f32,
                cfg.depth as f32,
                cfg.cond_width as f32,
                cfg.embed_width as f32,
                cfg.time_dim as f32,
                cond.extra_width as f32,
                cond.mode.code(),
                key_code,
                cfg.dropout as f32,
                cond.subdomain_pool.len() as f32,
                cond.semantic.as_ref().map_or(0, |s| s.vectors.len()) as f32,
            ],
        ));
        ck.push(Tensor::vector(
            "__meta__.schedule",
            vec![
                self.schedule.sigma_min as f32,
                self.schedule.sigma_max as f32,
                self.schedule.sigma_data as f32,
            ],
        ));
        ck.push(Tensor::vector(
            "__meta__.fourier",
            self.net.time.freqs.clone(),
        ));
        for (k, pool) in cond.subdomain_pool.iter().enumerate() {
            ck.push(Tensor::matrix(format!("__pool__.{k}"), pool));
        }
        if let Some(sem) = &cond.semantic {
            for (i, v) in sem.vectors.iter().enumerate() {
                if let Some(v) = v {
                    ck.push(Tensor::vector(format!("__semantic__.{i}"), v.clone()));
                }
            }
        }
        ck.push_params(&self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.get("__meta__.denoiser")?.data;
        let sched = &ck.get("__meta__.schedule")?.data;
        if meta.len() != 13 || sched.len() != 3 {
            return Err(Error::Format("malformed denoiser metadata".into()));
        }
        let u = |i: usize| meta[i] as usize;
        let config = DenoiserConfig {
            width: u(2),
            depth: u(3),
            cond_width: u(4),
            embed_width: u(5),
            time_dim: u(6),
            dropout: meta[10] as f64,
        };
        let mode = ConditionMode::from_code(meta[8])?;
        let schedule = NoiseSchedule::new(sched[0] as f64, sched[1] as f64, sched[2] as f64)?;
        let mut model = Self::new(u(0), u(1), mode, u(7), config, schedule, 0)?;
        let freqs = ck.get("__meta__.fourier")?.data.clone();
        if freqs.len() != model.net.time.freqs.len() {
            return Err(Error::dims(
                "fourier frequencies",
                model.net.time.freqs.len(),
                freqs.len(),
            ));
        }
        model.net.time.freqs = freqs;
        let pools = (0..u(11))
            .map(|k| {
                ck.get(&format!("__pool__.{k}"))?
                    .to_matrix::<f32>()
                    .map(|m| {
                        if m.is_empty() {
                            Array2::zeros((0, u(7)))
                        } else {
                            m
                        }
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        model.net.condition.set_subdomain_pool(pools)?;
        if meta[9] >= 0.0 {
            let key = if meta[9] == 0.0 {
                SemanticKey::Class
            } else {
                SemanticKey::Subdomain
            };
            let vectors = (0..u(12))
                .map(|i| {
                    ck.get(&format!("__semantic__.{i}"))
                        .ok()
                        .map(|t| t.data.clone())
                })
                .collect();
            model.net.condition.set_semantic(SemanticVectors {
                key,
                width: u(7),
                vectors,
            })?;
        }
        ck.load_params(&mut model.params)?;
        Ok(model)
    }

    /// Content hash of the serialized checkpoint.
    pub fn id(&self) -> Result<String> {
        self.to_checkpoint().id()
    }
}
