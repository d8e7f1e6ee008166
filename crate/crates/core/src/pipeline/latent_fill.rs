use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::sampler::{AugmentationSet, Provenance};

/// `lambda * a + (1 - lambda) * b + noise_std * eps`.
fn mix(a: &[f32], b: &[f32], lambda: f64, noise_std: f64, rng: &mut StreamRng) -> Vec<f32> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let e: f64 = StandardNormal.sample(rng);
            (lambda * x as f64 + (1.0 - lambda) * y as f64 + noise_std * e) as f32
        })
        .collect()
}

/// Latent Filling: mix two distinct ground-truth latents of one class with
/// `lambda ~ U(0, 1)` and add isotropic Gaussian noise.
pub fn latent_fill_augment<V: AsRef<[f32]>>(
    latents: &[V],
    class_id: u32,
    subdomain_id: u32,
    n: usize,
    noise_std: f64,
    rng: &mut StreamRng,
    seed: u64,
) -> Result<AugmentationSet> {
    if latents.len() < 2 {
        return Err(Error::InsufficientSupport(format!(
            "latent filling needs two latents of class {class_id} in subdomain {subdomain_id}, found {}",
            latents.len()
        )));
    }
    let d = latents[0].as_ref().len();
    if let Some(bad) = latents.iter().find(|v| v.as_ref().len() != d) {
        return Err(Error::dims("latent filling input", d, bad.as_ref().len()));
    }
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let i = rng.random_range(0..latents.len());
        let mut j = rng.random_range(0..latents.len() - 1);
        if j >= i {
            j += 1;
        }
        let lambda: f64 = rng.random();
        data.extend(mix(
            latents[i].as_ref(),
            latents[j].as_ref(),
            lambda,
            noise_std,
            rng,
        ));
    }
    Ok(AugmentationSet {
        vectors: Array2::from_shape_vec((n, d), data).unwrap(),
        labels: vec![(class_id, subdomain_id); n],
        provenance: Provenance {
            method: format!("latent_fill(noise_std={noise_std})"),
            checkpoint_id: None,
            sampler: None,
            seed,
        },
    })
}
