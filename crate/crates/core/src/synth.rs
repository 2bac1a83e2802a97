//! Seeded paired-modality datasets with group-conditional bias.
//!
//! Each sample draws a group `g` of the bias attribute, a label `y ~ B(0.5)`
//! and a latent `u ~ N(s*y*1 + shift_g, noise_g^2 I)`. Features are
//!
//! ```text
//! image = A_img u + image_noise * e_img
//! text  = rho * A_txt u + (1 - rho) * e_txt
//! ```
//!
//! with fixed seeded projections `A_img`, `A_txt` and standard normal noise.
//! Sample `i` draws from its own ChaCha stream `i + 1` of the seed (stream 0
//! holds the projections), so any index range can be generated independently.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::contrastive::matched_cosines;
use crate::data::{partition_by_attribute, AttributeSchema, Dataset, Sample};
use crate::encoders::DualEncoder;
use crate::ot::{sinkhorn_distance, EmpiricalDistribution, SinkhornConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    pub latent_dim: usize,
    pub attributes: AttributeSchema,
    /// Attribute whose levels carry the shift and noise below; every other
    /// attribute is drawn uniformly and independently.
    pub bias_attribute: String,
    /// Per level of the bias attribute.
    pub group_proportions: Vec<f64>,
    /// Per level, a latent offset of length `latent_dim`.
    pub group_shift: Vec<Vec<f64>>,
    /// Per level, the latent standard deviation.
    pub group_noise_scale: Vec<f64>,
    pub label_signal_strength: f64,
    pub cross_modal_correlation: f64,
    #[serde(default = "default_image_noise")]
    pub image_noise: f64,
    pub seed: u64,
}

fn default_image_noise() -> f64 {
    0.1
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Error::config(format!("data.{name}"), msg);
        for (name, v) in [
            ("image_dim", self.image_dim),
            ("text_dim", self.text_dim),
            ("latent_dim", self.latent_dim),
        ] {
            if v == 0 {
                return Err(field(name, "must be positive".into()));
            }
        }
        let levels = self
            .attributes
            .attribute(&self.bias_attribute)
            .map_err(|_| field("bias_attribute", format!("`{}` is not in the schema", self.bias_attribute)))?
            .levels
            .len();
        let per_level = |name: &str, len: usize| {
            if len == levels {
                Ok(())
            } else {
                Err(field(name, format!("has {len} entries for {levels} levels")))
            }
        };
        per_level("group_proportions", self.group_proportions.len())?;
        per_level("group_shift", self.group_shift.len())?;
        per_level("group_noise_scale", self.group_noise_scale.len())?;
        if self.group_proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(field("group_proportions", "entries must be non-negative".into()));
        }
        let total: f64 = self.group_proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(field("group_proportions", format!("sums to {total}, not 1")));
        }
        if let Some(s) = self.group_shift.iter().find(|s| s.len() != self.latent_dim) {
            return Err(field(
                "group_shift",
                format!("vector of length {} but latent_dim is {}", s.len(), self.latent_dim),
            ));
        }
        if self.group_shift.iter().flatten().any(|v| !v.is_finite()) {
            return Err(field("group_shift", "entries must be finite".into()));
        }
        if self.group_noise_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(field("group_noise_scale", "entries must be positive".into()));
        }
        if !(self.label_signal_strength.is_finite() && self.label_signal_strength > 0.0) {
            return Err(field("label_signal_strength", "must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.cross_modal_correlation) {
            return Err(field("cross_modal_correlation", "must lie in [0, 1]".into()));
        }
        if !(self.image_noise.is_finite() && self.image_noise >= 0.0) {
            return Err(field("image_noise", "must be non-negative".into()));
        }
        Ok(())
    }
}

fn projection(rng: &mut ChaCha8Rng, rows: usize, latent: usize) -> Array2<f64> {
    let scale = 1.0 / (latent as f64).sqrt();
    Array2::from_shape_simple_fn((rows, latent), || scale * rng.sample::<f64, _>(StandardNormal))
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the cumulative total; take the last non-empty level
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let bias_pos = cfg.attributes.position(&cfg.bias_attribute)?;
    let mut proj_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a_img = projection(&mut proj_rng, cfg.image_dim, cfg.latent_dim);
    let a_txt = projection(&mut proj_rng, cfg.text_dim, cfg.latent_dim);
    let rho = cfg.cross_modal_correlation;

    let samples = (0..cfg.n_samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let attribute_values: Vec<usize> = cfg
                .attributes
                .attributes()
                .iter()
                .enumerate()
                .map(|(k, attr)| {
                    if k == bias_pos {
                        categorical(&mut rng, &cfg.group_proportions)
                    } else {
                        rng.random_range(0..attr.levels.len())
                    }
                })
                .collect();
            let g = attribute_values[bias_pos];
            let label = u8::from(rng.random_bool(0.5));
            let latent: Vec<f64> = (0..cfg.latent_dim)
                .map(|k| {
                    let z: f64 = rng.sample(StandardNormal);
                    cfg.label_signal_strength * f64::from(label)
                        + cfg.group_shift[g][k]
                        + cfg.group_noise_scale[g] * z
                })
                .collect();
            let image_features = a_img
                .rows()
                .into_iter()
                .map(|row| {
                    let z: f64 = rng.sample(StandardNormal);
                    dot(row.as_slice().expect("standard layout"), &latent) + cfg.image_noise * z
                })
                .collect();
            let text_features = a_txt
                .rows()
                .into_iter()
                .map(|row| {
                    let z: f64 = rng.sample(StandardNormal);
                    rho * dot(row.as_slice().expect("standard layout"), &latent) + (1.0 - rho) * z
                })
                .collect();
            Sample {
                id: format!("s{i:06}"),
                image_features,
                text_features,
                label,
                attribute_values,
            }
        })
        .collect();
    Dataset::new(cfg.attributes.clone(), cfg.image_dim, cfg.text_dim, samples)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matched image-text cosine of every sample under the encoders.
pub fn matched_similarities(ds: &Dataset, model: &DualEncoder) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let zi = model.image.forward(&ds.image_matrix(&idx))?;
    let zt = model.text.forward(&ds.text_matrix(&idx))?;
    matched_cosines(&zi, &zt)
}

fn sorted_uniform(mut values: Vec<f64>) -> Result<EmpiricalDistribution> {
    values.sort_by(f64::total_cmp);
    EmpiricalDistribution::uniform(values)
}

/// Debiased Sinkhorn divergence between the whole-dataset distribution of
/// matched cosines and each group's. Empty groups are skipped.
pub fn measure_group_gap(
    ds: &Dataset,
    model: &DualEncoder,
    attribute_name: &str,
    sinkhorn: &SinkhornConfig,
) -> Result<BTreeMap<usize, f64>> {
    let part = partition_by_attribute(ds, attribute_name)?;
    if ds.is_empty() {
        return Err(Error::Shape("cannot measure group gaps on an empty dataset".into()));
    }
    let cos = matched_similarities(ds, model)?;
    let cfg = SinkhornConfig {
        debias: true,
        ..*sinkhorn
    };
    // Supports are sorted so the result does not depend on sample order.
    let population = sorted_uniform(cos.clone())?;
    let mut gaps = BTreeMap::new();
    for (level, members) in part.groups.iter().enumerate() {
        if members.is_empty() {
            log::warn!("measure_group_gap: level {level} of `{attribute_name}` is empty; skipped");
            continue;
        }
        let group = sorted_uniform(members.iter().map(|&i| cos[i]).collect())?;
        gaps.insert(level, sinkhorn_distance(&population, &group, &cfg)?);
    }
    Ok(gaps)
}
