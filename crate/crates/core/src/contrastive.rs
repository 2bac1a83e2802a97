//! Image-text similarity, symmetric InfoNCE, and the fairness-regularized loss.
//!
//! All gradients are analytic. The fairness term reads only the diagonal of
//! the cosine matrix (matched pairs), so its gradient reaches each embedding
//! row through that row's own pair.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::ot::{sinkhorn_eval, EmpiricalDistribution, SinkhornConfig};
use crate::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub image: Array2<f64>,
    pub text: Array2<f64>,
    pub already_normalized: bool,
}

impl EmbeddingBatch {
    pub fn new(image: Array2<f64>, text: Array2<f64>) -> Result<Self> {
        if image.dim() != text.dim() {
            return Err(Error::Shape(format!(
                "image embeddings {:?} vs text embeddings {:?}",
                image.dim(),
                text.dim()
            )));
        }
        Ok(Self {
            image,
            text,
            already_normalized: false,
        })
    }

    /// Marks rows as unit-norm; checked to 1e-6.
    pub fn normalized(image: Array2<f64>, text: Array2<f64>) -> Result<Self> {
        let mut b = Self::new(image, text)?;
        for (side, m) in [("image", &b.image), ("text", &b.text)] {
            for (row, r) in m.rows().into_iter().enumerate() {
                if (r.dot(&r).sqrt() - 1.0).abs() > 1e-6 {
                    return Err(Error::Shape(format!("{side} row {row} is not unit norm")));
                }
            }
        }
        b.already_normalized = true;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.image.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.image.nrows() == 0
    }
}

/// Unit-normalized rows plus the norms needed to backpropagate through the
/// normalization.
#[derive(Debug, Clone)]
struct Normalized {
    image: Array2<f64>,
    text: Array2<f64>,
    image_norms: Array1<f64>,
    text_norms: Array1<f64>,
}

fn normalize_rows(m: &Array2<f64>, side: &'static str, skip: bool) -> Result<(Array2<f64>, Array1<f64>)> {
    if skip {
        return Ok((m.clone(), Array1::ones(m.nrows())));
    }
    let mut out = m.clone();
    let mut norms = Array1::zeros(m.nrows());
    for (row, (mut r, n)) in out.rows_mut().into_iter().zip(norms.iter_mut()).enumerate() {
        let norm = r.dot(&r).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::ZeroNorm { side, row });
        }
        r /= norm;
        *n = norm;
    }
    Ok((out, norms))
}

fn normalize(batch: &EmbeddingBatch) -> Result<Normalized> {
    let (image, image_norms) = normalize_rows(&batch.image, "image", batch.already_normalized)?;
    let (text, text_norms) = normalize_rows(&batch.text, "text", batch.already_normalized)?;
    Ok(Normalized {
        image,
        text,
        image_norms,
        text_norms,
    })
}

/// Backward of row normalization: `dz = (dzhat - zhat (zhat . dzhat)) / |z|`.
fn normalize_backward(unit: &Array2<f64>, norms: &Array1<f64>, grad_unit: &Array2<f64>) -> Array2<f64> {
    let mut out = grad_unit.clone();
    for ((mut o, u), &n) in out.rows_mut().into_iter().zip(unit.rows()).zip(norms) {
        let proj = u.dot(&o);
        o.scaled_add(-proj, &u);
        o /= n;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    /// Cosine similarities divided by the temperature (the logits).
    pub entries: Array2<f64>,
    /// Raw cosine similarities.
    pub cosine: Array2<f64>,
    pub temperature: f64,
}

impl SimilarityMatrix {
    /// Builds a matrix directly from logits, e.g. for tests.
    pub fn from_logits(entries: Array2<f64>, temperature: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Shape(format!("similarity matrix must be square, got {:?}", entries.dim())));
        }
        Ok(Self {
            cosine: &entries * temperature,
            entries,
            temperature,
        })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::config("temperature", "must be positive"))
    }
}

pub fn similarity(batch: &EmbeddingBatch, temperature: f64) -> Result<SimilarityMatrix> {
    check_temperature(temperature)?;
    if batch.is_empty() {
        return Err(Error::Shape("empty embedding batch".into()));
    }
    let z = normalize(batch)?;
    Ok(similarity_of(&z, temperature))
}

fn similarity_of(z: &Normalized, temperature: f64) -> SimilarityMatrix {
    let cosine = z.image.dot(&z.text.t());
    SimilarityMatrix {
        entries: &cosine / temperature,
        cosine,
        temperature,
    }
}

fn softmax_row(row: ArrayView1<f64>) -> (Array1<f64>, f64) {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = row.mapv(|v| (v - m).exp());
    let s = e.sum();
    (e / s, m + s.ln())
}

/// Symmetric cross-entropy over the logits with matched pairs on the
/// diagonal, and its gradient with respect to every logit.
pub fn clip_loss(m: &SimilarityMatrix) -> (f64, Array2<f64>) {
    let logits = &m.entries;
    let n = logits.nrows();
    let scale = 0.5 / n as f64;
    let mut grad = Array2::zeros((n, n));
    let mut image_to_text = 0.0;
    let mut text_to_image = 0.0;
    for i in 0..n {
        let (p, lse) = softmax_row(logits.row(i));
        image_to_text += lse - logits[[i, i]];
        grad.row_mut(i).scaled_add(scale, &p);
        grad[[i, i]] -= scale;
    }
    for j in 0..n {
        let (p, lse) = softmax_row(logits.column(j));
        text_to_image += lse - logits[[j, j]];
        grad.column_mut(j).scaled_add(scale, &p);
        grad[[j, j]] -= scale;
    }
    (scale * (image_to_text + text_to_image), grad)
}

/// Uniform distribution over the matched-pair cosine similarities.
pub fn diagonal_distribution(m: &SimilarityMatrix) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::uniform(m.cosine.diag().to_vec())
}

/// Cosine similarity of each image row with the text row at the same index.
pub fn matched_cosines(image: &Array2<f64>, text: &Array2<f64>) -> Result<Vec<f64>> {
    let batch = EmbeddingBatch::new(image.clone(), text.clone())?;
    Ok(diagonal_cosines(&normalize(&batch)?))
}

fn diagonal_cosines(z: &Normalized) -> Vec<f64> {
    z.image
        .rows()
        .into_iter()
        .zip(z.text.rows())
        .map(|(a, b)| a.dot(&b))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairClipConfig {
    pub lambda_fair: f64,
    pub attribute_name: String,
    pub group_batch_size: usize,
    pub sinkhorn: SinkhornConfig,
}

impl Default for FairClipConfig {
    fn default() -> Self {
        Self {
            lambda_fair: 1e-7,
            attribute_name: String::new(),
            group_batch_size: 32,
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

impl FairClipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_fair.is_finite() && self.lambda_fair >= 0.0) {
            return Err(Error::config("fair.lambda_fair", "must be non-negative"));
        }
        if self.group_batch_size == 0 {
            return Err(Error::config("fair.group_batch_size", "must be positive"));
        }
        self.sinkhorn.validate()
    }
}

/// Gradients with respect to one batch's raw (unnormalized) embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrads {
    pub image: Array2<f64>,
    pub text: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairClipOutput {
    pub loss: f64,
    pub clip_loss: f64,
    /// One Sinkhorn term per group level, in level order.
    pub sinkhorn_terms: BTreeMap<usize, f64>,
    pub batch_grads: BatchGrads,
    pub group_grads: BTreeMap<usize, BatchGrads>,
}

impl FairClipOutput {
    pub fn sinkhorn_total(&self) -> f64 {
        self.sinkhorn_terms.values().sum()
    }
}

/// `clip_loss(similarity(batch)) + lambda * sum_levels sinkhorn(diag(batch), diag(group))`.
///
/// Group batches contribute only their diagonal cosines; their own
/// contrastive loss is not added.
pub fn fairclip_loss(
    batch: &EmbeddingBatch,
    group_batches: &BTreeMap<usize, EmbeddingBatch>,
    cfg: &FairClipConfig,
    temperature: f64,
) -> Result<FairClipOutput> {
    cfg.validate()?;
    check_temperature(temperature)?;
    if batch.is_empty() {
        return Err(Error::Shape("empty embedding batch".into()));
    }
    let z = normalize(batch)?;
    let sim = similarity_of(&z, temperature);
    let (clip, grad_logits) = clip_loss(&sim);

    // d loss / d zhat through the logits M = zhat_I zhat_T^T / tau
    let mut g_image = grad_logits.dot(&z.text) / temperature;
    let mut g_text = grad_logits.t().dot(&z.image) / temperature;

    let lambda = cfg.lambda_fair;
    let main_dist = EmpiricalDistribution::uniform(diagonal_cosines(&z))?;
    let mut sinkhorn_terms = BTreeMap::new();
    let mut group_grads = BTreeMap::new();
    for (&level, gb) in group_batches {
        if gb.is_empty() {
            return Err(Error::Shape(format!("group batch {level} is empty")));
        }
        if gb.image.ncols() != batch.image.ncols() {
            return Err(Error::Shape(format!("group batch {level} has a different embedding width")));
        }
        let gz = normalize(gb)?;
        let group_dist = EmpiricalDistribution::uniform(diagonal_cosines(&gz))?;
        let eval = sinkhorn_eval(&main_dist, &group_dist, &cfg.sinkhorn)?;
        sinkhorn_terms.insert(level, eval.value);

        let mut gg_image = Array2::zeros(gz.image.dim());
        let mut gg_text = Array2::zeros(gz.text.dim());
        if lambda != 0.0 {
            // d cos_i / d zhat_Ii = zhat_Ti and vice versa
            add_diag_grad(&mut g_image, &z.text, &eval.grad_a, lambda);
            add_diag_grad(&mut g_text, &z.image, &eval.grad_a, lambda);
            add_diag_grad(&mut gg_image, &gz.text, &eval.grad_b, lambda);
            add_diag_grad(&mut gg_text, &gz.image, &eval.grad_b, lambda);
        }
        group_grads.insert(
            level,
            BatchGrads {
                image: normalize_backward(&gz.image, &gz.image_norms, &gg_image),
                text: normalize_backward(&gz.text, &gz.text_norms, &gg_text),
            },
        );
    }
    let total_sinkhorn: f64 = sinkhorn_terms.values().sum();
    Ok(FairClipOutput {
        loss: clip + lambda * total_sinkhorn,
        clip_loss: clip,
        sinkhorn_terms,
        batch_grads: BatchGrads {
            image: normalize_backward(&z.image, &z.image_norms, &g_image),
            text: normalize_backward(&z.text, &z.text_norms, &g_text),
        },
        group_grads,
    })
}

fn add_diag_grad(target: &mut Array2<f64>, partner: &Array2<f64>, coeffs: &[f64], lambda: f64) {
    for ((mut t, p), &c) in target
        .axis_iter_mut(Axis(0))
        .zip(partner.rows())
        .zip(coeffs)
    {
        t.scaled_add(lambda * c, &p);
    }
}
