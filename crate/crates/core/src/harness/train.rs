use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Mode, RunConfig};
use crate::contrastive::{fairclip_loss, EmbeddingBatch};
use crate::data::{partition_by_attribute, sample_batch, sample_group_batch, BatchSpec, Dataset};
use crate::encoders::{optimizer_step, DualEncoder, DualGrads, OptimizerState};
use crate::synth::measure_group_gap;
use crate::{Error, Result};

/// Stream of the seed used for encoder initialization.
const INIT_STREAM: u64 = 0;
/// Stream that draws the main batches; its state is what checkpoints carry.
const BATCH_STREAM: u64 = 1;
/// Group batches at step `s` come from stream `GROUP_STREAM_BASE + s`, so
/// they never perturb the main batch sequence.
const GROUP_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub clip_loss: f64,
    pub sinkhorn_terms: BTreeMap<usize, f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub epoch: u64,
    pub clip_loss: f64,
    pub group_gap: BTreeMap<usize, f64>,
}

/// State visible to the end-of-epoch hook.
pub struct EpochEnd<'a> {
    pub epoch: u64,
    pub step: u64,
    pub model: &'a DualEncoder,
    pub optimizer: &'a OptimizerState,
    pub batch_rng: &'a ChaCha8Rng,
    pub eval: Option<&'a EvalRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DualEncoder,
    pub optimizer: OptimizerState,
    pub batch_rng: ChaCha8Rng,
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

pub fn init_model(cfg: &RunConfig, image_dim: usize, text_dim: usize) -> Result<DualEncoder> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    DualEncoder::init(
        cfg.model.kind,
        image_dim,
        text_dim,
        cfg.model.hidden_dim,
        cfg.model.embed_dim,
        &mut rng,
    )
}

fn encode(model: &DualEncoder, ds: &Dataset, idx: &[usize]) -> Result<(Array2<f64>, Array2<f64>, EmbeddingBatch)> {
    let xi = ds.image_matrix(idx);
    let xt = ds.text_matrix(idx);
    let batch = EmbeddingBatch::new(model.image.forward(&xi)?, model.text.forward(&xt)?)?;
    Ok((xi, xt, batch))
}

/// Overflowing embeddings mean the loss at this step cannot be finite.
fn check_finite(batch: &EmbeddingBatch, step: u64) -> Result<()> {
    if batch.image.iter().chain(batch.text.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { step })
    }
}

/// Contrastive loss of the whole dataset as one batch, plus the group gap.
pub fn evaluate_split(cfg: &RunConfig, model: &DualEncoder, ds: &Dataset, epoch: u64) -> Result<EvalRecord> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let (_, _, batch) = encode(model, ds, &idx)?;
    let plain = crate::contrastive::FairClipConfig {
        lambda_fair: 0.0,
        ..cfg.fair.clone()
    };
    let out = fairclip_loss(&batch, &BTreeMap::new(), &plain, cfg.model.temperature)?;
    let group_gap = measure_group_gap(ds, model, &cfg.fair.attribute_name, &cfg.fair.sinkhorn)?;
    Ok(EvalRecord {
        epoch,
        clip_loss: out.clip_loss,
        group_gap,
    })
}

/// Runs the configured number of epochs from a fresh initialization.
///
/// Each step draws a batch, encodes it, and in `fairclip` mode also draws and
/// encodes one batch per non-empty level of the fairness attribute. Labels
/// are never read.
pub fn train_model(
    cfg: &RunConfig,
    train: &Dataset,
    val: Option<&Dataset>,
    mut on_epoch_end: impl FnMut(&EpochEnd<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Shape("training split is empty".into()));
    }
    let mut model = init_model(cfg, train.image_dim, train.text_dim)?;
    let adam = cfg.train.adam();
    let mut optimizer = OptimizerState::new(adam, &model.param_blocks());
    let spec = BatchSpec::new(cfg.train.batch_size, cfg.fair.group_batch_size, cfg.seed)?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    batch_rng.set_stream(BATCH_STREAM);

    let part = partition_by_attribute(train, &cfg.fair.attribute_name)?;
    let fair = cfg.train.mode == Mode::Fairclip;
    if fair {
        for (level, g) in part.groups.iter().enumerate() {
            if g.is_empty() {
                log::warn!(
                    "level {level} of `{}` has no training samples; its term is skipped",
                    cfg.fair.attribute_name
                );
            }
        }
    }
    let lambda = cfg.fair.lambda_fair;
    let steps_per_epoch = train.len().div_ceil(cfg.train.batch_size);
    let mut steps = Vec::with_capacity(steps_per_epoch * cfg.train.epochs);
    let mut evals = Vec::new();
    let mut step: u64 = 0;

    for epoch in 1..=cfg.train.epochs as u64 {
        for _ in 0..steps_per_epoch {
            let idx = sample_batch(train, &spec, &mut batch_rng)?;
            let (xi, xt, batch) = encode(&model, train, &idx)?;
            check_finite(&batch, step)?;

            let mut group_inputs = Vec::new();
            let mut group_batches = BTreeMap::new();
            if fair {
                let mut grng = ChaCha8Rng::seed_from_u64(cfg.seed);
                grng.set_stream(GROUP_STREAM_BASE + step);
                for level in 0..part.num_levels() {
                    if part.group(level).is_empty() {
                        continue;
                    }
                    let gidx = sample_group_batch(&part, level, spec.group_batch_size, &mut grng)?;
                    let (gxi, gxt, gb) = encode(&model, train, &gidx)?;
                    check_finite(&gb, step)?;
                    group_inputs.push((level, gxi, gxt));
                    group_batches.insert(level, gb);
                }
            }

            let out = fairclip_loss(&batch, &group_batches, &cfg.fair, cfg.model.temperature)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            let mut grads = DualGrads {
                image: model.image.backward(&xi, &out.batch_grads.image)?.0,
                text: model.text.backward(&xt, &out.batch_grads.text)?.0,
            };
            if lambda != 0.0 {
                for (level, gxi, gxt) in &group_inputs {
                    let g = &out.group_grads[level];
                    grads.image.accumulate(&model.image.backward(gxi, &g.image)?.0);
                    grads.text.accumulate(&model.text.backward(gxt, &g.text)?.0);
                }
            }
            optimizer_step(&mut model.param_blocks_mut(), &grads.blocks(), &mut optimizer)?;
            steps.push(StepRecord {
                step,
                epoch,
                clip_loss: out.clip_loss,
                total: out.loss,
                sinkhorn_terms: out.sinkhorn_terms,
            });
            step += 1;
        }

        let eval = match val {
            Some(v) if !v.is_empty() && cfg.train.eval_every > 0 && epoch % cfg.train.eval_every as u64 == 0 => {
                Some(evaluate_split(cfg, &model, v, epoch)?)
            }
            _ => None,
        };
        on_epoch_end(&EpochEnd {
            epoch,
            step,
            model: &model,
            optimizer: &optimizer,
            batch_rng: &batch_rng,
            eval: eval.as_ref(),
        })?;
        evals.extend(eval);
    }
    Ok(TrainOutcome {
        model,
        optimizer,
        batch_rng,
        steps,
        evals,
    })
}
