use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::RunConfig;
use super::train::{train_model, EpochEnd, EvalRecord, StepRecord, TrainOutcome};
use super::FINAL_CHECKPOINT;
use crate::data::{load_dataset, write_dataset, Dataset, DatasetSchema};
use crate::encoders::{
    load_checkpoint, optimizer_step, save_checkpoint, AdamConfig, Checkpoint, DualEncoder,
    OptimizerState, RngState,
};
use crate::metrics::{evaluate, read_report, write_report, EvaluationReport, Predictions};
use crate::synth::generate;
use crate::{Error, Result, FORMAT_VERSION};

/// Stream of the probe's minibatch shuffles.
const PROBE_STREAM: u64 = 2;

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];
pub const SCHEMA_FILE: &str = "schema.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Switches shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Adds wall-clock fields to logs and manifests.
    pub timestamps: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { timestamps: true }
    }
}

fn unix_time() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn header(cfg: &RunConfig) -> Value {
    json!({ "format_version": FORMAT_VERSION, "config_hash": cfg.hash() })
}

/// Contents of `manifest.json` next to the generated splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub counts: BTreeMap<String, usize>,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<f64>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Generates the synthetic dataset and writes the three splits, the schema
/// and a manifest into the data directory. Returns that directory.
pub fn cmd_generate(cfg: &RunConfig, opts: RunOptions) -> Result<PathBuf> {
    let ds = generate(&cfg.data.generator)?;
    let dir = cfg.data_dir();
    create_dir(&dir)?;
    let hash = cfg.hash();
    let counts = cfg.data.split.counts(ds.len());
    let mut start = 0;
    let mut manifest_counts = BTreeMap::new();
    for (name, count) in SPLIT_NAMES.iter().zip(counts) {
        let idx: Vec<usize> = (start..start + count).collect();
        start += count;
        write_dataset(&ds.select(&idx), dir.join(format!("{name}.jsonl")), Some(&hash))?;
        manifest_counts.insert(name.to_string(), count);
    }
    ds.dataset_schema().save(dir.join(SCHEMA_FILE))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_hash: hash,
        seed: cfg.seed,
        counts: manifest_counts,
        config: cfg.clone(),
        created_unix: opts.timestamps.then(unix_time),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&dir.join(MANIFEST_FILE), &text)?;
    log::info!("wrote {} samples to {}", ds.len(), dir.display());
    Ok(dir)
}

/// The three splits from the data directory.
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    let dir = cfg.data_dir();
    let schema = DatasetSchema::load(dir.join(SCHEMA_FILE))?;
    let load = |name: &str| load_dataset(dir.join(format!("{name}.jsonl")), &schema);
    Ok(Splits {
        train: load("train")?,
        val: load("val")?,
        test: load("test")?,
    })
}

fn level_names(ds: &Dataset, attribute: &str) -> Result<Vec<String>> {
    Ok(ds.schema.attribute(attribute)?.levels.clone())
}

fn step_json(s: &StepRecord, names: &[String], time: Option<f64>) -> Value {
    let terms: serde_json::Map<String, Value> = s
        .sinkhorn_terms
        .iter()
        .map(|(&level, &v)| (names[level].clone(), json!(v)))
        .collect();
    let mut v = json!({
        "step": s.step,
        "epoch": s.epoch,
        "clip_loss": s.clip_loss,
        "sinkhorn_terms": terms,
        "total": s.total,
    });
    if let Some(t) = time {
        v["time"] = json!(t);
    }
    v
}

fn eval_json(e: &EvalRecord, names: &[String]) -> Value {
    let gaps: serde_json::Map<String, Value> = e
        .group_gap
        .iter()
        .map(|(&level, &v)| (names[level].clone(), json!(v)))
        .collect();
    json!({ "epoch": e.epoch, "clip_loss": e.clip_loss, "group_gap": gaps })
}

fn write_jsonl(path: &Path, head: &Value, rows: impl IntoIterator<Item = Value>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |v: &Value| writeln!(w, "{v}").map_err(|e| Error::io(path, e));
    put(head)?;
    for row in rows {
        put(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn checkpoint_of(cfg: &RunConfig, end: &EpochEnd<'_>) -> Checkpoint {
    Checkpoint {
        format_version: FORMAT_VERSION,
        model: end.model.clone(),
        optimizer: end.optimizer.clone(),
        config_hash: cfg.hash(),
        rng_state: RngState::capture(end.batch_rng),
        epoch: end.epoch,
        step: end.step,
    }
}

/// Trains on the generated splits and writes `log.jsonl`, `eval.jsonl` and
/// the checkpoints under `<out>/train`.
pub fn cmd_train(cfg: &RunConfig, opts: RunOptions) -> Result<TrainOutcome> {
    let splits = load_splits(cfg)?;
    let dir = cfg.out_dir().join("train");
    create_dir(&dir)?;
    let names = level_names(&splits.train, &cfg.fair.attribute_name)?;
    let every = cfg.train.checkpoint_every as u64;
    let last = cfg.train.epochs as u64;
    let mut step_times = Vec::new();
    let mut step_mark = 0;

    let outcome = train_model(cfg, &splits.train, Some(&splits.val), |end| {
        if opts.timestamps {
            let now = unix_time();
            step_times.extend((step_mark..end.step).map(|_| now));
            step_mark = end.step;
        }
        if every > 0 && end.epoch % every == 0 {
            let path = dir.join(format!("checkpoint_epoch_{:03}.bin", end.epoch));
            save_checkpoint(&checkpoint_of(cfg, end), path)?;
        }
        if end.epoch == last {
            save_checkpoint(&checkpoint_of(cfg, end), dir.join(FINAL_CHECKPOINT))?;
        }
        if let Some(e) = end.eval {
            let total: f64 = e.group_gap.values().sum();
            log::info!("epoch {}: val clip {:.5}, group gap sum {:.6}", e.epoch, e.clip_loss, total);
        }
        Ok(())
    })?;

    let head = header(cfg);
    write_jsonl(
        &dir.join("log.jsonl"),
        &head,
        outcome
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| step_json(s, &names, step_times.get(i).copied())),
    )?;
    write_jsonl(
        &dir.join("eval.jsonl"),
        &head,
        outcome.evals.iter().map(|e| eval_json(e, &names)),
    )?;
    Ok(outcome)
}

/// Unit-normalized rows; a zero row is an error.
fn normalize_rows(mut m: Array2<f64>, side: &'static str) -> Result<Array2<f64>> {
    for (row, mut r) in m.axis_iter_mut(Axis(0)).enumerate() {
        let norm = r.dot(&r).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm { side, row });
        }
        r /= norm;
    }
    Ok(m)
}

/// Normalized image embeddings of every sample.
pub fn image_embeddings(model: &DualEncoder, ds: &Dataset) -> Result<Array2<f64>> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    normalize_rows(model.image.forward(&ds.image_matrix(&idx))?, "image")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression head on frozen features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl LogisticProbe {
    /// Fits from zero with minibatch Adam on mean cross-entropy plus
    /// `l2 / 2 * |w|^2`.
    pub fn fit(features: &Array2<f64>, labels: &[u8], cfg: &RunConfig) -> Result<Self> {
        let p = &cfg.probe;
        let dim = features.ncols();
        let mut params = vec![0.0; dim + 1];
        let adam = AdamConfig {
            learning_rate: p.learning_rate,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut state = OptimizerState::new(adam, &[&params]);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(PROBE_STREAM);
        let mut order: Vec<usize> = (0..features.nrows()).collect();
        let mut grad = vec![0.0; dim + 1];
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(p.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in chunk {
                    let x = features.row(i);
                    let z = params[dim] + x.iter().zip(&params).map(|(a, w)| a * w).sum::<f64>();
                    let err = sigmoid(z) - f64::from(labels[i]);
                    for (g, a) in grad.iter_mut().zip(x.iter()) {
                        *g += err * a;
                    }
                    grad[dim] += err;
                }
                let n = chunk.len() as f64;
                for k in 0..dim {
                    grad[k] = grad[k] / n + p.l2 * params[k];
                }
                grad[dim] /= n;
                optimizer_step(&mut [&mut params], &[&grad], &mut state)?;
            }
        }
        let bias = params.pop().expect("bias slot");
        Ok(Self {
            weights: Array1::from(params),
            bias,
        })
    }

    pub fn predict(&self, features: &Array2<f64>) -> Vec<f64> {
        features.dot(&self.weights).iter().map(|z| sigmoid(z + self.bias)).collect()
    }
}

/// One report per configured attribute.
fn reports_for(
    cfg: &RunConfig,
    ds: &Dataset,
    scores: &[f64],
    dir: &Path,
) -> Result<Vec<EvaluationReport>> {
    let mut out = Vec::new();
    for attr in cfg.report_attributes() {
        let levels = ds.levels_of(&attr)?;
        let names = level_names(ds, &attr)?;
        let preds = Predictions::new(
            scores.to_vec(),
            ds.labels(),
            levels,
            names.len(),
            cfg.probe.threshold,
        )?;
        let mut report = evaluate(&preds, &attr)?.with_level_names(&names);
        report.config_hash = cfg.hash();
        report.model = cfg.train.mode.as_str().to_string();
        write_report(dir, &report)?;
        out.push(report);
    }
    Ok(out)
}

/// Fits a logistic probe on frozen train-split image embeddings and writes
/// one report per attribute for the test split under `<out>/probe`.
pub fn cmd_probe(cfg: &RunConfig) -> Result<Vec<EvaluationReport>> {
    let ckpt = load_checkpoint(cfg.checkpoint_path())?;
    let splits = load_splits(cfg)?;
    let train_x = image_embeddings(&ckpt.model, &splits.train)?;
    let probe = LogisticProbe::fit(&train_x, &splits.train.labels(), cfg)?;
    let scores = probe.predict(&image_embeddings(&ckpt.model, &splits.test)?);
    reports_for(cfg, &splits.test, &scores, &cfg.out_dir().join("probe"))
}

/// Text-side class prompts for zero-shot scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPrompts {
    pub negative: Vec<f64>,
    pub positive: Vec<f64>,
}

impl ClassPrompts {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Per-class mean text features.
    pub fn class_means(ds: &Dataset) -> Result<Self> {
        let mut sums = [vec![0.0; ds.text_dim], vec![0.0; ds.text_dim]];
        let mut counts = [0usize; 2];
        for s in &ds.samples {
            let c = usize::from(s.label == 1);
            counts[c] += 1;
            for (acc, v) in sums[c].iter_mut().zip(&s.text_features) {
                *acc += v;
            }
        }
        if counts.contains(&0) {
            return Err(Error::Metric("class prompts need both labels in the training split".into()));
        }
        let [neg, pos] = sums;
        let mean = |v: Vec<f64>, n: usize| v.into_iter().map(|x| x / n as f64).collect();
        Ok(Self {
            negative: mean(neg, counts[0]),
            positive: mean(pos, counts[1]),
        })
    }
}

/// Probability of the positive class: a two-way softmax over prompt cosines
/// divided by the temperature.
pub fn zeroshot_scores(
    model: &DualEncoder,
    ds: &Dataset,
    prompts: &ClassPrompts,
    temperature: f64,
) -> Result<Vec<f64>> {
    let rows = prompts.negative.len();
    if prompts.positive.len() != rows {
        return Err(Error::Shape("class prompts differ in length".into()));
    }
    let stacked = Array2::from_shape_vec(
        (2, rows),
        prompts.negative.iter().chain(&prompts.positive).copied().collect(),
    )
    .map_err(|e| Error::Shape(e.to_string()))?;
    let text = normalize_rows(model.text.forward(&stacked)?, "text")?;
    if text.row(0) == text.row(1) {
        log::warn!("class prompts embed identically; every score is 0.5");
    }
    let cos = image_embeddings(model, ds)?.dot(&text.t());
    Ok(cos
        .rows()
        .into_iter()
        .map(|r| sigmoid((r[1] - r[0]) / temperature))
        .collect())
}

/// Zero-shot classification of the test split by prompt similarity, written
/// under `<out>/zeroshot`.
pub fn cmd_zeroshot(cfg: &RunConfig) -> Result<Vec<EvaluationReport>> {
    let ckpt = load_checkpoint(cfg.checkpoint_path())?;
    let splits = load_splits(cfg)?;
    let prompts = match &cfg.probe.prompts {
        Some(p) => ClassPrompts::load(p)?,
        None => ClassPrompts::class_means(&splits.train)?,
    };
    let scores = zeroshot_scores(&ckpt.model, &splits.test, &prompts, cfg.model.temperature)?;
    reports_for(cfg, &splits.test, &scores, &cfg.out_dir().join("zeroshot"))
}

/// One metric of one attribute, baseline against candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub attribute: String,
    pub metric: String,
    pub baseline: Option<f64>,
    pub candidate: Option<f64>,
    /// True on every row of an attribute whose candidate ES-AUC is higher.
    pub es_auc_improved: bool,
}

impl ComparisonRow {
    pub fn delta(&self) -> Option<f64> {
        Some(self.candidate? - self.baseline?)
    }
}

/// Rows for one attribute: dpd, deodds, auc, es_auc, then each group AUC.
pub fn compare_reports(baseline: &EvaluationReport, candidate: &EvaluationReport) -> Result<Vec<ComparisonRow>> {
    let attr = &baseline.attribute_name;
    if &candidate.attribute_name != attr {
        return Err(Error::Mismatch(format!(
            "reports are for `{attr}` and `{}`",
            candidate.attribute_name
        )));
    }
    let levels = |r: &EvaluationReport| r.groups.iter().map(|g| g.level.clone()).collect::<Vec<_>>();
    if levels(baseline) != levels(candidate) {
        return Err(Error::Mismatch(format!("reports for `{attr}` have different levels")));
    }
    let improved = candidate.es_auc > baseline.es_auc;
    let row = |metric: String, b: Option<f64>, c: Option<f64>| ComparisonRow {
        attribute: attr.clone(),
        metric,
        baseline: b,
        candidate: c,
        es_auc_improved: improved,
    };
    let mut rows = vec![
        row("dpd".into(), Some(baseline.dpd), Some(candidate.dpd)),
        row("deodds".into(), Some(baseline.deodds), Some(candidate.deodds)),
        row("auc".into(), Some(baseline.auc), Some(candidate.auc)),
        row("es_auc".into(), Some(baseline.es_auc), Some(candidate.es_auc)),
    ];
    for (b, c) in baseline.groups.iter().zip(&candidate.groups) {
        rows.push(row(format!("auc_{}", b.level), b.auc, c.auc));
    }
    Ok(rows)
}

/// CSV in percent with a `#` header line.
pub fn comparison_csv(cfg: &RunConfig, baseline_model: &str, candidate_model: &str, rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# format_version={FORMAT_VERSION} config_hash={} baseline={baseline_model} candidate={candidate_model}",
        cfg.hash()
    );
    out.push_str("attribute,metric,baseline,candidate,delta,es_auc_improved\n");
    let pct = |v: Option<f64>| v.map(|x| format!("{:.4}", 100.0 * x)).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.attribute,
            r.metric,
            pct(r.baseline),
            pct(r.candidate),
            pct(r.delta()),
            r.es_auc_improved
        );
    }
    out
}

/// Compares the reports in `report.baseline` and `report.candidate` for
/// every configured attribute and writes `<out>/compare/comparison.csv`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<ComparisonRow>> {
    let dir_of = |p: &Option<PathBuf>, field: &str| {
        p.clone()
            .ok_or_else(|| Error::config(field, "compare needs a report directory"))
    };
    let base_dir = dir_of(&cfg.report.baseline, "report.baseline")?;
    let cand_dir = dir_of(&cfg.report.candidate, "report.candidate")?;
    let mut rows = Vec::new();
    let mut models = (String::new(), String::new());
    for attr in cfg.report_attributes() {
        let b = read_report(&base_dir, &attr)?;
        let c = read_report(&cand_dir, &attr)?;
        rows.extend(compare_reports(&b, &c)?);
        models = (b.model, c.model);
    }
    let dir = cfg.out_dir().join("compare");
    create_dir(&dir)?;
    write_file(&dir.join("comparison.csv"), &comparison_csv(cfg, &models.0, &models.1, &rows))?;
    Ok(rows)
}
