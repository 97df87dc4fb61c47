use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::auc::macro_auc;
use super::config::{EvalConfig, EvalMode, Pooling};
use super::crops::{eval_crops, train_crop};
use super::dataset::LabeledDataset;
use super::head::ClassifierHead;
use crate::config::RunConfig;
use crate::ingest::{EcgRecord, Fold};
use crate::model::{Checkpoint, DropoutCtx, JepaModel, ModelConfig, ParamSet};
use crate::par::{self, Exec};
use crate::tensor::{Graph, Real};
use crate::trainer::{adamw_step, signals_tensor, AdamHyper, AdamState};
use crate::{Error, Result};

/// A pretrained (or randomly initialized) encoder.
#[derive(Clone, Debug)]
pub struct Backbone<T> {
    pub model: JepaModel,
    pub encoder: ParamSet<T>,
}

fn model_from_meta<T: Real>(ck: &Checkpoint<T>) -> Result<ModelConfig> {
    let run = RunConfig::from_entries(
        ck.meta
            .iter()
            .filter(|(k, _)| k.starts_with("model."))
            .map(|(k, v)| (k.as_str(), v.as_str())),
    )?;
    Ok(run.model)
}

fn load_encoder<T: Real>(ck: &Checkpoint<T>, prefix: &str) -> Result<Backbone<T>> {
    let cfg = model_from_meta(ck)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (model, mut params) = JepaModel::init::<T, _>(&cfg, &mut rng)?;
    let missing = params.encoder.load_from(&ck.group(prefix));
    if !missing.is_empty() {
        return Err(Error::Checkpoint(format!("encoder tensors missing: {}", missing.join(", "))));
    }
    Ok(Backbone {
        model,
        encoder: params.encoder,
    })
}

impl<T: Real> Backbone<T> {
    /// Encoder from a pre-training checkpoint: the EMA teacher when `use_ema`,
    /// the student otherwise.
    pub fn from_checkpoint(ck: &Checkpoint<T>, use_ema: bool) -> Result<Self> {
        load_encoder(ck, if use_ema { "ema/" } else { "" })
    }

    /// Freshly initialized encoder, the baseline for pre-training gains.
    pub fn random(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, params) = JepaModel::init::<T, _>(cfg, &mut rng)?;
        Ok(Self {
            model,
            encoder: params.encoder,
        })
    }
}

/// Best-validation state of one downstream run.
#[derive(Clone, Debug)]
pub struct FittedHead<T> {
    pub mode: EvalMode,
    pub encoder: ParamSet<T>,
    pub head: ClassifierHead<T>,
    pub best_val_auc: f64,
    pub best_step: u64,
}

impl<T: Real> FittedHead<T> {
    /// Artifact holding the encoder and head, reusable as a two-stage start.
    pub fn to_checkpoint(&self, model: &ModelConfig) -> Checkpoint<T> {
        let mut meta = crate::config::model_meta(model);
        meta.push(("head.mode".into(), self.mode.to_string()));
        meta.push(("head.pooling".into(), self.head.pooling.to_string()));
        meta.push(("head.best_val_auc".into(), format!("{:?}", self.best_val_auc)));
        let mut tensors = self.encoder.named_tensors("");
        tensors.extend(self.head.params.named_tensors(""));
        Checkpoint {
            step: self.best_step,
            rng: None,
            meta,
            tensors,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let backbone = load_encoder(ck, "")?;
        let field = |k: &str| {
            ck.meta_value(k)
                .ok_or_else(|| Error::Checkpoint(format!("head artifact lacks {k}")))
        };
        let mode: EvalMode = field("head.mode")?.parse()?;
        let pooling: Pooling = field("head.pooling")?.parse()?;
        let best_val_auc = field("head.best_val_auc")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad head.best_val_auc".into()))?;
        let out = ck
            .tensor("head.out.weight")
            .ok_or_else(|| Error::Checkpoint("head artifact lacks head.out.weight".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut head = ClassifierHead::new(pooling, backbone.model.encoder.dim(), out.last_dim(), &mut rng);
        let missing = head.params.load_from(&ck.tensors);
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!("head tensors missing: {}", missing.join(", "))));
        }
        Ok(Self {
            mode,
            encoder: backbone.encoder,
            head,
            best_val_auc,
            best_step: ck.step,
        })
    }
}

fn crop_len(cfg: &EvalConfig, rate: f64) -> (usize, usize) {
    (
        (cfg.crop_seconds * rate).round() as usize,
        (cfg.stride_seconds * rate).round() as usize,
    )
}

/// Crop-averaged class probabilities for one record: sigmoid per crop, then
/// the mean over crops.
pub fn predict_record<T: Real>(
    model: &JepaModel,
    encoder: &ParamSet<T>,
    head: &ClassifierHead<T>,
    rec: &EcgRecord,
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<Vec<f64>> {
    let (len, stride) = crop_len(cfg, rec.sampling_rate);
    let crops = eval_crops(rec, len, stride);
    let mut g = Graph::with_exec(exec);
    let ew = encoder.bind(&mut g, false);
    let hw = head.params.bind(&mut g, false);
    let x = g.constant(signals_tensor::<T>(&crops)?);
    let enc = model.encoder.forward(&mut g, &ew, x, None)?;
    let logits = head.forward(&mut g, &hw, &enc, None)?;
    let classes = head.classes();
    let mut probs = vec![0.0; classes];
    for row in g.value(logits).data().chunks_exact(classes) {
        for (p, z) in probs.iter_mut().zip(row) {
            *p += crate::tensor::sigmoid(*z).f64();
        }
    }
    probs.iter_mut().for_each(|p| *p /= crops.len() as f64);
    Ok(probs)
}

/// Predictions for many records, parallel over records.
pub fn predict_records<T: Real>(
    model: &JepaModel,
    encoder: &ParamSet<T>,
    head: &ClassifierHead<T>,
    records: &[&EcgRecord],
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    par::map(exec, records, |_, r| predict_record(model, encoder, head, r, cfg, Exec::Sequential))
        .into_iter()
        .collect()
}

fn fold_auc<T: Real>(
    model: &JepaModel,
    encoder: &ParamSet<T>,
    head: &ClassifierHead<T>,
    data: &LabeledDataset,
    idx: &[usize],
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let records: Vec<&EcgRecord> = idx.iter().map(|&i| data.record(i)).collect();
    let probs = predict_records(model, encoder, head, &records, cfg, exec)?;
    let labels: Vec<Vec<u8>> = idx.iter().map(|&i| data.labels(i).to_vec()).collect();
    Ok((macro_auc(&probs, &labels)?, probs))
}

/// Trains a head (and, outside linear mode, the encoder) with per-class
/// binary cross-entropy, returning the state with the best validation macro
/// AUC. Two-stage runs must start from a linear-mode `prior`.
pub fn train_head<T: Real>(
    backbone: &Backbone<T>,
    data: &LabeledDataset,
    cfg: &EvalConfig,
    seed: u64,
    prior: Option<&FittedHead<T>>,
    exec: Exec,
) -> Result<FittedHead<T>> {
    cfg.validate()?;
    let model = &backbone.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut encoder, mut head) = match (cfg.mode, prior) {
        (EvalMode::TwoStage, None) => return Err(Error::MissingLinearArtifact),
        (_, Some(p)) => {
            if p.head.pooling != cfg.pooling || p.head.classes() != data.classes() {
                return Err(Error::Config("prior head does not match pooling or class count".into()));
            }
            (p.encoder.clone(), p.head.clone())
        }
        (_, None) => (
            backbone.encoder.clone(),
            ClassifierHead::new(cfg.pooling, model.encoder.dim(), data.classes(), &mut rng),
        ),
    };
    let train = data.indices(Fold::Train);
    let val = data.indices(Fold::Val);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("dataset needs training and validation folds".into()));
    }
    let hyper = AdamHyper {
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let mut head_opt = AdamState::zeros_like(&head.params);
    let mut enc_opt = AdamState::zeros_like(&encoder);
    let train_encoder = cfg.trains_encoder();

    let (best_val_auc, _) = fold_auc(model, &encoder, &head, data, &val, cfg, exec)?;
    let mut best = FittedHead {
        mode: cfg.mode,
        encoder: encoder.clone(),
        head: head.clone(),
        best_val_auc,
        best_step: 0,
    };
    for step in 0..cfg.steps {
        let mut crops = Vec::with_capacity(cfg.batch_size);
        let mut labels = Vec::with_capacity(cfg.batch_size * data.classes());
        for _ in 0..cfg.batch_size {
            let i = train[rng.random_range(0..train.len())];
            let rec = data.record(i);
            let (len, _) = crop_len(cfg, rec.sampling_rate);
            crops.push(train_crop(rec, len, &mut rng));
            labels.extend(data.labels(i).iter().map(|&l| T::c(l as f64)));
        }
        let mut g = Graph::with_exec(exec);
        let ew = encoder.bind(&mut g, train_encoder);
        let hw = head.params.bind(&mut g, true);
        let x = g.constant(signals_tensor::<T>(&crops)?);
        let enc_drop = train_encoder.then(|| DropoutCtx {
            p: cfg.dropout,
            rng: &mut rng,
        });
        let enc = model.encoder.forward(&mut g, &ew, x, enc_drop)?;
        let logits = head.forward(
            &mut g,
            &hw,
            &enc,
            Some(DropoutCtx {
                p: cfg.dropout,
                rng: &mut rng,
            }),
        )?;
        let loss = g.bce_with_logits(logits, &labels)?;
        let loss_value = g.value(loss).item().f64();
        if !loss_value.is_finite() {
            return Err(Error::Divergence { step, loss: loss_value });
        }
        g.backward(loss)?;
        let lr = cfg.lr_at(step);
        let head_grads = head.params.grads(&mut g, &hw);
        if train_encoder {
            let enc_grads = encoder.grads(&mut g, &ew);
            adamw_step(&mut encoder, &enc_grads, &mut enc_opt, hyper, step + 1, lr, cfg.weight_decay)?;
        }
        adamw_step(&mut head.params, &head_grads, &mut head_opt, hyper, step + 1, lr, cfg.weight_decay)?;

        let done = step + 1;
        if done % cfg.eval_every == 0 || done == cfg.steps {
            let (auc, _) = fold_auc(model, &encoder, &head, data, &val, cfg, exec)?;
            log::debug!("eval step {done} val auc {auc:.4} loss {loss_value:.4}");
            if auc > best.best_val_auc {
                best = FittedHead {
                    mode: cfg.mode,
                    encoder: encoder.clone(),
                    head: head.clone(),
                    best_val_auc: auc,
                    best_step: done,
                };
            }
        }
    }
    Ok(best)
}

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub val_auc: f64,
    pub test_auc: f64,
    pub best_step: u64,
}

/// Per-seed test AUCs with their mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub mode: String,
    pub seeds: Vec<SeedResult>,
    pub aucs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl EvalSummary {
    pub fn new(mode: EvalMode, seeds: Vec<SeedResult>) -> Self {
        let aucs: Vec<f64> = seeds.iter().map(|s| s.test_auc).collect();
        let n = aucs.len() as f64;
        let mean = if aucs.is_empty() { f64::NAN } else { aucs.iter().sum::<f64>() / n };
        let std = if aucs.len() < 2 {
            0.0
        } else {
            (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self {
            mode: mode.to_string(),
            seeds,
            aucs,
            mean,
            std,
        }
    }
}

/// Test-fold macro AUC and per-record probabilities of a fitted head.
pub fn evaluate_test<T: Real>(
    model: &JepaModel,
    fitted: &FittedHead<T>,
    data: &LabeledDataset,
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<(f64, Vec<(String, Vec<f64>)>)> {
    let test = data.indices(Fold::Test);
    let (auc, probs) = fold_auc(model, &fitted.encoder, &fitted.head, data, &test, cfg, exec)?;
    let rows = test
        .iter()
        .zip(probs)
        .map(|(&i, p)| (data.record(i).record_id.clone(), p))
        .collect();
    Ok((auc, rows))
}

/// Everything one seed produced.
#[derive(Clone, Debug)]
pub struct SeedRun<T> {
    pub result: SeedResult,
    pub fitted: FittedHead<T>,
    pub predictions: Vec<(String, Vec<f64>)>,
}

/// Trains and tests one head per seed. `priors[i]` seeds the i-th run in
/// two-stage mode.
pub fn run_seeds<T: Real>(
    backbone: &Backbone<T>,
    data: &LabeledDataset,
    cfg: &EvalConfig,
    seeds: &[u64],
    priors: Option<&[FittedHead<T>]>,
    exec: Exec,
) -> Result<(EvalSummary, Vec<SeedRun<T>>)> {
    let mut runs = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let prior = priors.and_then(|p| p.get(i));
        let fitted = train_head(backbone, data, cfg, seed, prior, exec)?;
        let (test_auc, predictions) = evaluate_test(&backbone.model, &fitted, data, cfg, exec)?;
        runs.push(SeedRun {
            result: SeedResult {
                seed,
                val_auc: fitted.best_val_auc,
                test_auc,
                best_step: fitted.best_step,
            },
            fitted,
            predictions,
        });
    }
    let summary = EvalSummary::new(cfg.mode, runs.iter().map(|r| r.result.clone()).collect());
    Ok((summary, runs))
}
