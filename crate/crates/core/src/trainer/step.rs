use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{collapse_metrics, CollapseMetrics};
use super::optim::{adamw_step, check_finite, ema_update, AdamHyper, AdamState};
use super::schedule::TrainConfig;
use crate::config::RunConfig;
use crate::ingest::EcgRecord;
use crate::masking::{sample_mask_with, split_by_mask, MaskSpec};
use crate::model::{Checkpoint, EmaEncoder, JepaModel, ModelConfig, ModelParams, RngState};
use crate::par::Exec;
use crate::tensor::{Graph, Real, Tensor};
use crate::{Error, Result};

/// Stacks equally long records into `[B, leads, T]`.
pub fn signals_tensor<T: Real>(batch: &[EcgRecord]) -> Result<Tensor<T>> {
    let first = batch.first().ok_or_else(|| Error::Config("empty batch".into()))?;
    let (leads, len) = (first.leads, first.len());
    let mut data = Vec::with_capacity(batch.len() * leads * len);
    for r in batch {
        if r.leads != leads || r.len() != len {
            return Err(Error::shape(
                "signals_tensor",
                format!("{leads} x {len}"),
                format!("{} x {}", r.leads, r.len()),
            ));
        }
        data.extend(r.samples.iter().map(|&x| T::c(x as f64)));
    }
    Tensor::new(vec![batch.len(), leads, len], data)
}

/// Outcome of one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Zero-based index of the step that produced this report.
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub wd: f64,
    pub momentum: f64,
    pub collapse: Option<CollapseMetrics>,
}

/// Student, teacher and optimizer state under a single owner.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub model: JepaModel,
    pub params: ModelParams<T>,
    pub ema: EmaEncoder<T>,
    pub config: TrainConfig,
    /// Completed steps.
    pub step: u64,
    pub encoder_opt: AdamState<T>,
    pub predictor_opt: AdamState<T>,
    pub rng: ChaCha8Rng,
    pub exec: Exec,
}

impl<T: Real> Trainer<T> {
    /// Fresh parameters drawn from the training seed; θ̄ starts as a copy of θ.
    pub fn new(model: &ModelConfig, config: &TrainConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (model, params) = JepaModel::init::<T, _>(model, &mut rng)?;
        let ema = EmaEncoder::from_encoder(&params.encoder);
        Ok(Self {
            encoder_opt: AdamState::zeros_like(&params.encoder),
            predictor_opt: AdamState::zeros_like(&params.predictor),
            model,
            params,
            ema,
            config: config.clone(),
            step: 0,
            rng,
            exec,
        })
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.config.beta1,
            beta2: self.config.beta2,
            eps: self.config.eps,
        }
    }

    /// Teacher embeddings at the masked positions, `[B, k, dim]`, taken after
    /// the teacher's final norm.
    pub fn teacher_targets(&self, signals: &Tensor<T>, mask: &MaskSpec) -> Result<Tensor<T>> {
        let mut g = Graph::with_exec(self.exec);
        let w = self.ema.params().bind(&mut g, false);
        let x = g.constant(signals.clone());
        let full = self.model.encoder.forward(&mut g, &w, x, None)?;
        let t = g.gather_tokens(full.patches.tokens, &mask.masked)?;
        debug_assert!(!g.requires_grad(t));
        Ok(g.value(t).clone())
    }

    /// Student prediction loss for a fixed mask, without updating anything.
    pub fn loss_with_mask(&self, batch: &[EcgRecord], mask: &MaskSpec) -> Result<f64> {
        let signals = signals_tensor::<T>(batch)?;
        let targets = self.teacher_targets(&signals, mask)?;
        let mut g = Graph::with_exec(self.exec);
        let (loss, _, _) = self.student_loss(&mut g, &signals, mask, targets, false)?;
        Ok(g.value(loss).item().f64())
    }

    fn student_loss(
        &self,
        g: &mut Graph<T>,
        signals: &Tensor<T>,
        mask: &MaskSpec,
        targets: Tensor<T>,
        grad: bool,
    ) -> Result<(crate::tensor::Var, Vec<crate::tensor::Var>, Vec<crate::tensor::Var>)> {
        let x = g.constant(signals.clone());
        let ew = self.params.encoder.bind(g, grad);
        let tokens = self.model.encoder.patchify(g, &ew, x)?;
        let (context, _, target_pos) = split_by_mask(g, &tokens, mask)?;
        let enc = self.model.encoder.encode(g, &ew, &context, None)?;
        let pw = self.params.predictor.bind(g, grad);
        let pred = self.model.predictor.predict(g, &pw, &enc.patches, &target_pos)?;
        let target = g.constant(targets);
        let loss = g.l1_loss(pred, target)?;
        Ok((loss, ew, pw))
    }

    /// Samples a mask from the trainer's generator and takes one step.
    pub fn jepa_step(&mut self, batch: &[EcgRecord], with_metrics: bool) -> Result<StepReport> {
        let n = batch.first().map_or(0, |r| r.len()) / self.model.config.patch_size;
        let ratio = (self.config.mask_min, self.config.mask_max);
        let mask = sample_mask_with(n, batch.len(), ratio, &mut self.rng)?;
        self.jepa_step_with_mask(batch, &mask, with_metrics)
    }

    /// One optimization step on a given mask: teacher targets, student
    /// prediction, L1 loss, AdamW on θ and φ, then the EMA update of θ̄.
    pub fn jepa_step_with_mask(
        &mut self,
        batch: &[EcgRecord],
        mask: &MaskSpec,
        with_metrics: bool,
    ) -> Result<StepReport> {
        let step = self.step;
        let signals = signals_tensor::<T>(batch)?;
        let targets = self.teacher_targets(&signals, mask)?;
        let collapse = with_metrics.then(|| {
            let d = targets.last_dim();
            collapse_metrics(&targets.to_f64_vec(), d)
        });

        let mut g = Graph::with_exec(self.exec);
        let (loss, ew, pw) = self.student_loss(&mut g, &signals, mask, targets, true)?;
        let loss_value = g.value(loss).item().f64();
        if !loss_value.is_finite() {
            return Err(Error::Divergence { step, loss: loss_value });
        }
        g.backward(loss)?;
        let enc_grads = self.params.encoder.grads(&mut g, &ew);
        let pred_grads = self.params.predictor.grads(&mut g, &pw);
        check_finite(&self.params.encoder, &enc_grads)?;
        check_finite(&self.params.predictor, &pred_grads)?;

        let (lr, wd, momentum) = (
            self.config.lr_at(step),
            self.config.wd_at(step),
            self.config.ema_momentum_at(step),
        );
        let hyper = self.hyper();
        adamw_step(&mut self.params.encoder, &enc_grads, &mut self.encoder_opt, hyper, step + 1, lr, wd)?;
        adamw_step(&mut self.params.predictor, &pred_grads, &mut self.predictor_opt, hyper, step + 1, lr, wd)?;
        ema_update(&mut self.ema.0, &self.params.encoder, momentum);
        self.step += 1;
        Ok(StepReport {
            step,
            loss: loss_value,
            lr,
            wd,
            momentum,
            collapse,
        })
    }

    /// Snapshot carrying the model config plus the given run metadata
    /// (caller-supplied `model.*` keys are superseded).
    pub fn checkpoint(&self, meta: Vec<(String, String)>) -> Checkpoint<T> {
        let mut all = crate::config::model_meta(&self.model.config);
        all.extend(meta.into_iter().filter(|(k, _)| !k.starts_with("model.")));
        let mut tensors = self.params.encoder.named_tensors("");
        tensors.extend(self.params.predictor.named_tensors(""));
        tensors.extend(self.ema.params().named_tensors("ema/"));
        for (set, opt) in [
            (&self.params.encoder, &self.encoder_opt),
            (&self.params.predictor, &self.predictor_opt),
        ] {
            for (i, p) in set.iter().enumerate() {
                let shape = p.value.shape().to_vec();
                let m = Tensor::new(shape.clone(), opt.m[i].clone()).expect("moment shape");
                let v = Tensor::new(shape, opt.v[i].clone()).expect("moment shape");
                tensors.push((format!("adam_m/{}", p.name), m));
                tensors.push((format!("adam_v/{}", p.name), v));
            }
        }
        Checkpoint {
            step: self.step,
            rng: Some(RngState::capture(&self.rng)),
            meta: all,
            tensors,
        }
    }

    /// Restores a trainer saved by [`Trainer::checkpoint`]. The model config
    /// is read from the checkpoint's `model.*` metadata.
    pub fn resume(ck: &Checkpoint<T>, config: &TrainConfig, exec: Exec) -> Result<Self> {
        let run = RunConfig::from_entries(
            ck.meta
                .iter()
                .filter(|(k, _)| k.starts_with("model."))
                .map(|(k, v)| (k.as_str(), v.as_str())),
        )?;
        let mut t = Self::new(&run.model, config, exec)?;
        let missing = |set: &str, names: Vec<String>| {
            if names.is_empty() {
                Ok(())
            } else {
                Err(Error::Checkpoint(format!("{set} missing {}", names.join(", "))))
            }
        };
        missing("student", t.params.encoder.load_from(&ck.tensors))?;
        missing("student", t.params.predictor.load_from(&ck.tensors))?;
        missing("ema", t.ema.0.load_from(&ck.group("ema/")))?;
        for (set, opt) in [
            (&t.params.encoder, &mut t.encoder_opt),
            (&t.params.predictor, &mut t.predictor_opt),
        ] {
            for (i, p) in set.iter().enumerate() {
                for (prefix, dst) in [("adam_m/", &mut opt.m[i]), ("adam_v/", &mut opt.v[i])] {
                    let src = ck
                        .tensor(&format!("{prefix}{}", p.name))
                        .filter(|s| s.shape() == p.value.shape())
                        .ok_or_else(|| Error::Checkpoint(format!("missing {prefix}{}", p.name)))?;
                    dst.copy_from_slice(src.data());
                }
            }
        }
        t.step = ck.step;
        t.rng = ck
            .rng
            .ok_or_else(|| Error::Checkpoint("checkpoint has no generator state".into()))?
            .restore();
        Ok(t)
    }
}
