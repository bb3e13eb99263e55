//! Adam optimization with warm-up schedules, token-budget batching, gate
//! trajectory logging, and the four training modes.

use crate::datapipe::{Dataset, Vocab};
use crate::error::{Error, Result};
use crate::io::VisionEncodingStore;
use crate::model::{AnyModel, GateValue, VisionEncodingSet};
use crate::numerics::{Rng, Tape, Tensor};
use crate::{EOS_ID, PAD_ID};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ── learning-rate schedule ───────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    #[default]
    None,
    InverseSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub floor_lr: f64,
    pub decay: Decay,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Approximate token budget per batch (source plus target tokens).
    pub batch_tokens: usize,
    /// Global-norm gradient clipping; off by default.
    pub grad_clip: Option<f64>,
    /// Gate trajectory sampling interval in steps.
    pub log_every: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            peak_lr: 7e-4,
            warmup_steps: 4000,
            floor_lr: 1e-7,
            decay: Decay::None,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            epochs: 20,
            batch_tokens: 256,
            grad_clip: None,
            log_every: 50,
        }
    }
}

/// Learning rate at an optimizer step (step 0 is before any update).
/// Warm-up is linear from `floor_lr` to `peak_lr`; at `step == warmup_steps`
/// the rate is exactly `peak_lr` under either decay mode.
pub fn lr_at_step(opt: &OptimizerConfig, step: u64) -> f64 {
    if step < opt.warmup_steps {
        let frac = step as f64 / opt.warmup_steps as f64;
        opt.floor_lr + (opt.peak_lr - opt.floor_lr) * frac
    } else {
        match opt.decay {
            Decay::None => opt.peak_lr,
            Decay::InverseSqrt => {
                opt.peak_lr * (opt.warmup_steps as f64 / step as f64).sqrt()
            }
        }
    }
}

// ── Adam ─────────────────────────────────────────────────────────────────

/// First/second moment estimates plus the update count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

/// One Adam update over every trainable parameter. Frozen parameters are
/// never read or written, so their bits cannot drift.
pub fn adam_step(
    model: &mut AnyModel,
    state: &mut AdamState,
    opt: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - opt.beta1.powi(t as i32);
    let bc2 = 1.0 - opt.beta2.powi(t as i32);

    if let Some(clip) = opt.grad_clip {
        let mut sq = 0.0;
        for (_, p) in model.params().iter() {
            if p.trainable {
                sq += p.grad.data().iter().map(|g| g * g).sum::<f64>();
            }
        }
        let norm = sq.sqrt();
        if norm > clip {
            let scale = clip / norm;
            for (_, p) in model.params_mut().iter_mut() {
                if p.trainable {
                    for g in p.grad.data_mut() {
                        *g *= scale;
                    }
                }
            }
        }
    }

    for (name, p) in model.params_mut().iter_mut() {
        if !p.trainable {
            continue;
        }
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
        for i in 0..p.value.len() {
            let g = p.grad.data()[i];
            let mi = opt.beta1 * m.data()[i] + (1.0 - opt.beta1) * g;
            let vi = opt.beta2 * v.data()[i] + (1.0 - opt.beta2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + opt.eps);
            p.value.data_mut()[i] -= update;
        }
        p.value.quantize_in_place();
    }
    Ok(())
}

// ── training loop ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Text-only base model, everything trainable.
    Base,
    /// Adapter training on the caption/text mixture; keep the last epoch.
    Pretrain,
    /// Adapter training on translation triplets; keep the best validation BLEU.
    Finetune,
    /// Fine-tune data with the pre-training schedule; selection as fine-tune.
    Direct,
}

#[derive(Debug, Clone)]
pub struct GateSample {
    pub step: u64,
    pub epoch: usize,
    pub values: Vec<GateValue>,
}

/// Gate trajectory as CSV, one row per adapter per sample.
pub fn gates_csv(samples: &[GateSample]) -> String {
    let mut out = String::from("step,epoch,layer,gamma_a,gamma_f\n");
    for s in samples {
        for g in &s.values {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.step, s.epoch, g.layer, g.gamma_a, g.gamma_f
            ));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub mode: TrainMode,
    pub opt: OptimizerConfig,
    pub seed: u64,
    /// Optional hard cap on optimizer steps across all epochs.
    pub max_steps: Option<u64>,
    /// Echo per-step losses to stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: AnyModel,
    pub optimizer: AdamState,
    /// (step, batch loss) at every optimizer step.
    pub losses: Vec<(u64, f64)>,
    pub gates: Vec<GateSample>,
    pub steps: u64,
    pub best_val_bleu: Option<f64>,
}

impl TrainRun {
    pub fn first_loss(&self) -> f64 {
        self.losses.first().map(|x| x.1).unwrap_or(f64::NAN)
    }

    pub fn last_loss(&self) -> f64 {
        self.losses.last().map(|x| x.1).unwrap_or(f64::NAN)
    }

    pub fn losses_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (s, l) in &self.losses {
            out.push_str(&format!("{s},{l}\n"));
        }
        out
    }
}

/// Source ids for the model: plain encoding.
pub fn encode_src(vocab: &Vocab, tokens: &[String]) -> Vec<usize> {
    vocab.encode(tokens)
}

/// Target ids end with `</s>` so decoding learns to terminate.
pub fn encode_tgt(vocab: &Vocab, tokens: &[String]) -> Vec<usize> {
    let mut ids = vocab.encode(tokens);
    ids.push(EOS_ID);
    ids
}

fn resolve_images(
    store: &VisionEncodingStore,
    ids: &[String],
    dim: usize,
) -> Result<VisionEncodingSet> {
    if ids.is_empty() {
        return Ok(VisionEncodingSet::empty(dim));
    }
    if store.dim() != dim {
        return Err(Error::config(format!(
            "vision store dimension {} != model vision_dim {dim}",
            store.dim()
        )));
    }
    store.encoding_set(ids)
}

/// Greedy-decode a dataset and score corpus BLEU4 against the references.
pub fn validation_bleu(
    model: &AnyModel,
    vocab: &Vocab,
    data: &Dataset,
    store: &VisionEncodingStore,
) -> Result<f64> {
    let dim = model.cfg().vision_dim;
    let mut hyps = Vec::with_capacity(data.len());
    let mut refs = Vec::with_capacity(data.len());
    for r in &data.records {
        let images = if model.is_gated() {
            resolve_images(store, &r.images, dim)?
        } else {
            VisionEncodingSet::empty(dim)
        };
        let src = encode_src(vocab, &r.src);
        let out = model.greedy_decode(&src, &images, model.cfg().max_len)?;
        let toks: Vec<String> = out
            .into_iter()
            .filter(|&t| t != EOS_ID && t != PAD_ID)
            .map(|t| vocab.token(t).to_string())
            .collect();
        hyps.push(toks);
        refs.push(r.tgt.clone());
    }
    Ok(crate::eval::bleu4(&hyps, &refs))
}

pub fn train(
    mut model: AnyModel,
    vocab: &Vocab,
    data: &Dataset,
    valid: Option<&Dataset>,
    store: &VisionEncodingStore,
    opts: &TrainOptions,
) -> Result<TrainRun> {
    if data.is_empty() {
        return Err(Error::data("training dataset is empty"));
    }
    match (opts.mode, model.is_gated()) {
        (TrainMode::Base, true) => {
            return Err(Error::config("mode base expects a text-only model"))
        }
        (TrainMode::Pretrain | TrainMode::Finetune | TrainMode::Direct, false) => {
            return Err(Error::config("adapter training expects a gated model"))
        }
        _ => {}
    }
    if vocab.len() > model.cfg().vocab_size {
        return Err(Error::config(format!(
            "vocab has {} entries, model vocab_size is {}",
            vocab.len(),
            model.cfg().vocab_size
        )));
    }

    let dim = model.cfg().vision_dim;
    let rng_root = Rng::new(opts.seed).derive("train");
    let mut state = AdamState::default();
    let mut losses = Vec::new();
    let mut gates = Vec::new();
    let mut step: u64 = 0;
    let select_best = matches!(opts.mode, TrainMode::Finetune | TrainMode::Direct);
    let mut best: Option<(f64, AnyModel, AdamState)> = None;

    'epochs: for epoch in 0..opts.opt.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng_root.derive(&format!("shuffle-epoch{epoch}")).shuffle(&mut order);

        let mut cursor = 0;
        while cursor < order.len() {
            // fill a batch up to the token budget, at least one record
            let mut batch = Vec::new();
            let mut tokens = 0usize;
            while cursor < order.len() {
                let r = &data.records[order[cursor]];
                let cost = r.src.len() + r.tgt.len() + 1;
                if !batch.is_empty() && tokens + cost > opts.opt.batch_tokens {
                    break;
                }
                batch.push(order[cursor]);
                tokens += cost;
                cursor += 1;
            }

            // token-weighted mean of per-record losses on one tape
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let total_tgt: usize = batch
                .iter()
                .map(|&i| data.records[i].tgt.len() + 1)
                .sum();
            let mut acc = None;
            for &i in &batch {
                let r = &data.records[i];
                // a text-only model never touches the store
                let images = if model.is_gated() {
                    resolve_images(store, &r.images, dim)?
                } else {
                    VisionEncodingSet::empty(dim)
                };
                let src = encode_src(vocab, &r.src);
                let tgt = encode_tgt(vocab, &r.tgt);
                let loss = model.loss_on_tape(&mut tape, &bound, &src, &tgt, &images, PAD_ID)?;
                let w = tgt.len() as f64 / total_tgt as f64;
                let weighted = tape.scale_const(loss, w)?;
                acc = Some(match acc {
                    None => weighted,
                    Some(a) => tape.add(a, weighted)?,
                });
            }
            let batch_loss = acc.expect("non-empty batch");
            let loss_value = tape.value(batch_loss).item();
            if !loss_value.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss {loss_value} at step {}",
                    step + 1
                )));
            }
            tape.backward(batch_loss)?;
            for (name, p) in model.params_mut().iter_mut() {
                if p.trainable {
                    p.grad = tape.grad(bound.var(name)?);
                }
            }

            let lr = lr_at_step(&opts.opt, step);
            adam_step(&mut model, &mut state, &opts.opt, lr)?;
            step += 1;
            losses.push((step, loss_value));
            if opts.verbose && step % opts.opt.log_every == 0 {
                eprintln!("step {step} epoch {epoch} loss {loss_value:.6} lr {lr:.2e}");
            }
            if model.is_gated() && (step == 1 || step % opts.opt.log_every == 0) {
                gates.push(GateSample { step, epoch, values: model.gate_values() });
            }
            if opts.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
        }

        if select_best {
            if let Some(v) = valid {
                let bleu = validation_bleu(&model, vocab, v, store)?;
                let better = best.as_ref().map_or(true, |(b, _, _)| bleu > *b);
                if better {
                    best = Some((bleu, model.clone(), state.clone()));
                }
            }
        }
    }

    if model.is_gated() && gates.last().map(|g| g.step) != Some(step) && step > 0 {
        let epoch = opts.opt.epochs.saturating_sub(1);
        gates.push(GateSample { step, epoch, values: model.gate_values() });
    }

    let (model, optimizer, best_val_bleu) = match best {
        Some((b, m, s)) => (m, s, Some(b)),
        None => (model, state, None),
    };
    Ok(TrainRun { model, optimizer, losses, gates, steps: step, best_val_bleu })
}
