//! The toy encoder-decoder translation transformer and its gated multimodal
//! augmentation: vision projection, perceiver resampler, and tanh-gated
//! vision-text cross-attention adapters interleaved with the frozen layers.

pub mod config;
pub mod store_params;

pub use config::{InsertionSite, ModelConfig};
pub use store_params::{Bound, ParamStore};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tape, Tensor, Var};
use crate::{BOS_ID, EOS_ID};

const INIT_SIGMA: f64 = 0.02;
const MASK_NEG: f64 = -1e30;

/// A set of cached vision encodings (one vector per image, length `dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct VisionEncodingSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl VisionEncodingSet {
    pub fn empty(dim: usize) -> Self {
        VisionEncodingSet { dim, vectors: Vec::new() }
    }

    pub fn push(&mut self, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::data(format!(
                "vision encoding length {} != expected {}",
                v.len(),
                self.dim
            )));
        }
        self.vectors.push(v);
        Ok(())
    }

    pub fn from_vectors(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let mut s = Self::empty(dim);
        for v in vectors {
            s.push(v)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Row matrix fed to the vision projection. An empty set is represented
    /// as a single zero encoding, which is also the text-only input protocol.
    fn as_rows(&self) -> Tensor {
        if self.vectors.is_empty() {
            Tensor::zeros(vec![1, self.dim])
        } else {
            let data: Vec<f64> = self.vectors.iter().flatten().copied().collect();
            Tensor::new(vec![self.vectors.len(), self.dim], data).expect("validated rows")
        }
    }
}

/// Tanh-mapped gate readings, ordered from the input side.
#[derive(Debug, Clone, PartialEq)]
pub struct GateValue {
    /// 1-based adapter index, 1 = closest to the input.
    pub layer: usize,
    /// Adapter name, e.g. "enc0" or "dec1".
    pub name: String,
    pub gamma_a: f64,
    pub gamma_f: f64,
}

#[derive(Debug, Clone)]
pub struct BaseModel {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

#[derive(Debug, Clone)]
pub struct GatedMMTModel {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

/// Either model kind; the trainer, evaluator, and checkpoints work over this.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Base(BaseModel),
    Gated(GatedMMTModel),
}

// ── construction ─────────────────────────────────────────────────────────

fn add_mha_params(params: &mut ParamStore, prefix: &str, d: usize, rng: &Rng) {
    for w in ["wq", "wk", "wv", "wo"] {
        params.add_randn(&format!("{prefix}.{w}"), vec![d, d], INIT_SIGMA, rng);
    }
    for b in ["bq", "bk", "bv", "bo"] {
        params.add_zeros(&format!("{prefix}.{b}"), vec![d]);
    }
}

fn add_ff_params(params: &mut ParamStore, prefix: &str, d: usize, d_ff: usize, rng: &Rng) {
    params.add_randn(&format!("{prefix}.w1"), vec![d, d_ff], INIT_SIGMA, rng);
    params.add_zeros(&format!("{prefix}.b1"), vec![d_ff]);
    params.add_randn(&format!("{prefix}.w2"), vec![d_ff, d], INIT_SIGMA, rng);
    params.add_zeros(&format!("{prefix}.b2"), vec![d]);
}

fn add_ln_params(params: &mut ParamStore, prefix: &str, d: usize) {
    params.add_ones(&format!("{prefix}.g"), d);
    params.add_zeros(&format!("{prefix}.b"), vec![d]);
}

impl BaseModel {
    /// Randomly initialized text-only transformer; stands in for a
    /// pre-trained translation model. All parameters are trainable.
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<BaseModel> {
        cfg.validate()?;
        let rng = Rng::new(seed).derive("base-init");
        let mut params = ParamStore::new();
        let d = cfg.d;
        params.add_randn("embed.token", vec![cfg.vocab_size, d], INIT_SIGMA, &rng);
        params.add_randn("embed.pos", vec![cfg.max_len, d], INIT_SIGMA, &rng);
        for i in 0..cfg.n_enc {
            let p = format!("enc{i}");
            add_mha_params(&mut params, &format!("{p}.self"), d, &rng);
            add_ln_params(&mut params, &format!("{p}.ln1"), d);
            add_ff_params(&mut params, &format!("{p}.ff"), d, cfg.d_ff, &rng);
            add_ln_params(&mut params, &format!("{p}.ln2"), d);
        }
        for i in 0..cfg.n_dec {
            let p = format!("dec{i}");
            add_mha_params(&mut params, &format!("{p}.self"), d, &rng);
            add_ln_params(&mut params, &format!("{p}.ln1"), d);
            add_mha_params(&mut params, &format!("{p}.cross"), d, &rng);
            add_ln_params(&mut params, &format!("{p}.ln2"), d);
            add_ff_params(&mut params, &format!("{p}.ff"), d, cfg.d_ff, &rng);
            add_ln_params(&mut params, &format!("{p}.ln3"), d);
        }
        params.add_randn("out.w", vec![d, cfg.vocab_size], INIT_SIGMA, &rng);
        params.add_zeros("out.b", vec![cfg.vocab_size]);
        Ok(BaseModel { cfg, params })
    }

    pub fn forward(&self, src: &[usize], tgt: &[usize]) -> Result<Tensor> {
        let no_images = VisionEncodingSet::empty(self.cfg.vision_dim);
        forward_teacher_forced(&self.cfg, &self.params, false, src, tgt, &no_images)
    }
}

/// Adapter parameter prefixes in input-side-first order.
fn adapter_prefixes(cfg: &ModelConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.insertion_site.includes_encoder() {
        out.extend((0..cfg.n_enc).map(|i| format!("enc{i}")));
    }
    if cfg.insertion_site.includes_decoder() {
        out.extend((0..cfg.n_dec).map(|i| format!("dec{i}")));
    }
    out
}

impl GatedMMTModel {
    /// Freeze the base model and graft the trainable multimodal components.
    /// All gating parameters start at exactly 0.0, so the adapted model is
    /// the identity on text activations until training moves the gates.
    pub fn attach_adapters(base: BaseModel, seed: u64) -> Result<GatedMMTModel> {
        let cfg = base.cfg.clone();
        let mut params = base.params;
        params.freeze_all();
        let rng = Rng::new(seed).derive("adapter-init");
        let d = cfg.d;

        params.add_randn("vis.proj.w", vec![cfg.vision_dim, d], INIT_SIGMA, &rng);
        params.add_zeros("vis.proj.b", vec![d]);
        params.add_randn("vis.latents", vec![cfg.latents, d], INIT_SIGMA, &rng);
        for i in 0..cfg.resampler_depth {
            let p = format!("pr{i}");
            add_mha_params(&mut params, &format!("{p}.attn"), d, &rng);
            add_ff_params(&mut params, &format!("{p}.ff"), d, cfg.d_ff_vt, &rng);
        }
        for prefix in adapter_prefixes(&cfg) {
            let p = format!("gca.{prefix}");
            add_mha_params(&mut params, &format!("{p}.attn"), d, &rng);
            add_ff_params(&mut params, &format!("{p}.ff"), d, cfg.d_ff_vt, &rng);
            params.add_zeros(&format!("{p}.g_a"), vec![1]);
            params.add_zeros(&format!("{p}.g_f"), vec![1]);
        }
        Ok(GatedMMTModel { cfg, params })
    }

    pub fn forward(&self, src: &[usize], tgt: &[usize], images: &VisionEncodingSet) -> Result<Tensor> {
        forward_teacher_forced(&self.cfg, &self.params, true, src, tgt, images)
    }

    /// Linear projection of the vision encodings into embedding space
    /// (l×d; an empty set projects as one zero encoding).
    pub fn project_vision(&self, images: &VisionEncodingSet) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&self.params, &mut tape);
        let mut f = Fwd { tape: &mut tape, bound: &bound, cfg: &self.cfg };
        if images.dim() != self.cfg.vision_dim {
            return Err(Error::data(format!(
                "vision encoding length {} != configured {}",
                images.dim(),
                self.cfg.vision_dim
            )));
        }
        let rows = f.tape.constant(images.as_rows());
        let w = f.linear(rows, "vis.proj.w", "vis.proj.b")?;
        Ok(tape.value(w).clone())
    }

    /// Run the perceiver resampler: any number of images in, exactly
    /// `latents` vision tokens out (r×d).
    pub fn resample(&self, images: &VisionEncodingSet) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&self.params, &mut tape);
        let mut f = Fwd { tape: &mut tape, bound: &bound, cfg: &self.cfg };
        let p = f.vision_tokens(images)?;
        Ok(tape.value(p).clone())
    }

    /// Apply one named gated cross-attention adapter (e.g. "enc0") to text
    /// activations `x` given vision tokens `p`.
    pub fn apply_adapter(&self, name: &str, x: &Tensor, p: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&self.params, &mut tape);
        let mut f = Fwd { tape: &mut tape, bound: &bound, cfg: &self.cfg };
        let xv = f.tape.constant(x.clone());
        let pv = f.tape.constant(p.clone());
        let out = f.gca(name, xv, pv)?;
        Ok(tape.value(out).clone())
    }

    pub fn gate_values(&self) -> Vec<GateValue> {
        adapter_prefixes(&self.cfg)
            .into_iter()
            .enumerate()
            .map(|(i, name)| {
                let g_a = self.params.get(&format!("gca.{name}.g_a")).expect("gate").value.item();
                let g_f = self.params.get(&format!("gca.{name}.g_f")).expect("gate").value.item();
                GateValue { layer: i + 1, name, gamma_a: g_a.tanh(), gamma_f: g_f.tanh() }
            })
            .collect()
    }
}

// ── forward machinery ────────────────────────────────────────────────────

struct Fwd<'a> {
    tape: &'a mut Tape,
    bound: &'a Bound,
    cfg: &'a ModelConfig,
}

impl<'a> Fwd<'a> {
    fn p(&self, name: &str) -> Result<Var> {
        self.bound.var(name)
    }

    fn linear(&mut self, x: Var, w: &str, b: &str) -> Result<Var> {
        let (wv, bv) = (self.p(w)?, self.p(b)?);
        let xw = self.tape.matmul(x, wv)?;
        self.tape.add_bias(xw, bv)
    }

    /// Multi-head attention. `unordered` marks the key/value axis as an
    /// unordered set (the resampler's image embeddings carry no positions).
    fn mha(
        &mut self,
        prefix: &str,
        q_in: Var,
        kv_in: Var,
        heads: usize,
        mask: Option<&Tensor>,
        unordered: bool,
    ) -> Result<Var> {
        let d = self.cfg.d;
        let dh = d / heads;
        let q = self.linear(q_in, &format!("{prefix}.wq"), &format!("{prefix}.bq"))?;
        let k = self.linear(kv_in, &format!("{prefix}.wk"), &format!("{prefix}.bk"))?;
        let v = self.linear(kv_in, &format!("{prefix}.wv"), &format!("{prefix}.bv"))?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut head_outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.tape.slice_cols(q, h * dh, dh)?;
            let kh = self.tape.slice_cols(k, h * dh, dh)?;
            let vh = self.tape.slice_cols(v, h * dh, dh)?;
            let kht = self.tape.transpose(kh)?;
            let mut scores = self.tape.matmul(qh, kht)?;
            scores = self.tape.scale_const(scores, scale)?;
            if let Some(m) = mask {
                scores = self.tape.add_mask(scores, m)?;
            }
            let attn = if unordered {
                self.tape.softmax_rows_unordered(scores)?
            } else {
                self.tape.softmax_rows(scores)?
            };
            let oh = if unordered {
                self.tape.matmul_unordered(attn, vh)?
            } else {
                self.tape.matmul(attn, vh)?
            };
            head_outs.push(oh);
        }
        let merged = self.tape.concat_cols(&head_outs)?;
        self.linear(merged, &format!("{prefix}.wo"), &format!("{prefix}.bo"))
    }

    fn ff(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let h = self.linear(x, &format!("{prefix}.w1"), &format!("{prefix}.b1"))?;
        let a = self.tape.relu(h)?;
        self.linear(a, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
    }

    fn ln(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let g = self.p(&format!("{prefix}.g"))?;
        let b = self.p(&format!("{prefix}.b"))?;
        self.tape.layer_norm(x, g, b, 1e-5)
    }

    fn embed(&mut self, ids: &[usize]) -> Result<Var> {
        if ids.len() > self.cfg.max_len {
            return Err(Error::data(format!(
                "sequence length {} exceeds max_len {}",
                ids.len(),
                self.cfg.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.cfg.vocab_size) {
            return Err(Error::data(format!(
                "token id {bad} >= vocab size {}",
                self.cfg.vocab_size
            )));
        }
        let tok_table = self.p("embed.token")?;
        let pos_table = self.p("embed.pos")?;
        let tok = self.tape.gather_rows(tok_table, ids)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = self.tape.gather_rows(pos_table, &positions)?;
        self.tape.add(tok, pos)
    }

    fn encoder_layer(&mut self, i: usize, x: Var) -> Result<Var> {
        let p = format!("enc{i}");
        let sa = self.mha(&format!("{p}.self"), x, x, self.cfg.heads, None, false)?;
        let x1 = self.tape.add(x, sa)?;
        let x1 = self.ln(&format!("{p}.ln1"), x1)?;
        let ffo = self.ff(&format!("{p}.ff"), x1)?;
        let x2 = self.tape.add(x1, ffo)?;
        self.ln(&format!("{p}.ln2"), x2)
    }

    fn decoder_layer(&mut self, i: usize, y: Var, z: Var, causal: &Tensor) -> Result<Var> {
        let p = format!("dec{i}");
        let sa = self.mha(&format!("{p}.self"), y, y, self.cfg.heads, Some(causal), false)?;
        let y1 = self.tape.add(y, sa)?;
        let y1 = self.ln(&format!("{p}.ln1"), y1)?;
        let ca = self.mha(&format!("{p}.cross"), y1, z, self.cfg.heads, None, false)?;
        let y2 = self.tape.add(y1, ca)?;
        let y2 = self.ln(&format!("{p}.ln2"), y2)?;
        let ffo = self.ff(&format!("{p}.ff"), y2)?;
        let y3 = self.tape.add(y2, ffo)?;
        self.ln(&format!("{p}.ln3"), y3)
    }

    /// GCA(x, p) = x' + tanh(g_f)·FF(x') with x' = x + tanh(g_a)·MHA(K=p, V=p, Q=x).
    fn gca(&mut self, name: &str, x: Var, p_tokens: Var) -> Result<Var> {
        let pfx = format!("gca.{name}");
        let g_a = self.p(&format!("{pfx}.g_a"))?;
        let g_f = self.p(&format!("{pfx}.g_f"))?;
        let gamma_a = self.tape.tanh(g_a)?;
        let gamma_f = self.tape.tanh(g_f)?;
        let att = self.mha(&format!("{pfx}.attn"), x, p_tokens, self.cfg.heads_vt, None, false)?;
        let gated_att = self.tape.scale_scalar(att, gamma_a)?;
        let x1 = self.tape.add(x, gated_att)?;
        let ffo = self.ff(&format!("{pfx}.ff"), x1)?;
        let gated_ff = self.tape.scale_scalar(ffo, gamma_f)?;
        self.tape.add(x1, gated_ff)
    }

    /// Vision encodings -> projection -> R resampler layers -> r vision tokens.
    fn vision_tokens(&mut self, images: &VisionEncodingSet) -> Result<Var> {
        if images.dim() != self.cfg.vision_dim {
            return Err(Error::data(format!(
                "vision encoding length {} != configured {}",
                images.dim(),
                self.cfg.vision_dim
            )));
        }
        let rows = self.tape.constant(images.as_rows());
        let w = self.linear(rows, "vis.proj.w", "vis.proj.b")?;
        let mut lam = self.p("vis.latents")?;
        for i in 0..self.cfg.resampler_depth {
            let p = format!("pr{i}");
            let kv = self.tape.concat_rows(w, lam)?;
            let att = self.mha(&format!("{p}.attn"), lam, kv, self.cfg.heads_vt, None, true)?;
            let l1 = self.tape.add(lam, att)?;
            let ffo = self.ff(&format!("{p}.ff"), l1)?;
            lam = self.tape.add(l1, ffo)?;
        }
        Ok(lam)
    }
}

fn causal_mask(n: usize) -> Tensor {
    let mut m = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in (i + 1)..n {
            m.set(i, j, MASK_NEG);
        }
    }
    m
}

/// Shared forward pass; `dec_in` is the shifted decoder input.
fn forward_on_tape(
    cfg: &ModelConfig,
    tape: &mut Tape,
    bound: &Bound,
    gated: bool,
    src: &[usize],
    dec_in: &[usize],
    images: &VisionEncodingSet,
) -> Result<Var> {
    let mut f = Fwd { tape, bound, cfg };
    let p_tokens = if gated { Some(f.vision_tokens(images)?) } else { None };

    let mut x = f.embed(src)?;
    for i in 0..cfg.n_enc {
        if let Some(p) = p_tokens {
            if cfg.insertion_site.includes_encoder() {
                x = f.gca(&format!("enc{i}"), x, p)?;
            }
        }
        x = f.encoder_layer(i, x)?;
    }
    let z = x;

    let causal = causal_mask(dec_in.len());
    let mut y = f.embed(dec_in)?;
    for i in 0..cfg.n_dec {
        if let Some(p) = p_tokens {
            if cfg.insertion_site.includes_decoder() {
                y = f.gca(&format!("dec{i}"), y, p)?;
            }
        }
        y = f.decoder_layer(i, y, z, &causal)?;
    }
    f.linear(y, "out.w", "out.b")
}

fn shifted_decoder_input(tgt: &[usize]) -> Vec<usize> {
    let mut dec_in = Vec::with_capacity(tgt.len());
    dec_in.push(BOS_ID);
    dec_in.extend_from_slice(&tgt[..tgt.len().saturating_sub(1)]);
    dec_in
}

fn forward_teacher_forced(
    cfg: &ModelConfig,
    params: &ParamStore,
    gated: bool,
    src: &[usize],
    tgt: &[usize],
    images: &VisionEncodingSet,
) -> Result<Tensor> {
    if tgt.is_empty() {
        return Err(Error::data("empty target sequence"));
    }
    let mut tape = Tape::new();
    let bound = Bound::bind(params, &mut tape);
    let dec_in = shifted_decoder_input(tgt);
    let logits = forward_on_tape(cfg, &mut tape, &bound, gated, src, &dec_in, images)?;
    Ok(tape.value(logits).clone())
}

impl AnyModel {
    pub fn cfg(&self) -> &ModelConfig {
        match self {
            AnyModel::Base(m) => &m.cfg,
            AnyModel::Gated(m) => &m.cfg,
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            AnyModel::Base(m) => &m.params,
            AnyModel::Gated(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            AnyModel::Base(m) => &mut m.params,
            AnyModel::Gated(m) => &mut m.params,
        }
    }

    pub fn is_gated(&self) -> bool {
        matches!(self, AnyModel::Gated(_))
    }

    pub fn as_gated(&self) -> Option<&GatedMMTModel> {
        match self {
            AnyModel::Gated(m) => Some(m),
            AnyModel::Base(_) => None,
        }
    }

    /// Teacher-forced logits, one row per target position.
    pub fn forward(&self, src: &[usize], tgt: &[usize], images: &VisionEncodingSet) -> Result<Tensor> {
        forward_teacher_forced(self.cfg(), self.params(), self.is_gated(), src, tgt, images)
    }

    /// Teacher-forced loss node on a caller-owned tape (training path).
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        src: &[usize],
        tgt: &[usize],
        images: &VisionEncodingSet,
        pad_id: usize,
    ) -> Result<Var> {
        let dec_in = shifted_decoder_input(tgt);
        let logits =
            forward_on_tape(self.cfg(), tape, bound, self.is_gated(), src, &dec_in, images)?;
        tape.cross_entropy(logits, tgt, pad_id)
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound::bind(self.params(), tape)
    }

    /// Argmax decoding until `</s>` or `max_len`. The emitted sequence
    /// includes the terminating `</s>` when one is produced.
    pub fn greedy_decode(
        &self,
        src: &[usize],
        images: &VisionEncodingSet,
        max_len: usize,
    ) -> Result<Vec<usize>> {
        self.beam_decode(src, images, max_len, 1)
    }

    /// Beam search with length-normalized log-probability scoring;
    /// width 1 is exactly greedy decoding.
    pub fn beam_decode(
        &self,
        src: &[usize],
        images: &VisionEncodingSet,
        max_len: usize,
        width: usize,
    ) -> Result<Vec<usize>> {
        let width = width.max(1);
        let max_len = max_len.min(self.cfg().max_len.saturating_sub(1));
        // (tokens, total logprob, done)
        let mut beams: Vec<(Vec<usize>, f64, bool)> = vec![(Vec::new(), 0.0, false)];
        for _ in 0..max_len {
            if beams.iter().all(|b| b.2) {
                break;
            }
            let mut next: Vec<(Vec<usize>, f64, bool)> = Vec::new();
            for (toks, score, done) in &beams {
                if *done {
                    next.push((toks.clone(), *score, true));
                    continue;
                }
                let mut dec_in = vec![BOS_ID];
                dec_in.extend_from_slice(toks);
                let mut tape = Tape::new();
                let bound = self.bind(&mut tape);
                let logits = forward_on_tape(
                    self.cfg(),
                    &mut tape,
                    &bound,
                    self.is_gated(),
                    src,
                    &dec_in,
                    images,
                )?;
                let row = tape.value(logits).row(dec_in.len() - 1).to_vec();
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                // top `width` candidates, deterministic tie-break on token id
                let mut idx: Vec<usize> = (0..row.len()).collect();
                idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                for &tok in idx.iter().take(width) {
                    let mut t = toks.clone();
                    t.push(tok);
                    next.push((t, score + row[tok] - lse, tok == EOS_ID));
                }
            }
            next.sort_by(|a, b| {
                let la = (b.1 / b.0.len() as f64).total_cmp(&(a.1 / a.0.len() as f64));
                la.then_with(|| a.0.cmp(&b.0))
            });
            next.truncate(width);
            beams = next;
        }
        Ok(beams.into_iter().next().map(|b| b.0).unwrap_or_default())
    }

    pub fn gate_values(&self) -> Vec<GateValue> {
        match self {
            AnyModel::Base(_) => Vec::new(),
            AnyModel::Gated(m) => m.gate_values(),
        }
    }

    pub fn count_parameters(&self, trainable_only: bool) -> usize {
        self.params().scalar_count(trainable_only)
    }
}

// ── parameter counting ───────────────────────────────────────────────────

pub fn base_param_count(cfg: &ModelConfig) -> usize {
    let d = cfg.d;
    let mha = 4 * d * d + 4 * d;
    let ff = d * cfg.d_ff + cfg.d_ff + cfg.d_ff * d + d;
    let ln = 2 * d;
    let enc_layer = mha + ff + 2 * ln;
    let dec_layer = 2 * mha + ff + 3 * ln;
    cfg.vocab_size * d + cfg.max_len * d
        + cfg.n_enc * enc_layer
        + cfg.n_dec * dec_layer
        + d * cfg.vocab_size
        + cfg.vocab_size
}

pub fn adapter_param_count(cfg: &ModelConfig) -> usize {
    let d = cfg.d;
    let mha = 4 * d * d + 4 * d;
    let ff_vt = d * cfg.d_ff_vt + cfg.d_ff_vt + cfg.d_ff_vt * d + d;
    let proj = cfg.vision_dim * d + d;
    let latents = cfg.latents * d;
    let resampler = cfg.resampler_depth * (mha + ff_vt);
    let per_adapter = mha + ff_vt + 2;
    proj + latents + resampler + cfg.adapter_count() * per_adapter
}

/// Human-readable derivation of the parameter count for a config.
pub fn explain_param_count(cfg: &ModelConfig) -> String {
    let d = cfg.d;
    let mha = 4 * d * d + 4 * d;
    let ff = d * cfg.d_ff + cfg.d_ff + cfg.d_ff * d + d;
    let ff_vt = d * cfg.d_ff_vt + cfg.d_ff_vt + cfg.d_ff_vt * d + d;
    let ln = 2 * d;
    let enc_layer = mha + ff + 2 * ln;
    let dec_layer = 2 * mha + ff + 3 * ln;
    format!(
        "base:\n\
         \x20 embeddings: V*d + max_len*d = {emb}\n\
         \x20 encoder: n_enc * (mha + ff + 2*ln) = {n_enc} * {enc_layer} = {enc}\n\
         \x20 decoder: n_dec * (2*mha + ff + 3*ln) = {n_dec} * {dec_layer} = {dec}\n\
         \x20 output: d*V + V = {out}\n\
         \x20 total = {base}\n\
         adapters:\n\
         \x20 vision projection: e*d + d = {proj}\n\
         \x20 latents: r*d = {lat}\n\
         \x20 resampler: R * (mha + ff_vt) = {rd} * {pr_layer} = {pr}\n\
         \x20 gated cross-attention: {na} * (mha + ff_vt + 2 gates) = {na} * {gca_layer} = {gca}\n\
         \x20 gating scalars: {na} * 2 = {gates}\n\
         \x20 total = {adapters}\n\
         grand total = {total}\n\
         (mha = 4d^2+4d = {mha}, ff = 2*d*d_ff+d_ff+d = {ff}, ff_vt = {ff_vt}, ln = 2d = {ln})",
        emb = cfg.vocab_size * d + cfg.max_len * d,
        n_enc = cfg.n_enc,
        enc = cfg.n_enc * enc_layer,
        n_dec = cfg.n_dec,
        dec = cfg.n_dec * dec_layer,
        out = d * cfg.vocab_size + cfg.vocab_size,
        base = base_param_count(cfg),
        proj = cfg.vision_dim * d + d,
        lat = cfg.latents * d,
        rd = cfg.resampler_depth,
        pr_layer = mha + ff_vt,
        pr = cfg.resampler_depth * (mha + ff_vt),
        na = cfg.adapter_count(),
        gca_layer = mha + ff_vt + 2,
        gca = cfg.adapter_count() * (mha + ff_vt + 2),
        gates = cfg.adapter_count() * 2,
        adapters = adapter_param_count(cfg),
        total = base_param_count(cfg) + adapter_param_count(cfg),
        mha = mha,
        ff = ff,
        ff_vt = ff_vt,
        ln = ln,
    )
}
