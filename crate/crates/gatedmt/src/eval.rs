//! Evaluation protocol: corpus BLEU4, teacher-forced perplexity, the
//! contrastive disambiguation score, and the three image regimes
//! (matching, text-only, non-matching).

use crate::datapipe::{Dataset, Vocab};
use crate::error::{Error, Result};
use crate::io::VisionEncodingStore;
use crate::model::{AnyModel, VisionEncodingSet};
use crate::trainer::{encode_src, encode_tgt};
use crate::numerics::Rng;
use crate::{EOS_ID, PAD_ID};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

// ── BLEU4 ────────────────────────────────────────────────────────────────

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU4 with one reference per hypothesis: geometric mean of
/// modified 1..4-gram precisions times the brevity penalty, no smoothing.
/// Any zero precision makes the score exactly 0.0.
pub fn bleu4(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> f64 {
    assert_eq!(hypotheses.len(), references.len(), "bleu4: corpus size mismatch");
    if hypotheses.is_empty() {
        return 0.0;
    }
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (gram, &c) in &hc {
                total[n - 1] += c;
                matched[n - 1] += c.min(rc.get(gram).copied().unwrap_or(0));
            }
        }
    }
    let mut log_prec = 0.0;
    for n in 0..4 {
        if matched[n] == 0 || total[n] == 0 {
            return 0.0;
        }
        log_prec += (matched[n] as f64 / total[n] as f64).ln() / 4.0;
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    bp * log_prec.exp()
}

// ── perplexity ───────────────────────────────────────────────────────────

/// exp of the mean per-token negative log-likelihood under teacher forcing;
/// pad positions are excluded.
pub fn perplexity(
    model: &AnyModel,
    src: &[usize],
    tgt: &[usize],
    images: &VisionEncodingSet,
) -> Result<f64> {
    let logits = model.forward(src, tgt, images)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &tid) in tgt.iter().enumerate() {
        if tid == PAD_ID {
            continue;
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[tid];
        count += 1;
    }
    if count == 0 {
        return Err(Error::data("perplexity over an all-pad target"));
    }
    Ok((total / count as f64).exp())
}

// ── contrastive disambiguation ───────────────────────────────────────────

/// One contrastive instance: an ambiguous source with image/translation
/// case pairs; under image i the correct target is case i's target.
#[derive(Debug, Clone, PartialEq)]
pub struct CommuteInstance {
    pub src: Vec<String>,
    pub cases: Vec<(String, Vec<String>)>,
}

#[derive(Deserialize, Serialize)]
struct CommuteCaseLine {
    image: String,
    tgt: String,
}

#[derive(Deserialize, Serialize)]
struct CommuteLine {
    src: String,
    cases: Vec<CommuteCaseLine>,
}

/// Parse contrastive JSON Lines; `origin` prefixes error locations.
pub fn parse_commute(text: &str, origin: &str) -> Result<Vec<CommuteInstance>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CommuteLine = serde_json::from_str(line).map_err(|e| {
            Error::data(format!("{origin}:{}: malformed contrastive line: {e}", lineno + 1))
        })?;
        if parsed.cases.len() < 2 {
            return Err(Error::data(format!(
                "{origin}:{}: contrastive instance needs at least 2 cases",
                lineno + 1
            )));
        }
        out.push(CommuteInstance {
            src: parsed.src.split_whitespace().map(String::from).collect(),
            cases: parsed
                .cases
                .into_iter()
                .map(|c| {
                    (c.image, c.tgt.split_whitespace().map(String::from).collect())
                })
                .collect(),
        });
    }
    Ok(out)
}

pub fn read_commute(path: &Path) -> Result<Vec<CommuteInstance>> {
    let text = std::fs::read_to_string(path)?;
    parse_commute(&text, &path.display().to_string())
}

/// Mean over all (instance, case) pairs: 1 when the case's own target has
/// strictly lower perplexity than every competing target under that case's
/// image, 0.5 on an exact tie, else 0. A model that ignores images scores
/// exactly 0.5.
pub fn commute_score(
    model: &AnyModel,
    vocab: &Vocab,
    instances: &[CommuteInstance],
    store: &VisionEncodingStore,
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::data("no contrastive instances"));
    }
    let dim = model.cfg().vision_dim;
    let mut points = 0.0f64;
    let mut count = 0usize;
    for inst in instances {
        let src = encode_src(vocab, &inst.src);
        let tgts: Vec<Vec<usize>> =
            inst.cases.iter().map(|(_, t)| encode_tgt(vocab, t)).collect();
        for (ci, (image, _)) in inst.cases.iter().enumerate() {
            let images = store.encoding_set(std::slice::from_ref(image))?;
            if images.dim() != dim {
                return Err(Error::config(format!(
                    "vision store dimension {} != model vision_dim {dim}",
                    images.dim()
                )));
            }
            let own = perplexity(model, &src, &tgts[ci], &images)?;
            let mut wins = 0usize;
            let mut ties = 0usize;
            for (cj, t) in tgts.iter().enumerate() {
                if cj == ci {
                    continue;
                }
                let other = perplexity(model, &src, t, &images)?;
                if own < other {
                    wins += 1;
                } else if own == other {
                    ties += 1;
                }
            }
            let rivals = tgts.len() - 1;
            points += if wins == rivals {
                1.0
            } else if wins + ties == rivals {
                0.5
            } else {
                0.0
            };
            count += 1;
        }
    }
    Ok(points / count as f64)
}

// ── translation evaluation over a dataset ────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Each record sees its own image encodings.
    Multimodal,
    /// No image input at all (the store is never read).
    TextOnly,
    /// Every record sees some other record's images (a seeded derangement).
    NonMatching,
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multimodal" => Ok(Regime::Multimodal),
            "text_only" => Ok(Regime::TextOnly),
            "non_matching" => Ok(Regime::NonMatching),
            other => Err(Error::config(format!(
                "regime must be multimodal|text_only|non_matching, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub regime: Regime,
    pub sentences: usize,
    pub bleu4: f64,
    pub mean_perplexity: f64,
    pub seed: u64,
}

pub fn evaluate(
    model: &AnyModel,
    vocab: &Vocab,
    data: &Dataset,
    store: &VisionEncodingStore,
    regime: Regime,
    seed: u64,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::data("evaluation dataset is empty"));
    }
    let dim = model.cfg().vision_dim;
    let n = data.len();
    // image-id list per record, after applying the regime
    let image_lists: Vec<Vec<String>> = match regime {
        Regime::TextOnly => vec![Vec::new(); n],
        Regime::Multimodal => data.records.iter().map(|r| r.images.clone()).collect(),
        Regime::NonMatching => {
            if n < 2 {
                return Err(Error::data(
                    "non_matching regime needs at least 2 records",
                ));
            }
            let mut rng = Rng::new(seed).derive("non-matching");
            let perm = rng.derangement(n);
            (0..n).map(|i| data.records[perm[i]].images.clone()).collect()
        }
    };

    let mut hyps = Vec::with_capacity(n);
    let mut refs = Vec::with_capacity(n);
    let mut ppl_sum = 0.0;
    for (r, ids) in data.records.iter().zip(&image_lists) {
        let images = if ids.is_empty() {
            VisionEncodingSet::empty(dim)
        } else {
            if store.dim() != dim {
                return Err(Error::config(format!(
                    "vision store dimension {} != model vision_dim {dim}",
                    store.dim()
                )));
            }
            store.encoding_set(ids)?
        };
        let src = encode_src(vocab, &r.src);
        let tgt = encode_tgt(vocab, &r.tgt);
        ppl_sum += perplexity(model, &src, &tgt, &images)?;
        let out = model.greedy_decode(&src, &images, model.cfg().max_len)?;
        let toks: Vec<String> = out
            .into_iter()
            .filter(|&t| t != EOS_ID && t != PAD_ID)
            .map(|t| vocab.token(t).to_string())
            .collect();
        hyps.push(toks);
        refs.push(r.tgt.clone());
    }
    Ok(EvalReport {
        regime,
        sentences: n,
        bleu4: bleu4(&hyps, &refs),
        mean_perplexity: ppl_sum / n as f64,
        seed,
    })
}
