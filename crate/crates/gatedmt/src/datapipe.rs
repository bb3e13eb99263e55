//! Tokenization, topic-phrase masking, triplet collation, and the synthetic
//! grounded corpus used to verify gating dynamics at desk scale.

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::{BOS_TOKEN, EOS_TOKEN, PAD_TOKEN, UNK_ID, UNK_TOKEN};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

// ── vocabulary ───────────────────────────────────────────────────────────

/// Word-level vocabulary with dense ids; the four reserved tokens always
/// occupy ids 0..4.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    token_to_id: BTreeMap<String, usize>,
    id_to_token: Vec<String>,
}

pub const RESERVED: [&str; 4] = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

impl Vocab {
    /// Frequency-ranked word vocabulary; ties break lexicographically.
    pub fn build(corpus_lines: &[String], max_size: usize) -> Result<Vocab> {
        if max_size < RESERVED.len() + 1 {
            return Err(Error::config(format!(
                "max_size {max_size} leaves no room beyond the reserved tokens"
            )));
        }
        if corpus_lines.is_empty() {
            return Err(Error::data("empty corpus"));
        }
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for line in corpus_lines {
            for tok in line.split_whitespace() {
                if !RESERVED.contains(&tok) {
                    *freq.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for (tok, _) in ranked.into_iter().take(max_size - RESERVED.len()) {
            id_to_token.push(tok.to_string());
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocab { token_to_id, id_to_token })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.id_to_token[i].clone()).collect()
    }

    /// Stable content hash used to detect cross-vocabulary dataset mixing.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.id_to_token {
            for b in t.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.id_to_token {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = std::fs::read_to_string(path)?;
        let id_to_token: Vec<String> = text.lines().map(|s| s.to_string()).collect();
        if id_to_token.len() < RESERVED.len()
            || id_to_token[..RESERVED.len()] != RESERVED.map(String::from)
        {
            return Err(Error::data(format!(
                "vocab file {} does not start with the reserved tokens",
                path.display()
            )));
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocab { token_to_id, id_to_token })
    }
}

// ── topic phrases and masking ────────────────────────────────────────────

/// A vision-derived "attribute object" phrase to be masked in source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicPhrase {
    tokens: Vec<String>,
}

impl TopicPhrase {
    pub fn new(text: &str) -> Result<TopicPhrase> {
        let tokens: Vec<String> = text.split_whitespace().map(|t| t.to_lowercase()).collect();
        if tokens.is_empty() {
            return Err(Error::data("empty topic phrase"));
        }
        Ok(TopicPhrase { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One phrase per line, UTF-8; blank lines skipped.
pub fn parse_phrases(text: &str) -> Result<Vec<TopicPhrase>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(TopicPhrase::new)
        .collect()
}

pub fn read_phrases(path: &Path) -> Result<Vec<TopicPhrase>> {
    let text = std::fs::read_to_string(path)?;
    parse_phrases(&text)
}

/// Replace topic phrases with a single `<unk>`: left-to-right scan taking
/// the longest match at each position, then resuming after the replacement
/// (matches never overlap). Matching is case-insensitive; untouched tokens
/// keep their original form.
pub fn mask_source(tokens: &[String], phrases: &[TopicPhrase]) -> (Vec<String>, usize) {
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut out = Vec::with_capacity(tokens.len());
    let mut matches = 0;
    let mut i = 0;
    while i < tokens.len() {
        let mut best: Option<usize> = None;
        for p in phrases {
            let k = p.len();
            if i + k <= tokens.len() && lowered[i..i + k] == *p.tokens() {
                best = Some(best.map_or(k, |b: usize| b.max(k)));
            }
        }
        match best {
            Some(k) => {
                out.push(UNK_TOKEN.to_string());
                matches += 1;
                i += k;
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    (out, matches)
}

// ── triplet records and datasets ─────────────────────────────────────────

/// The universal dataset row: tokenized source, tokenized target, and the
/// (possibly empty) image-id list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub images: Vec<String>,
}

impl TripletRecord {
    pub fn new(src: &str, tgt: &str, images: Vec<String>) -> Result<TripletRecord> {
        let src: Vec<String> = src.split_whitespace().map(String::from).collect();
        let tgt: Vec<String> = tgt.split_whitespace().map(String::from).collect();
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::data("triplet requires nonempty source and target"));
        }
        Ok(TripletRecord { src, tgt, images })
    }

    pub fn src_text(&self) -> String {
        self.src.join(" ")
    }

    pub fn tgt_text(&self) -> String {
        self.tgt.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CollationStats {
    pub masked: usize,
    pub fully_masked: usize,
    pub text_only: usize,
    pub total: usize,
}

impl CollationStats {
    pub fn add(&self, other: &CollationStats) -> CollationStats {
        CollationStats {
            masked: self.masked + other.masked,
            fully_masked: self.fully_masked + other.fully_masked,
            text_only: self.text_only + other.text_only,
            total: self.total + other.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<TripletRecord>,
    pub stats: CollationStats,
    /// Fingerprint of the vocabulary the records were produced under, when known.
    pub vocab_fingerprint: Option<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Build the three-part pre-training mixture: masked caption triplets (only
/// captions with at least one phrase hit), one fully-masked triplet per
/// caption, and text-only pairs verbatim.
pub fn collate_pretrain(
    caption_pairs: &[TripletRecord],
    phrases: &[TopicPhrase],
    textonly_pairs: &[TripletRecord],
) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut stats = CollationStats::default();
    for cap in caption_pairs {
        if cap.images.is_empty() {
            return Err(Error::data(format!(
                "caption {:?} has no image id",
                cap.src_text()
            )));
        }
        let (masked, hits) = mask_source(&cap.src, phrases);
        if hits >= 1 {
            records.push(TripletRecord { src: masked, ..cap.clone() });
            stats.masked += 1;
        }
    }
    for cap in caption_pairs {
        records.push(TripletRecord {
            src: vec![UNK_TOKEN.to_string()],
            tgt: cap.tgt.clone(),
            images: cap.images.clone(),
        });
        stats.fully_masked += 1;
    }
    for pair in textonly_pairs {
        records.push(TripletRecord { images: Vec::new(), ..pair.clone() });
        stats.text_only += 1;
    }
    stats.total = stats.masked + stats.fully_masked + stats.text_only;
    Ok(Dataset { records, stats, vocab_fingerprint: None })
}

/// Fine-tuning collation: with-image copies (masked when requested) followed
/// by image-stripped copies. Output is exactly twice the input size.
pub fn collate_finetune(
    triplets: &[TripletRecord],
    masked: bool,
    phrases: &[TopicPhrase],
) -> Result<Dataset> {
    let mut records = Vec::with_capacity(triplets.len() * 2);
    let mut stats = CollationStats::default();
    for t in triplets {
        if t.images.is_empty() {
            return Err(Error::data(format!(
                "fine-tune triplet {:?} has no image id",
                t.src_text()
            )));
        }
        let with_image = if masked {
            let (src, _) = mask_source(&t.src, phrases);
            TripletRecord { src, ..t.clone() }
        } else {
            t.clone()
        };
        records.push(with_image);
        stats.masked += 1;
    }
    for t in triplets {
        records.push(TripletRecord { images: Vec::new(), ..t.clone() });
        stats.text_only += 1;
    }
    stats.total = stats.masked + stats.fully_masked + stats.text_only;
    Ok(Dataset { records, stats, vocab_fingerprint: None })
}

/// Order-preserving concatenation; refuses to mix vocabularies.
pub fn concat_datasets(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    if let (Some(fa), Some(fb)) = (a.vocab_fingerprint, b.vocab_fingerprint) {
        if fa != fb {
            return Err(Error::data("vocab mismatch between datasets"));
        }
    }
    let mut records = a.records.clone();
    records.extend(b.records.iter().cloned());
    Ok(Dataset {
        records,
        stats: a.stats.add(&b.stats),
        vocab_fingerprint: a.vocab_fingerprint.or(b.vocab_fingerprint),
    })
}

// ── triplet file io (JSON Lines) ─────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct TripletLine {
    src: String,
    tgt: String,
    #[serde(default)]
    images: Vec<String>,
}

pub fn write_triplets(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for r in &dataset.records {
        let line = TripletLine {
            src: r.src_text(),
            tgt: r.tgt_text(),
            images: r.images.clone(),
        };
        serde_json::to_writer(&mut f, &line)
            .map_err(|e| Error::data(format!("serialize triplet: {e}")))?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse triplet JSON Lines; `origin` prefixes error locations (usually a
/// file path).
pub fn parse_triplets(text: &str, origin: &str) -> Result<Dataset> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TripletLine = serde_json::from_str(line).map_err(|e| {
            Error::data(format!("{origin}:{}: malformed triplet line: {e}", lineno + 1))
        })?;
        let rec = TripletRecord::new(&parsed.src, &parsed.tgt, parsed.images)
            .map_err(|e| Error::data(format!("{origin}:{}: {e}", lineno + 1)))?;
        records.push(rec);
    }
    Ok(Dataset { records, ..Default::default() })
}

pub fn read_triplets(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_triplets(&text, &path.display().to_string())
}

/// Plain-text parallel corpus: one `source<TAB>target` pair per line.
pub fn parse_raw_pairs(text: &str, origin: &str) -> Result<Dataset> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (src, tgt) = line.split_once('\t').ok_or_else(|| {
            Error::data(format!("{origin}:{}: expected source<TAB>target", lineno + 1))
        })?;
        records.push(
            TripletRecord::new(src, tgt, Vec::new())
                .map_err(|e| Error::data(format!("{origin}:{}: {e}", lineno + 1)))?,
        );
    }
    Ok(Dataset { records, ..Default::default() })
}

pub fn read_raw_pairs(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_raw_pairs(&text, &path.display().to_string())
}

// ── synthetic grounded corpus ────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub content_words: usize,
    pub vision_dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { content_words: 16, vision_dim: 32 }
    }
}

/// Synthetic corpus where the masked source token is recoverable only from
/// the image. Each record hides one of `content_words` classes; the image
/// encoding is a block one-hot of the class; the target names the class at
/// a fixed position.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Masked variant: source carries `<unk>` at the content position.
    pub masked: Dataset,
    /// Unmasked control: the content word is visible in the source.
    pub unmasked: Dataset,
    /// Image-id -> encoding vector entries (one per content class).
    pub encodings: Vec<(String, Vec<f64>)>,
    pub content_words: Vec<String>,
    /// Index of the content word within every target sentence.
    pub target_content_index: usize,
    pub vision_dim: usize,
}

const SRC_FILLERS_A: [&str; 4] = ["ein", "der", "das", "mein"];
const SRC_FILLERS_B: [&str; 4] = ["hier", "dort", "oben", "unten"];

pub fn generate_synthetic_grounded_corpus(
    seed: u64,
    size: usize,
    spec: &SyntheticSpec,
) -> Result<SyntheticCorpus> {
    if size == 0 {
        return Err(Error::data("synthetic corpus size must be >= 1"));
    }
    if spec.vision_dim < spec.content_words {
        return Err(Error::config(format!(
            "vision_dim {} < content word count {}",
            spec.vision_dim, spec.content_words
        )));
    }
    let k = spec.content_words;
    let content_words: Vec<String> = (0..k).map(|i| format!("obj{i:02}")).collect();
    let block = spec.vision_dim / k;
    let encodings: Vec<(String, Vec<f64>)> = (0..k)
        .map(|i| {
            let mut v = vec![0.0; spec.vision_dim];
            for j in i * block..(i + 1) * block {
                v[j] = 1.0;
            }
            (format!("img{i:02}"), v)
        })
        .collect();

    let mut rng = Rng::new(seed).derive("synthetic-grounded");
    let mut masked = Vec::with_capacity(size);
    let mut unmasked = Vec::with_capacity(size);
    for _ in 0..size {
        let class = rng.next_below(k);
        // fillers drawn independently of the class: the masked source carries
        // zero information about the hidden word
        let a = SRC_FILLERS_A[rng.next_below(SRC_FILLERS_A.len())].to_string();
        let b = SRC_FILLERS_B[rng.next_below(SRC_FILLERS_B.len())].to_string();
        let tgt = vec!["the".to_string(), content_words[class].clone(), "thing".to_string()];
        let images = vec![format!("img{class:02}")];
        masked.push(TripletRecord {
            src: vec![a.clone(), UNK_TOKEN.to_string(), b.clone()],
            tgt: tgt.clone(),
            images: images.clone(),
        });
        unmasked.push(TripletRecord {
            src: vec![a, content_words[class].clone(), b],
            tgt,
            images,
        });
    }
    let stats = CollationStats {
        masked: size,
        fully_masked: 0,
        text_only: 0,
        total: size,
    };
    Ok(SyntheticCorpus {
        masked: Dataset { records: masked, stats, vocab_fingerprint: None },
        unmasked: Dataset { records: unmasked, stats, vocab_fingerprint: None },
        encodings,
        content_words,
        target_content_index: 1,
        vision_dim: spec.vision_dim,
    })
}
