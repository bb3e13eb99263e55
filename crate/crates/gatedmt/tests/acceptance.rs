//! Acceptance gate: every release criterion in one integration test, one
//! pass/fail line per criterion. Run with `cargo test --test acceptance`.

use gatedmt::datapipe::{
    collate_finetune, collate_pretrain, generate_synthetic_grounded_corpus, write_triplets,
    read_triplets, Dataset, SyntheticSpec, TopicPhrase, TripletRecord, Vocab,
};
use gatedmt::eval::{bleu4, commute_score, CommuteInstance};
use gatedmt::io::{Checkpoint, RunConfig, VisionEncodingStore};
use gatedmt::model::{
    AnyModel, BaseModel, GatedMMTModel, InsertionSite, ModelConfig, VisionEncodingSet,
};
use gatedmt::numerics::{
    finite_difference_gradient, relative_error, F64Guard, Rng, Tape, Tensor,
};
use gatedmt::trainer::{
    adam_step, encode_src, lr_at_step, train, AdamState, Decay, OptimizerConfig,
    TrainMode, TrainOptions,
};
use gatedmt::{EOS_ID, PAD_ID};
use std::collections::HashMap;
use std::time::Instant;

struct Gate {
    results: Vec<(String, bool)>,
}

impl Gate {
    fn new() -> Self {
        Gate { results: Vec::new() }
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        // raw stderr write: visible even under the harness's output capture
        use std::io::Write;
        let line = format!("criterion {name}: {verdict} ({detail})\n");
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        self.results.push((name.to_string(), pass));
    }

    fn finish(self) {
        let failed: Vec<&str> = self
            .results
            .iter()
            .filter(|(_, p)| !p)
            .map(|(n, _)| n.as_str())
            .collect();
        assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
    }
}

fn small_cfg(site: InsertionSite) -> ModelConfig {
    ModelConfig {
        d: 16,
        vocab_size: 24,
        n_enc: 2,
        n_dec: 2,
        heads: 2,
        d_ff: 32,
        vision_dim: 6,
        latents: 3,
        resampler_depth: 2,
        heads_vt: 2,
        d_ff_vt: 32,
        insertion_site: site,
        max_len: 12,
        ..Default::default()
    }
}

fn random_images(count: usize, dim: usize, seed: u64) -> VisionEncodingSet {
    let mut rng = Rng::new(seed).derive("acceptance-images");
    let vectors = (0..count)
        .map(|_| (0..dim).map(|_| rng.next_normal()).collect())
        .collect();
    VisionEncodingSet::from_vectors(dim, vectors).unwrap()
}

// 1. With all gates at zero, the adapted model's logits match the base
//    model's within 1e-6 over >=100 random inputs, for all insertion sites.
fn criterion_1(gate: &mut Gate) {
    let mut worst = 0.0f64;
    for site in [InsertionSite::Encoder, InsertionSite::Decoder, InsertionSite::Both] {
        let cfg = small_cfg(site);
        let base = BaseModel::build(cfg.clone(), 31).unwrap();
        let gated = GatedMMTModel::attach_adapters(base.clone(), 32).unwrap();
        let mut rng = Rng::new(7).derive(&format!("c1-{site}"));
        for i in 0..100 {
            let src: Vec<usize> =
                (0..1 + rng.next_below(6)).map(|_| 4 + rng.next_below(20)).collect();
            let tgt: Vec<usize> =
                (0..1 + rng.next_below(6)).map(|_| 4 + rng.next_below(20)).collect();
            let images = random_images(rng.next_below(4), cfg.vision_dim, 1000 + i);
            let lb = base.forward(&src, &tgt).unwrap();
            let lg = gated.forward(&src, &tgt, &images).unwrap();
            worst = worst.max(lb.max_abs_diff(&lg));
        }
    }
    gate.check(
        "1 gate-zero identity",
        worst <= 1e-6,
        format!("max |logit diff| = {worst:.3e} over 300 inputs x 3 sites"),
    );
}

// 2. Frozen base parameters are bit-identical after >=500 adapter steps.
fn criterion_2(gate: &mut Gate) {
    let spec = SyntheticSpec { content_words: 6, vision_dim: 6 };
    let corpus = generate_synthetic_grounded_corpus(41, 48, &spec).unwrap();
    let mut lines = Vec::new();
    for r in &corpus.masked.records {
        lines.push(r.src_text());
        lines.push(r.tgt_text());
    }
    let vocab = Vocab::build(&lines, 24).unwrap();
    let mut store = VisionEncodingStore::new(6);
    for (id, v) in &corpus.encodings {
        store.insert(id, v.clone()).unwrap();
    }
    let base = BaseModel::build(small_cfg(InsertionSite::Encoder), 42).unwrap();
    let model = AnyModel::Gated(GatedMMTModel::attach_adapters(base, 43).unwrap());
    let frozen: Vec<(String, Tensor)> = model
        .params()
        .iter()
        .filter(|(_, p)| !p.trainable)
        .map(|(n, p)| (n.clone(), p.value.clone()))
        .collect();
    let opts = TrainOptions {
        mode: TrainMode::Pretrain,
        opt: OptimizerConfig {
            peak_lr: 1e-3,
            warmup_steps: 20,
            epochs: 200,
            batch_tokens: 24,
            ..Default::default()
        },
        seed: 44,
        max_steps: Some(520),
        verbose: false,
    };
    let run = train(model, &vocab, &corpus.masked, None, &store, &opts).unwrap();
    let drifted: Vec<&str> = frozen
        .iter()
        .filter(|(n, before)| {
            !before.bits_eq(&run.model.params().get(n).unwrap().value)
        })
        .map(|(n, _)| n.as_str())
        .collect();
    gate.check(
        "2 freeze invariance",
        run.steps >= 500 && drifted.is_empty(),
        format!(
            "{} steps, {} of {} frozen tensors drifted",
            run.steps,
            drifted.len(),
            frozen.len()
        ),
    );
}

// 3. Backward-pass gradients match central finite differences to a relative
//    error of 1e-6 in f64 mode, gating scalars included.
fn criterion_3(gate: &mut Gate) {
    let _g = F64Guard::new();
    let cfg = ModelConfig {
        d: 8,
        vocab_size: 12,
        n_enc: 1,
        n_dec: 1,
        heads: 2,
        d_ff: 16,
        vision_dim: 4,
        latents: 2,
        resampler_depth: 1,
        heads_vt: 2,
        d_ff_vt: 16,
        insertion_site: InsertionSite::Both,
        max_len: 8,
        ..Default::default()
    };
    let base = BaseModel::build(cfg.clone(), 51).unwrap();
    let mut gated = GatedMMTModel::attach_adapters(base, 52).unwrap();
    // re-draw the weights at O(0.5) scale: at the tiny default init the
    // attention query/key paths carry ~1e-11 gradients, below what central
    // differences can resolve in f64
    let rng = Rng::new(54).derive("c3-weights");
    for (name, p) in gated.params.iter_mut() {
        let mut stream = rng.derive(name);
        p.value = Tensor::randn(p.value.shape().to_vec(), 0.5, &mut stream);
    }
    // open the gates so every adapter path carries gradient
    gated.params.get_mut("gca.enc0.g_a").unwrap().value = Tensor::scalar(0.3);
    gated.params.get_mut("gca.enc0.g_f").unwrap().value = Tensor::scalar(-0.2);
    gated.params.get_mut("gca.dec0.g_a").unwrap().value = Tensor::scalar(0.25);
    gated.params.get_mut("gca.dec0.g_f").unwrap().value = Tensor::scalar(0.15);
    let model = AnyModel::Gated(gated);
    let src = [4usize, 5, 6, 7];
    let tgt = [8usize, 9, 10];
    let images = random_images(2, cfg.vision_dim, 53);

    let loss_of = |m: &AnyModel| -> f64 {
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let loss = m
            .loss_on_tape(&mut tape, &bound, &src, &tgt, &images, PAD_ID)
            .unwrap();
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let loss = model
        .loss_on_tape(&mut tape, &bound, &src, &tgt, &images, PAD_ID)
        .unwrap();
    tape.backward(loss).unwrap();

    let names = [
        "embed.token",
        "embed.pos",
        "enc0.self.wq",
        "enc0.ln1.g",
        "enc0.ff.w1",
        "dec0.self.wv",
        "dec0.cross.wk",
        "dec0.ln2.b",
        "dec0.ff.b2",
        "out.w",
        "vis.proj.w",
        "vis.latents",
        "pr0.attn.wq",
        "pr0.ff.w2",
        "gca.enc0.attn.wo",
        "gca.dec0.ff.w1",
        "gca.enc0.g_a",
        "gca.enc0.g_f",
        "gca.dec0.g_a",
        "gca.dec0.g_f",
    ];
    let mut worst = 0.0f64;
    let mut worst_name = "";
    for name in names {
        let analytic = tape.grad(bound.var(name).unwrap());
        let at = model.params().get(name).unwrap().value.clone();
        let fd = finite_difference_gradient(
            |t| {
                let mut m = model.clone();
                m.params_mut().get_mut(name)?.value = t.clone();
                Ok(loss_of(&m))
            },
            &at,
            1e-4,
        )
        .unwrap();
        // key biases have an exactly-zero true gradient (softmax rows are
        // invariant to a per-row score shift); both sides read as roundoff
        let err = if analytic.l2_norm() < 1e-10 && fd.l2_norm() < 1e-10 {
            0.0
        } else {
            relative_error(&analytic, &fd)
        };
        if err > worst {
            worst = err;
            worst_name = name;
        }
    }
    gate.check(
        "3 gradient check",
        worst <= 1e-6,
        format!("worst relative error {worst:.3e} at {worst_name} over {} tensors", names.len()),
    );
}

// 4. Schedule anchors are float-exact for both published presets.
fn criterion_4(gate: &mut Gate) {
    let pre = OptimizerConfig { peak_lr: 7e-4, warmup_steps: 4000, ..Default::default() };
    let pre_sqrt = OptimizerConfig { decay: Decay::InverseSqrt, ..pre.clone() };
    let ft = OptimizerConfig {
        peak_lr: 2e-4,
        warmup_steps: 240,
        decay: Decay::InverseSqrt,
        ..Default::default()
    };
    let ok = lr_at_step(&pre, 0) == 1e-7
        && lr_at_step(&pre, 4000) == 7e-4
        && lr_at_step(&pre_sqrt, 4000) == 7e-4
        && lr_at_step(&ft, 0) == 1e-7
        && lr_at_step(&ft, 240) == 2e-4;
    gate.check(
        "4 schedule exactness",
        ok,
        format!(
            "lr(0)={:e}, lr(4000)={:e}, finetune lr(240)={:e}",
            lr_at_step(&pre, 0),
            lr_at_step(&pre, 4000),
            lr_at_step(&ft, 240)
        ),
    );
}

// 5. A freshly adapted (gate-zero) model scores exactly 0.500 on the
//    contrastive disambiguation set.
fn criterion_5(gate: &mut Gate) {
    let cfg = small_cfg(InsertionSite::Both);
    let base = BaseModel::build(cfg.clone(), 61).unwrap();
    let gated = AnyModel::Gated(GatedMMTModel::attach_adapters(base, 62).unwrap());
    let vocab = Vocab::build(&["a b c d e f g h i j".to_string()], 24).unwrap();
    let mut store = VisionEncodingStore::new(cfg.vision_dim);
    let mut rng = Rng::new(63).derive("c5-images");
    for i in 0..8 {
        store
            .insert(&format!("im{i}"), (0..cfg.vision_dim).map(|_| rng.next_normal()).collect())
            .unwrap();
    }
    let mut instances = Vec::new();
    for i in 0..8 {
        instances.push(CommuteInstance {
            src: vec!["a".into(), format!("w{i}")],
            cases: vec![
                (format!("im{i}"), vec!["b".into(), "c".into()]),
                (format!("im{}", (i + 1) % 8), vec!["d".into()]),
            ],
        });
    }
    let score = commute_score(&gated, &vocab, &instances, &store).unwrap();
    gate.check(
        "5 contrastive score at gate zero",
        score == 0.5,
        format!("commute_score = {score}"),
    );
}

// 6. Synthetic grounding: masked training must (a) reach >=3x chance
//    accuracy on the hidden-word position, (b) open the attention gates past
//    0.01, and (c) open them strictly wider than an unmasked control with
//    the same budget and seed. Whole experiment: <=2000 steps, <15 minutes.
fn criterion_6(gate: &mut Gate) {
    let started = Instant::now();
    let spec = SyntheticSpec::default(); // 16 content words, 32-dim encodings
    let corpus = generate_synthetic_grounded_corpus(71, 2000, &spec).unwrap();
    let holdout = generate_synthetic_grounded_corpus(72, 200, &spec).unwrap();
    let mut lines = Vec::new();
    for r in corpus.unmasked.records.iter() {
        lines.push(r.src_text());
        lines.push(r.tgt_text());
    }
    let vocab = Vocab::build(&lines, 40).unwrap();
    let mut store = VisionEncodingStore::new(spec.vision_dim);
    for (id, v) in &corpus.encodings {
        store.insert(id, v.clone()).unwrap();
    }

    let cfg = ModelConfig {
        d: 32,
        vocab_size: 40,
        n_enc: 1,
        n_dec: 1,
        heads: 4,
        d_ff: 64,
        vision_dim: 32,
        latents: 4,
        resampler_depth: 1,
        heads_vt: 4,
        d_ff_vt: 64,
        insertion_site: InsertionSite::Decoder,
        max_len: 8,
        ..Default::default()
    };

    // stand-in for a converged translation model: fit the base on the
    // unmasked text so the control arm has nothing left to learn
    let base = AnyModel::Base(BaseModel::build(cfg.clone(), 73).unwrap());
    let base_opts = TrainOptions {
        mode: TrainMode::Base,
        opt: OptimizerConfig {
            peak_lr: 3e-3,
            warmup_steps: 50,
            epochs: 10,
            batch_tokens: 256,
            ..Default::default()
        },
        seed: 74,
        max_steps: Some(400),
        verbose: false,
    };
    let base_run = train(base, &vocab, &corpus.unmasked, None, &store, &base_opts).unwrap();
    let trained_base = match base_run.model {
        AnyModel::Base(b) => b,
        AnyModel::Gated(_) => unreachable!(),
    };

    let adapter_opts = TrainOptions {
        mode: TrainMode::Pretrain,
        opt: OptimizerConfig {
            peak_lr: 3e-3,
            warmup_steps: 50,
            epochs: 20,
            batch_tokens: 256,
            ..Default::default()
        },
        seed: 75,
        max_steps: Some(800),
        verbose: false,
    };
    let masked_model = AnyModel::Gated(
        GatedMMTModel::attach_adapters(trained_base.clone(), 76).unwrap(),
    );
    let masked_run =
        train(masked_model, &vocab, &corpus.masked, None, &store, &adapter_opts).unwrap();
    let control_model =
        AnyModel::Gated(GatedMMTModel::attach_adapters(trained_base, 76).unwrap());
    let control_run =
        train(control_model, &vocab, &corpus.unmasked, None, &store, &adapter_opts).unwrap();

    // (a) hidden-word accuracy on held-out masked records
    let mut correct = 0usize;
    for r in &holdout.masked.records {
        let images = store.encoding_set(&r.images).unwrap();
        let src = encode_src(&vocab, &r.src);
        let out = masked_run.model.greedy_decode(&src, &images, cfg.max_len).unwrap();
        let words: Vec<&str> = out
            .iter()
            .filter(|&&t| t != EOS_ID && t != PAD_ID)
            .map(|&t| vocab.token(t))
            .collect();
        if words.get(holdout.target_content_index).copied()
            == Some(r.tgt[holdout.target_content_index].as_str())
        {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / holdout.masked.records.len() as f64;
    let chance = 1.0 / spec.content_words as f64;

    // (b) and (c): gate magnitudes
    let max_gamma = |m: &AnyModel| {
        m.gate_values()
            .iter()
            .map(|g| g.gamma_a.abs())
            .fold(0.0f64, f64::max)
    };
    let masked_gamma = max_gamma(&masked_run.model);
    let control_gamma = max_gamma(&control_run.model);
    let total_steps = base_run.steps + masked_run.steps;
    let elapsed = started.elapsed();

    gate.check(
        "6a grounding accuracy",
        accuracy >= 3.0 * chance && total_steps <= 2000 && elapsed.as_secs() < 900,
        format!(
            "accuracy {accuracy:.3} vs 3x chance {:.3}, {total_steps} steps, {:.1}s",
            3.0 * chance,
            elapsed.as_secs_f64()
        ),
    );
    gate.check(
        "6b gates open under masking",
        masked_gamma > 0.01,
        format!("max |gamma_a| = {masked_gamma:.4}"),
    );
    gate.check(
        "6c masked gates exceed control",
        masked_gamma > control_gamma,
        format!("masked {masked_gamma:.4} vs control {control_gamma:.4}"),
    );
}

// independent BLEU4 oracle: string-keyed n-gram maps, written separately
// from the library implementation
fn oracle_bleu4(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    fn grams(toks: &[String], n: usize) -> HashMap<String, usize> {
        let mut m = HashMap::new();
        for i in 0..toks.len().saturating_sub(n - 1) {
            *m.entry(toks[i..i + n].join("\u{1}")).or_insert(0usize) += 1;
        }
        m
    }
    let (mut c, mut r) = (0usize, 0usize);
    let mut num = [0usize; 4];
    let mut den = [0usize; 4];
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let hg = grams(h, n);
            let rg = grams(rf, n);
            for (g, k) in hg {
                den[n - 1] += k;
                num[n - 1] += k.min(*rg.get(&g).unwrap_or(&0));
            }
        }
    }
    let mut s = 0.0;
    for n in 0..4 {
        if num[n] == 0 || den[n] == 0 {
            return 0.0;
        }
        s += 0.25 * ((num[n] as f64) / (den[n] as f64)).ln();
    }
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * s.exp()
}

// 7. Library BLEU4 agrees with the independent oracle to 1e-9.
fn criterion_7(gate: &mut Gate) {
    let t = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    let fixtures: Vec<(Vec<Vec<String>>, Vec<Vec<String>>)> = vec![
        (
            vec![t("the cat sat on the mat in the sun")],
            vec![t("the cat sat on the mat in the sun")],
        ),
        (
            vec![t("a man rides a red bike down the hill"), t("two dogs play")],
            vec![t("a man rides the red bike down a hill"), t("two dogs play fetch")],
        ),
        (
            vec![
                t("der der der der der"),
                t("ein hund springt ueber den zaun heute morgen"),
                t("x y"),
            ],
            vec![
                t("der hund der katze"),
                t("ein hund springt ueber einen zaun heute frueh"),
                t("x y z w"),
            ],
        ),
    ];
    let mut worst = 0.0f64;
    for (h, r) in &fixtures {
        worst = worst.max((bleu4(h, r) - oracle_bleu4(h, r)).abs());
    }
    gate.check(
        "7 BLEU4 oracle equivalence",
        worst <= 1e-9,
        format!("max |diff| = {worst:.3e} over {} fixtures", fixtures.len()),
    );
}

// 8. Collation bookkeeping: the pre-training mixture decomposes into its
//    three parts and fine-tune collation exactly doubles the input.
fn criterion_8(gate: &mut Gate) {
    let phrases = vec![
        TopicPhrase::new("red car").unwrap(),
        TopicPhrase::new("small dog").unwrap(),
    ];
    let captions: Vec<TripletRecord> = (0..10)
        .map(|i| {
            let src = if i % 2 == 0 { "a red car waits" } else { "a cat sleeps" };
            TripletRecord::new(src, "ein satz", vec![format!("img{i}")]).unwrap()
        })
        .collect();
    let textonly: Vec<TripletRecord> =
        (0..7).map(|i| TripletRecord::new(&format!("s{i}"), "t", vec![]).unwrap()).collect();
    let pre = collate_pretrain(&captions, &phrases, &textonly).unwrap();
    let pre_ok = pre.stats.masked == 5
        && pre.stats.fully_masked == 10
        && pre.stats.text_only == 7
        && pre.stats.total == 22
        && pre.records.len() == 22;

    let triplets: Vec<TripletRecord> = (0..29)
        .map(|i| {
            TripletRecord::new("a red car stops", "ein auto", vec![format!("i{i}")]).unwrap()
        })
        .collect();
    let ft = collate_finetune(&triplets, true, &phrases).unwrap();
    let ft_ok = ft.records.len() == 58
        && ft.stats.total == 58
        && ft.records[..29].iter().all(|r| !r.images.is_empty())
        && ft.records[29..].iter().all(|r| r.images.is_empty());
    gate.check(
        "8 collation counts",
        pre_ok && ft_ok,
        format!(
            "pretrain 5+10+7={}, finetune 29 -> {}",
            pre.stats.total,
            ft.records.len()
        ),
    );
}

// 9. The resampler emits exactly `latents` vision tokens for 0, 1, 4, and
//    17 input images, and its output is bit-invariant under permutation.
fn criterion_9(gate: &mut Gate) {
    let cfg = small_cfg(InsertionSite::Encoder);
    let base = BaseModel::build(cfg.clone(), 81).unwrap();
    let gated = GatedMMTModel::attach_adapters(base, 82).unwrap();
    let mut shapes_ok = true;
    for l in [0usize, 1, 4, 17] {
        let images = random_images(l, cfg.vision_dim, 83 + l as u64);
        let p = gated.resample(&images).unwrap();
        shapes_ok &= p.shape() == [cfg.latents, cfg.d];
    }
    let images = random_images(17, cfg.vision_dim, 90);
    let p1 = gated.resample(&images).unwrap();
    let mut order: Vec<usize> = (0..17).collect();
    Rng::new(91).derive("c9-perm").shuffle(&mut order);
    let shuffled: Vec<Vec<f64>> =
        order.iter().map(|&i| images.vectors()[i].clone()).collect();
    let p2 = gated
        .resample(&VisionEncodingSet::from_vectors(cfg.vision_dim, shuffled).unwrap())
        .unwrap();
    let invariant = p1.bits_eq(&p2);
    gate.check(
        "9 resampler contract",
        shapes_ok && invariant,
        format!(
            "shapes fixed at {}x{}, permutation bit-invariant: {invariant}",
            cfg.latents, cfg.d
        ),
    );
}

// 10. Every persistent artifact round-trips bit-exactly: triplets, vision
//     store, checkpoints (with optimizer state), vocab, and run config.
fn criterion_10(gate: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut notes = Vec::new();

    let ds = Dataset {
        records: vec![
            TripletRecord::new("a b c", "d e", vec!["i1".into(), "i2".into()]).unwrap(),
            TripletRecord::new("<unk>", "f", vec![]).unwrap(),
        ],
        ..Default::default()
    };
    let tp = dir.path().join("t.jsonl");
    write_triplets(&ds, &tp).unwrap();
    let ds2 = read_triplets(&tp).unwrap();
    if ds2.records != ds.records {
        ok = false;
        notes.push("triplets");
    }

    let mut store = VisionEncodingStore::new(5);
    let mut rng = Rng::new(101).derive("c10");
    for i in 0..9 {
        store
            .insert(&format!("id{i}"), (0..5).map(|_| rng.next_normal()).collect())
            .unwrap();
    }
    let sp = dir.path().join("v.bin");
    store.write(&sp).unwrap();
    if VisionEncodingStore::read(&sp).unwrap() != store {
        ok = false;
        notes.push("vision store");
    }

    let cfg = small_cfg(InsertionSite::Both);
    let base = BaseModel::build(cfg, 102).unwrap();
    let mut model = AnyModel::Gated(GatedMMTModel::attach_adapters(base, 103).unwrap());
    // run one optimizer step so moments and moved weights are exercised
    let mut state = AdamState::default();
    for (_, p) in model.params_mut().iter_mut() {
        let mut r = Rng::new(104).derive(&p.name);
        for g in p.grad.data_mut() {
            *g = r.next_normal();
        }
    }
    adam_step(&mut model, &mut state, &OptimizerConfig::default(), 1e-3).unwrap();
    let cp = dir.path().join("m.ckpt");
    let ckpt = Checkpoint {
        gates: model.gate_values(),
        model,
        optimizer: Some(state),
        seed: 13,
        step: 1,
    };
    ckpt.write(&cp).unwrap();
    let back = Checkpoint::read(&cp).unwrap();
    let params_match = ckpt
        .model
        .params()
        .iter()
        .zip(back.model.params().iter())
        .all(|((n1, p1), (n2, p2))| {
            n1 == n2 && p1.trainable == p2.trainable && p1.value.bits_eq(&p2.value)
        });
    let opt_match = {
        let (a, b) = (ckpt.optimizer.as_ref().unwrap(), back.optimizer.as_ref().unwrap());
        a.step == b.step && a.m.iter().all(|(n, t)| t.bits_eq(&b.m[n]))
    };
    if !(params_match && opt_match && back.gates == ckpt.gates) {
        ok = false;
        notes.push("checkpoint");
    }

    let vocab = Vocab::build(&["alpha beta gamma alpha".to_string()], 10).unwrap();
    let vp = dir.path().join("vocab.txt");
    vocab.save(&vp).unwrap();
    if Vocab::load(&vp).unwrap() != vocab {
        ok = false;
        notes.push("vocab");
    }

    let mut rc = RunConfig::default();
    rc.optimizer.warmup_steps = 240;
    rc.model.d = 32;
    let rp = dir.path().join("run.toml");
    rc.save(&rp).unwrap();
    if RunConfig::load(&rp).unwrap() != rc {
        ok = false;
        notes.push("run config");
    }

    gate.check(
        "10 round trips",
        ok,
        if notes.is_empty() {
            "triplets, store, checkpoint, vocab, config all bit-exact".to_string()
        } else {
            format!("failed: {}", notes.join(", "))
        },
    );
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    criterion_10(&mut gate);
    gate.finish();
}
