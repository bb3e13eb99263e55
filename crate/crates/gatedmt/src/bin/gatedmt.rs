//! Command-line front end: corpus tooling, the four training modes,
//! evaluation, decoding, and checkpoint inspection.

use clap::{Parser, Subcommand};
use gatedmt::datapipe::{
    collate_finetune, collate_pretrain, generate_synthetic_grounded_corpus, read_phrases,
    read_triplets, write_triplets, SyntheticSpec, Vocab,
};
use gatedmt::error::{Error, Result};
use gatedmt::eval::{commute_score, evaluate, read_commute, Regime};
use gatedmt::io::{Checkpoint, RunConfig, VisionEncodingStore};
use gatedmt::model::{
    explain_param_count, AnyModel, BaseModel, GatedMMTModel, InsertionSite, VisionEncodingSet,
};
use gatedmt::trainer::{gates_csv, train, TrainMode, TrainOptions};
use gatedmt::{EOS_ID, PAD_ID};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "gatedmt", version, about = "Gated multimodal machine translation")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 13)]
    seed: u64,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override the adapter insertion site (encoder|decoder|both).
    #[arg(long, global = true)]
    insertion_site: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a frequency-ranked vocabulary from triplet files.
    BuildVocab {
        /// Triplet JSONL inputs.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 10000)]
        max_vocab: usize,
    },
    /// Assemble the pre-training mixture from captions, phrases, and text.
    CollatePretrain {
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        phrases: PathBuf,
        #[arg(long)]
        text_only: PathBuf,
    },
    /// Duplicate a triplet set into with-image and image-stripped halves.
    CollateFinetune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        phrases: PathBuf,
        /// Mask topic phrases in the with-image half.
        #[arg(long)]
        masked: bool,
    },
    /// Generate the synthetic grounded corpus and its vision store.
    SynthCorpus {
        #[arg(long, default_value_t = 2000)]
        size: usize,
        #[arg(long, default_value_t = 16)]
        content_words: usize,
    },
    /// Train the text-only base model from scratch.
    TrainBase {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Attach adapters to a base checkpoint and pre-train them.
    Pretrain {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        vision_store: PathBuf,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Fine-tune a pre-trained multimodal checkpoint on translation triplets.
    Finetune {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        vision_store: PathBuf,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Train freshly attached adapters directly on fine-tune data.
    DirectTrain {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        vision_store: PathBuf,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Score a checkpoint: BLEU4/perplexity on triplets, or the contrastive
    /// disambiguation score with --commute.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        commute: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        vision_store: Option<PathBuf>,
        #[arg(long, default_value = "multimodal")]
        regime: String,
    },
    /// Translate sources (one per line) with beam search.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        vision_store: Option<PathBuf>,
        /// Image ids for every line, comma separated (applied to all lines).
        #[arg(long)]
        images: Option<String>,
        #[arg(long, default_value_t = 1)]
        beam: usize,
    },
    /// Dump a checkpoint's gate trajectory snapshot as CSV.
    GatesExport {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Print the closed-form parameter count for the configured model.
    ParamCount,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(site) = &cli.insertion_site {
        cfg.model.insertion_site = site.parse::<InsertionSite>()?;
    }
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn snapshot_run(dir: &Path, cfg: &RunConfig, seed: u64) -> Result<()> {
    ensure_out(dir)?;
    cfg.save(&dir.join("run.toml"))?;
    std::fs::write(dir.join("seed.txt"), format!("{seed}\n"))?;
    Ok(())
}

fn load_store(path: Option<&PathBuf>, dim: usize) -> Result<VisionEncodingStore> {
    match path {
        Some(p) => VisionEncodingStore::read(p),
        None => Ok(VisionEncodingStore::new(dim)),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_training(
    cli: &Cli,
    mode: TrainMode,
    model: AnyModel,
    train_path: &Path,
    valid_path: Option<&PathBuf>,
    vocab_path: &Path,
    store: VisionEncodingStore,
    max_steps: Option<u64>,
    cfg: &RunConfig,
) -> Result<()> {
    let vocab = Vocab::load(vocab_path)?;
    let data = read_triplets(train_path)?;
    let valid = match valid_path {
        Some(p) => Some(read_triplets(p)?),
        None => None,
    };
    snapshot_run(&cli.out, cfg, cli.seed)?;
    let opts = TrainOptions {
        mode,
        opt: cfg.optimizer.clone(),
        seed: cli.seed,
        max_steps,
        verbose: true,
    };
    let run = train(model, &vocab, &data, valid.as_ref(), &store, &opts)?;
    std::fs::write(cli.out.join("losses.csv"), run.losses_csv())?;
    if run.model.is_gated() {
        std::fs::write(cli.out.join("gates.csv"), gates_csv(&run.gates))?;
    }
    let steps = run.steps;
    let last_loss = run.last_loss();
    let best_val_bleu = run.best_val_bleu;
    let ckpt = Checkpoint {
        gates: run.model.gate_values(),
        model: run.model,
        optimizer: Some(run.optimizer),
        seed: cli.seed,
        step: steps,
    };
    ckpt.write(&cli.out.join("model.ckpt"))?;
    println!(
        "trained {steps} steps, final loss {last_loss:.6}{}",
        match best_val_bleu {
            Some(b) => format!(", best validation BLEU4 {b:.4}"),
            None => String::new(),
        }
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.cmd {
        Cmd::BuildVocab { inputs, max_vocab } => {
            let mut lines = Vec::new();
            for p in inputs {
                let ds = read_triplets(p)?;
                for r in &ds.records {
                    lines.push(r.src_text());
                    lines.push(r.tgt_text());
                }
            }
            let vocab = Vocab::build(&lines, *max_vocab)?;
            ensure_out(&cli.out)?;
            let path = cli.out.join("vocab.txt");
            vocab.save(&path)?;
            println!("wrote {} entries to {}", vocab.len(), path.display());
        }
        Cmd::CollatePretrain { captions, phrases, text_only } => {
            let caps = read_triplets(captions)?;
            let phr = read_phrases(phrases)?;
            let text = read_triplets(text_only)?;
            let ds = collate_pretrain(&caps.records, &phr, &text.records)?;
            ensure_out(&cli.out)?;
            let path = cli.out.join("pretrain.jsonl");
            write_triplets(&ds, &path)?;
            println!(
                "masked {} fully_masked {} text_only {} total {} -> {}",
                ds.stats.masked,
                ds.stats.fully_masked,
                ds.stats.text_only,
                ds.stats.total,
                path.display()
            );
        }
        Cmd::CollateFinetune { input, phrases, masked } => {
            let ds_in = read_triplets(input)?;
            let phr = read_phrases(phrases)?;
            let ds = collate_finetune(&ds_in.records, *masked, &phr)?;
            ensure_out(&cli.out)?;
            let path = cli.out.join("finetune.jsonl");
            write_triplets(&ds, &path)?;
            println!(
                "with_image {} text_only {} total {} -> {}",
                ds.stats.masked,
                ds.stats.text_only,
                ds.stats.total,
                path.display()
            );
        }
        Cmd::SynthCorpus { size, content_words } => {
            let spec = SyntheticSpec {
                content_words: *content_words,
                vision_dim: cfg.model.vision_dim,
            };
            let corpus = generate_synthetic_grounded_corpus(cli.seed, *size, &spec)?;
            ensure_out(&cli.out)?;
            write_triplets(&corpus.masked, &cli.out.join("masked.jsonl"))?;
            write_triplets(&corpus.unmasked, &cli.out.join("unmasked.jsonl"))?;
            let mut store = VisionEncodingStore::new(corpus.vision_dim);
            for (id, v) in &corpus.encodings {
                store.insert(id, v.clone())?;
            }
            store.write(&cli.out.join("vision.bin"))?;
            let mut lines = Vec::new();
            for r in &corpus.unmasked.records {
                lines.push(r.src_text());
                lines.push(r.tgt_text());
            }
            // include <unk> fillers seen only in the masked variant
            lines.push("<unk>".to_string());
            let vocab = Vocab::build(&lines, 4 + 2 * content_words + 16)?;
            vocab.save(&cli.out.join("vocab.txt"))?;
            println!(
                "wrote {size} masked and unmasked records, {} encodings, vocab {} -> {}",
                corpus.encodings.len(),
                vocab.len(),
                cli.out.display()
            );
        }
        Cmd::TrainBase { train: train_path, vocab, max_steps } => {
            let model = AnyModel::Base(BaseModel::build(cfg.model.clone(), cli.seed)?);
            let store = VisionEncodingStore::new(cfg.model.vision_dim);
            run_training(
                &cli,
                TrainMode::Base,
                model,
                train_path,
                None,
                vocab,
                store,
                *max_steps,
                &cfg,
            )?;
        }
        Cmd::Pretrain { init, train: train_path, vocab, vision_store, max_steps } => {
            let mut base = match Checkpoint::read(init)?.model {
                AnyModel::Base(b) => b,
                AnyModel::Gated(_) => {
                    return Err(Error::config(
                        "pretrain expects a text-only base checkpoint; use finetune to continue a multimodal one",
                    ))
                }
            };
            if let Some(site) = &cli.insertion_site {
                base.cfg.insertion_site = site.parse::<InsertionSite>()?;
            }
            let model = AnyModel::Gated(GatedMMTModel::attach_adapters(base, cli.seed)?);
            let store = VisionEncodingStore::read(vision_store)?;
            run_training(
                &cli,
                TrainMode::Pretrain,
                model,
                train_path,
                None,
                vocab,
                store,
                *max_steps,
                &cfg,
            )?;
        }
        Cmd::Finetune { init, train: train_path, valid, vocab, vision_store, max_steps } => {
            let model = Checkpoint::read(init)?.model;
            if !model.is_gated() {
                return Err(Error::config("finetune expects a multimodal checkpoint"));
            }
            let store = VisionEncodingStore::read(vision_store)?;
            run_training(
                &cli,
                TrainMode::Finetune,
                model,
                train_path,
                valid.as_ref(),
                vocab,
                store,
                *max_steps,
                &cfg,
            )?;
        }
        Cmd::DirectTrain { init, train: train_path, valid, vocab, vision_store, max_steps } => {
            let mut base = match Checkpoint::read(init)?.model {
                AnyModel::Base(b) => b,
                AnyModel::Gated(_) => {
                    return Err(Error::config("direct-train expects a text-only base checkpoint"))
                }
            };
            if let Some(site) = &cli.insertion_site {
                base.cfg.insertion_site = site.parse::<InsertionSite>()?;
            }
            let model = AnyModel::Gated(GatedMMTModel::attach_adapters(base, cli.seed)?);
            let store = VisionEncodingStore::read(vision_store)?;
            run_training(
                &cli,
                TrainMode::Direct,
                model,
                train_path,
                valid.as_ref(),
                vocab,
                store,
                *max_steps,
                &cfg,
            )?;
        }
        Cmd::Evaluate { checkpoint, test, commute, vocab, vision_store, regime } => {
            let model = Checkpoint::read(checkpoint)?.model;
            let vocab = Vocab::load(vocab)?;
            let store = load_store(vision_store.as_ref(), model.cfg().vision_dim)?;
            ensure_out(&cli.out)?;
            if let Some(c) = commute {
                let instances = read_commute(c)?;
                let score = commute_score(&model, &vocab, &instances, &store)?;
                let report = serde_json::json!({
                    "commute_score": score,
                    "instances": instances.len(),
                });
                std::fs::write(
                    cli.out.join("eval.json"),
                    serde_json::to_string_pretty(&report).expect("json"),
                )?;
                println!("commute_score {score:.3} over {} instances", instances.len());
            } else if let Some(t) = test {
                let data = read_triplets(t)?;
                let regime: Regime = regime.parse()?;
                let report = evaluate(&model, &vocab, &data, &store, regime, cli.seed)?;
                std::fs::write(
                    cli.out.join("eval.json"),
                    serde_json::to_string_pretty(&report)
                        .map_err(|e| Error::data(format!("serialize report: {e}")))?,
                )?;
                println!(
                    "regime {:?}: BLEU4 {:.4}, mean perplexity {:.3} over {} sentences",
                    report.regime, report.bleu4, report.mean_perplexity, report.sentences
                );
            } else {
                return Err(Error::config("evaluate needs --test or --commute"));
            }
        }
        Cmd::Decode { checkpoint, input, vocab, vision_store, images, beam } => {
            let model = Checkpoint::read(checkpoint)?.model;
            let vocab = Vocab::load(vocab)?;
            let store = load_store(vision_store.as_ref(), model.cfg().vision_dim)?;
            let image_ids: Vec<String> = images
                .as_deref()
                .unwrap_or("")
                .split(',')
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            let encodings = if image_ids.is_empty() {
                VisionEncodingSet::empty(model.cfg().vision_dim)
            } else {
                store.encoding_set(&image_ids)?
            };
            let text = std::fs::read_to_string(input)?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let toks: Vec<String> = line.split_whitespace().map(String::from).collect();
                let src = vocab.encode(&toks);
                let out = model.beam_decode(&src, &encodings, model.cfg().max_len, *beam)?;
                let words: Vec<String> = out
                    .into_iter()
                    .filter(|&t| t != EOS_ID && t != PAD_ID)
                    .map(|t| vocab.token(t).to_string())
                    .collect();
                println!("{}", words.join(" "));
            }
        }
        Cmd::GatesExport { checkpoint } => {
            let ckpt = Checkpoint::read(checkpoint)?;
            let mut out = String::from("step,epoch,layer,gamma_a,gamma_f\n");
            for g in &ckpt.gates {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    ckpt.step, 0, g.layer, g.gamma_a, g.gamma_f
                ));
            }
            print!("{out}");
        }
        Cmd::ParamCount => {
            println!("{}", explain_param_count(&cfg.model));
        }
    }
    Ok(())
}
