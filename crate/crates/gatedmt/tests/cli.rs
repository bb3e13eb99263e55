//! End-to-end checks of the command-line interface: the full pipeline on the
//! synthetic corpus, determinism of decoding, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gatedmt"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn gatedmt");
    assert!(
        out.status.success(),
        "gatedmt {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_toy_config(dir: &Path) -> String {
    let path = dir.join("toy.toml");
    std::fs::write(
        &path,
        "[model]\n\
         d = 32\nvocab_size = 64\nn_enc = 1\nn_dec = 1\nheads = 4\nd_ff = 64\n\
         vision_dim = 32\nlatents = 4\nresampler_depth = 1\nheads_vt = 4\nd_ff_vt = 64\n\
         insertion_site = \"decoder\"\nmax_len = 16\n\
         \n[optimizer]\n\
         peak_lr = 3e-3\nwarmup_steps = 20\nepochs = 2\nbatch_tokens = 256\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn pipeline_synth_train_evaluate_decode() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = dir.join("run");
    let out_s = out.to_string_lossy().into_owned();
    let cfg = write_toy_config(dir);

    run_ok(&["--config", &cfg, "--out", &out_s, "--seed", "7", "synth-corpus", "--size", "200"]);
    for f in ["masked.jsonl", "unmasked.jsonl", "vision.bin", "vocab.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }

    let masked = out.join("masked.jsonl").to_string_lossy().into_owned();
    let unmasked = out.join("unmasked.jsonl").to_string_lossy().into_owned();
    let vocab = out.join("vocab.txt").to_string_lossy().into_owned();
    let store = out.join("vision.bin").to_string_lossy().into_owned();

    // base training leaves a checkpoint, a config snapshot, and loss curve
    let base_dir = dir.join("base");
    let base_s = base_dir.to_string_lossy().into_owned();
    run_ok(&[
        "--config", &cfg, "--out", &base_s, "--seed", "7",
        "train-base", "--train", &unmasked, "--vocab", &vocab, "--max-steps", "60",
    ]);
    for f in ["model.ckpt", "run.toml", "seed.txt", "losses.csv"] {
        assert!(base_dir.join(f).exists(), "missing {f}");
    }

    // adapter pre-training on the masked corpus writes a gate trajectory
    let pre_dir = dir.join("pre");
    let pre_s = pre_dir.to_string_lossy().into_owned();
    let base_ckpt = base_dir.join("model.ckpt").to_string_lossy().into_owned();
    run_ok(&[
        "--config", &cfg, "--out", &pre_s, "--seed", "7",
        "pretrain", "--init", &base_ckpt, "--train", &masked,
        "--vocab", &vocab, "--vision-store", &store, "--max-steps", "40",
    ]);
    let gates = std::fs::read_to_string(pre_dir.join("gates.csv")).unwrap();
    assert!(gates.starts_with("step,epoch,layer,gamma_a,gamma_f\n"), "{gates}");

    // evaluation produces a JSON report
    let pre_ckpt = pre_dir.join("model.ckpt").to_string_lossy().into_owned();
    let eval_dir = dir.join("eval");
    let eval_s = eval_dir.to_string_lossy().into_owned();
    let out1 = run_ok(&[
        "--out", &eval_s, "evaluate", "--checkpoint", &pre_ckpt, "--test", &masked,
        "--vocab", &vocab, "--vision-store", &store, "--regime", "multimodal",
    ]);
    assert!(String::from_utf8_lossy(&out1.stdout).contains("BLEU4"));
    let report = std::fs::read_to_string(eval_dir.join("eval.json")).unwrap();
    assert!(report.contains("bleu4"), "{report}");

    // decoding is byte-identical across invocations
    let input = dir.join("src.txt");
    std::fs::write(&input, "ein <unk> hier\nder <unk> dort\n").unwrap();
    let input_s = input.to_string_lossy().into_owned();
    let d1 = run_ok(&[
        "decode", "--checkpoint", &pre_ckpt, "--input", &input_s,
        "--vocab", &vocab, "--vision-store", &store, "--images", "img03",
    ]);
    let d2 = run_ok(&[
        "decode", "--checkpoint", &pre_ckpt, "--input", &input_s,
        "--vocab", &vocab, "--vision-store", &store, "--images", "img03",
    ]);
    assert_eq!(d1.stdout, d2.stdout);
    assert_eq!(String::from_utf8_lossy(&d1.stdout).lines().count(), 2);

    // gates-export prints the CSV contract
    let g = run_ok(&["gates-export", "--checkpoint", &pre_ckpt]);
    assert!(String::from_utf8_lossy(&g.stdout).starts_with("step,epoch,layer,gamma_a,gamma_f"));
}

#[test]
fn param_count_prints_grand_total() {
    let out = run_ok(&["param-count"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("grand total"), "{text}");
}

#[test]
fn collation_commands_report_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let captions = dir.join("caps.jsonl");
    std::fs::write(
        &captions,
        "{\"src\":\"a red car waits\",\"tgt\":\"ein auto wartet\",\"images\":[\"i1\"]}\n\
         {\"src\":\"a cat sleeps\",\"tgt\":\"eine katze schlaeft\",\"images\":[\"i2\"]}\n",
    )
    .unwrap();
    let phrases = dir.join("phrases.txt");
    std::fs::write(&phrases, "red car\n").unwrap();
    let text = dir.join("text.jsonl");
    std::fs::write(&text, "{\"src\":\"hello\",\"tgt\":\"hallo\",\"images\":[]}\n").unwrap();

    let out_s = dir.join("out").to_string_lossy().into_owned();
    let o = run_ok(&[
        "--out", &out_s,
        "collate-pretrain",
        "--captions", captions.to_str().unwrap(),
        "--phrases", phrases.to_str().unwrap(),
        "--text-only", text.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("masked 1 fully_masked 2 text_only 1 total 4"), "{stdout}");

    let o2 = run_ok(&[
        "--out", &out_s,
        "collate-finetune",
        "--input", captions.to_str().unwrap(),
        "--phrases", phrases.to_str().unwrap(),
        "--masked",
    ]);
    let stdout2 = String::from_utf8_lossy(&o2.stdout);
    assert!(stdout2.contains("total 4"), "{stdout2}");
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // config error (unknown key) -> 1
    let bad_cfg = dir.join("bad.toml");
    std::fs::write(&bad_cfg, "[optimizer]\nleraning_rate = 1.0\n").unwrap();
    let out = bin()
        .args(["--config", bad_cfg.to_str().unwrap(), "param-count"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("leraning_rate"));

    // data error (missing input file) -> 2
    let out = bin()
        .args(["build-vocab", dir.join("nope.jsonl").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // malformed triplet line -> 2, naming the line
    let bad = dir.join("bad.jsonl");
    std::fs::write(&bad, "{\"src\":\"a\",\"tgt\":\"b\",\"images\":[]}\nnot json\n").unwrap();
    let out = bin().args(["build-vocab", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn insertion_site_override_changes_adapter_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_toy_config(dir);
    let out_s = dir.join("s").to_string_lossy().into_owned();
    run_ok(&["--config", &cfg, "--out", &out_s, "synth-corpus", "--size", "40"]);
    let base_s = dir.join("b").to_string_lossy().into_owned();
    let unmasked = dir.join("s/unmasked.jsonl").to_string_lossy().into_owned();
    let vocab = dir.join("s/vocab.txt").to_string_lossy().into_owned();
    let store = dir.join("s/vision.bin").to_string_lossy().into_owned();
    run_ok(&[
        "--config", &cfg, "--out", &base_s,
        "train-base", "--train", &unmasked, "--vocab", &vocab, "--max-steps", "3",
    ]);
    let base_ckpt = dir.join("b/model.ckpt").to_string_lossy().into_owned();
    let pre_s = dir.join("p").to_string_lossy().into_owned();
    run_ok(&[
        "--config", &cfg, "--out", &pre_s, "--insertion-site", "both",
        "pretrain", "--init", &base_ckpt, "--train", &unmasked,
        "--vocab", &vocab, "--vision-store", &store, "--max-steps", "3",
    ]);
    // 1 encoder + 1 decoder adapter -> two layers in the gate CSV
    let gates = std::fs::read_to_string(dir.join("p/gates.csv")).unwrap();
    let first_step_rows = gates
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("1,"))
        .count();
    assert_eq!(first_step_rows, 2, "{gates}");
}
