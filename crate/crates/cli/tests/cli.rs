use std::path::Path;
use std::process::{Command, Output};

fn rstfeat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rstfeat")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rstfeat(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: &str = "emb_dim = 6\nhidden = 5\neval_every = 20\nenc_word_dim = 3\nenc_pos_dim = 2\nenc_syntax_dim = 2\nenc_word_hidden = 2\nenc_syntax_hidden = 2\nenc_context_hidden = 2\n";

#[test]
fn summarization_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("summ.txt");
    std::fs::write(&cfg, format!("task = summ\nseed = 2\nincorporation = m1\nfeatures = latent\nmle_steps = 40\nmin_dec_len = 1\nmax_decode_len = 15\n{TINY}")).unwrap();

    let stdout = ok(&["synth", "--config", p(&cfg), "--n-docs", "15", "--out", p(&d.join("data"))]);
    assert!(stdout.contains("documents=15"));
    let corpus = d.join("data/corpus.jsonl");

    ok(&["ingest", "--input", p(&corpus), "--out", p(&d.join("clean"))]);
    assert!(std::fs::read_to_string(d.join("clean/ingest_report.txt")).unwrap().starts_with("documents=15\nrejected=0\n"));

    ok(&["extract-features", "--config", p(&cfg), "--input", p(&corpus), "--kind", "both", "--out", p(&d.join("feats"))]);
    let line = std::fs::read_to_string(d.join("feats/features.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert!(first.get("shallow").is_some() && first.get("latent").is_some());

    ok(&["train-summ", "--config", p(&cfg), "--input", p(&corpus), "--out", p(&d.join("run"))]);
    ok(&["decode", "--run", p(&d.join("run")), "--input", p(&corpus), "--out", p(&d.join("dec"))]);
    let decodes = std::fs::read_dir(d.join("dec")).unwrap().filter_map(|e| e.ok()).find(|e| e.file_name().to_string_lossy().ends_with(".jsonl"));
    let decodes = decodes.expect("decode wrote no jsonl").path();
    let stdout = ok(&["eval-rouge", "--input", p(&decodes), "--out", p(&d.join("rouge"))]);
    assert!(stdout.contains("r1_f1"));
    assert!(d.join("rouge/metrics.txt").is_file());

    ok(&["grad-check", "--config", p(&cfg), "--samples", "5", "--out", p(&d.join("gc"))]);
    assert!(std::fs::read_to_string(d.join("gc/gradcheck.txt")).unwrap().starts_with("max_relative_error="));
}

#[test]
fn petition_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("reg.txt");
    std::fs::write(&cfg, format!("task = petition\nseed = 3\nvariant = bilstm-edu-shallow\nsteps = 40\n{TINY}")).unwrap();
    ok(&["synth", "--config", p(&cfg), "--n-docs", "15", "--out", p(d)]);
    let corpus = d.join("corpus.jsonl");
    let stdout = ok(&["train-reg", "--config", p(&cfg), "--input", p(&corpus), "--out", p(&d.join("run"))]);
    assert!(stdout.contains("test_mae"));
    let stdout = ok(&["eval-reg", "--run", p(&d.join("run")), "--input", p(&corpus), "--out", p(&d.join("eval"))]);
    assert!(stdout.contains("mae"));
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("bad.txt");
    std::fs::write(&cfg, "task = summ\nseed = 1\nbeam = 3\n").unwrap();
    let out = rstfeat(&["train-summ", "--config", p(&cfg), "--out", p(d)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    std::fs::write(&cfg, "task = petition\nseed = 1\nvariant = cnn\nincorporation = m3\n").unwrap();
    assert!(!rstfeat(&["train-reg", "--config", p(&cfg), "--out", p(d)]).status.success());

    let input = d.join("in.jsonl");
    std::fs::write(&input, "{\"doc_id\": 1}\n").unwrap();
    assert!(!rstfeat(&["ingest", "--strict", "--input", p(&input), "--out", p(d)]).status.success());
    ok(&["ingest", "--input", p(&input), "--out", p(d)]);
    assert!(std::fs::read_to_string(d.join("ingest_report.txt")).unwrap().contains("rejected=1"));
}
