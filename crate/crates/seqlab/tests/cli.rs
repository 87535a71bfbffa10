//! End-to-end checks of the `seqlab` binary: every subcommand, the file
//! formats it reads and writes, and its exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use seqlab::data::{parse_conll, validate_bio};
use seqlab::eval::extract_chunks;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqlab"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn seqlab");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn train_tiny(dir: &Path, train: &Path, val: &Path, ckpt: &Path, seed: u64) {
    let _ = dir;
    run_ok(bin().args([
        "train",
        "--train",
        train.to_str().unwrap(),
        "--validation",
        val.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scratch-embeddings",
        "--word-dim",
        "10",
        "--char-dim",
        "6",
        "--hidden-char",
        "4",
        "--hidden-word",
        "6",
        "--batch-size",
        "16",
        "--epochs",
        "30",
        "--phase1-epochs",
        "30",
        "--seed",
        &seed.to_string(),
    ]));
}

#[test]
fn synth_writes_a_parsable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.tsv");
    run_ok(bin().args([
        "synth",
        "--seed",
        "3",
        "--sentences",
        "25",
        "--out",
        path.to_str().unwrap(),
    ]));
    let corpus = parse_conll(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(corpus.sentences.len(), 25);
    assert!(corpus.repairs.is_empty());
    // same seed, same bytes
    let second = dir.path().join("synth2.tsv");
    run_ok(bin().args([
        "synth",
        "--seed",
        "3",
        "--sentences",
        "25",
        "--out",
        second.to_str().unwrap(),
    ]));
    assert_eq!(fs::read(&path).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn embed_train_is_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("text.txt");
    fs::write(
        &corpus,
        "con mèo nhỏ ngủ trên mái nhà\ncon chó to chạy quanh sân\nmèo và chó là bạn\n",
    )
    .unwrap();
    let out_a = dir.path().join("emb_a.txt");
    let out_b = dir.path().join("emb_b.txt");
    for out in [&out_a, &out_b] {
        run_ok(bin().args([
            "embed-train",
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--dim",
            "10",
            "--epochs",
            "3",
            "--seed",
            "11",
        ]));
    }
    assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
    let text = fs::read_to_string(&out_a).unwrap();
    let header = text.lines().next().unwrap();
    let fields: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(fields[1], "10");
    let rows: usize = fields[0].parse().unwrap();
    assert_eq!(text.lines().count(), rows + 1);
}

#[test]
fn train_eval_tag_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    let val = dir.path().join("val.tsv");
    run_ok(bin().args([
        "synth", "--seed", "21", "--sentences", "80", "--out", train.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "synth", "--seed", "22", "--sentences", "20", "--out", val.to_str().unwrap(),
    ]));
    let ckpt = dir.path().join("model.ckpt");
    train_tiny(dir.path(), &train, &val, &ckpt, 5);
    assert!(ckpt.exists());
    assert!(dir.path().join("model.ckpt.final").exists());

    // evaluation is reproducible and shaped like the results table
    let eval_a = run_ok(bin().args([
        "eval", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", val.to_str().unwrap(),
    ]));
    let eval_b = run_ok(bin().args([
        "eval", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", val.to_str().unwrap(),
    ]));
    assert_eq!(eval_a.stdout, eval_b.stdout);
    let report = String::from_utf8(eval_a.stdout).unwrap();
    for needle in ["Precision", "Recall", "F1-Score", "LOC", "PER", "ORG", "MISC", "Avg/total", "counts:"] {
        assert!(report.contains(needle), "report missing {needle}:\n{report}");
    }

    // tagging preserves line structure and emits clean IOB2
    let untagged = dir.path().join("untagged.tsv");
    let val_text = fs::read_to_string(&val).unwrap();
    let three_col: String = val_text
        .lines()
        .map(|l| {
            if l.trim().is_empty() {
                String::from("\n")
            } else {
                let mut parts = l.split('\t');
                format!(
                    "{}\t{}\t{}\n",
                    parts.next().unwrap(),
                    parts.next().unwrap(),
                    parts.next().unwrap()
                )
            }
        })
        .collect();
    fs::write(&untagged, &three_col).unwrap();
    let tagged = dir.path().join("tagged.tsv");
    run_ok(bin().args([
        "tag",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        untagged.to_str().unwrap(),
        "--out",
        tagged.to_str().unwrap(),
    ]));
    let tagged_text = fs::read_to_string(&tagged).unwrap();
    assert_eq!(tagged_text.lines().count(), three_col.lines().count());
    let reparsed = parse_conll(&tagged_text).unwrap();
    assert_eq!(reparsed.repairs.len(), 0, "predicted tags must be clean IOB2");
    for sentence in &reparsed.sentences {
        let tags: Vec<&str> = sentence.iter().map(|t| t.ner.as_str()).collect();
        assert!(validate_bio(&tags).is_empty());
        // chunk-extraction round trip stays stable
        let spans = extract_chunks(&tags);
        let rendered = seqlab::eval::render_iob2(&spans, tags.len());
        assert_eq!(extract_chunks(&rendered), spans);
    }

    // 4-column input is accepted with its NER column ignored
    let retagged = run_ok(bin().args([
        "tag", "--checkpoint", ckpt.to_str().unwrap(), "--input", val.to_str().unwrap(),
    ]));
    let retagged_text = String::from_utf8(retagged.stdout).unwrap();
    assert_eq!(retagged_text.lines().count(), val_text.lines().count());
}

#[test]
fn tagging_empty_input_succeeds_with_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    let val = dir.path().join("val.tsv");
    run_ok(bin().args(["synth", "--seed", "31", "--sentences", "30", "--out", train.to_str().unwrap()]));
    run_ok(bin().args(["synth", "--seed", "32", "--sentences", "8", "--out", val.to_str().unwrap()]));
    let ckpt = dir.path().join("tiny.ckpt");
    train_tiny(dir.path(), &train, &val, &ckpt, 9);

    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let out = run_ok(bin().args([
        "tag", "--checkpoint", ckpt.to_str().unwrap(), "--input", empty.to_str().unwrap(),
    ]));
    assert!(out.stdout.is_empty());
}

#[test]
fn training_echoes_config_and_respects_file_plus_flags() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    let val = dir.path().join("val.tsv");
    run_ok(bin().args(["synth", "--seed", "41", "--sentences", "20", "--out", train.to_str().unwrap()]));
    run_ok(bin().args(["synth", "--seed", "42", "--sentences", "6", "--out", val.to_str().unwrap()]));
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "Hidden size word = 6\nHidden size char = 4\nCharacter dimension = 6\nWord dimension = 10\nBatch size = 8\nepochs = 2\nscratch_embeddings = true\ntrain = {}\nvalidation = {}\ncheckpoint = {}\n",
            train.display(),
            val.display(),
            dir.path().join("conf.ckpt").display()
        ),
    )
    .unwrap();
    let out = run_ok(bin().args([
        "train",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "123",
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("# seed = 123"), "flag must override file:\n{stdout}");
    assert!(stdout.contains("# Hidden size word = 6"));
    assert!(stdout.contains("# Update function = Nadam"));
    let epochs = stdout.lines().filter(|l| l.starts_with("epoch ")).count();
    assert_eq!(epochs, 2);
}

#[test]
fn pretrained_embeddings_feed_directly_into_training() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    let val = dir.path().join("val.tsv");
    run_ok(bin().args(["synth", "--seed", "51", "--sentences", "24", "--out", train.to_str().unwrap()]));
    run_ok(bin().args(["synth", "--seed", "52", "--sentences", "8", "--out", val.to_str().unwrap()]));

    // tokenized text for skip-gram: the surfaces of the training corpus
    let text: String = fs::read_to_string(&train)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .chunks(6)
        .map(|c| format!("{}\n", c.join(" ")))
        .collect();
    let corpus_txt = dir.path().join("text.txt");
    fs::write(&corpus_txt, text).unwrap();
    let vectors = dir.path().join("vectors.txt");
    run_ok(bin().args([
        "embed-train",
        "--corpus",
        corpus_txt.to_str().unwrap(),
        "--out",
        vectors.to_str().unwrap(),
        "--dim",
        "8",
        "--epochs",
        "1",
    ]));

    let ckpt = dir.path().join("pre.ckpt");
    run_ok(bin().args([
        "train",
        "--train",
        train.to_str().unwrap(),
        "--validation",
        val.to_str().unwrap(),
        "--embeddings",
        vectors.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--word-dim",
        "8",
        "--char-dim",
        "4",
        "--hidden-char",
        "3",
        "--hidden-word",
        "4",
        "--epochs",
        "2",
        "--batch-size",
        "8",
    ]));
    run_ok(bin().args([
        "eval", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", val.to_str().unwrap(),
    ]));
}

#[test]
fn eval_rejects_tags_outside_the_checkpoint_inventory() {
    let dir = tempfile::tempdir().unwrap();
    // training data mentions only PER
    let train = dir.path().join("per.tsv");
    fs::write(
        &train,
        "An\tNp\tB-NP\tB-PER\nngủ\tV\tB-VP\tO\n\nMai\tNp\tB-NP\tB-PER\nchạy\tV\tB-VP\tO\n\n",
    )
    .unwrap();
    let ckpt = dir.path().join("per.ckpt");
    run_ok(bin().args([
        "train",
        "--train",
        train.to_str().unwrap(),
        "--validation",
        train.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scratch-embeddings",
        "--word-dim",
        "4",
        "--char-dim",
        "3",
        "--hidden-char",
        "2",
        "--hidden-word",
        "2",
        "--epochs",
        "1",
    ]));
    let loc_corpus = dir.path().join("loc.tsv");
    fs::write(&loc_corpus, "Huế\tNp\tB-NP\tB-LOC\n\n").unwrap();
    let out = bin()
        .args(["eval", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", loc_corpus.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("inventory"), "stderr: {stderr}");
}

#[test]
fn failures_exit_nonzero_with_one_line_diagnostic() {
    let out = bin()
        .args(["train", "--train", "/nonexistent/x.tsv", "--validation", "/nonexistent/y.tsv", "--checkpoint", "/tmp/z.ckpt", "--scratch-embeddings"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("error: "));

    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.ckpt");
    fs::write(&bogus, b"not a checkpoint at all").unwrap();
    let corpus = dir.path().join("c.tsv");
    fs::write(&corpus, "a\tNp\tB-NP\tO\n").unwrap();
    let out = bin()
        .args(["eval", "--checkpoint", bogus.to_str().unwrap(), "--corpus", corpus.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error: "));
}
