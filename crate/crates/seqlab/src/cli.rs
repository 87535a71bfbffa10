//! Command-line entry points: `embed-train`, `train`, `eval`, `tag`, and
//! `synth`. Training flags mirror the configuration keys and override any
//! `--config` file. Exit code 0 on success, nonzero with a one-line
//! diagnostic otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{
    load_checkpoint, model_from_checkpoint, peek_dtype_file, Checkpoint,
};
use crate::config::Config;
use crate::data::{parse_conll, parse_untagged, synth_corpus, write_conll, Corpus};
use crate::error::{Error, Result};
use crate::eval::f1_report;
use crate::features::{train_skipgram, EmbeddingTable, SkipgramConfig};
use crate::model::NerModel;
use crate::tensor::{Dtype, Real};
use crate::train::run_training;

/// Salt separating the UNK-row RNG stream from model initialization.
const UNK_SALT: u64 = 0x5143_8052_9FD1_175F;

#[derive(Parser)]
#[command(
    name = "seqlab",
    version,
    about = "Bi-LSTM-CRF sequence labeling toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train skip-gram word embeddings from tokenized text (one sentence
    /// per line, space-separated tokens)
    EmbedTrain {
        /// Plain-text tokenized corpus
        #[arg(long)]
        corpus: PathBuf,
        /// Output embedding file (`<count> <dim>` header format)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        /// Context window per side
        #[arg(long, default_value_t = 2)]
        window: usize,
        /// Negative samples per pair
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, default_value_t = 0.025)]
        learning_rate: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train the tagger and persist the best and final checkpoints
    Train(Box<TrainArgs>),
    /// Decode a corpus and print the per-type precision/recall/F1 report
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// 4-column annotated corpus
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Tag a 3- or 4-column file, writing predictions in column 4
    Tag {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input file; a 4th column, when present, is ignored
        #[arg(long)]
        input: PathBuf,
        /// Output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic annotated corpus
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        sentences: usize,
        /// Output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` configuration file; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    validation: Option<String>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    /// Train a fresh word table from the training vocabulary
    #[arg(long)]
    scratch_embeddings: bool,
    /// Unfreeze loaded pretrained embeddings
    #[arg(long)]
    finetune_embeddings: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    char_dim: Option<usize>,
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    hidden_char: Option<usize>,
    #[arg(long)]
    hidden_word: Option<usize>,
    #[arg(long)]
    dropout_char: Option<f64>,
    #[arg(long)]
    dropout_bilstm: Option<f64>,
    #[arg(long)]
    lr_phase1: Option<f64>,
    #[arg(long)]
    lr_phase2: Option<f64>,
    #[arg(long)]
    phase1_epochs: Option<usize>,
    /// f32 or f64
    #[arg(long)]
    precision: Option<String>,
    /// Global-norm gradient clip; omit for no clipping
    #[arg(long)]
    grad_clip: Option<f64>,
}

impl TrainArgs {
    fn into_config(self) -> Result<Config> {
        let mut config = match &self.config {
            Some(path) => Config::parse(&fs::read_to_string(path)?)?,
            None => Config::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    config.$field = v;
                }
            };
        }
        set!(seed);
        set!(epochs);
        set!(batch_size);
        set!(char_dim);
        set!(word_dim);
        set!(hidden_char);
        set!(hidden_word);
        set!(dropout_char);
        set!(dropout_bilstm);
        set!(lr_phase1);
        set!(lr_phase2);
        set!(phase1_epochs);
        if let Some(p) = self.precision {
            config.set("precision", &p)?;
        }
        if let Some(c) = self.grad_clip {
            config.grad_clip = Some(c);
        }
        if self.scratch_embeddings {
            config.scratch_embeddings = true;
        }
        if self.finetune_embeddings {
            config.finetune_embeddings = true;
        }
        for (key, value) in [
            ("train", self.train),
            ("validation", self.validation),
            ("embeddings", self.embeddings),
            ("checkpoint", self.checkpoint),
        ] {
            if let Some(v) = value {
                config.set(key, &v)?;
            }
        }
        Ok(config)
    }
}

/// Parses argv and runs one command; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EmbedTrain {
            corpus,
            out,
            dim,
            epochs,
            window,
            negatives,
            learning_rate,
            seed,
        } => cmd_embed_train(&corpus, &out, dim, epochs, window, negatives, learning_rate, seed),
        Command::Train(args) => {
            let config = args.into_config()?;
            match config.precision {
                Dtype::F32 => cmd_train::<f32>(&config),
                Dtype::F64 => cmd_train::<f64>(&config),
            }
        }
        Command::Eval { checkpoint, corpus } => match peek_dtype_file(&checkpoint)? {
            Dtype::F32 => cmd_eval::<f32>(&checkpoint, &corpus),
            Dtype::F64 => cmd_eval::<f64>(&checkpoint, &corpus),
        },
        Command::Tag {
            checkpoint,
            input,
            out,
        } => match peek_dtype_file(&checkpoint)? {
            Dtype::F32 => cmd_tag::<f32>(&checkpoint, &input, out.as_deref()),
            Dtype::F64 => cmd_tag::<f64>(&checkpoint, &input, out.as_deref()),
        },
        Command::Synth {
            seed,
            sentences,
            out,
        } => cmd_synth(seed, sentences, out.as_deref()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_embed_train(
    corpus_path: &Path,
    out: &Path,
    dim: usize,
    epochs: usize,
    window: usize,
    negatives: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<()> {
    let text = fs::read_to_string(corpus_path)?;
    let sentences: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .filter(|s: &Vec<String>| !s.is_empty())
        .collect();
    let cfg = SkipgramConfig {
        dim,
        epochs,
        window,
        negatives,
        learning_rate,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table: EmbeddingTable<f32> = train_skipgram(&sentences, &cfg, &mut rng)?;
    table.save(out)?;
    println!(
        "trained {} x {} embeddings from {} sentences -> {}",
        table.vocab().words().len(),
        dim,
        sentences.len(),
        out.display()
    );
    Ok(())
}

fn load_corpus(path: &str) -> Result<Corpus> {
    let text = fs::read_to_string(path)?;
    let corpus = parse_conll(&text)?;
    for note in &corpus.repairs {
        eprintln!("note: {path}: {note}");
    }
    Ok(corpus)
}

fn cmd_train<T: Real>(config: &Config) -> Result<()> {
    let train_path = config
        .train
        .as_deref()
        .ok_or_else(|| Error::Config("train corpus path is required".into()))?;
    let val_path = config
        .validation
        .as_deref()
        .ok_or_else(|| Error::Config("validation corpus path is required".into()))?;
    let ckpt_path = config
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("checkpoint output path is required".into()))?;

    let train_corpus = load_corpus(train_path)?;
    let val_corpus = load_corpus(val_path)?;

    let word_table: EmbeddingTable<T> = match (&config.embeddings, config.scratch_embeddings) {
        (Some(path), _) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ UNK_SALT);
            EmbeddingTable::load(Path::new(path), config.finetune_embeddings, &mut rng)?
        }
        (None, true) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ UNK_SALT);
            EmbeddingTable::new_random(train_corpus.vocab.clone(), config.word_dim, true, &mut rng)?
        }
        (None, false) => {
            return Err(Error::Config(
                "either an embeddings path or scratch_embeddings is required".into(),
            ))
        }
    };

    let outcome = run_training(config, &train_corpus, &val_corpus, &word_table, |line| {
        println!("{line}");
    })?;

    let best_path = PathBuf::from(ckpt_path);
    let final_path = PathBuf::from(format!("{ckpt_path}.final"));
    fs::write(&best_path, &outcome.best_checkpoint)?;
    fs::write(&final_path, &outcome.final_checkpoint)?;
    println!(
        "best epoch {} (val_loss {:.6}) -> {}",
        outcome.best.epoch,
        outcome.best.val_loss,
        best_path.display()
    );
    println!("final epoch {} -> {}", config.epochs - 1, final_path.display());
    Ok(())
}

fn load_model<T: Real>(path: &Path) -> Result<NerModel<T>> {
    let ckpt: Checkpoint<T> = load_checkpoint(path)?;
    model_from_checkpoint(&ckpt)
}

fn cmd_eval<T: Real>(checkpoint: &Path, corpus_path: &Path) -> Result<()> {
    let model = load_model::<T>(checkpoint)?;
    let corpus = load_corpus(
        corpus_path
            .to_str()
            .ok_or_else(|| Error::Config("corpus path is not UTF-8".into()))?,
    )?;
    for tag in corpus.ner_tags.tags() {
        if model.ner_tags.index_of(tag).is_none() {
            return Err(Error::InventoryMismatch(format!(
                "corpus tag {tag:?} is unknown to the checkpoint"
            )));
        }
    }
    let mut predictions = Vec::with_capacity(corpus.sentences.len());
    for sentence in &corpus.sentences {
        predictions.push(model.predict_sentence(sentence)?);
    }
    let report = f1_report(&corpus.sentences, &predictions)?;
    print!("{}", report.render());
    Ok(())
}

fn cmd_tag<T: Real>(checkpoint: &Path, input: &Path, out: Option<&Path>) -> Result<()> {
    let model = load_model::<T>(checkpoint)?;
    let text = fs::read_to_string(input)?;
    let sentences = parse_untagged(&text)?;
    let mut predicted: Vec<Vec<String>> = Vec::with_capacity(sentences.len());
    for sentence in &sentences {
        predicted.push(model.predict_sentence(sentence)?);
    }

    // Rewrite the input line by line so blank-line structure (and thus the
    // line count) is preserved exactly.
    let mut output = String::new();
    let (mut si, mut ti) = (0usize, 0usize);
    for raw in text.lines() {
        if raw.trim().is_empty() {
            if ti > 0 {
                si += 1;
                ti = 0;
            }
            output.push('\n');
            continue;
        }
        let sentence = &sentences[si];
        let token = &sentence[ti];
        let tag = &predicted[si][ti];
        output.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            token.surface, token.pos, token.chunk, tag
        ));
        ti += 1;
    }
    match out {
        Some(path) => fs::write(path, output)?,
        None => print!("{output}"),
    }
    Ok(())
}

fn cmd_synth(seed: u64, sentences: usize, out: Option<&Path>) -> Result<()> {
    let corpus = synth_corpus(seed, sentences);
    let text = write_conll(&corpus.sentences);
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
