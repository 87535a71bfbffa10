//! End-to-end training on a synthetic corpus: reduced Bi-LSTM-CRF model,
//! per-epoch log, chunk-F1 evaluation, checkpoint round trip, and tagging.
//!
//! ```bash
//! cargo run -p seqlab --example train_ner
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqlab::checkpoint::{deserialize, model_from_checkpoint, Checkpoint};
use seqlab::config::Config;
use seqlab::data::synth_corpus;
use seqlab::eval::f1_report;
use seqlab::features::EmbeddingTable;
use seqlab::train::run_training;
use seqlab::Result;

fn main() -> Result<()> {
    let train = synth_corpus(11, 120);
    let val = synth_corpus(12, 30);
    println!(
        "synthetic data: {} train / {} validation sentences, {} word types, {} NER tags",
        train.sentences.len(),
        val.sentences.len(),
        train.vocab.words().len(),
        train.ner_tags.len()
    );

    let config = Config {
        word_dim: 16,
        char_dim: 10,
        hidden_char: 6,
        hidden_word: 12,
        batch_size: 16,
        epochs: 40,
        phase1_epochs: 30,
        seed: 7,
        scratch_embeddings: true,
        ..Config::default()
    };

    // scratch-trainable word table over the training vocabulary
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let table = EmbeddingTable::<f32>::new_random(train.vocab.clone(), config.word_dim, true, &mut rng)?;

    let mut shown = 0usize;
    let outcome = run_training(&config, &train, &val, &table, |line| {
        // print the header and every fifth epoch line
        if line.starts_with('#') {
            println!("{line}");
        } else {
            if shown.is_multiple_of(5) {
                println!("{line}");
            }
            shown += 1;
        }
    })?;
    println!(
        "best epoch {} with validation loss {:.6}",
        outcome.best.epoch, outcome.best.val_loss
    );

    // evaluate on both splits
    for (name, corpus) in [("train", &train), ("validation", &val)] {
        let predictions: Vec<Vec<String>> = corpus
            .sentences
            .iter()
            .map(|s| outcome.model.predict_sentence(s))
            .collect::<Result<_>>()?;
        let report = f1_report(&corpus.sentences, &predictions)?;
        println!("\n{name} set:");
        print!("{}", report.render());
    }

    // the best checkpoint reloads into an identical tagger
    let restored = model_from_checkpoint(&deserialize::<f32>(&outcome.best_checkpoint)?)?;
    let sample = &val.sentences[0];
    let tags = restored.predict_sentence(sample)?;
    println!("\ntagging one held-out sentence with the reloaded best checkpoint:");
    for (token, tag) in sample.iter().zip(&tags) {
        println!("  {:<22} {}", token.surface, tag);
    }
    assert_eq!(tags, outcome.model.predict_sentence(sample)?);

    let ckpt: Checkpoint<f32> = deserialize(&outcome.best_checkpoint)?;
    println!(
        "\ncheckpoint holds {} named tensors, best record {:?}",
        ckpt.tensors.len(),
        ckpt.best
    );
    Ok(())
}
