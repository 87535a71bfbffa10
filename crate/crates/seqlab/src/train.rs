//! Mini-batch NLL training with the two-phase learning-rate schedule,
//! per-epoch validation, and best-model selection by validation loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{serialize, BestRecord, Checkpoint};
use crate::config::Config;
use crate::data::{batch_iter, Corpus};
use crate::error::{Error, Result};
use crate::features::EmbeddingTable;
use crate::model::NerModel;
use crate::optim::{lr_schedule, nadam_step, NadamState};
use crate::tensor::Real;

/// Salt separating the dropout RNG stream from model initialization.
const DROPOUT_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

impl EpochRecord {
    pub fn render(&self) -> String {
        format!(
            "epoch {:>3}  train_loss {:.6}  val_loss {:.6}  lr {:.6}",
            self.epoch, self.train_loss, self.val_loss, self.lr
        )
    }
}

/// Everything a finished run produces: the final-epoch model, the log,
/// and the serialized best and final checkpoints.
pub struct TrainOutcome<T: Real> {
    pub model: NerModel<T>,
    pub log: Vec<EpochRecord>,
    pub best: BestRecord,
    pub best_checkpoint: Vec<u8>,
    pub final_checkpoint: Vec<u8>,
}

/// Runs the full training loop. `sink` receives the config header and one
/// line per epoch as they happen.
///
/// Batch order reshuffles each epoch from `seed + epoch`; the seed, the
/// config, and the data fully determine the log and both checkpoints. The
/// best checkpoint is the one with minimal validation loss (earliest epoch
/// on ties); the final checkpoint additionally carries optimizer state.
pub fn run_training<T: Real>(
    config: &Config,
    train_corpus: &Corpus,
    val_corpus: &Corpus,
    word_table: &EmbeddingTable<T>,
    mut sink: impl FnMut(&str),
) -> Result<TrainOutcome<T>> {
    if train_corpus.sentences.is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }
    if val_corpus.sentences.is_empty() {
        return Err(Error::EmptyInput("validation corpus"));
    }
    if config.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = NerModel::<T>::build(config.clone(), word_table, train_corpus, &mut init_rng)?;
    // fail fast if the validation gold tags are not covered
    for sentence in &val_corpus.sentences {
        model.gold_indices(sentence)?;
    }

    let mut state = NadamState::new(&model.store);
    state.grad_clip = config.grad_clip;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_SALT);

    for line in config.to_text().lines() {
        sink(&format!("# {line}"));
    }

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<BestRecord> = None;
    let mut best_checkpoint = Vec::new();

    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config.phase1_epochs, config.lr_phase1, config.lr_phase2);
        let batches = batch_iter(
            train_corpus,
            config.batch_size,
            Some(config.seed.wrapping_add(epoch as u64)),
        )?;

        let mut epoch_nll = 0.0f64;
        let mut epoch_tokens = 0usize;
        for batch in &batches {
            model.store.zero_grad();
            let mut tape = crate::tensor::Tape::new();
            let binding = model.store.bind(&mut tape);

            let batch_tokens: usize = batch
                .sentences
                .iter()
                .map(|&i| train_corpus.sentences[i].len())
                .sum();
            let mut total = None;
            for &si in &batch.sentences {
                let nll = model.nll_on_tape(
                    &mut tape,
                    &binding,
                    &train_corpus.sentences[si],
                    true,
                    &mut dropout_rng,
                )?;
                total = Some(match total {
                    None => nll,
                    Some(acc) => tape.add(acc, nll)?,
                });
            }
            let total = total.expect("batches are non-empty");
            let loss = tape.scale(total, T::from_f64(1.0 / batch_tokens as f64))?;

            epoch_nll += tape.value(total).data()[0].as_f64();
            epoch_tokens += batch_tokens;

            tape.backward(loss)?;
            model.store.harvest(&tape, &binding);
            nadam_step(&mut model.store, &mut state, lr)?;
        }

        let train_loss = epoch_nll / epoch_tokens as f64;
        let val_loss = model.mean_token_nll(&val_corpus.sentences)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFinite { op: "epoch loss" });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        };
        sink(&record.render());
        log.push(record);

        if best.is_none_or(|b| val_loss < b.val_loss) {
            let record = BestRecord { epoch, val_loss };
            best = Some(record);
            best_checkpoint = serialize(&Checkpoint::of_model(&model, None, Some(record)));
        }
    }

    let best = best.expect("at least one epoch ran");
    let final_checkpoint = serialize(&Checkpoint::of_model(&model, Some(&state), Some(best)));
    Ok(TrainOutcome {
        model,
        log,
        best,
        best_checkpoint,
        final_checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_corpus;

    fn small_config() -> Config {
        Config {
            char_dim: 6,
            word_dim: 10,
            hidden_char: 4,
            hidden_word: 6,
            batch_size: 8,
            epochs: 3,
            seed: 5,
            scratch_embeddings: true,
            ..Config::default()
        }
    }

    fn scratch_table(corpus: &Corpus, dim: usize, seed: u64) -> EmbeddingTable<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingTable::new_random(corpus.vocab.clone(), dim, true, &mut rng).unwrap()
    }

    #[test]
    fn loss_decreases_on_synthetic_data() {
        let train = synth_corpus(1, 40);
        let val = synth_corpus(2, 10);
        let config = small_config();
        let table = scratch_table(&train, config.word_dim, config.seed);
        let outcome = run_training(&config, &train, &val, &table, |_| {}).unwrap();
        assert_eq!(outcome.log.len(), 3);
        assert!(outcome.log[2].train_loss < outcome.log[0].train_loss);
        assert!(outcome.best.val_loss <= outcome.log.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min) + 1e-12);
    }

    #[test]
    fn best_val_loss_bounds_every_epoch() {
        let train = synth_corpus(3, 24);
        let val = synth_corpus(4, 8);
        let config = small_config();
        let table = scratch_table(&train, config.word_dim, config.seed);
        let outcome = run_training(&config, &train, &val, &table, |_| {}).unwrap();
        for r in &outcome.log {
            assert!(outcome.best.val_loss <= r.val_loss);
        }
    }

    #[test]
    fn zero_learning_rate_freezes_validation_loss() {
        let train = synth_corpus(5, 16);
        let val = synth_corpus(6, 6);
        let config = Config {
            lr_phase1: 0.0,
            lr_phase2: 0.0,
            ..small_config()
        };
        let table = scratch_table(&train, config.word_dim, config.seed);
        let outcome = run_training(&config, &train, &val, &table, |_| {}).unwrap();
        let first = outcome.log[0].val_loss;
        for r in &outcome.log {
            assert_eq!(r.val_loss, first);
        }
    }

    #[test]
    fn identical_runs_are_identical() {
        let train = synth_corpus(7, 20);
        let val = synth_corpus(8, 6);
        let config = small_config();
        let table = scratch_table(&train, config.word_dim, config.seed);
        let run = || {
            let mut lines = Vec::new();
            let outcome =
                run_training(&config, &train, &val, &table, |l| lines.push(l.to_string()))
                    .unwrap();
            (lines, outcome.best_checkpoint, outcome.final_checkpoint)
        };
        let (la, ba, fa) = run();
        let (lb, bb, fb) = run();
        assert_eq!(la, lb);
        assert_eq!(ba, bb);
        assert_eq!(fa, fb);
    }

    #[test]
    fn log_header_echoes_the_checkpoint_config() {
        let train = synth_corpus(9, 12);
        let val = synth_corpus(10, 4);
        let config = small_config();
        let table = scratch_table(&train, config.word_dim, config.seed);
        let mut lines = Vec::new();
        let outcome =
            run_training(&config, &train, &val, &table, |l| lines.push(l.to_string())).unwrap();
        let header: String = lines
            .iter()
            .take_while(|l| l.starts_with("# "))
            .map(|l| format!("{}\n", &l[2..]))
            .collect();
        let ckpt: Checkpoint<f32> = crate::checkpoint::deserialize(&outcome.best_checkpoint).unwrap();
        assert_eq!(header, ckpt.config.to_text());
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let corpus = synth_corpus(1, 4);
        let table = scratch_table(&corpus, 10, 0);
        let empty = crate::data::parse_conll("").unwrap();
        let config = small_config();
        assert!(run_training(&config, &empty, &corpus, &table, |_| {}).is_err());
        assert!(run_training(&config, &corpus, &empty, &table, |_| {}).is_err());
        let zero_epochs = Config { epochs: 0, ..small_config() };
        assert!(run_training(&zero_epochs, &corpus, &corpus, &table, |_| {}).is_err());
    }
}
