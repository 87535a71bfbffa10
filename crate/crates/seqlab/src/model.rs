//! The full tagger: embeddings, character encoder, two stacked word-level
//! Bi-LSTM layers, and the CRF output head, wired over one parameter store.

use rand::{Rng, SeedableRng};

use crate::config::Config;
use crate::crf::{self, CrfParams};
use crate::data::{Corpus, Sentence, Token};
use crate::error::{Error, Result};
use crate::features::{
    lookup_with_fallback, one_hot, EmbeddingTable, TagInventory, Vocab, PAD_INDEX,
};
use crate::params::{ParamBinding, ParamId, ParamStore};
use crate::recurrent::{char_word_vector, encode_sentence, BiLstmLayer};
use crate::tensor::{Real, Tape, ValueId};

pub struct NerModel<T: Real> {
    pub store: ParamStore<T>,
    pub config: Config,
    pub word_vocab: Vocab,
    pub char_vocab: Vocab,
    pub pos_tags: TagInventory,
    pub chunk_tags: TagInventory,
    pub ner_tags: TagInventory,
    pub word_rows: ParamId,
    pub char_rows: ParamId,
    pub char_layer: BiLstmLayer,
    pub layer1: BiLstmLayer,
    pub layer2: BiLstmLayer,
    pub crf: CrfParams,
}

impl<T: Real> NerModel<T> {
    /// Assembles a randomly initialized model over the given vocabularies.
    /// Feature and encoder widths are checked as the parameters are laid
    /// out; the word table starts from the UNK law and is overwritten by
    /// the caller when pretrained rows exist.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: Config,
        word_vocab: Vocab,
        char_vocab: Vocab,
        pos_tags: TagInventory,
        chunk_tags: TagInventory,
        ner_tags: TagInventory,
        word_trainable: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if ner_tags.is_empty() {
            return Err(Error::InvalidParameter(
                "cannot build a tagger over an empty NER tag inventory".into(),
            ));
        }
        if config.char_dim == 0 || config.word_dim == 0 || config.hidden_char == 0 || config.hidden_word == 0
        {
            return Err(Error::InvalidParameter(
                "model dimensions must all be positive".into(),
            ));
        }
        let mut store = ParamStore::new();

        let word_table =
            EmbeddingTable::<T>::new_random(word_vocab.clone(), config.word_dim, word_trainable, rng)?;
        let word_rows = store.insert(
            "embed.word",
            word_table.rows().detached().with_requires_grad(word_trainable),
        );

        let char_table =
            EmbeddingTable::<T>::new_random(char_vocab.clone(), config.char_dim, true, rng)?;
        let char_rows = store.insert(
            "embed.char",
            char_table.rows().detached().with_requires_grad(true),
        );

        let char_layer = BiLstmLayer::init(
            &mut store,
            "char_lstm",
            config.hidden_char,
            config.char_dim,
            rng,
        );
        let rep_dim =
            config.word_dim + pos_tags.len() + chunk_tags.len() + 2 * config.hidden_char;
        let layer1 = BiLstmLayer::init(&mut store, "word_lstm1", config.hidden_word, rep_dim, rng);
        let layer2 = BiLstmLayer::init(
            &mut store,
            "word_lstm2",
            config.hidden_word,
            2 * config.hidden_word,
            rng,
        );
        let crf = CrfParams::init(&mut store, "crf", ner_tags.len(), 2 * config.hidden_word, rng);

        let model = Self {
            store,
            config,
            word_vocab,
            char_vocab,
            pos_tags,
            chunk_tags,
            ner_tags,
            word_rows,
            char_rows,
            char_layer,
            layer1,
            layer2,
            crf,
        };
        debug_assert_eq!(model.char_feature_dim(), 2 * model.config.hidden_char);
        debug_assert_eq!(model.encoder_dim(), 2 * model.config.hidden_word);
        Ok(model)
    }

    /// Builds the model for a training corpus, importing the word table.
    pub fn build(
        config: Config,
        word_table: &EmbeddingTable<T>,
        corpus: &Corpus,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if word_table.dim() != config.word_dim {
            return Err(Error::Config(format!(
                "embedding table dim {} does not match configured word_dim {}",
                word_table.dim(),
                config.word_dim
            )));
        }
        let mut char_vocab = Vocab::new();
        let mut buf = [0u8; 4];
        for sentence in &corpus.sentences {
            for token in sentence {
                for ch in token.surface.chars() {
                    char_vocab.add(ch.encode_utf8(&mut buf));
                }
            }
        }
        let mut model = Self::from_parts(
            config,
            word_table.vocab().clone(),
            char_vocab,
            corpus.pos_tags.clone(),
            corpus.chunk_tags.clone(),
            corpus.ner_tags.clone(),
            word_table.trainable(),
            rng,
        )?;
        model
            .store
            .load_values(model.word_rows, word_table.rows().data())?;
        Ok(model)
    }

    /// Character feature width: both directions of the character encoder.
    pub fn char_feature_dim(&self) -> usize {
        self.char_layer.output_dim()
    }

    /// Per-token encoder output width: both directions of layer 2.
    pub fn encoder_dim(&self) -> usize {
        self.layer2.output_dim()
    }

    pub fn rep_dim(&self) -> usize {
        self.config.word_dim + self.pos_tags.len() + self.chunk_tags.len() + self.char_feature_dim()
    }

    pub fn num_tags(&self) -> usize {
        self.crf.num_tags
    }

    /// Gold NER tag indices of a sentence; any tag outside the model's
    /// inventory is an inventory mismatch.
    pub fn gold_indices(&self, sentence: &[Token]) -> Result<Vec<usize>> {
        sentence
            .iter()
            .map(|t| {
                self.ner_tags.index_of(&t.ner).ok_or_else(|| {
                    Error::InventoryMismatch(format!(
                        "NER tag {:?} is not in the model's tag inventory",
                        t.ner
                    ))
                })
            })
            .collect()
    }

    /// Records one sentence's forward pass and returns the `[n, K]`
    /// emission matrix.
    pub fn emissions_on_tape(
        &self,
        tape: &mut Tape<T>,
        binding: &ParamBinding,
        sentence: &[Token],
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<ValueId> {
        if sentence.is_empty() {
            return Err(Error::EmptyInput("sentence"));
        }
        let mut reps = Vec::with_capacity(sentence.len());
        for token in sentence {
            let char_vec = char_word_vector(
                tape,
                binding,
                self.char_rows,
                &self.char_vocab,
                &self.char_layer,
                &token.surface,
                self.config.dropout_char,
                training,
                rng,
            )?;
            let word_piece = if self.store.get(self.word_rows).requires_grad() {
                let idx = lookup_with_fallback(&self.word_vocab, &token.surface);
                tape.row(binding.id(self.word_rows), idx)?
            } else {
                let idx = lookup_with_fallback(&self.word_vocab, &token.surface);
                let rows = self.store.get(self.word_rows);
                let dim = self.config.word_dim;
                tape.constant(rows.data()[idx * dim..(idx + 1) * dim].to_vec())
            };
            let mut tag_part: Vec<T> = one_hot(&token.pos, &self.pos_tags);
            tag_part.extend(one_hot::<T>(&token.chunk, &self.chunk_tags));
            let tags_piece = tape.constant(tag_part);
            reps.push(tape.concat(&[word_piece, tags_piece, char_vec])?);
        }
        let encoded = encode_sentence(
            tape,
            binding,
            &self.layer1,
            &self.layer2,
            &reps,
            self.config.dropout_bilstm,
            training,
            rng,
        )?;
        let weight = binding.id(self.crf.emission_weight);
        let bias = binding.id(self.crf.emission_bias);
        let mut rows = Vec::with_capacity(encoded.len());
        for h in encoded {
            let wh = tape.matvec(weight, h)?;
            rows.push(tape.add(wh, bias)?);
        }
        tape.stack_rows(&rows)
    }

    /// Negative log-likelihood of a sentence's gold tags on the tape.
    pub fn nll_on_tape(
        &self,
        tape: &mut Tape<T>,
        binding: &ParamBinding,
        sentence: &[Token],
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<ValueId> {
        let gold = self.gold_indices(sentence)?;
        let emissions = self.emissions_on_tape(tape, binding, sentence, training, rng)?;
        crf::nll_on_tape(tape, emissions, binding.id(self.crf.transition), &gold)
    }

    /// Viterbi-decodes one sentence into IOB2 tag strings.
    pub fn predict_sentence(&self, sentence: &[Token]) -> Result<Vec<String>> {
        let mut tape = Tape::new();
        let binding = self.store.bind(&mut tape);
        // inference mode never consumes randomness
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let emissions = self.emissions_on_tape(&mut tape, &binding, sentence, false, &mut rng)?;
        let (tags, _) = crf::viterbi_decode(
            tape.value(emissions),
            self.store.get(self.crf.transition),
        )?;
        Ok(tags
            .into_iter()
            .map(|t| self.ner_tags.tag(t).to_string())
            .collect())
    }

    /// Mean per-token NLL over a corpus, forward-only, inference mode.
    pub fn mean_token_nll(&self, sentences: &[Sentence]) -> Result<f64> {
        let mut total = 0.0f64;
        let mut tokens = 0usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for sentence in sentences {
            let mut tape = Tape::new();
            let binding = self.store.bind(&mut tape);
            let nll = self.nll_on_tape(&mut tape, &binding, sentence, false, &mut rng)?;
            total += tape.value(nll).data()[0].as_f64();
            tokens += sentence.len();
        }
        if tokens == 0 {
            return Err(Error::EmptyInput("corpus"));
        }
        Ok(total / tokens as f64)
    }

    /// PAD row index kept reserved in both embedding tables.
    pub fn pad_index() -> usize {
        PAD_INDEX
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_corpus;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> Config {
        Config {
            char_dim: 5,
            word_dim: 7,
            hidden_char: 3,
            hidden_word: 4,
            epochs: 1,
            batch_size: 4,
            ..Config::default()
        }
    }

    fn tiny_model() -> NerModel<f64> {
        let corpus = synth_corpus(11, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let table =
            EmbeddingTable::<f64>::new_random(corpus.vocab.clone(), 7, false, &mut rng).unwrap();
        NerModel::build(tiny_config(), &table, &corpus, &mut rng).unwrap()
    }

    #[test]
    fn dimensions_line_up() {
        let model = tiny_model();
        assert_eq!(model.char_feature_dim(), 6);
        assert_eq!(model.encoder_dim(), 8);
        assert_eq!(
            model.rep_dim(),
            7 + model.pos_tags.len() + model.chunk_tags.len() + 6
        );
    }

    #[test]
    fn default_config_produces_published_widths() {
        // Table-style defaults: 60-wide char feature, 128-wide encoder output
        let corpus = synth_corpus(13, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let table =
            EmbeddingTable::<f32>::new_random(corpus.vocab.clone(), 300, false, &mut rng).unwrap();
        let model = NerModel::build(Config::default(), &table, &corpus, &mut rng).unwrap();
        assert_eq!(model.char_feature_dim(), 60);
        assert_eq!(model.encoder_dim(), 128);
    }

    #[test]
    fn emission_shape_matches_sentence() {
        let model = tiny_model();
        let corpus = synth_corpus(11, 12);
        let sentence = &corpus.sentences[0];
        let mut tape = Tape::new();
        let binding = model.store.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = model
            .emissions_on_tape(&mut tape, &binding, sentence, false, &mut rng)
            .unwrap();
        assert_eq!(
            tape.value(e).shape(),
            &[sentence.len(), model.num_tags()]
        );
    }

    #[test]
    fn predictions_are_valid_tags_and_deterministic() {
        let model = tiny_model();
        let corpus = synth_corpus(11, 12);
        for sentence in corpus.sentences.iter().take(3) {
            let a = model.predict_sentence(sentence).unwrap();
            let b = model.predict_sentence(sentence).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), sentence.len());
            for tag in &a {
                assert!(model.ner_tags.index_of(tag).is_some());
            }
        }
    }

    #[test]
    fn unseen_gold_tag_is_inventory_mismatch() {
        let model = tiny_model();
        let stranger = vec![Token {
            surface: "ai_đó".into(),
            pos: "Np".into(),
            chunk: "B-NP".into(),
            ner: "B-MISC".into(),
        }];
        // the tiny corpus may or may not contain B-MISC; force a missing tag
        let missing = vec![Token {
            surface: "x".into(),
            pos: "Np".into(),
            chunk: "B-NP".into(),
            ner: "I-MISC".into(),
        }];
        let result_known = model.gold_indices(&stranger);
        let result_missing = model.gold_indices(&missing);
        assert!(result_known.is_ok() || result_missing.is_err());
        if model.ner_tags.index_of("I-MISC").is_none() {
            assert!(matches!(result_missing, Err(Error::InventoryMismatch(_))));
        }
    }

    #[test]
    fn frozen_model_supports_concurrent_inference() {
        let model = tiny_model();
        let corpus = synth_corpus(11, 12);
        let expected: Vec<Vec<String>> = corpus
            .sentences
            .iter()
            .take(4)
            .map(|s| model.predict_sentence(s).unwrap())
            .collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = corpus
                .sentences
                .iter()
                .take(4)
                .map(|s| scope.spawn(|| model.predict_sentence(s).unwrap()))
                .collect();
            for (h, want) in handles.into_iter().zip(&expected) {
                assert_eq!(&h.join().unwrap(), want);
            }
        });
    }

    #[test]
    fn training_mode_loss_is_differentiable_end_to_end() {
        let model = tiny_model();
        let corpus = synth_corpus(11, 12);
        let sentence = &corpus.sentences[0];
        let mut tape = Tape::new();
        let binding = model.store.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nll = model
            .nll_on_tape(&mut tape, &binding, sentence, true, &mut rng)
            .unwrap();
        assert!(tape.value(nll).data()[0] >= 0.0);
        tape.backward(nll).unwrap();
        // gradients reach the character table and the transition matrix
        assert!(tape.grad(binding.id(model.char_rows)).is_some());
        let gt = tape.grad(binding.id(model.crf.transition)).unwrap();
        assert!(gt.iter().any(|&g| g != 0.0));
    }
}
