//! Bidirectional LSTM encoding of a toy sequence, plus the character-level
//! word feature.
//!
//! ```bash
//! cargo run -p seqlab --example lstm_encoding
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqlab::features::Vocab;
use seqlab::params::ParamStore;
use seqlab::recurrent::{bilstm_encode, char_word_vector, BiLstmLayer, LstmParams};
use seqlab::tensor::{Tape, Tensor};
use seqlab::Result;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store: ParamStore<f64> = ParamStore::new();

    let hidden = 4;
    let input = 3;
    let layer = BiLstmLayer::init(&mut store, "demo", hidden, input, &mut rng);
    println!(
        "one direction holds {} scalars (4 x (h*h + h*in + h))",
        LstmParams::scalar_count(hidden, input)
    );

    let mut tape = Tape::new();
    let binding = store.bind(&mut tape);
    let seq: Vec<_> = [
        vec![0.2, -0.4, 0.9],
        vec![1.0, 0.0, -0.3],
        vec![-0.6, 0.5, 0.1],
    ]
    .into_iter()
    .map(|v| tape.constant(v))
    .collect();

    let outputs = bilstm_encode(&mut tape, &binding, &layer, &seq)?;
    println!("sequence of {} inputs -> {} outputs of width {}", seq.len(), outputs.len(), 2 * hidden);
    for (t, &o) in outputs.iter().enumerate() {
        let data = tape.value(o).data();
        println!("  t={t}: fwd {:>24} | bwd {:>24}", format!("{:.3?}", &data[..hidden]), format!("{:.3?}", &data[hidden..]));
    }

    // Character-level word feature: embed characters, run a Bi-LSTM over
    // them, concatenate the two final states.
    let mut char_vocab = Vocab::new();
    for ch in "hà_nội đẹp".chars() {
        char_vocab.add(&ch.to_string());
    }
    let char_dim = 3;
    let char_hidden = 2;
    let rows = store.insert(
        "chars",
        Tensor::uniform(vec![char_vocab.len(), char_dim], -0.5, 0.5, &mut rng)
            .with_requires_grad(true),
    );
    let char_layer = BiLstmLayer::init(&mut store, "chars_lstm", char_hidden, char_dim, &mut rng);

    let mut tape = Tape::new();
    let binding = store.bind(&mut tape);
    for word in ["hà_nội", "đẹp"] {
        let v = char_word_vector(
            &mut tape, &binding, rows, &char_vocab, &char_layer, word, 0.0, false, &mut rng,
        )?;
        println!("char feature of {word:>8}: {:.3?}", tape.value(v).data());
    }
    Ok(())
}
