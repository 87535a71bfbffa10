//! Skip-gram embeddings with negative sampling on a synthetic two-topic
//! corpus; words from the same topic end up close in cosine space.
//!
//! ```bash
//! cargo run -p seqlab --example skipgram_embeddings
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqlab::features::{skipgram_pairs, train_skipgram, EmbeddingTable, SkipgramConfig};
use seqlab::Result;

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nx * ny)
}

fn main() -> Result<()> {
    // window semantics: 2 per side, so a mid-sentence target sees 4 contexts
    let pairs = skipgram_pairs(&[0, 1, 2, 3, 4], 2);
    let ctx: Vec<usize> = pairs.iter().filter(|(i, _)| *i == 2).map(|(_, j)| *j).collect();
    println!("context positions of target 2 in a 5-token sentence: {ctx:?}");

    let food: Vec<String> = ["phở", "bún", "chả", "nem", "bánh_mì", "cơm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let weather: Vec<String> = ["mưa", "nắng", "gió", "bão", "sương", "mây"]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let mut gen = ChaCha8Rng::seed_from_u64(1);
    let sentences: Vec<Vec<String>> = (0..4000)
        .map(|i| {
            let pool = if i % 2 == 0 { &food } else { &weather };
            (0..7).map(|_| pool[gen.gen_range(0..pool.len())].clone()).collect()
        })
        .collect();

    let cfg = SkipgramConfig {
        dim: 12,
        epochs: 2,
        ..SkipgramConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let table: EmbeddingTable<f64> = train_skipgram(&sentences, &cfg, &mut rng)?;
    println!(
        "trained {} words at dim {} over {} sentences",
        table.vocab().words().len(),
        table.dim(),
        sentences.len()
    );

    let row = |w: &str| table.row(table.vocab().get(w).unwrap()).to_vec();
    println!(
        "cos(phở, bún)  = {:+.3}   (same topic)",
        cosine(&row("phở"), &row("bún"))
    );
    println!(
        "cos(phở, mưa)  = {:+.3}   (different topic)",
        cosine(&row("phở"), &row("mưa"))
    );
    println!(
        "cos(gió, bão)  = {:+.3}   (same topic)",
        cosine(&row("gió"), &row("bão"))
    );

    // the table round-trips through the text interchange format
    let mut buf = Vec::new();
    table.write_to(&mut buf)?;
    let text = String::from_utf8(buf).unwrap();
    println!("embedding file header: {}", text.lines().next().unwrap());
    Ok(())
}
