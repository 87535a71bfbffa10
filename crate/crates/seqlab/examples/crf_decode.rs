//! Linear-chain CRF inference on a small hand-built instance: sequence
//! scores, the exact log-partition, Viterbi decoding, and the NLL loss.
//!
//! ```bash
//! cargo run -p seqlab --example crf_decode
//! ```

use seqlab::crf::{log_partition, nll_loss, score_sequence, transition_matrix, viterbi_decode};
use seqlab::tensor::Tensor;
use seqlab::Result;

fn main() -> Result<()> {
    // 4 positions, 3 tags (O, B, I).
    let tag_names = ["O", "B", "I"];
    let emissions = Tensor::new(
        vec![4, 3],
        vec![
            2.0, 0.5, -1.0, // position 0 prefers O
            -0.5, 2.5, 0.0, // position 1 prefers B
            -1.0, 0.0, 2.0, // position 2 prefers I
            1.5, 0.2, 0.3, // position 3 prefers O
        ],
    )?;
    let mut transition = transition_matrix::<f64>(3);
    // discourage O -> I, encourage B -> I
    let side = 5;
    transition.data_mut()[2] = -3.0;
    transition.data_mut()[side + 2] = 1.5;

    let (best, best_score) = viterbi_decode(&emissions, &transition)?;
    let names: Vec<&str> = best.iter().map(|&t| tag_names[t]).collect();
    println!("viterbi path : {names:?} (score {best_score:.4})");

    let logz = log_partition(&emissions, &transition)?;
    println!("log-partition: {logz:.4}");
    println!(
        "P(best path) = {:.4}",
        (best_score - logz).exp()
    );

    // score an alternative path and compare
    let alt = [0usize, 1, 1, 0];
    let alt_score = score_sequence(&emissions, &alt, &transition)?;
    let alt_names: Vec<&str> = alt.iter().map(|&t| tag_names[t]).collect();
    println!(
        "alternative {alt_names:?}: score {alt_score:.4}, P = {:.4}",
        (alt_score - logz).exp()
    );

    // exhaustive check on this small instance: probabilities sum to one
    let mut total = 0.0f64;
    for code in 0..3usize.pow(4) {
        let mut tags = vec![0usize; 4];
        let mut rem = code;
        for t in tags.iter_mut() {
            *t = rem % 3;
            rem /= 3;
        }
        total += (score_sequence(&emissions, &tags, &transition)? - logz).exp();
    }
    println!("sum over all 3^4 paths of exp(score - logZ) = {total:.12}");

    let loss = nll_loss(&emissions, &best, &transition)?;
    println!("NLL of the viterbi path as gold: {loss:.4}");
    Ok(())
}
