//! Chunk-level scoring: span extraction from IOB2 and the per-type
//! precision/recall/F1 report with its micro-averaged total.
//!
//! ```bash
//! cargo run -p seqlab --example evaluate_report
//! ```

use seqlab::data::Token;
use seqlab::eval::{extract_chunks, f1_report};
use seqlab::Result;

fn sentence(words: &[(&str, &str)]) -> Vec<Token> {
    words
        .iter()
        .map(|(w, ner)| Token {
            surface: w.to_string(),
            pos: "Np".into(),
            chunk: "B-NP".into(),
            ner: ner.to_string(),
        })
        .collect()
}

fn main() -> Result<()> {
    let gold = vec![
        sentence(&[
            ("Nguyễn_Văn_An", "B-PER"),
            ("thăm", "O"),
            ("Hà_Nội", "B-LOC"),
            (".", "O"),
        ]),
        sentence(&[
            ("Công_ty", "B-ORG"),
            ("FPT", "I-ORG"),
            ("đón", "O"),
            ("Trần_Thị_Mai", "B-PER"),
            (".", "O"),
        ]),
    ];

    // the tagger got one PER and the LOC right, split the ORG span, and
    // hallucinated a MISC
    let pred = vec![
        vec!["B-PER", "O", "B-LOC", "B-MISC"],
        vec!["B-ORG", "B-ORG", "O", "O", "O"],
    ];
    let pred: Vec<Vec<String>> = pred
        .into_iter()
        .map(|tags| tags.into_iter().map(String::from).collect())
        .collect();

    for (i, s) in gold.iter().enumerate() {
        let tags: Vec<&str> = s.iter().map(|t| t.ner.as_str()).collect();
        println!("gold spans of sentence {}: {:?}", i + 1, extract_chunks(&tags));
    }

    let report = f1_report(&gold, &pred)?;
    println!();
    print!("{}", report.render());

    // exact-boundary matching: the split ORG span scores zero
    let org = report.counts_for("ORG").unwrap();
    println!();
    println!(
        "ORG was split into two spans -> tp={} fp={} fn={}",
        org.tp, org.fp, org.missed
    );
    Ok(())
}
