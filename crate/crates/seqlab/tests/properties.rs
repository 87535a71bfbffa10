//! Property tests for the structural invariants: windowing symmetry,
//! span/IOB2 round trips, corpus round trips, batching as a partition,
//! and the UNK bound.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqlab::data::{batch_iter, parse_conll, synth_corpus, write_conll, Sentence, Token};
use seqlab::eval::{extract_chunks, render_iob2, ChunkSpan};
use seqlab::features::{one_hot, skipgram_pairs, unk_vector, TagInventory};

/// Strategy for a list of non-overlapping spans over `len` positions.
fn spans_strategy(len: usize) -> impl Strategy<Value = Vec<ChunkSpan>> {
    prop::collection::vec((0..4usize, 1..=3usize, 0..2usize), 0..6).prop_map(move |items| {
        let types = ["PER", "LOC", "ORG", "MISC"];
        let mut spans = Vec::new();
        let mut pos = 0usize;
        for (ty, span_len, gap) in items {
            pos += gap;
            if pos >= len {
                break;
            }
            let end = (pos + span_len).min(len);
            spans.push(ChunkSpan {
                entity_type: types[ty].to_string(),
                start: pos,
                end,
            });
            pos = end;
        }
        spans
    })
}

proptest! {
    #[test]
    fn skipgram_pairs_are_symmetric_and_windowed(
        len in 0usize..40,
        window in 1usize..6,
    ) {
        let sentence: Vec<usize> = (0..len).collect();
        let pairs = skipgram_pairs(&sentence, window);
        for &(i, j) in &pairs {
            let d = i.abs_diff(j);
            prop_assert!(d >= 1 && d <= window);
            prop_assert!(pairs.contains(&(j, i)));
        }
        // ordered by target then context
        let mut sorted = pairs.clone();
        sorted.sort();
        prop_assert_eq!(pairs, sorted);
    }

    #[test]
    fn span_render_extract_roundtrip(len in 1usize..24, spans in spans_strategy(20)) {
        let spans: Vec<ChunkSpan> = spans.into_iter().filter(|s| s.end <= len).collect();
        let tags = render_iob2(&spans, len);
        let mut extracted = extract_chunks(&tags);
        extracted.sort();
        let mut expected = spans;
        expected.sort();
        prop_assert_eq!(extracted, expected);
    }

    #[test]
    fn one_hot_mass_is_zero_or_one(tag in "[A-Z]{1,3}", extra in "[a-z]{1,3}") {
        let inv = TagInventory::from_tags(["N", "V", "A", "P", "E"]);
        let mass: f64 = one_hot::<f64>(&tag, &inv).iter().sum();
        prop_assert!(mass == 0.0 || mass == 1.0);
        let mass: f64 = one_hot::<f64>(&extra, &inv).iter().sum();
        prop_assert!(mass == 0.0 || mass == 1.0);
    }

    #[test]
    fn unk_components_stay_inside_the_closed_bound(dim in 1usize..512, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (3.0 / dim as f64).sqrt();
        let v: Vec<f64> = unk_vector(dim, &mut rng).unwrap();
        prop_assert_eq!(v.len(), dim);
        for x in v {
            prop_assert!(x.abs() <= bound);
        }
    }

    #[test]
    fn corpus_roundtrips_through_text(
        surfaces in prop::collection::vec(
            prop::collection::vec("[a-zàáâãèéêìíòóôõùúýđư_]{1,6}", 1..6),
            1..5,
        ),
        spans in spans_strategy(5),
    ) {
        let sentences: Vec<Sentence> = surfaces
            .iter()
            .map(|words| {
                let tags = render_iob2(
                    &spans.iter().filter(|s| s.end <= words.len()).cloned().collect::<Vec<_>>(),
                    words.len(),
                );
                words
                    .iter()
                    .zip(tags)
                    .map(|(w, ner)| Token {
                        surface: w.clone(),
                        pos: "N".into(),
                        chunk: "B-NP".into(),
                        ner,
                    })
                    .collect()
            })
            .collect();
        let text = write_conll(&sentences);
        let corpus = parse_conll(&text).unwrap();
        prop_assert_eq!(&corpus.sentences, &sentences);
        prop_assert!(corpus.repairs.is_empty());
        // a second round trip is byte-identical
        prop_assert_eq!(write_conll(&corpus.sentences), text);
    }

    #[test]
    fn batches_partition_every_corpus(
        n in 1usize..40,
        batch_size in 1usize..10,
        seed in 0u64..100,
    ) {
        let corpus = synth_corpus(seed, n);
        let batches = batch_iter(&corpus, batch_size, Some(seed)).unwrap();
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.sentences.clone()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let bits: usize = batches
            .iter()
            .flat_map(|b| b.mask.iter())
            .map(|m| m.iter().filter(|&&x| x).count())
            .sum();
        prop_assert_eq!(bits, corpus.token_count());
        for b in &batches {
            prop_assert!(b.sentences.len() <= batch_size);
        }
    }
}
