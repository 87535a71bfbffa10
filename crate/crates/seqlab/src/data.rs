//! 4-column annotated corpora: parsing and validation, batch construction,
//! and a synthetic corpus generator for desk-scale runs.
//!
//! The file format is CoNLL-style TSV: one token per line with the four
//! tab-separated fields `surface POS chunk NER`, sentences separated by
//! blank lines, UTF-8 throughout. Space-run separation is accepted on read;
//! tabs are emitted on write. NER tags follow IOB2 over the four entity
//! types PER, LOC, ORG, and MISC.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{TagInventory, Vocab, PAD_INDEX};

/// The entity types of the tagging scheme.
pub const ENTITY_TYPES: [&str; 4] = ["PER", "LOC", "ORG", "MISC"];

/// One annotated token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    pub chunk: String,
    pub ner: String,
}

/// Non-empty token list.
pub type Sentence = Vec<Token>;

/// Parsed corpus plus the vocabularies and tag inventories derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub vocab: Vocab,
    pub pos_tags: TagInventory,
    pub chunk_tags: TagInventory,
    pub ner_tags: TagInventory,
    /// Human-readable notes about IOB2 repairs applied on load.
    pub repairs: Vec<String>,
}

impl Corpus {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }
}

/// Checks that a tag is `O`, `B-X`, or `I-X` for a known entity type.
fn check_ner_tag(tag: &str) -> bool {
    if tag == "O" {
        return true;
    }
    match tag.split_once('-') {
        Some(("B", t)) | Some(("I", t)) => ENTITY_TYPES.contains(&t),
        _ => false,
    }
}

/// An IOB2 continuity violation at one sequence position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BioViolation {
    pub position: usize,
    pub message: String,
}

/// Reports every `I-X` that is not preceded by `B-X` or `I-X` of the same
/// type. An empty result means the sequence is clean.
pub fn validate_bio<S: AsRef<str>>(tags: &[S]) -> Vec<BioViolation> {
    let mut violations = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let Some(kind) = tag.strip_prefix("I-") else {
            continue;
        };
        let ok = i > 0 && {
            let prev = tags[i - 1].as_ref();
            prev == format!("B-{kind}") || prev == format!("I-{kind}")
        };
        if !ok {
            violations.push(BioViolation {
                position: i,
                message: format!("orphan {tag} at position {i}"),
            });
        }
    }
    violations
}

fn build_corpus(sentences: Vec<Sentence>, repairs: Vec<String>) -> Corpus {
    let mut vocab = Vocab::new();
    let mut pos_tags = TagInventory::new();
    let mut chunk_tags = TagInventory::new();
    let mut ner_tags = TagInventory::new();
    for sentence in &sentences {
        for token in sentence {
            vocab.add(&token.surface);
            pos_tags.add(&token.pos);
            chunk_tags.add(&token.chunk);
            ner_tags.add(&token.ner);
        }
    }
    Corpus {
        sentences,
        vocab,
        pos_tags,
        chunk_tags,
        ner_tags,
        repairs,
    }
}

/// Splits one corpus line into its four fields. Tab separation is the
/// contract; a space-run fallback is accepted for interchange.
fn split_fields(line: &str) -> Option<Vec<&str>> {
    let by_tab: Vec<&str> = line.split('\t').collect();
    if by_tab.len() == 4 && by_tab.iter().all(|f| !f.trim().is_empty()) {
        return Some(by_tab.into_iter().map(str::trim).collect());
    }
    let by_space: Vec<&str> = line.split_whitespace().collect();
    if by_space.len() == 4 {
        return Some(by_space);
    }
    None
}

/// Parses 4-column annotated text into a corpus.
///
/// Sentences failing IOB2 validation are repaired by promoting orphan
/// `I-X` tags to `B-X`; each repair is recorded in `Corpus::repairs`.
pub fn parse_conll(text: &str) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut current: Sentence = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let fields = split_fields(raw).ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!(
                "expected 4 tab-separated fields (surface POS chunk NER), got {}",
                raw.split('\t').count()
            ),
        })?;
        if !check_ner_tag(fields[3]) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("invalid NER tag {:?}", fields[3]),
            });
        }
        current.push(Token {
            surface: fields[0].to_string(),
            pos: fields[1].to_string(),
            chunk: fields[2].to_string(),
            ner: fields[3].to_string(),
        });
    }
    if !current.is_empty() {
        sentences.push(current);
    }

    let mut repairs = Vec::new();
    for (si, sentence) in sentences.iter_mut().enumerate() {
        loop {
            let tags: Vec<&str> = sentence.iter().map(|t| t.ner.as_str()).collect();
            let violations = validate_bio(&tags);
            if violations.is_empty() {
                break;
            }
            for v in violations {
                let old = sentence[v.position].ner.clone();
                let fixed = old.replacen("I-", "B-", 1);
                repairs.push(format!(
                    "sentence {}: promoted {} to {} at position {}",
                    si + 1,
                    old,
                    fixed,
                    v.position
                ));
                sentence[v.position].ner = fixed;
            }
        }
    }

    Ok(build_corpus(sentences, repairs))
}

/// Parses input for tagging: 3 columns (no NER) or 4 (NER ignored).
pub fn parse_untagged(text: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut current: Sentence = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let by_tab: Vec<&str> = raw.split('\t').map(str::trim).collect();
        let fields = if by_tab.len() == 3 || by_tab.len() == 4 {
            by_tab
        } else {
            let by_space: Vec<&str> = raw.split_whitespace().collect();
            if by_space.len() == 3 || by_space.len() == 4 {
                by_space
            } else {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected 3 or 4 fields (surface POS chunk [NER])".into(),
                });
            }
        };
        if fields.iter().take(3).any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: lineno,
                message: "empty field".into(),
            });
        }
        current.push(Token {
            surface: fields[0].to_string(),
            pos: fields[1].to_string(),
            chunk: fields[2].to_string(),
            ner: "O".to_string(),
        });
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Renders sentences in the 4-column format, tab-separated, one blank line
/// after each sentence.
pub fn write_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for sentence in sentences {
        for t in sentence {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", t.surface, t.pos, t.chunk, t.ner));
        }
        out.push('\n');
    }
    out
}

/// One training batch: corpus sentence indices, word ids padded to the
/// longest member with PAD, and the valid-position mask.
#[derive(Clone, Debug)]
pub struct Batch {
    pub sentences: Vec<usize>,
    pub word_ids: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
}

/// Splits a corpus into batches. With a seed the sentence order is a
/// deterministic permutation; `None` keeps corpus order. Every sentence
/// appears exactly once.
pub fn batch_iter(corpus: &Corpus, batch_size: usize, shuffle_seed: Option<u64>) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..corpus.sentences.len()).collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    let mut batches = Vec::new();
    for chunk in order.chunks(batch_size) {
        let max_len = chunk
            .iter()
            .map(|&i| corpus.sentences[i].len())
            .max()
            .unwrap_or(0);
        let mut word_ids = Vec::with_capacity(chunk.len());
        let mut mask = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let sentence = &corpus.sentences[i];
            let mut ids: Vec<usize> = sentence
                .iter()
                .map(|t| corpus.vocab.lookup(&t.surface))
                .collect();
            let mut m = vec![true; sentence.len()];
            ids.resize(max_len, PAD_INDEX);
            m.resize(max_len, false);
            word_ids.push(ids);
            mask.push(m);
        }
        batches.push(Batch {
            sentences: chunk.to_vec(),
            word_ids,
            mask,
        });
    }
    Ok(batches)
}

// --- synthetic corpus -----------------------------------------------------

/// Entity lexicons: token sequences whose surfaces never occur outside
/// their type, so the tag of every token is recoverable from the surface.
const PER_ENTITIES: &[&[&str]] = &[
    &["Nguyễn_Văn_An"],
    &["Trần_Thị_Mai"],
    &["Lê_Hoàng_Long"],
    &["Phạm_Thu_Hà"],
    &["Nguyễn", "Đức_Anh"],
    &["Vũ", "Ngọc_Lan"],
];
const LOC_ENTITIES: &[&[&str]] = &[
    &["Hà_Nội"],
    &["Đà_Nẵng"],
    &["Hải_Phòng"],
    &["Huế"],
    &["Thành_phố", "Hồ_Chí_Minh"],
    &["Vịnh", "Hạ_Long"],
];
const ORG_ENTITIES: &[&[&str]] = &[
    &["Vietcombank"],
    &["Viettel"],
    &["Công_ty", "FPT"],
    &["Đại_học", "Bách_Khoa"],
];
const MISC_ENTITIES: &[&[&str]] = &[
    &["World_Cup"],
    &["SEA_Games"],
    &["Giải", "Nobel"],
    &["Tết", "Nguyên_Đán"],
];

#[derive(Clone, Copy)]
enum Piece {
    /// Fixed context word with its POS and chunk tags; NER is O.
    W(&'static str, &'static str, &'static str),
    /// Entity slot of one type.
    E(usize), // index into ENTITY_TYPES
}

use Piece::{E, W};

const TEMPLATES: &[&[Piece]] = &[
    &[E(0), W("đã", "R", "O"), W("gặp", "V", "B-VP"), E(0), W("tại", "E", "B-PP"), E(1), W(".", "CH", "O")],
    &[E(2), W("công_bố", "V", "B-VP"), W("kế_hoạch", "N", "B-NP"), W("mới", "A", "B-AP"), W(".", "CH", "O")],
    &[E(0), W("làm_việc", "V", "B-VP"), W("ở", "E", "B-PP"), E(1), W("hôm_qua", "N", "B-NP"), W(".", "CH", "O")],
    &[E(2), W("tổ_chức", "V", "B-VP"), E(3), W("tại", "E", "B-PP"), E(1), W(".", "CH", "O")],
    &[E(3), W("khai_mạc", "V", "B-VP"), W("ở", "E", "B-PP"), E(1), W(".", "CH", "O")],
    &[E(0), W("tham_dự", "V", "B-VP"), E(3), W("cùng", "E", "B-PP"), E(0), W(".", "CH", "O")],
    &[E(2), W("và", "C", "O"), E(2), W("hợp_tác", "V", "B-VP"), W(".", "CH", "O")],
    &[E(1), W("đón", "V", "B-VP"), E(0), W("đến", "V", "B-VP"), W("thăm", "V", "B-VP"), W(".", "CH", "O")],
];

fn entity_pool(kind: usize) -> &'static [&'static [&'static str]] {
    match kind {
        0 => PER_ENTITIES,
        1 => LOC_ENTITIES,
        2 => ORG_ENTITIES,
        _ => MISC_ENTITIES,
    }
}

/// Generates a deterministic synthetic corpus. Entity surfaces come from
/// closed per-type lexicons, so gold tags are recoverable from surfaces
/// alone; all four entity types occur.
pub fn synth_corpus(seed: u64, n_sentences: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
        let mut sentence = Vec::new();
        for piece in template {
            match *piece {
                W(surface, pos, chunk) => sentence.push(Token {
                    surface: surface.to_string(),
                    pos: pos.to_string(),
                    chunk: chunk.to_string(),
                    ner: "O".to_string(),
                }),
                E(kind) => {
                    let pool = entity_pool(kind);
                    let entity = pool[rng.gen_range(0..pool.len())];
                    for (i, surface) in entity.iter().enumerate() {
                        let prefix = if i == 0 { "B" } else { "I" };
                        sentence.push(Token {
                            surface: surface.to_string(),
                            pos: "Np".to_string(),
                            chunk: if i == 0 { "B-NP" } else { "I-NP" }.to_string(),
                            ner: format!("{}-{}", prefix, ENTITY_TYPES[kind]),
                        });
                    }
                }
            }
        }
        sentences.push(sentence);
    }
    build_corpus(sentences, Vec::new())
}
