//! Per-token input features: word embeddings (skip-gram trained or loaded
//! from a text file), the UNK initialization law, one-hot POS/chunk vectors,
//! and the concatenated word representation fed to the encoder.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::data::Token;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const UNK_INDEX: usize = 0;
pub const PAD_INDEX: usize = 1;
pub const UNK_SYMBOL: &str = "<unk>";
pub const PAD_SYMBOL: &str = "<pad>";

/// Ordered symbol table with reserved UNK (0) and PAD (1) entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let symbols = vec![UNK_SYMBOL.to_string(), PAD_SYMBOL.to_string()];
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self { symbols, index }
    }

    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for s in symbols {
            v.add(s.as_ref());
        }
        v
    }

    /// Adds a symbol if absent and returns its index.
    pub fn add(&mut self, symbol: &str) -> usize {
        if let Some(&i) = self.index.get(symbol) {
            return i;
        }
        let i = self.symbols.len();
        self.symbols.push(symbol.to_string());
        self.index.insert(symbol.to_string(), i);
        i
    }

    /// Index of a symbol, falling back to UNK for unseen ones.
    pub fn lookup(&self, symbol: &str) -> usize {
        self.index.get(symbol).copied().unwrap_or(UNK_INDEX)
    }

    pub fn get(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Total entry count including the two reserved slots.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    /// Real symbols, excluding UNK and PAD.
    pub fn words(&self) -> &[String] {
        &self.symbols[2..]
    }
}

/// Ordered inventory of POS or chunk or NER tags, in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TagInventory {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagInventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tags<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut inv = Self::new();
        for t in tags {
            inv.add(t.as_ref());
        }
        inv
    }

    pub fn add(&mut self, tag: &str) -> usize {
        if let Some(&i) = self.index.get(tag) {
            return i;
        }
        let i = self.tags.len();
        self.tags.push(tag.to_string());
        self.index.insert(tag.to_string(), i);
        i
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag(&self, index: usize) -> &str {
        &self.tags[index]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

/// Word lookup policy: case-preserving match first, lowercase fallback
/// second, UNK last.
pub fn lookup_with_fallback(vocab: &Vocab, surface: &str) -> usize {
    if let Some(i) = vocab.get(surface) {
        return i;
    }
    if let Some(i) = vocab.get(&surface.to_lowercase()) {
        return i;
    }
    UNK_INDEX
}

/// Uniform draw from the symmetric range `[-sqrt(3/dim), +sqrt(3/dim)]`
/// used to initialize out-of-vocabulary embedding rows.
pub fn unk_vector<T: Real>(dim: usize, rng: &mut impl Rng) -> Result<Vec<T>> {
    if dim == 0 {
        return Err(Error::InvalidParameter(
            "unk_vector: dim must be at least 1".into(),
        ));
    }
    let bound = (3.0 / dim as f64).sqrt();
    Ok((0..dim)
        .map(|_| T::from_f64(-bound + rng.gen::<f64>() * 2.0 * bound))
        .collect())
}

/// One-hot encoding of a tag against an inventory. Unseen tags map to the
/// all-zero vector so inference never fails on new data.
pub fn one_hot<T: Real>(tag: &str, inventory: &TagInventory) -> Vec<T> {
    let mut v = vec![T::zero(); inventory.len()];
    if let Some(i) = inventory.index_of(tag) {
        v[i] = T::one();
    }
    v
}

/// Word-embedding matrix keyed by a [`Vocab`].
#[derive(Clone, Debug)]
pub struct EmbeddingTable<T: Real> {
    vocab: Vocab,
    dim: usize,
    rows: Tensor<T>,
    trainable: bool,
}

impl<T: Real> EmbeddingTable<T> {
    /// Fresh table with every row (including UNK) drawn from the UNK range
    /// and the PAD row zeroed.
    pub fn new_random(vocab: Vocab, dim: usize, trainable: bool, rng: &mut impl Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "embedding dim must be at least 1".into(),
            ));
        }
        let mut data = Vec::with_capacity(vocab.len() * dim);
        for i in 0..vocab.len() {
            if i == PAD_INDEX {
                data.extend(std::iter::repeat_n(T::zero(), dim));
            } else {
                data.extend(unk_vector::<T>(dim, rng)?);
            }
        }
        let rows = Tensor::new(vec![vocab.len(), dim], data)?;
        Ok(Self {
            vocab,
            dim,
            rows,
            trainable,
        })
    }

    pub fn from_rows(vocab: Vocab, dim: usize, rows: Tensor<T>, trainable: bool) -> Result<Self> {
        if rows.shape() != [vocab.len(), dim] {
            return Err(Error::ShapeMismatch {
                op: "embedding_table",
                lhs: vec![vocab.len(), dim],
                rhs: rows.shape().to_vec(),
            });
        }
        Ok(Self {
            vocab,
            dim,
            rows,
            trainable,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn rows(&self) -> &Tensor<T> {
        &self.rows
    }

    pub fn row(&self, index: usize) -> &[T] {
        &self.rows.data()[index * self.dim..(index + 1) * self.dim]
    }

    /// Case-preserving lookup with a lowercase fallback before UNK.
    pub fn lookup(&self, surface: &str) -> usize {
        lookup_with_fallback(&self.vocab, surface)
    }

    pub fn row_for(&self, surface: &str) -> (usize, &[T]) {
        let i = self.lookup(surface);
        (i, self.row(i))
    }

    /// Writes the table in the text interchange format: a `<count> <dim>`
    /// header, then one `word v1 .. vdim` line per real word.
    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{} {}", self.vocab.words().len(), self.dim)?;
        for (offset, word) in self.vocab.words().iter().enumerate() {
            write!(out, "{}", word)?;
            for v in self.row(2 + offset) {
                write!(out, " {}", v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    /// Parses the text interchange format. The UNK row is sampled fresh from
    /// the UNK range; the PAD row is zero.
    pub fn parse(text: &str, trainable: bool, rng: &mut impl Rng) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "missing embedding header".into(),
            })?;
        let mut parts = header.split_whitespace();
        let count: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "header must be `<count> <dim>`".into(),
            })?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "header must be `<count> <dim>`".into(),
            })?;
        if dim == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "embedding dim must be at least 1".into(),
            });
        }

        let mut vocab = Vocab::new();
        let mut data: Vec<T> = Vec::with_capacity((count + 2) * dim);
        data.extend(unk_vector::<T>(dim, rng)?);
        data.extend(std::iter::repeat_n(T::zero(), dim));
        let mut seen = 0usize;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let word = fields.next().ok_or_else(|| Error::Parse {
                line: lineno,
                message: "empty embedding row".into(),
            })?;
            if vocab.get(word).is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("duplicate word {word}"),
                });
            }
            vocab.add(word);
            let mut got = 0usize;
            for f in fields {
                let v = T::parse_str(f).ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("bad number {f}"),
                })?;
                data.push(v);
                got += 1;
            }
            if got != dim {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {dim} values, got {got}"),
                });
            }
            seen += 1;
        }
        if seen != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("header promised {count} rows, file has {seen}"),
            });
        }
        let rows = Tensor::new(vec![vocab.len(), dim], data)?;
        Ok(Self {
            vocab,
            dim,
            rows,
            trainable,
        })
    }

    pub fn load(path: &Path, trainable: bool, rng: &mut impl Rng) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, trainable, rng)
    }
}

/// Skip-gram training knobs. `window` counts context words per side.
#[derive(Clone, Debug)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            epochs: 1,
            window: 2,
            negatives: 5,
            learning_rate: 0.025,
        }
    }
}

/// All (target, context) position pairs of a sentence with
/// `1 <= |i - j| <= window`, ordered by increasing target then context.
pub fn skipgram_pairs(sentence: &[usize], window: usize) -> Vec<(usize, usize)> {
    let n = sentence.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(n.saturating_sub(1));
        for j in lo..=hi {
            if j != i {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Trains skip-gram embeddings with negative sampling over a tokenized
/// corpus. Deterministic for a fixed RNG state.
///
/// Uses 5 negatives per pair by default and a unigram^0.75 noise
/// distribution; context vectors are discarded after training.
pub fn train_skipgram<T: Real>(
    sentences: &[Vec<String>],
    cfg: &SkipgramConfig,
    rng: &mut impl Rng,
) -> Result<EmbeddingTable<T>> {
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyInput("train_skipgram corpus"));
    }
    if cfg.dim == 0 {
        return Err(Error::InvalidParameter(
            "skip-gram dim must be at least 1".into(),
        ));
    }

    let mut vocab = Vocab::new();
    let mut counts: Vec<u64> = vec![0, 0];
    let indexed: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| {
            s.iter()
                .map(|w| {
                    let i = vocab.add(w);
                    if i >= counts.len() {
                        counts.push(0);
                    }
                    counts[i] += 1;
                    i
                })
                .collect()
        })
        .collect();

    let v = vocab.len();
    let dim = cfg.dim;

    // Input rows start uniform in +-0.5/dim (UNK/PAD rows get the same
    // init here; UNK is re-drawn from its own law below). Context rows
    // start at zero.
    let half = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..v * dim)
        .map(|_| -half + rng.gen::<f64>() * 2.0 * half)
        .collect();
    let mut output = vec![0.0f64; v * dim];

    // Unigram^0.75 noise distribution as a cumulative table.
    let mut cumulative = Vec::with_capacity(v);
    let mut total = 0.0f64;
    for &c in &counts {
        total += (c as f64).powf(0.75);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::EmptyInput("train_skipgram corpus"));
    }
    let draw_noise = |rng: &mut dyn rand::RngCore| -> usize {
        let r = rand::Rng::gen::<f64>(rng) * total;
        cumulative.partition_point(|&c| c <= r).min(v - 1)
    };

    let lr = cfg.learning_rate;
    for _epoch in 0..cfg.epochs {
        for sentence in &indexed {
            for (ti, ci) in skipgram_pairs(sentence, cfg.window) {
                let center = sentence[ti];
                let ctx = sentence[ci];
                let cin = center * dim;
                let mut err = vec![0.0f64; dim];
                for k in 0..=cfg.negatives {
                    let (sample, label) = if k == 0 {
                        (ctx, 1.0)
                    } else {
                        let s = draw_noise(rng);
                        if s == ctx {
                            continue;
                        }
                        (s, 0.0)
                    };
                    let sout = sample * dim;
                    let mut dot = 0.0;
                    for d in 0..dim {
                        dot += input[cin + d] * output[sout + d];
                    }
                    let f = 1.0 / (1.0 + (-dot).exp());
                    let g = lr * (label - f);
                    for d in 0..dim {
                        err[d] += g * output[sout + d];
                        output[sout + d] += g * input[cin + d];
                    }
                }
                for d in 0..dim {
                    input[cin + d] += err[d];
                }
            }
        }
    }

    let mut data: Vec<T> = input.into_iter().map(T::from_f64).collect();
    let unk = unk_vector::<T>(dim, rng)?;
    data[UNK_INDEX * dim..(UNK_INDEX + 1) * dim].copy_from_slice(&unk);
    for v in &mut data[PAD_INDEX * dim..(PAD_INDEX + 1) * dim] {
        *v = T::zero();
    }
    let rows = Tensor::new(vec![v, dim], data)?;
    EmbeddingTable::from_rows(vocab, dim, rows, false)
}

/// The word-independent feature slice `[word | POS one-hot | chunk one-hot]`
/// of a token's representation.
pub fn context_features<T: Real>(
    token: &Token,
    words: &EmbeddingTable<T>,
    pos_tags: &TagInventory,
    chunk_tags: &TagInventory,
) -> Vec<T> {
    let (_, row) = words.row_for(&token.surface);
    let mut v = Vec::with_capacity(words.dim() + pos_tags.len() + chunk_tags.len());
    v.extend_from_slice(row);
    v.extend(one_hot::<T>(&token.pos, pos_tags));
    v.extend(one_hot::<T>(&token.chunk, chunk_tags));
    v
}

/// Full per-token input vector in the fixed order
/// `[word | POS one-hot | chunk one-hot | character feature]`.
pub fn build_word_representation<T: Real>(
    token: &Token,
    words: &EmbeddingTable<T>,
    pos_tags: &TagInventory,
    chunk_tags: &TagInventory,
    char_vector: &[T],
    char_feature_dim: usize,
) -> Result<Vec<T>> {
    if char_vector.len() != char_feature_dim {
        return Err(Error::ShapeMismatch {
            op: "build_word_representation",
            lhs: vec![char_feature_dim],
            rhs: vec![char_vector.len()],
        });
    }
    let mut v = context_features(token, words, pos_tags, chunk_tags);
    v.extend_from_slice(char_vector);
    Ok(v)
}
