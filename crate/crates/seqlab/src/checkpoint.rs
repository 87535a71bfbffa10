//! Versioned binary checkpoints: configuration, vocabularies, every named
//! parameter tensor, optional optimizer state, and the best-validation
//! record, protected by a trailing CRC32 over the payload.
//!
//! All numbers are little-endian; tensor data is stored raw in the
//! element width recorded in the header, so a save/load round trip is
//! bitwise exact. An unknown format version is refused, never
//! reinterpreted.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{TagInventory, Vocab};
use crate::model::NerModel;
use crate::optim::NadamState;
use crate::tensor::{Dtype, Real, Tensor};

const MAGIC: &[u8; 4] = b"SQLB";
pub const FORMAT_VERSION: u32 = 1;

/// Best-validation bookkeeping stored alongside the parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BestRecord {
    pub epoch: usize,
    pub val_loss: f64,
}

/// Optimizer state snapshot aligned with the tensor list.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSnapshot<T: Real> {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> OptimizerSnapshot<T> {
    pub fn capture(state: &NadamState<T>) -> Self {
        Self {
            step: state.step,
            beta1: state.beta1,
            beta2: state.beta2,
            eps: state.eps,
            moments: state
                .moments()
                .map(|(m, v)| (m.to_vec(), v.to_vec()))
                .collect(),
        }
    }
}

/// Everything needed to reproduce a model (and optionally resume
/// training) exactly.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Real> {
    pub config: Config,
    pub word_vocab: Vocab,
    pub char_vocab: Vocab,
    pub pos_tags: TagInventory,
    pub chunk_tags: TagInventory,
    pub ner_tags: TagInventory,
    pub tensors: Vec<(String, Tensor<T>)>,
    pub optimizer: Option<OptimizerSnapshot<T>>,
    pub best: Option<BestRecord>,
}

impl<T: Real> Checkpoint<T> {
    pub fn of_model(
        model: &NerModel<T>,
        optimizer: Option<&NadamState<T>>,
        best: Option<BestRecord>,
    ) -> Self {
        Self {
            config: model.config.clone(),
            word_vocab: model.word_vocab.clone(),
            char_vocab: model.char_vocab.clone(),
            pos_tags: model.pos_tags.clone(),
            chunk_tags: model.chunk_tags.clone(),
            ner_tags: model.ner_tags.clone(),
            tensors: model
                .store
                .iter()
                .map(|(name, t)| (name.to_string(), t.detached()))
                .collect(),
            optimizer: optimizer.map(OptimizerSnapshot::capture),
            best,
        }
    }
}

// --- byte-level encoding ----------------------------------------------------

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn values<T: Real>(&mut self, values: &[T]) {
        for v in values {
            v.write_le(&mut self.buf);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(
                "truncated file: payload ends early".into(),
            ));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Checkpoint("string field is not UTF-8".into()))
    }

    fn values<T: Real>(&mut self, count: usize) -> Result<Vec<T>> {
        let width = T::DTYPE.byte_width();
        let bytes = self.take(count * width)?;
        Ok(bytes.chunks_exact(width).map(T::read_le).collect())
    }
}

fn write_symbols(w: &mut Writer, symbols: &[String]) {
    w.u32(symbols.len() as u32);
    for s in symbols {
        w.str(s);
    }
}

fn read_symbols(r: &mut Reader) -> Result<Vec<String>> {
    let count = r.u32()? as usize;
    (0..count).map(|_| r.str()).collect()
}

/// Serializes a checkpoint to bytes (payload plus trailing CRC32).
pub fn serialize<T: Real>(ckpt: &Checkpoint<T>) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(T::DTYPE.byte_width() as u8);

    w.str(&ckpt.config.to_text());
    write_symbols(&mut w, ckpt.word_vocab.words());
    write_symbols(&mut w, ckpt.char_vocab.words());
    write_symbols(&mut w, ckpt.pos_tags.tags());
    write_symbols(&mut w, ckpt.chunk_tags.tags());
    write_symbols(&mut w, ckpt.ner_tags.tags());

    w.u32(ckpt.tensors.len() as u32);
    for (name, tensor) in &ckpt.tensors {
        w.str(name);
        w.u8(tensor.requires_grad() as u8);
        w.u8(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            w.u32(d as u32);
        }
        w.values(tensor.data());
    }

    match &ckpt.optimizer {
        None => w.u8(0),
        Some(opt) => {
            w.u8(1);
            w.u64(opt.step);
            w.f64(opt.beta1);
            w.f64(opt.beta2);
            w.f64(opt.eps);
            w.u32(opt.moments.len() as u32);
            for (m, v) in &opt.moments {
                w.values(m);
                w.values(v);
            }
        }
    }

    match &ckpt.best {
        None => w.u8(0),
        Some(b) => {
            w.u8(1);
            w.u32(b.epoch as u32);
            w.f64(b.val_loss);
        }
    }

    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

/// Dtype recorded in a checkpoint's header, for precision dispatch.
pub fn peek_dtype(bytes: &[u8]) -> Result<Dtype> {
    if bytes.len() < 9 {
        return Err(Error::Checkpoint("truncated file: missing header".into()));
    }
    check_header(bytes)?;
    match bytes[8] {
        4 => Ok(Dtype::F32),
        8 => Ok(Dtype::F64),
        w => Err(Error::Checkpoint(format!("unknown element width {w}"))),
    }
}

fn check_header(bytes: &[u8]) -> Result<()> {
    if &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

/// Parses checkpoint bytes, verifying length, checksum, version, and
/// element width before any field is interpreted.
pub fn deserialize<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < 13 {
        return Err(Error::Checkpoint("truncated file: missing header".into()));
    }
    let (payload, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(Error::Checkpoint(
            "integrity check failed: checksum mismatch".into(),
        ));
    }
    check_header(payload)?;
    let dtype = peek_dtype(payload)?;
    if dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!(
            "stores {} values, requested {}",
            dtype.name(),
            T::DTYPE.name()
        )));
    }

    let mut r = Reader::new(payload);
    r.take(9)?; // magic + version + width

    let config = Config::parse(&r.str()?)?;
    let word_vocab = Vocab::from_symbols(read_symbols(&mut r)?);
    let char_vocab = Vocab::from_symbols(read_symbols(&mut r)?);
    let pos_tags = TagInventory::from_tags(read_symbols(&mut r)?);
    let chunk_tags = TagInventory::from_tags(read_symbols(&mut r)?);
    let ner_tags = TagInventory::from_tags(read_symbols(&mut r)?);

    let tensor_count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name = r.str()?;
        let requires_grad = r.u8()? != 0;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = r.values::<T>(numel)?;
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?
            .with_requires_grad(requires_grad);
        tensors.push((name, tensor));
    }

    let optimizer = if r.u8()? != 0 {
        let step = r.u64()?;
        let beta1 = r.f64()?;
        let beta2 = r.f64()?;
        let eps = r.f64()?;
        let count = r.u32()? as usize;
        if count != tensors.len() {
            return Err(Error::Checkpoint(
                "optimizer state does not match the tensor list".into(),
            ));
        }
        let mut moments = Vec::with_capacity(count);
        for (_, tensor) in &tensors {
            let m = r.values::<T>(tensor.numel())?;
            let v = r.values::<T>(tensor.numel())?;
            moments.push((m, v));
        }
        Some(OptimizerSnapshot {
            step,
            beta1,
            beta2,
            eps,
            moments,
        })
    } else {
        None
    };

    let best = if r.u8()? != 0 {
        Some(BestRecord {
            epoch: r.u32()? as usize,
            val_loss: r.f64()?,
        })
    } else {
        None
    };

    if r.pos != payload.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }

    Ok(Checkpoint {
        config,
        word_vocab,
        char_vocab,
        pos_tags,
        chunk_tags,
        ner_tags,
        tensors,
        optimizer,
        best,
    })
}

pub fn save_checkpoint<T: Real>(ckpt: &Checkpoint<T>, path: &Path) -> Result<()> {
    fs::write(path, serialize(ckpt))?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path)?;
    deserialize(&bytes)
}

pub fn peek_dtype_file(path: &Path) -> Result<Dtype> {
    let bytes = fs::read(path)?;
    peek_dtype(&bytes)
}

/// Rebuilds a model from a checkpoint: the store layout is reconstructed
/// from the stored configuration and vocabularies, then every tensor is
/// overwritten by name. Inference outputs reproduce the saver's bitwise.
pub fn model_from_checkpoint<T: Real>(ckpt: &Checkpoint<T>) -> Result<NerModel<T>> {
    let word_trainable = ckpt
        .tensors
        .iter()
        .find(|(n, _)| n == "embed.word")
        .map(|(_, t)| t.requires_grad())
        .ok_or_else(|| Error::Checkpoint("missing tensor embed.word".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(ckpt.config.seed);
    let mut model = NerModel::from_parts(
        ckpt.config.clone(),
        ckpt.word_vocab.clone(),
        ckpt.char_vocab.clone(),
        ckpt.pos_tags.clone(),
        ckpt.chunk_tags.clone(),
        ckpt.ner_tags.clone(),
        word_trainable,
        &mut rng,
    )?;
    if ckpt.tensors.len() != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "stores {} tensors, model expects {}",
            ckpt.tensors.len(),
            model.store.len()
        )));
    }
    for (name, tensor) in &ckpt.tensors {
        let id = model
            .store
            .by_name(name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
        if model.store.get(id).shape() != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {:?} does not match model shape {:?}",
                tensor.shape(),
                model.store.get(id).shape()
            )));
        }
        model.store.load_values(id, tensor.data())?;
    }
    Ok(model)
}

/// Restores the optimizer state captured next to the model tensors.
pub fn optimizer_from_snapshot<T: Real>(
    snapshot: &OptimizerSnapshot<T>,
    model: &NerModel<T>,
) -> Result<NadamState<T>> {
    let mut state = NadamState::with_hyper(&model.store, snapshot.beta1, snapshot.beta2, snapshot.eps);
    state.step = snapshot.step;
    for (i, (m, v)) in snapshot.moments.iter().enumerate() {
        state.restore_moments(i, m.clone(), v.clone())?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_corpus;
    use crate::features::EmbeddingTable;

    fn sample_checkpoint() -> Checkpoint<f32> {
        let corpus = synth_corpus(5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let table =
            EmbeddingTable::<f32>::new_random(corpus.vocab.clone(), 7, false, &mut rng).unwrap();
        let config = Config {
            word_dim: 7,
            char_dim: 4,
            hidden_char: 2,
            hidden_word: 3,
            ..Config::default()
        };
        let model = NerModel::build(config, &table, &corpus, &mut rng).unwrap();
        let state = NadamState::new(&model.store);
        Checkpoint::of_model(
            &model,
            Some(&state),
            Some(BestRecord {
                epoch: 3,
                val_loss: 0.125,
            }),
        )
    }

    #[test]
    fn roundtrip_is_bitwise_exact() {
        let ckpt = sample_checkpoint();
        let bytes = serialize(&ckpt);
        let loaded: Checkpoint<f32> = deserialize(&bytes).unwrap();
        assert_eq!(loaded.config, ckpt.config);
        assert_eq!(loaded.word_vocab, ckpt.word_vocab);
        assert_eq!(loaded.ner_tags, ckpt.ner_tags);
        assert_eq!(loaded.best, ckpt.best);
        assert_eq!(loaded.tensors.len(), ckpt.tensors.len());
        for ((an, at), (bn, bt)) in loaded.tensors.iter().zip(&ckpt.tensors) {
            assert_eq!(an, bn);
            assert_eq!(at.shape(), bt.shape());
            assert_eq!(at.requires_grad(), bt.requires_grad());
            assert!(at
                .data()
                .iter()
                .zip(bt.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(loaded.optimizer, ckpt.optimizer);
        // serialization itself is deterministic
        assert_eq!(serialize(&loaded), bytes);
    }

    #[test]
    fn truncation_and_corruption_are_refused() {
        let bytes = serialize(&sample_checkpoint());
        for cut in [0, 5, bytes.len() / 2, bytes.len() - 1] {
            let err = deserialize::<f32>(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Checkpoint(_)), "cut {cut}: {err}");
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0xFF;
        let err = deserialize::<f32>(&flipped).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let mut bytes = serialize(&sample_checkpoint());
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        // recompute the checksum so only the version differs
        let len = bytes.len();
        let crc = crc32fast::hash(&bytes[..len - 4]);
        bytes[len - 4..].copy_from_slice(&crc.to_le_bytes());
        let err = deserialize::<f32>(&bytes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("99") && msg.contains('1'), "{msg}");
    }

    #[test]
    fn dtype_mismatch_is_refused() {
        let bytes = serialize(&sample_checkpoint());
        assert_eq!(peek_dtype(&bytes).unwrap(), Dtype::F32);
        let err = deserialize::<f64>(&bytes).unwrap_err();
        assert!(err.to_string().contains("f32"), "{err}");
    }

    #[test]
    fn loaded_model_reproduces_predictions() {
        let corpus = synth_corpus(5, 10);
        let ckpt = sample_checkpoint();
        let model = model_from_checkpoint(&ckpt).unwrap();
        let reloaded: Checkpoint<f32> = deserialize(&serialize(&ckpt)).unwrap();
        let model2 = model_from_checkpoint(&reloaded).unwrap();
        for sentence in corpus.sentences.iter().take(5) {
            assert_eq!(
                model.predict_sentence(sentence).unwrap(),
                model2.predict_sentence(sentence).unwrap()
            );
        }
    }
}
