//! LSTM cell and the bidirectional encoders built from it: the
//! character-level word-feature extractor and the two stacked Bi-LSTM
//! layers that encode sentences.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::Vocab;
use crate::params::{ParamBinding, ParamId, ParamStore};
use crate::tensor::{Real, Tape, Tensor, ValueId};

/// Gate parameters of one LSTM direction.
///
/// `W*` matrices connect the previous hidden state, `U*` matrices connect
/// the input, `b*` are the gate biases; the four blocks cover the forget,
/// input, output, and cell-candidate gates.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_f: ParamId,
    pub w_i: ParamId,
    pub w_o: ParamId,
    pub w_c: ParamId,
    pub u_f: ParamId,
    pub u_i: ParamId,
    pub u_o: ParamId,
    pub u_c: ParamId,
    pub b_f: ParamId,
    pub b_i: ParamId,
    pub b_o: ParamId,
    pub b_c: ParamId,
    pub hidden: usize,
    pub input: usize,
}

impl LstmParams {
    /// Registers freshly initialized parameters: matrices uniform in
    /// `+-sqrt(6/(fan_in+fan_out))`, biases zero except the forget-gate
    /// bias at +1.
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        hidden: usize,
        input: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w_bound = (6.0 / (hidden + hidden) as f64).sqrt();
        let u_bound = (6.0 / (hidden + input) as f64).sqrt();
        let mut mat = |name: &str, rows: usize, cols: usize, bound: f64, rng: &mut dyn rand::RngCore| {
            store.insert(
                &format!("{prefix}.{name}"),
                Tensor::uniform(vec![rows, cols], -bound, bound, rng).with_requires_grad(true),
            )
        };
        let w_f = mat("w_f", hidden, hidden, w_bound, rng);
        let w_i = mat("w_i", hidden, hidden, w_bound, rng);
        let w_o = mat("w_o", hidden, hidden, w_bound, rng);
        let w_c = mat("w_c", hidden, hidden, w_bound, rng);
        let u_f = mat("u_f", hidden, input, u_bound, rng);
        let u_i = mat("u_i", hidden, input, u_bound, rng);
        let u_o = mat("u_o", hidden, input, u_bound, rng);
        let u_c = mat("u_c", hidden, input, u_bound, rng);
        let forget_bias = Tensor::new(vec![hidden], vec![T::one(); hidden])
            .expect("bias shape")
            .with_requires_grad(true);
        let b_f = store.insert(&format!("{prefix}.b_f"), forget_bias);
        let b_i = store.insert(
            &format!("{prefix}.b_i"),
            Tensor::zeros(vec![hidden]).with_requires_grad(true),
        );
        let b_o = store.insert(
            &format!("{prefix}.b_o"),
            Tensor::zeros(vec![hidden]).with_requires_grad(true),
        );
        let b_c = store.insert(
            &format!("{prefix}.b_c"),
            Tensor::zeros(vec![hidden]).with_requires_grad(true),
        );
        Self {
            w_f,
            w_i,
            w_o,
            w_c,
            u_f,
            u_i,
            u_o,
            u_c,
            b_f,
            b_i,
            b_o,
            b_c,
            hidden,
            input,
        }
    }

    /// Scalar count of one direction: `4 * (h*h + h*in + h)`.
    pub fn scalar_count(hidden: usize, input: usize) -> usize {
        4 * (hidden * hidden + hidden * input + hidden)
    }

    pub fn ids(&self) -> [ParamId; 12] {
        [
            self.w_f, self.w_i, self.w_o, self.w_c, self.u_f, self.u_i, self.u_o, self.u_c,
            self.b_f, self.b_i, self.b_o, self.b_c,
        ]
    }
}

/// Recurrent state `(h, c)` of one direction on the tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: ValueId,
    pub c: ValueId,
}

impl LstmState {
    /// All-zero initial state.
    pub fn zeros<T: Real>(tape: &mut Tape<T>, hidden: usize) -> Self {
        let h = tape.leaf(Tensor::zeros(vec![hidden]));
        let c = tape.leaf(Tensor::zeros(vec![hidden]));
        Self { h, c }
    }
}

/// Independent forward and backward directions over a shared input size.
#[derive(Clone, Copy, Debug)]
pub struct BiLstmLayer {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmLayer {
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        hidden: usize,
        input: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            fwd: LstmParams::init(store, &format!("{prefix}.fwd"), hidden, input, rng),
            bwd: LstmParams::init(store, &format!("{prefix}.bwd"), hidden, input, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }
}

fn gate_preactivation<T: Real>(
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    w: ParamId,
    u: ParamId,
    b: ParamId,
    x: ValueId,
    h_prev: ValueId,
) -> Result<ValueId> {
    let wh = tape.matvec(binding.id(w), h_prev)?;
    let ux = tape.matvec(binding.id(u), x)?;
    let s = tape.add(wh, ux)?;
    tape.add(s, binding.id(b))
}

/// One LSTM cell update:
///
/// ```text
/// f = sigmoid(W_f h + U_f x + b_f)      i = sigmoid(W_i h + U_i x + b_i)
/// o = sigmoid(W_o h + U_o x + b_o)      c~ = tanh(W_c h + U_c x + b_c)
/// c' = f * c + i * c~                   h' = o * tanh(c')
/// ```
///
/// with `*` elementwise multiplication.
pub fn lstm_step<T: Real>(
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    p: &LstmParams,
    x: ValueId,
    prev: &LstmState,
) -> Result<LstmState> {
    let xsh = tape.value(x).shape();
    if xsh != [p.input] {
        return Err(Error::ShapeMismatch {
            op: "lstm_step",
            lhs: vec![p.input],
            rhs: xsh.to_vec(),
        });
    }
    let pre_f = gate_preactivation(tape, binding, p.w_f, p.u_f, p.b_f, x, prev.h)?;
    let f = tape.sigmoid(pre_f)?;
    let pre_i = gate_preactivation(tape, binding, p.w_i, p.u_i, p.b_i, x, prev.h)?;
    let i = tape.sigmoid(pre_i)?;
    let pre_o = gate_preactivation(tape, binding, p.w_o, p.u_o, p.b_o, x, prev.h)?;
    let o = tape.sigmoid(pre_o)?;
    let pre_c = gate_preactivation(tape, binding, p.w_c, p.u_c, p.b_c, x, prev.h)?;
    let c_tilde = tape.tanh(pre_c)?;

    let fc = tape.mul(f, prev.c)?;
    let ic = tape.mul(i, c_tilde)?;
    let c = tape.add(fc, ic)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Unrolls the recurrence from the zero state, returning `h_1..h_n`.
pub fn lstm_encode<T: Real>(
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    p: &LstmParams,
    seq: &[ValueId],
) -> Result<Vec<ValueId>> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("lstm_encode sequence"));
    }
    let mut state = LstmState::zeros(tape, p.hidden);
    let mut outputs = Vec::with_capacity(seq.len());
    for &x in seq {
        state = lstm_step(tape, binding, p, x, &state)?;
        outputs.push(state.h);
    }
    Ok(outputs)
}

/// Bidirectional encoding: position `t` output is the concatenation of the
/// forward state over `x_1..x_t` and the backward state over `x_n..x_t`.
pub fn bilstm_encode<T: Real>(
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    layer: &BiLstmLayer,
    seq: &[ValueId],
) -> Result<Vec<ValueId>> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("bilstm_encode sequence"));
    }
    let forward = lstm_encode(tape, binding, &layer.fwd, seq)?;
    let reversed: Vec<ValueId> = seq.iter().rev().copied().collect();
    let backward = lstm_encode(tape, binding, &layer.bwd, &reversed)?;
    let n = seq.len();
    let mut outputs = Vec::with_capacity(n);
    for t in 0..n {
        outputs.push(tape.concat(&[forward[t], backward[n - 1 - t]])?);
    }
    Ok(outputs)
}

/// Character-level word feature: embeds each character, applies dropout to
/// the character embeddings in training mode, runs the character Bi-LSTM,
/// and returns the concatenated final states of both directions.
#[allow(clippy::too_many_arguments)]
pub fn char_word_vector<T: Real>(
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    char_rows: ParamId,
    char_vocab: &Vocab,
    char_layer: &BiLstmLayer,
    word: &str,
    dropout_rate: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<ValueId> {
    if word.is_empty() {
        return Err(Error::EmptyInput("char_word_vector word"));
    }
    let table = binding.id(char_rows);
    let mut xs = Vec::new();
    let mut buf = [0u8; 4];
    for ch in word.chars() {
        let idx = char_vocab.lookup(ch.encode_utf8(&mut buf));
        let row = tape.row(table, idx)?;
        xs.push(tape.dropout(row, dropout_rate, training, rng)?);
    }
    let forward = lstm_encode(tape, binding, &char_layer.fwd, &xs)?;
    let reversed: Vec<ValueId> = xs.iter().rev().copied().collect();
    let backward = lstm_encode(tape, binding, &char_layer.bwd, &reversed)?;
    tape.concat(&[*forward.last().unwrap(), *backward.last().unwrap()])
}

/// Runs a sentence of word representations through the stacked encoder:
/// dropout, Bi-LSTM layer 1, dropout, Bi-LSTM layer 2. Dropout sits on the
/// input of each layer and disappears at inference.
#[allow(clippy::too_many_arguments)]
pub fn encode_sentence<T: Real>(
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    layer1: &BiLstmLayer,
    layer2: &BiLstmLayer,
    reps: &[ValueId],
    dropout_rate: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Vec<ValueId>> {
    if reps.is_empty() {
        return Err(Error::EmptyInput("encode_sentence sentence"));
    }
    let mut xs = Vec::with_capacity(reps.len());
    for &r in reps {
        xs.push(tape.dropout(r, dropout_rate, training, rng)?);
    }
    let h1 = bilstm_encode(tape, binding, layer1, &xs)?;
    let mut xs2 = Vec::with_capacity(h1.len());
    for &h in &h1 {
        xs2.push(tape.dropout(h, dropout_rate, training, rng)?);
    }
    bilstm_encode(tape, binding, layer2, &xs2)
}
