//! Linear-chain CRF output layer: sequence scoring, the exact log-partition
//! via the forward algorithm, negative log-likelihood with analytic
//! gradients, and Viterbi decoding.
//!
//! Tags are indexed `0..K`; two virtual tags BOS (`K`) and EOS (`K+1`)
//! extend the transition table to `(K+2) x (K+2)`. Entries into BOS and out
//! of EOS are negative infinity and are never read by any scoring routine,
//! so they receive zero gradient and survive optimization untouched.
//!
//! All internal dynamic programs run in `f64` regardless of the parameter
//! precision; results are cast back at the boundary.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{BackwardRule, Real, Tape, Tensor, ValueId};

/// Virtual begin-of-sequence tag index.
pub fn bos(num_tags: usize) -> usize {
    num_tags
}

/// Virtual end-of-sequence tag index.
pub fn eos(num_tags: usize) -> usize {
    num_tags + 1
}

/// Fresh transition table: zero scores between real tags and around
/// BOS/EOS, negative infinity on the never-used entries (into BOS, out of
/// EOS).
pub fn transition_matrix<T: Real>(num_tags: usize) -> Tensor<T> {
    let side = num_tags + 2;
    let mut t = Tensor::zeros(vec![side, side]);
    let (b, e) = (bos(num_tags), eos(num_tags));
    {
        let data = t.data_mut();
        for from in 0..side {
            data[from * side + b] = T::neg_infinity();
        }
        for to in 0..side {
            data[e * side + to] = T::neg_infinity();
        }
    }
    t
}

/// Handles for the CRF parameters inside a [`ParamStore`].
#[derive(Clone, Copy, Debug)]
pub struct CrfParams {
    pub emission_weight: ParamId,
    pub emission_bias: ParamId,
    pub transition: ParamId,
    pub num_tags: usize,
}

impl CrfParams {
    /// Registers emission projection and transition parameters.
    pub fn init<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        num_tags: usize,
        input_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = (6.0 / (num_tags + input_dim) as f64).sqrt();
        let emission_weight = store.insert(
            &format!("{prefix}.emission_weight"),
            Tensor::uniform(vec![num_tags, input_dim], -bound, bound, rng).with_requires_grad(true),
        );
        let emission_bias = store.insert(
            &format!("{prefix}.emission_bias"),
            Tensor::zeros(vec![num_tags]).with_requires_grad(true),
        );
        let transition = store.insert(
            &format!("{prefix}.transition"),
            transition_matrix::<T>(num_tags).with_requires_grad(true),
        );
        Self {
            emission_weight,
            emission_bias,
            transition,
            num_tags,
        }
    }
}

fn dims<T: Real>(emissions: &Tensor<T>, transition: &Tensor<T>) -> Result<(usize, usize)> {
    let esh = emissions.shape();
    if esh.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "crf",
            lhs: esh.to_vec(),
            rhs: vec![],
        });
    }
    let (n, k) = (esh[0], esh[1]);
    if n == 0 {
        return Err(Error::EmptyInput("crf emissions"));
    }
    if transition.shape() != [k + 2, k + 2] {
        return Err(Error::ShapeMismatch {
            op: "crf",
            lhs: vec![k + 2, k + 2],
            rhs: transition.shape().to_vec(),
        });
    }
    Ok((n, k))
}

fn check_tags(tags: &[usize], n: usize, k: usize) -> Result<()> {
    if tags.len() != n {
        return Err(Error::InvalidParameter(format!(
            "tag sequence length {} does not match {} emission rows",
            tags.len(),
            n
        )));
    }
    if let Some(&bad) = tags.iter().find(|&&t| t >= k) {
        return Err(Error::TagIndex {
            index: bad,
            count: k,
        });
    }
    Ok(())
}

fn score_f64(e: &[f64], tr: &[f64], n: usize, k: usize, tags: &[usize]) -> f64 {
    let side = k + 2;
    let mut score = tr[bos(k) * side + tags[0]];
    for (i, &tag) in tags.iter().enumerate() {
        score += e[i * k + tag];
        if i > 0 {
            score += tr[tags[i - 1] * side + tag];
        }
    }
    score + tr[tags[n - 1] * side + eos(k)]
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn to_f64_vec<T: Real>(data: &[T]) -> Vec<f64> {
    data.iter().map(|v| v.as_f64()).collect()
}

/// Total score of one tag sequence: emissions plus transitions including
/// the virtual BOS entry and EOS exit.
pub fn score_sequence<T: Real>(
    emissions: &Tensor<T>,
    tags: &[usize],
    transition: &Tensor<T>,
) -> Result<T> {
    let (n, k) = dims(emissions, transition)?;
    check_tags(tags, n, k)?;
    let e = to_f64_vec(emissions.data());
    let tr = to_f64_vec(transition.data());
    Ok(T::from_f64(score_f64(&e, &tr, n, k, tags)))
}

/// Log-alpha table of the forward algorithm; row `i` holds
/// `log sum over prefixes ending in tag j at position i`.
fn forward_alphas(e: &[f64], tr: &[f64], n: usize, k: usize) -> Vec<f64> {
    let side = k + 2;
    let mut alpha = vec![0.0f64; n * k];
    for j in 0..k {
        alpha[j] = tr[bos(k) * side + j] + e[j];
    }
    let mut scratch = vec![0.0f64; k];
    for i in 1..n {
        for j in 0..k {
            for (p, s) in scratch.iter_mut().enumerate() {
                *s = alpha[(i - 1) * k + p] + tr[p * side + j];
            }
            alpha[i * k + j] = logsumexp(&scratch) + e[i * k + j];
        }
    }
    alpha
}

fn log_partition_f64(e: &[f64], tr: &[f64], n: usize, k: usize) -> f64 {
    let side = k + 2;
    let alpha = forward_alphas(e, tr, n, k);
    let finals: Vec<f64> = (0..k)
        .map(|j| alpha[(n - 1) * k + j] + tr[j * side + eos(k)])
        .collect();
    logsumexp(&finals)
}

/// Log of the summed exponentiated scores over all `K^n` tag sequences,
/// computed by the forward algorithm in log space.
pub fn log_partition<T: Real>(emissions: &Tensor<T>, transition: &Tensor<T>) -> Result<T> {
    let (n, k) = dims(emissions, transition)?;
    let e = to_f64_vec(emissions.data());
    let tr = to_f64_vec(transition.data());
    Ok(T::from_f64(log_partition_f64(&e, &tr, n, k)))
}

/// Negative log-likelihood of the gold sequence,
/// `log_partition - score_sequence`, never below zero.
pub fn nll_loss<T: Real>(
    emissions: &Tensor<T>,
    gold: &[usize],
    transition: &Tensor<T>,
) -> Result<T> {
    let (n, k) = dims(emissions, transition)?;
    check_tags(gold, n, k)?;
    let e = to_f64_vec(emissions.data());
    let tr = to_f64_vec(transition.data());
    let nll = log_partition_f64(&e, &tr, n, k) - score_f64(&e, &tr, n, k, gold);
    Ok(T::from_f64(nll.max(0.0)))
}

/// Highest-scoring tag sequence and its score. Ties break toward the
/// lowest tag index at every backtracking step, so decoding is
/// deterministic.
pub fn viterbi_decode<T: Real>(
    emissions: &Tensor<T>,
    transition: &Tensor<T>,
) -> Result<(Vec<usize>, T)> {
    let (n, k) = dims(emissions, transition)?;
    let e = to_f64_vec(emissions.data());
    let tr = to_f64_vec(transition.data());
    let side = k + 2;

    let mut delta = vec![0.0f64; n * k];
    let mut back = vec![0usize; n * k];
    for j in 0..k {
        delta[j] = tr[bos(k) * side + j] + e[j];
    }
    for i in 1..n {
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for p in 0..k {
                let cand = delta[(i - 1) * k + p] + tr[p * side + j];
                if cand > best {
                    best = cand;
                    arg = p;
                }
            }
            delta[i * k + j] = best + e[i * k + j];
            back[i * k + j] = arg;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0usize;
    for j in 0..k {
        let cand = delta[(n - 1) * k + j] + tr[j * side + eos(k)];
        if cand > best {
            best = cand;
            last = j;
        }
    }
    let mut tags = vec![0usize; n];
    tags[n - 1] = last;
    for i in (1..n).rev() {
        tags[i - 1] = back[i * k + tags[i]];
    }
    // Re-sum the decoded path left to right so the reported score matches
    // score_sequence bit for bit.
    let score = score_f64(&e, &tr, n, k, &tags);
    Ok((tags, T::from_f64(score)))
}

/// Tag marginals and pairwise expectations needed for the NLL gradient.
/// Returns `(d logZ / d emissions, d logZ / d transition)` flattened.
fn partition_gradients(e: &[f64], tr: &[f64], n: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let side = k + 2;
    let alpha = forward_alphas(e, tr, n, k);
    let logz = {
        let finals: Vec<f64> = (0..k)
            .map(|j| alpha[(n - 1) * k + j] + tr[j * side + eos(k)])
            .collect();
        logsumexp(&finals)
    };

    // log-beta: suffix sums from each position/tag through EOS.
    let mut beta = vec![0.0f64; n * k];
    for j in 0..k {
        beta[(n - 1) * k + j] = tr[j * side + eos(k)];
    }
    let mut scratch = vec![0.0f64; k];
    for i in (0..n - 1).rev() {
        for j in 0..k {
            for (q, s) in scratch.iter_mut().enumerate() {
                *s = tr[j * side + q] + e[(i + 1) * k + q] + beta[(i + 1) * k + q];
            }
            beta[i * k + j] = logsumexp(&scratch);
        }
    }

    let mut de = vec![0.0f64; n * k];
    for i in 0..n {
        for j in 0..k {
            de[i * k + j] = (alpha[i * k + j] + beta[i * k + j] - logz).exp();
        }
    }

    let mut dtr = vec![0.0f64; side * side];
    for j in 0..k {
        dtr[bos(k) * side + j] = de[j]; // P(y_1 = j)
        dtr[j * side + eos(k)] = de[(n - 1) * k + j]; // P(y_n = j)
    }
    for i in 0..n - 1 {
        for a in 0..k {
            for b in 0..k {
                let lp = alpha[i * k + a]
                    + tr[a * side + b]
                    + e[(i + 1) * k + b]
                    + beta[(i + 1) * k + b]
                    - logz;
                dtr[a * side + b] += lp.exp();
            }
        }
    }
    (de, dtr)
}

struct NllBackward {
    gold: Vec<usize>,
}

impl<T: Real> BackwardRule<T> for NllBackward {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, out_grad: &[T]) -> Vec<Vec<T>> {
        let emissions = inputs[0];
        let transition = inputs[1];
        let (n, k) = (emissions.shape()[0], emissions.shape()[1]);
        let side = k + 2;
        let e = to_f64_vec(emissions.data());
        let tr = to_f64_vec(transition.data());
        let g = out_grad[0].as_f64();

        // d nll = expected counts - observed counts.
        let (mut de, mut dtr) = partition_gradients(&e, &tr, n, k);
        for (i, &tag) in self.gold.iter().enumerate() {
            de[i * k + tag] -= 1.0;
            if i > 0 {
                dtr[self.gold[i - 1] * side + tag] -= 1.0;
            }
        }
        dtr[bos(k) * side + self.gold[0]] -= 1.0;
        dtr[self.gold[n - 1] * side + eos(k)] -= 1.0;

        let de_t = de.into_iter().map(|v| T::from_f64(v * g)).collect();
        let dtr_t = dtr.into_iter().map(|v| T::from_f64(v * g)).collect();
        vec![de_t, dtr_t]
    }
}

/// Records the NLL of the gold sequence on the tape, differentiable with
/// respect to both emissions and transitions.
pub fn nll_on_tape<T: Real>(
    tape: &mut Tape<T>,
    emissions: ValueId,
    transition: ValueId,
    gold: &[usize],
) -> Result<ValueId> {
    let (n, k) = dims(tape.value(emissions), tape.value(transition))?;
    check_tags(gold, n, k)?;
    let loss = nll_loss(tape.value(emissions), gold, tape.value(transition))?;
    tape.custom(
        vec![emissions, transition],
        Tensor::scalar(loss),
        Box::new(NllBackward {
            gold: gold.to_vec(),
        }),
    )
}
