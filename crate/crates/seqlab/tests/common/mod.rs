//! Shared oracles for the integration suites: central finite differences,
//! exhaustive CRF enumeration, and random instance generators. Everything
//! here is independent of the implementation paths it checks.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use seqlab::tensor::{Tape, Tensor, ValueId};

/// Scale-guarded relative error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Checks tape gradients of `f`'s scalar output against central finite
/// differences for every component of every parameter.
///
/// `f` must be a pure function of the parameter values: any randomness has
/// to be seeded inside it so repeated calls see identical draws.
pub fn gradcheck<F>(params: &[(Vec<usize>, Vec<f64>)], f: F, context: &str)
where
    F: Fn(&mut Tape<f64>, &[ValueId]) -> ValueId,
{
    let build = |values: &[Vec<f64>]| -> (Tape<f64>, Vec<ValueId>, ValueId) {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = params
            .iter()
            .zip(values)
            .map(|((shape, _), data)| {
                tape.leaf(
                    Tensor::new(shape.clone(), data.clone())
                        .unwrap()
                        .with_requires_grad(true),
                )
            })
            .collect();
        let loss = f(&mut tape, &ids);
        (tape, ids, loss)
    };

    let base: Vec<Vec<f64>> = params.iter().map(|(_, d)| d.clone()).collect();
    let (mut tape, ids, loss) = build(&base);
    assert_eq!(tape.value(loss).numel(), 1, "{context}: loss must be scalar");
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            tape.grad(id)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; tape.value(id).numel()])
        })
        .collect();

    for (pi, values) in base.iter().enumerate() {
        for ci in 0..values.len() {
            if !values[ci].is_finite() {
                // structurally unused entries (e.g. -inf transitions)
                assert_eq!(analytic[pi][ci], 0.0, "{context}: param {pi}[{ci}]");
                continue;
            }
            let mut plus = base.clone();
            plus[pi][ci] += FD_STEP;
            let mut minus = base.clone();
            minus[pi][ci] -= FD_STEP;
            let (tp, _, lp) = build(&plus);
            let (tm, _, lm) = build(&minus);
            let fd = (tp.value(lp).data()[0] - tm.value(lm).data()[0]) / (2.0 * FD_STEP);
            let g = analytic[pi][ci];
            assert!(
                rel_err(fd, g) <= GRAD_TOL,
                "{context}: param {pi}[{ci}]: finite difference {fd} vs tape {g}"
            );
        }
    }
}

/// Store-level variant of [`gradcheck`]: the forward pass binds a
/// [`ParamStore`] onto the tape, and finite differences perturb the store
/// entries directly. Only trainable entries are checked.
pub fn gradcheck_store<F>(store: &mut seqlab::params::ParamStore<f64>, forward: F, context: &str)
where
    F: Fn(&seqlab::params::ParamStore<f64>, &mut Tape<f64>, &seqlab::params::ParamBinding) -> ValueId,
{
    let run = |store: &seqlab::params::ParamStore<f64>| -> f64 {
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape);
        let loss = forward(store, &mut tape, &binding);
        tape.value(loss).data()[0]
    };

    store.zero_grad();
    {
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape);
        let loss = forward(store, &mut tape, &binding);
        tape.backward(loss).unwrap();
        store.harvest(&tape, &binding);
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).requires_grad() {
            continue;
        }
        let analytic: Vec<f64> = store
            .get(id)
            .grad()
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; store.get(id).numel()]);
        for (ci, &g) in analytic.iter().enumerate() {
            let orig = store.get(id).data()[ci];
            if !orig.is_finite() {
                assert_eq!(g, 0.0, "{context}: {}[{ci}]", store.name(id));
                continue;
            }
            store.get_mut(id).data_mut()[ci] = orig + FD_STEP;
            let fp = run(store);
            store.get_mut(id).data_mut()[ci] = orig - FD_STEP;
            let fm = run(store);
            store.get_mut(id).data_mut()[ci] = orig;
            let fd = (fp - fm) / (2.0 * FD_STEP);
            assert!(
                rel_err(fd, g) <= GRAD_TOL,
                "{context}: {}[{ci}]: finite difference {fd} vs tape {g}",
                store.name(id)
            );
        }
    }
}

/// Model-level variant: checks every trainable parameter of a full tagger
/// against finite differences of the forward closure.
pub fn gradcheck_model<F>(model: &mut seqlab::model::NerModel<f64>, forward: F, context: &str)
where
    F: Fn(&seqlab::model::NerModel<f64>, &mut Tape<f64>, &seqlab::params::ParamBinding) -> ValueId,
{
    let run = |model: &seqlab::model::NerModel<f64>| -> f64 {
        let mut tape = Tape::new();
        let binding = model.store.bind(&mut tape);
        let loss = forward(model, &mut tape, &binding);
        tape.value(loss).data()[0]
    };

    model.store.zero_grad();
    {
        let mut tape = Tape::new();
        let binding = model.store.bind(&mut tape);
        let loss = forward(model, &mut tape, &binding);
        tape.backward(loss).unwrap();
        model.store.harvest(&tape, &binding);
    }
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        if !model.store.get(id).requires_grad() {
            continue;
        }
        let analytic: Vec<f64> = model
            .store
            .get(id)
            .grad()
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; model.store.get(id).numel()]);
        for (ci, &g) in analytic.iter().enumerate() {
            let orig = model.store.get(id).data()[ci];
            if !orig.is_finite() {
                assert_eq!(g, 0.0, "{context}: {}[{ci}]", model.store.name(id));
                continue;
            }
            model.store.get_mut(id).data_mut()[ci] = orig + FD_STEP;
            let fp = run(model);
            model.store.get_mut(id).data_mut()[ci] = orig - FD_STEP;
            let fm = run(model);
            model.store.get_mut(id).data_mut()[ci] = orig;
            let fd = (fp - fm) / (2.0 * FD_STEP);
            assert!(
                rel_err(fd, g) <= GRAD_TOL,
                "{context}: {}[{ci}]: finite difference {fd} vs tape {g}",
                model.store.name(id)
            );
        }
    }
}

/// All `k^n` tag sequences of length `n`.
pub fn enumerate_sequences(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = k.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut tags = vec![0usize; n];
        let mut rem = code;
        for t in tags.iter_mut() {
            *t = rem % k;
            rem /= k;
        }
        out.push(tags);
    }
    out
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Random emissions `[n, k]` plus a transition table with finite scores on
/// every entry the scorer may read.
pub fn random_crf_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    k: usize,
) -> (Tensor<f64>, Tensor<f64>) {
    let emissions = Tensor::uniform(vec![n, k], -2.0, 2.0, rng);
    let mut transition = seqlab::crf::transition_matrix::<f64>(k);
    let side = k + 2;
    for from in 0..side {
        for to in 0..side {
            if to != seqlab::crf::bos(k) && from != seqlab::crf::eos(k) {
                transition.data_mut()[from * side + to] = -1.0 + rng.gen::<f64>() * 2.0;
            }
        }
    }
    (emissions, transition)
}
