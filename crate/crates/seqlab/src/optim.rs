//! Nadam parameter updates and the two-phase learning-rate schedule.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Real;

/// First/second moment buffers plus the step counter, aligned entry by
/// entry with a [`ParamStore`].
pub struct NadamState<T: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// Optional global-norm gradient clip; off by default.
    pub grad_clip: Option<f64>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> NadamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        Self::with_hyper(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(store: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let m = store.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
        let v = store.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            grad_clip: None,
            m,
            v,
        }
    }

    /// Moment buffers in store order, for checkpoint serialization.
    pub fn moments(&self) -> impl Iterator<Item = (&[T], &[T])> {
        self.m.iter().map(|m| m.as_slice()).zip(self.v.iter().map(|v| v.as_slice()))
    }

    /// Restores moment buffers saved by [`Self::moments`].
    pub fn restore_moments(&mut self, index: usize, m: Vec<T>, v: Vec<T>) -> Result<()> {
        if index >= self.m.len()
            || self.m[index].len() != m.len()
            || self.v[index].len() != v.len()
        {
            return Err(Error::Checkpoint(
                "optimizer state does not match the parameter store".into(),
            ));
        }
        self.m[index] = m;
        self.v[index] = v;
        Ok(())
    }
}

/// One Nadam update over every trainable parameter:
///
/// ```text
/// m <- b1 m + (1-b1) g               v <- b2 v + (1-b2) g^2
/// m^ = m / (1 - b1^(t+1))            v^ = v / (1 - b2^t)
/// theta -= lr (b1 m^ + (1-b1) g / (1 - b1^t)) / (sqrt(v^) + eps)
/// ```
///
/// with `t` the 1-based step count. A non-finite gradient aborts the step
/// before any state changes.
pub fn nadam_step<T: Real>(
    store: &mut ParamStore<T>,
    state: &mut NadamState<T>,
    lr: f64,
) -> Result<()> {
    if lr < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "learning rate {lr} must be non-negative"
        )));
    }
    let ids: Vec<_> = store.ids().collect();
    for &id in &ids {
        let t = store.get(id);
        if !t.requires_grad() {
            continue;
        }
        if let Some(g) = t.grad() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    op: "nadam_step gradient",
                });
            }
        }
    }

    // optional global-norm clipping, applied as a scale factor
    let mut scale = 1.0f64;
    if let Some(clip) = state.grad_clip {
        let mut sq = 0.0f64;
        for &id in &ids {
            let t = store.get(id);
            if !t.requires_grad() {
                continue;
            }
            if let Some(g) = t.grad() {
                for &x in g {
                    let x = x.as_f64();
                    sq += x * x;
                }
            }
        }
        let norm = sq.sqrt();
        if norm > clip {
            scale = clip / norm;
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let c_m = T::from_f64(1.0 / (1.0 - b1.powi(t + 1)));
    let c_v = T::from_f64(1.0 / (1.0 - b2.powi(t)));
    let c_g = T::from_f64(1.0 / (1.0 - b1.powi(t)));
    let beta1 = T::from_f64(b1);
    let beta2 = T::from_f64(b2);
    let one_m_b1 = T::from_f64(1.0 - b1);
    let one_m_b2 = T::from_f64(1.0 - b2);
    let eps = T::from_f64(state.eps);
    let lr_t = T::from_f64(lr);
    let scale_t = T::from_f64(scale);

    for (slot, id) in ids.into_iter().enumerate() {
        let tensor = store.get_mut(id);
        if !tensor.requires_grad() {
            continue;
        }
        let grads: Vec<T> = match tensor.grad() {
            Some(g) => g.iter().map(|&x| x * scale_t).collect(),
            None => vec![T::zero(); tensor.numel()],
        };
        let m = &mut state.m[slot];
        let v = &mut state.v[slot];
        let data = tensor.data_mut();
        for i in 0..data.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + one_m_b1 * g;
            v[i] = beta2 * v[i] + one_m_b2 * g * g;
            let m_hat = m[i] * c_m;
            let v_hat = v[i] * c_v;
            let update = (beta1 * m_hat + one_m_b1 * g * c_g) / (v_hat.sqrt() + eps);
            data[i] = data[i] - lr_t * update;
        }
    }
    Ok(())
}

/// Two-phase schedule: the first-phase rate for the opening epochs, the
/// second-phase rate afterwards. Epochs are 0-indexed.
pub fn lr_schedule(epoch: usize, phase1_epochs: usize, lr_phase1: f64, lr_phase2: f64) -> f64 {
    if epoch < phase1_epochs {
        lr_phase1
    } else {
        lr_phase2
    }
}
