use ndarray::Array2;

use super::tensor::Params;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn for_params(params: &impl Params) -> Self {
        let shapes = params.shapes();
        let zeros = || {
            shapes
                .iter()
                .map(|s| Array2::zeros((s[0], s[1])))
                .collect::<Vec<_>>()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Rescales the accumulated gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm before rescaling.
pub fn clip_grad_norm(params: &mut impl Params, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    params.visit("", &mut |_, t| sq += t.grad.iter().map(|g| g * g).sum::<f64>());
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        params.visit_mut("", &mut |_, t| t.grad.mapv_inplace(|g| g * scale));
    }
    norm
}

/// One bias-corrected Adam descent step using the gradients accumulated in
/// `params`. A non-finite gradient rejects the whole update and leaves the
/// parameters and moments untouched.
pub fn adam_step(params: &mut impl Params, state: &mut AdamState, lr: f64) -> Result<()> {
    let mut bad = None;
    let mut count = 0;
    params.visit("", &mut |name, t| {
        count += 1;
        if bad.is_none() && t.grad.iter().any(|g| !g.is_finite()) {
            bad = Some(name);
        }
    });
    if let Some(name) = bad {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    if count != state.m.len() {
        return Err(Error::Shape(
            "optimizer state does not match parameters".into(),
        ));
    }

    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let (ms, vs) = (&mut state.m, &mut state.v);
    let mut k = 0;
    let mut shape_err = false;
    params.visit_mut("", &mut |_, t| {
        let (m, v) = (&mut ms[k], &mut vs[k]);
        k += 1;
        if m.dim() != t.value.dim() {
            shape_err = true;
            return;
        }
        ndarray::Zip::from(&mut t.value)
            .and(&t.grad)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    });
    if shape_err {
        return Err(Error::Shape("optimizer moment shape mismatch".into()));
    }
    Ok(())
}
