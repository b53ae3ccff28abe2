use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// A trainable matrix with its accumulated gradient. Biases are stored as `1 x n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl ParamTensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ParamTensor {
            value: Array2::zeros((rows, cols)),
            grad: Array2::zeros((rows, cols)),
        }
    }

    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let value = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound));
        ParamTensor {
            grad: Array2::zeros((rows, cols)),
            value,
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        let (r, c) = self.value.dim();
        [r, c]
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameter tensors in a fixed, named order.
pub trait Params {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, t| t.grad.fill(0.0));
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, t| out.extend(t.value.iter().copied()));
        out
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, t| out.extend(t.grad.iter().copied()));
        out
    }

    fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        self.visit_mut("", &mut |_, t| {
            for (v, src) in t.value.iter_mut().zip(&values[offset..]) {
                *v = *src;
            }
            offset += t.len();
        });
        Ok(())
    }

    fn shapes(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        self.visit("", &mut |_, t| out.push(t.shape()));
        out
    }

    fn named(&self, prefix: &str) -> Vec<(String, [usize; 2], Vec<f64>)> {
        let mut out = Vec::new();
        self.visit(prefix, &mut |name, t| {
            out.push((name, t.shape(), t.value.iter().copied().collect()))
        });
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `target <- (1 - tau) * target + tau * online`, tensor by tensor.
pub fn soft_update<P: Params>(target: &mut P, online: &P, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config(
            "tau",
            format!("must lie in [0, 1], got {tau}"),
        ));
    }
    if target.shapes() != online.shapes() {
        return Err(Error::Shape(
            "soft_update between differently shaped networks".into(),
        ));
    }
    let mut sources = Vec::new();
    online.visit("", &mut |_, t| sources.push(&t.value));
    let mut k = 0;
    target.visit_mut("", &mut |_, t| {
        let src = sources[k];
        k += 1;
        if tau == 1.0 {
            t.value.assign(src);
        } else if tau != 0.0 {
            t.value
                .zip_mut_with(src, |dst, &s| *dst = (1.0 - tau) * *dst + tau * s);
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Pair(ParamTensor, ParamTensor);

    impl Params for Pair {
        fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
            f(join(prefix, "a"), &self.0);
            f(join(prefix, "b"), &self.1);
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
            f(join(prefix, "a"), &mut self.0);
            f(join(prefix, "b"), &mut self.1);
        }
    }

    fn filled(v: f64) -> Pair {
        let mut p = Pair(ParamTensor::zeros(2, 2), ParamTensor::zeros(1, 3));
        p.0.value.fill(v);
        p.1.value.fill(v);
        p
    }

    #[test]
    fn soft_update_blends() {
        let online = filled(2.0);
        let mut t = filled(0.0);
        soft_update(&mut t, &online, 0.5).unwrap();
        assert!(t.flat_values().iter().all(|&v| v == 1.0));
        soft_update(&mut t, &online, 0.0).unwrap();
        assert!(t.flat_values().iter().all(|&v| v == 1.0));
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t.flat_values(), online.flat_values());
    }

    #[test]
    fn soft_update_rejects_shape_mismatch() {
        let online = filled(1.0);
        let mut other = Pair(ParamTensor::zeros(3, 2), ParamTensor::zeros(1, 3));
        assert!(soft_update(&mut other, &online, 0.1).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let mut p = filled(0.0);
        let vals: Vec<f64> = (0..7).map(f64::from).collect();
        p.set_flat_values(&vals).unwrap();
        assert_eq!(p.flat_values(), vals);
        assert_eq!(p.named("net")[1].0, "net.b");
        assert!(p.set_flat_values(&vals[..3]).is_err());
    }
}
