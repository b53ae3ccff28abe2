use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{join, ParamTensor, Params};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

/// Affine layer over row-major batches: `y = x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: ParamTensor,
    pub b: ParamTensor,
}

impl Linear {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Linear {
            w: ParamTensor::uniform(fan_in, fan_out, bound, rng),
            b: ParamTensor::uniform(1, fan_out, bound, rng),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            w: ParamTensor::zeros(fan_in, fan_out),
            b: ParamTensor::zeros(1, fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.fan_in() {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.fan_in(),
                x.ncols()
            )));
        }
        let mut y = x.dot(&self.w.value);
        y += &self.b.value.row(0);
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.w.grad += &x.t().dot(dy);
        self.b
            .grad
            .row_mut(0)
            .scaled_add(1.0, &dy.sum_axis(Axis(0)));
        dy.dot(&self.w.value.t())
    }
}

impl Params for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        f(join(prefix, "w"), &self.w);
        f(join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        f(join(prefix, "w"), &mut self.w);
        f(join(prefix, "b"), &mut self.b);
    }
}

/// Layer widths including input and output; hidden layers use ReLU.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub output: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, output: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("widths", "an MLP needs at least one layer"));
        }
        if widths.contains(&0) {
            return Err(Error::config("widths", "layer widths must be positive"));
        }
        Ok(MlpSpec { widths, output })
    }

    pub fn input_len(&self) -> usize {
        self.widths[0]
    }

    pub fn output_len(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Linear>,
}

/// Layer inputs plus the final (post-activation) output.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut impl Rng) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], rng))
            .collect();
        Mlp { spec, layers }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Linear::zeros(w[0], w[1]))
            .collect();
        Mlp { spec, layers }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(&h)?;
            let act = if i == last {
                self.spec.output
            } else {
                Activation::Relu
            };
            apply(act, &mut z);
            inputs.push(h);
            h = z;
        }
        Ok((h.clone(), MlpCache { inputs, output: h }))
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &Array2<f64>) -> Result<Array2<f64>> {
        if cache.inputs.len() != self.layers.len() || dy.dim() != cache.output.dim() {
            return Err(Error::Shape("stale MLP cache".into()));
        }
        let mut grad = dy.clone();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            if i == last {
                derive(self.spec.output, &cache.output, &mut grad);
            } else {
                // ReLU: the next layer's input is this layer's output
                derive(Activation::Relu, &cache.inputs[i + 1], &mut grad);
            }
            grad = self.layers[i].backward(&cache.inputs[i], &grad);
        }
        Ok(grad)
    }
}

fn apply(act: Activation, z: &mut Array2<f64>) {
    match act {
        Activation::Identity => {}
        Activation::Tanh => z.mapv_inplace(f64::tanh),
        Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
    }
}

/// Multiply `grad` in place by the activation derivative, given its output `y`.
fn derive(act: Activation, y: &Array2<f64>, grad: &mut Array2<f64>) {
    match act {
        Activation::Identity => {}
        Activation::Tanh => grad.zip_mut_with(y, |g, &t| *g *= 1.0 - t * t),
        Activation::Relu => grad.zip_mut_with(y, |g, &h| {
            if h <= 0.0 {
                *g = 0.0
            }
        }),
    }
}

impl Params for Mlp {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("l{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("l{i}")), f);
        }
    }
}
