//! LSTM cell with backpropagation through time, and the windowed LSTM actor.

use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::mlp::{Activation, Mlp, MlpCache, MlpSpec};
use super::tensor::{join, ParamTensor, Params};
use crate::error::{Error, Result};

/// Gate blocks are laid out `[i | f | g | o]` along the column axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub wx: ParamTensor,
    pub wh: ParamTensor,
    pub b: ParamTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        LstmState {
            h: Array2::zeros((batch, hidden)),
            c: Array2::zeros((batch, hidden)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LstmStepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl LstmCell {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((input + hidden) as f64).sqrt();
        let mut cell = LstmCell {
            wx: ParamTensor::uniform(input, 4 * hidden, bound, rng),
            wh: ParamTensor::uniform(hidden, 4 * hidden, bound, rng),
            b: ParamTensor::uniform(1, 4 * hidden, bound, rng),
        };
        cell.b.value.slice_mut(s![.., hidden..2 * hidden]).fill(1.0);
        cell
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            wx: ParamTensor::zeros(input, 4 * hidden),
            wh: ParamTensor::zeros(hidden, 4 * hidden),
            b: ParamTensor::zeros(1, 4 * hidden),
        }
    }

    pub fn input_len(&self) -> usize {
        self.wx.value.nrows()
    }

    pub fn hidden_len(&self) -> usize {
        self.wh.value.nrows()
    }

    pub fn step(&self, x: &Array2<f64>, state: &LstmState) -> Result<(LstmState, LstmStepCache)> {
        let hdim = self.hidden_len();
        if x.ncols() != self.input_len()
            || state.h.ncols() != hdim
            || state.c.dim() != state.h.dim()
        {
            return Err(Error::Shape(format!(
                "lstm step: input {} (expects {}), state {:?}",
                x.ncols(),
                self.input_len(),
                state.h.dim()
            )));
        }
        if x.nrows() != state.h.nrows() {
            return Err(Error::Shape(
                "lstm step: batch size differs from state".into(),
            ));
        }
        let mut z = x.dot(&self.wx.value) + state.h.dot(&self.wh.value);
        z += &self.b.value.row(0);
        let block = |k: usize| z.slice(s![.., k * hdim..(k + 1) * hdim]).to_owned();
        let i = block(0).mapv(sigmoid);
        let f = block(1).mapv(sigmoid);
        let g = block(2).mapv(f64::tanh);
        let o = block(3).mapv(sigmoid);
        let c = &f * &state.c + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        let cache = LstmStepCache {
            x: x.clone(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    /// Given gradients w.r.t. the step's outputs `(h, c)`, accumulate parameter
    /// gradients and return `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &mut self,
        cache: &LstmStepCache,
        dh: &Array2<f64>,
        dc: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let hdim = self.hidden_len();
        let do_ = dh * &cache.tanh_c;
        let dc_total = dc + &(dh * &cache.o * &cache.tanh_c.mapv(|t| 1.0 - t * t));
        let di = &dc_total * &cache.g;
        let df = &dc_total * &cache.c_prev;
        let dg = &dc_total * &cache.i;
        let dc_prev = &dc_total * &cache.f;

        let mut dz = Array2::zeros((dh.nrows(), 4 * hdim));
        dz.slice_mut(s![.., 0..hdim])
            .assign(&(&di * &cache.i.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![.., hdim..2 * hdim])
            .assign(&(&df * &cache.f.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![.., 2 * hdim..3 * hdim])
            .assign(&(&dg * &cache.g.mapv(|v| 1.0 - v * v)));
        dz.slice_mut(s![.., 3 * hdim..])
            .assign(&(&do_ * &cache.o.mapv(|v| v * (1.0 - v))));

        self.wx.grad += &cache.x.t().dot(&dz);
        self.wh.grad += &cache.h_prev.t().dot(&dz);
        self.b
            .grad
            .row_mut(0)
            .scaled_add(1.0, &dz.sum_axis(Axis(0)));
        let dx = dz.dot(&self.wx.value.t());
        let dh_prev = dz.dot(&self.wh.value.t());
        (dx, dh_prev, dc_prev)
    }
}

impl Params for LstmCell {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        f(join(prefix, "wx"), &self.wx);
        f(join(prefix, "wh"), &self.wh);
        f(join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        f(join(prefix, "wx"), &mut self.wx);
        f(join(prefix, "wh"), &mut self.wh);
        f(join(prefix, "b"), &mut self.b);
    }
}

/// Policy over an observation window: zero initial state, unroll oldest to
/// newest, then a ReLU layer and a tanh action head on the final hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmActor {
    pub cell: LstmCell,
    pub head: Mlp,
}

#[derive(Clone, Debug)]
pub struct LstmActorCache {
    steps: Vec<LstmStepCache>,
    head: MlpCache,
}

impl LstmActor {
    pub fn new(
        obs_len: usize,
        hidden: usize,
        head_width: usize,
        act_len: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let cell = LstmCell::new(obs_len, hidden, rng);
        let spec = MlpSpec::new(vec![hidden, head_width, act_len], Activation::Tanh)
            .expect("positive widths");
        LstmActor {
            cell,
            head: Mlp::new(spec, rng),
        }
    }

    pub fn forward(&self, window: &[Array2<f64>]) -> Result<(Array2<f64>, LstmActorCache)> {
        let first = window
            .first()
            .ok_or_else(|| Error::Input("lstm actor needs a non-empty window".into()))?;
        let mut state = LstmState::zeros(first.nrows(), self.cell.hidden_len());
        let mut steps = Vec::with_capacity(window.len());
        for x in window {
            let (next, cache) = self.cell.step(x, &state)?;
            steps.push(cache);
            state = next;
        }
        let (y, head) = self.head.forward(&state.h)?;
        Ok((y, LstmActorCache { steps, head }))
    }

    /// Backpropagate through the head and every unrolled step. Returns the
    /// gradient w.r.t. each window element.
    pub fn backward(
        &mut self,
        cache: &LstmActorCache,
        dy: &Array2<f64>,
    ) -> Result<Vec<Array2<f64>>> {
        let mut dh = self.head.backward(&cache.head, dy)?;
        let mut dc = Array2::zeros(dh.dim());
        let mut dxs = Vec::with_capacity(cache.steps.len());
        for step in cache.steps.iter().rev() {
            let (dx, dh_prev, dc_prev) = self.cell.step_backward(step, &dh, &dc);
            dxs.push(dx);
            dh = dh_prev;
            dc = dc_prev;
        }
        dxs.reverse();
        Ok(dxs)
    }
}

impl Params for LstmActor {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        self.cell.visit(&join(prefix, "lstm"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        self.cell.visit_mut(&join(prefix, "lstm"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::gradcheck::grad_check;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_parameters_zero_state_is_fixed_point() {
        let cell = LstmCell::zeros(3, 4);
        let x = Array2::from_elem((2, 3), 0.7);
        let (next, cache) = cell.step(&x, &LstmState::zeros(2, 4)).unwrap();
        assert!(next.h.iter().all(|&v| v == 0.0));
        assert!(next.c.iter().all(|&v| v == 0.0));
        assert!(cache.i.iter().all(|&v| v == 0.5));
        assert!(cache.g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cell = LstmCell::new(3, 4, &mut rng);
        cell.b.value.slice_mut(s![.., 4..8]).fill(20.0);
        // keep the forget preactivation dominated by the bias
        cell.wx.value.slice_mut(s![.., 4..8]).fill(0.0);
        cell.wh.value.slice_mut(s![.., 4..8]).fill(0.0);
        let state = LstmState {
            h: random(&mut rng, 2, 4),
            c: random(&mut rng, 2, 4),
        };
        let x = random(&mut rng, 2, 3);
        let (next, cache) = cell.step(&x, &state).unwrap();
        let expected = &state.c + &(&cache.i * &cache.g);
        for (a, b) in next.c.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn bptt_five_steps_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut actor = LstmActor::new(5, 8, 8, 2, &mut rng);
        let window: Vec<_> = (0..5).map(|_| random(&mut rng, 3, 5)).collect();
        let weights = random(&mut rng, 3, 2);
        let loss = |a: &LstmActor| (&a.forward(&window).unwrap().0 * &weights).sum();
        actor.zero_grad();
        let (_, cache) = actor.forward(&window).unwrap();
        actor.backward(&cache, &weights).unwrap();
        let analytic = actor.flat_grads();
        let x0 = actor.flat_values();
        let mut probe = actor.clone();
        let r = grad_check(
            |p| {
                probe.set_flat_values(p).unwrap();
                loss(&probe)
            },
            &x0,
            &analytic,
            usize::MAX,
            1e-5,
            &mut rng,
        );
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn actions_stay_in_unit_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut actor = LstmActor::new(4, 8, 8, 2, &mut rng);
        actor.head.layers[1].w.value.mapv_inplace(|v| v * 100.0);
        let window: Vec<_> = (0..3).map(|_| random(&mut rng, 16, 4) * 10.0).collect();
        let (y, _) = actor.forward(&window).unwrap();
        assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_window_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let actor = LstmActor::new(4, 8, 8, 2, &mut rng);
        assert!(actor.forward(&[]).is_err());
    }

    #[test]
    fn memoryless_degenerate_parameters() {
        // no recurrence and a closed forget gate: every step computes the same h
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut actor = LstmActor::new(4, 6, 8, 2, &mut rng);
        actor.cell.wh.value.fill(0.0);
        actor.cell.wx.value.slice_mut(s![.., 6..12]).fill(0.0);
        actor.cell.b.value.slice_mut(s![.., 6..12]).fill(-50.0);
        let obs = random(&mut rng, 1, 4);
        let window = vec![obs.clone(); 4];
        let (y, _) = actor.forward(&window).unwrap();

        // feed-forward map computed directly
        let z = obs.dot(&actor.cell.wx.value) + &actor.cell.b.value.row(0);
        let gate = |k: usize| z.slice(s![.., k * 6..(k + 1) * 6]).to_owned();
        let i = gate(0).mapv(sigmoid);
        let g = gate(2).mapv(f64::tanh);
        let o = gate(3).mapv(sigmoid);
        let h = &o * &(&i * &g).mapv(f64::tanh);
        let expected = actor.head.predict(&h).unwrap();
        for (a, b) in y.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (single, _) = actor.forward(&window[..1]).unwrap();
        assert_eq!(single, expected);
    }
}
