use rand::Rng;

use super::layer_norm::{normalize, normalize_backward};
use crate::linalg::{sigmoid, Mat};
use crate::optim::{Parameters, TensorRef};
use crate::{Error, Result};

/// Per-gate layer-norm gain and shift, laid out like the gate blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct GateNorm {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

/// LSTM cell with optional layer normalization of each gate
/// pre-activation.
///
/// Gate blocks in the `4H` pre-activation are ordered input, forget,
/// output, candidate. With normalization on, each block of
/// `W_in·x + W_rec·h + b` is normalized on its own, then scaled and
/// shifted.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_input: Mat,
    pub w_recurrent: Mat,
    pub bias: Vec<f64>,
    pub norm: Option<GateNorm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Forward intermediates of one step, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    // normalized pre-activation per gate block, when norm is on
    xhat: Vec<f64>,
    inv_std: [f64; 4],
    // activated gates [i | f | o | g]
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// A whole sequence run from the zero state.
#[derive(Clone, Debug, Default)]
pub struct SeqTrace {
    pub steps: Vec<StepCache>,
}

impl SeqTrace {
    pub fn last_hidden(&self) -> Option<&[f64]> {
        self.steps.last().map(|s| s.h.as_slice())
    }

    pub fn hidden(&self, t: usize) -> &[f64] {
        &self.steps[t].h
    }
}

impl LstmCell {
    pub fn zeros(input_dim: usize, hidden_dim: usize, layer_norm: bool) -> Self {
        let g = 4 * hidden_dim;
        LstmCell {
            input_dim,
            hidden_dim,
            w_input: Mat::zeros(g, input_dim),
            w_recurrent: Mat::zeros(g, hidden_dim),
            bias: vec![0.0; g],
            norm: layer_norm.then(|| GateNorm {
                gain: vec![0.0; g],
                shift: vec![0.0; g],
            }),
        }
    }

    /// Weights uniform in (−0.1, 0.1), zero biases except a forget-gate
    /// bias of 1, unit layer-norm gains. With normalization on the forget
    /// offset lives in the norm shift, since the mean subtraction would
    /// cancel a constant bias.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        layer_norm: bool,
        rng: &mut R,
    ) -> Self {
        let g = 4 * hidden_dim;
        let h = hidden_dim;
        let mut cell = LstmCell {
            input_dim,
            hidden_dim,
            w_input: Mat::uniform(g, input_dim, 0.1, rng),
            w_recurrent: Mat::uniform(g, hidden_dim, 0.1, rng),
            bias: vec![0.0; g],
            norm: None,
        };
        if layer_norm {
            let mut shift = vec![0.0; g];
            shift[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
            cell.norm = Some(GateNorm {
                gain: vec![1.0; g],
                shift,
            });
        } else {
            cell.bias[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        }
        cell
    }

    /// A zeroed gradient accumulator of the same shape.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim, self.norm.is_some())
    }

    pub fn step(&self, x: &[f64], state: &LstmState) -> Result<LstmState> {
        if x.len() != self.input_dim {
            return Err(Error::dim("LSTM input", self.input_dim, x.len()));
        }
        if state.h.len() != self.hidden_dim || state.c.len() != self.hidden_dim {
            return Err(Error::dim("LSTM state", self.hidden_dim, state.h.len()));
        }
        let cache = self.step_cached(x, &state.h, &state.c);
        Ok(LstmState {
            h: cache.h,
            c: cache.c,
        })
    }

    pub(crate) fn step_cached(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let hd = self.hidden_dim;
        let mut pre = self.bias.clone();
        self.w_input.matvec_acc(x, &mut pre);
        self.w_recurrent.matvec_acc(h_prev, &mut pre);

        let mut xhat = Vec::new();
        let mut inv_std = [0.0; 4];
        if let Some(norm) = &self.norm {
            xhat.reserve(4 * hd);
            for k in 0..4 {
                let block = &pre[k * hd..(k + 1) * hd];
                let (x_k, s) = normalize(block);
                inv_std[k] = s;
                xhat.extend_from_slice(&x_k);
            }
            for j in 0..4 * hd {
                pre[j] = norm.gain[j] * xhat[j] + norm.shift[j];
            }
        }

        let mut gates = pre;
        for (j, v) in gates.iter_mut().enumerate() {
            *v = if j < 3 * hd { sigmoid(*v) } else { v.tanh() };
        }
        let mut c = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, o, g) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
        StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            xhat,
            inv_std,
            gates,
            tanh_c,
            h,
            c,
        }
    }

    /// Backpropagates one step. Returns `(dx, dh_prev, dc_prev)` and adds
    /// parameter gradients into `grads`.
    pub(crate) fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCell,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden_dim;
        let gates = &cache.gates;
        let mut d_pre = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, o, g) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            let tc = cache.tanh_c[j];
            let d_o = dh[j] * tc;
            let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
            let d_i = dct * g;
            let d_f = dct * cache.c_prev[j];
            let d_g = dct * i;
            dc_prev[j] = dct * f;
            d_pre[j] = d_i * i * (1.0 - i);
            d_pre[hd + j] = d_f * f * (1.0 - f);
            d_pre[2 * hd + j] = d_o * o * (1.0 - o);
            d_pre[3 * hd + j] = d_g * (1.0 - g * g);
        }

        if let (Some(norm), Some(gnorm)) = (&self.norm, grads.norm.as_mut()) {
            let mut d_raw = vec![0.0; 4 * hd];
            for k in 0..4 {
                let r = k * hd..(k + 1) * hd;
                let mut d_xhat = vec![0.0; hd];
                for (t, j) in r.clone().enumerate() {
                    gnorm.gain[j] += d_pre[j] * cache.xhat[j];
                    gnorm.shift[j] += d_pre[j];
                    d_xhat[t] = d_pre[j] * norm.gain[j];
                }
                let d_block = normalize_backward(&d_xhat, &cache.xhat[r.clone()], cache.inv_std[k]);
                d_raw[r].copy_from_slice(&d_block);
            }
            d_pre = d_raw;
        }

        for (b, d) in grads.bias.iter_mut().zip(&d_pre) {
            *b += d;
        }
        grads.w_input.add_outer(1.0, &d_pre, &cache.x);
        grads.w_recurrent.add_outer(1.0, &d_pre, &cache.h_prev);
        let mut dx = vec![0.0; self.input_dim];
        self.w_input.matvec_t_acc(&d_pre, &mut dx);
        let mut dh_prev = vec![0.0; hd];
        self.w_recurrent.matvec_t_acc(&d_pre, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }

    /// Runs the cell over `inputs` from the zero state.
    pub fn run<V: AsRef<[f64]>>(&self, inputs: &[V]) -> Result<SeqTrace> {
        let mut h = vec![0.0; self.hidden_dim];
        let mut c = vec![0.0; self.hidden_dim];
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let x = x.as_ref();
            if x.len() != self.input_dim {
                return Err(Error::dim("LSTM input", self.input_dim, x.len()));
            }
            let cache = self.step_cached(x, &h, &c);
            h.clone_from(&cache.h);
            c.clone_from(&cache.c);
            steps.push(cache);
        }
        Ok(SeqTrace { steps })
    }

    /// Backpropagation through time. `d_hidden[t]` is the external gradient
    /// on the hidden output of step `t`. Returns input gradients per step.
    pub fn backward_seq(
        &self,
        trace: &SeqTrace,
        d_hidden: &[Vec<f64>],
        grads: &mut LstmCell,
    ) -> Vec<Vec<f64>> {
        debug_assert_eq!(trace.steps.len(), d_hidden.len());
        let hd = self.hidden_dim;
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dxs = vec![Vec::new(); trace.steps.len()];
        for t in (0..trace.steps.len()).rev() {
            let dh: Vec<f64> = d_hidden[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dx, dh_prev, dc_prev) = self.step_backward(&trace.steps[t], &dh, &dc_next, grads);
            dxs[t] = dx;
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        dxs
    }
}

impl Parameters for LstmCell {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let g = 4 * self.hidden_dim;
        let mut out = vec![
            TensorRef {
                name: "w_input".into(),
                shape: vec![g, self.input_dim],
                data: &self.w_input.data,
            },
            TensorRef {
                name: "w_recurrent".into(),
                shape: vec![g, self.hidden_dim],
                data: &self.w_recurrent.data,
            },
            TensorRef {
                name: "bias".into(),
                shape: vec![g],
                data: &self.bias,
            },
        ];
        if let Some(n) = &self.norm {
            out.push(TensorRef {
                name: "ln_gain".into(),
                shape: vec![g],
                data: &n.gain,
            });
            out.push(TensorRef {
                name: "ln_shift".into(),
                shape: vec![g],
                data: &n.shift,
            });
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.w_input.data,
            &mut self.w_recurrent.data,
            &mut self.bias,
        ];
        if let Some(n) = &mut self.norm {
            out.push(&mut n.gain);
            out.push(&mut n.shift);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_cell_gives_zero_output() {
        for ln in [false, true] {
            let cell = LstmCell::zeros(3, 4, ln);
            let s = cell.step(&[1.0, -2.0, 0.5], &LstmState::zeros(4)).unwrap();
            assert!(s.h.iter().all(|v| *v == 0.0));
            assert!(s.c.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn scalar_cell_hand_computation() {
        // 1-dim cell without normalization; gates i, f, o, g.
        let mut cell = LstmCell::zeros(1, 1, false);
        cell.w_input.data = vec![0.5, -0.3, 0.8, 1.2];
        cell.w_recurrent.data = vec![0.1, 0.2, -0.4, 0.3];
        cell.bias = vec![0.0, 1.0, 0.1, -0.2];
        let state = LstmState {
            h: vec![0.25],
            c: vec![-0.5],
        };
        let x = 2.0;
        let s = cell.step(&[x], &state).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * x + 0.1 * 0.25);
        let f = sig(-0.3 * x + 0.2 * 0.25 + 1.0);
        let o = sig(0.8 * x - 0.4 * 0.25 + 0.1);
        let g = (1.2 * x + 0.3 * 0.25 - 0.2).tanh();
        let c = f * -0.5 + i * g;
        let h = o * c.tanh();
        assert!((s.c[0] - c).abs() < 1e-15);
        assert!((s.h[0] - h).abs() < 1e-15);
    }

    #[test]
    fn constant_preactivation_normalizes_to_shift() {
        // Every gate block sees a constant pre-activation, so with gain 1
        // and shift 0 all normalized gates are 0: i=f=o=0.5, g=0.
        let mut cell = LstmCell::zeros(2, 3, true);
        let norm = cell.norm.as_mut().unwrap();
        norm.gain.iter_mut().for_each(|v| *v = 1.0);
        cell.w_input.fill(0.7);
        let s = cell.step_cached(&[1.0, 2.0], &[0.0; 3], &[0.4; 3]);
        assert!(s.xhat.iter().all(|v| *v == 0.0));
        assert!(s.gates[..9].iter().all(|v| (*v - 0.5).abs() < 1e-15));
        assert!(s.c.iter().all(|v| (*v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn dimension_errors() {
        let cell = LstmCell::zeros(2, 3, true);
        assert!(cell.step(&[1.0], &LstmState::zeros(3)).is_err());
        assert!(cell.step(&[1.0, 2.0], &LstmState::zeros(2)).is_err());
        assert!(cell.run(&[vec![1.0; 3]]).is_err());
    }

    #[test]
    fn init_sets_forget_offset() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let plain = LstmCell::new(2, 3, false, &mut rng);
        assert_eq!(plain.bias, vec![0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
        let ln = LstmCell::new(2, 3, true, &mut rng);
        let n = ln.norm.as_ref().unwrap();
        assert!(n.gain.iter().all(|g| *g == 1.0));
        assert_eq!(&n.shift[3..6], &[1.0, 1.0, 1.0]);
        assert!(ln.w_input.data.iter().all(|w| w.abs() < 0.1));
    }
}
