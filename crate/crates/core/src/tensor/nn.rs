//! Layers built from tape ops. Each layer owns only parameter ids; values
//! live in the [`ParameterSet`] the tape reads from.

use super::{Axis, ParamId, ParameterSet, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Affine map `x W + b` applied row-wise.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Real>(params: &mut ParameterSet<T>, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = params.add_weight(format!("{name}.weight"), fan_in, fan_out);
        let bias = params.add_bias(format!("{name}.bias"), fan_out);
        Self { weight, bias, fan_in, fan_out }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_bias(xw, b)
    }
}

/// Two-layer perceptron with a tanh hidden activation and linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new<T: Real>(params: &mut ParameterSet<T>, name: &str, fan_in: usize, hidden: usize, fan_out: usize) -> Self {
        Self {
            hidden: Linear::new(params, &format!("{name}.0"), fan_in, hidden),
            output: Linear::new(params, &format!("{name}.1"), hidden, fan_out),
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, x)?;
        let h = tape.tanh(h)?;
        self.output.forward(tape, h)
    }

    pub fn fan_in(&self) -> usize {
        self.hidden.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.output.fan_out
    }
}

/// Gated recurrent unit operating on a batch of rows.
///
/// `r = sigmoid([x|h] W_r + b_r)`, `z = sigmoid([x|h] W_z + b_z)`,
/// `n = tanh([x|r*h] W_n + b_n)`, `h' = (1 - z) * n + z * h`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub reset: Linear,
    pub update: Linear,
    pub candidate: Linear,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<T: Real>(params: &mut ParameterSet<T>, name: &str, input_dim: usize, hidden_dim: usize) -> Self {
        let width = input_dim + hidden_dim;
        Self {
            reset: Linear::new(params, &format!("{name}.reset"), width, hidden_dim),
            update: Linear::new(params, &format!("{name}.update"), width, hidden_dim),
            candidate: Linear::new(params, &format!("{name}.candidate"), width, hidden_dim),
            input_dim,
            hidden_dim,
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, h: Var) -> Result<Var> {
        let [xr, xc] = tape.shape(x);
        let [hr, hc] = tape.shape(h);
        if xc != self.input_dim || hc != self.hidden_dim || xr != hr {
            return Err(Error::Shape {
                op: "gru_cell",
                detail: format!("x {xr}x{xc}, h {hr}x{hc}, cell expects {}+{}", self.input_dim, self.hidden_dim),
            });
        }
        let xh = tape.concat(&[x, h], Axis::Cols)?;
        let r = self.reset.forward(tape, xh)?;
        let r = tape.sigmoid(r)?;
        let z = self.update.forward(tape, xh)?;
        let z = tape.sigmoid(z)?;
        let rh = tape.mul(r, h)?;
        let xrh = tape.concat(&[x, rh], Axis::Cols)?;
        let n = self.candidate.forward(tape, xrh)?;
        let n = tape.tanh(n)?;
        let keep = tape.one_minus(z)?;
        let a = tape.mul(keep, n)?;
        let b = tape.mul(z, h)?;
        tape.add(a, b)
    }
}

/// Scaled dot-product attention with `heads` parallel heads and concatenated
/// head outputs (no output projection).
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub heads: usize,
    pub model_dim: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Real>(
        params: &mut ParameterSet<T>,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        model_dim: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || !model_dim.is_multiple_of(heads) {
            return Err(Error::InvalidArgument(format!("{heads} heads do not divide attention dim {model_dim}")));
        }
        Ok(Self {
            query: params.add_weight(format!("{name}.w_q"), query_dim, model_dim),
            key: params.add_weight(format!("{name}.w_k"), key_dim, model_dim),
            value: params.add_weight(format!("{name}.w_v"), key_dim, model_dim),
            heads,
            model_dim,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    /// `q` is `m x query_dim`, `kv` is `n x key_dim` with `n >= 1`; returns `m x model_dim`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, q: Var, kv: Var) -> Result<Var> {
        if tape.shape(kv)[0] == 0 {
            return Err(Error::InvalidArgument("attention over an empty key set".into()));
        }
        let wq = tape.param(self.query);
        let wk = tape.param(self.key);
        let wv = tape.param(self.value);
        let qp = tape.matmul(q, wq)?;
        let kp = tape.matmul(kv, wk)?;
        let vp = tape.matmul(kv, wv)?;
        let dk = self.head_dim();
        let inv_sqrt = T::one() / T::lit(dk as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for a in 0..self.heads {
            let qa = tape.slice_cols(qp, a * dk, dk)?;
            let ka = tape.slice_cols(kp, a * dk, dk)?;
            let va = tape.slice_cols(vp, a * dk, dk)?;
            let kt = tape.transpose(ka)?;
            let logits = tape.matmul(qa, kt)?;
            let logits = tape.scale(logits, inv_sqrt)?;
            let weights = tape.softmax(logits, Axis::Cols)?;
            outs.push(tape.matmul(weights, va)?);
        }
        tape.concat(&outs, Axis::Cols)
    }
}
