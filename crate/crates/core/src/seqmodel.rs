//! Sequence modeling: LSTM cells and stacked bidirectional layers.
//!
//! Gate order inside the packed `4H` dimension is input, forget, cell, output.

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::tensor::{Init, ParamId, ParamStore, Real, Session, Tensor, Var};

/// Weights of one LSTM: `w_ih` is `[D, 4H]`, `w_hh` is `[H, 4H]`, one bias
/// `[4H]` (forget slice initialized to 1).
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let w_ih = store.add(&format!("{name}.w_ih"), &[input, 4 * hidden], Init::He { fan_in: input })?;
        let w_hh = store.add(&format!("{name}.w_hh"), &[hidden, 4 * hidden], Init::He { fan_in: hidden })?;
        let bias = Tensor::from_fn(vec![4 * hidden], |i| {
            if (hidden..2 * hidden).contains(&i) {
                T::one()
            } else {
                T::zero()
            }
        });
        let b = store.add_fixed(&format!("{name}.bias"), bias)?;
        Ok(Lstm {
            w_ih,
            w_hh,
            b,
            input,
            hidden,
        })
    }

    /// `x W_ih + b` for every row of `[rows, D]` at once.
    pub fn input_projection<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let w = s.param(self.w_ih);
        let b = s.param(self.b);
        let y = s.g.matmul(x, w)?;
        s.g.add(y, b)
    }

    /// One recurrence step from a precomputed input projection `[N, 4H]`.
    pub fn step<T: Real>(&self, s: &mut Session<T>, x_proj: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let w_hh = s.param(self.w_hh);
        let rec = s.g.matmul(h, w_hh)?;
        let gates = s.g.add(x_proj, rec)?;
        let hd = self.hidden;
        let i = s.g.narrow(gates, 1, 0, hd)?;
        let f = s.g.narrow(gates, 1, hd, hd)?;
        let gg = s.g.narrow(gates, 1, 2 * hd, hd)?;
        let o = s.g.narrow(gates, 1, 3 * hd, hd)?;
        let (i, f, gg, o) = (s.g.sigmoid(i), s.g.sigmoid(f), s.g.tanh(gg), s.g.sigmoid(o));
        let keep = s.g.mul(f, c)?;
        let write = s.g.mul(i, gg)?;
        let c_new = s.g.add(keep, write)?;
        let tc = s.g.tanh(c_new);
        let h_new = s.g.mul(o, tc)?;
        Ok((h_new, c_new))
    }

    /// Zero `[N, H]` state.
    pub fn zero_state<T: Real>(&self, s: &mut Session<T>, n: usize) -> Var {
        s.g.constant(Tensor::zeros(vec![n, self.hidden]))
    }

    /// Runs over `[N, T, D]`, returning `[N, T, H]`. With `reverse` the
    /// sequence is consumed right to left and outputs stay aligned with
    /// their input positions.
    pub fn sequence<T: Real>(&self, s: &mut Session<T>, x: Var, reverse: bool) -> Result<Var> {
        let shape = s.g.shape(x).to_vec();
        let [n, t, d] = <[usize; 3]>::try_from(shape.as_slice())
            .map_err(|_| Error::shape("lstm", format!("expected [N,T,D], got {shape:?}")))?;
        if t == 0 {
            return Err(Error::Length("LSTM input sequence is empty".into()));
        }
        if d != self.input {
            return Err(Error::Dimension {
                op: "lstm",
                lhs: shape,
                rhs: vec![self.input, 4 * self.hidden],
            });
        }
        let flat = s.g.reshape(x, vec![n * t, d])?;
        let proj = self.input_projection(s, flat)?;
        let proj = s.g.reshape(proj, vec![n, t, 4 * self.hidden])?;
        let (mut h, mut c) = (self.zero_state(s, n), self.zero_state(s, n));
        let mut outs = vec![h; t];
        let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
        for step in order {
            let xp = s.g.narrow(proj, 1, step, 1)?;
            let xp = s.g.reshape(xp, vec![n, 4 * self.hidden])?;
            (h, c) = self.step(s, xp, h, c)?;
            outs[step] = s.g.reshape(h, vec![n, 1, self.hidden])?;
        }
        s.g.concat(&outs, 1)
    }
}

/// Single LSTM cell application on unprojected input `[N, D]`.
pub fn lstm_cell<T: Real>(s: &mut Session<T>, lstm: &Lstm, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let xp = lstm.input_projection(s, x)?;
    lstm.step(s, xp, h, c)
}

/// Forward and backward LSTMs whose concatenated states pass through an
/// optional projection.
#[derive(Clone, Debug)]
pub struct BiLstmLayer {
    pub fwd: Lstm,
    pub bwd: Lstm,
    pub proj: Option<Linear>,
}

impl BiLstmLayer {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize, proj: Option<usize>) -> Result<Self> {
        let fwd = Lstm::new(store, &format!("{name}.fwd"), input, hidden)?;
        let bwd = Lstm::new(store, &format!("{name}.bwd"), input, hidden)?;
        let proj = proj
            .map(|o| Linear::new(store, &format!("{name}.proj"), 2 * hidden, o, true))
            .transpose()?;
        Ok(BiLstmLayer { fwd, bwd, proj })
    }

    /// Concatenated `[N, T, 2H]` states before projection.
    pub fn states<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let f = self.fwd.sequence(s, x, false)?;
        let b = self.bwd.sequence(s, x, true)?;
        s.g.concat(&[f, b], 2)
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let states = self.states(s, x)?;
        match &self.proj {
            Some(p) => p.forward(s, states),
            None => Ok(states),
        }
    }
}

/// Sequence stage: stacked BiLSTM layers or the identity.
#[derive(Clone, Debug)]
pub enum SeqStage {
    Identity,
    BiLstm(crate::nn::Network),
}

impl SeqStage {
    pub fn forward<T: Real>(&self, s: &mut Session<T>, v: Var) -> Result<Var> {
        match self {
            SeqStage::Identity => identity_seq(s, v),
            SeqStage::BiLstm(net) => {
                if s.g.shape(v).get(1) == Some(&0) {
                    return Err(Error::Length("sequence model input is empty".into()));
                }
                net.forward(s, v)
            }
        }
    }
}

/// `H = V`.
pub fn identity_seq<T: Real>(_s: &mut Session<T>, v: Var) -> Result<Var> {
    Ok(v)
}
