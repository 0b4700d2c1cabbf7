//! One-layer LSTM attention decoder.
//!
//! Step `t`: `e_ti = vᵀ tanh(W s_{t-1} + V h_i + b)`, `α_t = softmax(e_t)`,
//! `c_t = Σ α_ti h_i`, `s_t = LSTM([c_t; onehot(y_{t-1})], s_{t-1})`,
//! `y_t = softmax(W_o s_t + b_o)`. The first step receives an all-zero
//! previous-label vector.

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::seqmodel::Lstm;
use crate::tensor::{Init, ParamId, ParamStore, Real, Session, Tensor, Var};

use super::codec::{NUM_CLASSES, SPECIAL};

#[derive(Clone, Debug)]
pub struct AttnDecoder {
    /// `V`, `[D, H]`, no bias.
    pub i2h: ParamId,
    /// `W` and `b`.
    pub h2h: Linear,
    /// `v`, `[H, 1]`.
    pub score: ParamId,
    pub cell: Lstm,
    /// `W_o`, `b_o`.
    pub generator: Linear,
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

/// Encoder states with their step-independent projection `V h_i`.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub h: Var,
    pub vh: Var,
    pub n: usize,
    pub steps: usize,
}

/// Output of one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct AttnStep {
    /// Unnormalized class scores `[N, K]`.
    pub logits: Var,
    pub s: Var,
    pub cell: Var,
    /// Attention weights `[N, I]`.
    pub alpha: Var,
}

impl AttnDecoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let classes = NUM_CLASSES;
        Ok(AttnDecoder {
            i2h: store.add(&format!("{name}.i2h"), &[input, hidden], Init::He { fan_in: input })?,
            h2h: Linear::new(store, &format!("{name}.h2h"), hidden, hidden, true)?,
            score: store.add(&format!("{name}.score"), &[hidden, 1], Init::He { fan_in: hidden })?,
            cell: Lstm::new(store, &format!("{name}.cell"), input + classes, hidden)?,
            generator: Linear::new(store, &format!("{name}.generator"), hidden, classes, true)?,
            input,
            hidden,
            classes,
        })
    }

    pub fn encode<T: Real>(&self, s: &mut Session<T>, h: Var) -> Result<Encoded> {
        let shape = s.g.shape(h).to_vec();
        let [n, steps, d] = <[usize; 3]>::try_from(shape.as_slice())
            .map_err(|_| Error::shape("attention", format!("expected [N,I,D], got {shape:?}")))?;
        if steps == 0 {
            return Err(Error::Length("attention over an empty sequence".into()));
        }
        if d != self.input {
            return Err(Error::Dimension {
                op: "attention",
                lhs: shape,
                rhs: vec![self.input, self.hidden],
            });
        }
        let flat = s.g.reshape(h, vec![n * steps, d])?;
        let v = s.param(self.i2h);
        let vh = s.g.matmul(flat, v)?;
        let vh = s.g.reshape(vh, vec![n, steps, self.hidden])?;
        Ok(Encoded { h, vh, n, steps })
    }

    /// Zero decoder state `(s_0, cell_0)`.
    pub fn initial_state<T: Real>(&self, s: &mut Session<T>, n: usize) -> (Var, Var) {
        (self.cell.zero_state(s, n), self.cell.zero_state(s, n))
    }

    /// `[N, K]` one-hot rows; `None` entries give all-zero rows.
    pub fn one_hot<T: Real>(&self, s: &mut Session<T>, labels: &[Option<usize>]) -> Var {
        let k = self.classes;
        let mut t = Tensor::zeros(vec![labels.len(), k]);
        for (i, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                t.data_mut()[i * k + l] = T::one();
            }
        }
        s.g.constant(t)
    }

    pub fn step<T: Real>(&self, s: &mut Session<T>, enc: &Encoded, y_prev: Var, state: (Var, Var)) -> Result<AttnStep> {
        let (n, steps, hd) = (enc.n, enc.steps, self.hidden);
        let ws = self.h2h.forward(s, state.0)?;
        let ws = s.g.reshape(ws, vec![n, 1, hd])?;
        let pre = s.g.add(enc.vh, ws)?;
        let act = s.g.tanh(pre);
        let act = s.g.reshape(act, vec![n * steps, hd])?;
        let v = s.param(self.score);
        let e = s.g.matmul(act, v)?;
        let e = s.g.reshape(e, vec![n, steps])?;
        let alpha = s.g.softmax(e, 1)?;
        let a3 = s.g.reshape(alpha, vec![n, 1, steps])?;
        let ctx = s.g.bmm(a3, enc.h)?;
        let ctx = s.g.reshape(ctx, vec![n, self.input])?;
        let x = s.g.concat(&[ctx, y_prev], 1)?;
        let (s_new, c_new) = crate::seqmodel::lstm_cell(s, &self.cell, x, state.0, state.1)?;
        let logits = self.generator.forward(s, s_new)?;
        Ok(AttnStep {
            logits,
            s: s_new,
            cell: c_new,
            alpha,
        })
    }

    /// Teacher-forced loss: per sample, the summed cross-entropy over the
    /// label followed by end-of-sequence; averaged over the batch.
    pub fn loss<T: Real>(&self, s: &mut Session<T>, h: Var, targets: &[Vec<usize>]) -> Result<Var> {
        let enc = self.encode(s, h)?;
        if targets.len() != enc.n {
            return Err(Error::shape("attn_loss", format!("{} targets for batch of {}", targets.len(), enc.n)));
        }
        if let Some(bad) = targets.iter().flatten().find(|&&l| l >= SPECIAL) {
            return Err(Error::Codec(format!("label index {bad} is not a character class")));
        }
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0) + 1;
        let label_at = |y: &Vec<usize>, t: usize| y.get(t).copied().unwrap_or(SPECIAL);
        let mut state = self.initial_state(s, enc.n);
        let mut prev: Vec<Option<usize>> = vec![None; enc.n];
        let mut logits = Vec::with_capacity(steps);
        for t in 0..steps {
            let y_prev = self.one_hot(s, &prev);
            let out = self.step(s, &enc, y_prev, state)?;
            state = (out.s, out.cell);
            logits.push(s.g.reshape(out.logits, vec![enc.n, 1, self.classes])?);
            prev = targets.iter().map(|y| Some(label_at(y, t))).collect();
        }
        let all = s.g.concat(&logits, 1)?;
        let logp = s.g.log_softmax(all, 2)?;
        let w = T::one() / T::from_usize(enc.n).unwrap();
        let mut picks = Vec::new();
        for (i, y) in targets.iter().enumerate() {
            for t in 0..=y.len() {
                picks.push(((i * steps + t) * self.classes + label_at(y, t), w));
            }
        }
        s.g.nll_gather(logp, picks)
    }

    /// Greedy decoding: argmax per step (first index on ties), stopping at
    /// end-of-sequence or after `max_len` steps.
    pub fn decode<T: Real>(&self, s: &mut Session<T>, h: Var, max_len: usize) -> Result<Vec<Vec<usize>>> {
        let enc = self.encode(s, h)?;
        let mut out = vec![Vec::new(); enc.n];
        let mut done = vec![false; enc.n];
        let mut state = self.initial_state(s, enc.n);
        let mut prev: Vec<Option<usize>> = vec![None; enc.n];
        for _ in 0..max_len {
            let y_prev = self.one_hot(s, &prev);
            let step = self.step(s, &enc, y_prev, state)?;
            state = (step.s, step.cell);
            let scores = s.g.value(step.logits).data();
            for i in 0..enc.n {
                let row = &scores[i * self.classes..(i + 1) * self.classes];
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
                    .0;
                if !done[i] {
                    if best == SPECIAL {
                        done[i] = true;
                    } else {
                        out[i].push(best);
                    }
                }
                prev[i] = Some(best);
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }
}
