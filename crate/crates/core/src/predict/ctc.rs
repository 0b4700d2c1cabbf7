//! Connectionist temporal classification.
//!
//! Frame posteriors are row-major `[T, C]` log-probabilities. The forward
//! and backward recursions run over the blank-interleaved label in log
//! space with pairwise log-sum-exp.

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::tensor::{Graph, ParamStore, Real, Session, Var};

use super::codec::{NUM_CLASSES, SPECIAL};

/// Merges adjacent repeats, then drops blanks.
pub fn collapse(pi: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in pi {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// [`collapse`] over characters, with `blank` as the blank symbol.
pub fn collapse_chars(pi: &str, blank: char) -> String {
    let mut out = String::new();
    let mut prev = None;
    for ch in pi.chars() {
        if Some(ch) != prev && ch != blank {
            out.push(ch);
        }
        prev = Some(ch);
    }
    out
}

fn lse(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn validate(len: usize, t: usize, c: usize, labels: &[usize], blank: usize) -> Result<()> {
    if len != t * c {
        return Err(Error::shape("ctc", format!("posterior has {len} values, expected {t}x{c}")));
    }
    if blank >= c {
        return Err(Error::Codec(format!("blank index {blank} outside {c} classes")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c || l == blank) {
        return Err(Error::Codec(format!("label index {bad} is not a character class")));
    }
    Ok(())
}

/// Log-probability and, optionally, the gradient of `-log p(Y|H)` with
/// respect to every log-posterior entry. Infeasible labels give `-inf`
/// and a zero gradient.
fn forward_backward(logp: &[f64], t: usize, c: usize, labels: &[usize], blank: usize, grad: bool) -> (f64, Option<Vec<f64>>) {
    let s_len = 2 * labels.len() + 1;
    let sym = |s: usize| if s.is_multiple_of(2) { blank } else { labels[s / 2] };
    let ninf = f64::NEG_INFINITY;
    if t == 0 {
        let lp = if labels.is_empty() { 0.0 } else { ninf };
        return (lp, grad.then(Vec::new));
    }
    // Skipping from s-2 is allowed onto a non-blank that differs from it.
    let can_skip = |s: usize| s >= 2 && s % 2 == 1 && sym(s) != sym(s - 2);
    let mut alpha = vec![ninf; t * s_len];
    alpha[0] = logp[blank];
    if s_len > 1 {
        alpha[1] = logp[sym(1)];
    }
    for ti in 1..t {
        for s in 0..s_len {
            let prev = &alpha[(ti - 1) * s_len..ti * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = lse(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = lse(acc, prev[s - 2]);
            }
            alpha[ti * s_len + s] = if acc == ninf { ninf } else { acc + logp[ti * c + sym(s)] };
        }
    }
    let last = (t - 1) * s_len;
    let mut log_p = alpha[last + s_len - 1];
    if s_len > 1 {
        log_p = lse(log_p, alpha[last + s_len - 2]);
    }
    if !grad {
        return (log_p, None);
    }
    let mut g = vec![0.0; t * c];
    if log_p == ninf {
        return (log_p, Some(g));
    }
    let mut beta = vec![ninf; t * s_len];
    beta[last + s_len - 1] = logp[(t - 1) * c + blank];
    if s_len > 1 {
        beta[last + s_len - 2] = logp[(t - 1) * c + sym(s_len - 2)];
    }
    for ti in (0..t - 1).rev() {
        for s in 0..s_len {
            let next = &beta[(ti + 1) * s_len..(ti + 2) * s_len];
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = lse(acc, next[s + 1]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                acc = lse(acc, next[s + 2]);
            }
            beta[ti * s_len + s] = if acc == ninf { ninf } else { acc + logp[ti * c + sym(s)] };
        }
    }
    // d(-log p)/d logp[t,k] = -sum_{s: sym(s)=k} alpha*beta / (y_k p), in logs.
    let mut occ = vec![ninf; c];
    for ti in 0..t {
        occ.iter_mut().for_each(|v| *v = ninf);
        for s in 0..s_len {
            let ab = alpha[ti * s_len + s] + beta[ti * s_len + s];
            occ[sym(s)] = lse(occ[sym(s)], ab);
        }
        for k in 0..c {
            if occ[k] != ninf {
                g[ti * c + k] = -(occ[k] - logp[ti * c + k] - log_p).exp();
            }
        }
    }
    (log_p, Some(g))
}

/// `log p(Y | H)` summed over every alignment that collapses to `labels`.
/// Returns `-inf` when no alignment of length `t` exists.
pub fn ctc_log_prob(logp: &[f64], t: usize, c: usize, labels: &[usize], blank: usize) -> Result<f64> {
    validate(logp.len(), t, c, labels, blank)?;
    Ok(forward_backward(logp, t, c, labels, blank, false).0)
}

/// Exact `p(Y | H)` by enumerating all `c^t` alignments of a probability
/// (not log) posterior. Limited to `t <= 8` and `c <= 4`.
pub fn ctc_brute_force(probs: &[f64], t: usize, c: usize, labels: &[usize], blank: usize) -> Result<f64> {
    if t > 8 || c > 4 {
        return Err(Error::Config(format!("brute force limited to T <= 8 and C <= 4, got T={t}, C={c}")));
    }
    validate(probs.len(), t, c, labels, blank)?;
    let mut total = 0.0;
    let mut pi = vec![0usize; t];
    for code in 0..c.pow(t as u32) {
        let mut rest = code;
        let mut p = 1.0;
        for (ti, slot) in pi.iter_mut().enumerate() {
            *slot = rest % c;
            rest /= c;
            p *= probs[ti * c + *slot];
        }
        if collapse(&pi, blank) == labels {
            total += p;
        }
    }
    Ok(total)
}

/// Per-frame argmax (first index on ties), then [`collapse`].
pub fn ctc_greedy_decode<T: Real>(logp: &[T], t: usize, c: usize, blank: usize) -> Vec<usize> {
    let best: Vec<usize> = logp
        .chunks(c)
        .take(t)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                .0
        })
        .collect();
    collapse(&best, blank)
}

/// Mean over the batch of `-log p(Y_i | H_i)` for log-posteriors
/// `[N, T, C]`. The gradient is computed with the value.
pub fn ctc_loss<T: Real>(g: &mut Graph<T>, logp: Var, targets: &[Vec<usize>], blank: usize) -> Result<Var> {
    let shape = g.shape(logp).to_vec();
    let [n, t, c] = <[usize; 3]>::try_from(shape.as_slice())
        .map_err(|_| Error::shape("ctc_loss", format!("expected [N,T,C], got {shape:?}")))?;
    if targets.len() != n {
        return Err(Error::shape("ctc_loss", format!("{} targets for batch of {n}", targets.len())));
    }
    let data: Vec<f64> = g.value(logp).data().iter().map(|v| v.to_f64().unwrap()).collect();
    let inv_n = 1.0 / n.max(1) as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * t * c);
    for (i, y) in targets.iter().enumerate() {
        let frames = &data[i * t * c..(i + 1) * t * c];
        validate(frames.len(), t, c, y, blank)?;
        let (lp, gi) = forward_backward(frames, t, c, y, blank, true);
        total -= lp;
        grad.extend(gi.expect("gradient requested").into_iter().map(|v| T::lit(v * inv_n)));
    }
    g.fused_scalar(logp, T::lit(total * inv_n), grad)
}

/// Per-step linear classifier followed by log-softmax.
#[derive(Clone, Debug)]
pub struct CtcHead {
    pub generator: Linear,
}

impl CtcHead {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize) -> Result<Self> {
        Ok(CtcHead {
            generator: Linear::new(store, &format!("{name}.generator"), input, NUM_CLASSES, true)?,
        })
    }

    /// Log-posteriors `[N, T, 37]`.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, h: Var) -> Result<Var> {
        let logits = self.generator.forward(s, h)?;
        s.g.log_softmax(logits, 2)
    }

    pub fn loss<T: Real>(&self, s: &mut Session<T>, h: Var, targets: &[Vec<usize>]) -> Result<Var> {
        let logp = self.forward(s, h)?;
        ctc_loss(&mut s.g, logp, targets, SPECIAL)
    }

    pub fn decode<T: Real>(&self, s: &mut Session<T>, h: Var) -> Result<Vec<Vec<usize>>> {
        let logp = self.forward(s, h)?;
        let shape = s.g.shape(logp).to_vec();
        let (t, c) = (shape[1], shape[2]);
        Ok(s.g
            .value(logp)
            .data()
            .chunks(t * c)
            .map(|frames| ctc_greedy_decode(frames, t, c, SPECIAL))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse_chars("aaa--b-b-c-ccc-c--", '-'), "abbccc");
        assert_eq!(collapse_chars("", '-'), "");
        assert_eq!(collapse_chars("-a-", '-'), "a");
        assert_eq!(collapse(&[1, 1, 0, 2], 0), vec![1, 2]);
    }

    #[test]
    fn small_closed_forms() {
        let half = 0.5f64.ln();
        let p = ctc_log_prob(&[half, half], 1, 2, &[1], 0).unwrap();
        assert!((p.exp() - 0.5).abs() < 1e-15);
        let third = (1.0f64 / 3.0).ln();
        let post = vec![third; 6];
        let p = ctc_log_prob(&post, 2, 3, &[1], 0).unwrap();
        assert!((p.exp() - 3.0 / 9.0).abs() < 1e-15);
        let p = ctc_log_prob(&post, 2, 3, &[1, 1], 0).unwrap();
        assert_eq!(p, f64::NEG_INFINITY);
        assert!(ctc_log_prob(&post, 2, 3, &[3], 0).is_err());
        assert!(ctc_log_prob(&post, 2, 3, &[0], 0).is_err());
    }

    #[test]
    fn greedy_examples() {
        let frame = |k: usize| {
            let mut f = vec![-5.0f64; 4];
            f[k] = 0.0;
            f
        };
        let post: Vec<f64> = [1, 1, 3, 2].iter().flat_map(|&k| frame(k)).collect();
        assert_eq!(ctc_greedy_decode(&post, 4, 4, 3), vec![1, 2]);
        let post: Vec<f64> = [3, 3, 3].iter().flat_map(|&k| frame(k)).collect();
        assert!(ctc_greedy_decode(&post, 3, 4, 3).is_empty());
    }

    #[test]
    fn brute_force_guard() {
        assert!(ctc_brute_force(&vec![0.2; 45], 9, 5, &[1], 0).is_err());
    }
}
