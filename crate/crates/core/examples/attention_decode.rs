//! Fits an attention decoder to emit a fixed word from random encoder
//! states, then decodes it step by step and prints where each step looks.
//!
//! cargo run --example attention_decode

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strforge::predict::{AttnDecoder, LabelCodec, SPECIAL};
use strforge::tensor::{ParamStore, Session, Tensor};

fn main() -> strforge::Result<()> {
    let (steps, input, hidden) = (6, 8, 16);
    let mut store = ParamStore::<f64>::new();
    let dec = AttnDecoder::new(&mut store, "attn", input, hidden)?;
    store.init(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = Tensor::from_fn(vec![1, steps, input], |_| rng.random_range(-1.0..1.0));
    let codec = LabelCodec;
    let target = vec![codec.encode("rust")?];

    for it in 0..=300 {
        let mut s = Session::new(&store, true);
        let hv = s.g.constant(h.clone());
        let loss = dec.loss(&mut s, hv, &target)?;
        if it % 100 == 0 {
            println!("step {it:>3}  loss {:.4}", s.g.value(loss).item());
        }
        s.g.backward(loss)?;
        for (id, g) in s.param_grads() {
            for (v, gv) in store.get_mut(id).data_mut().iter_mut().zip(g) {
                *v -= 0.3 * gv;
            }
        }
    }

    let mut s = Session::new(&store, false);
    let hv = s.g.constant(h);
    let enc = dec.encode(&mut s, hv)?;
    let mut state = dec.initial_state(&mut s, 1);
    let mut prev = None;
    for t in 0..10 {
        let y_prev = dec.one_hot(&mut s, &[prev]);
        let out = dec.step(&mut s, &enc, y_prev, state)?;
        state = (out.s, out.cell);
        let scores = s.g.value(out.logits).data().to_vec();
        let best = (0..scores.len()).fold(0, |b, k| if scores[k] > scores[b] { k } else { b });
        let alpha: Vec<String> = s.g.value(out.alpha).data().iter().map(|a| format!("{a:.2}")).collect();
        let symbol = if best == SPECIAL { "[end]".to_string() } else { codec.decode(&[best])? };
        println!("t={t}  {symbol:<5}  attention [{}]", alpha.join(" "));
        if best == SPECIAL {
            break;
        }
        prev = Some(best);
    }
    Ok(())
}
