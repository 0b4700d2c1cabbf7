//! CTC log-likelihood from the forward recursion against exhaustive
//! alignment enumeration, then greedy decoding of a peaked posterior.
//!
//! cargo run --example ctc_oracle

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strforge::predict::{collapse_chars, ctc_brute_force, ctc_greedy_decode, ctc_log_prob, LabelCodec, SPECIAL};

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn main() -> strforge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (t, c, blank) = (5, 4, 0);
    for labels in [vec![], vec![1], vec![1, 1], vec![2, 3, 1], vec![3, 3, 3]] {
        let logp: Vec<f64> = (0..t)
            .flat_map(|_| log_softmax(&(0..c).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>()))
            .collect();
        let probs: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
        let fast = ctc_log_prob(&logp, t, c, &labels, blank)?.exp();
        let brute = ctc_brute_force(&probs, t, c, &labels, blank)?;
        println!("{labels:?}: recursion {fast:.12}  enumeration {brute:.12}");
    }

    println!("{}", collapse_chars("aaa--b-b-c-ccc-c--", '-'));

    // One frame per character of "hh-e-ll-lo", each peaked on its class.
    let codec = LabelCodec;
    let frames = "hh-e-ll-lo";
    let k = codec.num_classes();
    let mut post = vec![-8.0f32; frames.len() * k];
    for (i, ch) in frames.chars().enumerate() {
        let class = if ch == '-' { SPECIAL } else { codec.index_of(ch).unwrap() };
        post[i * k + class] = 0.0;
    }
    let decoded = ctc_greedy_decode(&post, frames.len(), k, SPECIAL);
    println!("{frames} -> {}", codec.decode(&decoded)?);
    Ok(())
}
