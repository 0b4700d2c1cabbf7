//! Prediction stage: label codec, CTC and attention decoding.

pub mod attn;
pub mod codec;
pub mod ctc;

pub use attn::{AttnDecoder, AttnStep};
pub use codec::{LabelCodec, ALPHABET, NUM_CLASSES, SPECIAL};
pub use ctc::{collapse, collapse_chars, ctc_brute_force, ctc_greedy_decode, ctc_log_prob, ctc_loss, CtcHead};
