//! The 36-symbol alphanumeric alphabet plus one special token.

use crate::error::{Error, Result};

pub const ALPHABET: &str = "0123456789abcdefghijklmnopqrstuvwxyz";
/// Blank for CTC, end-of-sequence for attention.
pub const SPECIAL: usize = 36;
pub const NUM_CLASSES: usize = 37;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelCodec;

impl LabelCodec {
    pub fn num_classes(&self) -> usize {
        NUM_CLASSES
    }

    pub fn index_of(&self, ch: char) -> Option<usize> {
        match ch {
            '0'..='9' => Some(ch as usize - '0' as usize),
            'a'..='z' => Some(10 + ch as usize - 'a' as usize),
            _ => None,
        }
    }

    /// Rejects characters outside `[0-9a-z]`.
    pub fn encode(&self, s: &str) -> Result<Vec<usize>> {
        s.chars()
            .map(|ch| {
                self.index_of(ch)
                    .ok_or_else(|| Error::Codec(format!("character {ch:?} in {s:?} is outside the alphabet")))
            })
            .collect()
    }

    /// Inverse of [`LabelCodec::encode`]; the special index is an error.
    pub fn decode(&self, labels: &[usize]) -> Result<String> {
        labels
            .iter()
            .map(|&i| {
                ALPHABET
                    .as_bytes()
                    .get(i)
                    .map(|&b| b as char)
                    .ok_or_else(|| Error::Codec(format!("class index {i} has no character")))
            })
            .collect()
    }
}
