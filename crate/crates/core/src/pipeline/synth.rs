//! Synthetic word images rendered from a 5×7 dot font.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::predict::ALPHABET;

use super::model::INPUT_SHAPE;

/// Rows of each glyph, top to bottom; bit 4 is the leftmost column.
const FONT: [[u8; 7]; 36] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E], // 0
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E], // 1
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F], // 2
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E], // 3
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02], // 4
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E], // 5
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E], // 6
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08], // 7
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E], // 8
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C], // 9
    [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11], // A
    [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E], // B
    [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E], // C
    [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C], // D
    [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F], // E
    [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10], // F
    [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F], // G
    [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11], // H
    [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E], // I
    [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C], // J
    [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11], // K
    [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F], // L
    [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11], // M
    [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11], // N
    [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E], // O
    [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10], // P
    [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D], // Q
    [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11], // R
    [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E], // S
    [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04], // T
    [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E], // U
    [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04], // V
    [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A], // W
    [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11], // X
    [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04], // Y
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F], // Z
];

/// Glyph cell including one column of spacing.
const ADVANCE: f64 = 6.0;

/// Whether glyph pixel `(row, col)` of character class `k` is set.
pub fn glyph_on(k: usize, row: usize, col: usize) -> bool {
    row < 7 && col < 5 && FONT[k][row] >> (4 - col) & 1 == 1
}

/// A labeled `1×32×100` image with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Vec<f32>,
    pub label: String,
}

/// Rendering randomness.
#[derive(Clone, Debug)]
pub struct SynthStyle {
    pub min_len: usize,
    pub max_len: usize,
    /// Glyph pixel size range.
    pub scale: (f64, f64),
    /// Gaussian noise standard deviation, in `[-1, 1]` units.
    pub noise: f64,
}

impl Default for SynthStyle {
    fn default() -> Self {
        SynthStyle {
            min_len: 1,
            max_len: 5,
            scale: (2.0, 3.0),
            noise: 0.1,
        }
    }
}

/// Renders `text` (characters of the 36-symbol alphabet) with the given
/// glyph scale and top-left offset.
pub fn render(text: &str, scale: f64, offset: (f64, f64), fg: f32, bg: f32) -> Result<Vec<f32>> {
    let (h, w) = (INPUT_SHAPE[1], INPUT_SHAPE[2]);
    let classes: Vec<usize> = text
        .chars()
        .map(|c| {
            ALPHABET
                .find(c.to_ascii_lowercase())
                .ok_or_else(|| Error::Codec(format!("cannot render '{c}'")))
        })
        .collect::<Result<_>>()?;
    let mut img = vec![bg; h * w];
    for y in 0..h {
        let gy = (y as f64 + 0.5 - offset.1) / scale;
        if !(0.0..7.0).contains(&gy) {
            continue;
        }
        for x in 0..w {
            let gx = (x as f64 + 0.5 - offset.0) / scale;
            if gx < 0.0 {
                continue;
            }
            let cell = (gx / ADVANCE) as usize;
            let Some(&k) = classes.get(cell) else { continue };
            if glyph_on(k, gy as usize, (gx - cell as f64 * ADVANCE) as usize) {
                img[y * w + x] = fg;
            }
        }
    }
    Ok(img)
}

/// One random sample from `rng`.
pub fn synth_sample<R: Rng>(rng: &mut R, style: &SynthStyle) -> Sample {
    let (h, w) = (INPUT_SHAPE[1] as f64, INPUT_SHAPE[2] as f64);
    let len = rng.random_range(style.min_len..=style.max_len);
    let bytes = ALPHABET.as_bytes();
    let label: String = (0..len).map(|_| bytes[rng.random_range(0..bytes.len())] as char).collect();
    let text_w = |s: f64| (len as f64 * ADVANCE - 1.0) * s;
    let mut scale = rng.random_range(style.scale.0..=style.scale.1);
    scale = scale.min((w - 2.0) / (len as f64 * ADVANCE - 1.0)).min((h - 2.0) / 7.0);
    let ox = rng.random_range(0.0..=(w - text_w(scale)).max(0.0));
    let oy = rng.random_range(0.0..=(h - 7.0 * scale).max(0.0));
    let contrast = rng.random_range(0.6f32..=1.0);
    let (fg, bg) = if rng.random_bool(0.5) { (contrast, -contrast) } else { (-contrast, contrast) };
    let mut image = render(&label, scale, (ox, oy), fg, bg).expect("alphabet characters");
    if style.noise > 0.0 {
        let normal = Normal::new(0.0, style.noise).expect("finite noise");
        for v in &mut image {
            *v = (*v + normal.sample(rng) as f32).clamp(-1.0, 1.0);
        }
    }
    Sample { image, label }
}

/// `n` samples with labels of `1..=max_len` characters, deterministic in
/// `seed`.
pub fn synth_toydata(n: usize, max_len: usize, seed: u64) -> Result<Vec<Sample>> {
    if max_len == 0 || max_len > 16 {
        return Err(Error::Config(format!("max_len must be in 1..=16, got {max_len}")));
    }
    let style = SynthStyle {
        max_len,
        ..SynthStyle::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| synth_sample(&mut rng, &style)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_distinct() {
        let set: std::collections::HashSet<_> = FONT.iter().collect();
        assert_eq!(set.len(), 36);
    }

    #[test]
    fn render_places_pixels() {
        let img = render("1", 1.0, (0.0, 0.0), 1.0, -1.0).unwrap();
        // Top row of '1' lights column 2 only.
        assert_eq!(&img[..5], &[-1.0, -1.0, 1.0, -1.0, -1.0]);
        assert!(render("a#", 2.0, (0.0, 0.0), 1.0, -1.0).is_err());
    }

    #[test]
    fn deterministic_and_in_range() {
        let a = synth_toydata(20, 5, 3).unwrap();
        let b = synth_toydata(20, 5, 3).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(s.image.len(), 3200);
            assert!((1..=5).contains(&s.label.len()));
            assert!(s.image.iter().all(|v| (-1.0..=1.0).contains(v)));
            assert!(s.label.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()));
        }
        assert_ne!(a, synth_toydata(20, 5, 4).unwrap());
    }
}
