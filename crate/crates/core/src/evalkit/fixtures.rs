//! Synthetic manifests with the published benchmark counts. Image paths are
//! placeholders; only labels, scenes and digests matter to the protocol.

use super::manifest::{digest_bytes, Entry, Manifest};

/// Alphanumeric word of `len` characters derived from `i`.
fn word(i: usize, len: usize) -> String {
    const A: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..len).map(|k| A[(i * 7 + k * 13 + i / 36) % 36] as char).collect()
}

fn entries(dataset: &str, labels: impl IntoIterator<Item = String>) -> Vec<Entry> {
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| Entry::new(format!("{}/word_{i:05}.png", dataset.to_lowercase()), l, dataset))
        .collect()
}

/// 1,110 IC03 words: 867 alphanumeric of length ≥ 3, 150 shorter words and
/// 93 with punctuation. The returned exclusion list names 7 of the 867.
pub fn ic03() -> (Manifest, Manifest) {
    let labels = (0..1110).map(|i| match i % 10 {
        _ if i >= 1017 => format!("{}'s", word(i, 3)),
        _ if i >= 867 => word(i, 1 + i % 2),
        _ => word(i, 3 + i % 6),
    });
    let m = Manifest::new(entries("IC03", labels)).expect("unique images");
    let excluded: Vec<Entry> = m.entries.iter().step_by(120).take(7).cloned().collect();
    (m, Manifest::new(excluded).expect("unique images"))
}

/// 1,095 IC13 words: 80 contain punctuation, and 158 of the remaining 1,015
/// are shorter than 3 characters.
pub fn ic13() -> Manifest {
    let labels = (0..1095).map(|i| {
        if i < 80 {
            format!("{}-{}", word(i, 2), word(i + 1, 2))
        } else if i < 238 {
            word(i, 1 + i % 2)
        } else {
            word(i, 3 + i % 7)
        }
    });
    Manifest::new(entries("IC13", labels)).expect("unique images")
}

/// 2,077 IC15 words, 200 of them with punctuation, and an exclusion list of
/// 70 images of which 66 are otherwise valid: 1,811 survive.
pub fn ic15() -> (Manifest, Manifest) {
    let labels = (0..2077).map(|i| if i % 10 == 9 && i < 2000 { format!("{}!", word(i, 4)) } else { word(i, 1 + i % 8) });
    let m = Manifest::new(entries("IC15", labels)).expect("unique images");
    let mut excluded: Vec<Entry> = m.entries.iter().filter(|e| e.label.ends_with('!')).take(4).cloned().collect();
    excluded.extend(m.entries.iter().filter(|e| !e.label.ends_with('!')).step_by(28).take(66).cloned());
    (m, Manifest::new(excluded).expect("unique images"))
}

/// Training and evaluation manifests sharing 34 scene images that hold 215
/// common word boxes. Shared scenes also carry boxes present on one side only.
pub fn overlap() -> (Manifest, Manifest) {
    let scene_digest = |s: usize| digest_bytes(format!("scene-{s}").as_bytes());
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for s in 0..34 {
        let shared = 6 + usize::from(s < 11);
        for b in 0..shared {
            let label = word(s * 31 + b, 4);
            train.push(Entry::new(format!("train/s{s}_b{b}.png"), label.clone(), "IC13").with_digest(scene_digest(s)));
            eval.push(Entry::new(format!("eval/s{s}_b{b}.png"), label.to_uppercase(), "IC13").with_digest(scene_digest(s)));
        }
        train.push(Entry::new(format!("train/s{s}_only.png"), format!("t{}", word(s, 5)), "IC13").with_digest(scene_digest(s)));
        eval.push(Entry::new(format!("eval/s{s}_only.png"), format!("e{}", word(s, 5)), "IC13").with_digest(scene_digest(s)));
    }
    for s in 34..120 {
        train.push(Entry::new(format!("train/x{s}.png"), word(s, 5), "IC13").with_digest(scene_digest(s)));
    }
    for s in 200..260 {
        eval.push(Entry::new(format!("eval/x{s}.png"), word(s, 5), "IC13").with_digest(scene_digest(s)));
    }
    (Manifest::new(train).expect("unique images"), Manifest::new(eval).expect("unique images"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::{dedupe_scan, filter_benchmark};

    #[test]
    fn counts() {
        let (m, x) = ic03();
        assert_eq!(m.len(), 1110);
        assert_eq!(filter_benchmark(&m, "IC03", Some(867), None).unwrap().1.after, 867);
        assert_eq!(filter_benchmark(&m, "IC03", Some(860), Some(&x)).unwrap().1.after, 860);
        let m = ic13();
        let (a, r) = filter_benchmark(&m, "IC13", Some(1015), None).unwrap();
        assert_eq!((r.before, r.after), (1095, 1015));
        assert_eq!(filter_benchmark(&a, "IC13", Some(857), None).unwrap().1.after, 857);
        let (m, x) = ic15();
        let r = filter_benchmark(&m, "IC15", Some(1811), Some(&x)).unwrap().1;
        assert_eq!((r.before, r.after), (2077, 1811));
        let (t, e) = overlap();
        let (rep, _) = dedupe_scan(&t, &e);
        assert_eq!((rep.scenes, rep.word_boxes), (34, 215));
    }
}
