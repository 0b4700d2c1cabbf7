//! Label normalization, benchmark subsets, duplicate audits and unified
//! accuracy.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};

use super::manifest::{Entry, Manifest};

/// Lowercases and keeps only ASCII letters and digits.
pub fn normalize_label(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Percentage of pairs equal after [`normalize_label`].
pub fn word_accuracy<P: AsRef<str>, G: AsRef<str>>(preds: &[P], gts: &[G]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::Length(format!("{} predictions for {} labels", preds.len(), gts.len())));
    }
    if gts.is_empty() {
        return Err(Error::Data("accuracy over an empty set".into()));
    }
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| normalize_label(p.as_ref()) == normalize_label(g.as_ref()))
        .count();
    Ok(100.0 * hits as f64 / gts.len() as f64)
}

/// Before/after counts of one filtering pass.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub dataset: String,
    pub variant: Option<usize>,
    pub before: usize,
    pub removed_by_rules: usize,
    pub removed_by_exclusion: usize,
    pub after: usize,
}

struct Rules {
    alnum_only: bool,
    min_len: usize,
    exclusion: bool,
}

fn rules(dataset: &str, variant: Option<usize>) -> Result<Rules> {
    let r = |alnum_only, min_len, exclusion| Rules {
        alnum_only,
        min_len,
        exclusion,
    };
    let bad = || {
        Error::Config(format!(
            "variant {} is not defined for {dataset}",
            variant.map_or("<none>".to_string(), |v| v.to_string())
        ))
    };
    match (dataset, variant) {
        ("IC03", Some(867)) => Ok(r(true, 3, false)),
        ("IC03", Some(860)) => Ok(r(true, 3, true)),
        ("IC13", Some(1015)) => Ok(r(true, 0, false)),
        ("IC13", Some(857)) => Ok(r(true, 3, false)),
        ("IC15", Some(2077)) => Ok(r(false, 0, false)),
        ("IC15", Some(1811)) => Ok(r(true, 0, true)),
        ("IC03" | "IC13" | "IC15", _) => Err(bad()),
        (_, None) => Ok(r(false, 0, false)),
        _ => Err(bad()),
    }
}

/// Entries of `dataset` surviving the variant's rules: IC03/867 and
/// IC13/857 keep alphanumeric labels of at least 3 characters, IC13/1015
/// keeps alphanumeric labels, IC15/2077 keeps everything. IC03/860 and
/// IC15/1811 additionally drop images listed in `exclusion`.
pub fn filter_benchmark(
    m: &Manifest,
    dataset: &str,
    variant: Option<usize>,
    exclusion: Option<&Manifest>,
) -> Result<(Manifest, FilterReport)> {
    let r = rules(dataset, variant)?;
    let excluded: HashSet<&str> = match (r.exclusion, exclusion) {
        (true, Some(x)) => x.entries.iter().map(|e| e.image.as_str()).collect(),
        (true, None) => {
            return Err(Error::Config(format!(
                "{dataset}/{} requires an exclusion list",
                variant.unwrap_or_default()
            )))
        }
        (false, _) => HashSet::new(),
    };
    let own: Vec<&Entry> = m.of_dataset(dataset).collect();
    let by_rule: Vec<&Entry> = own
        .iter()
        .copied()
        .filter(|e| {
            (!r.alnum_only || e.label.chars().all(|c| c.is_ascii_alphanumeric())) && e.label.chars().count() >= r.min_len
        })
        .collect();
    let kept: Vec<Entry> = by_rule
        .iter()
        .filter(|e| !excluded.contains(e.image.as_str()))
        .map(|e| (*e).clone())
        .collect();
    let report = FilterReport {
        dataset: dataset.to_string(),
        variant,
        before: own.len(),
        removed_by_rules: own.len() - by_rule.len(),
        removed_by_exclusion: by_rule.len() - kept.len(),
        after: kept.len(),
    };
    Ok((Manifest { entries: kept }, report))
}

/// Overlap between a training and an evaluation manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DedupeReport {
    /// Duplicated scene images.
    pub scenes: usize,
    /// Word boxes present in both manifests.
    pub word_boxes: usize,
    /// Some scenes were matched by identifier instead of digest.
    pub heuristic: bool,
    pub shared_scenes: Vec<String>,
}

fn scene_key(e: &Entry) -> (String, bool) {
    match (&e.digest, &e.scene) {
        (Some(d), _) => (format!("sha256:{d}"), false),
        (None, Some(s)) => (format!("scene:{s}"), true),
        (None, None) => (format!("image:{}", e.image), true),
    }
}

fn boxes_by_scene(m: &Manifest) -> HashMap<String, (bool, BTreeMap<String, usize>)> {
    let mut out: HashMap<String, (bool, BTreeMap<String, usize>)> = HashMap::new();
    for e in &m.entries {
        let (key, heuristic) = scene_key(e);
        let slot = out.entry(key).or_default();
        slot.0 |= heuristic;
        *slot.1.entry(normalize_label(&e.label)).or_default() += 1;
    }
    out
}

/// Scenes are keyed by digest when present, otherwise by scene identifier.
/// A digest match marks the scene as duplicated; an identifier match counts
/// only when some label also matches. Word boxes are matched by normalized
/// label within a shared scene, each box used at most once. Also returns
/// `train` without entries of duplicated scenes.
pub fn dedupe_scan(train: &Manifest, eval: &Manifest) -> (DedupeReport, Manifest) {
    let a = boxes_by_scene(train);
    let b = boxes_by_scene(eval);
    let mut report = DedupeReport::default();
    let mut shared = BTreeSet::new();
    for (key, (ha, la)) in &a {
        let Some((hb, lb)) = b.get(key) else { continue };
        let boxes: usize = la.iter().map(|(l, n)| (*n).min(lb.get(l).copied().unwrap_or(0))).sum();
        let heuristic = *ha || *hb;
        if heuristic && boxes == 0 {
            continue;
        }
        report.heuristic |= heuristic;
        report.word_boxes += boxes;
        shared.insert(key.clone());
    }
    report.scenes = shared.len();
    let kept = train
        .entries
        .iter()
        .filter(|e| !shared.contains(&scene_key(e).0))
        .cloned()
        .collect();
    report.shared_scenes = shared.into_iter().collect();
    (report, Manifest { entries: kept })
}

/// Datasets of the unified evaluation set with their declared sizes and
/// report columns, regular ones first.
pub const UNIFIED: [(&str, usize, &str); 7] = [
    ("IIIT", 3000, "iiit"),
    ("SVT", 647, "svt"),
    ("IC03", 867, "ic03_867"),
    ("IC13", 1015, "ic13_1015"),
    ("IC15", 2077, "ic15_2077"),
    ("SP", 645, "sp"),
    ("CT", 288, "ct"),
];

pub const REGULAR: [&str; 4] = ["IIIT", "SVT", "IC03", "IC13"];
pub const IRREGULAR: [&str; 3] = ["IC15", "SP", "CT"];

/// Report columns in results-table order.
pub const ACC_COLUMNS: [&str; 10] = [
    "iiit", "svt", "ic03_860", "ic03_867", "ic13_857", "ic13_1015", "ic15_1811", "ic15_2077", "sp", "ct",
];

pub fn unified_size() -> usize {
    UNIFIED.iter().map(|u| u.1).sum()
}

/// `Σ n_d·acc_d / Σ n_d` over the listed datasets, with declared sizes.
pub fn weighted_accuracy(acc: &BTreeMap<String, f64>, datasets: &[&str]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for d in datasets {
        let n = UNIFIED
            .iter()
            .find(|u| u.0 == *d)
            .ok_or_else(|| Error::Data(format!("{d} is not part of the unified set")))?
            .1 as f64;
        let a = acc.get(*d).ok_or_else(|| Error::Data(format!("no accuracy for {d}")))?;
        num += n * a;
        den += n;
    }
    Ok(num / den)
}

/// Accuracy and cost of one model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub name: String,
    /// Keyed by dataset name.
    pub accuracies: BTreeMap<String, f64>,
    pub total: f64,
    pub regular: Option<f64>,
    pub irregular: Option<f64>,
    pub time_ms: Option<f64>,
    pub params_m: Option<f64>,
    pub flops_g: Option<f64>,
    pub counts: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

/// Scores predictions (image reference to text) against a manifest.
/// The total weighs datasets by their actual sizes; deviations from the
/// declared unified composition are listed as warnings.
pub fn unified_eval(name: &str, m: &Manifest, preds: &HashMap<String, String>) -> Result<EvalRecord> {
    let mut groups: BTreeMap<String, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for e in &m.entries {
        let p = preds
            .get(&e.image)
            .ok_or_else(|| Error::Data(format!("no prediction for {}", e.image)))?;
        let g = groups.entry(e.dataset.clone()).or_default();
        g.0.push(p);
        g.1.push(&e.label);
    }
    if groups.is_empty() {
        return Err(Error::Data("manifest is empty".into()));
    }
    let mut accuracies = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (d, (p, g)) in &groups {
        accuracies.insert(d.clone(), word_accuracy(p, g)?);
        counts.insert(d.clone(), g.len());
    }
    let mut warnings = Vec::new();
    for (d, n, _) in UNIFIED {
        let got = counts.get(d).copied().unwrap_or(0);
        if got != n {
            warnings.push(format!("{d}: {got} images, unified composition declares {n} ({:+})", got as i64 - n as i64));
        }
    }
    let weighted = |sets: &[&str]| {
        let (num, den) = sets.iter().fold((0.0, 0usize), |(num, den), d| match (accuracies.get(*d), counts.get(*d)) {
            (Some(a), Some(&n)) => (num + a * n as f64, den + n),
            _ => (num, den),
        });
        (den > 0).then(|| num / den as f64)
    };
    let all: Vec<&str> = groups.keys().map(String::as_str).collect();
    Ok(EvalRecord {
        name: name.to_string(),
        total: weighted(&all).expect("non-empty"),
        regular: weighted(&REGULAR),
        irregular: weighted(&IRREGULAR),
        accuracies,
        time_ms: None,
        params_m: None,
        flops_g: None,
        counts,
        warnings,
    })
}

impl EvalRecord {
    /// Report column for a dataset name.
    fn column(dataset: &str) -> Option<&'static str> {
        UNIFIED.iter().find(|u| u.0 == dataset).map(|u| u.2)
    }

    /// CSV with results-table column order.
    pub fn write_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["name"];
        header.extend(ACC_COLUMNS);
        header.extend(["total", "time_ms", "params_m", "flops_g"]);
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
        for r in records {
            let mut row = vec![r.name.clone()];
            for col in ACC_COLUMNS {
                let v = r
                    .accuracies
                    .iter()
                    .find(|(d, _)| Self::column(d) == Some(col))
                    .map(|(_, a)| *a);
                row.push(opt(v));
            }
            row.extend([format!("{}", r.total), opt(r.time_ms), opt(r.params_m), opt(r.flops_g)]);
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Mean per-image latency.
#[derive(Clone, Debug, Serialize)]
pub struct TimingReport {
    pub ms_per_image: f64,
    pub repetitions: usize,
    pub images: usize,
    pub environment: String,
}

/// Runs `f` once as warm-up, then `repetitions` timed times; `f` processes
/// `images` images per call.
pub fn timing_probe(images: usize, repetitions: usize, mut f: impl FnMut() -> Result<()>) -> Result<TimingReport> {
    if images == 0 || repetitions == 0 {
        return Err(Error::Config("timing needs at least one image and one repetition".into()));
    }
    f()?;
    let start = Instant::now();
    for _ in 0..repetitions {
        f()?;
    }
    let ms = start.elapsed().as_secs_f64() * 1e3 / (repetitions * images) as f64;
    Ok(TimingReport {
        ms_per_image: ms,
        repetitions,
        images,
        environment: environment(),
    })
}

pub fn environment() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{} threads={} strforge={}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        threads,
        env!("CARGO_PKG_VERSION")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ic03(labels: &[&str]) -> Manifest {
        Manifest::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| Entry::new(format!("{i}.png"), *l, "IC03"))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_label("Hello-1!"), "hello1");
        assert_eq!(normalize_label("ABC"), "abc");
        assert_eq!(normalize_label("¥€$"), "");
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(word_accuracy(&["a", "b"], &["a", "b"]).unwrap(), 100.0);
        assert_eq!(word_accuracy(&["hello1"], &["Hello-1"]).unwrap(), 100.0);
        assert_eq!(word_accuracy(&["a", "b", "c", "x"], &["a", "b", "c", "d"]).unwrap(), 75.0);
        assert!(word_accuracy(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn ic03_rules() {
        let (kept, report) = filter_benchmark(&ic03(&["ab", "abc", "ab#c", "xyz1"]), "IC03", Some(867), None).unwrap();
        let labels: Vec<&str> = kept.entries.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["abc", "xyz1"]);
        assert_eq!((report.before, report.after), (4, 2));
        assert!(matches!(filter_benchmark(&kept, "IC03", Some(860), None), Err(Error::Config(_))));
        assert!(filter_benchmark(&kept, "IC03", Some(1015), None).is_err());
        assert!(filter_benchmark(&kept, "IIIT", None, None).is_ok());
    }

    #[test]
    fn dedupe_small() {
        let a = Manifest::new(vec![Entry::new("a1", "x", "IC03").with_digest("d1"), Entry::new("a2", "yy", "IC03").with_digest("d1")]).unwrap();
        let b = Manifest::new(vec![Entry::new("b1", "X", "IC13").with_digest("d1"), Entry::new("b2", "z", "IC13").with_digest("d2")]).unwrap();
        let (r, kept) = dedupe_scan(&a, &b);
        assert_eq!((r.scenes, r.word_boxes), (1, 1));
        assert!(kept.is_empty());
        let c = Manifest::new(vec![Entry::new("c", "x", "IC13").with_digest("d9")]).unwrap();
        assert_eq!(dedupe_scan(&a, &c).0.scenes, 0);
    }

    #[test]
    fn unified_sizes() {
        assert_eq!(unified_size(), 8539);
        let acc: BTreeMap<String, f64> = UNIFIED.iter().map(|u| (u.0.to_string(), 80.0)).collect();
        let all: Vec<&str> = UNIFIED.iter().map(|u| u.0).collect();
        assert!((weighted_accuracy(&acc, &all).unwrap() - 80.0).abs() < 1e-12);
    }
}
