//! Benchmark subset filtering and train/eval duplicate scanning on
//! synthetic manifests built to the published subset sizes.
//!
//! cargo run --example audit_manifests

use strforge::evalkit::{dedupe_scan, filter_benchmark, fixtures, unified_size, UNIFIED};

fn main() -> strforge::Result<()> {
    let (ic03, ic03_excl) = fixtures::ic03();
    let ic13 = fixtures::ic13();
    let (ic15, ic15_excl) = fixtures::ic15();
    let runs = [
        ("IC03", &ic03, 867, None),
        ("IC03", &ic03, 860, Some(&ic03_excl)),
        ("IC13", &ic13, 1015, None),
        ("IC13", &ic13, 857, None),
        ("IC15", &ic15, 2077, None),
        ("IC15", &ic15, 1811, Some(&ic15_excl)),
    ];
    for (dataset, m, variant, excl) in runs {
        let (_, r) = filter_benchmark(m, dataset, Some(variant), excl)?;
        println!("{dataset}/{variant}: {} -> {}", r.before, r.after);
    }

    let (train, eval) = fixtures::overlap();
    let (report, cleaned) = dedupe_scan(&train, &eval);
    println!(
        "duplicates: {} scenes, {} word boxes (heuristic: {}); train {} -> {} entries",
        report.scenes,
        report.word_boxes,
        report.heuristic,
        train.len(),
        cleaned.len()
    );

    let parts: Vec<String> = UNIFIED.iter().map(|(d, n, _)| format!("{d} {n}")).collect();
    println!("unified evaluation set: {} = {}", unified_size(), parts.join(" + "));
    Ok(())
}
