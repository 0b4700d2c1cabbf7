//! Accuracy/cost frontiers and per-module means over the bundled results
//! table; writes CSV and JSON report files.
//!
//! cargo run --example frontier_report -- [out_dir]

use std::path::PathBuf;

use strforge::tradeoff::{all_marginals, emit_report, frontier_chain, pareto_set, Axis, ResultsFixture};

fn main() -> strforge::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("strforge-frontier"));
    let fixture = ResultsFixture::bundled();
    let axes = [Axis::Time, Axis::Params, Axis::Flops];
    for axis in axes {
        let points = fixture.points(axis);
        let members: Vec<String> = pareto_set(&points).iter().map(|p| format!("#{}", p.id)).collect();
        let chain: Vec<String> = frontier_chain(&points).iter().map(|p| format!("#{} ({:.1}, {:.1}%)", p.id, p.cost, p.accuracy)).collect();
        println!("{}", axis.label());
        println!("  non-dominated: {}", members.join(" "));
        println!("  chain: {}", chain.join(" -> "));
    }
    println!("\n{:<6} {:<7} {:>6} {:>8} {:>10}", "stage", "module", "total", "regular", "irregular");
    for m in all_marginals(&fixture)? {
        println!("{:<6} {:<7} {:>6.1} {:>8.1} {:>10.1}", m.stage, m.module, m.total, m.regular_weighted, m.irregular_weighted);
    }
    let files = emit_report(&fixture, &axes, &out)?;
    println!("\nwrote {} files under {}", files.len(), out.display());
    Ok(())
}
