//! Parameter and FLOP totals for all 24 stage combinations, plus the named
//! presets.
//!
//! cargo run --example describe_pipelines -- [scale]

use strforge::pipeline::{Combination, PipelineConfig, StageGraphs, PRESETS};

fn main() -> strforge::Result<()> {
    let scale = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    println!("{:>3}  {:<28} {:>9} {:>9}", "id", "pipeline", "params M", "GFLOPs");
    for combo in Combination::all() {
        let graphs = StageGraphs::new(&PipelineConfig::new(combo).with_scale(scale))?;
        println!(
            "{:>3}  {:<28} {:>9.2} {:>9.2}",
            combo.id(),
            combo.to_string(),
            graphs.params()? as f64 / 1e6,
            graphs.flops()? as f64 / 1e9
        );
    }
    println!();
    for (name, combo) in PRESETS {
        let id = PipelineConfig::parse(name)?.combo.id();
        println!("{name:<9} #{id:<3} {combo}");
    }
    Ok(())
}
