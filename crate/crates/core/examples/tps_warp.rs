//! Bends a rendered word with a thin-plate spline, then straightens it with
//! the opposite bend. Writes the three images as PNG.
//!
//! cargo run --example tps_warp -- [out_dir]

use std::path::PathBuf;

use strforge::pipeline::{render, save_image, INPUT_SHAPE};
use strforge::tensor::{Graph, Tensor};
use strforge::tps::{generate_grid, Point, TpsSolver};

const H: usize = INPUT_SHAPE[1];
const W: usize = INPUT_SHAPE[2];

/// Samples `img` through the spline that maps the base fiducials onto the
/// base shifted vertically by `bend * (1 - x^2)`.
fn warp(solver: &TpsSolver, img: &[f32], bend: f64) -> strforge::Result<Vec<f32>> {
    let c: Vec<Point> = solver.base().iter().map(|p| [p[0], p[1] + bend * (1.0 - p[0] * p[0])]).collect();
    let grid = generate_grid(&solver.solve_t(&c)?, H, W);
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::new(vec![1, 1, H, W], img.to_vec())?);
    let grid = g.constant(grid.to_tensor());
    let y = g.bilinear_sample(x, grid)?;
    Ok(g.value(y).data().to_vec())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("strforge-tps"));
    std::fs::create_dir_all(&out)?;
    let solver = TpsSolver::new(20)?;
    let word = render("curved", 2.5, (8.0, 7.0), 1.0, -1.0)?;
    let bent = warp(&solver, &word, 0.35)?;
    let back = warp(&solver, &bent, -0.35)?;
    let diff = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f32>() / a.len() as f32;
    println!("mean |bent - original|     {:.3}", diff(&bent, &word));
    println!("mean |restored - original| {:.3}", diff(&back, &word));
    for (name, img) in [("original.png", &word), ("bent.png", &bent), ("restored.png", &back)] {
        save_image(&out.join(name), img)?;
    }
    println!("wrote original.png, bent.png, restored.png under {}", out.display());
    Ok(())
}
