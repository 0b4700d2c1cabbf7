//! Trains a small None-VGG-None-CTC recognizer on rendered strings and
//! reports held-out word accuracy.
//!
//! cargo run --release --example train_synthetic -- [iterations]

use std::time::Instant;

use strforge::pipeline::{evaluate, synth_toydata, train, Model, PipelineConfig, TrainRecipe};

fn main() -> strforge::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let train_set = synth_toydata(2000, 5, 1)?;
    let val_set = synth_toydata(200, 5, 2)?;
    let cfg = PipelineConfig::parse("None-VGG-None-CTC")?.with_scale(0.125);
    let mut model = Model::<f32>::new(&cfg)?;
    println!("{cfg:?}: {} parameters", model.num_params());
    let recipe = TrainRecipe {
        iterations,
        ..TrainRecipe::default()
    };
    let start = Instant::now();
    let out = train(&mut model, &recipe, &train_set, &val_set)?;
    for row in &out.log {
        println!("step {:>5}  loss {:>8.4}  val {:>6.2}%", row.step, row.loss, row.val_accuracy);
    }
    model.store = out.best;
    println!(
        "best step {} accuracy {:.2}% (recomputed {:.2}%) in {:.1}s",
        out.best_step,
        out.best_accuracy,
        evaluate(&model, &val_set, 100)?,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
