//! Training loop, validation-based model selection, fine-tuning and
//! dataset-fraction sweeps.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evalkit::{normalize_label, word_accuracy};
use crate::predict::LabelCodec;
use crate::tensor::{ParamStore, Real, Session, Tensor};

use super::config::{PipelineConfig, TrainRecipe};
use super::model::{Model, INPUT_SHAPE};
use super::optim::{clip_gradients, AdaDelta};
use super::synth::Sample;
use crate::nn::BN_MOMENTUM;

/// One validation interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub step: usize,
    /// Mean training loss since the previous row.
    pub loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Real = f32> {
    pub best_step: usize,
    pub best_accuracy: f64,
    /// Parameters at `best_step`.
    pub best: ParamStore<T>,
    pub log: Vec<LogRow>,
    pub steps_run: usize,
}

/// Stacks images and encodes normalized labels.
pub fn make_batch<T: Real>(samples: &[&Sample]) -> Result<(Tensor<T>, Vec<Vec<usize>>)> {
    let per = INPUT_SHAPE.iter().product::<usize>();
    let mut data = Vec::with_capacity(samples.len() * per);
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        if s.image.len() != per {
            return Err(Error::Data(format!("image has {} values, expected {per}", s.image.len())));
        }
        data.extend(s.image.iter().map(|&v| T::lit(v as f64)));
        targets.push(LabelCodec.encode(&normalize_label(&s.label))?);
    }
    let x = Tensor::new(vec![samples.len(), INPUT_SHAPE[0], INPUT_SHAPE[1], INPUT_SHAPE[2]], data)?;
    Ok((x, targets))
}

/// Forward, backward, clip, AdaDelta update and running-statistics update
/// on one batch. Returns the loss before the update.
pub fn train_step<T: Real>(model: &mut Model<T>, opt: &mut AdaDelta, recipe: &TrainRecipe, batch: &[&Sample]) -> Result<f64> {
    let (x, targets) = make_batch::<T>(batch)?;
    let (loss, mut grads, bn) = {
        let mut s = Session::new(&model.store, true);
        let x = s.g.constant(x);
        let loss = model.nll_objective(&mut s, x, &targets)?;
        let value = s.g.value(loss).item().to_f64().unwrap();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("training loss is {value}")));
        }
        s.g.backward(loss)?;
        (value, s.param_grads(), s.take_bn_updates())
    };
    clip_gradients(&mut grads, recipe.clip, recipe.clip_mode);
    if grads.iter().flat_map(|(_, g)| g).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    opt.step(&mut model.store, &grads);
    for u in &bn {
        model.store.apply_bn_update(u, T::lit(BN_MOMENTUM));
    }
    Ok(loss)
}

/// Inference-mode predictions in batches of `batch`.
pub fn predict_all<T: Real>(model: &Model<T>, samples: &[Sample], batch: usize) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let flat: Vec<T> = chunk.iter().flat_map(|s| s.image.iter().map(|&v| T::lit(v as f64))).collect();
        out.extend(model.predict(&flat, chunk.len())?);
    }
    Ok(out)
}

/// [`predict_all`] over up to `threads` disjoint contiguous shards; the
/// output order matches `samples`.
pub fn predict_parallel<T: Real>(model: &Model<T>, samples: &[Sample], batch: usize, threads: usize) -> Result<Vec<String>> {
    let threads = threads.clamp(1, samples.len().max(1));
    if threads == 1 {
        return predict_all(model, samples, batch);
    }
    let shard = samples.len().div_ceil(threads);
    let parts: Vec<Result<Vec<String>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(shard)
            .map(|chunk| scope.spawn(move || predict_all(model, chunk, batch)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("prediction worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Case-insensitive alphanumeric word accuracy (%).
pub fn evaluate<T: Real>(model: &Model<T>, samples: &[Sample], batch: usize) -> Result<f64> {
    let preds = predict_all(model, samples, batch)?;
    let gts: Vec<&str> = samples.iter().map(|s| s.label.as_str()).collect();
    word_accuracy(&preds, &gts)
}

/// Sorted indices of a deterministic shuffled prefix holding
/// `round(fraction * n)` items (at least one).
pub fn fraction_subset(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if fraction >= 1.0 {
        return idx;
    }
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f4ac));
    let keep = ((fraction * n as f64).round() as usize).clamp(1.min(n), n);
    idx.truncate(keep);
    idx.sort_unstable();
    idx
}

/// Trains for `recipe.iterations` steps with validation every
/// `recipe.val_every` steps and after the last one. The parameters with the
/// highest validation accuracy (earliest on ties) are returned; `model`
/// ends with the final parameters.
pub fn train<T: Real>(model: &mut Model<T>, recipe: &TrainRecipe, train_set: &[Sample], val_set: &[Sample]) -> Result<TrainOutcome<T>> {
    recipe.validate()?;
    if val_set.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let subset = fraction_subset(train_set.len(), recipe.fraction, recipe.seed);
    if subset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut opt = AdaDelta::new(&model.store, recipe.rho, recipe.eps, recipe.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut order = subset.clone();
    let mut cursor = order.len();
    let mut out = TrainOutcome {
        best_step: 0,
        best_accuracy: f64::NEG_INFINITY,
        best: model.store.clone(),
        log: Vec::new(),
        steps_run: 0,
    };
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    for step in 1..=recipe.iterations {
        let mut batch = Vec::with_capacity(recipe.batch_size);
        while batch.len() < recipe.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&train_set[order[cursor]]);
            cursor += 1;
        }
        loss_sum += train_step(model, &mut opt, recipe, &batch)?;
        loss_n += 1;
        out.steps_run = step;
        if step % recipe.val_every == 0 || step == recipe.iterations {
            let acc = evaluate(model, val_set, recipe.batch_size.max(64))?;
            log::info!("step {step}: loss {:.4}, val accuracy {acc:.2}", loss_sum / loss_n as f64);
            out.log.push(LogRow {
                step,
                loss: loss_sum / loss_n as f64,
                val_accuracy: acc,
            });
            (loss_sum, loss_n) = (0.0, 0);
            if acc > out.best_accuracy {
                out.best_accuracy = acc;
                out.best_step = step;
                out.best = model.store.clone();
            }
            if recipe.stop_at.is_some_and(|t| acc >= t) {
                break;
            }
        }
    }
    Ok(out)
}

/// Continues training from the current parameters for `epochs` passes over
/// `train_set`, with fresh optimizer state.
pub fn fine_tune<T: Real>(
    model: &mut Model<T>,
    recipe: &TrainRecipe,
    train_set: &[Sample],
    val_set: &[Sample],
    epochs: usize,
) -> Result<TrainOutcome<T>> {
    let n = fraction_subset(train_set.len(), recipe.fraction, recipe.seed).len();
    let per_epoch = n.div_ceil(recipe.batch_size.max(1));
    let recipe = TrainRecipe {
        iterations: (epochs * per_epoch).max(1),
        ..recipe.clone()
    };
    train(model, &recipe, train_set, val_set)
}

/// One freshly initialized model per fraction; returns
/// `(fraction, best validation accuracy)`.
pub fn fraction_sweep(
    cfg: &PipelineConfig,
    recipe: &TrainRecipe,
    train_set: &[Sample],
    val_set: &[Sample],
    fractions: &[f64],
) -> Result<Vec<(f64, f64)>> {
    fractions
        .iter()
        .map(|&f| {
            let mut model = Model::<f32>::new(cfg)?;
            let r = TrainRecipe {
                fraction: f,
                ..recipe.clone()
            };
            Ok((f, train(&mut model, &r, train_set, val_set)?.best_accuracy))
        })
        .collect()
}

/// Writes the log as CSV with header `step,loss,val_accuracy`.
pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes the fraction table as CSV.
pub fn write_sweep(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "fraction,val_accuracy").map_err(|e| Error::io(path, e))?;
    for (fr, acc) in rows {
        writeln!(f, "{fr},{acc}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::synth_toydata;

    #[test]
    fn subset_rules() {
        assert_eq!(fraction_subset(5, 1.0, 0), vec![0, 1, 2, 3, 4]);
        let s = fraction_subset(100, 0.2, 7);
        assert_eq!(s.len(), 20);
        assert_eq!(s, fraction_subset(100, 0.2, 7));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        let bigger = fraction_subset(100, 0.4, 7);
        assert!(s.iter().all(|i| bigger.contains(i)));
    }

    #[test]
    fn short_run_logs_and_selects() {
        let data = synth_toydata(24, 3, 1).unwrap();
        let cfg = PipelineConfig::parse("None-VGG-None-CTC").unwrap().with_scale(0.125);
        let mut model = Model::<f32>::new(&cfg).unwrap();
        let recipe = TrainRecipe {
            batch_size: 4,
            iterations: 5,
            val_every: 2,
            ..TrainRecipe::default()
        };
        let out = train(&mut model, &recipe, &data[..16], &data[16..]).unwrap();
        let steps: Vec<usize> = out.log.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![2, 4, 5]);
        let best = out.log.iter().map(|r| r.val_accuracy).fold(f64::NEG_INFINITY, f64::max);
        let first = out.log.iter().find(|r| r.val_accuracy == best).unwrap().step;
        assert_eq!(out.best_step, first);
        assert!(out.log.iter().all(|r| r.loss.is_finite()));
    }
}
