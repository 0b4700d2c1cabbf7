use proptest::prelude::*;
use strforge::pipeline::{
    clip_gradients, fraction_subset, fraction_sweep, grad_norm, make_batch, predict_all, predict_parallel, synth_toydata, train,
    train_step, AdaDelta, ClipMode, Combination, Model, PipelineConfig, Sample, TrainRecipe,
};
use strforge::tensor::{Init, ParamStore, Session, Tensor};

fn cfg(name: &str, seed: u64) -> PipelineConfig {
    PipelineConfig::parse(name).unwrap().with_scale(0.125).with_seed(seed)
}

fn batch_loss(model: &Model, batch: &[&Sample]) -> f64 {
    let (x, targets) = make_batch::<f32>(batch).unwrap();
    let mut s = Session::new(&model.store, true);
    let x = s.g.constant(x);
    let loss = model.nll_objective(&mut s, x, &targets).unwrap();
    s.g.value(loss).item() as f64
}

#[test]
fn every_combination_runs_forward_and_backward() {
    let data = synth_toydata(2, 5, 1).unwrap();
    let batch: Vec<&Sample> = data.iter().collect();
    let (x, targets) = make_batch::<f32>(&batch).unwrap();
    let all = Combination::all();
    assert_eq!(all.len(), 24);
    for combo in all {
        let model = Model::<f32>::new(&PipelineConfig::new(combo).with_scale(0.125)).unwrap();
        let mut s = Session::new(&model.store, true);
        let xv = s.g.constant(x.clone());
        let loss = model.nll_objective(&mut s, xv, &targets).unwrap();
        assert!(s.g.value(loss).item().is_finite(), "{combo}");
        s.g.backward(loss).unwrap();
        let grads = s.param_grads();
        assert_eq!(grads.len(), model.store.trainable_ids().count(), "{combo}");
        assert!(grads.iter().flat_map(|(_, g)| g).all(|v| v.is_finite()), "{combo}");
        assert!(grad_norm(&grads) > 0.0, "{combo}");
    }
}

#[test]
fn one_step_lowers_the_loss_on_a_frozen_batch() {
    let data = synth_toydata(8, 5, 2).unwrap();
    let batch: Vec<&Sample> = data.iter().collect();
    let recipe = TrainRecipe::default();
    let seeds = 40;
    let mut decreased = 0;
    for seed in 0..seeds {
        let mut model = Model::<f32>::new(&cfg("None-VGG-None-CTC", seed)).unwrap();
        let mut opt = AdaDelta::new(&model.store, recipe.rho, recipe.eps, recipe.lr);
        let before = train_step(&mut model, &mut opt, &recipe, &batch).unwrap();
        if batch_loss(&model, &batch) < before {
            decreased += 1;
        }
    }
    assert!(decreased * 100 >= 95 * seeds as usize, "{decreased}/{seeds}");
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_toydata(4, 5, 3).unwrap();
    let batch: Vec<&Sample> = data.iter().collect();
    for name in ["CRNN", "TPS-ResNet-BiLSTM-Attn", "GRCNN"] {
        let mut model = Model::<f32>::new(&cfg(name, 3)).unwrap();
        let recipe = TrainRecipe::default();
        let mut opt = AdaDelta::new(&model.store, recipe.rho, recipe.eps, recipe.lr);
        train_step(&mut model, &mut opt, &recipe, &batch).unwrap();
        let path = dir.path().join(format!("{name}.ckpt"));
        model.save(&path, serde_json::json!({ "step": 1 })).unwrap();
        let (loaded, meta) = Model::<f32>::load(&path).unwrap();
        assert_eq!(meta["extra"]["step"], 1);
        assert_eq!(loaded.cfg, model.cfg);

        let (x, _) = make_batch::<f32>(&batch).unwrap();
        let features = |m: &Model| {
            let mut s = Session::new(&m.store, false);
            let xv = s.g.constant(x.clone());
            let h = m.encode(&mut s, xv).unwrap();
            s.g.value(h).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(features(&model), features(&loaded), "{name}");
        let flat: Vec<f32> = data.iter().flat_map(|s| s.image.iter().copied()).collect();
        assert_eq!(model.predict(&flat, 4).unwrap(), loaded.predict(&flat, 4).unwrap());
        let again = dir.path().join(format!("{name}.2.ckpt"));
        loaded.save(&again, serde_json::json!({ "step": 1 })).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn full_fraction_sweep_equals_plain_training() {
    let train_set = synth_toydata(24, 4, 4).unwrap();
    let val = synth_toydata(8, 4, 5).unwrap();
    let recipe = TrainRecipe {
        batch_size: 4,
        iterations: 6,
        val_every: 3,
        seed: 9,
        ..TrainRecipe::default()
    };
    let c = cfg("None-VGG-None-CTC", 9);
    let mut model = Model::<f32>::new(&c).unwrap();
    let plain = train(&mut model, &recipe, &train_set, &val).unwrap();
    let sweep = fraction_sweep(&c, &recipe, &train_set, &val, &[1.0]).unwrap();
    assert_eq!(sweep, vec![(1.0, plain.best_accuracy)]);
    assert_eq!(fraction_subset(24, 1.0, 9), (0..24).collect::<Vec<_>>());

    let mut again = Model::<f32>::new(&c).unwrap();
    let repeat = train(&mut again, &recipe, &train_set, &val).unwrap();
    assert_eq!(plain.log, repeat.log);
    assert_eq!(
        plain.best.to_bytes(serde_json::Value::Null).unwrap(),
        repeat.best.to_bytes(serde_json::Value::Null).unwrap()
    );
}

#[test]
fn he_draws_have_the_expected_variance() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("fc.weight", &[512, 196], Init::He { fan_in: 512 }).unwrap();
    let b = store.add("fc.bias", &[196], Init::Zeros).unwrap();
    store.init(21);
    let v = store.get(w).data();
    assert!(v.len() >= 100_000);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let want = 2.0 / 512.0;
    assert!((var - want).abs() / want < 0.05, "{var} vs {want}");
    assert!(store.get(b).data().iter().all(|&x| x == 0.0));

    let model = Model::<f32>::new(&cfg("CRNN", 4)).unwrap();
    for id in model.store.trainable_ids() {
        if model.store.name(id).ends_with(".bias") && !model.store.name(id).contains("seq.") {
            assert!(model.store.get(id).data().iter().all(|&x| x == 0.0), "{}", model.store.name(id));
        }
    }
}

#[test]
fn initialization_is_deterministic() {
    let a = Model::<f32>::new(&cfg("TPS-ResNet-BiLSTM-Attn", 5)).unwrap();
    let b = Model::<f32>::new(&cfg("TPS-ResNet-BiLSTM-Attn", 5)).unwrap();
    let c = Model::<f32>::new(&cfg("TPS-ResNet-BiLSTM-Attn", 6)).unwrap();
    let bytes = |m: &Model| m.store.to_bytes(serde_json::Value::Null).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
}

#[test]
fn parallel_prediction_preserves_order() {
    let model = Model::<f32>::new(&cfg("None-VGG-None-CTC", 1)).unwrap();
    let mut trained = model.clone();
    let data = synth_toydata(9, 5, 7).unwrap();
    let batch: Vec<&Sample> = data.iter().collect();
    let recipe = TrainRecipe::default();
    let mut opt = AdaDelta::new(&trained.store, recipe.rho, recipe.eps, recipe.lr);
    train_step(&mut trained, &mut opt, &recipe, &batch).unwrap();
    let serial = predict_all(&trained, &data, 4).unwrap();
    assert_eq!(predict_parallel(&trained, &data, 4, 3).unwrap(), serial);
    assert_eq!(predict_parallel(&trained, &data, 2, 16).unwrap(), serial);
}

#[test]
fn rejects_wrong_image_shape_and_bad_names() {
    let model = Model::<f32>::new(&cfg("CRNN", 1)).unwrap();
    let mut s = Session::new(&model.store, true);
    let x = s.g.constant(Tensor::zeros(vec![1, 1, 16, 100]));
    assert!(model.encode(&mut s, x).is_err());
    assert!(PipelineConfig::parse("None-VGG-GRU-CTC").is_err());
    assert!(Model::<f32>::new(&PipelineConfig::parse("CRNN").unwrap().with_scale(0.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn clipped_norm_never_exceeds_the_limit(vals in proptest::collection::vec(-20.0f64..20.0, 1..40), split in 0usize..40) {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", &[1], Init::Zeros).unwrap();
        let b = store.add("b", &[1], Init::Zeros).unwrap();
        let k = split.min(vals.len());
        let mut grads = vec![(a, vals[..k].to_vec()), (b, vals[k..].to_vec())];
        let before = clip_gradients(&mut grads, 5.0, ClipMode::GlobalNorm);
        prop_assert!((before - vals.iter().map(|v| v * v).sum::<f64>().sqrt()).abs() < 1e-9);
        prop_assert!(grad_norm(&grads) <= 5.0 + 1e-9);
        if before <= 5.0 {
            prop_assert_eq!(&grads[0].1, &vals[..k].to_vec());
        }
    }
}
