mod common;

use common::{assert_close, linear_oracle, rng, uniform, LstmWeights};
use proptest::prelude::*;
use rand::Rng;
use strforge::seqmodel::{lstm_cell, BiLstmLayer, Lstm};
use strforge::tensor::{ParamStore, Session, Tensor};

fn layer(seed: u64, d: usize, h: usize, proj: Option<usize>) -> (ParamStore<f64>, BiLstmLayer) {
    let mut store = ParamStore::new();
    let l = BiLstmLayer::new(&mut store, "bi", d, h, proj).unwrap();
    store.init(seed);
    // Non-zero biases so every term of the recurrence is exercised.
    let mut r = rng(seed ^ 7);
    for id in [l.fwd.b, l.bwd.b] {
        for v in store.get_mut(id).data_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
    (store, l)
}

fn rows(t: &Tensor<f64>, steps: usize, width: usize) -> Vec<Vec<f64>> {
    (0..steps).map(|i| t.data()[i * width..(i + 1) * width].to_vec()).collect()
}

#[test]
fn zero_parameters_give_zero_states() {
    let mut store = ParamStore::<f64>::new();
    let l = BiLstmLayer::new(&mut store, "bi", 3, 4, Some(5)).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let x = uniform(&mut rng(1), &[2, 6, 3], -1.0, 1.0);
    let mut s = Session::new(&store, false);
    let xv = s.g.constant(x);
    let y = l.forward(&mut s, xv).unwrap();
    assert_eq!(s.g.shape(y), &[2, 6, 5]);
    assert!(s.g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_step_equals_two_cells_and_projection() {
    let (store, l) = layer(2, 3, 4, Some(5));
    let x = uniform(&mut rng(2), &[1, 1, 3], -1.0, 1.0);
    let mut s = Session::new(&store, false);
    let xv = s.g.constant(x.clone());
    let y = l.forward(&mut s, xv).unwrap();

    let x2 = s.g.reshape(xv, vec![1, 3]).unwrap();
    let z = s.g.constant(Tensor::zeros(vec![1, 4]));
    let (hf, _) = lstm_cell(&mut s, &l.fwd, x2, z, z).unwrap();
    let (hb, _) = lstm_cell(&mut s, &l.bwd, x2, z, z).unwrap();
    let cat = s.g.concat(&[hf, hb], 1).unwrap();
    let expect = l.proj.as_ref().unwrap().forward(&mut s, cat).unwrap();
    assert_close(s.g.value(y).data(), s.g.value(expect).data(), 1e-12);
}

#[test]
fn bidirectional_output_decomposes_into_two_directions() {
    let (store, l) = layer(3, 3, 4, Some(5));
    let x = uniform(&mut rng(3), &[1, 3, 3], -1.0, 1.0);
    let mut s = Session::new(&store, false);
    let xv = s.g.constant(x.clone());
    let y = l.forward(&mut s, xv).unwrap();

    let seq = rows(&x, 3, 3);
    let f = LstmWeights::from_store(&store, &l.fwd).run(&seq, false);
    let mut rev = seq.clone();
    rev.reverse();
    let mut b = LstmWeights::from_store(&store, &l.bwd).run(&rev, false);
    b.reverse();
    let expect: Vec<f64> = (0..3)
        .flat_map(|t| {
            let cat: Vec<f64> = f[t].iter().chain(&b[t]).copied().collect();
            linear_oracle(&store, l.proj.as_ref().unwrap(), &cat)
        })
        .collect();
    assert_close(s.g.value(y).data(), &expect, 1e-12);
}

#[test]
fn cell_matches_gate_oracle() {
    let mut store = ParamStore::<f64>::new();
    let cell = Lstm::new(&mut store, "cell", 3, 2).unwrap();
    store.init(4);
    let mut r = rng(4);
    let (x, h, c) = (uniform(&mut r, &[1, 3], -1.0, 1.0), uniform(&mut r, &[1, 2], -1.0, 1.0), uniform(&mut r, &[1, 2], -1.0, 1.0));
    let mut s = Session::new(&store, false);
    let (xv, hv, cv) = (s.g.constant(x.clone()), s.g.constant(h.clone()), s.g.constant(c.clone()));
    let (h1, c1) = lstm_cell(&mut s, &cell, xv, hv, cv).unwrap();
    let (eh, ec) = LstmWeights::from_store(&store, &cell).step(x.data(), h.data(), c.data());
    assert_close(s.g.value(h1).data(), &eh, 1e-14);
    assert_close(s.g.value(c1).data(), &ec, 1e-14);
}

#[test]
fn forget_bias_starts_at_one() {
    let mut store = ParamStore::<f64>::new();
    let cell = Lstm::new(&mut store, "cell", 3, 2).unwrap();
    store.init(0);
    assert_eq!(store.get(cell.b).data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn length_is_preserved(seed in any::<u64>(), t in 1usize..9, proj in proptest::option::of(1usize..5)) {
        let (store, l) = layer(seed, 2, 3, proj);
        let x = uniform(&mut rng(seed), &[2, t, 2], -1.0, 1.0);
        let mut s = Session::new(&store, false);
        let xv = s.g.constant(x);
        let y = l.forward(&mut s, xv).unwrap();
        prop_assert_eq!(s.g.shape(y), &[2, t, proj.unwrap_or(6)][..]);
    }

    #[test]
    fn swapping_directions_mirrors_states(seed in any::<u64>(), t in 1usize..=4) {
        let (store, l) = layer(seed, 2, 3, None);
        let x = uniform(&mut rng(seed), &[1, t, 2], -1.0, 1.0);
        let mut rev = x.clone();
        for (i, row) in rows(&x, t, 2).into_iter().rev().enumerate() {
            rev.data_mut()[i * 2..(i + 1) * 2].copy_from_slice(&row);
        }
        let swapped = BiLstmLayer { fwd: l.bwd.clone(), bwd: l.fwd.clone(), proj: None };
        let mut s = Session::new(&store, false);
        let (xv, rv) = (s.g.constant(x), s.g.constant(rev));
        let a = l.states(&mut s, xv).unwrap();
        let b = swapped.states(&mut s, rv).unwrap();
        let (a, b) = (rows(s.g.value(a), t, 6), rows(s.g.value(b), t, 6));
        for i in 0..t {
            let mirrored: Vec<f64> = a[t - 1 - i][3..].iter().chain(&a[t - 1 - i][..3]).copied().collect();
            prop_assert_eq!(&b[i], &mirrored);
        }
    }
}

#[test]
fn empty_sequence_is_rejected() {
    let (store, l) = layer(0, 2, 3, None);
    let mut s = Session::new(&store, false);
    let x = s.g.constant(Tensor::zeros(vec![1, 0, 2]));
    assert!(matches!(l.forward(&mut s, x), Err(strforge::Error::Length(_))));
}
