mod common;

use common::{rng, uniform};
use strforge::arch::{
    build_attention, build_bilstm, build_ctc_head, build_localization_net, build_resnet, build_rcnn, build_vgg, flop_count,
    infer_shapes, param_count, ArchGraph, LayerKind, TableOutput,
};
use strforge::nn::{Grcl, Network};
use strforge::pipeline::{Combination, PipelineConfig, StageGraphs};
use strforge::tensor::{ParamStore, Session};

fn feature_builders(scale: f64) -> Vec<ArchGraph> {
    vec![
        build_vgg(scale).unwrap(),
        build_rcnn(scale).unwrap(),
        build_resnet(scale).unwrap(),
        build_localization_net(20, scale).unwrap(),
    ]
}

fn within(value: f64, target: f64, frac: f64) -> bool {
    (value - target).abs() <= frac * target
}

#[test]
fn table_outputs_are_reproduced_or_flagged() {
    for g in feature_builders(1.0) {
        let r = infer_shapes(&g).unwrap();
        let flagged: Vec<&str> = g.layers.iter().filter(|l| l.note.is_some()).map(|l| l.name.as_str()).collect();
        assert_eq!(r.warnings.len(), flagged.len(), "{}: {:?}", g.name, r.warnings);
        for (spec, info) in g.layers.iter().zip(&r.layers) {
            match spec.table {
                Some(TableOutput::Spatial { w, h }) => assert_eq!((info.output[1], info.output[2]), (h, w), "{} {}", g.name, spec.name),
                Some(TableOutput::Vector(n)) => assert_eq!(info.output, vec![n], "{} {}", g.name, spec.name),
                None => {}
            }
        }
    }
    assert_eq!(infer_shapes(&build_rcnn(1.0).unwrap()).unwrap().warnings.len(), 1);
    assert_eq!(infer_shapes(&build_resnet(1.0).unwrap()).unwrap().warnings.len(), 1);
}

#[test]
fn module_sizes_match_published_figures() {
    let p = |g: ArchGraph| param_count(&g).unwrap() as f64;
    assert!(within(p(build_localization_net(20, 1.0).unwrap()), 1.7e6, 0.10));
    assert!(within(p(build_vgg(1.0).unwrap()), 5.6e6, 0.10));
    assert!(within(p(build_rcnn(1.0).unwrap()), 1.8e6, 0.15));
    assert!(within(p(build_resnet(1.0).unwrap()), 44.3e6, 0.10));
    assert!(within(p(build_bilstm(512, 1.0, true).unwrap()), 2.7e6, 0.10));
    assert!(within(p(build_attention(512, 1.0, 25).unwrap()), 0.9e6, 0.20));
    assert_eq!(p(build_ctc_head(256)), 9_509.0);
    assert_eq!(infer_shapes(&build_resnet(1.0).unwrap()).unwrap().trainable_layers(), 29);
    assert_eq!(infer_shapes(&build_vgg(1.0).unwrap()).unwrap().output().unwrap(), [512, 1, 24]);
    assert_eq!(infer_shapes(&build_rcnn(1.0).unwrap()).unwrap().output().unwrap(), [512, 1, 26]);
}

#[test]
fn combination_totals_and_flops() {
    let total = |name: &str| {
        let cfg = PipelineConfig::new(name.parse::<Combination>().unwrap()).with_scale(1.0);
        StageGraphs::new(&cfg).unwrap().params().unwrap() as f64
    };
    assert!(within(total("None-VGG-None-CTC"), 5.6e6, 0.10));
    assert!(within(total("CRNN"), 8.3e6, 0.10));
    assert!(within(total("None-ResNet-None-CTC"), 44.3e6, 0.10));
    assert!(within(total("TPS-ResNet-BiLSTM-Attn"), 49.6e6, 0.10));
    let flops = flop_count(&build_vgg(1.0).unwrap(), &[1, 32, 100]).unwrap() as f64;
    assert!(within(flops, 1.2e9, 0.25), "{flops}");
}

/// Conv-only parameter totals, which scale with the product of channel widths.
fn conv_params(g: &ArchGraph) -> f64 {
    infer_shapes(g)
        .unwrap()
        .layers
        .iter()
        .filter(|l| matches!(l.kind, "conv" | "grcl" | "residual-block"))
        .map(|l| l.params as f64)
        .sum()
}

#[test]
fn channel_scaling_is_quadratic() {
    let full: Vec<f64> = feature_builders(1.0).iter().map(conv_params).collect();
    for (s, tol) in [(0.5, 0.05), (0.25, 0.10)] {
        for (g, f) in feature_builders(s).iter().zip(&full) {
            let ratio = conv_params(g) / f;
            assert!(within(ratio, s * s, tol), "{} at {s}: {ratio}", g.name);
        }
    }
}

#[test]
fn builders_are_deterministic() {
    assert_eq!(feature_builders(1.0), feature_builders(1.0));
    assert_eq!(feature_builders(0.125), feature_builders(0.125));
    assert_eq!(build_bilstm(64, 0.25, false).unwrap(), build_bilstm(64, 0.25, false).unwrap());
}

#[test]
fn counted_parameters_equal_instantiated_ones() {
    let mut graphs = feature_builders(0.125);
    graphs.extend(feature_builders(0.25));
    graphs.push(build_vgg(1.0).unwrap());
    graphs.push(build_localization_net(20, 1.0).unwrap());
    graphs.push(build_rcnn(1.0).unwrap());
    let mut seq = build_bilstm(512, 1.0, true).unwrap();
    seq.input = vec![26, 512];
    graphs.push(seq);
    for g in graphs {
        let mut store = ParamStore::<f32>::new();
        Network::new(g.clone(), &mut store, "net").unwrap();
        assert_eq!(store.num_trainable(), param_count(&g).unwrap(), "{} at {}", g.name, g.scale);
    }
}

#[test]
fn executed_shapes_match_inference() {
    for g in feature_builders(0.125) {
        let mut store = ParamStore::<f64>::new();
        let net = Network::new(g.clone(), &mut store, "net").unwrap();
        store.init(0);
        let x = uniform(&mut rng(0), &[2, 1, 32, 100], -1.0, 1.0);
        let mut s = Session::new(&store, true);
        let xv = s.g.constant(x);
        let y = net.forward(&mut s, xv).unwrap();
        let mut expect = vec![2];
        expect.extend_from_slice(infer_shapes(&g).unwrap().output().unwrap());
        assert_eq!(s.g.shape(y), expect.as_slice(), "{}", g.name);
    }
}

#[test]
fn open_gate_single_iteration_is_a_plain_conv_stack() {
    let mut store = ParamStore::<f64>::new();
    let grcl = Grcl::new(&mut store, "g", 2, 3, 3, 1).unwrap();
    store.init(2);
    let u = uniform(&mut rng(2), &[2, 2, 4, 5], -1.0, 1.0);
    let mut s = Session::new(&store, true);
    let uv = s.g.constant(u);
    let y = grcl.forward_with_gate(&mut s, uv, Some(1.0)).unwrap();

    let fu = grcl.wf_u.forward(&mut s, uv).unwrap();
    let x0 = grcl.bn_init.forward(&mut s, fu).unwrap();
    let x0 = s.g.relu(x0);
    let rx = grcl.wr_x.forward(&mut s, x0).unwrap();
    let rx = grcl.bns[0][3].forward(&mut s, rx).unwrap();
    let f = grcl.bns[0][2].forward(&mut s, fu).unwrap();
    let z = s.g.add(f, rx).unwrap();
    let expect = s.g.relu(z);
    assert_eq!(s.g.value(y).data(), s.g.value(expect).data());
}

#[test]
fn small_flop_cases() {
    let fc = ArchGraph {
        name: "fc".into(),
        input: vec![3],
        scale: 1.0,
        layers: vec![strforge::arch::LayerSpec {
            name: "fc".into(),
            kind: LayerKind::Fc { out: 4, bias: true },
            table: None,
            note: None,
        }],
    };
    assert_eq!(flop_count(&fc, &[3]).unwrap(), 24);
    assert_eq!(param_count(&fc).unwrap(), 16);
}
