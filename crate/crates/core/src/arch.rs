//! Declarative layer graphs for every network stage, with shape inference,
//! parameter counting and FLOP estimation.
//!
//! Shapes exclude the batch dimension: `[C, H, W]` for feature maps, `[n]`
//! for vectors and `[T, D]` for sequences. Kernel, stride and padding pairs
//! are stored as `(h, w)`; the tables they come from write spatial sizes as
//! `W×H`.

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};

/// Number of output classes: 36 alphanumerics plus one special token.
pub const NUM_CLASSES: usize = 37;

pub type Pair = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv {
        out: usize,
        kernel: Pair,
        stride: Pair,
        padding: Pair,
        bias: bool,
    },
    BatchNorm,
    Relu,
    MaxPool {
        kernel: Pair,
        stride: Pair,
        padding: Pair,
    },
    AdaptiveAvgPool,
    /// Applied per time step on sequences.
    Fc { out: usize, bias: bool },
    /// Gated recurrent conv layer with weights shared over `iterations`.
    Grcl {
        out: usize,
        kernel: usize,
        iterations: usize,
    },
    /// `blocks` basic residual blocks (two 3×3 conv+BN) at `out` channels.
    Residual { out: usize, blocks: usize },
    /// `[C, 1, W]` feature map to a `[W, C]` sequence.
    ToSequence,
    /// Bidirectional LSTM layer followed by an optional projection.
    BiLstm { hidden: usize, proj: Option<usize> },
    /// Attention LSTM decoder emitting up to `max_len` steps.
    Attention {
        hidden: usize,
        classes: usize,
        max_len: usize,
    },
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::BatchNorm => "bn",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "pool",
            LayerKind::AdaptiveAvgPool => "adaptive-pool",
            LayerKind::Fc { .. } => "fc",
            LayerKind::Grcl { .. } => "grcl",
            LayerKind::Residual { .. } => "residual-block",
            LayerKind::ToSequence => "to-sequence",
            LayerKind::BiLstm { .. } => "bilstm",
            LayerKind::Attention { .. } => "attention",
        }
    }
}

/// Output listed in the source table at scale 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TableOutput {
    /// Spatial size, `W×H`.
    Spatial { w: usize, h: usize },
    Vector(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub table: Option<TableOutput>,
    /// Known disagreement between the table row and its arithmetic.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchGraph {
    pub name: String,
    pub input: Vec<usize>,
    pub scale: f64,
    pub layers: Vec<LayerSpec>,
}

/// Scaled channel count: `max(8, ceil(c * scale))`, or `c` at scale 1.
pub fn scaled(c: usize, scale: f64) -> usize {
    if scale >= 1.0 {
        c
    } else {
        ((c as f64 * scale).ceil() as usize).max(8)
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("channel scale must lie in (0, 1], got {scale}")))
    }
}

/// Converts a table `W×H` pair to `(h, w)`.
const fn wh(w: usize, h: usize) -> Pair {
    (h, w)
}

struct Builder {
    graph: ArchGraph,
}

impl Builder {
    fn new(name: &str, input: Vec<usize>, scale: f64) -> Result<Self> {
        check_scale(scale)?;
        Ok(Builder {
            graph: ArchGraph {
                name: name.to_string(),
                input,
                scale,
                layers: Vec::new(),
            },
        })
    }

    fn c(&self, channels: usize) -> usize {
        scaled(channels, self.graph.scale)
    }

    fn push(&mut self, name: &str, kind: LayerKind, table: Option<TableOutput>) -> &mut Self {
        self.graph.layers.push(LayerSpec {
            name: name.to_string(),
            kind,
            table,
            note: None,
        });
        self
    }

    fn note(&mut self, text: &str) -> &mut Self {
        self.graph.layers.last_mut().expect("layer pushed").note = Some(text.to_string());
        self
    }

    fn conv(&mut self, name: &str, out: usize, k: Pair, s: Pair, p: Pair, bias: bool, w: usize, h: usize) -> &mut Self {
        let out = self.c(out);
        self.push(
            name,
            LayerKind::Conv {
                out,
                kernel: k,
                stride: s,
                padding: p,
                bias,
            },
            Some(TableOutput::Spatial { w, h }),
        )
    }

    fn conv3(&mut self, name: &str, out: usize, bias: bool, w: usize, h: usize) -> &mut Self {
        self.conv(name, out, (3, 3), (1, 1), (1, 1), bias, w, h)
    }

    fn bn(&mut self, name: &str) -> &mut Self {
        self.push(name, LayerKind::BatchNorm, None)
    }

    fn relu(&mut self) -> &mut Self {
        let n = format!("relu{}", self.graph.layers.len());
        self.push(&n, LayerKind::Relu, None)
    }

    fn pool(&mut self, name: &str, k: Pair, s: Pair, p: Pair, w: usize, h: usize) -> &mut Self {
        self.push(
            name,
            LayerKind::MaxPool {
                kernel: k,
                stride: s,
                padding: p,
            },
            Some(TableOutput::Spatial { w, h }),
        )
    }

    fn finish(&mut self) -> ArchGraph {
        self.graph.clone()
    }
}

/// Grayscale `1×32×100` input.
pub fn image_input() -> Vec<usize> {
    vec![1, 32, 100]
}

/// VGG feature extractor: `512×1×24` at scale 1.
pub fn build_vgg(scale: f64) -> Result<ArchGraph> {
    let mut b = Builder::new("VGG", image_input(), scale)?;
    b.conv3("conv1", 64, true, 100, 32).relu();
    b.pool("pool1", wh(2, 2), wh(2, 2), (0, 0), 50, 16);
    b.conv3("conv2", 128, true, 50, 16).relu();
    b.pool("pool2", wh(2, 2), wh(2, 2), (0, 0), 25, 8);
    b.conv3("conv3", 256, true, 25, 8).relu();
    b.conv3("conv4", 256, true, 25, 8).relu();
    b.pool("pool3", wh(1, 2), wh(1, 2), (0, 0), 25, 4);
    b.conv3("conv5", 512, false, 25, 4).bn("bn1").relu();
    b.conv3("conv6", 512, false, 25, 4).bn("bn2").relu();
    b.pool("pool4", wh(1, 2), wh(1, 2), (0, 0), 25, 2);
    b.conv("conv7", 512, wh(2, 2), (1, 1), (0, 0), true, 24, 1).relu();
    Ok(b.finish())
}

/// Gated RCNN feature extractor: `512×1×26` at scale 1.
pub fn build_rcnn(scale: f64) -> Result<ArchGraph> {
    let mut b = Builder::new("RCNN", image_input(), scale)?;
    let grcl = |b: &mut Builder, name: &str, out: usize, w: usize, h: usize| {
        let out = b.c(out);
        b.push(
            name,
            LayerKind::Grcl {
                out,
                kernel: 3,
                iterations: 5,
            },
            Some(TableOutput::Spatial { w, h }),
        );
    };
    b.conv3("conv1", 64, true, 100, 32).relu();
    b.pool("pool1", wh(2, 2), wh(2, 2), (0, 0), 50, 16);
    grcl(&mut b, "grcl1", 64, 50, 16);
    b.pool("pool2", wh(2, 2), wh(2, 2), (0, 0), 25, 8);
    grcl(&mut b, "grcl2", 128, 25, 8);
    b.pool("pool3", wh(2, 2), wh(1, 2), wh(1, 0), 26, 4);
    grcl(&mut b, "grcl3", 256, 26, 4);
    b.pool("pool4", wh(2, 2), wh(1, 2), wh(1, 0), 27, 2);
    b.conv("conv2", 512, wh(2, 2), (1, 1), (0, 0), false, 26, 1)
        .note("table lists k 3×3 with p 0×0, which cannot fit a 27×2 input; k 2×2 reproduces the listed 26×1 output")
        .bn("bn")
        .relu();
    Ok(b.finish())
}

/// Residual feature extractor: `512×1×26` at scale 1, 29 trainable layers.
pub fn build_resnet(scale: f64) -> Result<ArchGraph> {
    let mut b = Builder::new("ResNet", image_input(), scale)?;
    let blocks = |b: &mut Builder, name: &str, out: usize, n: usize, w: usize, h: usize| {
        let out = b.c(out);
        b.push(name, LayerKind::Residual { out, blocks: n }, Some(TableOutput::Spatial { w, h }));
    };
    b.conv3("conv1", 32, false, 100, 32).bn("bn1").relu();
    b.conv3("conv2", 64, false, 100, 32).bn("bn2").relu();
    b.pool("pool1", wh(2, 2), wh(2, 2), (0, 0), 50, 16);
    blocks(&mut b, "block1", 128, 1, 50, 16);
    b.conv3("conv3", 128, false, 50, 16).bn("bn3").relu();
    b.pool("pool2", wh(2, 2), wh(2, 2), (0, 0), 25, 8);
    blocks(&mut b, "block2", 256, 2, 25, 8);
    b.conv3("conv4", 256, false, 25, 8).bn("bn4").relu();
    b.pool("pool3", wh(2, 2), wh(1, 2), wh(1, 0), 26, 4);
    blocks(&mut b, "block3", 512, 5, 26, 4);
    b.note("table lists the second conv of each block at c:256; 512 matches the residual addition and the stated parameter total");
    b.conv3("conv5", 512, false, 26, 4).bn("bn5").relu();
    blocks(&mut b, "block4", 512, 3, 26, 4);
    b.conv("conv6", 512, wh(2, 2), wh(1, 2), wh(1, 0), false, 27, 2).bn("bn6").relu();
    b.conv("conv7", 512, wh(2, 2), (1, 1), (0, 0), false, 26, 1).bn("bn7").relu();
    Ok(b.finish())
}

/// Localization network predicting `2F` fiducial coordinates.
pub fn build_localization_net(f: usize, scale: f64) -> Result<ArchGraph> {
    if f < 4 || !f.is_multiple_of(2) {
        return Err(Error::Config(format!("fiducial count must be even and at least 4, got {f}")));
    }
    let mut b = Builder::new("Localization", image_input(), scale)?;
    b.conv3("conv1", 64, false, 100, 32).bn("bn1").relu();
    b.pool("pool1", wh(2, 2), wh(2, 2), (0, 0), 50, 16);
    b.conv3("conv2", 128, false, 50, 16).bn("bn2").relu();
    b.pool("pool2", wh(2, 2), wh(2, 2), (0, 0), 25, 8);
    b.conv3("conv3", 256, false, 25, 8).bn("bn3").relu();
    b.pool("pool3", wh(2, 2), wh(2, 2), (0, 0), 12, 4);
    b.conv3("conv4", 512, false, 12, 4).bn("bn4").relu();
    let c512 = b.c(512);
    b.push("apool", LayerKind::AdaptiveAvgPool, Some(TableOutput::Vector(c512)));
    let c256 = b.c(256);
    b.push("fc1", LayerKind::Fc { out: c256, bias: true }, Some(TableOutput::Vector(c256)))
        .relu();
    b.push("fc2", LayerKind::Fc { out: 2 * f, bias: true }, Some(TableOutput::Vector(2 * f)));
    Ok(b.finish())
}

/// Two stacked BiLSTM layers, each projected back to `hidden` features.
/// `final_proj = false` leaves the second layer's `2·hidden` states.
pub fn build_bilstm(input_dim: usize, scale: f64, final_proj: bool) -> Result<ArchGraph> {
    let mut b = Builder::new("BiLSTM", vec![0, input_dim], scale)?;
    let h = b.c(256);
    b.push("bilstm1", LayerKind::BiLstm { hidden: h, proj: Some(h) }, None);
    b.push(
        "bilstm2",
        LayerKind::BiLstm {
            hidden: h,
            proj: final_proj.then_some(h),
        },
        None,
    );
    Ok(b.finish())
}

/// Per-step linear classifier over 37 classes.
pub fn build_ctc_head(input_dim: usize) -> ArchGraph {
    ArchGraph {
        name: "CTC".into(),
        input: vec![0, input_dim],
        scale: 1.0,
        layers: vec![LayerSpec {
            name: "generator".into(),
            kind: LayerKind::Fc {
                out: NUM_CLASSES,
                bias: true,
            },
            table: None,
            note: None,
        }],
    }
}

pub fn build_attention(input_dim: usize, scale: f64, max_len: usize) -> Result<ArchGraph> {
    let mut b = Builder::new("Attn", vec![0, input_dim], scale)?;
    let hidden = b.c(256);
    b.push(
        "decoder",
        LayerKind::Attention {
            hidden,
            classes: NUM_CLASSES,
            max_len,
        },
        None,
    );
    Ok(b.finish())
}

/// Shape and cost of one layer after inference.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub kind: &'static str,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub params: usize,
    pub flops: u64,
    pub trainable_layers: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ShapeReport {
    pub layers: Vec<LayerInfo>,
    pub warnings: Vec<String>,
}

impl ShapeReport {
    pub fn output(&self) -> Option<&[usize]> {
        self.layers.last().map(|l| l.output.as_slice())
    }

    pub fn params(&self) -> usize {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn flops(&self) -> u64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    /// Conv and FC layers on the main path (shortcut projections excluded).
    pub fn trainable_layers(&self) -> usize {
        self.layers.iter().map(|l| l.trainable_layers).sum()
    }
}

fn window(name: &str, size: usize, k: usize, s: usize, p: usize, floor: bool) -> Result<usize> {
    let padded = size + 2 * p;
    if k > padded || s == 0 {
        return Err(Error::shape(
            "infer_shapes",
            format!("layer {name}: kernel {k} does not fit padded extent {padded} (stride {s})"),
        ));
    }
    if !floor && !(padded - k).is_multiple_of(s) {
        return Err(Error::shape(
            "infer_shapes",
            format!("layer {name}: ({size} + 2·{p} - {k}) / {s} is not integral"),
        ));
    }
    Ok((padded - k) / s + 1)
}

fn conv_out(name: &str, shape: &[usize], out: usize, k: Pair, s: Pair, p: Pair) -> Result<(Vec<usize>, u64)> {
    let [cin, h, w] = spatial(name, shape)?;
    let ho = window(name, h, k.0, s.0, p.0, false)?;
    let wo = window(name, w, k.1, s.1, p.1, false)?;
    let macs = (out * cin * k.0 * k.1 * ho * wo) as u64;
    Ok((vec![out, ho, wo], 2 * macs))
}

fn spatial(name: &str, shape: &[usize]) -> Result<[usize; 3]> {
    <[usize; 3]>::try_from(shape)
        .map_err(|_| Error::shape("infer_shapes", format!("layer {name}: expected [C,H,W], got {shape:?}")))
}

fn sequence(name: &str, shape: &[usize]) -> Result<[usize; 2]> {
    <[usize; 2]>::try_from(shape)
        .map_err(|_| Error::shape("infer_shapes", format!("layer {name}: expected [T,D], got {shape:?}")))
}

/// Parameters of one LSTM direction with a single bias per gate.
pub fn lstm_params(input: usize, hidden: usize) -> usize {
    4 * hidden * (input + hidden) + 4 * hidden
}

/// Parameters of the attention decoder.
pub fn attention_params(input: usize, hidden: usize, classes: usize) -> usize {
    let proj_h = input * hidden;
    let proj_s = hidden * hidden + hidden;
    let score = hidden;
    let cell = lstm_params(input + classes, hidden);
    let generator = hidden * classes + classes;
    proj_h + proj_s + score + cell + generator
}

/// Parameters of a gated recurrent conv layer (convs + per-iteration BN).
pub fn grcl_params(cin: usize, out: usize, k: usize, iterations: usize) -> usize {
    let convs = cin * out + out * out + cin * out * k * k + out * out * k * k;
    convs + 2 * out * (4 * iterations + 1)
}

/// Per-layer output shapes, parameter counts and FLOPs. Errors name the
/// offending layer; table rows whose listed output differs from the
/// computed one, or that carry a known discrepancy, produce warnings.
pub fn infer_shapes(g: &ArchGraph) -> Result<ShapeReport> {
    let mut shape = g.input.clone();
    let mut layers = Vec::with_capacity(g.layers.len());
    let mut warnings = Vec::new();
    for l in &g.layers {
        let name = l.name.as_str();
        let input = shape.clone();
        let (out, params, flops, trainable) = match &l.kind {
            LayerKind::Conv {
                out,
                kernel,
                stride,
                padding,
                bias,
            } => {
                let (o, f) = conv_out(name, &shape, *out, *kernel, *stride, *padding)?;
                let p = out * shape[0] * kernel.0 * kernel.1 + if *bias { *out } else { 0 };
                (o, p, f, 1)
            }
            LayerKind::BatchNorm => {
                if shape.is_empty() {
                    return Err(Error::shape("infer_shapes", format!("layer {name}: batch norm needs channels")));
                }
                (shape.clone(), 2 * shape[0], 0, 0)
            }
            LayerKind::Relu => (shape.clone(), 0, 0, 0),
            LayerKind::MaxPool { kernel, stride, padding } => {
                let [c, h, w] = spatial(name, &shape)?;
                let ho = window(name, h, kernel.0, stride.0, padding.0, true)?;
                let wo = window(name, w, kernel.1, stride.1, padding.1, true)?;
                (vec![c, ho, wo], 0, 0, 0)
            }
            LayerKind::AdaptiveAvgPool => {
                let [c, _, _] = spatial(name, &shape)?;
                (vec![c], 0, 0, 0)
            }
            LayerKind::Fc { out, bias } => {
                let (steps, din, o) = match shape.as_slice() {
                    [d] => (1, *d, vec![*out]),
                    [t, d] => (*t, *d, vec![*t, *out]),
                    _ => {
                        return Err(Error::shape("infer_shapes", format!("layer {name}: fc input {shape:?}")));
                    }
                };
                let p = din * out + if *bias { *out } else { 0 };
                (o, p, 2 * (steps * din * out) as u64, 1)
            }
            LayerKind::Grcl { out, kernel, iterations } => {
                let [cin, h, w] = spatial(name, &shape)?;
                let pad = kernel / 2;
                window(name, h, *kernel, 1, pad, false)?;
                let hw = (h * w) as u64;
                let (cin, out, k) = (cin as u64, *out as u64, *kernel as u64);
                let feed = cin * out * (1 + k * k);
                let rec = out * out * (1 + k * k) * *iterations as u64;
                let p = grcl_params(cin as usize, out as usize, *kernel, *iterations);
                (vec![out as usize, h, w], p, 2 * hw * (feed + rec), 1)
            }
            LayerKind::Residual { out, blocks } => {
                let [cin, h, w] = spatial(name, &shape)?;
                let (mut p, mut macs, mut c) = (0usize, 0u64, cin);
                for _ in 0..*blocks {
                    p += c * out * 9 + 2 * out + out * out * 9 + 2 * out;
                    macs += ((c * out * 9 + out * out * 9) * h * w) as u64;
                    if c != *out {
                        p += c * out + 2 * out;
                        macs += (c * out * h * w) as u64;
                    }
                    c = *out;
                }
                (vec![*out, h, w], p, 2 * macs, 2 * blocks)
            }
            LayerKind::ToSequence => {
                let [c, h, w] = spatial(name, &shape)?;
                if h != 1 {
                    return Err(Error::shape(
                        "infer_shapes",
                        format!("layer {name}: feature map height must be 1 to form a sequence, got {h}"),
                    ));
                }
                (vec![w, c], 0, 0, 0)
            }
            LayerKind::BiLstm { hidden, proj } => {
                let [t, d] = sequence(name, &shape)?;
                let mut p = 2 * lstm_params(d, *hidden);
                let mut macs = 2 * t * 4 * hidden * (d + hidden);
                let width = match proj {
                    Some(o) => {
                        p += 2 * hidden * o + o;
                        macs += t * 2 * hidden * o;
                        *o
                    }
                    None => 2 * hidden,
                };
                (vec![t, width], p, 2 * macs as u64, 2 + usize::from(proj.is_some()))
            }
            LayerKind::Attention { hidden, classes, max_len } => {
                let [t, d] = sequence(name, &shape)?;
                let p = attention_params(d, *hidden, *classes);
                let per_step = hidden * hidden + t * hidden + 4 * hidden * (d + classes + hidden) + hidden * classes;
                let macs = t * d * hidden + max_len * per_step;
                (vec![*max_len, *classes], p, 2 * macs as u64, 4)
            }
        };
        if let Some(table) = l.table {
            let matches = match table {
                TableOutput::Spatial { w, h } => out.len() == 3 && out[1] == h && out[2] == w,
                TableOutput::Vector(n) => out == [n],
            };
            if !matches {
                warnings.push(format!("layer {name}: table lists {table:?}, computed {out:?}"));
            }
        }
        if let Some(note) = &l.note {
            warnings.push(format!("layer {name}: {note}"));
        }
        layers.push(LayerInfo {
            name: l.name.clone(),
            kind: l.kind.tag(),
            input,
            output: out.clone(),
            params,
            flops,
            trainable_layers: trainable,
        });
        shape = out;
    }
    Ok(ShapeReport { layers, warnings })
}

pub fn param_count(g: &ArchGraph) -> Result<usize> {
    Ok(infer_shapes(g)?.params())
}

/// Approximate FLOPs: two per multiply-accumulate in conv and FC layers
/// (including LSTM gate products); pooling, normalization and activations
/// are ignored.
pub fn flop_count(g: &ArchGraph, input: &[usize]) -> Result<u64> {
    let mut g = g.clone();
    g.input = input.to_vec();
    Ok(infer_shapes(&g)?.flops())
}

/// JSON description of one graph.
pub fn describe(g: &ArchGraph) -> Result<serde_json::Value> {
    let r = infer_shapes(g)?;
    Ok(json!({
        "name": g.name,
        "input": g.input,
        "scale": g.scale,
        "layers": r.layers,
        "params": r.params(),
        "flops": r.flops(),
        "warnings": r.warnings,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shapes(g: &ArchGraph) -> Vec<(String, Vec<usize>)> {
        infer_shapes(g).unwrap().layers.into_iter().map(|l| (l.name, l.output)).collect()
    }

    fn at<'a>(s: &'a [(String, Vec<usize>)], name: &str) -> &'a [usize] {
        &s.iter().find(|(n, _)| n == name).unwrap().1
    }

    #[test]
    fn vgg_table() {
        let g = build_vgg(1.0).unwrap();
        let r = infer_shapes(&g).unwrap();
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        assert_eq!(r.output().unwrap(), [512, 1, 24]);
        assert_eq!(at(&shapes(&g), "pool2"), [128, 8, 25]);
        assert_eq!(r.params(), 5_549_824);
    }

    #[test]
    fn rcnn_table_with_flagged_conv() {
        let g = build_rcnn(1.0).unwrap();
        let r = infer_shapes(&g).unwrap();
        assert_eq!(r.output().unwrap(), [512, 1, 26]);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("conv2"));
        assert_eq!(at(&shapes(&g), "pool3"), [128, 4, 26]);
        assert_eq!(at(&shapes(&g), "pool4"), [256, 2, 27]);
    }

    #[test]
    fn resnet_depth_and_size() {
        let g = build_resnet(1.0).unwrap();
        let r = infer_shapes(&g).unwrap();
        assert_eq!(r.output().unwrap(), [512, 1, 26]);
        assert_eq!(r.trainable_layers(), 29);
        assert_eq!(r.params(), 44_263_904);
        assert_eq!(at(&shapes(&g), "conv6"), [512, 2, 27]);
    }

    #[test]
    fn localization_net() {
        let g = build_localization_net(20, 1.0).unwrap();
        let r = infer_shapes(&g).unwrap();
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        assert_eq!(r.output().unwrap(), [40]);
        assert_eq!(at(&shapes(&g), "bn4"), [512, 4, 12]);
        assert_eq!(r.params(), 1_692_392);
        assert!(build_localization_net(5, 1.0).is_err());
    }

    #[test]
    fn sequence_and_heads() {
        let g = build_bilstm(512, 1.0, true).unwrap();
        assert_eq!(param_count(&g).unwrap(), 2_888_192);
        let mut with_len = g.clone();
        with_len.input = vec![24, 512];
        assert_eq!(infer_shapes(&with_len).unwrap().output().unwrap(), [24, 256]);
        assert_eq!(param_count(&build_ctc_head(256)).unwrap(), 9_509);
        assert_eq!(param_count(&build_attention(512, 1.0, 25).unwrap()).unwrap(), 1_031_973);
    }

    #[test]
    fn counting_edge_cases() {
        let empty = ArchGraph {
            name: "empty".into(),
            input: vec![1, 1, 1],
            scale: 1.0,
            layers: vec![],
        };
        assert_eq!(param_count(&empty).unwrap(), 0);
        let mut one = empty.clone();
        one.layers.push(LayerSpec {
            name: "c".into(),
            kind: LayerKind::Conv {
                out: 1,
                kernel: (1, 1),
                stride: (1, 1),
                padding: (0, 0),
                bias: false,
            },
            table: None,
            note: None,
        });
        assert_eq!(flop_count(&one, &[1, 1, 1]).unwrap(), 2);
        let fc = ArchGraph {
            layers: vec![LayerSpec {
                name: "fc".into(),
                kind: LayerKind::Fc { out: 7, bias: false },
                table: None,
                note: None,
            }],
            ..empty
        };
        assert_eq!(flop_count(&fc, &[5]).unwrap(), 70);
    }

    #[test]
    fn non_integral_conv_names_layer() {
        let g = ArchGraph {
            name: "bad".into(),
            input: vec![1, 5, 5],
            scale: 1.0,
            layers: vec![LayerSpec {
                name: "odd".into(),
                kind: LayerKind::Conv {
                    out: 1,
                    kernel: (2, 2),
                    stride: (2, 2),
                    padding: (0, 0),
                    bias: false,
                },
                table: None,
                note: None,
            }],
        };
        let err = infer_shapes(&g).unwrap_err().to_string();
        assert!(err.contains("odd"), "{err}");
    }

    #[test]
    fn scaling_rule() {
        assert_eq!(scaled(512, 1.0), 512);
        assert_eq!(scaled(512, 0.125), 64);
        assert_eq!(scaled(32, 0.125), 8);
        assert_eq!(scaled(37, 0.5), 19);
        assert!(build_vgg(0.0).is_err());
        assert!(build_vgg(1.5).is_err());
    }
}
