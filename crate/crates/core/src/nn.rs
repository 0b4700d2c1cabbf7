//! Parameterized layers and instantiation of [`ArchGraph`]s.

use crate::arch::{infer_shapes, ArchGraph, LayerKind, Pair};
use crate::error::{Error, Result};
use crate::seqmodel::BiLstmLayer;
use crate::tensor::{BnUpdate, Init, ParamId, ParamStore, Real, Session, Tensor, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Affine map `x W + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, din: usize, dout: usize, bias: bool) -> Result<Self> {
        let w = store.add(&format!("{name}.weight"), &[din, dout], Init::He { fan_in: din })?;
        let b = if bias {
            Some(store.add(&format!("{name}.bias"), &[dout], Init::Zeros)?)
        } else {
            None
        };
        Ok(Linear { w, b, din, dout })
    }

    /// Accepts `[.., din]` and returns `[.., dout]`.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let shape = s.g.shape(x).to_vec();
        if shape.last() != Some(&self.din) {
            return Err(Error::Dimension {
                op: "linear",
                lhs: shape,
                rhs: vec![self.din, self.dout],
            });
        }
        let rows = shape[..shape.len() - 1].iter().product::<usize>();
        let flat = if shape.len() == 2 { x } else { s.g.reshape(x, vec![rows, self.din])? };
        let w = s.param(self.w);
        let mut y = s.g.matmul(flat, w)?;
        if let Some(b) = self.b {
            let b = s.param(b);
            y = s.g.add(y, b)?;
        }
        if shape.len() == 2 {
            return Ok(y);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.dout;
        s.g.reshape(y, out_shape)
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: Pair,
    pub padding: Pair,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        out: usize,
        kernel: Pair,
        stride: Pair,
        padding: Pair,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = cin * kernel.0 * kernel.1;
        let w = store.add(&format!("{name}.weight"), &[out, cin, kernel.0, kernel.1], Init::He { fan_in })?;
        let b = if bias {
            Some(store.add(&format!("{name}.bias"), &[out], Init::Zeros)?)
        } else {
            None
        };
        Ok(Conv { w, b, stride, padding })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let w = s.param(self.w);
        let b = self.b.map(|b| s.param(b));
        s.g.conv2d(x, w, b, self.stride, self.padding)
    }
}

/// Batch normalization with running moments kept as store buffers.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
    pub count: ParamId,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.add(&format!("{name}.gamma"), &[channels], Init::Ones)?,
            beta: store.add(&format!("{name}.beta"), &[channels], Init::Zeros)?,
            mean: store.add_buffer(&format!("{name}.running_mean"), Tensor::zeros(vec![channels]))?,
            var: store.add_buffer(&format!("{name}.running_var"), Tensor::full(vec![channels], T::one()))?,
            count: store.add_buffer(&format!("{name}.batches"), Tensor::zeros(vec![1]))?,
        })
    }

    /// Batch statistics in training sessions, running moments otherwise.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let gamma = s.param(self.gamma);
        let beta = s.param(self.beta);
        let eps = T::lit(BN_EPS);
        if s.train() {
            let (y, stats) = s.g.batch_norm_train(x, gamma, beta, eps)?;
            s.record_bn(BnUpdate {
                mean: self.mean,
                var: self.var,
                count: self.count,
                stats,
            });
            Ok(y)
        } else {
            let store = s.store();
            if store.get(self.count).data()[0] == T::zero() {
                return Err(Error::State(format!(
                    "batch norm '{}' used in inference mode before any statistics were recorded",
                    store.name(self.gamma).trim_end_matches(".gamma")
                )));
            }
            let (m, v) = (store.get(self.mean).data(), store.get(self.var).data());
            s.g.batch_norm_infer(x, gamma, beta, m, v, eps)
        }
    }
}

/// Gated recurrent conv layer. With `u` the input and `x_0 = relu(BN(w_f*u))`,
/// each iteration computes
/// `x_t = relu(BN(w_f*u) + G ⊙ BN(w_r*x_{t-1}))`,
/// `G = sigmoid(BN(w_gf*u) + BN(w_gr*x_{t-1}))`,
/// with the four conv weights shared across iterations.
#[derive(Clone, Debug)]
pub struct Grcl {
    pub wgf_u: Conv,
    pub wgr_x: Conv,
    pub wf_u: Conv,
    pub wr_x: Conv,
    pub bn_init: BatchNorm,
    /// Per iteration: (gate-u, gate-x, feed, recurrent).
    pub bns: Vec<[BatchNorm; 4]>,
}

impl Grcl {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, cin: usize, out: usize, k: usize, iterations: usize) -> Result<Self> {
        let p = (k / 2, k / 2);
        let one = (1, 1);
        let wgf_u = Conv::new(store, &format!("{name}.wgf_u"), cin, out, one, one, (0, 0), false)?;
        let wgr_x = Conv::new(store, &format!("{name}.wgr_x"), out, out, one, one, (0, 0), false)?;
        let wf_u = Conv::new(store, &format!("{name}.wf_u"), cin, out, (k, k), one, p, false)?;
        let wr_x = Conv::new(store, &format!("{name}.wr_x"), out, out, (k, k), one, p, false)?;
        let bn_init = BatchNorm::new(store, &format!("{name}.bn_init"), out)?;
        let bns = (0..iterations)
            .map(|t| -> Result<[BatchNorm; 4]> {
                Ok([
                    BatchNorm::new(store, &format!("{name}.{t}.bn_gfu"), out)?,
                    BatchNorm::new(store, &format!("{name}.{t}.bn_grx"), out)?,
                    BatchNorm::new(store, &format!("{name}.{t}.bn_fu"), out)?,
                    BatchNorm::new(store, &format!("{name}.{t}.bn_rx"), out)?,
                ])
            })
            .collect::<Result<_>>()?;
        Ok(Grcl {
            wgf_u,
            wgr_x,
            wf_u,
            wr_x,
            bn_init,
            bns,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, u: Var) -> Result<Var> {
        self.forward_with_gate(s, u, None)
    }

    /// `gate` replaces the sigmoid gate with a constant (used to check the
    /// degenerate open-gate case).
    pub fn forward_with_gate<T: Real>(&self, s: &mut Session<T>, u: Var, gate: Option<T>) -> Result<Var> {
        let gu = self.wgf_u.forward(s, u)?;
        let fu = self.wf_u.forward(s, u)?;
        let x0 = self.bn_init.forward(s, fu)?;
        let mut x = s.g.relu(x0);
        for [bn_gfu, bn_grx, bn_fu, bn_rx] in &self.bns {
            let rx = self.wr_x.forward(s, x)?;
            let rx = bn_rx.forward(s, rx)?;
            let g = match gate {
                Some(c) => {
                    let shape = s.g.shape(rx).to_vec();
                    s.g.constant(Tensor::full(shape, c))
                }
                None => {
                    let gx = self.wgr_x.forward(s, x)?;
                    let a = bn_gfu.forward(s, gu)?;
                    let b = bn_grx.forward(s, gx)?;
                    let z = s.g.add(a, b)?;
                    s.g.sigmoid(z)
                }
            };
            let gated = s.g.mul(g, rx)?;
            let f = bn_fu.forward(s, fu)?;
            let z = s.g.add(f, gated)?;
            x = s.g.relu(z);
        }
        Ok(x)
    }
}

/// Two 3×3 conv+BN pairs with an identity or projected shortcut.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub conv1: Conv,
    pub bn1: BatchNorm,
    pub conv2: Conv,
    pub bn2: BatchNorm,
    pub shortcut: Option<(Conv, BatchNorm)>,
}

impl BasicBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, cin: usize, out: usize) -> Result<Self> {
        let same = (1, 1);
        let shortcut = if cin != out {
            Some((
                Conv::new(store, &format!("{name}.proj"), cin, out, (1, 1), same, (0, 0), false)?,
                BatchNorm::new(store, &format!("{name}.proj_bn"), out)?,
            ))
        } else {
            None
        };
        Ok(BasicBlock {
            conv1: Conv::new(store, &format!("{name}.conv1"), cin, out, (3, 3), same, same, false)?,
            bn1: BatchNorm::new(store, &format!("{name}.bn1"), out)?,
            conv2: Conv::new(store, &format!("{name}.conv2"), out, out, (3, 3), same, same, false)?,
            bn2: BatchNorm::new(store, &format!("{name}.bn2"), out)?,
            shortcut,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let y = self.conv1.forward(s, x)?;
        let y = self.bn1.forward(s, y)?;
        let y = s.g.relu(y);
        let y = self.conv2.forward(s, y)?;
        let y = self.bn2.forward(s, y)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => {
                let p = conv.forward(s, x)?;
                bn.forward(s, p)?
            }
            None => x,
        };
        let z = s.g.add(y, skip)?;
        Ok(s.g.relu(z))
    }
}

#[derive(Clone, Debug)]
enum Layer {
    Conv(Conv),
    Bn(BatchNorm),
    Relu,
    Pool { kernel: Pair, stride: Pair, padding: Pair },
    AvgPool,
    Fc(Linear),
    Grcl(Grcl),
    Residual(Vec<BasicBlock>),
    ToSequence,
    BiLstm(BiLstmLayer),
}

/// An [`ArchGraph`] bound to parameters in a store.
#[derive(Clone, Debug)]
pub struct Network {
    pub graph: ArchGraph,
    layers: Vec<Layer>,
}

impl Network {
    /// Registers every parameter under `prefix.<layer>` in graph order.
    pub fn new<T: Real>(graph: ArchGraph, store: &mut ParamStore<T>, prefix: &str) -> Result<Self> {
        let report = infer_shapes(&graph)?;
        let mut layers = Vec::with_capacity(graph.layers.len());
        for (spec, info) in graph.layers.iter().zip(&report.layers) {
            let name = format!("{prefix}.{}", spec.name);
            let din = *info.input.first().unwrap_or(&0);
            let layer = match &spec.kind {
                LayerKind::Conv {
                    out,
                    kernel,
                    stride,
                    padding,
                    bias,
                } => Layer::Conv(Conv::new(store, &name, din, *out, *kernel, *stride, *padding, *bias)?),
                LayerKind::BatchNorm => Layer::Bn(BatchNorm::new(store, &name, din)?),
                LayerKind::Relu => Layer::Relu,
                LayerKind::MaxPool { kernel, stride, padding } => Layer::Pool {
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                },
                LayerKind::AdaptiveAvgPool => Layer::AvgPool,
                LayerKind::Fc { out, bias } => {
                    let din = *info.input.last().unwrap();
                    Layer::Fc(Linear::new(store, &name, din, *out, *bias)?)
                }
                LayerKind::Grcl { out, kernel, iterations } => {
                    Layer::Grcl(Grcl::new(store, &name, din, *out, *kernel, *iterations)?)
                }
                LayerKind::Residual { out, blocks } => {
                    let mut v = Vec::with_capacity(*blocks);
                    for i in 0..*blocks {
                        let cin = if i == 0 { din } else { *out };
                        v.push(BasicBlock::new(store, &format!("{name}.{i}"), cin, *out)?);
                    }
                    Layer::Residual(v)
                }
                LayerKind::ToSequence => Layer::ToSequence,
                LayerKind::BiLstm { hidden, proj } => {
                    let din = *info.input.last().unwrap();
                    Layer::BiLstm(BiLstmLayer::new(store, &name, din, *hidden, *proj)?)
                }
                LayerKind::Attention { .. } => {
                    return Err(Error::Config(format!(
                        "layer {}: attention decoders are instantiated by the prediction stage",
                        spec.name
                    )))
                }
            };
            layers.push(layer);
        }
        Ok(Network { graph, layers })
    }

    /// Runs the layers on a batched input (`[N, ...]`).
    pub fn forward<T: Real>(&self, s: &mut Session<T>, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => c.forward(s, x)?,
                Layer::Bn(bn) => bn.forward(s, x)?,
                Layer::Relu => s.g.relu(x),
                Layer::Pool { kernel, stride, padding } => s.g.maxpool2d(x, *kernel, *stride, *padding)?,
                Layer::AvgPool => s.g.adaptive_avg_pool(x)?,
                Layer::Fc(l) => l.forward(s, x)?,
                Layer::Grcl(gr) => gr.forward(s, x)?,
                Layer::Residual(blocks) => {
                    for b in blocks {
                        x = b.forward(s, x)?;
                    }
                    x
                }
                Layer::ToSequence => to_sequence(s, x)?,
                Layer::BiLstm(l) => l.forward(s, x)?,
            };
        }
        Ok(x)
    }

    /// Appends an already registered linear layer; `graph` must describe
    /// the network including it.
    pub(crate) fn push_linear(&mut self, graph: ArchGraph, layer: Linear) {
        self.graph = graph;
        self.layers.push(Layer::Fc(layer));
    }

    /// The last layer when it is a fully connected one.
    pub fn last_linear(&self) -> Option<&Linear> {
        match self.layers.last() {
            Some(Layer::Fc(l)) => Some(l),
            _ => None,
        }
    }
}

/// `[N, C, 1, W]` feature map to a `[N, W, C]` sequence.
pub fn to_sequence<T: Real>(s: &mut Session<T>, x: Var) -> Result<Var> {
    let shape = s.g.shape(x).to_vec();
    let [n, c, h, w] = <[usize; 4]>::try_from(shape.as_slice())
        .map_err(|_| Error::shape("to_sequence", format!("expected [N,C,1,W], got {shape:?}")))?;
    if h != 1 {
        return Err(Error::shape("to_sequence", format!("feature map height must be 1, got {h}")));
    }
    let y = s.g.reshape(x, vec![n, c, w])?;
    s.g.permute(y, &[0, 2, 1])
}
