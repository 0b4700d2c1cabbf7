//! Four-stage model assembly.

use std::path::Path;

use serde_json::json;

use crate::arch::{self, infer_shapes, ArchGraph, LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::predict::{AttnDecoder, CtcHead, LabelCodec};
use crate::seqmodel::SeqStage;
use crate::tensor::{read_checkpoint_header, ParamStore, Real, Session, Tensor, Var};
use crate::tps::Tps;

use super::config::{Feat, PipelineConfig, Pred, Seq, Trans};

/// Image size fed to the feature extractor (`C, H, W`).
pub const INPUT_SHAPE: [usize; 3] = [1, 32, 100];

#[derive(Clone, Debug)]
pub enum PredStage {
    Ctc(CtcHead),
    Attn(AttnDecoder),
}

/// Architecture graphs of each stage, for reporting.
#[derive(Clone, Debug)]
pub struct StageGraphs {
    pub trans: Option<ArchGraph>,
    pub feat: ArchGraph,
    pub seq: Option<ArchGraph>,
    pub pred: ArchGraph,
}

impl StageGraphs {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        let c = &cfg.combo;
        let trans = match c.trans {
            Trans::None => None,
            Trans::Tps => Some(arch::build_localization_net(cfg.fiducials, cfg.scale)?),
        };
        let mut feat = match c.feat {
            Feat::Vgg => arch::build_vgg(cfg.scale)?,
            Feat::Rcnn => arch::build_rcnn(cfg.scale)?,
            Feat::ResNet => arch::build_resnet(cfg.scale)?,
        };
        feat.layers.push(LayerSpec {
            name: "to_sequence".into(),
            kind: LayerKind::ToSequence,
            table: None,
            note: None,
        });
        let feat_dim = *infer_shapes(&feat)?.output().and_then(|o| o.last()).expect("feature layers");
        let seq = match c.seq {
            Seq::None => None,
            Seq::BiLstm => Some(arch::build_bilstm(feat_dim, cfg.scale, cfg.final_proj)?),
        };
        let seq_dim = match &seq {
            Some(g) => *infer_shapes(g)?.output().and_then(|o| o.last()).expect("bilstm layers"),
            None => feat_dim,
        };
        let pred = match c.pred {
            Pred::Ctc => arch::build_ctc_head(seq_dim),
            Pred::Attn => arch::build_attention(seq_dim, cfg.scale, cfg.max_len)?,
        };
        Ok(StageGraphs { trans, feat, seq, pred })
    }

    fn named(&self) -> Vec<(&'static str, &ArchGraph)> {
        let mut v = Vec::new();
        if let Some(t) = &self.trans {
            v.push(("trans", t));
        }
        v.push(("feat", &self.feat));
        if let Some(s) = &self.seq {
            v.push(("seq", s));
        }
        v.push(("pred", &self.pred));
        v
    }

    pub fn params(&self) -> Result<usize> {
        self.named().iter().map(|(_, g)| arch::param_count(g)).sum()
    }

    /// Multiply-accumulate count of the whole pipeline for one image.
    pub fn flops(&self) -> Result<u64> {
        self.named().iter().map(|(_, g)| Ok(infer_shapes(g)?.flops())).sum()
    }
}

/// Shape, parameter and FLOP report for a configuration, without
/// allocating parameters.
pub fn describe(cfg: &PipelineConfig) -> Result<serde_json::Value> {
    let graphs = StageGraphs::new(cfg)?;
    let mut stages = Vec::new();
    let mut warnings = Vec::new();
    for (stage, g) in graphs.named() {
        let report = infer_shapes(g)?;
        warnings.extend(report.warnings.iter().map(|w| format!("{stage}: {w}")));
        let mut d = arch::describe(g)?;
        d["stage"] = json!(stage);
        stages.push(d);
    }
    let params = graphs.params()?;
    Ok(json!({
        "pipeline": cfg.combo.to_string(),
        "id": cfg.combo.id(),
        "scale": cfg.scale,
        "fiducials": cfg.fiducials,
        "params": params,
        "params_m": params as f64 / 1e6,
        "flops": graphs.flops()?,
        "stages": stages,
        "warnings": warnings,
    }))
}

/// An assembled pipeline with its parameters.
#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    pub cfg: PipelineConfig,
    pub store: ParamStore<T>,
    pub trans: Option<Tps>,
    pub feat: Network,
    pub seq: SeqStage,
    pub pred: PredStage,
}

impl<T: Real> Model<T> {
    /// Registers every stage and draws the initial weights from `cfg.seed`.
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        if !(cfg.scale > 0.0 && cfg.scale <= 1.0) {
            return Err(Error::Config(format!("channel scale must lie in (0, 1], got {}", cfg.scale)));
        }
        let graphs = StageGraphs::new(cfg)?;
        let mut store = ParamStore::new();
        let trans = match cfg.combo.trans {
            Trans::None => None,
            Trans::Tps => Some(Tps::new(&mut store, "trans", cfg.fiducials, cfg.scale, (INPUT_SHAPE[1], INPUT_SHAPE[2]))?),
        };
        let feat = Network::new(graphs.feat.clone(), &mut store, "feat")?;
        let seq = match &graphs.seq {
            Some(g) => SeqStage::BiLstm(Network::new(g.clone(), &mut store, "seq")?),
            None => SeqStage::Identity,
        };
        let pred_in = *infer_shapes(graphs.seq.as_ref().unwrap_or(&graphs.feat))?
            .output()
            .and_then(|o| o.last())
            .expect("layers");
        let pred = match cfg.combo.pred {
            Pred::Ctc => PredStage::Ctc(CtcHead::new(&mut store, "pred", pred_in)?),
            Pred::Attn => {
                let hidden = arch::scaled(256, cfg.scale);
                PredStage::Attn(AttnDecoder::new(&mut store, "pred", pred_in, hidden)?)
            }
        };
        let mut model = Model {
            cfg: cfg.clone(),
            store,
            trans,
            feat,
            seq,
            pred,
        };
        model.he_init(cfg.seed);
        Ok(model)
    }

    /// Redraws all weights: He normal for conv/fc, zero biases, the
    /// documented fixed values elsewhere.
    pub fn he_init(&mut self, seed: u64) {
        self.store.init(seed);
    }

    pub fn num_params(&self) -> usize {
        self.store.num_trainable()
    }

    /// Contextual features `[N, T, D]` for images `[N, 1, 32, 100]`.
    pub fn encode(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let shape = s.g.shape(x);
        if shape.len() != 4 || shape[1..] != INPUT_SHAPE {
            return Err(Error::shape("pipeline", format!("expected [N,1,32,100] images, got {shape:?}")));
        }
        let x = match &self.trans {
            Some(t) => t.forward(s, x)?,
            None => x,
        };
        let v = self.feat.forward(s, x)?;
        self.seq.forward(s, v)
    }

    /// Mean negative log-likelihood of the targets under the predictor.
    pub fn nll_objective(&self, s: &mut Session<T>, x: Var, targets: &[Vec<usize>]) -> Result<Var> {
        let h = self.encode(s, x)?;
        match &self.pred {
            PredStage::Ctc(head) => head.loss(s, h, targets),
            PredStage::Attn(dec) => dec.loss(s, h, targets),
        }
    }

    /// Greedy label indices per image.
    pub fn decode(&self, s: &mut Session<T>, x: Var) -> Result<Vec<Vec<usize>>> {
        let h = self.encode(s, x)?;
        match &self.pred {
            PredStage::Ctc(head) => head.decode(s, h),
            PredStage::Attn(dec) => dec.decode(s, h, self.cfg.max_len),
        }
    }

    /// Writes the parameters with the configuration in the metadata.
    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        self.store.save(path, json!({ "config": self.cfg, "extra": extra }))
    }

    /// Rebuilds the model described by a checkpoint and loads its values.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let header = read_checkpoint_header(path)?;
        let cfg: PipelineConfig = serde_json::from_value(header.meta.get("config").cloned().unwrap_or_default())
            .map_err(|e| Error::Checkpoint(format!("{}: no usable pipeline configuration ({e})", path.display())))?;
        let mut model = Self::new(&cfg)?;
        let meta = model.store.load(path)?;
        Ok((model, meta))
    }

    /// Inference-mode predictions for a flat batch of `n` images.
    pub fn predict(&self, images: &[T], n: usize) -> Result<Vec<String>> {
        let x = Tensor::new(vec![n, INPUT_SHAPE[0], INPUT_SHAPE[1], INPUT_SHAPE[2]], images.to_vec())?;
        let mut s = Session::new(&self.store, false);
        let x = s.g.constant(x);
        let codes = self.decode(&mut s, x)?;
        codes.iter().map(|c| LabelCodec.decode(c)).collect()
    }
}
