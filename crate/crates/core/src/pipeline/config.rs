//! Pipeline and training-recipe configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trans {
    None,
    Tps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feat {
    Vgg,
    Rcnn,
    ResNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Seq {
    None,
    BiLstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pred {
    Ctc,
    Attn,
}

impl Trans {
    pub const ALL: [Trans; 2] = [Trans::None, Trans::Tps];
    pub fn token(self) -> &'static str {
        match self {
            Trans::None => "None",
            Trans::Tps => "TPS",
        }
    }
}

impl Feat {
    pub const ALL: [Feat; 3] = [Feat::Vgg, Feat::Rcnn, Feat::ResNet];
    pub fn token(self) -> &'static str {
        match self {
            Feat::Vgg => "VGG",
            Feat::Rcnn => "RCNN",
            Feat::ResNet => "ResNet",
        }
    }
}

impl Seq {
    pub const ALL: [Seq; 2] = [Seq::None, Seq::BiLstm];
    pub fn token(self) -> &'static str {
        match self {
            Seq::None => "None",
            Seq::BiLstm => "BiLSTM",
        }
    }
}

impl Pred {
    pub const ALL: [Pred; 2] = [Pred::Ctc, Pred::Attn];
    pub fn token(self) -> &'static str {
        match self {
            Pred::Ctc => "CTC",
            Pred::Attn => "Attn",
        }
    }
}

/// One of the 24 stage combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Combination {
    pub trans: Trans,
    pub feat: Feat,
    pub seq: Seq,
    pub pred: Pred,
}

/// Named published configurations.
pub const PRESETS: [(&str, &str); 7] = [
    ("CRNN", "None-VGG-BiLSTM-CTC"),
    ("RARE", "TPS-VGG-BiLSTM-Attn"),
    ("GRCNN", "None-RCNN-BiLSTM-CTC"),
    ("R2AM", "None-RCNN-None-Attn"),
    ("Rosetta", "None-ResNet-None-CTC"),
    ("STAR-Net", "TPS-ResNet-BiLSTM-CTC"),
    ("FAN", "None-ResNet-BiLSTM-Attn"),
];

impl Combination {
    /// All 24 in results-table order (trans, then feat, seq, pred).
    pub fn all() -> Vec<Combination> {
        let mut v = Vec::with_capacity(24);
        for trans in Trans::ALL {
            for feat in Feat::ALL {
                for seq in Seq::ALL {
                    for pred in Pred::ALL {
                        v.push(Combination { trans, feat, seq, pred });
                    }
                }
            }
        }
        v
    }

    /// 1-based row number in the results table.
    pub fn id(&self) -> usize {
        Self::all().iter().position(|c| c == self).expect("enumerated") + 1
    }

    pub fn from_id(id: usize) -> Option<Combination> {
        Self::all().get(id.checked_sub(1)?).copied()
    }

    /// Parses `Trans-Feat-Seq-Pred` (case-insensitive) or a preset name.
    pub fn parse(s: &str) -> Result<Combination> {
        if let Some((_, full)) = PRESETS.iter().find(|(name, _)| name.eq_ignore_ascii_case(s)) {
            return Self::parse(full);
        }
        let parts: Vec<&str> = s.split('-').collect();
        let bad = |what: &str, tok: &str| Error::Config(format!("unknown {what} module '{tok}' in '{s}'"));
        let [t, f, q, p] = parts.as_slice() else {
            return Err(Error::Config(format!(
                "pipeline '{s}' must have the form Trans-Feat-Seq-Pred or be a preset name"
            )));
        };
        let pick = |tok: &str, opts: &[&str]| opts.iter().position(|o| o.eq_ignore_ascii_case(tok));
        let trans = pick(t, &["None", "TPS"]).ok_or_else(|| bad("transformation", t))?;
        let feat = pick(f, &["VGG", "RCNN", "ResNet"]).ok_or_else(|| bad("feature", f))?;
        let seq = pick(q, &["None", "BiLSTM"]).ok_or_else(|| bad("sequence", q))?;
        let pred = pick(p, &["CTC", "Attn"]).ok_or_else(|| bad("prediction", p))?;
        Ok(Combination {
            trans: Trans::ALL[trans],
            feat: Feat::ALL[feat],
            seq: Seq::ALL[seq],
            pred: Pred::ALL[pred],
        })
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}-{}", self.trans.token(), self.feat.token(), self.seq.token(), self.pred.token())
    }
}

impl FromStr for Combination {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Model configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub combo: Combination,
    /// Channel scale in `(0, 1]`.
    pub scale: f64,
    /// Fiducial count for TPS.
    pub fiducials: usize,
    /// Project the last BiLSTM layer back to the hidden width.
    pub final_proj: bool,
    /// Attention decode limit.
    pub max_len: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(combo: Combination) -> Self {
        PipelineConfig {
            combo,
            scale: 1.0,
            fiducials: 20,
            final_proj: true,
            max_len: 25,
            seed: 0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(Self::new(Combination::parse(s)?))
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Gradient clipping rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClipMode {
    /// Rescale the concatenated gradient to at most the magnitude.
    GlobalNorm,
    /// Rescale each parameter's gradient separately.
    PerParameter,
}

/// Optimization and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
    pub clip: f64,
    pub clip_mode: ClipMode,
    pub batch_size: usize,
    pub iterations: usize,
    pub val_every: usize,
    /// Fraction of the training set used, in `(0, 1]`.
    pub fraction: f64,
    /// Stop after a validation pass reaching this accuracy (%).
    pub stop_at: Option<f64>,
    pub seed: u64,
}

impl Default for TrainRecipe {
    /// Desk-scale defaults: batch 32, 3000 iterations, validation every 200.
    fn default() -> Self {
        TrainRecipe {
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
            clip: 5.0,
            clip_mode: ClipMode::GlobalNorm,
            batch_size: 32,
            iterations: 3000,
            val_every: 200,
            fraction: 1.0,
            stop_at: None,
            seed: 0,
        }
    }
}

impl TrainRecipe {
    /// Full-scale schedule: batch 192, 300K iterations, validation every 2000.
    pub fn full_scale() -> Self {
        TrainRecipe {
            batch_size: 192,
            iterations: 300_000,
            val_every: 2000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho < 1.0
            && self.eps > 0.0
            && self.clip > 0.0
            && self.batch_size > 0
            && self.val_every > 0
            && self.fraction > 0.0
            && self.fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training recipe: {self:?}")))
        }
    }
}
