use serde::Serialize;

use crate::error::{Error, Result};
use crate::evalkit::{IRREGULAR, REGULAR, UNIFIED};
use crate::pipeline::{Combination, Feat, Pred, Seq, Trans};

use super::fixture::{ResultsFixture, Row};

/// A module choice at one stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StageOption {
    Trans(Trans),
    Feat(Feat),
    Seq(Seq),
    Pred(Pred),
}

impl StageOption {
    pub fn all() -> Vec<StageOption> {
        let mut v: Vec<StageOption> = Trans::ALL.into_iter().map(StageOption::Trans).collect();
        v.extend(Feat::ALL.map(StageOption::Feat));
        v.extend(Seq::ALL.map(StageOption::Seq));
        v.extend(Pred::ALL.map(StageOption::Pred));
        v
    }

    pub fn matches(self, c: &Combination) -> bool {
        match self {
            StageOption::Trans(t) => c.trans == t,
            StageOption::Feat(f) => c.feat == f,
            StageOption::Seq(s) => c.seq == s,
            StageOption::Pred(p) => c.pred == p,
        }
    }

    pub fn stage(self) -> &'static str {
        match self {
            StageOption::Trans(_) => "Trans",
            StageOption::Feat(_) => "Feat",
            StageOption::Seq(_) => "Seq",
            StageOption::Pred(_) => "Pred",
        }
    }

    pub fn module(self) -> &'static str {
        match self {
            StageOption::Trans(t) => t.token(),
            StageOption::Feat(f) => f.token(),
            StageOption::Seq(s) => s.token(),
            StageOption::Pred(p) => p.token(),
        }
    }

    /// `Stage=Module`, e.g. `Pred=CTC`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("expected Stage=Module, got '{s}'"));
        let (stage, module) = s.split_once('=').ok_or_else(bad)?;
        StageOption::all()
            .into_iter()
            .find(|o| o.stage().eq_ignore_ascii_case(stage) && o.module().eq_ignore_ascii_case(module))
            .ok_or_else(bad)
    }
}

/// Mean accuracies over the combinations containing one module.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Marginal {
    pub stage: &'static str,
    pub module: &'static str,
    pub rows: usize,
    pub total: f64,
    /// Dataset-size-weighted regular and irregular aggregates.
    pub regular_weighted: f64,
    pub irregular_weighted: f64,
    /// Plain means over the datasets.
    pub regular_unweighted: f64,
    pub irregular_unweighted: f64,
}

fn aggregate(r: &Row, sets: &[&str], weighted: bool) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for d in sets {
        let (_, n, col) = UNIFIED.iter().find(|u| u.0 == *d).expect("unified dataset");
        let w = if weighted { *n as f64 } else { 1.0 };
        num += w * r.column(col).expect("known column");
        den += w;
    }
    num / den
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn module_marginal(fixture: &ResultsFixture, option: StageOption) -> Result<Marginal> {
    let mut rows = Vec::new();
    for r in &fixture.rows {
        if option.matches(&r.combination()?) {
            rows.push(r);
        }
    }
    Ok(Marginal {
        stage: option.stage(),
        module: option.module(),
        rows: rows.len(),
        total: mean(rows.iter().map(|r| r.total)),
        regular_weighted: mean(rows.iter().map(|r| aggregate(r, &REGULAR, true))),
        irregular_weighted: mean(rows.iter().map(|r| aggregate(r, &IRREGULAR, true))),
        regular_unweighted: mean(rows.iter().map(|r| aggregate(r, &REGULAR, false))),
        irregular_unweighted: mean(rows.iter().map(|r| aggregate(r, &IRREGULAR, false))),
    })
}

pub fn all_marginals(fixture: &ResultsFixture) -> Result<Vec<Marginal>> {
    StageOption::all().into_iter().map(|o| module_marginal(fixture, o)).collect()
}
