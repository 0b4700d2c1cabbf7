use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Combination;

/// The bundled results table.
pub const BUNDLED_CSV: &str = include_str!("../../data/results.csv");

/// One combination's published results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: usize,
    pub trans: String,
    pub feat: String,
    pub seq: String,
    pub pred: String,
    pub iiit: f64,
    pub svt: f64,
    pub ic03_860: f64,
    pub ic03_867: f64,
    pub ic13_857: f64,
    pub ic13_1015: f64,
    pub ic15_1811: f64,
    pub ic15_2077: f64,
    pub sp: f64,
    pub ct: f64,
    pub total: f64,
    pub time_ms: f64,
    pub params_m: f64,
    pub flops_g: f64,
}

impl Row {
    pub fn combination(&self) -> Result<Combination> {
        Combination::parse(&format!("{}-{}-{}-{}", self.trans, self.feat, self.seq, self.pred))
    }

    pub fn name(&self) -> String {
        format!("{}-{}-{}-{}", self.trans, self.feat, self.seq, self.pred)
    }

    /// Accuracy of a unified-set column (`iiit`, `ic03_867`, ...).
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "iiit" => self.iiit,
            "svt" => self.svt,
            "ic03_860" => self.ic03_860,
            "ic03_867" => self.ic03_867,
            "ic13_857" => self.ic13_857,
            "ic13_1015" => self.ic13_1015,
            "ic15_1811" => self.ic15_1811,
            "ic15_2077" => self.ic15_2077,
            "sp" => self.sp,
            "ct" => self.ct,
            "total" => self.total,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsFixture {
    pub rows: Vec<Row>,
}

impl ResultsFixture {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CSV).expect("bundled table is valid")
    }

    /// CSV with `#` comment lines. Rows must be ids `1..=24` in order, each
    /// naming the combination with that id.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.len() != 24 {
            return Err(Error::Data(format!("results table has {} rows, expected 24", rows.len())));
        }
        for (i, r) in rows.iter().enumerate() {
            let combo = r.combination()?;
            if r.id != i + 1 || combo.id() != r.id {
                return Err(Error::Data(format!("row {} ({}) is out of order", r.id, r.name())));
            }
            let accs = [r.iiit, r.svt, r.ic03_860, r.ic03_867, r.ic13_857, r.ic13_1015, r.ic15_1811, r.ic15_2077, r.sp, r.ct, r.total];
            if accs.iter().any(|a| !(0.0..=100.0).contains(a)) || r.time_ms <= 0.0 || r.params_m <= 0.0 {
                return Err(Error::Data(format!("row {} has out-of-range values", r.id)));
            }
        }
        Ok(ResultsFixture { rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn row(&self, id: usize) -> Option<&Row> {
        self.rows.get(id.checked_sub(1)?)
    }
}
