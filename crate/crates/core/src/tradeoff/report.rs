use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};

use super::fixture::ResultsFixture;
use super::frontier::{frontier_chain, pareto_set, Axis};
use super::marginal::all_marginals;

fn write_csv<S: serde::Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(serde::Serialize)]
struct ScatterRow<'a> {
    id: usize,
    combination: String,
    x: f64,
    y: f64,
    trans: &'a str,
    feat: &'a str,
    seq: &'a str,
    pred: &'a str,
    frontier: bool,
}

/// Writes frontier chains, marginals and scatter point lists for each axis
/// under `dir`; returns the written paths.
pub fn emit_report(fixture: &ResultsFixture, axes: &[Axis], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut summary = serde_json::Map::new();
    for &axis in axes {
        let points = fixture.points(axis);
        let members: Vec<usize> = pareto_set(&points).iter().map(|p| p.id).collect();
        let chain = frontier_chain(&points);
        let tag = axis.label();
        let p = dir.join(format!("frontier_{tag}.csv"));
        write_csv(&p, &chain)?;
        written.push(p);
        let scatter: Vec<ScatterRow> = fixture
            .rows
            .iter()
            .zip(&points)
            .map(|(r, pt)| ScatterRow {
                id: r.id,
                combination: r.name(),
                x: pt.cost,
                y: pt.accuracy,
                trans: &r.trans,
                feat: &r.feat,
                seq: &r.seq,
                pred: &r.pred,
                frontier: members.contains(&r.id),
            })
            .collect();
        let p = dir.join(format!("scatter_{tag}.csv"));
        write_csv(&p, &scatter)?;
        written.push(p);
        summary.insert(
            tag.to_string(),
            json!({ "pareto": members, "chain": chain.iter().map(|c| c.id).collect::<Vec<_>>() }),
        );
    }
    let marginals = all_marginals(fixture)?;
    let p = dir.join("marginals.csv");
    write_csv(&p, &marginals)?;
    written.push(p);
    let report = json!({ "frontiers": summary, "marginals": marginals });
    let p = dir.join("report.json");
    std::fs::write(&p, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}
