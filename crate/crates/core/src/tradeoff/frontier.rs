use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

use super::fixture::ResultsFixture;

/// A combination placed on an accuracy/cost plane.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Point {
    pub id: usize,
    pub name: String,
    pub accuracy: f64,
    pub cost: f64,
}

impl Point {
    pub fn new(id: usize, accuracy: f64, cost: f64) -> Self {
        Point {
            id,
            name: format!("#{id}"),
            accuracy,
            cost,
        }
    }
}

/// Cost axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Axis {
    Time,
    Params,
    Flops,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "time" => Ok(Axis::Time),
            "params" | "memory" => Ok(Axis::Params),
            "flops" => Ok(Axis::Flops),
            _ => Err(Error::Config(format!("unknown axis '{s}' (time, params, flops)"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::Time => "time_ms",
            Axis::Params => "params_m",
            Axis::Flops => "flops_g",
        }
    }
}

impl ResultsFixture {
    /// Total accuracy against the chosen cost.
    pub fn points(&self, axis: Axis) -> Vec<Point> {
        self.rows
            .iter()
            .map(|r| Point {
                id: r.id,
                name: r.name(),
                accuracy: r.total,
                cost: match axis {
                    Axis::Time => r.time_ms,
                    Axis::Params => r.params_m,
                    Axis::Flops => r.flops_g,
                },
            })
            .collect()
    }
}

/// `q` is no worse on both axes and strictly better on one.
pub fn dominates(q: &Point, p: &Point) -> bool {
    q.cost <= p.cost && q.accuracy >= p.accuracy && (q.cost < p.cost || q.accuracy > p.accuracy)
}

/// Quadratic reference: points dominated by no other point.
pub fn pareto_brute_force(points: &[Point]) -> Vec<Point> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect()
}

/// Non-dominated points (maximize accuracy, minimize cost), in input
/// order. Sort-and-sweep over cost groups.
pub fn pareto_set(points: &[Point]) -> Vec<Point> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].cost.total_cmp(&points[b].cost));
    let mut keep = vec![false; points.len()];
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let cost = points[order[i]].cost;
        let mut j = i;
        while j < order.len() && points[order[j]].cost == cost {
            j += 1;
        }
        let group = &order[i..j];
        let top = group.iter().map(|&k| points[k].accuracy).fold(f64::NEG_INFINITY, f64::max);
        if top > best_cheaper {
            for &k in group.iter().filter(|&&k| points[k].accuracy == top) {
                keep[k] = true;
            }
        }
        best_cheaper = best_cheaper.max(top);
        i = j;
    }
    points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p.clone()).collect()
}

/// The Pareto set by ascending cost (ties: higher accuracy, then lower
/// id), keeping one point per identical (cost, accuracy) pair.
pub fn frontier_chain(points: &[Point]) -> Vec<Point> {
    let mut set = pareto_set(points);
    set.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(b.accuracy.total_cmp(&a.accuracy))
            .then(a.id.cmp(&b.id))
    });
    set.dedup_by(|b, a| a.cost.total_cmp(&b.cost) == Ordering::Equal && a.accuracy == b.accuracy);
    set
}
