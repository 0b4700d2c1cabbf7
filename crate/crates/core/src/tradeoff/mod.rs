//! Accuracy versus cost analysis over the 24 combinations.

mod fixture;
mod frontier;
mod marginal;
mod report;

pub use fixture::{ResultsFixture, Row, BUNDLED_CSV};
pub use frontier::{dominates, frontier_chain, pareto_brute_force, pareto_set, Axis, Point};
pub use marginal::{all_marginals, module_marginal, Marginal, StageOption};
pub use report::emit_report;
