//! Bundled example datasets.

use crate::graph::{parse_citation_dataset, Graph, GraphError};
use crate::synthetic::{generate, SyntheticSpec};

pub const FIG2_TOY_NAME: &str = "fig2-toy";
pub const FIG2_TOY_CONTENT: &str = include_str!("../fixtures/fig2-toy.content");
pub const FIG2_TOY_CITES: &str = include_str!("../fixtures/fig2-toy.cites");

/// Five vertices `v1, v2, v4, v5, v6` linked `v4–v1–v2–v6–v5`. From `v4`
/// the vertex `v6` is three hops away and `v5` four, so a depth-two
/// breadth-first tree sees neither.
pub fn fig2_toy() -> Graph {
    parse_citation_dataset(FIG2_TOY_CONTENT, FIG2_TOY_NAME, FIG2_TOY_CITES, FIG2_TOY_NAME)
        .expect("bundled fixture parses")
}

/// Resolves the names of bundled datasets: the toy graph plus the seed-0
/// synthetic stand-ins `webkb-synthetic` and `cora-synthetic`.
pub fn builtin(name: &str) -> Option<Result<Graph, GraphError>> {
    match name {
        FIG2_TOY_NAME => Some(Ok(fig2_toy())),
        "webkb-synthetic" => Some(generate(&SyntheticSpec::webkb_like(0))),
        "cora-synthetic" => Some(generate(&SyntheticSpec::cora_like(0))),
        _ => None,
    }
}
