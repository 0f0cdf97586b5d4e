//! Named example networks.
//!
//! All presets are 0-based in Rust; comments use the 1-based labels of the
//! original figures.

use serde::{Deserialize, Serialize};

use crate::network::WeightedDag;

/// Star into vertex 4 with `ω14 = 3`, `ω24 = 1.5`, `ω34 = 2`.
pub fn example_gmm() -> WeightedDag {
    WeightedDag::from_triples(4, &[(0, 3, 3.0), (1, 3, 1.5), (2, 3, 2.0)]).expect("valid preset")
}

/// Double triangle `1→2, 1→3, 2→3, 2→4, 3→4`; weights in that order.
pub fn example_one(w: [f64; 5]) -> WeightedDag {
    WeightedDag::from_triples(
        4,
        &[(0, 1, w[0]), (0, 2, w[1]), (1, 2, w[2]), (1, 3, w[3]), (2, 3, w[4])],
    )
    .expect("valid preset")
}

/// Triangle `1→2→3` with the shortcut `1→3`.
pub fn triangle(w12: f64, w23: f64, w13: f64) -> WeightedDag {
    WeightedDag::from_triples(3, &[(0, 1, w12), (1, 2, w23), (0, 2, w13)]).expect("valid preset")
}

/// Edge weights of the ten-vertex network (1-based labels).
///
/// Only `w13 = 4`, `w23 = 2` and `w67 = -1` are tied to published values;
/// the rest are configuration chosen to keep every motif visible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TenNodeWeights {
    pub w12: f64,
    pub w13: f64,
    pub w23: f64,
    pub w24: f64,
    pub w34: f64,
    pub w73: f64,
    pub w78: f64,
    pub w84: f64,
    pub w57: f64,
    pub w67: f64,
    pub w79: f64,
}

impl Default for TenNodeWeights {
    fn default() -> Self {
        TenNodeWeights {
            w12: 1.0,
            w13: 4.0,
            w23: 2.0,
            w24: 1.0,
            w34: 1.5,
            w73: 0.5,
            w78: 1.0,
            w84: 0.8,
            w57: 1.0,
            w67: -1.0,
            w79: 0.7,
        }
    }
}

impl TenNodeWeights {
    /// Weights for the hyperplane tuning walkthrough, where `ω23 = -0.5`.
    pub fn tuning_scenario() -> Self {
        TenNodeWeights { w23: -0.5, ..Self::default() }
    }
}

/// Double triangle (1,2,3,4), diamond (7,3,8,4), Y-structure (5,6,7,9) and
/// the isolated vertex 10.
pub fn ten_node_with(w: TenNodeWeights) -> WeightedDag {
    WeightedDag::from_triples(
        10,
        &[
            (0, 1, w.w12),
            (0, 2, w.w13),
            (1, 2, w.w23),
            (1, 3, w.w24),
            (2, 3, w.w34),
            (6, 2, w.w73),
            (6, 7, w.w78),
            (7, 3, w.w84),
            (4, 6, w.w57),
            (5, 6, w.w67),
            (6, 8, w.w79),
        ],
    )
    .expect("valid preset")
}

pub fn ten_node() -> WeightedDag {
    ten_node_with(TenNodeWeights::default())
}

/// Looks a preset up by name: `gmm`, `ten-node`, `ten-node-tuning`.
pub fn by_name(name: &str) -> Option<WeightedDag> {
    match name {
        "gmm" | "example-gmm" => Some(example_gmm()),
        "ten-node" => Some(ten_node()),
        "ten-node-tuning" => Some(ten_node_with(TenNodeWeights::tuning_scenario())),
        _ => None,
    }
}
