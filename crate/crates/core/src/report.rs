//! Estimator output shared by the minimum, mixture and hyperplane methods.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EstimateMethod {
    Min,
    Gmm,
    Qp,
}

pub const FLAG_APPROACHING_INACTIVATION: &str = "APPROACHING_INACTIVATION";
pub const FLAG_NEEDS_MANUAL_TUNING: &str = "NEEDS_MANUAL_TUNING";
pub const FLAG_PRUNED_COMPONENTS: &str = "PRUNED_COMPONENTS";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leftmost_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leftmost_variance: Option<f64>,
    /// Fraction of samples whose max at `j` came through the edge `i → j`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occupancy_fraction: Option<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    #[serde(with = "crate::one_based")]
    pub i: usize,
    #[serde(with = "crate::one_based")]
    pub j: usize,
    pub method: EstimateMethod,
    pub estimate: f64,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    /// Attaches the edge occupancy and raises the inactivation flag below `threshold`.
    pub fn with_occupancy(mut self, fraction: f64, threshold: f64) -> Self {
        self.diagnostics.occupancy_fraction = Some(fraction);
        if fraction < threshold {
            self.diagnostics.flags.push(FLAG_APPROACHING_INACTIVATION.to_string());
        }
        self
    }
}
