//! From a concentration matrix to a set of grid lines.
//!
//! Two learners are provided. Neighborhood counting ([`learn_by_counting`])
//! looks only at the support of the graphical model and is exact on radial
//! grids and grids whose shortest cycle is longer than 6. Thresholding
//! ([`learn_by_thresholding`]) looks at signs and is exact on grids without
//! triangles; [`check_triangle_sufficiency`] certifies individual triangle
//! edges.

mod certificates;
mod counting;
mod graphical;
mod parameters;
mod thresholding;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub use certificates::{
    check_triangle_sufficiency, Certificate, CertificateCheck, EdgeCertificate, SufficiencyReport, EQUALITY_RTOL,
};
pub use counting::{learn_by_counting, learn_by_counting_from_model};
pub use graphical::{as_bus_graph, build_graphical_model, hybridize, BusGraph, GraphicalModel, HybridGraph};
pub use parameters::{learn_parameters, ParameterEstimate, PARAMETER_ZERO_RTOL};
pub use thresholding::{
    edge_scores, largest_gap_threshold, learn_by_thresholding, learn_by_thresholding_standardized, learn_from_scores,
    noise_floor_threshold, relative_threshold, standardized_edge_scores, EXACT_RELATIVE_THRESHOLD, NOISE_FLOOR_ALPHA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Counting,
    Thresholding,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Counting => "counting",
            Algorithm::Thresholding => "thresholding",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "counting" => Ok(Algorithm::Counting),
            "thresholding" => Ok(Algorithm::Thresholding),
            other => Err(Error::Parse(format!(
                "unknown algorithm '{other}' (expected counting or thresholding)"
            ))),
        }
    }
}

/// Learned lines between non-reference buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedTopology {
    pub algorithm: Algorithm,
    /// `τ₁` for counting, `τ₂` for thresholding. `None` when unknown.
    pub threshold: Option<f64>,
    pub buses: Vec<usize>,
    /// `(min, max)` bus pairs.
    pub edges: BTreeSet<(usize, usize)>,
}

impl LearnedTopology {
    pub fn new(buses: Vec<usize>, edges: BTreeSet<(usize, usize)>, algorithm: Algorithm, threshold: f64) -> Self {
        LearnedTopology {
            algorithm,
            threshold: threshold.is_finite().then_some(threshold),
            buses,
            edges,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EdgeErrors {
    pub false_positives: usize,
    pub false_negatives: usize,
    pub total: usize,
}

impl EdgeErrors {
    /// Errors of an empty edge set against `true_edges` lines.
    pub fn all_missed(true_edges: usize) -> Self {
        EdgeErrors {
            false_positives: 0,
            false_negatives: true_edges,
            total: true_edges,
        }
    }
}

/// Counts learned lines absent from the grid and grid lines not learned,
/// ignoring lines to the reference bus.
pub fn edge_errors(learned: &LearnedTopology, truth: &Grid) -> Result<EdgeErrors> {
    let mut expected = truth.non_reference_buses();
    let mut got = learned.buses.clone();
    expected.sort_unstable();
    got.sort_unstable();
    if expected != got {
        return Err(Error::BusSetMismatch(format!(
            "learned topology covers buses {got:?}, grid has non-reference buses {expected:?}"
        )));
    }
    let true_edges = truth.non_reference_edges();
    let false_positives = learned.edges.difference(&true_edges).count();
    let false_negatives = true_edges.difference(&learned.edges).count();
    Ok(EdgeErrors {
        false_positives,
        false_negatives,
        total: false_positives + false_negatives,
    })
}
