//! Neighborhood counting.
//!
//! Step 1 keeps a graphical-model edge `(i, j)` when two vertices `k, l`,
//! both adjacent to `i` and to `j`, are not adjacent to each other. In a
//! radial grid, or one whose shortest cycle is longer than 6, this holds
//! exactly for true edges between non-leaf buses.
//!
//! Step 2 attaches every remaining bus `k` as a leaf to the unique non-leaf
//! bus `i` for which `k`'s non-leaf neighborhood equals `{i}` plus the
//! non-leaf neighbors of `i`.
//!
//! Neither the girth condition nor radiality can be checked from the
//! graphical model alone; outside that regime the output is unreliable and
//! failures surface as [`Error::Ambiguity`].

use std::collections::BTreeSet;

use super::{Algorithm, BusGraph, GraphicalModel, LearnedTopology};
use crate::error::{Error, Result};

/// Runs both counting steps on a DC graphical model or a hybrid graph.
pub fn learn_by_counting(graph: &BusGraph) -> Result<LearnedTopology> {
    learn_by_counting_with_tau(graph, f64::NAN)
}

/// Builds the bus graph (hybridizing LC input) and counts on it.
pub fn learn_by_counting_from_model(gm: &GraphicalModel) -> Result<LearnedTopology> {
    learn_by_counting_with_tau(&gm.bus_graph(), gm.tau())
}

fn learn_by_counting_with_tau(graph: &BusGraph, tau: f64) -> Result<LearnedTopology> {
    if !graph.is_connected() {
        return Err(Error::Structure("graphical model is not connected".into()));
    }

    let mut accepted: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, j) in graph.edges() {
        let common: Vec<usize> = graph.neighbors(i).intersection(graph.neighbors(j)).copied().collect();
        let separated = common
            .iter()
            .enumerate()
            .any(|(a, &k)| common[a + 1..].iter().any(|&l| !graph.has_edge(k, l)));
        if separated {
            accepted.insert((i, j));
        }
    }

    let non_leaf: BTreeSet<usize> = accepted.iter().flat_map(|&(i, j)| [i, j]).collect();
    if non_leaf.len() < 3 {
        return Err(Error::TooSmall(format!(
            "found {} non-leaf buses; counting needs at least 3",
            non_leaf.len()
        )));
    }
    let accepted_neighbors = |i: usize| -> BTreeSet<usize> {
        accepted
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    };

    let mut edges = accepted.clone();
    for &k in graph.buses() {
        if non_leaf.contains(&k) {
            continue;
        }
        let nk: BTreeSet<usize> = graph.neighbors(k).intersection(&non_leaf).copied().collect();
        let candidates: Vec<usize> = nk
            .iter()
            .copied()
            .filter(|&i| {
                let mut expected = accepted_neighbors(i);
                expected.insert(i);
                expected == nk
            })
            .collect();
        match candidates.as_slice() {
            [parent] => {
                edges.insert((k.min(*parent), k.max(*parent)));
            }
            [] => {
                return Err(Error::Ambiguity {
                    bus: k,
                    detail: format!("no non-leaf bus matches its non-leaf neighborhood {nk:?}"),
                })
            }
            many => {
                return Err(Error::Ambiguity {
                    bus: k,
                    detail: format!("several candidate parents {many:?}"),
                })
            }
        }
    }

    Ok(LearnedTopology::new(
        graph.buses().to_vec(),
        edges,
        Algorithm::Counting,
        tau,
    ))
}
