use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::powerflow::{ConcentrationMatrix, ModelKind, VarLabel};

/// Support of a thresholded concentration matrix over its variable labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphicalModel {
    labels: Vec<VarLabel>,
    model: ModelKind,
    /// Pairs of label indices `(a, b)` with `a < b`.
    edges: BTreeSet<(usize, usize)>,
    tau: f64,
}

impl GraphicalModel {
    pub fn labels(&self) -> &[VarLabel] {
        &self.labels
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as label-index pairs.
    pub fn edge_indices(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edges(&self) -> impl Iterator<Item = (VarLabel, VarLabel)> + '_ {
        self.edges.iter().map(|&(a, b)| (self.labels[a], self.labels[b]))
    }

    pub fn has_edge(&self, a: VarLabel, b: VarLabel) -> bool {
        let find = |l: VarLabel| self.labels.iter().position(|&x| x == l);
        match (find(a), find(b)) {
            (Some(x), Some(y)) if x != y => self.edges.contains(&(x.min(y), x.max(y))),
            _ => false,
        }
    }

    pub fn buses(&self) -> Vec<usize> {
        let n = match self.model {
            ModelKind::Dc => self.labels.len(),
            ModelKind::Lc => self.labels.len() / 2,
        };
        self.labels[..n].iter().map(|l| l.bus).collect()
    }

    /// The per-bus graph counting runs on: the model itself for DC input,
    /// its hybrid graph for LC input.
    pub fn bus_graph(&self) -> BusGraph {
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| (self.labels[a].bus, self.labels[b].bus))
            .filter(|(i, j)| i != j);
        BusGraph::from_edges_unchecked(self.buses(), edges)
    }
}

/// Builds the graphical model with an edge wherever `|K(a, b)| ≥ τ₁`.
/// For LC input the vertices are the `2N` `(bus, kind)` labels and same-bus
/// `v`–`θ` edges are kept.
pub fn build_graphical_model(conc: &ConcentrationMatrix, tau1: f64) -> Result<GraphicalModel> {
    if tau1.is_nan() || tau1 <= 0.0 {
        return Err(Error::Precondition(format!("tau1 must be > 0, got {tau1}")));
    }
    let m = conc.matrix();
    let d = m.nrows();
    let mut edges = BTreeSet::new();
    for b in 0..d {
        for a in 0..b {
            if m[(a, b)].abs() >= tau1 {
                edges.insert((a, b));
            }
        }
    }
    Ok(GraphicalModel {
        labels: conc.labels().to_vec(),
        model: conc.model(),
        edges,
        tau: tau1,
    })
}

/// Undirected simple graph on bus ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BusGraph {
    buses: Vec<usize>,
    #[serde(skip)]
    adjacency: BTreeMap<usize, BTreeSet<usize>>,
}

/// Graph with one vertex per bus obtained by merging the `v` and `θ`
/// vertices of an LC graphical model.
pub type HybridGraph = BusGraph;

impl BusGraph {
    /// Rejects self-loops and edges touching buses outside `buses`.
    pub fn new(buses: Vec<usize>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let known: BTreeSet<usize> = buses.iter().copied().collect();
        if known.len() != buses.len() {
            return Err(Error::Structure("duplicate bus ids".into()));
        }
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        for &(i, j) in &edges {
            if i == j {
                return Err(Error::Structure(format!("self-loop at bus {i}")));
            }
            for b in [i, j] {
                if !known.contains(&b) {
                    return Err(Error::UnknownBus(b));
                }
            }
        }
        Ok(BusGraph::from_edges_unchecked(buses, edges))
    }

    fn from_edges_unchecked(buses: Vec<usize>, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency: BTreeMap<usize, BTreeSet<usize>> = buses.iter().map(|&b| (b, BTreeSet::new())).collect();
        for (i, j) in edges {
            adjacency.entry(i).or_default().insert(j);
            adjacency.entry(j).or_default().insert(i);
        }
        BusGraph { buses, adjacency }
    }

    pub fn buses(&self) -> &[usize] {
        &self.buses
    }

    pub fn neighbors(&self, bus: usize) -> &BTreeSet<usize> {
        static EMPTY: BTreeSet<usize> = BTreeSet::new();
        self.adjacency.get(&bus).unwrap_or(&EMPTY)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).contains(&j)
    }

    /// Edges as `(min, max)` pairs.
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        self.adjacency
            .iter()
            .flat_map(|(&i, nb)| nb.iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.buses.first() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(b) = stack.pop() {
            for &n in self.neighbors(b) {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen.len() == self.buses.len()
    }
}

/// Merges the `v_i` and `θ_i` vertices of an LC graphical model. Buses `i ≠ j`
/// are adjacent iff any of the four `(v/θ, v/θ)` pairs between them is.
pub fn hybridize(gm: &GraphicalModel) -> Result<HybridGraph> {
    if gm.model() != ModelKind::Lc {
        return Err(Error::Misuse(
            "hybridize needs a graphical model built from an LC concentration".into(),
        ));
    }
    Ok(gm.bus_graph())
}

/// A DC graphical model viewed as a graph on bus ids.
pub fn as_bus_graph(gm: &GraphicalModel) -> Result<BusGraph> {
    if gm.model() != ModelKind::Dc {
        return Err(Error::Misuse(
            "an LC graphical model must be hybridized before use as a bus graph".into(),
        ));
    }
    Ok(gm.bus_graph())
}
