//! Grid graph, line parameters and weighted reduced Laplacians.
//!
//! A [`Grid`] holds `N + 1` buses with contiguous ids `0..=N`, one of which is
//! the reference bus. The reference is part of the graph (its lines contribute
//! to the diagonal of every Laplacian) but its row and column are removed from
//! all matrices, and edges incident to it are never learned or scored.
//!
//! Matrix row `k` corresponds to the `k`-th non-reference bus in ascending id
//! order; see [`Grid::non_reference_buses`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub is_reference: bool,
}

/// A line between buses `i` and `j` with per-unit resistance and reactance.
///
/// `length` is optional and only consulted by the line-length form of the
/// triangle certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub i: usize,
    pub j: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

impl Line {
    pub fn new(i: usize, j: usize, r: f64, x: f64) -> Self {
        Line {
            i,
            j,
            r,
            x,
            length: None,
        }
    }

    pub fn with_length(mut self, length: f64) -> Self {
        self.length = Some(length);
        self
    }

    /// Unordered endpoint pair `(min, max)`.
    pub fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }

    pub fn other(&self, bus: usize) -> usize {
        if self.i == bus {
            self.j
        } else {
            self.i
        }
    }

    fn check(&self, context: &str) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidLine {
                context: context.to_string(),
                reason,
            })
        };
        if self.i == self.j {
            return fail("self-loop".into());
        }
        if !self.r.is_finite() || self.r < 0.0 {
            return fail(format!("resistance must be finite and >= 0, got {}", self.r));
        }
        if !self.x.is_finite() || self.x <= 0.0 {
            return fail(format!("reactance must be finite and > 0, got {}", self.x));
        }
        if let Some(l) = self.length {
            if !l.is_finite() || l <= 0.0 {
                return fail(format!("length must be finite and > 0, got {l}"));
            }
        }
        Ok(())
    }

    pub fn weight(&self, kind: WeightKind) -> Result<f64> {
        match kind {
            WeightKind::Susceptance => susceptance(self),
            WeightKind::Conductance => conductance(self),
            WeightKind::InverseResistance => {
                self.check(&self.describe())?;
                if self.r > 0.0 {
                    Ok(1.0 / self.r)
                } else {
                    Err(Error::InvalidLine {
                        context: self.describe(),
                        reason: "inverse-resistance weight needs r > 0".into(),
                    })
                }
            }
            WeightKind::InverseReactance => {
                self.check(&self.describe())?;
                Ok(1.0 / self.x)
            }
        }
    }

    fn describe(&self) -> String {
        format!("({}-{})", self.i, self.j)
    }
}

/// `β = x / (x² + r²)`.
pub fn susceptance(line: &Line) -> Result<f64> {
    line.check(&line.describe())?;
    Ok(line.x / (line.x * line.x + line.r * line.r))
}

/// `g = r / (r² + x²)`.
pub fn conductance(line: &Line) -> Result<f64> {
    line.check(&line.describe())?;
    Ok(line.r / (line.x * line.x + line.r * line.r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Susceptance,
    Conductance,
    InverseResistance,
    InverseReactance,
}

/// Weighted Laplacian with the reference row and column deleted.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedReducedLaplacian {
    pub matrix: DMatrix<f64>,
    pub weight_kind: WeightKind,
    /// Bus id of each row, ascending.
    pub buses: Vec<usize>,
}

impl WeightedReducedLaplacian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn reduced_laplacian(grid: &Grid, weight_kind: WeightKind) -> Result<WeightedReducedLaplacian> {
    let buses = grid.non_reference_buses();
    let n = buses.len();
    let mut m = DMatrix::zeros(n, n);
    for line in &grid.lines {
        let w = line.weight(weight_kind)?;
        let a = grid.matrix_index(line.i);
        let b = grid.matrix_index(line.j);
        if let Some(a) = a {
            m[(a, a)] += w;
        }
        if let Some(b) = b {
            m[(b, b)] += w;
        }
        if let (Some(a), Some(b)) = (a, b) {
            m[(a, b)] -= w;
            m[(b, a)] -= w;
        }
    }
    Ok(WeightedReducedLaplacian {
        matrix: m,
        weight_kind,
        buses,
    })
}

/// On-disk grid layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    pub reference: usize,
    pub buses: Vec<usize>,
    pub lines: Vec<Line>,
}

/// Connected undirected grid with a designated reference bus.
#[derive(Debug, Clone)]
pub struct Grid {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    reference: usize,
    // neighbor -> index into `lines`
    adjacency: Vec<BTreeMap<usize, usize>>,
    // bus id -> matrix row (None for the reference)
    row: Vec<Option<usize>>,
}

impl Grid {
    /// Validates every invariant and reports the first violation.
    pub fn new(reference: usize, bus_ids: &[usize], lines: Vec<Line>) -> Result<Grid> {
        let mut ids = bus_ids.to_vec();
        ids.sort_unstable();
        if ids.is_empty() {
            return Err(Error::Structure("grid has no buses".into()));
        }
        for (expected, &id) in ids.iter().enumerate() {
            if id != expected {
                return Err(Error::Structure(format!(
                    "bus ids must be contiguous 0..{}; missing or duplicate id near {expected}",
                    ids.len() - 1
                )));
            }
        }
        let count = ids.len();
        if reference >= count {
            return Err(Error::Structure(format!(
                "reference bus {reference} is not in the bus list"
            )));
        }

        let mut adjacency = vec![BTreeMap::new(); count];
        for (idx, line) in lines.iter().enumerate() {
            let context = format!("lines[{idx}] ({}-{})", line.i, line.j);
            line.check(&context)?;
            for end in [line.i, line.j] {
                if end >= count {
                    return Err(Error::InvalidLine {
                        context,
                        reason: format!("unknown bus {end}"),
                    });
                }
            }
            if adjacency[line.i].insert(line.j, idx).is_some() {
                return Err(Error::InvalidLine {
                    context,
                    reason: "parallel line: this bus pair already has a line".into(),
                });
            }
            adjacency[line.j].insert(line.i, idx);
        }

        let mut row = vec![None; count];
        let mut next = 0;
        for (id, slot) in row.iter_mut().enumerate() {
            if id != reference {
                *slot = Some(next);
                next += 1;
            }
        }

        let buses = (0..count)
            .map(|id| Bus {
                id,
                is_reference: id == reference,
            })
            .collect();
        let grid = Grid {
            buses,
            lines,
            reference,
            adjacency,
            row,
        };

        let reached = grid.bfs(reference, None, false).iter().filter(|d| d.is_some()).count();
        if reached != count {
            return Err(Error::Structure(format!(
                "grid is disconnected: {reached} of {count} buses reachable from the reference"
            )));
        }
        Ok(grid)
    }

    pub fn from_file_struct(file: GridFile) -> Result<Grid> {
        Grid::new(file.reference, &file.buses, file.lines)
    }

    pub fn from_json_str(text: &str) -> Result<Grid> {
        let file: GridFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("grid JSON: {e}")))?;
        Grid::from_file_struct(file)
    }

    pub fn from_json_file(path: &Path) -> Result<Grid> {
        Grid::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Reads IEEE-style line data with header `from,to,r,x`.
    ///
    /// Bus numbers may be any non-negative integers; they are mapped to
    /// contiguous ids in ascending order. The reference defaults to the
    /// lowest-numbered bus.
    pub fn from_line_csv<R: Read>(reader: R, reference: Option<u64>) -> Result<Grid> {
        #[derive(Deserialize)]
        struct Row {
            from: u64,
            to: u64,
            r: f64,
            x: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut raw = Vec::new();
        for (idx, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| Error::Parse(format!("line data row {}: {e}", idx + 1)))?;
            raw.push(row);
        }
        let labels: BTreeSet<u64> = raw.iter().flat_map(|r| [r.from, r.to]).collect();
        let id_of: BTreeMap<u64, usize> = labels.iter().enumerate().map(|(k, &l)| (l, k)).collect();
        let reference = match reference {
            Some(label) => *id_of
                .get(&label)
                .ok_or_else(|| Error::Structure(format!("reference bus {label} has no lines")))?,
            None => 0,
        };
        let lines = raw
            .iter()
            .map(|r| Line::new(id_of[&r.from], id_of[&r.to], r.r, r.x))
            .collect();
        let ids: Vec<usize> = (0..labels.len()).collect();
        Grid::new(reference, &ids, lines)
    }

    pub fn to_file_struct(&self) -> GridFile {
        GridFile {
            reference: self.reference,
            buses: self.buses.iter().map(|b| b.id).collect(),
            lines: self.lines.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_struct()).expect("grid serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&self.to_file_struct()).expect("grid serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Number of non-reference buses, the matrix dimension `N`.
    pub fn dim(&self) -> usize {
        self.buses.len() - 1
    }

    pub fn non_reference_buses(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&b| b != self.reference).collect()
    }

    pub fn matrix_index(&self, bus: usize) -> Option<usize> {
        self.row.get(bus).copied().flatten()
    }

    pub fn line_between(&self, a: usize, b: usize) -> Option<&Line> {
        self.adjacency.get(a)?.get(&b).map(|&idx| &self.lines[idx])
    }

    pub fn has_line(&self, a: usize, b: usize) -> bool {
        self.line_between(a, b).is_some()
    }

    fn check_bus(&self, bus: usize) -> Result<()> {
        if bus < self.buses.len() {
            Ok(())
        } else {
            Err(Error::UnknownBus(bus))
        }
    }

    pub fn neighbors(&self, bus: usize) -> Result<BTreeSet<usize>> {
        self.check_bus(bus)?;
        Ok(self.adjacency[bus].keys().copied().collect())
    }

    /// Buses at shortest-path distance exactly two.
    pub fn two_hop_neighbors(&self, bus: usize) -> Result<BTreeSet<usize>> {
        self.check_bus(bus)?;
        Ok(self
            .bfs(bus, None, false)
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == Some(2))
            .map(|(b, _)| b)
            .collect())
    }

    pub fn degree(&self, bus: usize) -> usize {
        self.adjacency[bus].len()
    }

    /// Hop distances from `source`, optionally ignoring one line and/or the reference bus.
    fn bfs(&self, source: usize, skip: Option<(usize, usize)>, avoid_reference: bool) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.buses.len()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in self.adjacency[u].keys() {
                if avoid_reference && v == self.reference {
                    continue;
                }
                if let Some((a, b)) = skip {
                    if (u == a && v == b) || (u == b && v == a) {
                        continue;
                    }
                }
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Hop distances from `bus` over the whole grid.
    pub fn distances_from(&self, bus: usize) -> Result<Vec<Option<usize>>> {
        self.check_bus(bus)?;
        Ok(self.bfs(bus, None, false))
    }

    /// All-pairs hop distances between non-reference buses, in matrix-row order,
    /// over the subgraph with the reference removed. Concentration matrices
    /// only see paths that avoid the reference.
    pub fn reduced_distances(&self) -> Vec<Vec<Option<usize>>> {
        self.non_reference_buses()
            .iter()
            .map(|&b| {
                let d = self.bfs(b, None, true);
                self.non_reference_buses().iter().map(|&o| d[o]).collect()
            })
            .collect()
    }

    /// Length of the shortest cycle, `None` for trees.
    pub fn girth(&self) -> Option<usize> {
        self.lines
            .iter()
            .filter_map(|l| self.bfs(l.i, Some((l.i, l.j)), false)[l.j].map(|d| d + 1))
            .min()
    }

    pub fn is_radial(&self) -> bool {
        self.girth().is_none()
    }

    /// Lines that lie on at least one triangle, as `(min, max)` pairs.
    pub fn triangle_edges(&self) -> Vec<(usize, usize)> {
        self.lines
            .iter()
            .filter(|l| {
                self.adjacency[l.i]
                    .keys()
                    .any(|k| *k != l.j && self.adjacency[l.j].contains_key(k))
            })
            .map(Line::key)
            .collect()
    }

    /// Lines between two non-reference buses, as `(min, max)` pairs.
    pub fn non_reference_edges(&self) -> BTreeSet<(usize, usize)> {
        self.lines
            .iter()
            .filter(|l| l.i != self.reference && l.j != self.reference)
            .map(Line::key)
            .collect()
    }

    /// Sum of line weights at `bus`, including any line to the reference.
    pub fn weighted_degree(&self, bus: usize, kind: WeightKind) -> Result<f64> {
        self.check_bus(bus)?;
        self.adjacency[bus]
            .values()
            .map(|&idx| self.lines[idx].weight(kind))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path(n: usize) -> Grid {
        let lines = (0..n - 1).map(|k| Line::new(k, k + 1, 0.0, 1.0)).collect();
        Grid::new(0, &(0..n).collect::<Vec<_>>(), lines).unwrap()
    }

    #[test]
    fn susceptance_values() {
        assert_relative_eq!(susceptance(&Line::new(0, 1, 0.0, 1.0)).unwrap(), 1.0);
        assert_relative_eq!(susceptance(&Line::new(0, 1, 1.0, 1.0)).unwrap(), 0.5);
        assert_relative_eq!(
            susceptance(&Line::new(0, 1, 0.03, 0.04)).unwrap(),
            16.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            susceptance(&Line::new(0, 1, 0.1, 0.0)),
            Err(Error::InvalidLine { .. })
        ));
        assert!(susceptance(&Line::new(0, 1, 0.1, -1.0)).is_err());
    }

    #[test]
    fn conductance_values() {
        assert_relative_eq!(conductance(&Line::new(0, 1, 0.0, 1.0)).unwrap(), 0.0);
        assert_relative_eq!(conductance(&Line::new(0, 1, 1.0, 1.0)).unwrap(), 0.5);
        assert_relative_eq!(
            conductance(&Line::new(0, 1, 0.03, 0.04)).unwrap(),
            12.0,
            epsilon = 1e-12
        );
        assert!(conductance(&Line::new(0, 1, 0.0, 0.0)).is_err());
    }

    #[test]
    fn small_laplacians() {
        let two = path(2);
        let h = reduced_laplacian(&two, WeightKind::Susceptance).unwrap();
        assert_eq!(h.matrix, DMatrix::from_element(1, 1, 1.0));

        let three = path(3);
        let h = reduced_laplacian(&three, WeightKind::Susceptance).unwrap();
        assert_eq!(h.matrix, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
        assert_eq!(h.buses, vec![1, 2]);
    }

    #[test]
    fn inverse_resistance_needs_resistance() {
        let g = path(3);
        assert!(reduced_laplacian(&g, WeightKind::InverseResistance).is_err());
        assert!(reduced_laplacian(&g, WeightKind::InverseReactance).is_ok());
    }

    #[test]
    fn neighbor_queries() {
        let g = path(4);
        assert_eq!(g.two_hop_neighbors(1).unwrap(), BTreeSet::from([3]));
        assert_eq!(g.neighbors(1).unwrap(), BTreeSet::from([0, 2]));
        assert!(matches!(g.neighbors(9), Err(Error::UnknownBus(9))));

        let tri = Grid::new(
            0,
            &[0, 1, 2],
            vec![
                Line::new(0, 1, 0.0, 1.0),
                Line::new(1, 2, 0.0, 1.0),
                Line::new(0, 2, 0.0, 1.0),
            ],
        )
        .unwrap();
        assert!(tri.two_hop_neighbors(0).unwrap().is_empty());
    }

    #[test]
    fn girth_of_small_graphs() {
        assert_eq!(path(5).girth(), None);
        assert!(path(5).is_radial());
        let tri = Grid::new(
            0,
            &[0, 1, 2],
            vec![
                Line::new(0, 1, 0.0, 1.0),
                Line::new(1, 2, 0.0, 1.0),
                Line::new(0, 2, 0.0, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(tri.girth(), Some(3));
        assert_eq!(tri.triangle_edges().len(), 3);
    }

    #[test]
    fn rejects_bad_grids() {
        let err = Grid::new(0, &[0, 1, 2], vec![Line::new(0, 1, 0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err}");

        let err = Grid::new(0, &[0, 1], vec![Line::new(0, 0, 0.0, 1.0)]).unwrap_err();
        assert!(err.to_string().contains("self-loop"));

        let err = Grid::new(0, &[0, 1], vec![Line::new(0, 1, 0.0, 1.0), Line::new(1, 0, 0.0, 2.0)]).unwrap_err();
        assert!(err.to_string().contains("lines[1]"), "{err}");

        assert!(Grid::new(0, &[0, 2], vec![Line::new(0, 2, 0.0, 1.0)]).is_err());
        assert!(Grid::new(5, &[0, 1], vec![Line::new(0, 1, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn json_loader_reports_line_context() {
        let text =
            r#"{"reference":0,"buses":[0,1,2],"lines":[{"i":0,"j":1,"r":0.1,"x":0.2},{"i":1,"j":2,"r":0.1,"x":-0.2}]}"#;
        let err = Grid::from_json_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lines[1] (1-2)") && msg.contains("reactance"), "{msg}");

        let err = Grid::from_json_str("{\"reference\": 0,").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn json_round_trip() {
        let g = path(4);
        let back = Grid::from_json_str(&g.to_json_string()).unwrap();
        assert_eq!(back.lines(), g.lines());
        assert_eq!(back.content_hash(), g.content_hash());
    }

    #[test]
    fn csv_loader_maps_labels() {
        let text = "from,to,r,x\n1,2,0.01,0.05\n2,3,0.02,0.06\n1,3,0.03,0.07\n";
        let g = Grid::from_line_csv(text.as_bytes(), None).unwrap();
        assert_eq!(g.bus_count(), 3);
        assert_eq!(g.reference(), 0);
        assert!(g.has_line(0, 2));
        let g = Grid::from_line_csv(text.as_bytes(), Some(3)).unwrap();
        assert_eq!(g.reference(), 2);
        assert!(Grid::from_line_csv("from,to,r,x\n1,2,abc,0.1\n".as_bytes(), None).is_err());
    }

    #[test]
    fn reduced_distances_avoid_reference() {
        // 1 and 2 both hang off the reference: far apart once it is removed.
        let g = Grid::new(
            0,
            &[0, 1, 2, 3],
            vec![
                Line::new(0, 1, 0.0, 1.0),
                Line::new(0, 2, 0.0, 1.0),
                Line::new(2, 3, 0.0, 1.0),
            ],
        )
        .unwrap();
        let d = g.reduced_distances();
        assert_eq!(d[0][1], None);
        assert_eq!(d[1][2], Some(1));
        assert_eq!(g.distances_from(1).unwrap()[2], Some(2));
    }
}
