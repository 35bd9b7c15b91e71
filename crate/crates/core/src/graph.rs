//! Immutable labeled network stored as compressed sparse rows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Node label on the binary path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryLabel {
    A,
    B,
}

impl BinaryLabel {
    pub fn flipped(self) -> Self {
        match self {
            BinaryLabel::A => BinaryLabel::B,
            BinaryLabel::B => BinaryLabel::A,
        }
    }

    pub fn is_a(self) -> bool {
        self == BinaryLabel::A
    }

    pub fn is_b(self) -> bool {
        self == BinaryLabel::B
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinaryLabel::A => "a",
            BinaryLabel::B => "b",
        })
    }
}

impl FromStr for BinaryLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "a" | "A" => Ok(BinaryLabel::A),
            "b" | "B" => Ok(BinaryLabel::B),
            other => Err(format!("expected label `a` or `b`, got `{other}`")),
        }
    }
}

/// How a per-cell statistic counts edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellMode {
    /// Egos and alters both restricted to the cell; denominators count
    /// only within-cell weight.
    WithinCell,
    /// Egos restricted to the cell; every edge of an ego counts.
    EgoToAll,
}

impl fmt::Display for CellMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellMode::WithinCell => "within",
            CellMode::EgoToAll => "ego",
        })
    }
}

impl FromStr for CellMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "within" | "within_cell" | "within-cell" => Ok(CellMode::WithinCell),
            "ego" | "ego_to_all" | "ego-to-all" => Ok(CellMode::EgoToAll),
            other => Err(format!("expected cell mode `within` or `ego`, got `{other}`")),
        }
    }
}

/// A named cell together with the edge-counting mode used for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSelection {
    pub id: String,
    pub mode: CellMode,
}

impl CellSelection {
    pub fn new(id: impl Into<String>, mode: CellMode) -> Self {
        Self { id: id.into(), mode }
    }
}

/// Degree and neighborhood of a single node.
#[derive(Debug, Clone, Copy)]
pub struct NodeStats<'g> {
    pub degree: f64,
    pub neighborhood: &'g [u32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
    unit_weights: bool,
    binary: Option<Vec<BinaryLabel>>,
    continuous: Option<Vec<f64>>,
    cells: BTreeMap<String, Vec<usize>>,
}

impl LabeledGraph {
    /// Builds a graph from weighted undirected edges. Each unordered pair may
    /// appear once; zero-weight edges are accepted and treated as absent.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if node_count == 0 {
            return Err(Error::EmptyGraph);
        }
        if node_count > u32::MAX as usize {
            return Err(Error::TooLarge {
                what: "LabeledGraph",
                max: u32::MAX as usize,
                got: node_count,
            });
        }
        let mut pairs: Vec<(u32, u32, f64)> = Vec::new();
        for (u, v, w) in edges {
            for node in [u, v] {
                if node >= node_count {
                    return Err(Error::NodeOutOfRange { node, node_count });
                }
            }
            if u == v {
                return Err(Error::SelfLoop { node: u });
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidWeight { u, v, weight: w });
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            pairs.push((a as u32, b as u32, w));
        }
        pairs.sort_unstable_by_key(|&(a, b, _)| (a, b));
        if let Some(dup) = pairs.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::DuplicateEdge {
                u: dup[0].0 as usize,
                v: dup[0].1 as usize,
            });
        }
        pairs.retain(|&(_, _, w)| w > 0.0);
        Ok(Self::from_sorted_pairs(node_count, &pairs))
    }

    /// Unit-weight convenience wrapper over [`LabeledGraph::from_edges`].
    pub fn from_unit_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::from_edges(node_count, edges.into_iter().map(|(u, v)| (u, v, 1.0)))
    }

    /// Builds a unit-weight graph from upper-triangular rows: `rows[i]` holds
    /// strictly increasing neighbors `j > i`. Generators guarantee this shape,
    /// so it is only debug-checked.
    pub(crate) fn from_upper_rows(rows: &[Vec<u32>]) -> Self {
        let n = rows.len();
        let mut counts = vec![0usize; n];
        for (i, row) in rows.iter().enumerate() {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            debug_assert!(row.iter().all(|&j| j as usize > i && (j as usize) < n));
            counts[i] += row.len();
            for &j in row {
                counts[j as usize] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let m2 = *offsets.last().unwrap();
        let mut targets = vec![0u32; m2];
        let mut cursor = offsets[..n].to_vec();
        // Lower entries (j < i) are pushed in increasing j, then upper ones,
        // which keeps each row sorted.
        for (i, row) in rows.iter().enumerate() {
            for &j in row {
                let j = j as usize;
                targets[cursor[j]] = i as u32;
                cursor[j] += 1;
            }
        }
        for (i, row) in rows.iter().enumerate() {
            let start = cursor[i];
            targets[start..start + row.len()].copy_from_slice(row);
        }
        let degrees = counts.iter().map(|&c| c as f64).collect();
        Self {
            offsets,
            targets,
            weights: vec![1.0; m2],
            degrees,
            unit_weights: true,
            binary: None,
            continuous: None,
            cells: BTreeMap::new(),
        }
    }

    fn from_sorted_pairs(n: usize, pairs: &[(u32, u32, f64)]) -> Self {
        let mut counts = vec![0usize; n];
        for &(a, b, _) in pairs {
            counts[a as usize] += 1;
            counts[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let m2 = *offsets.last().unwrap();
        let mut targets = vec![0u32; m2];
        let mut weights = vec![0.0; m2];
        let mut cursor = offsets[..n].to_vec();
        // Two passes over the (a, b)-sorted pairs: every row receives its
        // lower partners first, then its upper ones, so rows come out sorted.
        for &(a, b, w) in pairs {
            let b = b as usize;
            targets[cursor[b]] = a;
            weights[cursor[b]] = w;
            cursor[b] += 1;
        }
        for &(a, b, w) in pairs {
            let a = a as usize;
            targets[cursor[a]] = b;
            weights[cursor[a]] = w;
            cursor[a] += 1;
        }
        let degrees: Vec<f64> = (0..n)
            .map(|i| weights[offsets[i]..offsets[i + 1]].iter().sum())
            .collect();
        let unit_weights = weights.iter().all(|&w| w == 1.0);
        Self {
            offsets,
            targets,
            weights,
            degrees,
            unit_weights,
            binary: None,
            continuous: None,
            cells: BTreeMap::new(),
        }
    }

    pub fn with_binary_labels(mut self, labels: Vec<BinaryLabel>) -> Result<Self> {
        if labels.len() != self.node_count() {
            return Err(Error::LabelLength {
                kind: "binary",
                got: labels.len(),
                expected: self.node_count(),
            });
        }
        self.binary = Some(labels);
        Ok(self)
    }

    pub fn with_continuous_labels(mut self, ranks: Vec<f64>) -> Result<Self> {
        if ranks.len() != self.node_count() {
            return Err(Error::LabelLength {
                kind: "continuous",
                got: ranks.len(),
                expected: self.node_count(),
            });
        }
        validate_ranks(&ranks)?;
        self.continuous = Some(ranks);
        Ok(self)
    }

    /// Registers a cell. Members are sorted and deduplicated; cells may
    /// overlap.
    pub fn with_cell(mut self, id: impl Into<String>, mut members: Vec<usize>) -> Result<Self> {
        let node_count = self.node_count();
        if let Some(&node) = members.iter().find(|&&m| m >= node_count) {
            return Err(Error::NodeOutOfRange { node, node_count });
        }
        members.sort_unstable();
        members.dedup();
        self.cells.insert(id.into(), members);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.degrees.len()
    }

    /// Number of undirected edges with positive weight.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// Weighted degree `d_i = Σ_j e_ij`. Panics if `i` is out of range.
    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_degree(&self) -> f64 {
        self.degrees.iter().sum::<f64>() / self.node_count() as f64
    }

    pub fn node_stats(&self, i: usize) -> Result<NodeStats<'_>> {
        self.check_node(i)?;
        Ok(NodeStats {
            degree: self.degrees[i],
            neighborhood: self.neighbor_ids(i),
        })
    }

    pub fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.node_count() {
            return Err(Error::NodeOutOfRange {
                node: i,
                node_count: self.node_count(),
            });
        }
        Ok(())
    }

    /// Sorted neighbor ids of `i`.
    pub fn neighbor_ids(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn neighbor_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `(j, e_ij)` for every neighbor of `i`, in increasing `j`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.neighbor_ids(i)
            .iter()
            .zip(self.neighbor_weights(i))
            .map(|(&j, &w)| (j as usize, w))
    }

    /// `e_ij`, or 0 when the pair is not an edge.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let ids = self.neighbor_ids(i);
        match ids.binary_search(&(j as u32)) {
            Ok(pos) => self.neighbor_weights(i)[pos],
            Err(_) => 0.0,
        }
    }

    /// Undirected edges as `(u, v, weight)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .filter(move |&(v, _)| v > u)
                .map(move |(v, w)| (u, v, w))
        })
    }

    pub fn is_unit_weighted(&self) -> bool {
        self.unit_weights
    }

    pub fn binary_labels(&self) -> Option<&[BinaryLabel]> {
        self.binary.as_deref()
    }

    pub fn require_binary(&self) -> Result<&[BinaryLabel]> {
        self.binary_labels().ok_or(Error::MissingLabels("binary"))
    }

    pub fn continuous_labels(&self) -> Option<&[f64]> {
        self.continuous.as_deref()
    }

    pub fn require_continuous(&self) -> Result<&[f64]> {
        self.continuous_labels().ok_or(Error::MissingLabels("continuous"))
    }

    pub fn cells(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.cells.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn cell(&self, id: &str) -> Result<&[usize]> {
        self.cells
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCell(id.to_owned()))
    }

    /// View restricted to a cell under the given edge-counting mode.
    pub fn cell_view(&self, id: &str, mode: CellMode) -> Result<CellView<'_>> {
        let members = self.cell(id)?.to_vec();
        let mask = match mode {
            CellMode::EgoToAll => None,
            CellMode::WithinCell => {
                let mut mask = vec![false; self.node_count()];
                for &m in &members {
                    mask[m] = true;
                }
                Some(mask)
            }
        };
        Ok(CellView {
            graph: self,
            cell: Some(id.to_owned()),
            members,
            mask,
        })
    }

    /// The whole node set as a view; equivalent to the global statistics.
    pub fn full_view(&self) -> CellView<'_> {
        CellView {
            graph: self,
            cell: None,
            members: (0..self.node_count()).collect(),
            mask: None,
        }
    }

    /// Resolves an optional cell selection to a view.
    pub fn view(&self, selection: Option<&CellSelection>) -> Result<CellView<'_>> {
        match selection {
            None => Ok(self.full_view()),
            Some(sel) => self.cell_view(&sel.id, sel.mode),
        }
    }
}

pub(crate) fn validate_ranks(ranks: &[f64]) -> Result<()> {
    match ranks.iter().position(|&x| !(0.0..=1.0).contains(&x) || x.is_nan()) {
        Some(node) => Err(Error::RankOutOfRange {
            node,
            value: ranks[node],
        }),
        None => Ok(()),
    }
}

/// Node subset plus edge filter for per-cell statistics.
///
/// `members` are the egos. In within-cell mode, neighbors outside the cell
/// are invisible to both numerators and denominators.
#[derive(Debug, Clone)]
pub struct CellView<'g> {
    graph: &'g LabeledGraph,
    cell: Option<String>,
    members: Vec<usize>,
    mask: Option<Vec<bool>>,
}

impl<'g> CellView<'g> {
    pub fn graph(&self) -> &'g LabeledGraph {
        self.graph
    }

    pub fn cell_id(&self) -> Option<&str> {
        self.cell.as_deref()
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn is_within_cell(&self) -> bool {
        self.mask.is_some()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let mask = self.mask.as_deref();
        self.graph.neighbors(i).filter(move |&(j, _)| mask.is_none_or(|m| m[j]))
    }

    /// Degree of `i` as seen through the view's edge filter.
    pub fn degree(&self, i: usize) -> f64 {
        match self.mask {
            None => self.graph.degree(i),
            Some(_) => self.neighbors(i).map(|(_, w)| w).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Worked example layout: A1 = 0, A2 = 1, B1 = 2, B2 = 3.
    fn example_graph() -> LabeledGraph {
        LabeledGraph::from_unit_edges(4, [(0, 2), (0, 3), (0, 1), (1, 3)]).unwrap()
    }

    #[test]
    fn example_degrees() {
        let g = example_graph();
        assert_eq!(g.degree(0), 3.0);
        assert_eq!(g.degree(1), 2.0);
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.neighbor_ids(0), &[1, 2, 3]);
    }

    #[test]
    fn single_isolated_node() {
        let g = LabeledGraph::from_unit_edges(1, []).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.degree(0), 0.0);
    }

    #[test]
    fn rejects_malformed_edges() {
        assert!(matches!(
            LabeledGraph::from_unit_edges(3, [(2, 2)]),
            Err(Error::SelfLoop { node: 2 })
        ));
        assert!(matches!(
            LabeledGraph::from_unit_edges(3, [(0, 3)]),
            Err(Error::NodeOutOfRange { node: 3, .. })
        ));
        assert!(matches!(
            LabeledGraph::from_unit_edges(3, [(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge { u: 0, v: 1 })
        ));
        assert!(matches!(
            LabeledGraph::from_edges(3, [(0, 1, -1.0)]),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(LabeledGraph::from_unit_edges(0, []), Err(Error::EmptyGraph)));
    }

    #[test]
    fn weighted_degree_is_row_sum() {
        let g = LabeledGraph::from_edges(3, [(0, 1, 0.5), (0, 2, 0.5)]).unwrap();
        assert_eq!(g.degree(0), 1.0);
        let row: f64 = (0..3).map(|j| g.weight(0, j)).sum();
        assert_eq!(row, g.degree(0));
        assert!(!g.is_unit_weighted());
    }

    #[test]
    fn zero_weight_edges_are_absent() {
        let g = LabeledGraph::from_edges(3, [(0, 1, 0.0), (1, 2, 2.0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.degree(0), 0.0);
        assert!(g.node_stats(0).unwrap().neighborhood.is_empty());
    }

    #[test]
    fn rows_are_sorted_and_symmetric() {
        let g = LabeledGraph::from_edges(5, [(4, 0, 1.0), (2, 1, 3.0), (0, 2, 2.0), (3, 0, 1.0)]).unwrap();
        for i in 0..5 {
            assert!(g.neighbor_ids(i).windows(2).all(|w| w[0] < w[1]));
            for (j, w) in g.neighbors(i) {
                assert_eq!(g.weight(j, i), w);
            }
        }
    }

    #[test]
    fn upper_rows_match_edge_builder() {
        let rows = vec![vec![1, 3], vec![2, 3], vec![], vec![]];
        let a = LabeledGraph::from_upper_rows(&rows);
        let b = LabeledGraph::from_unit_edges(4, [(0, 1), (0, 3), (1, 2), (1, 3)]).unwrap();
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        for i in 0..4 {
            assert_eq!(a.neighbor_ids(i), b.neighbor_ids(i));
        }
    }

    #[test]
    fn label_vectors_must_cover_every_node() {
        let g = example_graph();
        assert!(g.clone().with_binary_labels(vec![BinaryLabel::A; 3]).is_err());
        assert!(g.clone().with_continuous_labels(vec![0.1, 0.2, 1.5, 0.0]).is_err());
        assert!(g.with_continuous_labels(vec![0.1, 0.2, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn cell_views_example_graph() {
        let g = example_graph().with_cell("s", vec![2, 0]).unwrap();
        let ego = g.cell_view("s", CellMode::EgoToAll).unwrap();
        assert_eq!(ego.members(), &[0, 2]);
        assert_eq!(ego.degree(0), 3.0);
        assert_eq!(ego.neighbors(0).count(), 3);

        let within = g.cell_view("s", CellMode::WithinCell).unwrap();
        assert_eq!(within.degree(0), 1.0);
        assert_eq!(within.neighbors(0).collect::<Vec<_>>(), vec![(2, 1.0)]);
        assert_eq!(within.neighbors(2).collect::<Vec<_>>(), vec![(0, 1.0)]);

        assert!(matches!(
            g.cell_view("nope", CellMode::EgoToAll),
            Err(Error::UnknownCell(_))
        ));
    }

    #[test]
    fn whole_graph_cell_matches_full_view() {
        let g = example_graph().with_cell("all", vec![0, 1, 2, 3]).unwrap();
        let full = g.full_view();
        for mode in [CellMode::WithinCell, CellMode::EgoToAll] {
            let v = g.cell_view("all", mode).unwrap();
            assert_eq!(v.members(), full.members());
            for i in 0..4 {
                assert_eq!(v.degree(i), full.degree(i));
            }
        }
    }
}
