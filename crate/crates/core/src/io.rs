//! Plain-text graph formats.
//!
//! * Edge list: `i j [weight]` per line. `#` starts a comment. An optional
//!   `# nodes: N` header fixes the node count (isolated trailing nodes);
//!   otherwise it is one more than the largest id seen in edges or labels.
//! * Labels: `i label [label]`, where each label is `a`, `b`, or a real
//!   rank in `[0, 1]`. A node may carry one binary and one continuous
//!   label. Every node must be labeled once a kind appears.
//! * Cells: `cell_id i` per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{BinaryLabel, LabeledGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub declared_nodes: Option<usize>,
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTable {
    pub binary: BTreeMap<usize, BinaryLabel>,
    pub continuous: BTreeMap<usize, f64>,
}

struct Lines<'a> {
    path: &'a Path,
}

impl Lines<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn node(&self, line: usize, tok: &str) -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| self.err(line, format!("invalid node id {tok:?}")))
    }
}

/// Non-comment lines with their 1-based numbers, split on whitespace.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        (!toks.is_empty()).then_some((k + 1, toks))
    })
}

pub fn parse_edges(text: &str, path: &Path) -> Result<EdgeList> {
    let lines = Lines { path };
    let mut declared_nodes = None;
    for (k, raw) in text.lines().enumerate() {
        if let Some(rest) = raw.trim().strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("nodes:") {
                let n = v
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| lines.err(k + 1, format!("invalid node count {:?}", v.trim())))?;
                declared_nodes = Some(n);
            }
        }
    }
    let mut edges = Vec::new();
    for (line, toks) in records(text) {
        if toks.len() != 2 && toks.len() != 3 {
            return Err(lines.err(line, format!("expected `i j [weight]`, got {} fields", toks.len())));
        }
        let u = lines.node(line, toks[0])?;
        let v = lines.node(line, toks[1])?;
        let w = match toks.get(2) {
            Some(t) => t
                .parse::<f64>()
                .map_err(|_| lines.err(line, format!("invalid weight {t:?}")))?,
            None => 1.0,
        };
        edges.push((u, v, w));
    }
    Ok(EdgeList { declared_nodes, edges })
}

pub fn parse_labels(text: &str, path: &Path) -> Result<LabelTable> {
    let lines = Lines { path };
    let mut table = LabelTable::default();
    for (line, toks) in records(text) {
        if toks.len() < 2 || toks.len() > 3 {
            return Err(lines.err(line, "expected `i label [label]`"));
        }
        let node = lines.node(line, toks[0])?;
        for tok in &toks[1..] {
            let dup = if let Ok(l) = tok.parse::<BinaryLabel>() {
                table.binary.insert(node, l).is_some()
            } else {
                let x = tok
                    .parse::<f64>()
                    .map_err(|_| lines.err(line, format!("label {tok:?} is neither a/b nor a number")))?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(lines.err(line, format!("rank {x} outside [0, 1]")));
                }
                table.continuous.insert(node, x).is_some()
            };
            if dup {
                return Err(lines.err(line, format!("node {node} labeled twice")));
            }
        }
    }
    Ok(table)
}

pub fn parse_cells(text: &str, path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    let lines = Lines { path };
    let mut cells: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (line, toks) in records(text) {
        if toks.len() != 2 {
            return Err(lines.err(line, "expected `cell_id i`"));
        }
        let node = lines.node(line, toks[1])?;
        cells.entry(toks[0].to_string()).or_default().push(node);
    }
    Ok(cells)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| file_error(path, e))
}

fn file_error(path: &Path, source: std::io::Error) -> Error {
    Error::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Assembles a graph from parsed parts, checking that every node is
/// labeled for each label kind present.
pub fn assemble(
    edges: EdgeList,
    labels: Option<LabelTable>,
    cells: Option<BTreeMap<String, Vec<usize>>>,
) -> Result<LabeledGraph> {
    let labels = labels.unwrap_or_default();
    let max_id = edges
        .edges
        .iter()
        .flat_map(|&(u, v, _)| [u, v])
        .chain(labels.binary.keys().copied())
        .chain(labels.continuous.keys().copied())
        .max();
    let n = match (edges.declared_nodes, max_id) {
        (Some(n), _) => n,
        (None, Some(m)) => m + 1,
        (None, None) => return Err(Error::EmptyGraph),
    };
    let mut g = LabeledGraph::from_edges(n, edges.edges)?;
    if !labels.binary.is_empty() {
        g = g.with_binary_labels(dense_labels(&labels.binary, n)?)?;
    }
    if !labels.continuous.is_empty() {
        g = g.with_continuous_labels(dense_labels(&labels.continuous, n)?)?;
    }
    for (id, members) in cells.unwrap_or_default() {
        g = g.with_cell(id, members)?;
    }
    Ok(g)
}

fn dense_labels<T: Copy>(map: &BTreeMap<usize, T>, n: usize) -> Result<Vec<T>> {
    if let Some((&node, _)) = map.range(n..).next() {
        return Err(Error::NodeOutOfRange { node, node_count: n });
    }
    (0..n)
        .map(|i| map.get(&i).copied().ok_or(Error::MissingNodeLabel { node: i }))
        .collect()
}

/// Reads and validates an edge file with optional label and cell files.
pub fn ingest(edges: &Path, labels: Option<&Path>, cells: Option<&Path>) -> Result<LabeledGraph> {
    let e = parse_edges(&read(edges)?, edges)?;
    let l = labels.map(|p| read(p).and_then(|t| parse_labels(&t, p))).transpose()?;
    let c = cells.map(|p| read(p).and_then(|t| parse_cells(&t, p))).transpose()?;
    assemble(e, l, c)
}

pub fn format_edges(g: &LabeledGraph) -> String {
    let mut s = format!("# nodes: {}\n", g.node_count());
    let unit = g.is_unit_weighted();
    for (u, v, w) in g.edges() {
        if unit {
            let _ = writeln!(s, "{u} {v}");
        } else {
            let _ = writeln!(s, "{u} {v} {w}");
        }
    }
    s
}

/// Every label kind present on the graph, one node per line. `None` if the
/// graph is unlabeled.
pub fn format_labels(g: &LabeledGraph) -> Option<String> {
    let bin = g.binary_labels();
    let cont = g.continuous_labels();
    if bin.is_none() && cont.is_none() {
        return None;
    }
    let mut s = String::new();
    for i in 0..g.node_count() {
        let _ = write!(s, "{i}");
        if let Some(b) = bin {
            let _ = write!(s, " {}", b[i]);
        }
        if let Some(c) = cont {
            let _ = write!(s, " {}", c[i]);
        }
        s.push('\n');
    }
    Some(s)
}

pub fn format_cells(g: &LabeledGraph) -> Option<String> {
    let mut s = String::new();
    for (id, members) in g.cells() {
        for m in members {
            let _ = writeln!(s, "{id} {m}");
        }
    }
    (!s.is_empty()).then_some(s)
}

/// Files written by [`save`].
#[derive(Debug, Clone, PartialEq)]
pub struct SavedPaths {
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
    pub cells: Option<PathBuf>,
}

/// Writes `<stem>.edges`, and `<stem>.labels` / `<stem>.cells` when the
/// graph has labels or cells.
pub fn save(g: &LabeledGraph, stem: &Path) -> Result<SavedPaths> {
    let with_ext = |ext: &str| {
        let mut p = stem.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    let edges = with_ext(".edges");
    write_file(&edges, &format_edges(g))?;
    let labels = match format_labels(g) {
        Some(text) => {
            let p = with_ext(".labels");
            write_file(&p, &text)?;
            Some(p)
        }
        None => None,
    };
    let cells = match format_cells(g) {
        Some(text) => {
            let p = with_ext(".cells");
            write_file(&p, &text)?;
            Some(p)
        }
        None => None,
    };
    Ok(SavedPaths { edges, labels, cells })
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    let write = || {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        f.write_all(text.as_bytes())?;
        f.flush()
    };
    write().map_err(|e| file_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BinaryLabel::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn parses_comments_weights_and_header() {
        let text = "# nodes: 5\n0 1\n# comment\n1 2 0.5  # trailing\n\n";
        let e = parse_edges(text, p()).unwrap();
        assert_eq!(e.declared_nodes, Some(5));
        assert_eq!(e.edges, vec![(0, 1, 1.0), (1, 2, 0.5)]);
        let g = assemble(e, None, None).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.degree(1), 1.5);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_edges("0 1\n1 x\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_edges("0 1 2 3\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_labels("0 a\n1 c\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_labels("0 a\n0 b\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_labels("0 1.5\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_cells("v1\n", p()).is_err());
    }

    #[test]
    fn missing_label_names_node() {
        let e = parse_edges("0 1\n1 2\n", p()).unwrap();
        let l = parse_labels("0 a\n2 b\n", p()).unwrap();
        let err = assemble(e, Some(l), None).unwrap_err();
        assert!(matches!(err, Error::MissingNodeLabel { node: 1 }));
        assert!(err.to_string().contains('1'));
    }

    #[test]
    fn mixed_labels_and_cells() {
        let e = parse_edges("0 1\n", p()).unwrap();
        let l = parse_labels("0 a 0.25\n1 0.75 b\n", p()).unwrap();
        let c = parse_cells("v 0\nv 1\nw 1\n", p()).unwrap();
        let g = assemble(e, Some(l), Some(c)).unwrap();
        assert_eq!(g.binary_labels().unwrap(), &[A, B]);
        assert_eq!(g.continuous_labels().unwrap(), &[0.25, 0.75]);
        assert_eq!(g.cell("w").unwrap(), &[1]);
    }

    #[test]
    fn text_round_trip() {
        let g = LabeledGraph::from_edges(4, [(0, 2, 0.1), (0, 3, 1.0 / 3.0), (1, 3, 2.0)])
            .unwrap()
            .with_binary_labels(vec![A, A, B, B])
            .unwrap()
            .with_continuous_labels(vec![0.1, 0.2, 1.0 / 7.0, 0.0])
            .unwrap()
            .with_cell("x", vec![0, 3])
            .unwrap();
        let e = parse_edges(&format_edges(&g), p()).unwrap();
        let l = parse_labels(&format_labels(&g).unwrap(), p()).unwrap();
        let c = parse_cells(&format_cells(&g).unwrap(), p()).unwrap();
        assert_eq!(assemble(e, Some(l), Some(c)).unwrap(), g);
    }
}
