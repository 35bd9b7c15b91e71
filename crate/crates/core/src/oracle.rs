//! Brute-force reference computations.
//!
//! Nothing here calls the estimator modules: every quantity is recomputed
//! from the adjacency structure with dense double loops, exhaustive
//! enumeration, or raw-sum formulas.

use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Exec};
use crate::graph::{BinaryLabel, CellMode, CellSelection, LabeledGraph};

pub const MAX_ENUMERATION_NODES: usize = 14;
pub const MAX_TOGGLE_NODES: usize = 30;
pub const MAX_NAIVE_NODES: usize = 10_000;

fn dense(g: &LabeledGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut w = vec![vec![0.0; n]; n];
    for (u, v, x) in g.edges() {
        w[u][v] = x;
        w[v][u] = x;
    }
    w
}

/// Per-node `(w_i, ρ̃_i)` for privatized labels `l̂`, straight from the
/// definitions.
fn debiased_terms(w: &[Vec<f64>], l_hat: &[BinaryLabel], p: f64) -> Vec<(f64, f64)> {
    let n = l_hat.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut deg = 0.0;
        let mut to_b = 0.0;
        for j in 0..n {
            deg += w[i][j];
            if l_hat[j] == BinaryLabel::B {
                to_b += w[i][j];
            }
        }
        let rho_hat = if deg > 0.0 { to_b / deg } else { 0.0 };
        let is_a = if l_hat[i] == BinaryLabel::A { 1.0 } else { 0.0 };
        out.push(((is_a - p) / (1.0 - 2.0 * p), (rho_hat - p) / (1.0 - 2.0 * p)));
    }
    out
}

fn check_flip(p: f64) -> Result<()> {
    if (0.0..0.5).contains(&p) {
        Ok(())
    } else {
        Err(Error::param("p", p, "must lie in [0, 0.5)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectations {
    /// `E[ρ̃_i]` for every node.
    pub rho_tilde: Vec<f64>,
    pub s0: f64,
    pub s1: f64,
    /// Sum of all pattern probabilities; 1 up to rounding.
    pub total_probability: f64,
}

/// Exact expectations under randomized response with flip probability
/// `p`, summing over all `2ⁿ` flip patterns of the true labels.
pub fn enumerate_expectations(g: &LabeledGraph, p: f64, exec: Exec) -> Result<Expectations> {
    let n = g.node_count();
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::TooLarge {
            what: "enumeration node count",
            max: MAX_ENUMERATION_NODES,
            got: n,
        });
    }
    check_flip(p)?;
    let truth = g.require_binary()?;
    let w = dense(g);
    // Row layout: [prob, prob·S₀, prob·S₁, prob·ρ̃_0, ..., prob·ρ̃_{n−1}].
    let rows = exec.map(1usize << n, |mask| {
        let mut prob = 1.0;
        let l_hat: Vec<BinaryLabel> = (0..n)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    prob *= p;
                    match truth[i] {
                        BinaryLabel::A => BinaryLabel::B,
                        BinaryLabel::B => BinaryLabel::A,
                    }
                } else {
                    prob *= 1.0 - p;
                    truth[i]
                }
            })
            .collect();
        let terms = debiased_terms(&w, &l_hat, p);
        let s0: f64 = terms.iter().map(|t| t.0).sum();
        let s1: f64 = terms.iter().map(|t| t.0 * t.1).sum();
        let mut row = vec![prob, prob * s0, prob * s1];
        row.extend(terms.iter().map(|t| prob * t.1));
        row
    });
    let column = |c: usize| pairwise_sum(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    Ok(Expectations {
        total_probability: column(0),
        s0: column(1),
        s1: column(2),
        rho_tilde: (0..n).map(|i| column(3 + i)).collect(),
    })
}

fn s1_dense(w: &[Vec<f64>], l_hat: &[BinaryLabel], p: f64) -> f64 {
    debiased_terms(w, l_hat, p).iter().map(|t| t.0 * t.1).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToggleSearch {
    pub max_change: f64,
    pub argmax: Option<(usize, usize)>,
    pub toggles: usize,
}

/// `|S₁(E) − S₁(E′)|` where `E′` toggles the pair `(u, v)`: an existing
/// edge is removed, a missing one is added with weight `toggle_weight`.
pub fn toggle_change(
    g: &LabeledGraph,
    l_hat: &[BinaryLabel],
    p: f64,
    (u, v): (usize, usize),
    toggle_weight: f64,
) -> Result<f64> {
    toggle_setup(g, l_hat, p, toggle_weight)?;
    g.check_node(u)?;
    g.check_node(v)?;
    if u == v {
        return Err(Error::SelfLoop { node: u });
    }
    let mut w = dense(g);
    let before = s1_dense(&w, l_hat, p);
    toggle(&mut w, u, v, toggle_weight);
    Ok((s1_dense(&w, l_hat, p) - before).abs())
}

fn toggle_setup(g: &LabeledGraph, l_hat: &[BinaryLabel], p: f64, toggle_weight: f64) -> Result<()> {
    let n = g.node_count();
    if n > MAX_TOGGLE_NODES {
        return Err(Error::TooLarge {
            what: "toggle search node count",
            max: MAX_TOGGLE_NODES,
            got: n,
        });
    }
    check_flip(p)?;
    if l_hat.len() != n {
        return Err(Error::LabelLength {
            kind: "privatized binary",
            got: l_hat.len(),
            expected: n,
        });
    }
    if !(toggle_weight.is_finite() && toggle_weight > 0.0) {
        return Err(Error::param("toggle_weight", toggle_weight, "must be positive"));
    }
    Ok(())
}

fn toggle(w: &mut [Vec<f64>], u: usize, v: usize, toggle_weight: f64) {
    let x = if w[u][v] > 0.0 { 0.0 } else { toggle_weight };
    w[u][v] = x;
    w[v][u] = x;
}

/// Largest `|ΔS₁|` over every single-pair toggle at fixed privatized
/// labels.
pub fn max_edge_sensitivity(
    g: &LabeledGraph,
    l_hat: &[BinaryLabel],
    p: f64,
    toggle_weight: f64,
) -> Result<ToggleSearch> {
    toggle_setup(g, l_hat, p, toggle_weight)?;
    let n = g.node_count();
    let mut w = dense(g);
    let base = s1_dense(&w, l_hat, p);
    let mut best = ToggleSearch {
        max_change: 0.0,
        argmax: None,
        toggles: 0,
    };
    for u in 0..n {
        for v in u + 1..n {
            let old = w[u][v];
            toggle(&mut w, u, v, toggle_weight);
            let change = (s1_dense(&w, l_hat, p) - base).abs();
            w[u][v] = old;
            w[v][u] = old;
            best.toggles += 1;
            if change > best.max_change {
                best.max_change = change;
                best.argmax = Some((u, v));
            }
        }
    }
    Ok(best)
}

fn check_naive_size(g: &LabeledGraph) -> Result<()> {
    if g.node_count() > MAX_NAIVE_NODES {
        return Err(Error::TooLarge {
            what: "naive recompute node count",
            max: MAX_NAIVE_NODES,
            got: g.node_count(),
        });
    }
    Ok(())
}

fn dense_row(g: &LabeledGraph, i: usize) -> Vec<f64> {
    let mut row = vec![0.0; g.node_count()];
    for (&j, &x) in g.neighbor_ids(i).iter().zip(g.neighbor_weights(i)) {
        row[j as usize] = x;
    }
    row
}

/// Cross-type connectedness by the defining double loop.
pub fn naive_cross_connectedness(g: &LabeledGraph, cell: Option<&CellSelection>) -> Result<f64> {
    check_naive_size(g)?;
    let labels = g.require_binary()?;
    let n = g.node_count();
    let mut in_ego_set = vec![cell.is_none(); n];
    let mut counts_as_friend = vec![true; n];
    if let Some(sel) = cell {
        let members = g.cell(&sel.id)?;
        if sel.mode == CellMode::WithinCell {
            counts_as_friend = vec![false; n];
        }
        for &m in members {
            in_ego_set[m] = true;
            counts_as_friend[m] = true;
        }
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        if !in_ego_set[i] || labels[i] != BinaryLabel::A {
            continue;
        }
        count += 1;
        let row = dense_row(g, i);
        let mut to_b = 0.0;
        let mut deg = 0.0;
        for j in 0..n {
            if counts_as_friend[j] {
                deg += row[j];
                if labels[j] == BinaryLabel::B {
                    to_b += row[j];
                }
            }
        }
        if deg > 0.0 {
            total += to_b / deg;
        }
    }
    if count == 0 {
        return Err(Error::EmptyGroup {
            cell: cell.map(|c| c.id.clone()),
        });
    }
    Ok(total / count as f64)
}

/// Average friend rank by the defining double loop.
pub fn naive_afr(g: &LabeledGraph, ranks: &[f64]) -> Result<Vec<f64>> {
    check_naive_size(g)?;
    let n = g.node_count();
    if ranks.len() != n {
        return Err(Error::LabelLength {
            kind: "rank",
            got: ranks.len(),
            expected: n,
        });
    }
    Ok((0..n)
        .map(|i| {
            let row = dense_row(g, i);
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                num += row[j] * ranks[j];
                den += row[j];
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect())
}

/// `(α, β)` from the 2×2 normal equations in raw sums; `None` when singular.
pub fn naive_ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    if det.abs() <= f64::EPSILON * n * sxx {
        return None;
    }
    Some(((sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det))
}

/// `Σ x_i² − (Σ x_i)²/n`.
pub fn raw_nvar(x: &[f64]) -> f64 {
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v * v).sum::<f64>() - s * s / x.len() as f64
}

/// `Σ x_i y_i − (Σ x_i)(Σ y_i)/n`.
pub fn raw_ncov(x: &[f64], y: &[f64]) -> f64 {
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - sx * sy / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentChange {
    pub nvar: f64,
    pub ncov: f64,
}

/// Largest changes of `nvar` and `ncov` when one row `(x_k, y_k)` is
/// replaced by any pair from `x_candidates × y_candidates`.
pub fn max_row_change(x: &[f64], y: &[f64], x_candidates: &[f64], y_candidates: &[f64]) -> MomentChange {
    let (v0, c0) = (raw_nvar(x), raw_ncov(x, y));
    let mut best = MomentChange { nvar: 0.0, ncov: 0.0 };
    let (mut xs, mut ys) = (x.to_vec(), y.to_vec());
    for k in 0..x.len() {
        for &cx in x_candidates {
            xs[k] = cx;
            best.nvar = best.nvar.max((raw_nvar(&xs) - v0).abs());
            for &cy in y_candidates {
                ys[k] = cy;
                best.ncov = best.ncov.max((raw_ncov(&xs, &ys) - c0).abs());
            }
            ys[k] = y[k];
        }
        xs[k] = x[k];
    }
    best
}

/// Largest change of `ncov` when two rows are replaced, each by a pair from
/// `x_candidates × y_candidates`.
pub fn max_two_row_ncov_change(x: &[f64], y: &[f64], x_candidates: &[f64], y_candidates: &[f64]) -> f64 {
    let c0 = raw_ncov(x, y);
    let (mut xs, mut ys) = (x.to_vec(), y.to_vec());
    let mut best = 0.0f64;
    for k in 0..x.len() {
        for l in k + 1..x.len() {
            for &a in x_candidates {
                for &b in y_candidates {
                    xs[k] = a;
                    ys[k] = b;
                    for &c in x_candidates {
                        for &d in y_candidates {
                            xs[l] = c;
                            ys[l] = d;
                            best = best.max((raw_ncov(&xs, &ys) - c0).abs());
                        }
                    }
                    xs[l] = x[l];
                    ys[l] = y[l];
                }
            }
            xs[k] = x[k];
            ys[k] = y[k];
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BinaryLabel::*;

    fn example_graph() -> LabeledGraph {
        LabeledGraph::from_unit_edges(4, [(0, 2), (0, 3), (0, 1), (1, 3)])
            .unwrap()
            .with_binary_labels(vec![A, A, B, B])
            .unwrap()
    }

    #[test]
    fn example_expectations_recover_shares() {
        let e = enumerate_expectations(&example_graph(), 0.25, Exec::Sequential).unwrap();
        let want = [2.0 / 3.0, 0.5, 0.0, 0.0];
        for (got, want) in e.rho_tilde.iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((e.total_probability - 1.0).abs() < 1e-12);
        assert!((e.s0 - 2.0).abs() < 1e-12);
        assert!((e.s1 - 7.0 / 6.0).abs() < 1e-12);
        assert!((e.s1 / e.s0 - 7.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_node_expectation_is_shifted() {
        let g = LabeledGraph::from_unit_edges(3, [(0, 1)])
            .unwrap()
            .with_binary_labels(vec![A, B, A])
            .unwrap();
        let p = 0.2;
        let e = enumerate_expectations(&g, p, Exec::Sequential).unwrap();
        assert!((e.rho_tilde[2] + p / (1.0 - 2.0 * p)).abs() < 1e-12);
    }

    #[test]
    fn near_identity_channel() {
        let e = enumerate_expectations(&example_graph(), 0.001, Exec::Parallel).unwrap();
        assert!((e.s0 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn enumeration_size_limit() {
        let g = LabeledGraph::from_unit_edges(15, [(0, 1)])
            .unwrap()
            .with_binary_labels(vec![A; 15])
            .unwrap();
        assert!(matches!(
            enumerate_expectations(&g, 0.1, Exec::Sequential),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn weighted_star_nearly_attains_bound() {
        let p: f64 = 0.4;
        let edges = (1..=5).map(|leaf| (0, leaf, 0.005));
        let g = LabeledGraph::from_edges(6, edges).unwrap();
        let l_hat = vec![B, A, A, A, A, A];
        let bound = 2.0 * (1.0 - p) / (1.0 - 2.0 * p).powi(2);
        let s = max_edge_sensitivity(&g, &l_hat, p, 1.0).unwrap();
        assert!(s.max_change <= bound);
        assert!(s.max_change >= 0.99 * bound, "{} vs {bound}", s.max_change);
        assert_eq!(s.toggles, 15);
    }

    #[test]
    fn unit_star_peaks_well_below_bound() {
        // Best over all 2⁶ labelings: removing the edge to the only a-leaf,
        // 15 from the leaf plus 2 from the center.
        let p: f64 = 0.4;
        let g = LabeledGraph::from_unit_edges(6, (1..=5).map(|leaf| (0, leaf))).unwrap();
        let mut best = (0.0, 0);
        for mask in 0..64u32 {
            let l_hat: Vec<_> = (0..6).map(|i| if mask >> i & 1 == 1 { A } else { B }).collect();
            let s = max_edge_sensitivity(&g, &l_hat, p, 1.0).unwrap();
            if s.max_change > best.0 + 1e-12 {
                best = (s.max_change, mask);
            }
        }
        assert!((best.0 - 17.0).abs() < 1e-9, "{best:?}");
        assert_eq!(best.1, 0b10);
    }

    #[test]
    fn toggle_with_unchanged_shares_is_zero() {
        // Both endpoints already have all-B neighborhoods; adding a B–B edge
        // leaves every ρ̂ unchanged.
        let g = LabeledGraph::from_unit_edges(4, [(0, 2), (1, 3)]).unwrap();
        let l_hat = vec![B, B, B, B];
        assert_eq!(toggle_change(&g, &l_hat, 0.3, (0, 1), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn naive_index_cells() {
        let g = example_graph().with_cell("v", vec![0, 1, 3]).unwrap();
        assert!((naive_cross_connectedness(&g, None).unwrap() - 7.0 / 12.0).abs() < 1e-15);
        let ego = CellSelection::new("v", CellMode::EgoToAll);
        let within = CellSelection::new("v", CellMode::WithinCell);
        assert!((naive_cross_connectedness(&g, Some(&ego)).unwrap() - 7.0 / 12.0).abs() < 1e-15);
        // Within {0,1,3}: node 0 sees {1,3}, node 1 sees {0,3}.
        assert!((naive_cross_connectedness(&g, Some(&within)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn naive_regression_and_moments() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, b) = naive_ols(&x, &y).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        assert!(naive_ols(&[1.0, 1.0], &[0.0, 1.0]).is_none());
        assert!((raw_nvar(&x) - 5.0).abs() < 1e-12);
        assert!((raw_ncov(&x, &y) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn row_change_corner_attains_nvar_sensitivity() {
        let n = 6;
        let x = vec![0.0; n];
        let y = vec![0.0; n];
        let c = max_row_change(&x, &y, &[0.0, 1.0], &[0.0, 1.0]);
        assert!((c.nvar - (1.0 - 1.0 / n as f64)).abs() < 1e-12);
        assert!((c.ncov - (1.0 - 1.0 / n as f64)).abs() < 1e-12);
    }
}
