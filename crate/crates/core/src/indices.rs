//! Non-private ground truth: individual shares, connectedness indices,
//! average friend rank, and the plain regression baseline.

use crate::error::{Error, Result};
use crate::graph::{CellSelection, CellView, LabeledGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectednessResult {
    pub value: f64,
    /// `#A` or `#(A ∩ s)`.
    pub group_size: usize,
    /// `ρ_i` for each node of the index group, in increasing node order.
    pub per_node_shares: Vec<f64>,
    /// Group members with zero (view) degree; they enter the average with
    /// `ρ_i = 0`.
    pub isolated_in_group: usize,
}

/// Weighted share of `i`'s connections that go to group B. Isolated nodes
/// get 0.
pub fn rho(g: &LabeledGraph, i: usize) -> Result<f64> {
    let labels = g.require_binary()?;
    g.check_node(i)?;
    Ok(rho_in_view(&g.full_view(), labels, i))
}

fn rho_in_view(view: &CellView<'_>, labels: &[crate::graph::BinaryLabel], i: usize) -> f64 {
    let (to_b, total) = share_parts(view, labels, i);
    if total > 0.0 {
        to_b / total
    } else {
        0.0
    }
}

/// Weight to group B and total weight of `i`'s (view) edges.
fn share_parts(view: &CellView<'_>, labels: &[crate::graph::BinaryLabel], i: usize) -> (f64, f64) {
    let mut to_b = 0.0;
    let mut total = 0.0;
    for (j, w) in view.neighbors(i) {
        total += w;
        if labels[j].is_b() {
            to_b += w;
        }
    }
    (to_b, total)
}

/// `C^{A→B}`, globally or for a cell in either edge-counting mode.
pub fn cross_connectedness(g: &LabeledGraph, cell: Option<&CellSelection>) -> Result<ConnectednessResult> {
    let labels = g.require_binary()?;
    let view = g.view(cell)?;
    let mut shares = Vec::new();
    let mut isolated = 0;
    let mut sum = DoubleDouble::default();
    for &i in view.members() {
        if labels[i].is_a() {
            let (to_b, total) = share_parts(&view, labels, i);
            if total > 0.0 {
                sum.add_quotient(to_b, total);
                shares.push(to_b / total);
            } else {
                isolated += 1;
                shares.push(0.0);
            }
        }
    }
    if shares.is_empty() {
        return Err(Error::EmptyGroup {
            cell: cell.map(|c| c.id.clone()),
        });
    }
    let value = sum.div(shares.len() as f64);
    Ok(ConnectednessResult {
        value,
        group_size: shares.len(),
        per_node_shares: shares,
        isolated_in_group: isolated,
    })
}

/// `C^{A→A} = 1 − C^{A→B}`.
pub fn same_connectedness(g: &LabeledGraph, cell: Option<&CellSelection>) -> Result<ConnectednessResult> {
    let cross = cross_connectedness(g, cell)?;
    let labels = g.require_binary()?;
    let view = g.view(cell)?;
    // Per-node same-type shares (1 − ρ_i, or 0 for isolated egos).
    let shares: Vec<f64> = view
        .members()
        .iter()
        .filter(|&&i| labels[i].is_a())
        .zip(&cross.per_node_shares)
        .map(|(&i, &r)| if view.degree(i) > 0.0 { 1.0 - r } else { 0.0 })
        .collect();
    Ok(ConnectednessResult {
        value: 1.0 - cross.value,
        group_size: cross.group_size,
        per_node_shares: shares,
        isolated_in_group: cross.isolated_in_group,
    })
}

/// Double-double accumulator, so that indices which are exact rationals
/// round correctly.
#[derive(Debug, Default, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let b = s - self.hi;
        self.lo += (self.hi - (s - b)) + (x - b);
        self.hi = s;
    }

    fn add_quotient(&mut self, a: f64, b: f64) {
        let q = a / b;
        self.add(q);
        self.lo += (-q).mul_add(b, a) / b;
    }

    fn div(self, n: f64) -> f64 {
        let q = self.hi / n;
        let r = (-q).mul_add(n, self.hi) + self.lo;
        q + r / n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriendRankProfile {
    pub own_rank: Vec<f64>,
    pub afr: Vec<f64>,
}

/// Average friend rank `y_i = Σ_{j∈N(i)} e_ij x_j / d_i`, 0 for isolated
/// nodes.
pub fn afr(g: &LabeledGraph, ranks: &[f64]) -> Result<FriendRankProfile> {
    if ranks.len() != g.node_count() {
        return Err(Error::LabelLength {
            kind: "rank",
            got: ranks.len(),
            expected: g.node_count(),
        });
    }
    crate::graph::validate_ranks(ranks)?;
    Ok(FriendRankProfile {
        own_rank: ranks.to_vec(),
        afr: neighbor_means(&g.full_view(), ranks),
    })
}

/// Weighted neighbor mean of `values` for each ego of `view`, 0 for
/// isolated egos. Shared by the private path, where `values` are noised
/// ranks outside `[0, 1]`.
pub(crate) fn neighbor_means(view: &CellView<'_>, values: &[f64]) -> Vec<f64> {
    view.members()
        .iter()
        .map(|&i| {
            let d = view.degree(i);
            if d > 0.0 {
                view.neighbors(i).map(|(j, w)| w * values[j]).sum::<f64>() / d
            } else {
                0.0
            }
        })
        .collect()
}

/// Intercept and slope of a simple linear regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub alpha: f64,
    pub beta: f64,
}

/// Means and centered second moments, computed in two passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CenteredMoments {
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    /// `Σ (x_i − x̄)²`
    pub nvar: f64,
    /// `Σ (x_i − x̄)(y_i − ȳ)`
    pub ncov: f64,
}

impl CenteredMoments {
    pub fn of(x: &[f64], y: &[f64]) -> Self {
        debug_assert_eq!(x.len(), y.len());
        let n = x.len();
        let nf = n as f64;
        let mean_x = x.iter().sum::<f64>() / nf;
        let mean_y = y.iter().sum::<f64>() / nf;
        let mut nvar = 0.0;
        let mut ncov = 0.0;
        for (&xi, &yi) in x.iter().zip(y) {
            let dx = xi - mean_x;
            nvar += dx * dx;
            ncov += dx * (yi - mean_y);
        }
        Self {
            n,
            mean_x,
            mean_y,
            nvar,
            ncov,
        }
    }

    /// Sample variance of `x` with the `1/(n−1)` normalization.
    pub fn sample_var_x(&self) -> f64 {
        self.nvar / (self.n as f64 - 1.0)
    }
}

/// Ordinary least squares of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::LabelLength {
            kind: "regression response",
            got: y.len(),
            expected: x.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewObservations { min: 2, got: x.len() });
    }
    let m = CenteredMoments::of(x, y);
    if m.nvar <= 0.0 {
        return Err(Error::DegenerateDesign);
    }
    let beta = m.ncov / m.nvar;
    Ok(LinearFit {
        alpha: m.mean_y - beta * m.mean_x,
        beta,
    })
}

/// Coefficient of determination of `fit` on `(x, y)`.
pub fn r_squared(x: &[f64], y: &[f64], fit: LinearFit) -> f64 {
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi - fit.alpha - fit.beta * xi;
        ss_res += r * r;
        ss_tot += (yi - mean_y) * (yi - mean_y);
    }
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    }
}

/// Mean average friend rank over the rank interval `[q_lo, q_hi]`:
/// `(α ∫x + β ∫x dx)/∫1`, i.e. `α + β·(q_lo + q_hi)/2`.
pub fn mafr(alpha: f64, beta: f64, q_lo: f64, q_hi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q_lo) || !(0.0..=1.0).contains(&q_hi) || q_lo >= q_hi {
        return Err(Error::param("interval", q_hi - q_lo, "need 0 <= q_lo < q_hi <= 1"));
    }
    Ok(alpha + beta * 0.5 * (q_lo + q_hi))
}
