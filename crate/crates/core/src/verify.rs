//! Verification suite: the estimators against the brute-force oracles.
//!
//! Each check returns the measured discrepancy; [`run_all`] compares them
//! with fixed tolerances for the `oracle-check` report.

use crate::binary::{debias_node_stats, edge_sensitivity_bound, hajek, noise_scale};
use crate::continuous::{release_mafr, suff_stat_sensitivities, MafrReleaseOptions};
use crate::error::Result;
use crate::exec::{pairwise_sum, Exec};
use crate::graph::{BinaryLabel, CellMode, CellSelection, LabeledGraph};
use crate::indices::{afr, cross_connectedness, mafr, ols, rho};
use crate::noise::{trunc_laplace, BinaryPrivateLabels, NoiseMode, PrivacyBudget, RngStream, TruncLaplaceParams};
use crate::oracle;

const CORPUS_TAG: u64 = 0x636f_7270;

/// Flip probabilities used across the suite.
pub const FLIP_GRID: [f64; 4] = [0.05, 0.1, 0.25, 0.4];

/// Random unit-weight graph with `n ∈ [n_min, n_max]` nodes, random edge
/// density and random binary labels with both groups present. With
/// `no_isolated`, each isolated node is joined to a random partner.
#[allow(clippy::needless_range_loop)]
pub fn random_small_graph(rng: &mut RngStream, n_min: usize, n_max: usize, no_isolated: bool) -> LabeledGraph {
    let n = n_min + (rng.next_u64() % (n_max - n_min + 1) as u64) as usize;
    let density = 0.1 + 0.6 * rng.uniform();
    let mut adj = vec![vec![false; n]; n];
    for u in 0..n {
        for v in u + 1..n {
            if rng.uniform() < density {
                adj[u][v] = true;
                adj[v][u] = true;
            }
        }
    }
    if no_isolated {
        for u in 0..n {
            if !adj[u].iter().any(|&e| e) {
                let mut v = (rng.next_u64() % (n as u64 - 1)) as usize;
                if v >= u {
                    v += 1;
                }
                adj[u][v] = true;
                adj[v][u] = true;
            }
        }
    }
    let mut labels: Vec<BinaryLabel> = (0..n)
        .map(|_| {
            if rng.uniform() < 0.5 {
                BinaryLabel::A
            } else {
                BinaryLabel::B
            }
        })
        .collect();
    labels[0] = BinaryLabel::A;
    labels[n - 1] = BinaryLabel::B;
    let edges = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|&(u, v)| adj[u][v]);
    LabeledGraph::from_unit_edges(n, edges.collect::<Vec<_>>())
        .expect("valid by construction")
        .with_binary_labels(labels)
        .expect("valid by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Unbiasedness {
    pub cases: usize,
    /// `max |E[ρ̃_i] − ρ_i|`.
    pub rho: f64,
    /// `max |E[S₀] − #A|`.
    pub s0: f64,
    /// `max |E[S₁] − Σ_{i∈A} ρ_i|`.
    pub s1: f64,
    /// `max |E[S₁]/E[S₀] − C^{A→B}|`.
    pub ratio: f64,
    /// `max |Σ Pr − 1|`.
    pub probability: f64,
}

/// Exact enumeration on `graphs` random graphs at every `p` in `ps`.
pub fn unbiasedness(graphs: usize, n_max: usize, ps: &[f64], seed: u64, exec: Exec) -> Result<Unbiasedness> {
    let mut out = Unbiasedness::default();
    for k in 0..graphs {
        let mut rng = RngStream::derive(seed, &[CORPUS_TAG, 1, k as u64]);
        let g = random_small_graph(&mut rng, 3, n_max, true);
        let labels = g.require_binary()?;
        let rhos: Vec<f64> = (0..g.node_count()).map(|i| rho(&g, i)).collect::<Result<_>>()?;
        let na = labels.iter().filter(|l| l.is_a()).count() as f64;
        let s1_true = pairwise_sum(
            &rhos
                .iter()
                .zip(labels)
                .filter(|(_, l)| l.is_a())
                .map(|(r, _)| *r)
                .collect::<Vec<_>>(),
        );
        let c = cross_connectedness(&g, None)?.value;
        for &p in ps {
            let e = oracle::enumerate_expectations(&g, p, exec)?;
            out.cases += 1;
            for (et, r) in e.rho_tilde.iter().zip(&rhos) {
                out.rho = out.rho.max((et - r).abs());
            }
            out.s0 = out.s0.max((e.s0 - na).abs());
            out.s1 = out.s1.max((e.s1 - s1_true).abs());
            out.ratio = out.ratio.max((e.s1 / e.s0 - c).abs());
            out.probability = out.probability.max((e.total_probability - 1.0).abs());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensitivitySearch {
    pub instances: usize,
    pub violations: usize,
    /// Largest `max|ΔS₁| / bound` seen.
    pub max_ratio: f64,
}

/// Exhaustive single-edge toggles on random graphs, `labelings` random
/// privatized labelings per graph, `p` cycling through [`FLIP_GRID`].
pub fn sensitivity_search(
    graphs: usize,
    n_max: usize,
    labelings: usize,
    seed: u64,
    exec: Exec,
) -> Result<SensitivitySearch> {
    let per_graph = exec.try_map(graphs, |k| {
        let mut rng = RngStream::derive(seed, &[CORPUS_TAG, 2, k as u64]);
        let g = random_small_graph(&mut rng, 2, n_max, false);
        let mut res = SensitivitySearch::default();
        for j in 0..labelings {
            let p = FLIP_GRID[(k + j) % FLIP_GRID.len()];
            let l_hat: Vec<BinaryLabel> = (0..g.node_count())
                .map(|_| {
                    if rng.uniform() < 0.5 {
                        BinaryLabel::A
                    } else {
                        BinaryLabel::B
                    }
                })
                .collect();
            let s = oracle::max_edge_sensitivity(&g, &l_hat, p, 1.0)?;
            let bound = edge_sensitivity_bound(p);
            res.instances += 1;
            if s.max_change > bound {
                res.violations += 1;
            }
            res.max_ratio = res.max_ratio.max(s.max_change / bound);
        }
        Ok::<_, crate::Error>(res)
    })?;
    Ok(per_graph
        .into_iter()
        .fold(SensitivitySearch::default(), |a, b| SensitivitySearch {
            instances: a.instances + b.instances,
            violations: a.violations + b.violations,
            max_ratio: a.max_ratio.max(b.max_ratio),
        }))
}

/// `max|ΔS₁| / bound` on the star `K_{1,5}` with light spokes (weight
/// 0.005), `b` center and `a` leaves, toggling unit-weight edges.
pub fn star_attainment(p: f64) -> Result<f64> {
    let g = LabeledGraph::from_edges(6, (1..=5).map(|leaf| (0, leaf, 0.005)))?;
    let mut l_hat = vec![BinaryLabel::A; 6];
    l_hat[0] = BinaryLabel::B;
    let s = oracle::max_edge_sensitivity(&g, &l_hat, p, 1.0)?;
    Ok(s.max_change / edge_sensitivity_bound(p))
}

/// The four-node example: `A1 = 0, A2 = 1, B1 = 2, B2 = 3`.
pub fn worked_example_graph() -> LabeledGraph {
    use BinaryLabel::*;
    LabeledGraph::from_unit_edges(4, [(0, 2), (0, 3), (0, 1), (1, 3)])
        .expect("valid")
        .with_binary_labels(vec![A, A, B, B])
        .expect("valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkedExample {
    pub index: f64,
    pub s0: f64,
    pub s1: f64,
    pub ratio: f64,
    pub noise_scale: f64,
}

/// The example at `p = 1/4` with unflipped labels, `ε_e = 1`.
pub fn worked_example() -> Result<WorkedExample> {
    let g = worked_example_graph();
    let private = BinaryPrivateLabels::assume(g.require_binary()?.to_vec(), 0.25)?;
    let h = hajek(&debias_node_stats(&g, &private, None)?)?;
    Ok(WorkedExample {
        index: cross_connectedness(&g, None)?.value,
        s0: h.s0,
        s1: h.s1,
        ratio: h.ratio,
        noise_scale: noise_scale(0.25, 1.0, h.s0),
    })
}

/// Largest disagreement between the estimator modules and the naive
/// double-loop versions over random graphs (index with both cell modes,
/// AFR, OLS).
pub fn naive_agreement(graphs: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..graphs {
        let mut rng = RngStream::derive(seed, &[CORPUS_TAG, 3, k as u64]);
        let g = random_small_graph(&mut rng, 4, 40, false);
        let n = g.node_count();
        let members: Vec<usize> = (0..n).filter(|_| rng.uniform() < 0.6).chain([0]).collect();
        let ranks: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let g = g.with_cell("c", members)?.with_continuous_labels(ranks.clone())?;
        let mut sels = vec![None];
        for mode in [CellMode::WithinCell, CellMode::EgoToAll] {
            sels.push(Some(CellSelection::new("c", mode)));
        }
        for sel in &sels {
            let fast = cross_connectedness(&g, sel.as_ref())?.value;
            let slow = oracle::naive_cross_connectedness(&g, sel.as_ref())?;
            worst = worst.max((fast - slow).abs());
        }
        let y = afr(&g, &ranks)?.afr;
        for (a, b) in y.iter().zip(oracle::naive_afr(&g, &ranks)?) {
            worst = worst.max((a - b).abs());
        }
        let fit = ols(&ranks, &y)?;
        if let Some((a, b)) = oracle::naive_ols(&ranks, &y) {
            worst = worst.max((fit.alpha - a).abs()).max((fit.beta - b).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncLaplaceCheck {
    pub params: TruncLaplaceParams,
    pub outside_support: usize,
    /// `|sample variance / σ² − 1|`.
    pub variance_rel_err: f64,
    /// `|σ² − ∫ x² f(x) dx|` by composite Simpson.
    pub quadrature_err: f64,
}

/// Composite Simpson rule for `∫_{−A}^{A} x² B e^{−|x|/λ} dx`.
pub fn trunc_variance_quadrature(params: &TruncLaplaceParams, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = params.bound / m as f64;
    let f = |x: f64| x * x * params.normalizer * (-x / params.scale).exp();
    let terms: Vec<f64> = (0..=m)
        .map(|k| {
            let c = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * f(k as f64 * h)
        })
        .collect();
    2.0 * pairwise_sum(&terms) * h / 3.0
}

pub fn trunc_laplace_check(eps: f64, delta: f64, draws: usize, seed: u64, exec: Exec) -> Result<TruncLaplaceCheck> {
    let params = TruncLaplaceParams::new(1.0, eps, delta)?;
    let blocks = 64.max(draws / 65_536);
    let per = draws.div_ceil(blocks);
    let parts = exec.map(blocks, |b| {
        let mut rng = RngStream::derive(seed, &[CORPUS_TAG, 4, b as u64]);
        let take = per.min(draws.saturating_sub(b * per));
        let xs: Vec<f64> = (0..take).map(|_| trunc_laplace(&params, &mut rng)).collect();
        let outside = xs.iter().filter(|x| x.abs() > params.bound).count();
        let sum = pairwise_sum(&xs);
        let sq = pairwise_sum(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
        (outside, sum, sq, take)
    });
    let outside = parts.iter().map(|p| p.0).sum();
    let n = parts.iter().map(|p| p.3).sum::<usize>() as f64;
    let mean = pairwise_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>()) / n;
    let sq = pairwise_sum(&parts.iter().map(|p| p.2).collect::<Vec<_>>()) / n;
    let var = (sq - mean * mean) * n / (n - 1.0);
    Ok(TruncLaplaceCheck {
        params,
        outside_support: outside,
        variance_rel_err: (var / params.variance - 1.0).abs(),
        quadrature_err: (params.variance - trunc_variance_quadrature(&params, 200_000)).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentSensitivity {
    pub datasets: usize,
    /// Largest single-row `|Δnvar| / Δ₁`.
    pub nvar_ratio: f64,
    /// Largest single-row `|Δncov| / Δ₂`.
    pub ncov_ratio: f64,
    /// Largest two-row `|Δncov| / Δ₂`.
    pub ncov_two_row_ratio: f64,
}

/// Random `n`-point datasets on random intervals. Replacement values are a
/// grid over each interval (endpoints included) plus the current values.
pub fn moment_sensitivity(datasets: usize, n: usize, grid: usize, seed: u64, exec: Exec) -> MomentSensitivity {
    let per = exec.map(datasets, |k| {
        let mut rng = RngStream::derive(seed, &[CORPUS_TAG, 5, k as u64]);
        let mut interval = || {
            let a = -2.0 + 4.0 * rng.uniform();
            (a, a + 0.1 + 3.0 * rng.uniform())
        };
        let (xb, yb) = (interval(), interval());
        // Half the datasets sit on corners, where the bounds are tight.
        let corner = k % 2 == 0;
        let mut draw = |(lo, hi): (f64, f64)| {
            let u = rng.uniform();
            lo + (hi - lo) * if corner { u.round() } else { u }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(xb)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(yb)).collect();
        let cands = |(lo, hi): (f64, f64), cur: &[f64]| {
            let mut c: Vec<f64> = (0..grid)
                .map(|j| lo + (hi - lo) * j as f64 / (grid - 1) as f64)
                .collect();
            c.extend_from_slice(cur);
            c
        };
        let (cx, cy) = (cands(xb, &x), cands(yb, &y));
        let s = suff_stat_sensitivities(n, xb, yb);
        let row = oracle::max_row_change(&x, &y, &cx, &cy);
        let two = oracle::max_two_row_ncov_change(&x, &y, &cx[..grid], &cy[..grid]);
        (row.nvar / s.nvar, row.ncov / s.ncov, two / s.ncov)
    });
    per.into_iter().fold(
        MomentSensitivity {
            datasets,
            ..Default::default()
        },
        |m, (a, b, c)| MomentSensitivity {
            nvar_ratio: m.nvar_ratio.max(a),
            ncov_ratio: m.ncov_ratio.max(b),
            ncov_two_row_ratio: m.ncov_two_row_ratio.max(c),
            ..m
        },
    )
}

/// `|release − plain pipeline|` for the noise-disabled MAFR release on a
/// random ranked graph (0 when bit-identical).
pub fn disabled_mafr_identity(seed: u64) -> Result<f64> {
    let mut rng = RngStream::derive(seed, &[CORPUS_TAG, 6]);
    let g = random_small_graph(&mut rng, 30, 60, true);
    let ranks: Vec<f64> = (0..g.node_count()).map(|_| rng.uniform()).collect();
    let g = g.with_continuous_labels(ranks.clone())?;
    let opts = MafrReleaseOptions {
        noise: NoiseMode::Disabled,
        ..Default::default()
    };
    let budget = PrivacyBudget::new(1.0, 1.0, 1e-3)?;
    let r = release_mafr(&g, &budget, (0.0, 0.25), &mut rng, &opts)?;
    let fit = ols(&ranks, &afr(&g, &ranks)?.afr)?;
    Ok((r.mafr.unwrap_or(f64::NAN) - mafr(fit.alpha, fit.beta, 0.0, 0.25)?).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

/// The full verification suite at desk-check sizes.
#[allow(clippy::redundant_closure_call)]
pub fn run_all(seed: u64, exec: Exec) -> Vec<Check> {
    vec![
        Check::from(
            "worked example",
            (|| {
                let w = worked_example()?;
                let ok = w.index == 7.0 / 12.0 && w.s0 == 2.0 && w.s1 == 2.5 && w.ratio == 1.25 && w.noise_scale == 3.0;
                Ok((ok, format!("{w:?}")))
            })(),
        ),
        Check::from(
            "enumeration unbiasedness",
            (|| {
                let u = unbiasedness(10, 10, &FLIP_GRID, seed, exec)?;
                let worst = u.rho.max(u.s0).max(u.s1).max(u.ratio).max(u.probability);
                Ok((worst <= 1e-12, format!("{} cases, max deviation {worst:.3e}", u.cases)))
            })(),
        ),
        Check::from(
            "edge sensitivity bound",
            (|| {
                let s = sensitivity_search(100, 12, 4, seed, exec)?;
                let star = star_attainment(0.4)?;
                Ok((
                    s.violations == 0 && (0.99..=1.0).contains(&star),
                    format!(
                        "{} instances, {} violations, max ratio {:.4}; star attains {star:.4}",
                        s.instances, s.violations, s.max_ratio
                    ),
                ))
            })(),
        ),
        Check::from(
            "naive recomputation",
            (|| {
                let d = naive_agreement(50, seed)?;
                Ok((d <= 1e-12, format!("max deviation {d:.3e}")))
            })(),
        ),
        Check::from(
            "truncated Laplace",
            (|| {
                let t = trunc_laplace_check(1.0, 0.05, 200_000, seed, exec)?;
                Ok((
                    t.outside_support == 0 && t.variance_rel_err < 0.03 && t.quadrature_err < 1e-8,
                    format!(
                        "A = {:.6}, σ² = {:.8}, sample rel err {:.4}, quadrature err {:.2e}",
                        t.params.bound, t.params.variance, t.variance_rel_err, t.quadrature_err
                    ),
                ))
            })(),
        ),
        Check::from(
            "moment sensitivity",
            (|| {
                let m = moment_sensitivity(200, 6, 9, seed, exec);
                let tol = 1.0 + 1e-12;
                Ok((
                    m.nvar_ratio <= tol && m.ncov_ratio <= tol && m.ncov_two_row_ratio <= tol,
                    format!("{m:?}"),
                ))
            })(),
        ),
        Check::from(
            "noise-disabled regression",
            (|| {
                let d = disabled_mafr_identity(seed)?;
                Ok((d == 0.0, format!("difference {d:e}")))
            })(),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        for c in run_all(7, Exec::default()) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for (eps, delta) in [(1.0, 0.05), (2.0, 1e-3), (4.0, 1e-5), (0.5, 0.2)] {
            let p = TruncLaplaceParams::new(1.0, eps, delta).unwrap();
            assert!((trunc_variance_quadrature(&p, 200_000) - p.variance).abs() < 1e-10);
        }
    }

    #[test]
    fn random_graphs_have_both_groups() {
        let mut rng = RngStream::new(1, 1);
        for _ in 0..50 {
            let g = random_small_graph(&mut rng, 3, 8, true);
            let l = g.require_binary().unwrap();
            assert!(l.iter().any(|x| x.is_a()) && l.iter().any(|x| x.is_b()));
            assert!((0..g.node_count()).all(|i| g.degree(i) > 0.0));
        }
    }
}
