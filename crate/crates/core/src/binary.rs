//! Private cross-type connectedness for binary labels.
//!
//! Pipeline: randomized response on labels (ε_l), debiased weights and
//! individual shares, a Hájek ratio of the debiased sums, and Laplace noise
//! calibrated to the edge sensitivity of the numerator (ε_e). The two stages
//! compose to `(ε_l + ε_e)` edge-adjacent DP.

use crate::error::{Error, Result};
use crate::graph::{CellSelection, LabeledGraph};
use crate::noise::{
    self, flip_probability, randomize_labels, BinaryPrivateLabels, NoiseMode, PrivacyBudget, RngStream,
};

/// Per-ego debiased quantities, aligned with `nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedNodeStats {
    pub nodes: Vec<usize>,
    /// `w_i = (1{l̂_i = a} − p)/(1 − 2p)`
    pub w: Vec<f64>,
    /// Share of `i`'s weight on privatized-B neighbors; 0 when isolated.
    pub rho_hat: Vec<f64>,
    /// `ρ̃_i = (ρ̂_i − p)/(1 − 2p)`
    pub rho_tilde: Vec<f64>,
    pub p: f64,
}

pub fn debias_node_stats(
    g: &LabeledGraph,
    private: &BinaryPrivateLabels,
    cell: Option<&CellSelection>,
) -> Result<DebiasedNodeStats> {
    let p = private.p;
    if !(0.0..0.5).contains(&p) {
        return Err(Error::param("p", p, "flip probability must lie in [0, 1/2)"));
    }
    if private.labels.len() != g.node_count() {
        return Err(Error::LabelLength {
            kind: "privatized binary",
            got: private.labels.len(),
            expected: g.node_count(),
        });
    }
    let view = g.view(cell)?;
    let labels = &private.labels;
    let denom = 1.0 - 2.0 * p;
    let members = view.members();
    let mut w = Vec::with_capacity(members.len());
    let mut rho_hat = Vec::with_capacity(members.len());
    let mut rho_tilde = Vec::with_capacity(members.len());
    for &i in members {
        let mut to_b = 0.0;
        let mut total = 0.0;
        for (j, e) in view.neighbors(i) {
            total += e;
            if labels[j].is_b() {
                to_b += e;
            }
        }
        let rh = if total > 0.0 { to_b / total } else { 0.0 };
        let indicator = if labels[i].is_a() { 1.0 } else { 0.0 };
        w.push((indicator - p) / denom);
        rho_hat.push(rh);
        rho_tilde.push((rh - p) / denom);
    }
    Ok(DebiasedNodeStats {
        nodes: members.to_vec(),
        w,
        rho_hat,
        rho_tilde,
        p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HajekSums {
    pub s0: f64,
    pub s1: f64,
    pub ratio: f64,
}

/// `(S₀, S₁)` without the sign check.
pub fn hajek_sums(stats: &DebiasedNodeStats) -> (f64, f64) {
    let s0 = stats.w.iter().sum();
    let s1 = stats.w.iter().zip(&stats.rho_tilde).map(|(w, r)| w * r).sum();
    (s0, s1)
}

/// Hájek ratio `S₁/S₀`. Fails when `S₀ ≤ 0`.
pub fn hajek(stats: &DebiasedNodeStats) -> Result<HajekSums> {
    let (s0, s1) = hajek_sums(stats);
    if s0 <= 0.0 {
        return Err(Error::NonPositiveDenominator { s0 });
    }
    Ok(HajekSums { s0, s1, ratio: s1 / s0 })
}

/// Edge sensitivity of `S₁` at fixed privatized labels: `2(1−p)/(1−2p)²`.
pub fn edge_sensitivity_bound(p: f64) -> f64 {
    2.0 * (1.0 - p) / ((1.0 - 2.0 * p) * (1.0 - 2.0 * p))
}

/// Laplace scale for the ratio: sensitivity over `ε_e · S₀`.
pub fn noise_scale(p: f64, eps_edge: f64, s0: f64) -> f64 {
    edge_sensitivity_bound(p) / (eps_edge * s0)
}

#[derive(Debug, Clone, Default)]
pub struct BinaryReleaseOptions {
    pub cell: Option<CellSelection>,
    /// Post-process the released value into `[0, 1]`.
    pub clamp: bool,
    pub noise: NoiseMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReleaseFlags {
    /// `S₀ ≤ 0`: nothing released, budget spent.
    pub s0_nonpositive_abort: bool,
    pub clamped: bool,
}

/// Diagnostics for quantities the asymptotic theory assumes (group share,
/// degree bound). Derived from privatized data only, except `max_degree`,
/// which is reported for the analyst and not released.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleaseDiagnostics {
    pub ego_count: usize,
    /// `S₀ / #egos`, the debiased estimate of the group-A share.
    pub group_fraction_hat: f64,
    pub max_degree: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDpRelease {
    pub cell: Option<String>,
    /// `None` when aborted.
    pub value: Option<f64>,
    pub s0: f64,
    pub s1: f64,
    /// Realized Laplace scale; `None` when aborted.
    pub noise_scale: Option<f64>,
    pub p: f64,
    pub budget: PrivacyBudget,
    pub flags: ReleaseFlags,
    pub diagnostics: ReleaseDiagnostics,
}

impl BinaryDpRelease {
    pub fn aborted(&self) -> bool {
        self.flags.s0_nonpositive_abort
    }
}

/// End-to-end private release of `C^{A→B}` (optionally per cell).
///
/// With `NoiseMode::Disabled` labels are left untouched, `p` is taken as 0
/// and no Laplace noise is added, which reproduces the true index up to
/// rounding.
pub fn release_binary(
    g: &LabeledGraph,
    budget: &PrivacyBudget,
    rng: &mut RngStream,
    opts: &BinaryReleaseOptions,
) -> Result<BinaryDpRelease> {
    budget.require_pure()?;
    let labels = g.require_binary()?;
    let p = flip_probability(budget.eps_label)?;
    let private = match opts.noise {
        NoiseMode::Private => randomize_labels(labels, p, rng)?,
        NoiseMode::Disabled => BinaryPrivateLabels::assume(labels.to_vec(), 0.0)?,
    };
    release_with_private_labels(g, &private, budget, rng, opts)
}

/// Second stage only: debias, Hájek ratio, Laplace noise. `private` must
/// come from a randomized-response run at `private.p` (or be the identity
/// channel with `p = 0`).
pub fn release_with_private_labels(
    g: &LabeledGraph,
    private: &BinaryPrivateLabels,
    budget: &PrivacyBudget,
    rng: &mut RngStream,
    opts: &BinaryReleaseOptions,
) -> Result<BinaryDpRelease> {
    let stats = debias_node_stats(g, private, opts.cell.as_ref())?;
    if stats.nodes.is_empty() {
        return Err(Error::EmptyGroup {
            cell: opts.cell.as_ref().map(|c| c.id.clone()),
        });
    }
    let (s0, s1) = hajek_sums(&stats);
    let diagnostics = ReleaseDiagnostics {
        ego_count: stats.nodes.len(),
        group_fraction_hat: s0 / stats.nodes.len() as f64,
        max_degree: g.max_degree(),
    };
    let mut release = BinaryDpRelease {
        cell: opts.cell.as_ref().map(|c| c.id.clone()),
        value: None,
        s0,
        s1,
        noise_scale: None,
        p: private.p,
        budget: *budget,
        flags: ReleaseFlags::default(),
        diagnostics,
    };
    if s0 <= 0.0 {
        release.flags.s0_nonpositive_abort = true;
        return Ok(release);
    }
    let scale = noise_scale(private.p, budget.eps_edge, s0);
    let mut value = s1 / s0;
    if opts.noise == NoiseMode::Private {
        value += noise::laplace(scale, rng)?;
    }
    if opts.clamp {
        let clamped = value.clamp(0.0, 1.0);
        release.flags.clamped = clamped != value;
        value = clamped;
    }
    release.value = Some(value);
    release.noise_scale = Some(scale);
    Ok(release)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BinaryLabel::*;
    use crate::indices::cross_connectedness;

    fn example_graph() -> LabeledGraph {
        LabeledGraph::from_unit_edges(4, [(0, 2), (0, 3), (0, 1), (1, 3)])
            .unwrap()
            .with_binary_labels(vec![A, A, B, B])
            .unwrap()
    }

    #[test]
    fn example_hand_trace() {
        let g = example_graph();
        let private = BinaryPrivateLabels::assume(vec![A, A, B, B], 0.25).unwrap();
        let stats = debias_node_stats(&g, &private, None).unwrap();
        assert_eq!(stats.w, vec![1.5, 1.5, -0.5, -0.5]);
        let expect_rt = [5.0 / 6.0, 0.5, -0.5, -0.5];
        for (a, b) in stats.rho_tilde.iter().zip(expect_rt) {
            assert!((a - b).abs() < 1e-15);
        }
        let h = hajek(&stats).unwrap();
        assert_eq!(h.s0, 2.0);
        assert!((h.s1 - 2.5).abs() < 1e-15);
        assert!((h.ratio - 1.25).abs() < 1e-15);
        assert_eq!(noise_scale(0.25, 1.0, h.s0), 3.0);
    }

    #[test]
    fn debias_fixed_points() {
        // ρ̂ = p → 0 and ρ̂ = 1 − p → 1.
        let p: f64 = 0.2;
        assert_eq!((p - p) / (1.0 - 2.0 * p), 0.0);
        assert!((((1.0 - p) - p) / (1.0 - 2.0 * p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_b_privatized_aborts() {
        let g = example_graph();
        let p = 0.1;
        let private = BinaryPrivateLabels::assume(vec![B; 4], p).unwrap();
        let stats = debias_node_stats(&g, &private, None).unwrap();
        let (s0, _) = hajek_sums(&stats);
        assert!((s0 + 4.0 * p / (1.0 - 2.0 * p)).abs() < 1e-15);
        assert!(matches!(hajek(&stats), Err(Error::NonPositiveDenominator { .. })));

        let budget = PrivacyBudget::pure(1.0, 1.0).unwrap();
        let mut rng = RngStream::new(0, 0);
        let r = release_with_private_labels(&g, &private, &budget, &mut rng, &BinaryReleaseOptions::default()).unwrap();
        assert!(r.aborted());
        assert_eq!(r.value, None);
        assert_eq!(r.noise_scale, None);
    }

    #[test]
    fn noise_disabled_release_is_exact() {
        let g = example_graph();
        let budget = PrivacyBudget::pure(1.0, 1.0).unwrap();
        let mut rng = RngStream::new(0, 0);
        let opts = BinaryReleaseOptions {
            noise: NoiseMode::Disabled,
            ..Default::default()
        };
        let r = release_binary(&g, &budget, &mut rng, &opts).unwrap();
        let truth = cross_connectedness(&g, None).unwrap().value;
        assert!((r.value.unwrap() - truth).abs() <= 2.0 * f64::EPSILON);
        assert_eq!(r.s0, 2.0);
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn huge_edge_budget_gives_ratio() {
        let g = example_graph();
        let budget = PrivacyBudget::pure(2.0, 1e12).unwrap();
        let mut rng = RngStream::new(5, 1);
        let r = release_binary(&g, &budget, &mut rng, &BinaryReleaseOptions::default()).unwrap();
        if let Some(v) = r.value {
            assert!((v - r.s1 / r.s0).abs() < 1e-9);
        }
    }

    #[test]
    fn clamp_flag_set_when_value_moves() {
        let g = example_graph();
        let private = BinaryPrivateLabels::assume(vec![A, A, B, B], 0.25).unwrap();
        let budget = PrivacyBudget::pure(3f64.ln(), 1e9).unwrap();
        let mut rng = RngStream::new(1, 1);
        let opts = BinaryReleaseOptions {
            clamp: true,
            ..Default::default()
        };
        let r = release_with_private_labels(&g, &private, &budget, &mut rng, &opts).unwrap();
        // Unclamped ratio is 1.25.
        assert_eq!(r.value, Some(1.0));
        assert!(r.flags.clamped);
    }

    #[test]
    fn rejects_bad_budgets_and_labels() {
        let g = example_graph();
        let mut rng = RngStream::new(0, 0);
        let approx = PrivacyBudget::new(1.0, 1.0, 0.1).unwrap();
        assert!(release_binary(&g, &approx, &mut rng, &BinaryReleaseOptions::default()).is_err());
        let short = BinaryPrivateLabels::assume(vec![A, B], 0.1).unwrap();
        assert!(debias_node_stats(&g, &short, None).is_err());
        let bare = LabeledGraph::from_unit_edges(2, [(0, 1)]).unwrap();
        let budget = PrivacyBudget::pure(1.0, 1.0).unwrap();
        assert!(matches!(
            release_binary(&bare, &budget, &mut rng, &BinaryReleaseOptions::default()),
            Err(Error::MissingLabels(_))
        ));
    }

    #[test]
    fn rho_tilde_within_range() {
        let g = example_graph();
        let mut rng = RngStream::new(9, 9);
        for &p in &[0.05, 0.1, 0.25, 0.4] {
            for _ in 0..50 {
                let private = randomize_labels(g.require_binary().unwrap(), p, &mut rng).unwrap();
                let s = debias_node_stats(&g, &private, None).unwrap();
                let lo = -p / (1.0 - 2.0 * p);
                let hi = (1.0 - p) / (1.0 - 2.0 * p);
                for &r in &s.rho_tilde {
                    assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
                }
                for &w in &s.w {
                    assert!((w - lo).abs() < 1e-12 || (w - hi).abs() < 1e-12);
                }
            }
        }
    }
}
