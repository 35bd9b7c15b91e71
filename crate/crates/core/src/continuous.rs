//! Private friend-rank regression for continuous labels.
//!
//! Ranks are privatized with truncated Laplace noise (ε_l, δ_l), which keeps
//! them inside `[−A, 1+A]`. Private average friend ranks are neighbor means
//! of the noised ranks. The regression of private AFR on private rank is
//! released through noisy sufficient statistics on those bounds (ε_e), and
//! the slope is then corrected for the known regressor noise variance.

use crate::error::{Error, Result};
use crate::graph::{CellSelection, LabeledGraph};
use crate::indices::{self, CenteredMoments, LinearFit};
use crate::noise::{laplace, trunc_laplace, NoiseMode, PrivacyBudget, RngStream, TruncLaplaceParams};

/// Sensitivity of a single rank in `[0, 1]`.
pub const RANK_SENSITIVITY: f64 = 1.0;

/// Relative margin `s² − σ² ≥ 1e-9·s²` required by the slope correction.
pub const MIN_ATTENUATION_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PrivateRanks {
    pub x_hat: Vec<f64>,
    /// `None` in noise-disabled mode.
    pub params: Option<TruncLaplaceParams>,
    /// `[−A, 1+A]`, or `[0, 1]` without noise.
    pub bounds: (f64, f64),
}

impl PrivateRanks {
    /// Noise variance of each `x̂_i − x_i`.
    pub fn noise_variance(&self) -> f64 {
        self.params.map_or(0.0, |p| p.variance)
    }
}

/// Adds independent truncated-Laplace noise to every rank.
pub fn privatize_ranks(ranks: &[f64], eps_label: f64, delta_label: f64, rng: &mut RngStream) -> Result<PrivateRanks> {
    crate::graph::validate_ranks(ranks)?;
    let params = TruncLaplaceParams::new(RANK_SENSITIVITY, eps_label, delta_label)?;
    let (lo, hi) = (-params.bound, 1.0 + params.bound);
    // The clamp only absorbs rounding in x + z.
    let x_hat = ranks
        .iter()
        .map(|&x| (x + trunc_laplace(&params, rng)).clamp(lo, hi))
        .collect();
    Ok(PrivateRanks {
        x_hat,
        params: Some(params),
        bounds: (lo, hi),
    })
}

/// Which global sensitivity calibrates the noise on each sufficient
/// statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SensitivityPairing {
    /// Noise on `ncov` scaled by `Δ₂` (the covariance sensitivity), noise on
    /// `nvar` by `Δ₁`.
    #[default]
    Matched,
    /// Noise on `ncov` scaled by `Δ₁` and on `nvar` by `Δ₂`, the two
    /// sensitivities swapped. For comparison runs only.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SuffStatsConfig {
    pub noise: NoiseMode,
    pub pairing: SensitivityPairing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivities {
    /// `Δ₁ = (1 − 1/n)(b − a)²`, global sensitivity of `nvar`.
    pub nvar: f64,
    /// `Δ₂ = 2(1 − 1/n)(b − a)(b′ − a′)`, global sensitivity of `ncov`.
    pub ncov: f64,
    /// `Δ₃ = (b′ − a′)/n + |β̂|(b − a)/n`; only set once `β̂` exists.
    pub intercept: Option<f64>,
}

pub fn suff_stat_sensitivities(n: usize, x_bounds: (f64, f64), y_bounds: (f64, f64)) -> Sensitivities {
    let shrink = 1.0 - 1.0 / n as f64;
    let wx = x_bounds.1 - x_bounds.0;
    let wy = y_bounds.1 - y_bounds.0;
    Sensitivities {
        nvar: shrink * wx * wx,
        ncov: 2.0 * shrink * wx * wy,
        intercept: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuffStatsOutcome {
    Released {
        fit: LinearFit,
        sensitivities: Sensitivities,
    },
    /// Noised `nvar` was not positive; nothing released.
    Aborted { sensitivities: Sensitivities },
}

impl SuffStatsOutcome {
    pub fn fit(&self) -> Option<LinearFit> {
        match self {
            SuffStatsOutcome::Released { fit, .. } => Some(*fit),
            SuffStatsOutcome::Aborted { .. } => None,
        }
    }
}

/// ε-DP simple linear regression from noised centered sufficient
/// statistics on bounded data.
pub fn dp_suff_stats(
    x: &[f64],
    y: &[f64],
    x_bounds: (f64, f64),
    y_bounds: (f64, f64),
    eps: f64,
    rng: &mut RngStream,
    cfg: &SuffStatsConfig,
) -> Result<SuffStatsOutcome> {
    if x.len() != y.len() {
        return Err(Error::LabelLength {
            kind: "regression response",
            got: y.len(),
            expected: x.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewObservations { min: 2, got: n });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::param("eps", eps, "must be positive"));
    }
    for (values, (lo, hi)) in [(x, x_bounds), (y, y_bounds)] {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::param("bounds", hi - lo, "need lo < hi"));
        }
        if let Some(index) = values.iter().position(|v| !(*v >= lo && *v <= hi)) {
            return Err(Error::OutOfBounds {
                index,
                value: values[index],
                lo,
                hi,
            });
        }
    }

    let m = CenteredMoments::of(x, y);
    let mut sens = suff_stat_sensitivities(n, x_bounds, y_bounds);
    let nf = n as f64;

    if cfg.noise == NoiseMode::Disabled {
        if m.nvar <= 0.0 {
            return Ok(SuffStatsOutcome::Aborted { sensitivities: sens });
        }
        let beta = m.ncov / m.nvar;
        sens.intercept = Some((y_bounds.1 - y_bounds.0) / nf + beta.abs() * (x_bounds.1 - x_bounds.0) / nf);
        return Ok(SuffStatsOutcome::Released {
            fit: LinearFit {
                alpha: m.mean_y - beta * m.mean_x,
                beta,
            },
            sensitivities: sens,
        });
    }

    let (ncov_sens, nvar_sens) = match cfg.pairing {
        SensitivityPairing::Matched => (sens.ncov, sens.nvar),
        SensitivityPairing::Literal => (sens.nvar, sens.ncov),
    };
    let l1 = laplace(3.0 * ncov_sens / eps, rng)?;
    let l2 = laplace(3.0 * nvar_sens / eps, rng)?;
    let noisy_nvar = m.nvar + l2;
    if noisy_nvar <= 0.0 {
        return Ok(SuffStatsOutcome::Aborted { sensitivities: sens });
    }
    let beta = (m.ncov + l1) / noisy_nvar;
    let d3 = (y_bounds.1 - y_bounds.0) / nf + beta.abs() * (x_bounds.1 - x_bounds.0) / nf;
    sens.intercept = Some(d3);
    let l3 = laplace(3.0 * d3 / eps, rng)?;
    Ok(SuffStatsOutcome::Released {
        fit: LinearFit {
            alpha: (m.mean_y - beta * m.mean_x) + l3,
            beta,
        },
        sensitivities: sens,
    })
}

/// Errors-in-variables correction for regressor noise of known variance
/// `sigma2`: `β̃ = β*·s²/(s² − σ²)`, `α̃ = α* + (β* − β̃)·x̄̂`.
///
/// The intercept shift uses only the private `α*` and the mean of the
/// already-private `x̂`, so no raw outcome statistic is touched.
pub fn eiv_debias(alpha_star: f64, beta_star: f64, x_hat: &[f64], sigma2: f64) -> Result<LinearFit> {
    if x_hat.len() < 2 {
        return Err(Error::TooFewObservations {
            min: 2,
            got: x_hat.len(),
        });
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::param("sigma2", sigma2, "must be a nonnegative variance"));
    }
    let m = CenteredMoments::of(x_hat, x_hat);
    let s2 = m.sample_var_x();
    if s2.is_nan() || s2 <= 0.0 || s2 - sigma2 < MIN_ATTENUATION_MARGIN * s2 {
        return Err(Error::DegenerateAttenuation { sample_var: s2, sigma2 });
    }
    let factor = s2 / (s2 - sigma2);
    let beta = beta_star * factor;
    Ok(LinearFit {
        alpha: alpha_star + (beta_star - beta) * m.mean_x,
        beta,
    })
}

#[derive(Debug, Clone, Default)]
pub struct MafrReleaseOptions {
    pub cell: Option<CellSelection>,
    pub noise: NoiseMode,
    pub pairing: SensitivityPairing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpRegression {
    /// Noised coefficients before the slope correction.
    pub star: Option<LinearFit>,
    /// Corrected coefficients.
    pub tilde: Option<LinearFit>,
    pub sigma2: f64,
    /// `A`, the truncation bound (0 without noise).
    pub bound: f64,
    pub x_bounds: (f64, f64),
    pub y_bounds: (f64, f64),
    pub sensitivities: Sensitivities,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MafrRelease {
    pub cell: Option<String>,
    pub interval: (f64, f64),
    pub budget: PrivacyBudget,
    pub regression: DpRegression,
    /// `None` when aborted.
    pub mafr: Option<f64>,
}

impl MafrRelease {
    pub fn aborted(&self) -> bool {
        self.regression.aborted
    }
}

/// End-to-end private MAFR over the rank interval `[q_lo, q_hi]`.
pub fn release_mafr(
    g: &LabeledGraph,
    budget: &PrivacyBudget,
    interval: (f64, f64),
    rng: &mut RngStream,
    opts: &MafrReleaseOptions,
) -> Result<MafrRelease> {
    budget.require_approximate()?;
    let ranks = g.require_continuous()?;
    indices::mafr(0.0, 0.0, interval.0, interval.1)?;
    let view = g.view(opts.cell.as_ref())?;

    let private = match opts.noise {
        NoiseMode::Private => privatize_ranks(ranks, budget.eps_label, budget.delta_label, rng)?,
        NoiseMode::Disabled => PrivateRanks {
            x_hat: ranks.to_vec(),
            params: None,
            bounds: (0.0, 1.0),
        },
    };
    let (lo, hi) = private.bounds;
    // Neighbor means of values in [lo, hi] stay there; the clamp only
    // absorbs rounding.
    let y_hat: Vec<f64> = indices::neighbor_means(&view, &private.x_hat)
        .into_iter()
        .map(|v| v.clamp(lo, hi))
        .collect();
    let x_hat: Vec<f64> = view.members().iter().map(|&i| private.x_hat[i]).collect();

    let cfg = SuffStatsConfig {
        noise: opts.noise,
        pairing: opts.pairing,
    };
    let outcome = dp_suff_stats(
        &x_hat,
        &y_hat,
        private.bounds,
        private.bounds,
        budget.eps_edge,
        rng,
        &cfg,
    )?;
    let sigma2 = private.noise_variance();
    let mut regression = DpRegression {
        star: None,
        tilde: None,
        sigma2,
        bound: private.params.map_or(0.0, |p| p.bound),
        x_bounds: private.bounds,
        y_bounds: private.bounds,
        sensitivities: match outcome {
            SuffStatsOutcome::Released { sensitivities, .. } | SuffStatsOutcome::Aborted { sensitivities } => {
                sensitivities
            }
        },
        aborted: false,
    };
    let Some(star) = outcome.fit() else {
        regression.aborted = true;
        return Ok(MafrRelease {
            cell: opts.cell.as_ref().map(|c| c.id.clone()),
            interval,
            budget: *budget,
            regression,
            mafr: None,
        });
    };
    let tilde = eiv_debias(star.alpha, star.beta, &x_hat, sigma2)?;
    regression.star = Some(star);
    regression.tilde = Some(tilde);
    Ok(MafrRelease {
        cell: opts.cell.as_ref().map(|c| c.id.clone()),
        interval,
        budget: *budget,
        regression,
        mafr: Some(indices::mafr(tilde.alpha, tilde.beta, interval.0, interval.1)?),
    })
}
