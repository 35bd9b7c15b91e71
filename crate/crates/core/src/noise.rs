//! Seeded randomness: RNG streams, randomized response, Laplace and
//! truncated Laplace sampling.
//!
//! # Stream derivation
//!
//! An [`RngStream`] is a ChaCha8 generator keyed by a 64-bit seed and a
//! 64-bit stream id. Components that need many independent streams derive
//! the stream id from a tuple of integers with [`stream_id`], e.g.
//! `(stage tag, graph index, noise index)`. Identical `(seed, stream id)`
//! pairs reproduce identical draws on every platform with the same build.
//!
//! All samplers consume a fixed number of uniforms per draw (inverse-CDF
//! sampling, no rejection), so stream positions never depend on values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::BinaryLabel;

/// Smallest label budget accepted on the binary path. Below it the
/// debiasing factor `1/(1-2p)` is meaningless in practice.
pub const MIN_BINARY_EPS_LABEL: f64 = 1e-6;

/// `(ε_l, ε_e, δ_l)`. The edge mechanism is always pure (`δ_e = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub eps_label: f64,
    pub eps_edge: f64,
    pub delta_label: f64,
}

impl PrivacyBudget {
    /// Pure budget for the binary path.
    pub fn pure(eps_label: f64, eps_edge: f64) -> Result<Self> {
        Self::new(eps_label, eps_edge, 0.0)
    }

    pub fn new(eps_label: f64, eps_edge: f64, delta_label: f64) -> Result<Self> {
        positive("eps_label", eps_label)?;
        positive("eps_edge", eps_edge)?;
        if !(0.0..1.0).contains(&delta_label) {
            return Err(Error::param("delta_label", delta_label, "must lie in [0, 1)"));
        }
        Ok(Self {
            eps_label,
            eps_edge,
            delta_label,
        })
    }

    /// Splits `total` so that `ε_l / (ε_l + ε_e) = label_fraction`.
    pub fn split(total: f64, label_fraction: f64, delta_label: f64) -> Result<Self> {
        if !(label_fraction > 0.0 && label_fraction < 1.0) {
            return Err(Error::param("label_fraction", label_fraction, "must lie in (0, 1)"));
        }
        Self::new(total * label_fraction, total * (1.0 - label_fraction), delta_label)
    }

    /// Composed guarantee `(ε_l + ε_e, δ_l)`.
    pub fn total(&self) -> (f64, f64) {
        (self.eps_label + self.eps_edge, self.delta_label)
    }

    pub fn label_fraction(&self) -> f64 {
        self.eps_label / (self.eps_label + self.eps_edge)
    }

    pub(crate) fn require_pure(&self) -> Result<()> {
        if self.delta_label != 0.0 {
            return Err(Error::param(
                "delta_label",
                self.delta_label,
                "the binary mechanism is pure; delta must be 0",
            ));
        }
        Ok(())
    }

    pub(crate) fn require_approximate(&self) -> Result<()> {
        if !(self.delta_label > 0.0 && self.delta_label < 1.0) {
            return Err(Error::param(
                "delta_label",
                self.delta_label,
                "truncated Laplace needs delta in (0, 1)",
            ));
        }
        Ok(())
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::param(name, v, "must be positive and finite"));
    }
    Ok(())
}

/// Whether mechanisms inject noise. `Disabled` turns every mechanism into
/// the identity and is NOT private; it exists for oracle comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Private,
    Disabled,
}

/// Mixes integer components into a stream id (SplitMix64 finalizer chain).
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x6a09_e667_f3bc_c909;
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Stream keyed by `(seed, stream_id(parts))`.
    pub fn derive(seed: u64, parts: &[u64]) -> Self {
        Self::new(seed, stream_id(parts))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.random::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn open_uniform(&mut self) -> f64 {
        ((self.rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }
}

/// Randomized-response flip probability `p = 1/(1 + e^{ε_l})`.
pub fn flip_probability(eps_label: f64) -> Result<f64> {
    if !(eps_label.is_finite() && eps_label > 0.0) {
        return Err(Error::param("eps_label", eps_label, "must be positive"));
    }
    if eps_label < MIN_BINARY_EPS_LABEL {
        return Err(Error::param(
            "eps_label",
            eps_label,
            "below 1e-6 the randomized-response debiasing is unusable",
        ));
    }
    // 1/(1+e^x) written to stay finite for large x.
    Ok(1.0 / (1.0 + eps_label.exp()))
}

/// Privatized binary labels and the flip probability that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPrivateLabels {
    pub labels: Vec<BinaryLabel>,
    pub p: f64,
}

impl BinaryPrivateLabels {
    /// Labels taken as already privatized with flip probability `p`.
    /// `p = 0` is the noise-disabled identity channel.
    pub fn assume(labels: Vec<BinaryLabel>, p: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&p) {
            return Err(Error::param("p", p, "flip probability must lie in [0, 1/2)"));
        }
        Ok(Self { labels, p })
    }
}

/// Flips each label independently with probability `p`. Draws exactly one
/// uniform per node, so runs at different `p` on the same stream are
/// coupled.
pub fn randomize_labels(labels: &[BinaryLabel], p: f64, rng: &mut RngStream) -> Result<BinaryPrivateLabels> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::param("p", p, "flip probability must lie in [0, 1/2)"));
    }
    let out = labels
        .iter()
        .map(|&l| if rng.uniform() < p { l.flipped() } else { l })
        .collect();
    Ok(BinaryPrivateLabels { labels: out, p })
}

/// Laplace quantile function at `q ∈ (0, 1)`.
pub fn laplace_quantile(q: f64, scale: f64) -> f64 {
    let u = q - 0.5;
    -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// Zero-mean Laplace draw with the given scale.
pub fn laplace(scale: f64, rng: &mut RngStream) -> Result<f64> {
    positive("scale", scale)?;
    Ok(laplace_quantile(rng.open_uniform(), scale))
}

/// Parameters of the truncated Laplace density `B e^{-|x|/λ}` on `[-A, A]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncLaplaceParams {
    /// λ
    pub scale: f64,
    /// A
    pub bound: f64,
    /// B
    pub normalizer: f64,
    /// σ², the variance of one draw.
    pub variance: f64,
}

impl TruncLaplaceParams {
    /// Calibrates the mechanism for sensitivity `Δ` and budget `(ε, δ)`.
    pub fn new(delta_sens: f64, eps: f64, delta: f64) -> Result<Self> {
        positive("sensitivity", delta_sens)?;
        positive("eps", eps)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", delta, "must lie in (0, 1)"));
        }
        let scale = delta_sens / eps;
        let bound = scale * (eps.exp_m1() / (2.0 * delta)).ln_1p();
        Ok(Self::from_scale_and_bound(scale, bound))
    }

    pub fn from_scale_and_bound(scale: f64, bound: f64) -> Self {
        let r = bound / scale;
        // 1 - e^{-r}
        let mass = -(-r).exp_m1();
        let normalizer = 1.0 / (2.0 * scale * mass);
        let variance = scale * scale * (2.0 - (-r).exp() * (r * r + 2.0 * r + 2.0)) / mass;
        Self {
            scale,
            bound,
            normalizer,
            variance,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        if x.abs() > self.bound {
            0.0
        } else {
            self.normalizer * (-x.abs() / self.scale).exp()
        }
    }

    /// Quantile function; monotone in `q` and maps `[0, 1]` onto `[-A, A]`.
    pub fn quantile(&self, q: f64) -> f64 {
        let mass = -(-self.bound / self.scale).exp_m1();
        let (v, sign) = if q >= 0.5 {
            (2.0 * q - 1.0, 1.0)
        } else {
            (1.0 - 2.0 * q, -1.0)
        };
        let x = -self.scale * (-v * mass).ln_1p();
        sign * x.min(self.bound)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -self.bound {
            return 0.0;
        }
        if x >= self.bound {
            return 1.0;
        }
        let mass = -(-self.bound / self.scale).exp_m1();
        let half = 0.5 * (-(-x.abs() / self.scale).exp_m1()) / mass;
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }
}

pub fn trunc_laplace(params: &TruncLaplaceParams, rng: &mut RngStream) -> f64 {
    params.quantile(rng.uniform())
}
