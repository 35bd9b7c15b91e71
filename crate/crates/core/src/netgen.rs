//! Random labeled graphs: Erdős–Rényi, two-block SBM, and the
//! exponential-homophily graphon.
//!
//! Every generator fills the upper triangle row by row. Row `i` owns an RNG
//! stream derived from `(seed, i)`, so the edge set does not depend on the
//! number of threads. Within a row, candidates at a constant probability are
//! visited by geometric skipping, which keeps generation `O(n + edges)`.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::{BinaryLabel, LabeledGraph};
use crate::noise::RngStream;

const ROW_TAG: u64 = 0x726f_7773;
const RANK_TAG: u64 = 0x7261_6e6b;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorSpec {
    /// Every pair present with `p_edge`. The first `⌊frac_a·n⌋` nodes are
    /// labeled `a`.
    Er { n: usize, p_edge: f64, frac_a: f64 },
    /// Two blocks: `⌊frac_a·n⌋` nodes labeled `a`, the rest `b`.
    Sbm2 {
        n: usize,
        p_within: f64,
        p_between: f64,
        frac_a: f64,
    },
    /// Ranks `x_i ~ U[0,1]` and edge probability
    /// `d̄/((n−1)·κ(h))·e^{−h|x_i−x_j|}` with `κ(h) = ∬ e^{−h|x−y|}`.
    Graphon { n: usize, d_bar: f64, h: f64 },
}

impl GeneratorSpec {
    pub fn node_count(&self) -> usize {
        match *self {
            GeneratorSpec::Er { n, .. } | GeneratorSpec::Sbm2 { n, .. } | GeneratorSpec::Graphon { n, .. } => n,
        }
    }

    pub fn with_node_count(mut self, new_n: usize) -> Self {
        match &mut self {
            GeneratorSpec::Er { n, .. } | GeneratorSpec::Sbm2 { n, .. } | GeneratorSpec::Graphon { n, .. } => {
                *n = new_n
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if n > u32::MAX as usize {
            return Err(Error::TooLarge {
                what: "node count",
                max: u32::MAX as usize,
                got: n,
            });
        }
        match *self {
            GeneratorSpec::Er { p_edge, frac_a, .. } => {
                check_probability("p_edge", p_edge)?;
                check_fraction(frac_a)
            }
            GeneratorSpec::Sbm2 {
                p_within,
                p_between,
                frac_a,
                ..
            } => {
                check_probability("p_within", p_within)?;
                check_probability("p_between", p_between)?;
                check_fraction(frac_a)
            }
            GeneratorSpec::Graphon { d_bar, h, .. } => {
                if !(h.is_finite() && h >= 0.0) {
                    return Err(Error::param("h", h, "must be nonnegative"));
                }
                if !(d_bar.is_finite() && d_bar >= 0.0 && d_bar <= (n - 1) as f64) {
                    return Err(Error::param("d_bar", d_bar, "need 0 <= d_bar <= n-1"));
                }
                let peak = graphon_peak_probability(n, d_bar, h);
                if peak > 1.0 {
                    return Err(Error::ProbabilityTooLarge { probability: peak });
                }
                Ok(())
            }
        }
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(name, p, "must lie in [0, 1]"))
    }
}

fn check_fraction(frac_a: f64) -> Result<()> {
    if frac_a > 0.0 && frac_a < 1.0 {
        Ok(())
    } else {
        Err(Error::param("frac_a", frac_a, "must lie in (0, 1)"))
    }
}

/// `κ(h) = ∬_{[0,1]²} e^{−h|x−y|} dx dy = 2/h − (2/h²)(1 − e^{−h})`, with
/// `κ(0) = 1`.
pub fn graphon_normalizer(h: f64) -> f64 {
    if h < 1e-3 {
        1.0 - h / 3.0 + h * h / 12.0 - h * h * h / 60.0
    } else {
        2.0 / h + 2.0 / (h * h) * (-h).exp_m1()
    }
}

/// Edge probability at rank gap 0, the largest over all pairs.
pub fn graphon_peak_probability(n: usize, d_bar: f64, h: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    d_bar / ((n - 1) as f64 * graphon_normalizer(h))
}

/// Edge probability for ranks `x_i`, `x_j`.
pub fn graphon_probability(n: usize, d_bar: f64, h: f64, xi: f64, xj: f64) -> f64 {
    graphon_peak_probability(n, d_bar, h) * (-h * (xi - xj).abs()).exp()
}

pub fn block_labels(n: usize, frac_a: f64) -> Vec<BinaryLabel> {
    let na = (frac_a * n as f64).floor() as usize;
    (0..n)
        .map(|i| if i < na { BinaryLabel::A } else { BinaryLabel::B })
        .collect()
}

/// Draws a graph from `spec`. Output depends only on `(spec, seed)`.
pub fn generate(spec: &GeneratorSpec, seed: u64, exec: Exec) -> Result<LabeledGraph> {
    spec.validate()?;
    let n = spec.node_count();
    match *spec {
        GeneratorSpec::Er { p_edge, frac_a, .. } => {
            let rows = exec.map(n, |i| {
                let mut rng = RngStream::derive(seed, &[ROW_TAG, i as u64]);
                let mut row = Vec::new();
                skip_fill(i + 1, n, p_edge, &mut rng, &mut row);
                row
            });
            LabeledGraph::from_upper_rows(&rows).with_binary_labels(block_labels(n, frac_a))
        }
        GeneratorSpec::Sbm2 {
            p_within,
            p_between,
            frac_a,
            ..
        } => {
            let labels = block_labels(n, frac_a);
            let na = labels.iter().filter(|l| l.is_a()).count();
            let rows = exec.map(n, |i| {
                let mut rng = RngStream::derive(seed, &[ROW_TAG, i as u64]);
                let mut row = Vec::new();
                if i < na {
                    skip_fill(i + 1, na, p_within, &mut rng, &mut row);
                    skip_fill(na, n, p_between, &mut rng, &mut row);
                } else {
                    skip_fill(i + 1, n, p_within, &mut rng, &mut row);
                }
                row
            });
            LabeledGraph::from_upper_rows(&rows).with_binary_labels(labels)
        }
        GeneratorSpec::Graphon { d_bar, h, .. } => {
            let mut rank_rng = RngStream::derive(seed, &[RANK_TAG]);
            let x: Vec<f64> = (0..n).map(|_| rank_rng.uniform()).collect();
            let peak = graphon_peak_probability(n, d_bar, h);
            let rows = exec.map(n, |i| {
                let mut rng = RngStream::derive(seed, &[ROW_TAG, i as u64]);
                let mut candidates = Vec::new();
                skip_fill(i + 1, n, peak, &mut rng, &mut candidates);
                // Thinning: a candidate drawn at the peak rate survives with
                // the kernel's relative weight.
                candidates.retain(|&j| rng.uniform() < (-h * (x[i] - x[j as usize]).abs()).exp());
                candidates
            });
            LabeledGraph::from_upper_rows(&rows).with_continuous_labels(x)
        }
    }
}

/// Appends each `j ∈ [lo, hi)` independently with probability `p`.
fn skip_fill(lo: usize, hi: usize, p: f64, rng: &mut RngStream, out: &mut Vec<u32>) {
    if lo >= hi || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        out.extend(lo as u32..hi as u32);
        return;
    }
    let log_q = (-p).ln_1p();
    let mut j = lo;
    loop {
        let skip = (rng.open_uniform().ln() / log_q).floor();
        if skip >= (hi - j) as f64 {
            return;
        }
        j += skip as usize;
        out.push(j as u32);
        j += 1;
    }
}
