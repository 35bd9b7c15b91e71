//! Monte Carlo experiment runner.
//!
//! An experiment sweeps one variable over a list of values. At every sweep
//! point it draws `graphs` graphs and releases the statistic `noise_seeds`
//! times per graph. Randomness is coupled across sweep points: graph `g`
//! always uses the generator seed derived from `(seed, g)`, and noise
//! replicate `k` of graph `g` always uses the stream derived from
//! `(seed, g, k)`. The true statistic is computed once per graph.
//!
//! Work is split into `(sweep point, graph)` tasks which run through
//! [`Exec::map`], so results are identical for any thread count.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use crate::binary::{release_binary, release_with_private_labels, BinaryReleaseOptions};
use crate::continuous::{release_mafr, MafrReleaseOptions, SensitivityPairing};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::{CellMode, CellSelection, LabeledGraph};
use crate::indices::{afr, cross_connectedness, mafr, ols};
use crate::netgen::{generate, GeneratorSpec};
use crate::noise::{flip_probability, randomize_labels, stream_id, PrivacyBudget, RngStream};
use crate::stats;

pub const CSV_VERSION: u32 = 1;

const GRAPH_TAG: u64 = 0x0067_7261_7068;
const NOISE_TAG: u64 = 0x006e_6f69_7365;
const PANEL_TAG: u64 = 0x0070_616e_656c;
const CORRELATION_TAG: u64 = 0x636f_7272;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    /// Cross-type connectedness `C^{A→B}`.
    Binary,
    /// Mean average friend rank over the configured interval.
    Mafr,
    /// Slope of average friend rank on own rank.
    Slope,
}

impl FromStr for Statistic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "binary" => Ok(Statistic::Binary),
            "mafr" => Ok(Statistic::Mafr),
            "slope" => Ok(Statistic::Slope),
            other => Err(format!("unknown statistic `{other}`")),
        }
    }
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::Binary => "binary",
            Statistic::Mafr => "mafr",
            Statistic::Slope => "slope",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// A single point; `values` is ignored.
    None,
    /// `p_within` of a two-block SBM, with `p_within + p_between` held at
    /// its base value.
    Homophily,
    EpsTotal,
    /// Label share `ε_l / (ε_l + ε_e)`.
    EpsSplit,
    /// Node count. ER and SBM probabilities are rescaled to keep the
    /// expected degree of the base spec; the graphon already fixes `d̄`.
    N,
    /// Share of nodes labeled `a`.
    Composition,
    /// Upper end of the MAFR interval.
    Interval,
}

impl FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "none" => SweepVar::None,
            "homophily" | "p_within" => SweepVar::Homophily,
            "eps_total" => SweepVar::EpsTotal,
            "eps_split" => SweepVar::EpsSplit,
            "n" => SweepVar::N,
            "composition" | "frac_a" => SweepVar::Composition,
            "interval" | "q_hi" => SweepVar::Interval,
            other => return Err(format!("unknown sweep variable `{other}`")),
        })
    }
}

impl SweepVar {
    /// CSV column name.
    pub fn column(self) -> &'static str {
        match self {
            SweepVar::None => "point",
            SweepVar::Homophily => "p_within",
            SweepVar::EpsTotal => "eps_total",
            SweepVar::EpsSplit => "eps_split",
            SweepVar::N => "n",
            SweepVar::Composition => "frac_a",
            SweepVar::Interval => "q_hi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub generator: GeneratorSpec,
    pub statistic: Statistic,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub eps_total: f64,
    /// Label share of the total budget.
    pub eps_split: f64,
    /// `δ_l` for the continuous path; ignored for `binary`.
    pub delta_label: f64,
    pub interval: (f64, f64),
    pub pairing: SensitivityPairing,
    pub graphs: usize,
    pub noise_seeds: usize,
    pub seed: u64,
    /// Include wall-clock seconds per release in the CSV. Off by default so
    /// that identical specs give identical bytes.
    pub timing: bool,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(generator: GeneratorSpec, statistic: Statistic) -> Self {
        Self {
            generator,
            statistic,
            sweep: SweepVar::None,
            values: vec![0.0],
            eps_total: 2.0,
            eps_split: 0.5,
            delta_label: 1e-3,
            interval: (0.0, 0.25),
            pairing: SensitivityPairing::Matched,
            graphs: 1,
            noise_seeds: 1,
            seed: 0,
            timing: false,
            output: None,
        }
    }

    pub fn sweep(mut self, var: SweepVar, values: Vec<f64>) -> Self {
        self.sweep = var;
        self.values = values;
        self
    }

    pub fn replicates(mut self, graphs: usize, noise_seeds: usize) -> Self {
        self.graphs = graphs;
        self.noise_seeds = noise_seeds;
        self
    }

    pub fn budget(mut self, eps_total: f64, eps_split: f64) -> Self {
        self.eps_total = eps_total;
        self.eps_split = eps_split;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Parses `key = value` lines; `#` starts a comment.
    ///
    /// Keys: `generator` (`er`, `sbm2`, `graphon`), `n`, `p_edge`,
    /// `mean_degree` (ER alternative to `p_edge`), `p_within`, `p_between`,
    /// `frac_a`, `d_bar`, `h`, `statistic`, `sweep`, `values`, `eps_total`,
    /// `eps_split`, `delta_label`, `interval` (`lo, hi`), `pairing`
    /// (`matched`, `literal`), `graphs`, `noise_seeds`, `seed`, `timing`,
    /// `output`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", k + 1)))?;
            if kv.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{}`", k + 1, key.trim())));
            }
        }
        const KEYS: [&str; 22] = [
            "generator",
            "n",
            "p_edge",
            "mean_degree",
            "p_within",
            "p_between",
            "frac_a",
            "d_bar",
            "h",
            "statistic",
            "sweep",
            "values",
            "eps_total",
            "eps_split",
            "delta_label",
            "interval",
            "pairing",
            "graphs",
            "noise_seeds",
            "seed",
            "timing",
            "output",
        ];
        if let Some(key) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let mut take = |key: &str| kv.remove(key);
        fn num<T: FromStr>(key: &str, v: Option<String>) -> Result<Option<T>> {
            v.map(|s| {
                s.parse::<T>()
                    .map_err(|_| Error::Config(format!("invalid value for `{key}`: `{s}`")))
            })
            .transpose()
        }
        fn req<T>(key: &str, v: Option<T>) -> Result<T> {
            v.ok_or_else(|| Error::Config(format!("missing key `{key}`")))
        }

        let kind = req("generator", take("generator"))?;
        let n: usize = req("n", num("n", take("n"))?)?;
        let frac_a = num("frac_a", take("frac_a"))?.unwrap_or(0.5);
        let p_edge: Option<f64> = num("p_edge", take("p_edge"))?;
        let mean_degree: Option<f64> = num("mean_degree", take("mean_degree"))?;
        let p_within: Option<f64> = num("p_within", take("p_within"))?;
        let p_between: Option<f64> = num("p_between", take("p_between"))?;
        let d_bar: Option<f64> = num("d_bar", take("d_bar"))?;
        let h: Option<f64> = num("h", take("h"))?;
        let generator = match kind.as_str() {
            "er" => {
                let p_edge = match (p_edge, mean_degree) {
                    (Some(p), None) => p,
                    (None, Some(d)) if n > 1 => d / (n - 1) as f64,
                    _ => return Err(Error::Config("er needs exactly one of `p_edge`, `mean_degree`".into())),
                };
                GeneratorSpec::Er { n, p_edge, frac_a }
            }
            "sbm2" => GeneratorSpec::Sbm2 {
                n,
                p_within: req("p_within", p_within)?,
                p_between: req("p_between", p_between)?,
                frac_a,
            },
            "graphon" => GeneratorSpec::Graphon {
                n,
                d_bar: req("d_bar", d_bar)?,
                h: req("h", h)?,
            },
            other => return Err(Error::Config(format!("unknown generator `{other}`"))),
        };
        let statistic = req("statistic", take("statistic"))?
            .parse::<Statistic>()
            .map_err(Error::Config)?;
        let mut spec = ExperimentSpec::new(generator, statistic);
        if let Some(s) = take("sweep") {
            spec.sweep = s.parse().map_err(Error::Config)?;
        }
        if let Some(v) = take("values") {
            spec.values = parse_list(&v)?;
        }
        if let Some(v) = num("eps_total", take("eps_total"))? {
            spec.eps_total = v;
        }
        if let Some(v) = num("eps_split", take("eps_split"))? {
            spec.eps_split = v;
        }
        if let Some(v) = num("delta_label", take("delta_label"))? {
            spec.delta_label = v;
        }
        if let Some(v) = take("interval") {
            let l = parse_list(&v)?;
            if l.len() != 2 {
                return Err(Error::Config("`interval` needs two numbers".into()));
            }
            spec.interval = (l[0], l[1]);
        }
        if let Some(v) = take("pairing") {
            spec.pairing = match v.as_str() {
                "matched" => SensitivityPairing::Matched,
                "literal" => SensitivityPairing::Literal,
                other => return Err(Error::Config(format!("unknown pairing `{other}`"))),
            };
        }
        if let Some(v) = num("graphs", take("graphs"))? {
            spec.graphs = v;
        }
        if let Some(v) = num("noise_seeds", take("noise_seeds"))? {
            spec.noise_seeds = v;
        }
        if let Some(v) = num("seed", take("seed"))? {
            spec.seed = v;
        }
        if let Some(v) = num("timing", take("timing"))? {
            spec.timing = v;
        }
        spec.output = take("output").map(PathBuf::from);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.graphs == 0 || self.noise_seeds == 0 {
            return Err(Error::Config("graphs and noise_seeds must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::Config("sweep values must be nonempty".into()));
        }
        let needs_binary = self.statistic == Statistic::Binary;
        match (self.generator, needs_binary) {
            (GeneratorSpec::Graphon { .. }, true) => {
                return Err(Error::Config("binary statistics need an er or sbm2 generator".into()))
            }
            (GeneratorSpec::Er { .. } | GeneratorSpec::Sbm2 { .. }, false) => {
                return Err(Error::Config("rank statistics need a graphon generator".into()))
            }
            _ => {}
        }
        if self.sweep == SweepVar::Homophily && !matches!(self.generator, GeneratorSpec::Sbm2 { .. }) {
            return Err(Error::Config("homophily sweeps need an sbm2 generator".into()));
        }
        if self.sweep == SweepVar::Composition && matches!(self.generator, GeneratorSpec::Graphon { .. }) {
            return Err(Error::Config("composition sweeps need labeled groups".into()));
        }
        for k in 0..self.values.len() {
            let p = self.point(k)?;
            p.generator.validate()?;
            if self.statistic != Statistic::Binary {
                mafr(0.0, 0.0, p.interval.0, p.interval.1)?;
            }
        }
        Ok(())
    }

    /// Concrete configuration of sweep point `k`.
    pub fn point(&self, k: usize) -> Result<PointConfig> {
        let value = self.values[k];
        let mut generator = self.generator;
        let mut eps_total = self.eps_total;
        let mut eps_split = self.eps_split;
        let mut interval = self.interval;
        match self.sweep {
            SweepVar::None => {}
            SweepVar::Homophily => {
                if let GeneratorSpec::Sbm2 {
                    ref mut p_within,
                    ref mut p_between,
                    ..
                } = generator
                {
                    let sum = *p_within + *p_between;
                    if value > sum {
                        return Err(Error::param("p_within", value, "exceeds p_within + p_between"));
                    }
                    *p_within = value;
                    *p_between = sum - value;
                }
            }
            SweepVar::EpsTotal => eps_total = value,
            SweepVar::EpsSplit => eps_split = value,
            SweepVar::N => {
                if !(value >= 2.0 && value.fract() == 0.0) {
                    return Err(Error::param("n", value, "must be an integer >= 2"));
                }
                let n = value as usize;
                let base_n = generator.node_count();
                let rescale = |p: &mut f64| *p = (*p * (base_n - 1) as f64 / (n - 1) as f64).min(1.0);
                match generator {
                    GeneratorSpec::Er { ref mut p_edge, .. } => rescale(p_edge),
                    GeneratorSpec::Sbm2 {
                        ref mut p_within,
                        ref mut p_between,
                        ..
                    } => {
                        rescale(p_within);
                        rescale(p_between);
                    }
                    GeneratorSpec::Graphon { .. } => {}
                }
                generator = generator.with_node_count(n);
            }
            SweepVar::Composition => match generator {
                GeneratorSpec::Er { ref mut frac_a, .. } | GeneratorSpec::Sbm2 { ref mut frac_a, .. } => {
                    *frac_a = value
                }
                GeneratorSpec::Graphon { .. } => {}
            },
            SweepVar::Interval => interval.1 = value,
        }
        let delta = if self.statistic == Statistic::Binary {
            0.0
        } else {
            self.delta_label
        };
        Ok(PointConfig {
            value,
            generator,
            budget: PrivacyBudget::split(eps_total, eps_split, delta)?,
            interval,
        })
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid number `{}`", t.trim())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    pub value: f64,
    pub generator: GeneratorSpec,
    pub budget: PrivacyBudget,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub point: usize,
    pub sweep_value: f64,
    pub graph: usize,
    pub noise_seed: usize,
    pub true_value: f64,
    /// `None` when the release aborted.
    pub private_value: Option<f64>,
    pub squared_error: Option<f64>,
    pub aborted: bool,
    /// Laplace scale of the final noise layer (binary statistic only).
    pub noise_scale: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskError {
    pub point: usize,
    pub graph: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub rows: Vec<ResultRow>,
    pub errors: Vec<TaskError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub sweep_value: f64,
    pub releases: usize,
    pub aborted: usize,
    pub mean_true: f64,
    pub mse: f64,
    pub median_squared_error: f64,
}

/// Generator seed of graph `g`.
pub fn graph_seed(seed: u64, g: usize) -> u64 {
    stream_id(&[seed, GRAPH_TAG, g as u64])
}

/// Noise stream of replicate `k` on graph `g`.
pub fn noise_stream(seed: u64, g: usize, k: usize) -> RngStream {
    RngStream::derive(seed, &[NOISE_TAG, g as u64, k as u64])
}

/// True value of `statistic` on `g`.
pub fn true_statistic(g: &LabeledGraph, statistic: Statistic, interval: (f64, f64)) -> Result<f64> {
    match statistic {
        Statistic::Binary => Ok(cross_connectedness(g, None)?.value),
        Statistic::Mafr | Statistic::Slope => {
            let x = g.require_continuous()?;
            let fit = ols(x, &afr(g, x)?.afr)?;
            match statistic {
                Statistic::Slope => Ok(fit.beta),
                _ => mafr(fit.alpha, fit.beta, interval.0, interval.1),
            }
        }
    }
}

struct Released {
    value: Option<f64>,
    noise_scale: Option<f64>,
}

fn release_once(g: &LabeledGraph, spec: &ExperimentSpec, point: &PointConfig, rng: &mut RngStream) -> Result<Released> {
    match spec.statistic {
        Statistic::Binary => {
            let r = release_binary(g, &point.budget, rng, &BinaryReleaseOptions::default())?;
            Ok(Released {
                value: r.value,
                noise_scale: r.noise_scale,
            })
        }
        Statistic::Mafr | Statistic::Slope => {
            let opts = MafrReleaseOptions {
                pairing: spec.pairing,
                ..Default::default()
            };
            let r = release_mafr(g, &point.budget, point.interval, rng, &opts)?;
            let value = match spec.statistic {
                Statistic::Slope => r.regression.tilde.map(|f| f.beta),
                _ => r.mafr,
            };
            Ok(Released {
                value,
                noise_scale: None,
            })
        }
    }
}

fn run_task(spec: &ExperimentSpec, point_idx: usize, graph_idx: usize) -> Result<Vec<ResultRow>> {
    let point = spec.point(point_idx)?;
    // Replicate loops are already parallel; generate each graph serially.
    let g = generate(&point.generator, graph_seed(spec.seed, graph_idx), Exec::Sequential)?;
    let truth = true_statistic(&g, spec.statistic, point.interval)?;
    (0..spec.noise_seeds)
        .map(|k| {
            let mut rng = noise_stream(spec.seed, graph_idx, k);
            let start = Instant::now();
            let r = release_once(&g, spec, &point, &mut rng)?;
            let seconds = start.elapsed().as_secs_f64();
            Ok(ResultRow {
                point: point_idx,
                sweep_value: point.value,
                graph: graph_idx,
                noise_seed: k,
                true_value: truth,
                private_value: r.value,
                squared_error: r.value.map(|v| (v - truth) * (v - truth)),
                aborted: r.value.is_none(),
                noise_scale: r.noise_scale,
                seconds,
            })
        })
        .collect()
}

/// Runs every `(sweep point, graph)` task. Task failures are collected in
/// `errors` rather than aborting the run.
pub fn run_experiment(spec: &ExperimentSpec, exec: Exec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let graphs = spec.graphs;
    let results = exec.map(spec.values.len() * graphs, |t| run_task(spec, t / graphs, t % graphs));
    let mut rows = Vec::with_capacity(results.len() * spec.noise_seeds);
    let mut errors = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(mut rs) => rows.append(&mut rs),
            Err(e) => errors.push(TaskError {
                point: t / graphs,
                graph: t % graphs,
                message: e.to_string(),
            }),
        }
    }
    Ok(ExperimentOutput {
        spec: spec.clone(),
        rows,
        errors,
    })
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl ExperimentOutput {
    /// Rows of sweep point `k`.
    pub fn point_rows(&self, k: usize) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.point == k)
    }

    /// Squared errors of non-aborted releases at sweep point `k`.
    pub fn squared_errors(&self, k: usize) -> Vec<f64> {
        self.point_rows(k).filter_map(|r| r.squared_error).collect()
    }

    pub fn summary(&self) -> Vec<PointSummary> {
        (0..self.spec.values.len())
            .map(|k| {
                let rows: Vec<&ResultRow> = self.point_rows(k).collect();
                let se = self.squared_errors(k);
                let truths: Vec<f64> = rows.iter().map(|r| r.true_value).collect();
                PointSummary {
                    sweep_value: self.spec.values[k],
                    releases: rows.len(),
                    aborted: rows.iter().filter(|r| r.aborted).count(),
                    mean_true: stats::mean(&truths),
                    mse: stats::mean(&se),
                    median_squared_error: stats::median(&se),
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let s = &self.spec;
        let mut out = format!(
            "# edgedp results v{CSV_VERSION} statistic={} sweep={} seed={}\n",
            s.statistic.name(),
            s.sweep.column(),
            s.seed
        );
        let _ = write!(
            out,
            "{},graph,noise_seed,true_value,private_value,squared_error,aborted,noise_scale",
            s.sweep.column()
        );
        out.push_str(if s.timing { ",seconds\n" } else { "\n" });
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt_f64(r.sweep_value),
                r.graph,
                r.noise_seed,
                fmt_f64(r.true_value),
                fmt_opt(r.private_value),
                fmt_opt(r.squared_error),
                r.aborted,
                fmt_opt(r.noise_scale)
            );
            if s.timing {
                let _ = write!(out, ",{}", fmt_f64(r.seconds));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!(
            "# edgedp summary v{CSV_VERSION} statistic={}\n{},releases,aborted,mean_true,mse,median_squared_error\n",
            self.spec.statistic.name(),
            self.spec.sweep.column()
        );
        for p in self.summary() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(p.sweep_value),
                p.releases,
                p.aborted,
                fmt_f64(p.mean_true),
                fmt_f64(p.mse),
                fmt_f64(p.median_squared_error)
            );
        }
        out
    }
}

/// Cross-cell study: privatize labels once per replicate, release every
/// cell from the same private labels, and compare true and private values
/// across cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    pub eps_totals: Vec<f64>,
    pub eps_split: f64,
    pub replicates: usize,
    pub mode: CellMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellNoise {
    pub id: String,
    pub egos: usize,
    pub true_value: f64,
    pub mean_private: f64,
    pub sd_private: f64,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsCorrelation {
    pub eps_total: f64,
    pub cells: Vec<CellNoise>,
    /// Pearson correlation of (true, private) across cells, per replicate;
    /// aborted cells are left out of their replicate.
    pub correlations: Vec<f64>,
    pub mean_correlation: f64,
    /// Variance of the true values across cells.
    pub signal_variance: f64,
    /// Mean over cells of the variance of private values.
    pub noise_variance: f64,
    pub aborted: usize,
}

impl EpsCorrelation {
    pub fn signal_to_noise(&self) -> f64 {
        self.signal_variance / self.noise_variance
    }
}

pub fn run_correlation_study(g: &LabeledGraph, spec: &CorrelationSpec, exec: Exec) -> Result<Vec<EpsCorrelation>> {
    let cells: Vec<CellSelection> = g.cells().map(|(id, _)| CellSelection::new(id, spec.mode)).collect();
    if cells.len() < 2 {
        return Err(Error::Config(format!(
            "correlation study needs at least 2 cells, got {}",
            cells.len()
        )));
    }
    if spec.replicates < 2 {
        return Err(Error::Config("correlation study needs at least 2 replicates".into()));
    }
    let labels = g.require_binary()?;
    let truths: Vec<f64> = cells
        .iter()
        .map(|c| cross_connectedness(g, Some(c)).map(|r| r.value))
        .collect::<Result<_>>()?;
    spec.eps_totals
        .iter()
        .map(|&eps| {
            let budget = PrivacyBudget::split(eps, spec.eps_split, 0.0)?;
            let p = flip_probability(budget.eps_label)?;
            let draws: Vec<Vec<Option<f64>>> = exec.try_map(spec.replicates, |r| {
                let mut rng = RngStream::derive(spec.seed, &[CORRELATION_TAG, r as u64]);
                let private = randomize_labels(labels, p, &mut rng)?;
                cells
                    .iter()
                    .map(|c| {
                        let opts = BinaryReleaseOptions {
                            cell: Some(c.clone()),
                            ..Default::default()
                        };
                        Ok(release_with_private_labels(g, &private, &budget, &mut rng, &opts)?.value)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut cell_noise = Vec::with_capacity(cells.len());
            let mut aborted = 0;
            for (c, (sel, &truth)) in cells.iter().zip(&truths).enumerate() {
                let vals: Vec<f64> = draws.iter().filter_map(|d| d[c]).collect();
                let a = spec.replicates - vals.len();
                aborted += a;
                cell_noise.push(CellNoise {
                    id: sel.id.clone(),
                    egos: g.cell(&sel.id)?.len(),
                    true_value: truth,
                    mean_private: stats::mean(&vals),
                    sd_private: stats::std_dev(&vals),
                    aborted: a,
                });
            }
            let correlations: Vec<f64> = draws
                .iter()
                .map(|d| {
                    let (t, v): (Vec<f64>, Vec<f64>) =
                        truths.iter().zip(d).filter_map(|(&t, v)| v.map(|v| (t, v))).unzip();
                    stats::pearson(&t, &v)
                })
                .collect();
            let noise_vars: Vec<f64> = cell_noise.iter().map(|c| c.sd_private * c.sd_private).collect();
            Ok(EpsCorrelation {
                eps_total: eps,
                mean_correlation: stats::mean(&correlations),
                correlations,
                signal_variance: stats::variance(&truths),
                noise_variance: stats::mean(&noise_vars),
                cells: cell_noise,
                aborted,
            })
        })
        .collect()
}

impl EpsCorrelation {
    pub fn to_csv(studies: &[EpsCorrelation]) -> String {
        let mut out = format!(
            "# edgedp correlation v{CSV_VERSION}\neps_total,cell,egos,true_value,mean_private,sd_private,aborted\n"
        );
        for s in studies {
            for c in &s.cells {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_f64(s.eps_total),
                    c.id,
                    c.egos,
                    fmt_f64(c.true_value),
                    fmt_f64(c.mean_private),
                    fmt_f64(c.sd_private),
                    c.aborted
                );
            }
        }
        out
    }
}

/// Ranges for a synthetic panel of villages, each a two-block SBM.
#[derive(Debug, Clone, PartialEq)]
pub struct VillagePanelSpec {
    pub villages: usize,
    pub n: (usize, usize),
    pub mean_degree: (f64, f64),
    pub frac_a: (f64, f64),
    /// Target cross-type share of group-A connections.
    pub cross_share: (f64, f64),
}

impl Default for VillagePanelSpec {
    fn default() -> Self {
        Self {
            villages: 46,
            n: (100, 350),
            mean_degree: (6.0, 13.0),
            frac_a: (0.1, 0.9),
            cross_share: (0.02, 0.57),
        }
    }
}

/// SBM probabilities giving expected mean degree `d` over all nodes and
/// expected cross share `c` for a group-A node: `c = n_B p_b / deg_A`.
pub fn village_probabilities(n: usize, frac_a: f64, d: f64, c: f64) -> Result<(f64, f64)> {
    let na = (frac_a * n as f64).floor();
    let nb = n as f64 - na;
    if na < 2.0 || nb < 1.0 {
        return Err(Error::param("frac_a", frac_a, "leaves a group too small"));
    }
    if !(0.0..1.0).contains(&c) {
        return Err(Error::param("cross_share", c, "must lie in [0, 1)"));
    }
    let odds = c / (1.0 - c);
    let p_w = n as f64 * d / (na * (na - 1.0) + nb * (nb - 1.0) + 2.0 * na * odds * (na - 1.0));
    let p_b = odds * (na - 1.0) * p_w / nb;
    if p_w > 1.0 || p_b > 1.0 {
        return Err(Error::ProbabilityTooLarge {
            probability: p_w.max(p_b),
        });
    }
    Ok((p_w, p_b))
}

/// Disjoint union of synthetic villages, each registered as cell `vNN`.
pub fn village_panel(spec: &VillagePanelSpec, seed: u64, exec: Exec) -> Result<LabeledGraph> {
    let uniform = |rng: &mut RngStream, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.uniform();
    let parts = exec.try_map(spec.villages, |v| {
        let mut rng = RngStream::derive(seed, &[PANEL_TAG, v as u64]);
        let n = spec.n.0 + (rng.next_u64() % (spec.n.1 - spec.n.0 + 1) as u64) as usize;
        let d = uniform(&mut rng, spec.mean_degree);
        let frac_a = uniform(&mut rng, spec.frac_a);
        let c = uniform(&mut rng, spec.cross_share);
        let (p_within, p_between) = village_probabilities(n, frac_a, d, c)?;
        let g = generate(
            &GeneratorSpec::Sbm2 {
                n,
                p_within,
                p_between,
                frac_a,
            },
            rng.next_u64(),
            Exec::Sequential,
        )?;
        Ok::<_, Error>(g)
    })?;
    let total: usize = parts.iter().map(|g| g.node_count()).sum();
    let mut edges = Vec::new();
    let mut labels = Vec::with_capacity(total);
    let mut cells = Vec::with_capacity(parts.len());
    let mut offset = 0;
    for g in &parts {
        edges.extend(g.edges().map(|(u, v, w)| (u + offset, v + offset, w)));
        labels.extend_from_slice(g.require_binary()?);
        cells.push((offset..offset + g.node_count()).collect::<Vec<_>>());
        offset += g.node_count();
    }
    let width = spec.villages.saturating_sub(1).to_string().len().max(2);
    let mut panel = LabeledGraph::from_edges(total, edges)?.with_binary_labels(labels)?;
    for (v, members) in cells.into_iter().enumerate() {
        panel = panel.with_cell(format!("v{v:0width$}"), members)?;
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec::new(
            GeneratorSpec::Er {
                n: 300,
                p_edge: 10.0 / 299.0,
                frac_a: 0.5,
            },
            Statistic::Binary,
        )
        .sweep(SweepVar::N, vec![200.0, 300.0])
        .replicates(3, 4)
        .budget(4.0, 0.5)
        .seed(11)
    }

    #[test]
    fn parse_round_trip() {
        let text = "generator = er  # base\nn = 300\nmean_degree = 10\nstatistic = binary\n\
                    sweep = n\nvalues = 200, 300\neps_total = 4\neps_split = 0.5\n\
                    graphs = 3\nnoise_seeds = 4\nseed = 11\n";
        let spec = ExperimentSpec::parse(text).unwrap();
        assert_eq!(spec, small_spec());
    }

    #[test]
    fn parse_errors() {
        assert!(
            ExperimentSpec::parse("generator = er\nn = 10\np_edge = 0.1\nstatistic = binary\nbogus = 1\n").is_err()
        );
        assert!(ExperimentSpec::parse("generator = er\nn = 10\nstatistic = binary\n").is_err());
        assert!(ExperimentSpec::parse("generator = er\nn = 10\np_edge = 0.1\nstatistic = mafr\n").is_err());
        assert!(
            ExperimentSpec::parse("generator = er\nn = 10\np_edge = 0.1\nstatistic = binary\ngraphs = 0\n").is_err()
        );
        assert!(ExperimentSpec::parse("generator = er\nn = 10\nn = 11\n").is_err());
    }

    #[test]
    fn n_sweep_keeps_mean_degree() {
        let spec = small_spec();
        for k in 0..2 {
            let p = spec.point(k).unwrap();
            match p.generator {
                GeneratorSpec::Er { n, p_edge, .. } => assert!(((n - 1) as f64 * p_edge - 10.0).abs() < 1e-12),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn homophily_sweep_keeps_sum() {
        let spec = ExperimentSpec::new(
            GeneratorSpec::Sbm2 {
                n: 100,
                p_within: 0.04,
                p_between: 0.04,
                frac_a: 0.5,
            },
            Statistic::Binary,
        )
        .sweep(SweepVar::Homophily, vec![0.04, 0.06, 0.08]);
        for k in 0..3 {
            match spec.point(k).unwrap().generator {
                GeneratorSpec::Sbm2 {
                    p_within, p_between, ..
                } => {
                    assert!((p_within + p_between - 0.08).abs() < 1e-15)
                }
                _ => unreachable!(),
            }
        }
        assert!(spec.clone().sweep(SweepVar::Homophily, vec![0.09]).validate().is_err());
    }

    #[test]
    fn experiment_is_reproducible_and_thread_independent() {
        let spec = small_spec();
        let a = run_experiment(&spec, Exec::Sequential).unwrap();
        let b = run_experiment(&spec, Exec::Parallel).unwrap();
        assert!(a.errors.is_empty());
        assert_eq!(a.rows.len(), 2 * 3 * 4);
        assert_eq!(a.to_csv(), b.to_csv());
        for r in &a.rows {
            if let (Some(v), Some(se)) = (r.private_value, r.squared_error) {
                assert_eq!(se, (v - r.true_value) * (v - r.true_value));
            }
        }
        // One truth per graph.
        for k in 0..2 {
            for g in 0..3 {
                let t: Vec<f64> = a.point_rows(k).filter(|r| r.graph == g).map(|r| r.true_value).collect();
                assert!(t.windows(2).all(|w| w[0] == w[1]));
            }
        }
        let s = a.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].releases, 12);
    }

    #[test]
    fn csv_shape() {
        let out = run_experiment(&small_spec(), Exec::default()).unwrap();
        let csv = out.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# edgedp results v1"));
        assert_eq!(
            lines.next().unwrap(),
            "n,graph,noise_seed,true_value,private_value,squared_error,aborted,noise_scale"
        );
        let first = lines.next().unwrap();
        let v: f64 = first.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(v, out.rows[0].true_value);
        assert_eq!(csv.lines().count(), 2 + out.rows.len());
    }

    #[test]
    fn generator_failures_become_task_errors() {
        let mut spec = ExperimentSpec::new(
            GeneratorSpec::Graphon {
                n: 50,
                d_bar: 5.0,
                h: 0.8,
            },
            Statistic::Slope,
        )
        .replicates(1, 1);
        spec.sweep = SweepVar::N;
        spec.values = vec![50.0, 4.0];
        // n = 4 makes d̄ = 5 exceed n − 1.
        assert!(spec.validate().is_err());
        spec.values = vec![50.0];
        let out = run_experiment(&spec, Exec::default()).unwrap();
        assert!(out.errors.is_empty());
        assert_eq!(out.rows.len(), 1);
    }

    #[test]
    fn village_probabilities_hit_targets() {
        let (pw, pb) = village_probabilities(200, 0.3, 9.0, 0.25).unwrap();
        let (na, nb) = (60.0, 140.0);
        let deg_a = (na - 1.0) * pw + nb * pb;
        assert!((nb * pb / deg_a - 0.25).abs() < 1e-12);
        let total = na * (na - 1.0) * pw + nb * (nb - 1.0) * pw + 2.0 * na * nb * pb;
        assert!((total / 200.0 - 9.0).abs() < 1e-9);
    }

    #[test]
    fn panel_and_correlation_study() {
        let spec = VillagePanelSpec {
            villages: 5,
            ..Default::default()
        };
        let panel = village_panel(&spec, 3, Exec::default()).unwrap();
        assert_eq!(panel.cells().count(), 5);
        let study = CorrelationSpec {
            eps_totals: vec![8.0, 4.0],
            eps_split: 0.5,
            replicates: 20,
            mode: CellMode::WithinCell,
            seed: 1,
        };
        let a = run_correlation_study(&panel, &study, Exec::Sequential).unwrap();
        let b = run_correlation_study(&panel, &study, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].correlations.len(), 20);
        assert!(a[0].cells.iter().all(|c| c.sd_private > 0.0));
    }
}
