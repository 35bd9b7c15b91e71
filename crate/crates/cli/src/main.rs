use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use edgedp::binary::{release_binary, BinaryDpRelease, BinaryReleaseOptions};
use edgedp::continuous::{release_mafr, MafrRelease, MafrReleaseOptions, SensitivityPairing};
use edgedp::harness::{
    run_correlation_study, run_experiment, village_panel, CorrelationSpec, EpsCorrelation, ExperimentSpec,
    VillagePanelSpec,
};
use edgedp::netgen::{generate, GeneratorSpec};
use edgedp::{exec, io, verify, CellMode, CellSelection, Exec, LabeledGraph, NoiseMode, PrivacyBudget, RngStream};

#[derive(Parser)]
#[command(
    name = "edgedp",
    version,
    about = "Edge-private connectedness statistics for labeled networks"
)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic graph and write `<out>.edges`, `<out>.labels`.
    Generate(GenerateArgs),
    /// Private cross-type connectedness C^{A→B}.
    ReleaseBinary(BinaryArgs),
    /// Private mean average friend rank over a rank interval.
    ReleaseMafr(MafrArgs),
    /// Run a Monte Carlo experiment from a key=value config file.
    Simulate(SimulateArgs),
    /// Cross-cell correlation of true and private connectedness.
    Correlate(CorrelateArgs),
    /// Recompute the built-in correctness checks against brute-force oracles.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Er,
    Sbm2,
    Graphon,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Within,
    EgoToAll,
}

impl From<Mode> for CellMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Within => CellMode::WithinCell,
            Mode::EgoToAll => CellMode::EgoToAll,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Pairing {
    Matched,
    Literal,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long)]
    n: usize,
    /// ER edge probability.
    #[arg(long, conflicts_with = "mean_degree")]
    p_edge: Option<f64>,
    /// ER expected degree, an alternative to `--p-edge`.
    #[arg(long)]
    mean_degree: Option<f64>,
    #[arg(long)]
    p_within: Option<f64>,
    #[arg(long)]
    p_between: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    frac_a: f64,
    /// Graphon target mean degree.
    #[arg(long)]
    d_bar: Option<f64>,
    /// Graphon homophily.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphInput {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    cells: Option<PathBuf>,
    /// Release for this cell only; repeatable.
    #[arg(long = "cell")]
    cell: Vec<String>,
    /// Release once per cell in the cell file.
    #[arg(long, conflicts_with = "cell")]
    all_cells: bool,
    #[arg(long, value_enum, default_value = "within")]
    mode: Mode,
}

impl GraphInput {
    fn load(&self) -> Result<LabeledGraph> {
        Ok(io::ingest(&self.edges, Some(&self.labels), self.cells.as_deref())?)
    }

    /// `None` stands for the whole graph.
    fn selections(&self, g: &LabeledGraph) -> Vec<Option<CellSelection>> {
        let ids: Vec<String> = if self.all_cells {
            g.cells().map(|(id, _)| id.to_string()).collect()
        } else {
            self.cell.clone()
        };
        if ids.is_empty() {
            vec![None]
        } else {
            ids.into_iter()
                .map(|id| Some(CellSelection::new(id, self.mode.into())))
                .collect()
        }
    }
}

#[derive(Args)]
struct BinaryArgs {
    #[command(flatten)]
    input: GraphInput,
    #[arg(long)]
    eps_label: f64,
    #[arg(long)]
    eps_edge: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Post-process released values into [0, 1].
    #[arg(long)]
    clamp: bool,
    /// Skip all randomization (testing only; nothing private is released).
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MafrArgs {
    #[command(flatten)]
    input: GraphInput,
    #[arg(long)]
    eps_label: f64,
    #[arg(long)]
    eps_edge: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta_label: f64,
    #[arg(long, default_value_t = 0.0)]
    q_lo: f64,
    #[arg(long, default_value_t = 0.25)]
    q_hi: f64,
    #[arg(long, value_enum, default_value = "matched")]
    pairing: Pairing,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (`key = value` lines).
    config: PathBuf,
    /// Results CSV; overrides `output` in the config. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-point summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long, required_unless_present = "village_panel")]
    edges: Option<PathBuf>,
    #[arg(long, required_unless_present = "village_panel")]
    labels: Option<PathBuf>,
    #[arg(long, required_unless_present = "village_panel")]
    cells: Option<PathBuf>,
    /// Use a synthetic panel of two-block villages instead of input files.
    #[arg(long, conflicts_with_all = ["edges", "labels", "cells"])]
    village_panel: bool,
    #[arg(long, default_value_t = 46)]
    villages: usize,
    /// Total budgets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,4")]
    eps: Vec<f64>,
    /// Label share of each total budget.
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long, value_enum, default_value = "within")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fmt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

fn cmd_generate(a: &GenerateArgs, exec: Exec) -> Result<bool> {
    let need = |v: Option<f64>, name: &str| v.with_context(|| format!("--{name} is required for this model"));
    let spec = match a.model {
        Model::Er => {
            let p_edge = match (a.p_edge, a.mean_degree) {
                (Some(p), _) => p,
                (None, Some(d)) if a.n > 1 => d / (a.n - 1) as f64,
                (None, Some(_)) => 0.0,
                (None, None) => bail!("--p-edge or --mean-degree is required for er"),
            };
            GeneratorSpec::Er {
                n: a.n,
                p_edge,
                frac_a: a.frac_a,
            }
        }
        Model::Sbm2 => GeneratorSpec::Sbm2 {
            n: a.n,
            p_within: need(a.p_within, "p-within")?,
            p_between: need(a.p_between, "p-between")?,
            frac_a: a.frac_a,
        },
        Model::Graphon => GeneratorSpec::Graphon {
            n: a.n,
            d_bar: need(a.d_bar, "d-bar")?,
            h: need(a.h, "h")?,
        },
    };
    let g = generate(&spec, a.seed, exec)?;
    let paths = io::save(&g, &a.out)?;
    eprintln!(
        "{} nodes, {} edges, mean degree {:.3}",
        g.node_count(),
        g.edge_count(),
        g.mean_degree()
    );
    println!("{}", paths.edges.display());
    if let Some(p) = &paths.labels {
        println!("{}", p.display());
    }
    Ok(true)
}

fn binary_row(r: &BinaryDpRelease) -> String {
    format!(
        "{},{},{:.16e},{:.16e},{},{:.16e},{},{}\n",
        r.cell.as_deref().unwrap_or(""),
        fmt(r.value),
        r.s0,
        r.s1,
        fmt(r.noise_scale),
        r.p,
        r.aborted(),
        r.flags.clamped
    )
}

fn cmd_release_binary(a: &BinaryArgs) -> Result<bool> {
    let g = a.input.load()?;
    let budget = PrivacyBudget::pure(a.eps_label, a.eps_edge)?;
    let mut csv = String::from("cell,value,s0,s1,noise_scale,p,aborted,clamped\n");
    let mut ok = true;
    let mut releases = 0;
    for (k, cell) in a.input.selections(&g).into_iter().enumerate() {
        let opts = BinaryReleaseOptions {
            cell: cell.clone(),
            clamp: a.clamp,
            noise: if a.no_noise {
                NoiseMode::Disabled
            } else {
                NoiseMode::Private
            },
        };
        let mut rng = RngStream::new(a.seed, k as u64);
        match release_binary(&g, &budget, &mut rng, &opts) {
            Ok(r) => {
                releases += 1;
                csv += &binary_row(&r);
            }
            Err(e) => {
                ok = false;
                eprintln!("error: cell {}: {e}", cell.map(|c| c.id).unwrap_or_default());
            }
        }
    }
    emit(a.out.as_deref(), &csv)?;
    let (eps, _) = budget.total();
    eprintln!("privacy spend: {releases} release(s) at ε = {eps} each (δ = 0)");
    Ok(ok)
}

fn mafr_row(r: &MafrRelease) -> String {
    let reg = &r.regression;
    let fit = |f: Option<edgedp::indices::LinearFit>| (fmt(f.map(|f| f.alpha)), fmt(f.map(|f| f.beta)));
    let (alpha, beta) = fit(reg.tilde);
    let (alpha_star, beta_star) = fit(reg.star);
    format!(
        "{},{},{alpha},{beta},{alpha_star},{beta_star},{:.16e},{:.16e},{}\n",
        r.cell.as_deref().unwrap_or(""),
        fmt(r.mafr),
        reg.sigma2,
        reg.bound,
        r.aborted()
    )
}

fn cmd_release_mafr(a: &MafrArgs) -> Result<bool> {
    let g = a.input.load()?;
    let budget = PrivacyBudget::new(a.eps_label, a.eps_edge, a.delta_label)?;
    let mut csv = String::from("cell,mafr,alpha,beta,alpha_star,beta_star,sigma2,bound,aborted\n");
    let mut ok = true;
    let mut releases = 0;
    for (k, cell) in a.input.selections(&g).into_iter().enumerate() {
        let opts = MafrReleaseOptions {
            cell: cell.clone(),
            noise: if a.no_noise {
                NoiseMode::Disabled
            } else {
                NoiseMode::Private
            },
            pairing: match a.pairing {
                Pairing::Matched => SensitivityPairing::Matched,
                Pairing::Literal => SensitivityPairing::Literal,
            },
        };
        let mut rng = RngStream::new(a.seed, k as u64);
        match release_mafr(&g, &budget, (a.q_lo, a.q_hi), &mut rng, &opts) {
            Ok(r) => {
                releases += 1;
                csv += &mafr_row(&r);
            }
            Err(e) => {
                ok = false;
                eprintln!("error: cell {}: {e}", cell.map(|c| c.id).unwrap_or_default());
            }
        }
    }
    emit(a.out.as_deref(), &csv)?;
    let (eps, delta) = budget.total();
    eprintln!("privacy spend: {releases} release(s) at (ε, δ) = ({eps}, {delta}) each");
    Ok(ok)
}

fn cmd_simulate(a: &SimulateArgs, exec: Exec) -> Result<bool> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let spec = ExperimentSpec::parse(&text)?;
    let out = run_experiment(&spec, exec)?;
    let target = a.out.clone().or_else(|| spec.output.clone());
    emit(target.as_deref(), &out.to_csv())?;
    if let Some(p) = &a.summary {
        emit(Some(p), &out.summary_csv())?;
    }
    for e in &out.errors {
        eprintln!("error: point {} graph {}: {}", e.point, e.graph, e.message);
    }
    eprintln!("{} rows, {} task error(s)", out.rows.len(), out.errors.len());
    Ok(out.errors.is_empty())
}

fn cmd_correlate(a: &CorrelateArgs, exec: Exec) -> Result<bool> {
    let g = if a.village_panel {
        let spec = VillagePanelSpec {
            villages: a.villages,
            ..Default::default()
        };
        village_panel(&spec, a.seed, exec)?
    } else {
        let (Some(e), Some(l), Some(c)) = (&a.edges, &a.labels, &a.cells) else {
            bail!("--edges, --labels and --cells are required without --village-panel");
        };
        io::ingest(e, Some(l), Some(c))?
    };
    let spec = CorrelationSpec {
        eps_totals: a.eps.clone(),
        eps_split: a.split,
        replicates: a.replicates,
        mode: a.mode.into(),
        seed: a.seed,
    };
    let studies = run_correlation_study(&g, &spec, exec)?;
    emit(a.out.as_deref(), &EpsCorrelation::to_csv(&studies))?;
    for s in &studies {
        eprintln!(
            "ε = {}: mean correlation {:.4}, signal/noise {:.2}, aborted {}",
            s.eps_total,
            s.mean_correlation,
            s.signal_to_noise(),
            s.aborted
        );
    }
    Ok(true)
}

fn cmd_oracle_check(a: &OracleArgs, exec: Exec) -> Result<bool> {
    let checks = verify::run_all(a.seed, exec);
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn run(cli: &Cli) -> Result<bool> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, exec),
        Command::ReleaseBinary(a) => cmd_release_binary(a),
        Command::ReleaseMafr(a) => cmd_release_mafr(a),
        Command::Simulate(a) => cmd_simulate(a, exec),
        Command::Correlate(a) => cmd_correlate(a, exec),
        Command::OracleCheck(a) => cmd_oracle_check(a, exec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec::with_threads(cli.threads, || run(&cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
