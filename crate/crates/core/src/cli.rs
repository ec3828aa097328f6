//! Batch experiment runner behind the `higgslab` binary.
//!
//! A run reads one JSON [`ExperimentConfig`], writes `report.json`, the CSV
//! files of the experiment and a `manifest.json` echoing every tolerance used.
//! Nothing written to disk depends on wall-clock time or thread count.

use crate::analysis::{identity_residual, stability_verdict, StabilityCandidate, Verdict};
use crate::bundle::{endo_exp, HiggsBundleData};
use crate::continuation::{
    dyadic_epsilons, epsilon_sweep_classify, solve_perturbed_he, SweepConfig, C0_SLACK, IDENTITY_QUAD_TOL, TRACE_TOL,
};
use crate::error::Error;
use crate::field::{EndoField, MetricField};
use crate::flow::{default_tol, run_flow, FlowConfig, ImplicitConfig};
use crate::geometry::{GridManifold, Model};
use crate::linalg::{CMat, C64};
use crate::poisson::{conformal_trace_normalize, solve_helmholtz, solve_poisson_noncompact, Boundary, SolveOptions};
use crate::presets::Preset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Assumptions,
    Poisson,
    Flow,
    Perturbed,
    Sweep,
    Identity,
    Stability,
}

/// Initial metric of a flow run, relative to the reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialMetric {
    Reference,
    /// `K·diag(a, 1/a, 1, …)`.
    Diagonal { a: f64 },
    /// `K·exp(s)` with `s` a seeded sum of low Fourier modes of size `amplitude`.
    Random { amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// ε of a single flow run.
    pub epsilon: f64,
    /// Explicit ε list; `None` uses `2^{−1}, …, 2^{−sweep_levels}`.
    pub epsilons: Option<Vec<f64>>,
    pub sweep_levels: usize,
    /// Replace the identity reference by its conformal trace normalization.
    pub normalize: bool,
    pub initial: InitialMetric,
    /// Size of the seeded test metric of the identity experiment.
    pub amplitude: f64,
    pub flow: FlowConfig,
    pub solver: ImplicitConfig,
    pub sweep: SweepConfig,
    pub linear_tol: f64,
    /// Slope margin of the stability experiment; `None` uses the library default.
    pub margin: Option<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            epsilon: 0.0,
            epsilons: None,
            sweep_levels: 10,
            normalize: true,
            initial: InitialMetric::Reference,
            amplitude: 0.3,
            flow: FlowConfig::default(),
            solver: ImplicitConfig::default(),
            sweep: SweepConfig::default(),
            linear_tol: crate::poisson::DEFAULT_TOL,
            margin: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: Model,
    pub bundle: Preset,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration; exit code 2.
    Config(String),
    /// Solver or output failure; exit code 3.
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(s) => write!(f, "config error: {s}"),
            CliError::Run(e) => write!(f, "run failed: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(Error::Io(e.into()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(Error::Io(e))
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(if path == "." { e.inner().to_string() } else { format!("{path}: {}", e.inner()) })
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub verdict: Option<Verdict>,
    pub files: Vec<String>,
}

struct Setup {
    m: GridManifold,
    b: HiggsBundleData,
    k: MetricField,
    candidates: Vec<StabilityCandidate>,
    lambda: f64,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let m = cfg.model.build().map_err(|e| CliError::Config(format!("model: {e}")))?;
    let b = cfg.bundle.build(&m).map_err(|e| CliError::Config(format!("bundle: {e}")))?;
    let candidates = cfg
        .bundle
        .candidate_projectors()
        .iter()
        .enumerate()
        .map(|(j, p)| StabilityCandidate::constant(m.len(), p, &format!("e{}", j + 1)))
        .collect::<crate::Result<Vec<_>>>()?;
    let id = MetricField::identity(m.len(), b.rank);
    let opts = SolveOptions { tol: cfg.params.linear_tol, max_iter: None };
    let k = if cfg.params.normalize { conformal_trace_normalize(&m, &b, &id, &opts)?.1 } else { id };
    let lambda = crate::analysis::analytic_degree(&m, &b, &k)?.lambda;
    Ok(Setup { m, b, k, candidates, lambda })
}

fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let p = &cfg.params;
    p.flow.validate().map_err(|e| CliError::Config(format!("params.flow: {e}")))?;
    if !(p.epsilon >= 0.0) || !p.epsilon.is_finite() {
        return Err(CliError::Config(format!("params.epsilon must be finite and nonnegative, got {}", p.epsilon)));
    }
    if let Some(e) = &p.epsilons {
        if e.is_empty() || e.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(CliError::Config("params.epsilons must be a non-empty list of positive numbers".into()));
        }
    } else if p.sweep_levels == 0 {
        return Err(CliError::Config("params.sweep_levels must be positive".into()));
    }
    if !(p.linear_tol > 0.0) {
        return Err(CliError::Config("params.linear_tol must be positive".into()));
    }
    if let InitialMetric::Diagonal { a } = p.initial {
        if !(a > 0.0) || !a.is_finite() {
            return Err(CliError::Config("params.initial.a must be positive".into()));
        }
    }
    Ok(())
}

fn epsilons(p: &Params) -> Vec<f64> {
    p.epsilons.clone().unwrap_or_else(|| dyadic_epsilons(p.sweep_levels))
}

/// Hermitian trace-free `s` built from seeded low Fourier modes.
pub fn random_smooth_endomorphism(m: &GridManifold, rank: usize, seed: u64, amplitude: f64) -> EndoField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(Vec<f64>, f64, CMat)> = (0..3)
        .map(|_| {
            let freq: Vec<f64> = (0..m.axes().len()).map(|_| rng.gen_range(0..3) as f64).collect();
            let phase = rng.gen_range(0.0..2.0 * PI);
            let mut a = CMat::zeros(rank);
            for p in 0..rank {
                for q in p..rank {
                    let z = if p == q { C64::new(rng.gen_range(-1.0..1.0), 0.0) } else { C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) };
                    a.set(p, q, z);
                    a.set(q, p, z.conj());
                }
            }
            let tr = a.trace().re / rank as f64;
            for p in 0..rank {
                a.set(p, p, a.get(p, p) - tr);
            }
            (freq, phase, a)
        })
        .collect();
    // coordinates scaled to [0, 1) so every mode is periodic in σ and smooth up to the walls in τ
    let unit = |i: usize, d: usize| {
        let ax = &m.axes()[d];
        let x = m.coord(i, d);
        let (lo, span) = (ax.coords[0], if ax.period > 0.0 { ax.period } else { ax.coords[ax.len() - 1] - ax.coords[0] });
        (x - lo) / span
    };
    EndoField::from_fn(m.len(), rank, |i| {
        let mut s = CMat::zeros(rank);
        for (freq, phase, a) in &modes {
            let arg: f64 = freq.iter().enumerate().map(|(d, f)| 2.0 * PI * f * unit(i, d)).sum::<f64>() + phase;
            s += a.scale(amplitude * arg.cos());
        }
        s
    })
}

fn initial_metric(s: &Setup, p: &Params, seed: u64) -> crate::Result<MetricField> {
    let r = s.b.rank;
    let rel = match p.initial {
        InitialMetric::Reference => return Ok(s.k.clone()),
        InitialMetric::Diagonal { a } => {
            let mut d = vec![1.0; r];
            if r >= 2 {
                d[0] = a;
                d[1] = 1.0 / a;
            } else {
                d[0] = a;
            }
            MetricField::constant(s.m.len(), &CMat::from_real_diag(&d))?
        }
        InitialMetric::Random { amplitude } => endo_exp(&random_smooth_endomorphism(&s.m, r, seed, amplitude))?,
    };
    // K^{1/2} rel K^{1/2} keeps the result Hermitian positive
    MetricField::new(EndoField::from_fn(s.m.len(), r, |i| {
        let kh = s.k.at(i).map_hermitian(f64::sqrt);
        (kh * rel.at(i) * kh).hermitian_part()
    }))
}

/// Poisson source with zero mean: `cos(2πx/L)` on a torus, a mean-corrected radial mode on the cusp.
fn poisson_source(m: &GridManifold) -> Vec<f64> {
    let ax = &m.axes()[0];
    let raw: Vec<f64> = if m.is_compact() {
        (0..m.len()).map(|i| (2.0 * PI * m.coord(i, 0) / ax.period).cos()).collect()
    } else {
        let (lo, hi) = (ax.coords[0], ax.coords[ax.len() - 1]);
        (0..m.len()).map(|i| (PI * (m.coord(i, 0) - lo) / (hi - lo)).cos()).collect()
    };
    let mean = m.integrate(&raw) / m.volume();
    raw.iter().map(|x| x - mean).collect()
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), files: vec![] })
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Run(Error::Io(e.into())))?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }
}

pub const SWEEP_COLUMNS: [&str; 5] = ["eps", "sup_log_h", "eps_times_sup", "he_residual", "l2_log_h"];

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Runs `cfg`, writing into `out` (or `cfg.output_dir`).
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunSummary, CliError> {
    validate(cfg)?;
    let s = setup(cfg)?;
    let p = &cfg.params;
    let mut o = Output::new(out.unwrap_or(&cfg.output_dir))?;
    let mut tolerances = json!({
        "linear_tol": p.linear_tol,
        "default_stationary_tol": default_tol(s.lambda),
        "trace_tol": TRACE_TOL,
        "identity_quadrature_tol": IDENTITY_QUAD_TOL,
        "c0_slack": C0_SLACK,
    });
    let mut verdict = None;

    match cfg.experiment {
        Experiment::Assumptions => {
            let rep = s.m.verify_assumptions();
            o.json("report.json", &to_value(&rep))?;
        }
        Experiment::Poisson => {
            let psi = poisson_source(&s.m);
            let opts = SolveOptions { tol: p.linear_tol, max_iter: None };
            let mut rows = Vec::new();
            for eps in epsilons(p) {
                rows.push(solve_helmholtz(&s.m, &psi, eps, &Boundary::Closed, &opts)?.1);
            }
            let limit = if s.m.is_compact() { None } else { Some(solve_poisson_noncompact(&s.m, &psi, &opts)?.1) };
            tolerances["cauchy_tol"] = json!(crate::poisson::CAUCHY_TOL);
            tolerances["mean_tol"] = json!(crate::poisson::MEAN_TOL);
            let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.epsilon, r.sup_f, r.residual_linf, r.energy]).collect();
            o.table("poisson.csv", &["eps", "sup_f", "residual", "energy"], &table)?;
            o.json("report.json", &json!({"sweep": rows, "limit": limit}))?;
        }
        Experiment::Flow => {
            let h0 = initial_metric(&s, p, cfg.seed)?;
            let outcome = run_flow(&s.m, &s.b, &h0, &s.k, p.epsilon, s.lambda, &p.flow)?;
            let mons = &outcome.state.monitors;
            let sup_monotone = mons.windows(2).all(|w| w[1].sup_phi <= w[0].sup_phi + 1e-8);
            tolerances["flow_tol"] = json!(p.flow.tol.unwrap_or_else(|| default_tol(s.lambda)));
            tolerances["dt"] = json!(p.flow.step_size(&s.m));
            o.csv("monitors.csv", mons)?;
            o.json(
                "report.json",
                &json!({
                    "epsilon": p.epsilon,
                    "lambda": s.lambda,
                    "steps": outcome.state.steps,
                    "t": outcome.state.t,
                    "converged": outcome.converged,
                    "final": mons.last(),
                    "sup_phi_monotone": sup_monotone,
                    "trace_residual": outcome.trace_residual,
                }),
            )?;
        }
        Experiment::Perturbed => {
            let mut sols = Vec::new();
            let mut warm: Option<MetricField> = None;
            for eps in epsilons(p) {
                let sol = solve_perturbed_he(&s.m, &s.b, &s.k, eps, &p.sweep.via, &p.solver, warm.as_ref())?;
                warm = Some(sol.h.clone());
                sols.push(sol);
            }
            tolerances["stationary_tol"] = json!(p.solver.tol.unwrap_or_else(|| default_tol(s.lambda)));
            let table: Vec<Vec<f64>> = sols.iter().map(|x| vec![x.epsilon, x.sup_log_h, x.l2_log_h, x.residual, x.he_residual, x.c0_bound]).collect();
            o.table("perturbed.csv", &["eps", "sup_log_h", "l2_log_h", "residual", "he_residual", "c0_bound"], &table)?;
            o.json("report.json", &json!({"lambda": s.lambda, "solutions": sols}))?;
        }
        Experiment::Sweep => {
            let rep = epsilon_sweep_classify(&s.m, &s.b, &s.k, &epsilons(p), &s.candidates, &p.sweep)?;
            tolerances["stationary_tol"] = json!(p.sweep.solver.tol.unwrap_or_else(|| default_tol(s.lambda)));
            tolerances["tol_stable"] = json!(p.sweep.tol_stable.unwrap_or(1e-6 * (1.0 + s.lambda.abs())));
            tolerances["tol_semi"] = json!(p.sweep.tol_semi);
            tolerances["delta_unstable"] = json!(p.sweep.delta_unstable);
            tolerances["match_tol"] = json!(p.sweep.match_tol);
            tolerances["gap_fraction"] = json!(p.sweep.gap_fraction);
            let table: Vec<Vec<f64>> = rep.rows.iter().map(|r| vec![r.eps, r.sup_log_h, r.eps_times_sup, r.he_residual, r.l2_log_h]).collect();
            o.table("sweep.csv", &SWEEP_COLUMNS, &table)?;
            verdict = Some(rep.verdict);
            o.json("report.json", &to_value(&rep))?;
        }
        Experiment::Identity => {
            let h = initial_metric(&s, &Params { initial: InitialMetric::Random { amplitude: p.amplitude }, ..p.clone() }, cfg.seed)?;
            let rep = identity_residual(&s.m, &s.b, &s.k, &h)?;
            o.json("report.json", &json!({"seed": cfg.seed, "amplitude": p.amplitude, "identity": rep, "relative_residual": rep.residual / rep.scale.max(f64::MIN_POSITIVE)}))?;
        }
        Experiment::Stability => {
            if s.candidates.is_empty() {
                return Err(CliError::Config(format!("bundle preset {} has no candidate sub-objects", cfg.bundle.name())));
            }
            let rep = stability_verdict(&s.m, &s.b, &s.k, &s.candidates, p.margin)?;
            tolerances["margin"] = json!(rep.margin);
            verdict = Some(rep.verdict);
            o.csv("degrees.csv", &rep.candidates)?;
            o.json("report.json", &to_value(&rep))?;
        }
    }

    o.json(
        "manifest.json",
        &json!({
            "crate": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "experiment": cfg.experiment,
            "seed": cfg.seed,
            "config": to_value(cfg),
            "tolerances": tolerances,
            "lambda": s.lambda,
            "nodes": s.m.len(),
            "files": o.files.clone(),
        }),
    )?;
    Ok(RunSummary { experiment: cfg.experiment, verdict, files: o.files })
}
