//! Perturbed Hermitian–Einstein metrics and the ε → 0 stability classifier.
//!
//! For each ε the stationary metric of the perturbed flow solves
//! `Φ(h) + ε log(K⁻¹h) = 0` against a trace-normalized reference `K`. The sweep
//! watches how `sup|log h_ε|` grows as ε decreases: bounded growth leads to an
//! ε = 0 solve, linear growth in 1/ε to a destabilizing projector read off the
//! spectrum of `u_ε = s_ε/‖s_ε‖_{L²}`.

use crate::analysis::{
    analytic_degree, identity_residual_on, projector_penalty, stability_verdict, subobject_degree, DegreeReport,
    IdentityReport, StabilityCandidate, Verdict,
};
use crate::bundle::{mean_curvature_phi, HiggsBundleData};
use crate::error::{Error, Result};
use crate::field::{EndoField, MetricField};
use crate::flow::{default_tol, exhaustion_flow_limit, solve_stationary, ImplicitConfig, Problem};
use crate::geometry::{Domain, GridManifold};
use crate::linalg::{CMat, RelativeLog};
use serde::{Deserialize, Serialize};

/// Allowed `sup|tr Φ(K)|` relative to `1 + sup|Φ(K)|` for a normalized reference.
pub const TRACE_TOL: f64 = 1e-8;
/// Relative quadrature tolerance of the integral identity.
pub const IDENTITY_QUAD_TOL: f64 = 1e-6;
/// Slack on the C⁰ bound `sup|log h_ε| ≤ sup|Φ(K)|/ε`.
pub const C0_SLACK: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolveVia {
    /// Stationary flow on the whole (closed) model.
    Flow {},
    /// Stationary flows on `{φ < level}` for each level, `h = K = Id` on the ring.
    ExhaustionFlow { levels: Vec<f64>, core_level: f64 },
}

impl Default for SolveVia {
    fn default() -> Self {
        SolveVia::Flow {}
    }
}

/// The ε-term version of the integral identity for a perturbed solution:
/// `∫tr(Φ(K)s) + ∫⟨Ψ(s)Ds, Ds⟩ = −ε‖s‖²` up to the solver residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityAudit {
    pub report: IdentityReport,
    /// `ε ∫ |s|²_K`.
    pub eps_term: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbedSolution {
    pub epsilon: f64,
    #[serde(skip)]
    pub h: MetricField,
    pub sup_log_h: f64,
    pub l2_log_h: f64,
    /// `‖∂̄_θ s‖_{L²}` in the reference metric.
    pub dbar_theta_l2: f64,
    /// `sup|Φ(h) + ε s|_h`.
    pub residual: f64,
    /// `sup|Φ(h)|_h`.
    pub he_residual: f64,
    pub trace_min: f64,
    pub trace_max: f64,
    /// `sup|Φ(K)|_K / ε` (infinite at ε = 0).
    pub c0_bound: f64,
    pub c0_ok: bool,
    pub converged: bool,
    pub steps: usize,
    pub identity: Option<IdentityAudit>,
}

impl PerturbedSolution {
    /// `INCONCLUSIVE` for a solve that did not reach its tolerance.
    pub fn tag(&self) -> Option<Verdict> {
        (!self.converged).then_some(Verdict::Inconclusive)
    }
}

fn is_identity(k: &MetricField) -> bool {
    let id = CMat::identity(k.rank());
    (0..k.len()).all(|i| k.at(i) == id)
}

/// `log(K⁻¹h)` at every node.
pub fn relative_log(k: &MetricField, h: &MetricField) -> Result<EndoField> {
    if k.rank() != h.rank() {
        return Err(Error::RankMismatch(k.rank(), h.rank()));
    }
    let mut s = EndoField::zeros(h.len(), h.rank());
    for i in 0..h.len() {
        let rl = RelativeLog::new(&k.at(i), &h.at(i)).ok_or(Error::NotPositive { node: i })?;
        s.set(i, &rl.endomorphism());
    }
    Ok(s)
}

/// `∫ tr(s²)` over all nodes, i.e. `‖s‖²_{L²}` for K-self-adjoint `s`.
fn l2_sqr(m: &GridManifold, s: &EndoField) -> f64 {
    let v: Vec<f64> = (0..s.len()).map(|i| { let x = s.at(i); (x * x).trace().re }).collect();
    m.integrate(&v).max(0.0)
}

/// Checks the trace condition on `k` and returns `(λ, sup|Φ(K)|_K)`.
fn reference_data(m: &GridManifold, b: &HiggsBundleData, k: &MetricField) -> Result<(f64, f64)> {
    let lambda = analytic_degree(m, b, k)?.lambda;
    let phi_sup = Problem::new(m, b, k, 0.0, lambda, m.closed_domain())?.sup_residual(k)?;
    let phi = mean_curvature_phi(m, b, k, lambda)?;
    let tr = (0..m.len()).map(|i| phi.at(i).trace().re.abs()).fold(0.0, f64::max);
    if tr > TRACE_TOL * (1.0 + phi_sup) {
        return Err(Error::InvalidArgument(format!(
            "reference metric is not trace-normalized (sup |tr Phi| = {tr:e}); run conformal_trace_normalize first"
        )));
    }
    Ok((lambda, phi_sup))
}

#[allow(clippy::too_many_arguments)]
fn measure(
    m: &GridManifold,
    b: &HiggsBundleData,
    k: &MetricField,
    lambda: f64,
    phi_sup: f64,
    epsilon: f64,
    domain: Domain,
    h: MetricField,
    converged: bool,
    steps: usize,
) -> Result<PerturbedSolution> {
    let problem = Problem::new(m, b, k, epsilon, lambda, domain.clone())?;
    let residual = problem.sup_residual(&h)?;
    let he_residual = Problem::new(m, b, k, 0.0, lambda, domain.clone())?.sup_residual(&h)?;
    let s = relative_log(k, &h)?;
    let sup_log_h = (0..h.len())
        .filter(|&i| domain.interior[i])
        .map(|i| RelativeLog::new(&k.at(i), &h.at(i)).map_or(f64::NAN, |rl| rl.norm()))
        .fold(0.0, f64::max);
    let l2 = l2_sqr(m, &s);
    let dbar_theta_l2 = m.integrate(&projector_penalty(m, b, k, &s)?).max(0.0).sqrt();
    let (trace_min, trace_max) = (0..s.len()).map(|i| s.at(i).trace().re).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), t| (a.min(t), c.max(t)));
    let c0_bound = if epsilon > 0.0 { phi_sup / epsilon } else { f64::INFINITY };
    let c0_ok = sup_log_h <= C0_SLACK * c0_bound + 1e-12;
    let identity = if converged {
        let report = identity_residual_on(m, b, k, &h, &domain)?;
        let eps_term = epsilon * l2;
        let abs_s: Vec<f64> = (0..s.len()).map(|i| s.at(i).norm()).collect();
        let scale = report.phi_k_term.abs() + report.psi_term.abs() + eps_term.abs();
        let residual_id = (report.phi_k_term + report.psi_term + eps_term).abs();
        let tolerance = 10.0 * (IDENTITY_QUAD_TOL * scale + residual * m.integrate(&abs_s));
        Some(IdentityAudit { report, eps_term, residual: residual_id, tolerance, passed: residual_id <= tolerance })
    } else {
        None
    };
    Ok(PerturbedSolution {
        epsilon,
        h,
        sup_log_h,
        l2_log_h: l2.sqrt(),
        dbar_theta_l2,
        residual,
        he_residual,
        trace_min,
        trace_max,
        c0_bound,
        c0_ok,
        converged,
        steps,
        identity,
    })
}

/// Stationary solution of `Φ(h) + ε log(K⁻¹h) = 0`, started from `warm` (or `K`).
pub fn solve_perturbed_he(
    m: &GridManifold,
    b: &HiggsBundleData,
    k: &MetricField,
    epsilon: f64,
    via: &SolveVia,
    config: &ImplicitConfig,
    warm: Option<&MetricField>,
) -> Result<PerturbedSolution> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let (lambda, phi_sup) = reference_data(m, b, k)?;
    match via {
        SolveVia::Flow {} => {
            let problem = Problem::new(m, b, k, epsilon, lambda, m.closed_domain())?;
            let out = solve_stationary(&problem, warm.unwrap_or(k), config)?;
            measure(m, b, k, lambda, phi_sup, epsilon, m.closed_domain(), out.h, out.converged, out.steps)
        }
        SolveVia::ExhaustionFlow { levels, core_level } => {
            if !is_identity(k) {
                return Err(Error::InvalidArgument("exhaustion flows take the identity as reference and boundary value".into()));
            }
            let domain = match levels.last() {
                Some(&l) if !m.is_compact() => m.exhaustion_domain(l)?,
                _ => m.closed_domain(),
            };
            match exhaustion_flow_limit(m, b, epsilon, lambda, levels, *core_level, config) {
                Ok(lim) => {
                    let steps = lim.levels.iter().map(|l| l.steps).sum();
                    measure(m, b, k, lambda, phi_sup, epsilon, domain, lim.h, true, steps)
                }
                Err(Error::Level { source, .. }) if matches!(*source, Error::NoConvergence { .. }) => {
                    measure(m, b, k, lambda, phi_sup, epsilon, domain, k.clone(), false, 0)
                }
                Err(e) => Err(e),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// `None` uses `1e−6·(1 + |λ|)`.
    pub tol_stable: Option<f64>,
    pub tol_semi: f64,
    pub delta_unstable: f64,
    /// Minimum eigenvalue gap as a fraction of the spectral spread of `u_ε`.
    pub gap_fraction: f64,
    /// Number of trailing sweep entries read by the decision rules.
    pub tail: usize,
    /// `sup|log h_ε|` counts as bounded when it grows by less than this factor over the tail.
    pub bounded_ratio: f64,
    /// Volume-normalized L² distance for matching a candidate projector.
    pub match_tol: f64,
    pub margin: Option<f64>,
    pub via: SolveVia,
    pub solver: ImplicitConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            tol_stable: None,
            tol_semi: 1e-3,
            delta_unstable: 1e-2,
            gap_fraction: 0.3,
            tail: 4,
            bounded_ratio: 2.0,
            match_tol: 1e-2,
            margin: None,
            via: SolveVia::default(),
            solver: ImplicitConfig::default(),
        }
    }
}

/// `ε = 2^{−1}, …, 2^{−n}`.
pub fn dyadic_epsilons(n: usize) -> Vec<f64> {
    (1..=n as i32).map(|j| 0.5f64.powi(j)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub sup_log_h: f64,
    pub eps_times_sup: f64,
    pub he_residual: f64,
    pub l2_log_h: f64,
    pub residual: f64,
    pub dbar_theta_l2: f64,
    pub trace_abs_max: f64,
    pub converged: bool,
    pub c0_ok: bool,
    pub identity_ok: Option<bool>,
    pub steps: usize,
}

impl SweepRow {
    fn from_solution(s: &PerturbedSolution) -> Self {
        SweepRow {
            eps: s.epsilon,
            sup_log_h: s.sup_log_h,
            eps_times_sup: s.epsilon * s.sup_log_h,
            he_residual: s.he_residual,
            l2_log_h: s.l2_log_h,
            residual: s.residual,
            dbar_theta_l2: s.dbar_theta_l2,
            trace_abs_max: s.trace_min.abs().max(s.trace_max.abs()),
            converged: s.converged,
            c0_ok: s.c0_ok,
            identity_ok: s.identity.map(|a| a.passed),
            steps: s.steps,
        }
    }
}

/// `sup|log h_ε| ≤ C₇‖log h_ε‖_{L²} + C₈` fitted over the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderFit {
    pub c7: f64,
    /// Smallest intercept for which the bound holds at every row.
    pub c8: f64,
    /// Largest relative deviation of a row from the least-squares line.
    pub max_rel_dev: f64,
    pub stable: bool,
}

/// Least-squares fit of `sup` against `l2`; `None` with fewer than two distinct rows.
pub fn fit_ladder(rows: &[SweepRow]) -> Option<LadderFit> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.converged && r.l2_log_h > 0.0).map(|r| (r.l2_log_h, r.sup_log_h)).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let c7 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let b = my - c7 * mx;
    let c8 = pts.iter().map(|p| p.1 - c7 * p.0).fold(f64::NEG_INFINITY, f64::max);
    let max_rel_dev = pts.iter().map(|p| (p.1 - (c7 * p.0 + b)).abs() / p.1).fold(0.0, f64::max);
    Some(LadderFit { c7, c8, max_rel_dev, stable: max_rel_dev <= 0.2 })
}

/// Projector extracted from the spectrum of `u_ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Destabilizer {
    #[serde(skip)]
    pub projector: EndoField,
    pub rank: usize,
    /// Gap between the volume-averaged eigenvalues on either side of the split.
    pub eigen_gap: f64,
    pub spread: f64,
    /// Mean eigenvalue of the lower and upper cluster.
    pub mu: [f64; 2],
    pub matched: Option<String>,
    /// Volume-normalized L² distance to each candidate.
    pub distances: Vec<(String, f64)>,
    pub degree: f64,
    pub slope: f64,
    pub total_slope: f64,
    /// `μ₂·deg(E) − (μ₂ − μ₁)·deg(E₁)`; negative certifies the slope inequality.
    pub nu: f64,
    pub slope_inequality: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub lambda: f64,
    pub rows: Vec<SweepRow>,
    pub destabilizer: Option<Destabilizer>,
    /// The ε = 0 solve when the sweep stayed bounded.
    pub final_solution: Option<PerturbedSolution>,
    /// `sup|Φ(h_ε)|_h = ε·sup|log h_ε|` at the last ε when SEMISTABLE is read off the sweep.
    pub approximate_he: Option<f64>,
    pub degrees: Option<DegreeReport>,
    pub ladder: Option<LadderFit>,
    /// Volume-weighted spatial variance of each sorted eigenvalue of `u_ε` at the last ε.
    pub eigen_variance: Vec<f64>,
    pub notes: Vec<String>,
}

/// Volume-averaged sorted eigenvalues of `u = s/‖s‖` and their spatial variances.
fn eigen_profile(m: &GridManifold, rel: &[RelativeLog], norm: f64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let r = rel[0].hermitian_log.n;
    let vals: Vec<Vec<f64>> = rel.iter().map(|rl| rl.hermitian_log.values().iter().map(|v| v.ln() / norm).collect()).collect();
    let vol = m.volume();
    let mean: Vec<f64> = (0..r).map(|a| m.integrate(&vals.iter().map(|v| v[a]).collect::<Vec<_>>()) / vol).collect();
    let var: Vec<f64> = (0..r).map(|a| m.integrate(&vals.iter().map(|v| (v[a] - mean[a]).powi(2)).collect::<Vec<_>>()) / vol).collect();
    (vals, mean, var)
}

/// `sqrt(∫|A − B|²_K / Vol)`.
fn projector_distance(m: &GridManifold, k: &MetricField, a: &EndoField, b: &EndoField) -> Result<f64> {
    let mut v = vec![0.0; m.len()];
    for (i, x) in v.iter_mut().enumerate() {
        let kk = k.at(i);
        let kinv = kk.inverse().ok_or(Error::NotPositive { node: i })?;
        let d = a.at(i) - b.at(i);
        *x = (d * kinv * d.adjoint() * kk).trace().re;
    }
    Ok((m.integrate(&v) / m.volume()).max(0.0).sqrt())
}

fn extract_destabilizer(
    m: &GridManifold,
    b: &HiggsBundleData,
    k: &MetricField,
    h: &MetricField,
    candidates: &[StabilityCandidate],
    cfg: &SweepConfig,
    notes: &mut Vec<String>,
) -> Result<(Option<Destabilizer>, Vec<f64>)> {
    let r = b.rank;
    let rel: Vec<RelativeLog> =
        (0..m.len()).map(|i| RelativeLog::new(&k.at(i), &h.at(i)).ok_or(Error::NotPositive { node: i })).collect::<Result<_>>()?;
    let s = relative_log(k, h)?;
    let norm = l2_sqr(m, &s).sqrt();
    if !(norm > 0.0) || r < 2 {
        notes.push("u_eps undefined: log h vanishes or rank is one".into());
        return Ok((None, vec![]));
    }
    let (vals, mean, var) = eigen_profile(m, &rel, norm);
    let spread = mean[r - 1] - mean[0];
    let (split, gap) = (0..r - 1).map(|a| (a, mean[a + 1] - mean[a])).fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if !(spread > 0.0) || gap < cfg.gap_fraction * spread {
        notes.push(format!("no eigenvalue gap: largest {gap:e} against spread {spread:e}"));
        return Ok((None, var));
    }
    if let Some(i) = vals.iter().position(|v| !(v[split] < v[split + 1])) {
        notes.push(format!("eigenvalue clusters touch at node {i}"));
        return Ok((None, var));
    }
    let lower = split + 1;
    let proj = EndoField::from_fn(m.len(), r, |i| {
        let rl = &rel[i];
        let v = rl.hermitian_log.vectors;
        let mut p = CMat::zeros(r);
        for a in 0..r {
            for c in 0..r {
                let mut acc = crate::linalg::C64::new(0.0, 0.0);
                for q in 0..lower {
                    acc += v.get(a, q) * v.get(c, q).conj();
                }
                p.set(a, c, acc);
            }
        }
        rl.l_inv.adjoint() * p * rl.l.adjoint()
    });
    let mu = [mean[..lower].iter().sum::<f64>() / lower as f64, mean[lower..].iter().sum::<f64>() / (r - lower) as f64];
    let mut distances = Vec::new();
    for c in candidates {
        distances.push((c.label.clone(), projector_distance(m, k, &proj, &c.projector)?));
    }
    let matched = distances
        .iter()
        .filter(|d| d.1 <= cfg.match_tol)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|d| d.0.clone());
    let cand = StabilityCandidate::new(proj, "extracted")?;
    let degree = subobject_degree(m, b, k, &cand)?;
    let total = analytic_degree(m, b, k)?.degree;
    let slope = degree / lower as f64;
    let total_slope = total / r as f64;
    let nu = mu[1] * total - (mu[1] - mu[0]) * degree;
    Ok((
        Some(Destabilizer {
            projector: cand.projector,
            rank: lower,
            eigen_gap: gap,
            spread,
            mu,
            matched,
            distances,
            degree,
            slope,
            total_slope,
            nu,
            slope_inequality: slope > total_slope,
        }),
        var,
    ))
}

/// Runs the perturbed solves along `epsilons` (warm-started) and applies the decision rules.
pub fn epsilon_sweep_classify(
    m: &GridManifold,
    b: &HiggsBundleData,
    k: &MetricField,
    epsilons: &[f64],
    candidates: &[StabilityCandidate],
    cfg: &SweepConfig,
) -> Result<StabilityReport> {
    let tail_len = cfg.tail.max(1);
    if epsilons.len() < tail_len {
        return Err(Error::InvalidArgument(format!("need at least {tail_len} epsilons, got {}", epsilons.len())));
    }
    if epsilons.iter().any(|e| !(*e > 0.0)) || epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("epsilons must be positive and strictly decreasing".into()));
    }
    let (lambda, phi_sup) = reference_data(m, b, k)?;
    let tol_stable = cfg.tol_stable.unwrap_or(1e-6 * (1.0 + lambda.abs()));
    let mut rep = StabilityReport {
        verdict: Verdict::Inconclusive,
        lambda,
        rows: Vec::new(),
        destabilizer: None,
        final_solution: None,
        approximate_he: None,
        degrees: None,
        ladder: None,
        eigen_variance: vec![],
        notes: vec![],
    };
    let mut last: Option<PerturbedSolution> = None;
    for &eps in epsilons {
        let warm = if matches!(cfg.via, SolveVia::Flow {}) { last.as_ref().map(|s| &s.h) } else { None };
        let sol = solve_perturbed_he(m, b, k, eps, &cfg.via, &cfg.solver, warm)?;
        rep.rows.push(SweepRow::from_solution(&sol));
        if !sol.converged {
            rep.notes.push(format!("solve at eps = {eps:e} stopped at residual {:e}", sol.residual));
            rep.ladder = fit_ladder(&rep.rows);
            return Ok(rep);
        }
        last = Some(sol);
    }
    rep.ladder = fit_ladder(&rep.rows);
    let last = last.expect("non-empty sweep");
    let tail = &rep.rows[rep.rows.len() - tail_len..];
    let tail_min = tail.iter().map(|r| r.eps_times_sup).fold(f64::INFINITY, f64::min);
    let (first, final_row) = (tail[0].clone(), tail[tail.len() - 1].clone());
    let bounded = final_row.sup_log_h <= cfg.bounded_ratio * first.sup_log_h || final_row.sup_log_h == 0.0;

    if tail_min >= cfg.delta_unstable {
        let (d, var) = extract_destabilizer(m, b, k, &last.h, candidates, cfg, &mut rep.notes)?;
        rep.eigen_variance = var;
        match d {
            Some(d) if d.slope_inequality => {
                rep.verdict = Verdict::Unstable;
                rep.destabilizer = Some(d);
            }
            Some(d) => rep.notes.push(format!("extracted sub-object slope {:e} does not exceed {:e}", d.slope, d.total_slope)),
            None => {}
        }
        return Ok(rep);
    }
    if bounded {
        let problem = Problem::new(m, b, k, 0.0, lambda, m.closed_domain())?;
        let solver = ImplicitConfig { tol: Some(cfg.solver.tol.unwrap_or_else(|| default_tol(lambda)).min(tol_stable)), ..cfg.solver };
        let out = solve_stationary(&problem, &last.h, &solver)?;
        if out.residual <= tol_stable {
            let fin = measure(m, b, k, lambda, phi_sup, 0.0, m.closed_domain(), out.h, true, out.steps)?;
            let degrees = if candidates.is_empty() { None } else { Some(stability_verdict(m, b, k, candidates, cfg.margin)?) };
            rep.verdict = match degrees.as_ref().map(|d| d.verdict) {
                None | Some(Verdict::Stable) => Verdict::Stable,
                Some(Verdict::Semistable) => {
                    rep.notes.push("Hermitian-Einstein metric exists and a candidate attains the total slope".into());
                    Verdict::Semistable
                }
                Some(_) => {
                    rep.notes.push("Hermitian-Einstein metric found but a candidate has larger slope".into());
                    Verdict::Inconclusive
                }
            };
            rep.final_solution = Some(fin);
            rep.degrees = degrees;
            return Ok(rep);
        }
        rep.notes.push(format!("eps = 0 solve stopped at residual {:e}", out.residual));
    }
    if final_row.eps_times_sup <= cfg.tol_semi {
        rep.verdict = Verdict::Semistable;
        rep.approximate_he = Some(final_row.eps_times_sup);
        return Ok(rep);
    }
    rep.notes.push("sweep indicators do not match any decision rule".into());
    Ok(rep)
}
