//! The perturbed heat flow `H⁻¹∂_tH = −2(Φ(H,θ) + ε log(K⁻¹H))` on closed
//! models and on exhaustion domains with `H = Id` on the boundary ring.
//!
//! Two integrators share one residual kernel. The explicit one multiplies by
//! `exp(−2dt Φ_ε)` each step under a CFL bound and is what the monotonicity
//! checks watch. The semi-implicit one treats `−Δ̃ + 2ε` (plus a scalar Higgs
//! weight on the trace-free part) implicitly in the Cholesky frame of `h` and
//! adapts `dt` by residual decrease, which reaches stationary metrics at small ε.

use crate::analysis::donaldson_distance;
use crate::bundle::{check_shapes, contracted_with, frames, Frames, HiggsBundleData};
use crate::error::{Error, Result};
use crate::field::{EndoField, MetricField};
use crate::geometry::{Domain, GridManifold};
use crate::linalg::{CMat, C64};
use crate::poisson::Stencil;
use crate::small::{by_rank, fill, SMat};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicy {
    Fixed { dt: f64 },
    /// `dt = c·Δx²_min / (2n·max g^{ij̄})`.
    Cfl { c: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowBoundary {
    Closed,
    Dirichlet { level: f64 },
}

impl FlowBoundary {
    pub fn domain(&self, m: &GridManifold) -> Result<Domain> {
        match *self {
            FlowBoundary::Closed => Ok(m.closed_domain()),
            FlowBoundary::Dirichlet { level } => m.exhaustion_domain(level),
        }
    }
}

pub const CFL_DEFAULT: f64 = 0.2;

/// Default stationarity tolerance `1e−8·(1 + |λ|)`.
pub fn default_tol(lambda: f64) -> f64 {
    1e-8 * (1.0 + lambda.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub dt: DtPolicy,
    /// Stop once `sup|Φ_ε| < tol`; `None` uses [`default_tol`].
    pub tol: Option<f64>,
    pub t_max: f64,
    pub max_steps: usize,
    pub boundary: FlowBoundary,
    pub dt_min: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt: DtPolicy::Cfl { c: CFL_DEFAULT },
            tol: None,
            t_max: f64::INFINITY,
            max_steps: 10_000,
            boundary: FlowBoundary::Closed,
            dt_min: 1e-14,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.dt {
            DtPolicy::Fixed { dt } => dt > 0.0 && dt.is_finite(),
            DtPolicy::Cfl { c } => c > 0.0 && c.is_finite(),
        };
        if !ok || self.tol.is_some_and(|t| !(t > 0.0)) || !(self.t_max > 0.0) || !(self.dt_min > 0.0) {
            return Err(Error::InvalidArgument("flow config: tolerances and steps must be positive".into()));
        }
        Ok(())
    }

    pub fn step_size(&self, m: &GridManifold) -> f64 {
        match self.dt {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Cfl { c } => {
                let dx = m.min_spacing();
                c * dx * dx / (2.0 * m.dim() as f64 * m.max_inv_metric())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub t: f64,
    pub sup_phi: f64,
    pub trace_phi_integral: f64,
    pub min_eig_h: f64,
    pub sup_log_h: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub h: MetricField,
    pub epsilon: f64,
    pub lambda: f64,
    pub dt: f64,
    pub steps: usize,
    pub monitors: Vec<Monitor>,
}

/// Everything fixed along one flow: geometry, bundle, reference metric `K`, ε, λ, domain.
pub struct Problem<'a> {
    pub m: &'a GridManifold,
    pub b: &'a HiggsBundleData,
    pub reference: &'a MetricField,
    pub epsilon: f64,
    pub lambda: f64,
    pub domain: Domain,
    ref_frames: Option<Frames>,
    stencil: Stencil,
}

/// Residual data at one metric.
pub(crate) struct Eval {
    /// `Φ + ε s` on interior nodes, zero elsewhere.
    pub phi_eps: EndoField,
    pub frames: Frames,
    /// `sup |Φ_ε|_h`.
    pub sup: f64,
    pub sup_log: f64,
    pub min_eig: f64,
    pub trace_integral: f64,
}

impl<'a> Problem<'a> {
    pub fn new(
        m: &'a GridManifold,
        b: &'a HiggsBundleData,
        reference: &'a MetricField,
        epsilon: f64,
        lambda: f64,
        domain: Domain,
    ) -> Result<Self> {
        check_shapes(m, b, reference)?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} / lambda {lambda}")));
        }
        let id = CMat::identity(b.rank);
        let is_id = (0..reference.len()).all(|i| reference.at(i) == id);
        let ref_frames = if is_id { None } else { Some(frames(reference)?) };
        let stencil = Stencil::new(m, &domain);
        Ok(Problem { m, b, reference, epsilon, lambda, domain, ref_frames, stencil })
    }

    /// `Φ_ε = Φ(h) + ε log(K⁻¹h)` on the domain interior.
    pub fn residual(&self, h: &MetricField) -> Result<EndoField> {
        Ok(self.evaluate(h)?.phi_eps)
    }

    /// `sup |Φ_ε|_h` over the domain interior.
    pub fn sup_residual(&self, h: &MetricField) -> Result<f64> {
        Ok(self.evaluate(h)?.sup)
    }

    pub(crate) fn evaluate(&self, h: &MetricField) -> Result<Eval> {
        check_shapes(self.m, self.b, h)?;
        let fr = frames(h)?;
        let curv = contracted_with(self.m, self.b, h, &fr, &self.domain, true)?;
        let (phi_eps, sup, sup_log, min_eig, tr) = by_rank!(self.b.rank, evaluate_n(self, h, &curv, &fr));
        if !sup.is_finite() || !phi_eps.is_finite() {
            return Err(Error::NonFinite("mean curvature".into()));
        }
        let trace_integral = self.m.integrate(&tr);
        Ok(Eval { phi_eps, frames: fr, sup, sup_log, min_eig, trace_integral })
    }

    fn check_boundary(&self, h: &MetricField) -> Result<()> {
        let id = CMat::identity(self.b.rank);
        for i in 0..h.len() {
            if !self.domain.interior[i] && (h.at(i) - id).max_abs() > 1e-12 {
                return Err(Error::BoundaryViolation(i));
            }
        }
        Ok(())
    }

    /// `h ← L exp(L^† B L^{-†}) L^†` on interior nodes with `B = −2 dt Φ_ε`.
    fn explicit_update(&self, h: &MetricField, ev: &Eval, dt: f64) -> Option<MetricField> {
        by_rank!(self.b.rank, explicit_update_n(self, h, ev, dt))
    }
}

type Evaluated = (EndoField, f64, f64, f64, Vec<f64>);

fn evaluate_n<const N: usize>(p: &Problem, h: &MetricField, curv: &EndoField, fr: &Frames) -> Evaluated {
    let n = p.m.len();
    let hs = h.field().as_slice();
    let cs = curv.as_slice();
    let (ls, lis) = (fr.l.as_slice(), fr.l_inv.as_slice());
    let mut phi_eps = EndoField::zeros(n, N);
    let out = phi_eps.as_mut_slice();
    let (mut sup, mut sup_log, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut tr = vec![0.0; n];
    let shift = SMat::<N>::identity().scale(p.lambda);
    for i in 0..n {
        let hi = SMat::<N>::at(hs, i);
        // log(K⁻¹h) and its size, plus the spectrum of h for the monitors
        let (s, vals, lo) = match &p.ref_frames {
            None => {
                let (s, vals) = hi.map_hermitian(f64::ln);
                (s, vals, vals[0])
            }
            Some(kf) => {
                let (l, li) = (SMat::<N>::at(kf.l.as_slice(), i), SMat::<N>::at(kf.l_inv.as_slice(), i));
                let (w, vals) = (li * hi * li.adjoint()).map_hermitian(f64::ln);
                (li.adjoint() * w * l.adjoint(), vals, hi.map_hermitian(|x| x).1[0])
            }
        };
        min_eig = min_eig.min(lo);
        if !p.domain.interior[i] {
            continue;
        }
        sup_log = sup_log.max(vals.iter().map(|v| v.ln().powi(2)).sum::<f64>().sqrt());
        let phi = SMat::<N>::at(cs, i) - shift + s.scale(p.epsilon);
        let w = SMat::<N>::at(ls, i).adjoint() * phi * SMat::<N>::at(lis, i).adjoint();
        sup = sup.max(w.norm_sqr().sqrt());
        tr[i] = phi.trace().re;
        phi.store_at(out, i);
    }
    (phi_eps, sup, sup_log, min_eig, tr)
}

fn explicit_update_n<const N: usize>(p: &Problem, h: &MetricField, ev: &Eval, dt: f64) -> Option<MetricField> {
    let hs = h.field().as_slice();
    let (ls, lis, ps) = (ev.frames.l.as_slice(), ev.frames.l_inv.as_slice(), ev.phi_eps.as_slice());
    let mut out = EndoField::zeros(h.len(), N);
    fill::<N>(out.as_mut_slice(), |i| {
        let hi = SMat::<N>::at(hs, i);
        if !p.domain.interior[i] {
            return hi;
        }
        let (l, li) = (SMat::<N>::at(ls, i), SMat::<N>::at(lis, i));
        let w = (l.adjoint() * SMat::<N>::at(ps, i) * li.adjoint()).hermitian_part().scale(-2.0 * dt);
        (l * w.map_hermitian(f64::exp).0 * l.adjoint()).hermitian_part()
    });
    finite_metric_n::<N>(out)
}

fn finite_metric(f: EndoField) -> Option<MetricField> {
    by_rank!(f.rank(), finite_metric_n(f))
}

fn finite_metric_n<const N: usize>(f: EndoField) -> Option<MetricField> {
    let v = f.as_slice();
    for i in 0..f.len() {
        let m = SMat::<N>::at(v, i);
        if !m.is_finite() {
            return None;
        }
        m.cholesky()?;
    }
    Some(MetricField::trusted(f))
}

fn monitor(t: f64, ev: &Eval) -> Monitor {
    Monitor { t, sup_phi: ev.sup, trace_phi_integral: ev.trace_integral, min_eig_h: ev.min_eig, sup_log_h: ev.sup_log }
}

/// An explicit flow that can be advanced one accepted step at a time.
pub struct Flow<'a> {
    problem: Problem<'a>,
    config: FlowConfig,
    state: FlowState,
    eval: Eval,
    tol: f64,
    trace_prev: Option<Vec<f64>>,
    trace_residual: f64,
}

impl<'a> Flow<'a> {
    pub fn new(problem: Problem<'a>, h0: MetricField, config: FlowConfig) -> Result<Self> {
        config.validate()?;
        problem.check_boundary(&h0)?;
        let eval = problem.evaluate(&h0)?;
        let dt = config.step_size(problem.m);
        let tol = config.tol.unwrap_or_else(|| default_tol(problem.lambda));
        let state = FlowState {
            t: 0.0,
            h: h0,
            epsilon: problem.epsilon,
            lambda: problem.lambda,
            dt,
            steps: 0,
            monitors: vec![monitor(0.0, &eval)],
        };
        let trace_prev = problem.domain.is_closed().then(|| scaled_trace(&eval, 0.0, problem.epsilon));
        Ok(Flow { problem, config, state, eval, tol, trace_prev, trace_residual: 0.0 })
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    pub fn into_state(self) -> FlowState {
        self.state
    }

    pub fn sup_phi(&self) -> f64 {
        self.eval.sup
    }

    pub fn converged(&self) -> bool {
        self.eval.sup < self.tol
    }

    /// Largest discrete residual of `(∂_t − Δ̃)(e^{2εt} tr Φ_ε)` seen so far (closed models).
    pub fn trace_residual(&self) -> f64 {
        self.trace_residual
    }

    /// One accepted step; halves `dt` on positivity failure.
    pub fn step(&mut self) -> Result<()> {
        let mut dt = self.state.dt;
        loop {
            if dt < self.config.dt_min {
                return Err(Error::StepCollapse { t: self.state.t, dt_min: self.config.dt_min });
            }
            if let Some(h) = self.problem.explicit_update(&self.state.h, &self.eval, dt) {
                if let Ok(ev) = self.problem.evaluate(&h) {
                    self.accept(h, ev, dt);
                    return Ok(());
                }
            }
            dt *= 0.5;
        }
    }

    fn accept(&mut self, h: MetricField, ev: Eval, dt: f64) {
        let t = self.state.t + dt;
        if let Some(prev) = &self.trace_prev {
            let eps = self.problem.epsilon;
            let cur = scaled_trace(&ev, t, eps);
            let st = &self.problem.stencil;
            let res = (0..cur.len())
                .map(|i| ((cur[i] - prev[i]) / dt + st.neg_lap_at(prev, i)).abs())
                .fold(0.0, f64::max);
            self.trace_residual = self.trace_residual.max(res);
            self.trace_prev = Some(cur);
        }
        self.state.h = h;
        self.state.t = t;
        self.state.dt = dt;
        self.state.steps += 1;
        self.state.monitors.push(monitor(t, &ev));
        self.eval = ev;
    }
}

fn scaled_trace(ev: &Eval, t: f64, eps: f64) -> Vec<f64> {
    let f = (2.0 * eps * t).exp();
    (0..ev.phi_eps.len()).map(|i| f * ev.phi_eps.at(i).trace().re).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowOutcome {
    pub state: FlowState,
    pub converged: bool,
    pub trace_residual: f64,
}

/// Advance `state` by one explicit step.
pub fn flow_step(state: &FlowState, m: &GridManifold, b: &HiggsBundleData, reference: &MetricField, config: &FlowConfig) -> Result<FlowState> {
    let problem = Problem::new(m, b, reference, state.epsilon, state.lambda, config.boundary.domain(m)?)?;
    let dt = state.dt;
    let mut flow = Flow::new(problem, state.h.clone(), FlowConfig { dt: DtPolicy::Fixed { dt }, ..*config })?;
    flow.state.t = state.t;
    flow.state.steps = state.steps;
    flow.state.monitors = state.monitors.clone();
    flow.step()?;
    Ok(flow.into_state())
}

/// Integrate until `sup|Φ_ε| < tol`, `t > t_max` or the step cap; running out of time is
/// reported through `converged`, not as an error.
pub fn run_flow(
    m: &GridManifold,
    b: &HiggsBundleData,
    h0: &MetricField,
    reference: &MetricField,
    epsilon: f64,
    lambda: f64,
    config: &FlowConfig,
) -> Result<FlowOutcome> {
    let problem = Problem::new(m, b, reference, epsilon, lambda, config.boundary.domain(m)?)?;
    let mut flow = Flow::new(problem, h0.clone(), *config)?;
    while !flow.converged() && flow.state.t < config.t_max && flow.state.steps < config.max_steps {
        flow.step()?;
    }
    let converged = flow.converged();
    let trace_residual = flow.trace_residual;
    Ok(FlowOutcome { state: flow.into_state(), converged, trace_residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImplicitConfig {
    pub tol: Option<f64>,
    pub max_steps: usize,
    pub dt0: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    /// Inner CG tolerance relative to the sup of each right-hand side.
    pub cg_tol: f64,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        ImplicitConfig { tol: None, max_steps: 400, dt0: 1.0, dt_max: 1e12, dt_min: 1e-10, cg_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryOutcome {
    pub h: MetricField,
    pub residual: f64,
    pub sup_log_h: f64,
    pub steps: usize,
    pub rejections: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Pseudo-time stepping of the flow to a stationary metric. Running out of
/// steps or of step size returns the last accepted metric with `converged = false`.
pub fn solve_stationary(problem: &Problem, h0: &MetricField, config: &ImplicitConfig) -> Result<StationaryOutcome> {
    problem.check_boundary(h0)?;
    let tol = config.tol.unwrap_or_else(|| default_tol(problem.lambda));
    let mut h = h0.clone();
    let mut ev = problem.evaluate(&h)?;
    let mut dt = config.dt0;
    let mut history = vec![ev.sup];
    let (mut steps, mut rejections) = (0, 0);
    while ev.sup > tol && steps < config.max_steps {
        if dt < config.dt_min {
            // no admissible step left; report the best metric as unconverged
            break;
        }
        let trial = implicit_update(problem, &h, &ev, dt, config.cg_tol)?;
        let next = trial.and_then(|h2| problem.evaluate(&h2).ok().map(|e| (h2, e)));
        match next {
            Some((h2, e2)) if e2.sup < ev.sup => {
                h = h2;
                ev = e2;
                steps += 1;
                history.push(ev.sup);
                dt = (dt * 4.0).min(config.dt_max);
            }
            _ => {
                rejections += 1;
                dt *= 0.25;
            }
        }
    }
    Ok(StationaryOutcome {
        residual: ev.sup,
        sup_log_h: ev.sup_log,
        converged: ev.sup <= tol,
        h,
        steps,
        rejections,
        history,
    })
}

/// Solve `(1/dt + 2ε + 2V̂ − Δ̃)δ = −2W` componentwise, `W = L^†Φ_εL^{-†}`, and set
/// `h ← L exp(δ) L^†`. The trace part uses `V̂ = 0`.
fn implicit_update(problem: &Problem, h: &MetricField, ev: &Eval, dt: f64, cg_tol: f64) -> Result<Option<MetricField>> {
    let m = problem.m;
    let n = m.len();
    let r = problem.b.rank;
    let rr = r as f64;
    let act = &problem.domain.interior;
    let w: Vec<CMat> = (0..n)
        .map(|i| {
            if !act[i] {
                return CMat::zeros(r);
            }
            let (l, li) = (ev.frames.l.at(i), ev.frames.l_inv.at(i));
            (l.adjoint() * ev.phi_eps.at(i) * li.adjoint()).hermitian_part()
        })
        .collect();
    let base = 1.0 / dt + 2.0 * problem.epsilon;
    let cap = 20 * n + 1000;
    let solve = |shift: &[f64], src: &[f64]| -> Result<Vec<f64>> {
        let rhs: Vec<f64> = src.iter().map(|x| -2.0 * x).collect();
        let sup = rhs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let mut u = vec![0.0; n];
        if sup == 0.0 {
            return Ok(u);
        }
        problem.stencil.solve(shift, &rhs, None, &mut u, cg_tol * sup, cap)?;
        Ok(u)
    };

    let tr: Vec<f64> = w.iter().map(|x| x.trace().re / rr).collect();
    let d_tr = solve(&vec![base; n], &tr)?;
    let mut delta: Vec<CMat> = d_tr.iter().map(|&x| CMat::identity(r).scale(x)).collect();

    if r > 1 {
        let higgs: Vec<f64> = (0..n)
            .map(|i| {
                if !act[i] || !problem.b.has_higgs() {
                    return 0.0;
                }
                let li = ev.frames.l_inv.at(i);
                let hinv = li.adjoint() * li;
                let hi = h.at(i);
                let mut v = 0.0;
                for (a, th) in problem.b.theta.iter().enumerate() {
                    let t = th.at(i);
                    v += 2.0 * m.inv_metric(i, a) * (t * hinv * t.adjoint() * hi).trace().re;
                }
                v
            })
            .collect();
        let shift: Vec<f64> = higgs.iter().map(|v| base + 2.0 * v).collect();
        let free: Vec<CMat> = w.iter().zip(&tr).map(|(x, t)| *x - CMat::identity(r).scale(*t)).collect();
        let mut d0 = vec![CMat::zeros(r); n];
        for p in 0..r {
            for q in p..r {
                let re: Vec<f64> = free.iter().map(|x| x.get(p, q).re).collect();
                let u = solve(&shift, &re)?;
                for i in 0..n {
                    let cur = d0[i].get(p, q);
                    d0[i].set(p, q, C64::new(u[i], cur.im));
                    if p != q {
                        d0[i].set(q, p, C64::new(u[i], -cur.im));
                    }
                }
                if p != q {
                    let im: Vec<f64> = free.iter().map(|x| x.get(p, q).im).collect();
                    let u = solve(&shift, &im)?;
                    for i in 0..n {
                        let cur = d0[i].get(p, q);
                        d0[i].set(p, q, C64::new(cur.re, u[i]));
                        d0[i].set(q, p, C64::new(cur.re, -u[i]));
                    }
                }
            }
        }
        for i in 0..n {
            let t = d0[i].trace().re / rr;
            delta[i] += d0[i] - CMat::identity(r).scale(t);
        }
    }

    let out = h.field().map(|i, hi| {
        if !act[i] {
            return *hi;
        }
        let l = ev.frames.l.at(i);
        (l * delta[i].map_hermitian(f64::exp) * l.adjoint()).hermitian_part()
    });
    Ok(finite_metric(out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    pub interior_nodes: usize,
    pub steps: usize,
    pub residual: f64,
    pub sup_log_h: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustionLimit {
    pub h: MetricField,
    pub levels: Vec<LevelReport>,
    /// `sup_core σ(h_{level_i}, h_{level_{i+1}})`.
    pub cauchy: Vec<f64>,
    pub monotone: bool,
    /// `sup |Φ_ε|_h` of the finest metric on the core.
    pub core_residual: f64,
}

/// Stationary metrics on `{φ < level}` with `h = Id` on each ring, compared on
/// the core `{φ ≤ core_level}`.
pub fn exhaustion_flow_limit(
    m: &GridManifold,
    b: &HiggsBundleData,
    epsilon: f64,
    lambda: f64,
    levels: &[f64],
    core_level: f64,
    config: &ImplicitConfig,
) -> Result<ExhaustionLimit> {
    let reference = MetricField::identity(m.len(), b.rank);
    if levels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("levels must increase".into()));
    }
    let domains: Vec<Domain> = if m.is_compact() || levels.is_empty() {
        vec![m.closed_domain()]
    } else {
        levels.iter().map(|&l| m.exhaustion_domain(l)).collect::<Result<_>>()?
    };
    let core: Vec<usize> = (0..m.len()).filter(|&i| m.phi()[i] <= core_level + 1e-12).collect();
    let mut reports = Vec::new();
    let mut metrics: Vec<MetricField> = Vec::new();
    let mut core_residual = 0.0;
    for (k, dom) in domains.into_iter().enumerate() {
        let level = dom.level;
        let interior_nodes = dom.interior_count();
        if core.iter().any(|&i| !dom.interior[i]) && !dom.is_closed() {
            return Err(Error::Level { level: k, source: Box::new(Error::InvalidArgument("core not inside level".into())) });
        }
        let problem = Problem::new(m, b, &reference, epsilon, lambda, dom).map_err(|e| Error::Level { level: k, source: Box::new(e) })?;
        let out = solve_stationary(&problem, &reference, config).map_err(|e| Error::Level { level: k, source: Box::new(e) })?;
        if !out.converged {
            return Err(Error::Level {
                level: k,
                source: Box::new(Error::NoConvergence { iterations: out.steps, residual: out.residual, history: out.history }),
            });
        }
        let ev = problem.evaluate(&out.h)?;
        core_residual = core.iter().map(|&i| {
            let (l, li) = (ev.frames.l.at(i), ev.frames.l_inv.at(i));
            (l.adjoint() * ev.phi_eps.at(i) * li.adjoint()).norm()
        }).fold(0.0, f64::max);
        reports.push(LevelReport { level, interior_nodes, steps: out.steps, residual: out.residual, sup_log_h: out.sup_log_h });
        metrics.push(out.h);
    }
    let mut cauchy = Vec::new();
    for w in metrics.windows(2) {
        let (s, _) = donaldson_distance(&w[0], &w[1])?;
        cauchy.push(core.iter().map(|&i| s[i]).fold(0.0, f64::max));
    }
    let monotone = cauchy.windows(2).all(|w| w[1] < w[0]);
    Ok(ExhaustionLimit { h: metrics.pop().expect("at least one level"), levels: reports, cauchy, monotone, core_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cusp_cylinder, build_flat_torus};
    use crate::poisson::{solve_helmholtz, Boundary, SolveOptions};
    use crate::presets::Preset;
    use std::f64::consts::PI;

    fn id(m: &GridManifold, r: usize) -> MetricField {
        MetricField::identity(m.len(), r)
    }

    #[test]
    fn stationary_input_is_unchanged() {
        let m = build_flat_torus(1, &[1.0], 8).unwrap();
        let b = HiggsBundleData::trivial(&m, 2);
        let k = id(&m, 2);
        let out = run_flow(&m, &b, &k, &k, 0.5, 0.0, &FlowConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.state.steps, 0);
        let p = Problem::new(&m, &b, &k, 0.0, 0.0, m.closed_domain()).unwrap();
        let mut f = Flow::new(p, k.clone(), FlowConfig::default()).unwrap();
        f.step().unwrap();
        assert_eq!(f.state().h, k);
    }

    #[test]
    fn rank_one_heat_matches_spectral_solution() {
        // ∂u/∂t = Δ̃u − 2a with a = A cos(2πx), u(0) = 0
        let amp = 0.5;
        let t_end = 0.01;
        let mut errs = vec![];
        for n in [16, 32] {
            let m = build_flat_torus(1, &[1.0], n).unwrap();
            let mut b = HiggsBundleData::trivial(&m, 1);
            b.f0[0] = EndoField::from_fn(m.len(), 1, |i| CMat::from_real_diag(&[amp * (2.0 * PI * m.coord(i, 0)).cos() / 2.0]));
            let cfg = FlowConfig { t_max: t_end, max_steps: usize::MAX, ..FlowConfig::default() };
            let dt = cfg.step_size(&m);
            let steps = (t_end / dt).ceil() as usize;
            let cfg = FlowConfig { dt: DtPolicy::Fixed { dt: t_end / steps as f64 }, ..cfg };
            let k = id(&m, 1);
            let out = run_flow(&m, &b, &k, &k, 0.0, 0.0, &cfg).unwrap();
            let t = out.state.t;
            let mu = 4.0 * PI * PI;
            let mut e: f64 = 0.0;
            for i in 0..m.len() {
                let exact = -2.0 * amp * (1.0 - (-mu * t).exp()) / mu * (2.0 * PI * m.coord(i, 0)).cos();
                e = e.max((out.state.h.at(i).get(0, 0).re.ln() - exact).abs());
            }
            errs.push(e);
        }
        assert!(errs[1] < errs[0] / 3.5 && errs[1] < 2e-5, "{errs:?}");
    }

    #[test]
    fn rank_one_limit_matches_helmholtz() {
        let m = build_flat_torus(1, &[1.0], 16).unwrap();
        let b = Preset::LineWeight { c: 0.4 }.build(&m).unwrap();
        let k = id(&m, 1);
        let eps = 0.5;
        let p = Problem::new(&m, &b, &k, eps, 0.0, m.closed_domain()).unwrap();
        let out = solve_stationary(&p, &k, &ImplicitConfig::default()).unwrap();
        assert!(out.converged);
        let a: Vec<f64> = (0..m.len()).map(|i| b.contracted_f0(&m, i).get(0, 0).re).collect();
        // Δ̃u = 2a + 2εu  ⇔  (Δ̃ − 2ε)u = 2a
        let psi: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let (u, _) = solve_helmholtz(&m, &psi, 2.0 * eps, &Boundary::Closed, &SolveOptions::default()).unwrap();
        for i in 0..m.len() {
            assert!((out.h.at(i).get(0, 0).re.ln() - u[i]).abs() < 1e-6);
        }
        // the explicit flow reaches the same metric
        let cfg = FlowConfig { tol: Some(1e-9), max_steps: 200_000, ..FlowConfig::default() };
        let ex = run_flow(&m, &b, &k, &k, eps, 0.0, &cfg).unwrap();
        assert!(ex.converged);
        for i in 0..m.len() {
            assert!((ex.state.h.at(i).get(0, 0).re.ln() - u[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn trace_of_log_stays_zero_for_traceless_data() {
        let m = build_flat_torus(1, &[1.0], 16).unwrap();
        let b = Preset::NilpotentHiggs { c: 1.0, weight: 0.3 }.build(&m).unwrap();
        let k = id(&m, 2);
        let cfg = FlowConfig { max_steps: 300, ..FlowConfig::default() };
        let out = run_flow(&m, &b, &k, &k, 0.5, 0.0, &cfg).unwrap();
        for i in 0..m.len() {
            let det = out.state.h.at(i);
            let ld = (det.get(0, 0) * det.get(1, 1) - det.get(0, 1) * det.get(1, 0)).re.ln();
            assert!(ld.abs() < 1e-12, "{ld}");
        }
        assert!(out.trace_residual < 1e-8, "{}", out.trace_residual);
    }

    #[test]
    fn sup_phi_does_not_increase() {
        let m = build_flat_torus(1, &[1.0], 16).unwrap();
        let b = Preset::NilpotentHiggs { c: 1.0, weight: 0.5 }.build(&m).unwrap();
        let k = id(&m, 2);
        for eps in [0.0, 0.5] {
            let cfg = FlowConfig { max_steps: 500, ..FlowConfig::default() };
            let out = run_flow(&m, &b, &k, &k, eps, 0.0, &cfg).unwrap();
            for w in out.state.monitors.windows(2) {
                assert!(w[1].sup_phi <= w[0].sup_phi + 1e-8);
            }
        }
    }

    #[test]
    fn dirichlet_flow_keeps_ring() {
        let m = build_cusp_cylinder(4.0, 17, 8).unwrap();
        let b = Preset::LineWeight { c: 1.0 }.build(&m).unwrap();
        let k = id(&m, 1);
        let level = 3f64.ln();
        let p = Problem::new(&m, &b, &k, 0.5, 0.0, m.exhaustion_domain(level).unwrap()).unwrap();
        let out = solve_stationary(&p, &k, &ImplicitConfig::default()).unwrap();
        assert!(out.converged);
        let dom = m.exhaustion_domain(level).unwrap();
        for i in dom.ring() {
            assert_eq!(out.h.at(i), CMat::identity(1));
        }
        let bad = MetricField::constant(m.len(), &CMat::from_real_diag(&[2.0])).unwrap();
        let p = Problem::new(&m, &b, &k, 0.5, 0.0, dom).unwrap();
        assert!(matches!(solve_stationary(&p, &bad, &ImplicitConfig::default()), Err(Error::BoundaryViolation(_))));
    }

    #[test]
    fn single_level_on_torus_is_plain_solve() {
        let m = build_flat_torus(1, &[1.0], 8).unwrap();
        let b = Preset::NilpotentHiggs { c: 1.0, weight: 0.0 }.build(&m).unwrap();
        let lim = exhaustion_flow_limit(&m, &b, 0.5, 0.0, &[], 0.0, &ImplicitConfig::default()).unwrap();
        assert_eq!(lim.levels.len(), 1);
        assert!(lim.cauchy.is_empty());
        let k = id(&m, 2);
        let p = Problem::new(&m, &b, &k, 0.5, 0.0, m.closed_domain()).unwrap();
        assert!(p.sup_residual(&lim.h).unwrap() < 1e-8);
    }

    #[test]
    fn nonlinear_stationary_solve_converges() {
        let m = build_cusp_cylinder(4.0, 17, 16).unwrap();
        let b = Preset::NilpotentHiggs { c: 1.0, weight: -0.5 }.build(&m).unwrap();
        let k = id(&m, 2);
        let lambda = crate::analysis::analytic_degree(&m, &b, &k).unwrap().lambda;
        for eps in [0.5, 0.0] {
            let p = Problem::new(&m, &b, &k, eps, lambda, m.closed_domain()).unwrap();
            let out = solve_stationary(&p, &k, &ImplicitConfig::default()).unwrap();
            assert!(out.converged, "eps {eps}: {:?}", out.history);
        }
    }
}
