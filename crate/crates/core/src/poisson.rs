//! Scalar elliptic solves for `Δ̃f = ψ + εf`, the ε → 0 Poisson limit and the
//! conformal trace normalization.
//!
//! Systems are assembled in the volume-weighted form `W(−Δ̃ + V)`, which is
//! symmetric positive semi-definite, and solved by Jacobi-preconditioned
//! conjugate gradients. Convergence is declared on the unweighted L∞ residual.

use crate::bundle::{mean_curvature_phi, HiggsBundleData};
use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::geometry::{Domain, GridManifold};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const CAUCHY_TOL: f64 = 1e-7;
pub const K_MAX: usize = 20;
/// Mean-zero tolerance for sources, relative to `Vol·sup|ψ|`.
pub const MEAN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    /// Iteration cap; `None` means a multiple of the node count.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: DEFAULT_TOL, max_iter: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticSolveReport {
    pub epsilon: f64,
    pub residual_linf: f64,
    pub sup_f: f64,
    pub energy: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Boundary<'a> {
    Closed,
    /// Values on the ring of `{φ < level}` are taken from `data`.
    Dirichlet { level: f64, data: &'a [f64] },
}

/// `−Δ̃` restricted to the active nodes of a domain, stored as neighbor lists.
pub(crate) struct Stencil {
    pub active: Vec<bool>,
    pub weights: Vec<f64>,
    /// Σκ over all edges of each active node.
    pub diag: Vec<f64>,
    starts: Vec<usize>,
    cols: Vec<usize>,
    kappas: Vec<f64>,
    closed: bool,
}

impl Stencil {
    pub fn new(m: &GridManifold, domain: &Domain) -> Self {
        let n = m.len();
        let mut starts = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(4 * m.axes().len() * n / 2);
        let mut kappas = Vec::with_capacity(cols.capacity());
        let mut diag = vec![0.0; n];
        starts.push(0);
        for i in 0..n {
            if domain.interior[i] {
                for &(j, k, _, _) in m.edges(i).iter() {
                    diag[i] += k;
                    cols.push(j);
                    kappas.push(k);
                }
            }
            starts.push(cols.len());
        }
        Stencil {
            active: domain.interior.clone(),
            weights: m.weights().to_vec(),
            diag,
            starts,
            cols,
            kappas,
            closed: domain.is_closed(),
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    /// `(−Δ̃x)_i` at active node `i`, with `x` read on all nodes.
    #[inline]
    pub fn neg_lap_at(&self, x: &[f64], i: usize) -> f64 {
        let mut acc = self.diag[i] * x[i];
        for e in self.starts[i]..self.starts[i + 1] {
            acc -= self.kappas[e] * x[self.cols[e]];
        }
        acc
    }

    /// `Σ_{j inactive} κ_ij g_j` at active node `i`.
    fn ring_coupling(&self, g: &[f64], i: usize) -> f64 {
        let mut acc = 0.0;
        for e in self.starts[i]..self.starts[i + 1] {
            let j = self.cols[e];
            if !self.active[j] {
                acc += self.kappas[e] * g[j];
            }
        }
        acc
    }

    /// `W(−Δ̃ + V)x` with inactive entries of `x` treated as zero.
    fn apply(&self, x: &[f64], shift: &[f64], out: &mut [f64]) {
        for i in 0..self.len() {
            if !self.active[i] {
                out[i] = 0.0;
                continue;
            }
            let mut acc = (self.diag[i] + shift[i]) * x[i];
            for e in self.starts[i]..self.starts[i + 1] {
                let j = self.cols[e];
                if self.active[j] {
                    acc -= self.kappas[e] * x[j];
                }
            }
            out[i] = self.weights[i] * acc;
        }
    }

    /// Discrete `∫|df|²` over edges touching active nodes.
    pub fn energy(&self, f: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            if !self.active[i] {
                continue;
            }
            for e in self.starts[i]..self.starts[i + 1] {
                let j = self.cols[e];
                let d = f[j] - f[i];
                // each interior pair is visited twice; ring edges once
                let share = if self.active[j] { 0.5 } else { 1.0 };
                acc += share * self.weights[i] * self.kappas[e] * d * d;
            }
        }
        acc
    }

    /// Solve `(−Δ̃ + V)u = rhs` on active nodes with `u = g` elsewhere; `u` holds
    /// the initial guess on entry. Returns the iteration count and the final
    /// unweighted L∞ residual.
    pub fn solve(
        &self,
        shift: &[f64],
        rhs: &[f64],
        g: Option<&[f64]>,
        u: &mut [f64],
        tol_abs: f64,
        max_iter: usize,
    ) -> Result<(usize, f64)> {
        let n = self.len();
        let singular = self.closed && shift.iter().all(|&v| v == 0.0);
        let mut b = vec![0.0; n];
        for i in 0..n {
            if self.active[i] {
                let lift = g.map_or(0.0, |g| self.ring_coupling(g, i));
                b[i] = self.weights[i] * (rhs[i] + lift);
            } else {
                u[i] = g.map_or(0.0, |g| g[i]);
            }
        }
        if singular {
            let vol: f64 = self.weights.iter().sum();
            let mean = b.iter().sum::<f64>() / vol;
            for i in 0..n {
                b[i] -= self.weights[i] * mean;
            }
        }
        let inv_diag: Vec<f64> = (0..n)
            .map(|i| if self.active[i] { 1.0 / (self.weights[i] * (self.diag[i] + shift[i])) } else { 0.0 })
            .collect();
        let mut x: Vec<f64> = (0..n).map(|i| if self.active[i] { u[i] } else { 0.0 }).collect();
        let mut ax = vec![0.0; n];
        self.apply(&x, shift, &mut ax);
        let mut r: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
        let res_norm = |r: &[f64]| {
            (0..n).filter(|&i| self.active[i]).map(|i| (r[i] / self.weights[i]).abs()).fold(0.0, f64::max)
        };
        let mut z: Vec<f64> = (0..n).map(|i| r[i] * inv_diag[i]).collect();
        let mut p = z.clone();
        let mut rz: f64 = dot(&r, &z);
        let mut history = Vec::new();
        let mut it = 0;
        let mut res = res_norm(&r);
        while res > tol_abs {
            if it >= max_iter || !res.is_finite() {
                // keep the tail of the history small
                let keep = history.len().saturating_sub(32);
                return Err(Error::NoConvergence { iterations: it, residual: res, history: history.split_off(keep) });
            }
            self.apply(&p, shift, &mut ax);
            let pap = dot(&p, &ax);
            if pap <= 0.0 {
                return Err(Error::NoConvergence { iterations: it, residual: res, history });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ax[i];
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            it += 1;
            res = res_norm(&r);
            history.push(res);
        }
        if singular {
            let vol: f64 = self.weights.iter().sum();
            let mean = dot(&x, &self.weights) / vol;
            x.iter_mut().for_each(|v| *v -= mean);
        }
        for i in 0..n {
            if self.active[i] {
                u[i] = x[i];
            }
        }
        Ok((it, res))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn default_cap(n: usize) -> usize {
    20 * n + 1000
}

fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solve the discrete `(Δ̃ − ε)f = ψ`.
pub fn solve_helmholtz(
    m: &GridManifold,
    psi: &[f64],
    epsilon: f64,
    bc: &Boundary,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, EllipticSolveReport)> {
    solve_helmholtz_from(m, psi, epsilon, bc, opts, None)
}

fn solve_helmholtz_from(
    m: &GridManifold,
    psi: &[f64],
    epsilon: f64,
    bc: &Boundary,
    opts: &SolveOptions,
    guess: Option<&[f64]>,
) -> Result<(Vec<f64>, EllipticSolveReport)> {
    if psi.len() != m.len() {
        return Err(Error::LengthMismatch { got: psi.len(), want: m.len() });
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if psi.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("source".into()));
    }
    let (domain, data) = match bc {
        Boundary::Closed => (m.closed_domain(), None),
        Boundary::Dirichlet { level, data } => {
            if data.len() != m.len() {
                return Err(Error::LengthMismatch { got: data.len(), want: m.len() });
            }
            (m.exhaustion_domain(*level)?, Some(*data))
        }
    };
    let sup_psi = sup(psi);
    if epsilon == 0.0 {
        if !domain.is_closed() {
            return Err(Error::InvalidArgument("epsilon = 0 requires a closed model".into()));
        }
        let mean = m.integrate(psi);
        let tol = MEAN_TOL * m.volume() * sup_psi.max(f64::MIN_POSITIVE);
        if mean.abs() > tol {
            return Err(Error::IncompatibleSource { mean, tol });
        }
    }
    let st = Stencil::new(m, &domain);
    let shift = vec![epsilon; m.len()];
    let rhs: Vec<f64> = psi.iter().map(|x| -x).collect();
    let mut f = match guess {
        Some(g) => g.to_vec(),
        None => vec![0.0; m.len()],
    };
    let tol_abs = opts.tol * (1.0 + sup_psi);
    let cap = opts.max_iter.unwrap_or_else(|| default_cap(m.len()));
    let (iterations, _) = st.solve(&shift, &rhs, data, &mut f, tol_abs, cap)?;
    let residual_linf = (0..m.len())
        .filter(|&i| domain.interior[i])
        .map(|i| (-st.neg_lap_at(&f, i) - epsilon * f[i] - psi[i]).abs())
        .fold(0.0, f64::max);
    let report = EllipticSolveReport { epsilon, residual_linf, sup_f: sup(&f), energy: st.energy(&f), iterations };
    Ok((f, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonLimit {
    pub steps: Vec<EllipticSolveReport>,
    /// `‖f_{ε_k} − f_{ε_{k−1}}‖_∞`, one entry per step after the first.
    pub cauchy_diffs: Vec<f64>,
    /// `‖Δ̃f − ψ‖_∞` for the returned `f`.
    pub residual_linf: f64,
    pub energy: f64,
    pub mean: f64,
}

/// The ε → 0 limit of `(Δ̃ − ε)f = ψ` along `ε_k = 2^{−k}` on the truncated cusp.
pub fn solve_poisson_noncompact(m: &GridManifold, psi: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, PoissonLimit)> {
    if psi.len() != m.len() {
        return Err(Error::LengthMismatch { got: psi.len(), want: m.len() });
    }
    let sup_psi = sup(psi);
    let mean = m.integrate(psi);
    let tol = MEAN_TOL * m.volume() * sup_psi.max(f64::MIN_POSITIVE);
    if mean.abs() > tol {
        return Err(Error::IncompatibleSource { mean, tol });
    }
    let mut steps = Vec::new();
    let mut diffs = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    for k in 1..=K_MAX {
        let eps = 0.5f64.powi(k as i32);
        let (f, rep) = solve_helmholtz_from(m, psi, eps, &Boundary::Closed, opts, prev.as_deref())?;
        steps.push(rep);
        if let Some(p) = &prev {
            let d = f.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            diffs.push(d);
            if d < CAUCHY_TOL {
                let st = Stencil::new(m, &m.closed_domain());
                let residual_linf = (0..m.len()).map(|i| (-st.neg_lap_at(&f, i) - psi[i]).abs()).fold(0.0, f64::max);
                let out = PoissonLimit { steps, cauchy_diffs: diffs, residual_linf, energy: st.energy(&f), mean: m.integrate(&f) };
                return Ok((f, out));
            }
        }
        prev = Some(f);
    }
    Err(Error::NoLimit { k_max: K_MAX, last_diff: *diffs.last().unwrap_or(&f64::NAN), diffs })
}

/// Conformal factor `f` with `tr Φ(e^f k, θ) = 0`, i.e. `Δ̃f = (2/r) tr Φ(k, θ)`,
/// and the normalized metric `e^f k`.
pub fn conformal_trace_normalize(
    m: &GridManifold,
    b: &HiggsBundleData,
    k: &MetricField,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, MetricField, EllipticSolveReport)> {
    let lambda = crate::analysis::analytic_degree(m, b, k)?.lambda;
    let phi = mean_curvature_phi(m, b, k, lambda)?;
    let r = b.rank as f64;
    let src: Vec<f64> = (0..m.len()).map(|i| 2.0 / r * phi.at(i).trace().re).collect();
    // the source has zero mean by the choice of λ up to rounding
    let vol = m.volume();
    let mean = m.integrate(&src) / vol;
    let tol = MEAN_TOL * sup(&src).max(1e-300);
    if mean.abs() > tol.max(1e-13) {
        return Err(Error::IncompatibleSource { mean, tol });
    }
    let src: Vec<f64> = src.iter().map(|x| x - mean).collect();
    let (f, rep) = solve_helmholtz(m, &src, 0.0, &Boundary::Closed, opts)?;
    let kbar = k.field().map(|i, x| x.scale(f[i].exp()));
    Ok((f, MetricField::new(kbar)?, rep))
}
