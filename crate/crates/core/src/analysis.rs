//! Scalar functionals of metrics: Donaldson distance, degrees and slopes,
//! list-relative stability verdicts, and the integral identity residual.

use crate::bundle::{contracted, mean_curvature_phi, psi_pair, HiggsBundleData};
use crate::error::{Error, Result};
use crate::field::{EndoField, MetricField};
use crate::geometry::{Domain, GridManifold};
use crate::linalg::{CMat, RelativeLog, C64};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Stable,
    Semistable,
    Unstable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Stable => "STABLE",
            Verdict::Semistable => "SEMISTABLE",
            Verdict::Unstable => "UNSTABLE",
            Verdict::Inconclusive => "INCONCLUSIVE",
        };
        f.write_str(s)
    }
}

/// `σ(h₁, h₂) = tr(h₁⁻¹h₂) + tr(h₂⁻¹h₁) − 2r` pointwise and its supremum.
pub fn donaldson_distance(h1: &MetricField, h2: &MetricField) -> Result<(Vec<f64>, f64)> {
    if h1.rank() != h2.rank() {
        return Err(Error::RankMismatch(h1.rank(), h2.rank()));
    }
    if h1.len() != h2.len() {
        return Err(Error::LengthMismatch { got: h2.len(), want: h1.len() });
    }
    let r = h1.rank() as f64;
    let mut sup: f64 = 0.0;
    let mut out = Vec::with_capacity(h1.len());
    for i in 0..h1.len() {
        let (a, b) = (h1.at(i), h2.at(i));
        let ai = a.inverse().ok_or(Error::NotPositive { node: i })?;
        let bi = b.inverse().ok_or(Error::NotPositive { node: i })?;
        let s = (ai * b).trace().re + (bi * a).trace().re - 2.0 * r;
        sup = sup.max(s);
        out.push(s);
    }
    Ok((out, sup))
}

/// `sup σ` over `nodes` only.
pub fn donaldson_sup_on(h1: &MetricField, h2: &MetricField, nodes: &[usize]) -> Result<f64> {
    let (s, _) = donaldson_distance(h1, h2)?;
    Ok(nodes.iter().map(|&i| s[i]).fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Degree {
    pub degree: f64,
    pub lambda: f64,
}

/// `deg = ∫ tr √−1ΛF_{k,θ}` and `λ = deg/(r·Vol)`.
pub fn analytic_degree(m: &GridManifold, b: &HiggsBundleData, k: &MetricField) -> Result<Degree> {
    let curv = contracted(m, b, k, &m.closed_domain(), true)?;
    if !curv.is_finite() {
        return Err(Error::NonFinite("curvature".into()));
    }
    let tr: Vec<f64> = (0..m.len()).map(|i| curv.at(i).trace().re).collect();
    let degree = m.integrate(&tr);
    Ok(Degree { degree, lambda: degree / (b.rank as f64 * m.volume()) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCandidate {
    pub projector: EndoField,
    pub label: String,
    rank: usize,
}

pub const PROJECTOR_TOL: f64 = 1e-10;

impl StabilityCandidate {
    /// Checks `π² = π` and constant rank; orthogonality is checked against the metric at use.
    pub fn new(projector: EndoField, label: &str) -> Result<Self> {
        let mut rank = None;
        for i in 0..projector.len() {
            let p = projector.at(i);
            if (p * p - p).max_abs() > PROJECTOR_TOL {
                return Err(Error::InvalidProjector(format!("{label}: not idempotent at node {i}")));
            }
            let t = p.trace();
            let rk = t.re.round();
            if (t.re - rk).abs() > 1e-8 || t.im.abs() > 1e-8 {
                return Err(Error::InvalidProjector(format!("{label}: non-integral trace at node {i}")));
            }
            match rank {
                None => rank = Some(rk as usize),
                Some(r) if r != rk as usize => {
                    return Err(Error::InvalidProjector(format!("{label}: rank jumps at node {i}")));
                }
                _ => {}
            }
        }
        let rank = rank.ok_or_else(|| Error::InvalidProjector("empty field".into()))?;
        Ok(StabilityCandidate { projector, label: label.to_string(), rank })
    }

    pub fn constant(len: usize, p: &CMat, label: &str) -> Result<Self> {
        Self::new(EndoField::constant(len, p), label)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn check_orthogonal(&self, k: &MetricField) -> Result<()> {
        for i in 0..k.len() {
            let p = self.projector.at(i);
            let kk = k.at(i);
            let padj = kk.inverse().ok_or(Error::NotPositive { node: i })? * p.adjoint() * kk;
            if (padj - p).max_abs() > PROJECTOR_TOL * (1.0 + kk.max_abs()) {
                return Err(Error::InvalidProjector(format!("{}: not orthogonal at node {i}", self.label)));
            }
        }
        Ok(())
    }
}

/// `|A|²_k = tr(A k⁻¹ A^† k)`.
#[inline]
fn norm_sqr_k(a: &CMat, k: &CMat, kinv: &CMat) -> f64 {
    (*a * *kinv * a.adjoint() * *k).trace().re
}

/// Pointwise `|∂̄π|²_k + |[θ, π]|²_k`, contracted with the metric.
pub fn projector_penalty(m: &GridManifold, b: &HiggsBundleData, k: &MetricField, pi: &EndoField) -> Result<Vec<f64>> {
    let r = b.rank;
    let mut dbar: Vec<Vec<Vec<C64>>> = Vec::new();
    for p in 0..r {
        for q in 0..r {
            dbar.push(m.complex_derivatives(&pi.component(p, q)).1);
        }
    }
    let mut out = vec![0.0; m.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let kk = k.at(i);
        let kinv = kk.inverse().ok_or(Error::NotPositive { node: i })?;
        let p = pi.at(i);
        for a in 0..m.dim() {
            let mut d = CMat::zeros(r);
            for pp in 0..r {
                for qq in 0..r {
                    d.set(pp, qq, dbar[pp * r + qq][a][i]);
                }
            }
            let c = b.theta[a].at(i).commutator(&p);
            *o += m.inv_metric(i, a) * (norm_sqr_k(&d, &kk, &kinv) + norm_sqr_k(&c, &kk, &kinv));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateDegree {
    pub label: String,
    pub rank: usize,
    pub degree: f64,
    pub slope: f64,
    pub penalty: f64,
}

/// `∫ tr(π √−1ΛF_{k,θ}) − |∂̄_θπ|²_k`, with the penalty also returned.
pub fn subobject_degree_parts(
    m: &GridManifold,
    b: &HiggsBundleData,
    k: &MetricField,
    c: &StabilityCandidate,
) -> Result<(f64, f64)> {
    if c.projector.rank() != b.rank {
        return Err(Error::RankMismatch(c.projector.rank(), b.rank));
    }
    c.check_orthogonal(k)?;
    let id = CMat::identity(b.rank);
    if (0..c.projector.len()).all(|i| c.projector.at(i) == id) {
        return Ok((analytic_degree(m, b, k)?.degree, 0.0));
    }
    let curv = contracted(m, b, k, &m.closed_domain(), true)?;
    let tr: Vec<f64> = (0..m.len()).map(|i| (c.projector.at(i) * curv.at(i)).trace().re).collect();
    let pen = projector_penalty(m, b, k, &c.projector)?;
    let penalty = m.integrate(&pen);
    Ok((m.integrate(&tr) - penalty, penalty))
}

pub fn subobject_degree(m: &GridManifold, b: &HiggsBundleData, k: &MetricField, c: &StabilityCandidate) -> Result<f64> {
    Ok(subobject_degree_parts(m, b, k, c)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub total_degree: f64,
    pub lambda: f64,
    pub total_slope: f64,
    pub margin: f64,
    pub candidates: Vec<CandidateDegree>,
    pub verdict: Verdict,
}

pub fn default_margin(total_slope: f64) -> f64 {
    1e-4 * (1.0 + total_slope.abs())
}

/// Slope comparison over a finite candidate list. The verdict is relative to the list.
pub fn stability_verdict(
    m: &GridManifold,
    b: &HiggsBundleData,
    k: &MetricField,
    candidates: &[StabilityCandidate],
    margin: Option<f64>,
) -> Result<DegreeReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty candidate list".into()));
    }
    let total = analytic_degree(m, b, k)?;
    let total_slope = total.degree / b.rank as f64;
    let margin = margin.unwrap_or_else(|| default_margin(total_slope));
    let mut rows = Vec::new();
    for c in candidates {
        if c.rank() == 0 || c.rank() >= b.rank {
            return Err(Error::InvalidProjector(format!("{}: not a proper sub-object", c.label)));
        }
        let (degree, penalty) = subobject_degree_parts(m, b, k, c)?;
        rows.push(CandidateDegree { label: c.label.clone(), rank: c.rank(), degree, slope: degree / c.rank() as f64, penalty });
    }
    let verdict = slope_verdict(total_slope, rows.iter().map(|r| r.slope), margin);
    Ok(DegreeReport { total_degree: total.degree, lambda: total.lambda, total_slope, margin, candidates: rows, verdict })
}

pub(crate) fn slope_verdict(total: f64, slopes: impl Iterator<Item = f64>, margin: f64) -> Verdict {
    let mut verdict = Verdict::Stable;
    for s in slopes {
        if s > total + margin {
            return Verdict::Unstable;
        }
        if s >= total - margin {
            verdict = Verdict::Semistable;
        }
    }
    verdict
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `∫ tr(Φ(k,θ)s)`.
    pub phi_k_term: f64,
    /// `∫ ⟨Ψ(s)(D s), D s⟩` over both (1,0) pieces.
    pub psi_term: f64,
    /// `∫ tr(Φ(h,θ)s)`.
    pub rhs: f64,
    pub residual: f64,
    pub scale: f64,
}

/// Residual of `∫tr(Φ(k)s) + ∫⟨Ψ(s)(D^{1,0}_θ s), D^{1,0}_θ s⟩ = ∫tr(Φ(h)s)` with
/// `s = log(k⁻¹h)`, on a closed model.
pub fn identity_residual(m: &GridManifold, b: &HiggsBundleData, k: &MetricField, h: &MetricField) -> Result<IdentityReport> {
    identity_residual_on(m, b, k, h, &m.closed_domain())
}

/// As [`identity_residual`] on an exhaustion domain; `h` must equal `k` on the ring.
pub fn identity_residual_on(
    m: &GridManifold,
    b: &HiggsBundleData,
    k: &MetricField,
    h: &MetricField,
    domain: &Domain,
) -> Result<IdentityReport> {
    if k.rank() != b.rank || h.rank() != b.rank {
        return Err(Error::RankMismatch(h.rank(), b.rank));
    }
    for i in domain.ring() {
        if (h.at(i) - k.at(i)).max_abs() > 1e-12 * (1.0 + k.at(i).max_abs()) {
            return Err(Error::BoundaryViolation(i));
        }
    }
    let n = m.len();
    let rel: Vec<RelativeLog> = (0..n)
        .map(|i| RelativeLog::new(&k.at(i), &h.at(i)).ok_or(Error::NotPositive { node: i }))
        .collect::<Result<_>>()?;
    let s: Vec<CMat> = rel.iter().map(RelativeLog::endomorphism).collect();

    let lambda = analytic_degree(m, b, k)?.lambda;
    let phi_k = mean_curvature_phi(m, b, k, lambda)?;
    let phi_h = crate::bundle::mean_curvature_phi_on(m, b, h, lambda, domain)?;
    let tr_k: Vec<f64> = (0..n).map(|i| if domain.interior[i] { (phi_k.at(i) * s[i]).trace().re } else { 0.0 }).collect();
    let tr_h: Vec<f64> = (0..n).map(|i| if domain.interior[i] { (phi_h.at(i) * s[i]).trace().re } else { 0.0 }).collect();

    // adjoint (1,0) derivative of s, paired in the eigenframe of s (Hermitian after L^†·L^{-†})
    let i_unit = C64::new(0.0, 1.0);
    let kthetas = crate::bundle::higgs_adjoint(b, k)?;
    let psi_vals: Vec<f64> = (0..n)
        .map(|i| {
            if !(domain.interior[i] || domain.ring_mask[i]) {
                return 0.0;
            }
            let rl = &rel[i];
            let to_h = |a: &CMat| rl.l.adjoint() * *a * rl.l_inv.adjoint();
            let sh = to_h(&s[i]).hermitian_part();
            let mut acc = 0.0;
            let edges = m.edges(i);
            for a in 0..m.dim() {
                let g = m.inv_metric(i, a);
                // one-sided differences scaled by √(2κ/g) so that the pairing matches the flux stencil
                for up in [true, false] {
                    let diff = |d: usize| {
                        edges
                            .iter()
                            .find(|e| e.2 == d && e.3 == up)
                            .map(|&(j, kappa, _, _)| (s[j] - s[i]).scale((2.0 * kappa / g).sqrt() * if up { 1.0 } else { -1.0 }))
                            .unwrap_or(CMat::zeros(s[i].n()))
                    };
                    let dz = (diff(2 * a) - diff(2 * a + 1).scale_c(i_unit)).scale(0.5);
                    acc += 0.5 * g * psi_pair(&sh, &to_h(&dz), &to_h(&dz)).re;
                }
                let c = kthetas[a].at(i).commutator(&s[i]);
                acc += g * psi_pair(&sh, &to_h(&c), &to_h(&c)).re;
            }
            acc
        })
        .collect();
    let phi_k_term = m.integrate(&tr_k);
    let psi_term = m.integrate(&psi_vals);
    let rhs = m.integrate(&tr_h);
    let residual = (phi_k_term + psi_term - rhs).abs();
    Ok(IdentityReport { phi_k_term, psi_term, rhs, residual, scale: phi_k_term.abs() + psi_term.abs() + rhs.abs() })
}
