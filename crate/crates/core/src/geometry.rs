//! Discretized model manifolds.
//!
//! Two models are provided: flat tori of complex dimension one or two, and the
//! cusp cylinder `[1, T] × S¹` with metric `(dτ² + dσ²)/τ²` and exhaustion
//! `φ = log τ`. Both carry a diagonal Hermitian metric, so every contraction
//! against `ω` reduces to one inverse-metric coefficient per complex axis.
//!
//! Real axes are ordered `(x₁, y₁, x₂, y₂)`; on the cusp `x = τ`, `y = σ`.
//! Nodes are stored row-major with the last axis fastest.

use crate::error::{Error, Result};
use crate::linalg::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    FlatTorus {
        dim: usize,
        periods: Vec<f64>,
        nodes_per_side: usize,
    },
    CuspCylinder {
        tau_max: f64,
        radial_nodes: usize,
        angular_nodes: usize,
    },
}

impl Model {
    pub fn build(&self) -> Result<GridManifold> {
        match self {
            Model::FlatTorus { dim, periods, nodes_per_side } => {
                build_flat_torus(*dim, periods, *nodes_per_side)
            }
            Model::CuspCylinder { tau_max, radial_nodes, angular_nodes } => {
                build_cusp_cylinder(*tau_max, *radial_nodes, *angular_nodes)
            }
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, Model::FlatTorus { .. })
    }
}

/// One real coordinate axis with its difference stencils.
#[derive(Clone, Debug)]
pub struct Axis {
    pub coords: Vec<f64>,
    pub periodic: bool,
    /// Period for periodic axes, 0 otherwise.
    pub period: f64,
    /// Flux-form second-difference coefficients toward the lower/upper neighbor.
    c_lo: Vec<f64>,
    c_hi: Vec<f64>,
    /// Trapezoid weights.
    quad: Vec<f64>,
    /// First-derivative stencil (offset, weight): centered inside, one-sided at ends.
    d1: Vec<[(isize, f64); 3]>,
    /// One-sided four-point second derivatives at the two ends (offsets 0..3 inward).
    d2_ends: [[f64; 4]; 2],
}

impl Axis {
    fn uniform_periodic(period: f64, n: usize) -> Self {
        let h = period / n as f64;
        let coords = (0..n).map(|k| k as f64 * h).collect();
        let c = 1.0 / (h * h);
        Axis {
            coords,
            periodic: true,
            period,
            c_lo: vec![c; n],
            c_hi: vec![c; n],
            quad: vec![h; n],
            d1: vec![[(-1, -0.5 / h), (1, 0.5 / h), (0, 0.0)]; n],
            d2_ends: [[0.0; 4]; 2],
        }
    }

    fn graded(coords: Vec<f64>) -> Self {
        let n = coords.len();
        let gap = |k: usize| coords[k + 1] - coords[k];
        let mut quad = vec![0.0; n];
        let mut c_lo = vec![0.0; n];
        let mut c_hi = vec![0.0; n];
        for k in 0..n {
            let lo = if k > 0 { gap(k - 1) } else { 0.0 };
            let hi = if k + 1 < n { gap(k) } else { 0.0 };
            quad[k] = 0.5 * (lo + hi);
            if k > 0 {
                c_lo[k] = 1.0 / (quad[k] * lo);
            }
            if k + 1 < n {
                c_hi[k] = 1.0 / (quad[k] * hi);
            }
        }
        let mut d1 = Vec::with_capacity(n);
        for k in 0..n {
            let offs: [isize; 3] = if k == 0 {
                [0, 1, 2]
            } else if k == n - 1 {
                [0, -1, -2]
            } else {
                [-1, 0, 1]
            };
            let xs: Vec<f64> = offs.iter().map(|&o| coords[(k as isize + o) as usize]).collect();
            let w = fd_weights(coords[k], &xs, 1);
            d1.push([(offs[0], w[1][0]), (offs[1], w[1][1]), (offs[2], w[1][2])]);
        }
        let lo: Vec<f64> = (0..4).map(|o| coords[o]).collect();
        let hi: Vec<f64> = (0..4).map(|o| coords[n - 1 - o]).collect();
        let wl = fd_weights(coords[0], &lo, 2);
        let wh = fd_weights(coords[n - 1], &hi, 2);
        let d2_ends = [
            [wl[2][0], wl[2][1], wl[2][2], wl[2][3]],
            [wh[2][0], wh[2][1], wh[2][2], wh[2][3]],
        ];
        Axis { coords, periodic: false, period: 0.0, c_lo, c_hi, quad, d1, d2_ends }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn min_spacing(&self) -> f64 {
        let n = self.len();
        let mut m = f64::INFINITY;
        for k in 0..n - 1 {
            m = m.min(self.coords[k + 1] - self.coords[k]);
        }
        if self.periodic {
            m = m.min(self.period - self.coords[n - 1] + self.coords[0]);
        }
        m
    }
}

/// Finite-difference weights at `z` for derivative orders `0..=m` on nodes `x`
/// (Fornberg's recursion). `w[k][j]` multiplies `f(x[j])` for order `k`.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Flux-form neighbors of one node: `Δ̃f_i = Σ κ (f_j − f_i)`.
#[derive(Clone, Copy, Debug)]
pub struct Edges {
    pub count: usize,
    /// (neighbor, κ, real axis, upward?)
    pub list: [(usize, f64, usize, bool); 8],
}

impl Edges {
    pub fn iter(&self) -> impl Iterator<Item = &(usize, f64, usize, bool)> {
        self.list[..self.count].iter()
    }
}

#[derive(Clone, Debug)]
pub struct GridManifold {
    model: Model,
    dim: usize,
    axes: Vec<Axis>,
    sizes: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
    ginv: Vec<f64>,
    weights: Vec<f64>,
    phi: Vec<f64>,
}

pub fn build_flat_torus(n: usize, periods: &[f64], nodes_per_side: usize) -> Result<GridManifold> {
    if n != 1 && n != 2 {
        return Err(Error::InvalidModel(format!("flat torus needs complex dimension 1 or 2, got {n}")));
    }
    if nodes_per_side < 4 || nodes_per_side % 2 != 0 {
        return Err(Error::InvalidModel(format!(
            "nodes_per_side must be even and at least 4, got {nodes_per_side}"
        )));
    }
    let periods: Vec<f64> = match periods.len() {
        1 => vec![periods[0]; 2 * n],
        l if l == 2 * n => periods.to_vec(),
        l => {
            return Err(Error::InvalidModel(format!("expected 1 or {} periods, got {l}", 2 * n)));
        }
    };
    if periods.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidModel("periods must be positive".into()));
    }
    let axes: Vec<Axis> = periods.iter().map(|&p| Axis::uniform_periodic(p, nodes_per_side)).collect();
    let model = Model::FlatTorus { dim: n, periods: periods.clone(), nodes_per_side };
    Ok(GridManifold::assemble(model, n, axes, |_| 2.0, |_| 1.0, |_| 0.0))
}

pub fn build_cusp_cylinder(tau_max: f64, radial_nodes: usize, angular_nodes: usize) -> Result<GridManifold> {
    if !(tau_max > 1.0 && tau_max.is_finite()) {
        return Err(Error::InvalidModel(format!("tau_max must exceed 1, got {tau_max}")));
    }
    if radial_nodes < 8 || angular_nodes < 8 {
        return Err(Error::InvalidModel(format!(
            "cusp grids need at least 8 nodes per axis, got {radial_nodes}x{angular_nodes}"
        )));
    }
    let rho = tau_max.ln();
    let mut tau: Vec<f64> = (0..radial_nodes)
        .map(|k| (rho * k as f64 / (radial_nodes - 1) as f64).exp())
        .collect();
    tau[0] = 1.0;
    tau[radial_nodes - 1] = tau_max;
    let axes = vec![Axis::graded(tau), Axis::uniform_periodic(2.0 * PI, angular_nodes)];
    let model = Model::CuspCylinder { tau_max, radial_nodes, angular_nodes };
    Ok(GridManifold::assemble(
        model,
        1,
        axes,
        |x| 2.0 * x[0] * x[0],
        |x| 1.0 / (x[0] * x[0]),
        |x| x[0].ln(),
    ))
}

impl GridManifold {
    fn assemble(
        model: Model,
        dim: usize,
        axes: Vec<Axis>,
        ginv: impl Fn(&[f64]) -> f64,
        density: impl Fn(&[f64]) -> f64,
        phi: impl Fn(&[f64]) -> f64,
    ) -> Self {
        let sizes: Vec<usize> = axes.iter().map(Axis::len).collect();
        let mut strides = vec![1; sizes.len()];
        for d in (0..sizes.len() - 1).rev() {
            strides[d] = strides[d + 1] * sizes[d + 1];
        }
        let len: usize = sizes.iter().product();
        let mut m = GridManifold {
            model,
            dim,
            axes,
            sizes,
            strides,
            len,
            ginv: Vec::new(),
            weights: Vec::new(),
            phi: Vec::new(),
        };
        let mut g = Vec::with_capacity(len * dim);
        let mut w = Vec::with_capacity(len);
        let mut p = Vec::with_capacity(len);
        let mut x = vec![0.0; m.axes.len()];
        for i in 0..len {
            m.coords_into(i, &mut x);
            // both complex axes share the same flat coefficient on the torus
            for _ in 0..dim {
                g.push(ginv(&x));
            }
            let q: f64 = (0..m.axes.len()).map(|d| m.axes[d].quad[m.index_along(i, d)]).product();
            w.push(q * density(&x));
            p.push(phi(&x));
        }
        m.ginv = g;
        m.weights = w;
        m.phi = p;
        m
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Complex dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn is_compact(&self) -> bool {
        self.model.is_compact()
    }

    #[inline]
    pub fn index_along(&self, i: usize, d: usize) -> usize {
        (i / self.strides[d]) % self.sizes[d]
    }

    pub fn coord(&self, i: usize, d: usize) -> f64 {
        self.axes[d].coords[self.index_along(i, d)]
    }

    pub fn coords_into(&self, i: usize, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate() {
            *o = self.coord(i, d);
        }
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.axes.len()];
        self.coords_into(i, &mut x);
        x
    }

    /// Node reached by moving `off` steps along real axis `d`.
    #[inline]
    pub fn shift(&self, i: usize, d: usize, off: isize) -> Option<usize> {
        let n = self.sizes[d] as isize;
        let k = self.index_along(i, d) as isize;
        let mut t = k + off;
        if self.axes[d].periodic {
            t = t.rem_euclid(n);
        } else if t < 0 || t >= n {
            return None;
        }
        Some((i as isize + (t - k) * self.strides[d] as isize) as usize)
    }

    /// `g^{aā}` at node `i`.
    #[inline]
    pub fn inv_metric(&self, i: usize, a: usize) -> f64 {
        self.ginv[i * self.dim + a]
    }

    /// `g_{aā}` at node `i`.
    pub fn metric(&self, i: usize, a: usize) -> f64 {
        1.0 / self.inv_metric(i, a)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Copy with every volume weight multiplied by `s` (stencils untouched).
    pub fn with_scaled_weights(&self, s: f64) -> GridManifold {
        let mut m = self.clone();
        m.weights.iter_mut().for_each(|w| *w *= s);
        m
    }

    /// Smallest coordinate spacing over all real axes.
    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::min_spacing).fold(f64::INFINITY, f64::min)
    }

    pub fn max_inv_metric(&self) -> f64 {
        self.ginv.iter().copied().fold(0.0, f64::max)
    }

    /// Largest diagonal entry of the flux-form `Δ̃` stencil.
    pub fn max_stencil_diagonal(&self) -> f64 {
        (0..self.len)
            .map(|i| self.edges(i).iter().map(|e| e.1).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Flux-form stencil of `Δ̃` at node `i`; walls carry zero flux.
    #[inline]
    pub fn edges(&self, i: usize) -> Edges {
        let mut e = Edges { count: 0, list: [(0, 0.0, 0, false); 8] };
        for d in 0..self.axes.len() {
            let half_g = 0.5 * self.ginv[i * self.dim + d / 2];
            let k = self.index_along(i, d);
            let ax = &self.axes[d];
            if let Some(j) = self.shift(i, d, -1) {
                if ax.c_lo[k] != 0.0 {
                    e.list[e.count] = (j, half_g * ax.c_lo[k], d, false);
                    e.count += 1;
                }
            }
            if let Some(j) = self.shift(i, d, 1) {
                if ax.c_hi[k] != 0.0 {
                    e.list[e.count] = (j, half_g * ax.c_hi[k], d, true);
                    e.count += 1;
                }
            }
        }
        e
    }

    /// First-derivative stencil along real axis `d` as (node, weight) pairs.
    #[inline]
    pub fn derivative_stencil(&self, i: usize, d: usize) -> [(usize, f64); 3] {
        let k = self.index_along(i, d);
        let s = &self.axes[d].d1[k];
        let mut out = [(i, 0.0); 3];
        for (o, &(off, w)) in out.iter_mut().zip(s.iter()) {
            if w != 0.0 {
                *o = (self.shift(i, d, off).expect("stencil inside grid"), w);
            }
        }
        out
    }

    /// True when node `i` sits on a truncation wall of axis `d`.
    #[inline]
    pub fn on_wall(&self, i: usize, d: usize) -> bool {
        if self.axes[d].periodic {
            return false;
        }
        let k = self.index_along(i, d);
        k == 0 || k + 1 == self.sizes[d]
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len);
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn integrate_complex(&self, f: &[C64]) -> C64 {
        debug_assert_eq!(f.len(), self.len);
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Pointwise `Δ̃f = 2 g^{aā} ∂_a ∂_ā f`. Interior nodes use the flux
    /// stencil; truncation walls use one-sided second-order differences.
    pub fn laplacian_complex(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len);
        (0..self.len).map(|i| self.laplacian_at(f, i)).collect()
    }

    fn laplacian_at(&self, f: &[f64], i: usize) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.axes.len() {
            let half_g = 0.5 * self.ginv[i * self.dim + d / 2];
            let ax = &self.axes[d];
            let k = self.index_along(i, d);
            let n = self.sizes[d];
            if !ax.periodic && (k == 0 || k + 1 == n) {
                let (w, dir) = if k == 0 { (&ax.d2_ends[0], 1) } else { (&ax.d2_ends[1], -1) };
                let mut s = 0.0;
                for (o, &wo) in w.iter().enumerate() {
                    s += wo * f[self.shift(i, d, dir * o as isize).unwrap()];
                }
                acc += half_g * s;
            } else {
                let lo = self.shift(i, d, -1).unwrap();
                let hi = self.shift(i, d, 1).unwrap();
                acc += half_g * (ax.c_lo[k] * (f[lo] - f[i]) + ax.c_hi[k] * (f[hi] - f[i]));
            }
        }
        acc
    }

    /// Flux-form `Δ̃` with zero-flux walls; this is the operator the solvers invert.
    pub fn laplacian_flux(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len);
        (0..self.len)
            .map(|i| self.edges(i).iter().map(|&(j, k, _, _)| k * (f[j] - f[i])).sum())
            .collect()
    }

    /// Derivative along real axis `d`.
    pub fn axis_derivative(&self, f: &[C64], d: usize) -> Vec<C64> {
        (0..self.len)
            .map(|i| self.derivative_stencil(i, d).iter().map(|&(j, w)| f[j] * w).sum())
            .collect()
    }

    /// `(∂_{z_a} f, ∂_{z̄_a} f)` for each complex axis `a`.
    pub fn complex_derivatives(&self, f: &[C64]) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
        assert_eq!(f.len(), self.len);
        let i_unit = C64::new(0.0, 1.0);
        let mut dz = Vec::with_capacity(self.dim);
        let mut dzb = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let fx = self.axis_derivative(f, 2 * a);
            let fy = self.axis_derivative(f, 2 * a + 1);
            dz.push(fx.iter().zip(&fy).map(|(x, y)| 0.5 * (x - i_unit * y)).collect());
            dzb.push(fx.iter().zip(&fy).map(|(x, y)| 0.5 * (x + i_unit * y)).collect());
        }
        (dz, dzb)
    }

    /// Sub-level set `{φ < level}` and the ring of nodes where Dirichlet data sits.
    pub fn exhaustion_domain(&self, level: f64) -> Result<Domain> {
        let (lo, hi) = self.phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        if !(level.is_finite()) || level > hi + 1e-12 {
            return Err(Error::InvalidArgument(format!("level {level} outside [{lo}, {hi}]")));
        }
        let cut = level - 1e-12 * (1.0 + level.abs());
        let interior: Vec<bool> = self.phi.iter().map(|&p| p < cut).collect();
        if !interior.iter().any(|&b| b) {
            return Err(Error::EmptyDomain(level));
        }
        let mut ring_mask = vec![false; self.len];
        for i in 0..self.len {
            if interior[i] {
                continue;
            }
            'axes: for d in 0..self.axes.len() {
                for off in [-1, 1] {
                    if let Some(j) = self.shift(i, d, off) {
                        if interior[j] {
                            ring_mask[i] = true;
                            break 'axes;
                        }
                    }
                }
            }
        }
        Ok(Domain { interior, ring_mask, level })
    }

    pub fn closed_domain(&self) -> Domain {
        Domain { interior: vec![true; self.len], ring_mask: vec![false; self.len], level: f64::INFINITY }
    }

    pub fn verify_assumptions(&self) -> AssumptionReport {
        let volume = self.volume();
        let lap_phi = self.laplacian_complex(&self.phi);
        let sup_lap_phi = lap_phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let phi_min = self.phi.iter().copied().fold(f64::INFINITY, f64::min);
        let (gauduchon_residual, d_omega_l2) = self.gauduchon_residuals();
        let (bound, label) = match &self.model {
            Model::FlatTorus { .. } => (f64::INFINITY, "flat_torus"),
            Model::CuspCylinder { .. } => (2.0 * PI, "cusp_cylinder"),
        };
        let finite = volume.is_finite() && volume > 0.0;
        AssumptionReport {
            model: label.to_string(),
            volume,
            sup_laplacian_phi: sup_lap_phi,
            phi_min,
            gauduchon_residual,
            d_omega_l2,
            assumption1: finite && volume <= bound,
            assumption2: phi_min >= 0.0 && sup_lap_phi.is_finite(),
            assumption3: true,
            gauduchon: gauduchon_residual <= GAUDUCHON_TOL,
        }
    }

    /// `(‖∂∂̄ω^{n−1}‖, ‖dω^{n−1}‖)` in L². Both vanish identically for `n = 1`.
    fn gauduchon_residuals(&self) -> (f64, f64) {
        if self.dim == 1 {
            return (0.0, 0.0);
        }
        // n = 2: ω^{n−1} = ω, coefficients g_{aā}; differentiate along the other pair.
        let mut dd = vec![0.0; self.len];
        let mut d1 = vec![0.0; self.len];
        for a in 0..self.dim {
            let g: Vec<f64> = (0..self.len).map(|i| self.metric(i, a)).collect();
            let gc: Vec<C64> = g.iter().map(|&x| C64::new(x, 0.0)).collect();
            for b in 0..self.dim {
                if b == a {
                    continue;
                }
                for d in [2 * b, 2 * b + 1] {
                    let dg = self.axis_derivative(&gc, d);
                    for i in 0..self.len {
                        d1[i] += dg[i].norm_sqr();
                    }
                    for i in 0..self.len {
                        let k = self.index_along(i, d);
                        let ax = &self.axes[d];
                        let lo = self.shift(i, d, -1).unwrap_or(i);
                        let hi = self.shift(i, d, 1).unwrap_or(i);
                        dd[i] += 0.25 * (ax.c_lo[k] * (g[lo] - g[i]) + ax.c_hi[k] * (g[hi] - g[i]));
                    }
                }
            }
        }
        let l2 = |v: &[f64]| self.integrate(&v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
        (l2(&dd), self.integrate(&d1).sqrt())
    }
}

pub const GAUDUCHON_TOL: f64 = 1e-10;

/// Interior nodes of an exhaustion sub-domain and its Dirichlet ring.
#[derive(Clone, Debug)]
pub struct Domain {
    pub interior: Vec<bool>,
    pub ring_mask: Vec<bool>,
    pub level: f64,
}

impl Domain {
    pub fn is_closed(&self) -> bool {
        !self.ring_mask.iter().any(|&b| b) && self.interior.iter().all(|&b| b)
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }

    pub fn ring(&self) -> Vec<usize> {
        (0..self.ring_mask.len()).filter(|&i| self.ring_mask[i]).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.interior.len()).filter(|&i| self.interior[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub model: String,
    pub volume: f64,
    pub sup_laplacian_phi: f64,
    pub phi_min: f64,
    pub gauduchon_residual: f64,
    pub d_omega_l2: f64,
    /// Finite volume (and, on the cusp, below the `T → ∞` limit `2π`).
    pub assumption1: bool,
    /// Nonnegative exhaustion with bounded `Δ̃φ`.
    pub assumption2: bool,
    /// Not computed: the shipped models are whitelisted.
    pub assumption3: bool,
    pub gauduchon: bool,
}
