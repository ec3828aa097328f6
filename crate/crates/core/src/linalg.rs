//! Small dense complex matrices for per-node bundle algebra.
//!
//! Ranks up to [`MAX_RANK`] live on the stack. Hermitian spectral work uses a
//! cyclic Jacobi sweep, which is exact on already-diagonal input.

use num_complex::Complex64;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

pub type C64 = Complex64;

pub const MAX_RANK: usize = 4;
const S: usize = MAX_RANK;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat {
    n: usize,
    a: [C64; S * S],
}

impl CMat {
    #[inline]
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_RANK).contains(&n), "rank {n} outside 1..={MAX_RANK}");
        CMat { n, a: [ZERO; S * S] }
    }

    #[inline]
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * S + i] = ONE;
        }
        m
    }

    #[inline]
    pub fn from_real_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.a[i * S + i] = C64::new(x, 0.0);
        }
        m
    }

    /// Row-major `n*n` slice.
    #[inline]
    pub fn from_slice(n: usize, v: &[C64]) -> Self {
        assert_eq!(v.len(), n * n);
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * S..i * S + n].copy_from_slice(&v[i * n..i * n + n]);
        }
        m
    }

    /// Row-major real entries, convenient in tests.
    #[inline]
    pub fn from_real(n: usize, v: &[f64]) -> Self {
        let c: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_slice(n, &c)
    }

    #[inline]
    pub fn write_to(&self, out: &mut [C64]) {
        let n = self.n;
        for i in 0..n {
            out[i * n..i * n + n].copy_from_slice(&self.a[i * S..i * S + n]);
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.a[i * S + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.a[i * S + j] = v;
    }

    #[inline]
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[j * S + i] = self.a[i * S + j].conj();
            }
        }
        m
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i * S + j] *= s;
            }
        }
        m
    }

    #[inline]
    pub fn scale_c(&self, s: C64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i * S + j] *= s;
            }
        }
        m
    }

    #[inline]
    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.a[i * S + i]).sum()
    }

    /// Frobenius norm squared, `tr(A A^†)`.
    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i * S + j].norm_sqr();
            }
        }
        s
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    #[inline]
    pub fn max_abs(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s = s.max(self.a[i * S + j].norm());
            }
        }
        s
    }

    #[inline]
    pub fn commutator(&self, b: &CMat) -> Self {
        *self * *b - *b * *self
    }

    #[inline]
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale(0.5)
    }

    /// `‖A − A^†‖_F`.
    #[inline]
    pub fn hermitian_defect(&self) -> f64 {
        (*self - self.adjoint()).norm()
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.a[i * S + j].is_finite()))
    }

    /// Lower Cholesky factor of a Hermitian positive-definite matrix.
    #[inline]
    pub fn cholesky(&self) -> Option<CMat> {
        let n = self.n;
        let mut l = CMat::zeros(n);
        for j in 0..n {
            let mut d = self.a[j * S + j].re;
            for k in 0..j {
                d -= l.a[j * S + k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let ljj = d.sqrt();
            l.a[j * S + j] = C64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut v = self.a[i * S + j];
                for k in 0..j {
                    v -= l.a[i * S + k] * l.a[j * S + k].conj();
                }
                l.a[i * S + j] = v / ljj;
            }
        }
        Some(l)
    }

    /// Inverse of a lower-triangular matrix.
    #[inline]
    pub fn lower_inverse(&self) -> CMat {
        let n = self.n;
        let mut x = CMat::zeros(n);
        for j in 0..n {
            x.a[j * S + j] = ONE / self.a[j * S + j];
            for i in j + 1..n {
                let mut v = ZERO;
                for k in j..i {
                    v -= self.a[i * S + k] * x.a[k * S + j];
                }
                x.a[i * S + j] = v / self.a[i * S + i];
            }
        }
        x
    }

    /// Gauss-Jordan inverse with partial pivoting.
    #[inline]
    pub fn inverse(&self) -> Option<CMat> {
        let n = self.n;
        let mut a = *self;
        let mut x = CMat::identity(n);
        for c in 0..n {
            let mut p = c;
            for r in c + 1..n {
                if a.a[r * S + c].norm() > a.a[p * S + c].norm() {
                    p = r;
                }
            }
            let piv = a.a[p * S + c];
            if piv.norm() == 0.0 || !piv.is_finite() {
                return None;
            }
            if p != c {
                for k in 0..n {
                    a.a.swap(p * S + k, c * S + k);
                    x.a.swap(p * S + k, c * S + k);
                }
            }
            let inv = ONE / piv;
            for k in 0..n {
                a.a[c * S + k] *= inv;
                x.a[c * S + k] *= inv;
            }
            for r in 0..n {
                if r != c {
                    let f = a.a[r * S + c];
                    if f != ZERO {
                        for k in 0..n {
                            let ack = a.a[c * S + k];
                            let xck = x.a[c * S + k];
                            a.a[r * S + k] -= f * ack;
                            x.a[r * S + k] -= f * xck;
                        }
                    }
                }
            }
        }
        Some(x)
    }

    /// Spectral decomposition of the Hermitian part. Eigenvalues ascend.
    #[inline]
    pub fn eigh(&self) -> Eigh {
        let n = self.n;
        let mut a = self.hermitian_part();
        let mut v = CMat::identity(n);
        if n > 1 {
            jacobi(&mut a, &mut v);
        }
        let mut vals = [0.0; S];
        for (i, x) in vals.iter_mut().enumerate().take(n) {
            *x = a.a[i * S + i].re;
        }
        // insertion sort, permuting columns of v
        for i in 1..n {
            let mut j = i;
            while j > 0 && vals[j - 1] > vals[j] {
                vals.swap(j - 1, j);
                for r in 0..n {
                    v.a.swap(r * S + j - 1, r * S + j);
                }
                j -= 1;
            }
        }
        Eigh { n, values: vals, vectors: v }
    }

    /// `f(A)` for Hermitian `A`.
    #[inline]
    pub fn map_hermitian(&self, f: impl Fn(f64) -> f64) -> CMat {
        if self.n == 1 {
            return CMat::from_real_diag(&[f(self.a[0].re)]);
        }
        self.eigh().map(f)
    }
}

fn jacobi(a: &mut CMat, v: &mut CMat) {
    let n = a.n;
    for _sweep in 0..64 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for p in 0..n {
            diag += a.a[p * S + p].norm_sqr();
            for q in p + 1..n {
                off += a.a[p * S + q].norm_sqr();
            }
        }
        if off == 0.0 || off <= 1e-34 * diag {
            return;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.a[p * S + q];
                let b = apq.norm();
                if b == 0.0 {
                    continue;
                }
                let e = apq / b;
                let app = a.a[p * S + p].re;
                let aqq = a.a[q * S + q].re;
                let theta = (aqq - app) / (2.0 * b);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // J: col p = (c, -s ē), col q = (s, c ē) on rows (p, q)
                let ec = e.conj();
                let jpp = C64::new(c, 0.0);
                let jqp = -ec * s;
                let jpq = C64::new(s, 0.0);
                let jqq = ec * c;
                // A <- A J
                for r in 0..n {
                    let arp = a.a[r * S + p];
                    let arq = a.a[r * S + q];
                    a.a[r * S + p] = arp * jpp + arq * jqp;
                    a.a[r * S + q] = arp * jpq + arq * jqq;
                }
                // A <- J^† A
                for k in 0..n {
                    let apk = a.a[p * S + k];
                    let aqk = a.a[q * S + k];
                    a.a[p * S + k] = jpp.conj() * apk + jqp.conj() * aqk;
                    a.a[q * S + k] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a.a[p * S + q] = ZERO;
                a.a[q * S + p] = ZERO;
                a.a[p * S + p] = C64::new(a.a[p * S + p].re, 0.0);
                a.a[q * S + q] = C64::new(a.a[q * S + q].re, 0.0);
                for r in 0..n {
                    let vrp = v.a[r * S + p];
                    let vrq = v.a[r * S + q];
                    v.a[r * S + p] = vrp * jpp + vrq * jqp;
                    v.a[r * S + q] = vrp * jpq + vrq * jqq;
                }
            }
        }
    }
}

/// Eigenpairs of a Hermitian matrix; column `k` of `vectors` pairs with `values[k]`.
#[derive(Clone, Copy, Debug)]
pub struct Eigh {
    pub n: usize,
    pub values: [f64; S],
    pub vectors: CMat,
}

impl Eigh {
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values[..self.n]
    }

    #[inline]
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    #[inline]
    pub fn max(&self) -> f64 {
        self.values[self.n - 1]
    }

    /// `V diag(f(λ)) V^†`.
    #[inline]
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.n;
        let mut fl = [0.0; S];
        for k in 0..n {
            fl[k] = f(self.values[k]);
        }
        let v = &self.vectors;
        let mut m = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for (k, &fk) in fl.iter().enumerate().take(n) {
                    acc += v.a[i * S + k] * v.a[j * S + k].conj() * fk;
                }
                m.a[i * S + j] = acc;
            }
        }
        m
    }

    /// Entries of `A` in the eigenframe: `V^† A V`.
    #[inline]
    pub fn to_frame(&self, a: &CMat) -> CMat {
        self.vectors.adjoint() * *a * self.vectors
    }
}

/// `log(L⁻¹ H L^{-†})` together with the frame data needed to pull it back,
/// where `K = L L^†`. The logarithm of `K⁻¹H` is `L^{-†} log(·) L^†`.
#[derive(Clone, Copy, Debug)]
pub struct RelativeLog {
    pub hermitian_log: Eigh,
    pub l: CMat,
    pub l_inv: CMat,
}

impl RelativeLog {
    #[inline]
    pub fn new(k: &CMat, h: &CMat) -> Option<Self> {
        let l = k.cholesky()?;
        let l_inv = l.lower_inverse();
        let p = l_inv * *h * l_inv.adjoint();
        let e = p.eigh();
        if !(e.min() > 0.0) {
            return None;
        }
        Some(RelativeLog { hermitian_log: e, l, l_inv })
    }

    /// The K-self-adjoint endomorphism `log(K⁻¹H)`.
    #[inline]
    pub fn endomorphism(&self) -> CMat {
        let w = self.hermitian_log.map(f64::ln);
        self.l_inv.adjoint() * w * self.l.adjoint()
    }

    /// Eigenvalues of `log(K⁻¹H)`, ascending.
    #[inline]
    pub fn log_eigs(&self) -> [f64; S] {
        let mut out = [0.0; S];
        for k in 0..self.hermitian_log.n {
            out[k] = self.hermitian_log.values[k].ln();
        }
        out
    }

    /// Frobenius norm of `log(K⁻¹H)` measured in K, i.e. `(Σ log²μ)^{1/2}`.
    #[inline]
    pub fn norm(&self) -> f64 {
        self.hermitian_log.values()
            .iter()
            .map(|&m| m.ln().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `log(A⁻¹B)` for Hermitian positive-definite `A = L L^†` given `L`.
#[inline]
pub fn log_ratio(l: &CMat, l_inv: &CMat, b: &CMat) -> Option<CMat> {
    let p = *l_inv * *b * l_inv.adjoint();
    let e = p.eigh();
    if !(e.min() > 0.0) {
        return None;
    }
    Some(l_inv.adjoint() * e.map(f64::ln) * l.adjoint())
}

/// `(e^{y−x} − 1)/(y − x)` with the removable singularity handled.
pub fn psi(x: f64, y: f64) -> f64 {
    let d = y - x;
    if d.abs() < 1e-6 {
        // expm1(d)/d = 1 + d/2 + d²/6 + d³/24
        1.0 + d * (0.5 + d * (1.0 / 6.0 + d / 24.0))
    } else {
        d.exp_m1() / d
    }
}

macro_rules! elementwise {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr for CMat {
            type Output = CMat;
            #[inline]
            fn $f(self, b: CMat) -> CMat {
                debug_assert_eq!(self.n, b.n);
                let mut m = self;
                for i in 0..self.n {
                    for j in 0..self.n {
                        m.a[i * S + j] = self.a[i * S + j] $op b.a[i * S + j];
                    }
                }
                m
            }
        }
    };
}
elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl AddAssign for CMat {
    #[inline]
    fn add_assign(&mut self, b: CMat) {
        *self = *self + b;
    }
}

impl SubAssign for CMat {
    #[inline]
    fn sub_assign(&mut self, b: CMat) {
        *self = *self - b;
    }
}

impl Neg for CMat {
    type Output = CMat;
    #[inline]
    fn neg(self) -> CMat {
        self.scale(-1.0)
    }
}

impl Mul for CMat {
    type Output = CMat;
    #[inline]
    fn mul(self, b: CMat) -> CMat {
        debug_assert_eq!(self.n, b.n);
        let n = self.n;
        let mut m = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i * S + k];
                if aik == ZERO {
                    continue;
                }
                for j in 0..n {
                    m.a[i * S + j] += aik * b.a[k * S + j];
                }
            }
        }
        m
    }
}
