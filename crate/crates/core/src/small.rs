//! Fixed-size complex matrices for the per-node hot loops.
//!
//! [`CMat`] always carries `MAX_RANK²` entries, so moving one costs the same
//! at every rank. `SMat<N>` holds exactly `N²` entries and lets the compiler
//! unroll everything; callers pick `N` once per field with [`by_rank!`].

use crate::linalg::{CMat, C64};
use rayon::prelude::*;
use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SMat<const N: usize>(pub [[C64; N]; N]);

/// Calls `$f::<N>(args…)` with `N` equal to the runtime rank `$r`.
macro_rules! by_rank {
    ($r:expr, $f:ident ( $($arg:expr),* $(,)? )) => {
        match $r {
            1 => $f::<1>($($arg),*),
            2 => $f::<2>($($arg),*),
            3 => $f::<3>($($arg),*),
            4 => $f::<4>($($arg),*),
            r => unreachable!("rank {r}"),
        }
    };
}
pub(crate) use by_rank;

impl<const N: usize> SMat<N> {
    #[inline(always)]
    pub fn zero() -> Self {
        SMat([[ZERO; N]; N])
    }

    #[inline(always)]
    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..N {
            m.0[i][i] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Row-major `N*N` slice.
    #[inline(always)]
    pub fn load(v: &[C64]) -> Self {
        let mut m = Self::zero();
        for i in 0..N {
            m.0[i].copy_from_slice(&v[i * N..i * N + N]);
        }
        m
    }

    /// Node `i` of a packed field of rank `N`.
    #[inline(always)]
    pub fn at(v: &[C64], i: usize) -> Self {
        Self::load(&v[i * N * N..(i + 1) * N * N])
    }

    #[inline(always)]
    pub fn store(&self, out: &mut [C64]) {
        for i in 0..N {
            out[i * N..i * N + N].copy_from_slice(&self.0[i]);
        }
    }

    #[inline(always)]
    pub fn store_at(&self, out: &mut [C64], i: usize) {
        self.store(&mut out[i * N * N..(i + 1) * N * N]);
    }

    pub fn to_cmat(&self) -> CMat {
        let mut m = CMat::zeros(N);
        for i in 0..N {
            for j in 0..N {
                m.set(i, j, self.0[i][j]);
            }
        }
        m
    }

    #[inline(always)]
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..N {
            for j in 0..N {
                m.0[j][i] = self.0[i][j].conj();
            }
        }
        m
    }

    #[inline(always)]
    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    #[inline(always)]
    pub fn scale_c(&self, s: C64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    #[inline(always)]
    pub fn commutator(&self, b: &Self) -> Self {
        *self * *b - *b * *self
    }

    #[inline(always)]
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale(0.5)
    }

    #[inline(always)]
    pub fn trace(&self) -> C64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    #[inline(always)]
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    #[inline(always)]
    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.is_finite())
    }

    /// Lower Cholesky factor of a Hermitian positive-definite matrix.
    #[inline(always)]
    pub fn cholesky(&self) -> Option<Self> {
        let mut l = Self::zero();
        for j in 0..N {
            let mut d = self.0[j][j].re;
            for k in 0..j {
                d -= l.0[j][k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let ljj = d.sqrt();
            l.0[j][j] = C64::new(ljj, 0.0);
            for i in j + 1..N {
                let mut v = self.0[i][j];
                for k in 0..j {
                    v -= l.0[i][k] * l.0[j][k].conj();
                }
                l.0[i][j] = v / ljj;
            }
        }
        Some(l)
    }

    /// Inverse of a lower-triangular matrix.
    #[inline(always)]
    pub fn lower_inverse(&self) -> Self {
        let mut x = Self::zero();
        for j in 0..N {
            x.0[j][j] = C64::new(1.0, 0.0) / self.0[j][j];
            for i in j + 1..N {
                let mut v = ZERO;
                for k in j..i {
                    v -= self.0[i][k] * x.0[k][j];
                }
                x.0[i][j] = v / self.0[i][i];
            }
        }
        x
    }

    /// `f` applied to the Hermitian part, with the ascending spectrum.
    #[inline]
    pub fn map_hermitian(&self, f: impl Fn(f64) -> f64) -> (Self, [f64; N]) {
        if N == 1 {
            let x = self.0[0][0].re;
            let mut m = Self::zero();
            m.0[0][0] = C64::new(f(x), 0.0);
            let mut v = [0.0; N];
            v[0] = x;
            return (m, v);
        }
        if N == 2 {
            // f(A) = α + β(A − m), with α, β the mean and divided difference of f at m ± r
            let (a, d) = (self.0[0][0].re, self.0[1][1].re);
            let b = (self.0[0][1] + self.0[1][0].conj()) * 0.5;
            let mut v = [0.0; N];
            let mut m = Self::zero();
            if b == ZERO {
                m.0[0][0] = C64::new(f(a), 0.0);
                m.0[1][1] = C64::new(f(d), 0.0);
                (v[0], v[1]) = (a.min(d), a.max(d));
                return (m, v);
            }
            let mean = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            // the eigenvalue of smaller magnitude comes from the determinant
            let det = a * d - b.norm_sqr();
            let (lo, hi) = if mean >= 0.0 { (det / (mean + r), mean + r) } else { (mean - r, det / (mean - r)) };
            let (flo, fhi) = (f(lo), f(hi));
            let alpha = 0.5 * (flo + fhi);
            let beta = if r > 0.0 { (fhi - flo) / (hi - lo) } else { 0.0 };
            m.0[0][0] = C64::new(alpha + beta * (a - mean), 0.0);
            m.0[1][1] = C64::new(alpha + beta * (d - mean), 0.0);
            m.0[0][1] = b * beta;
            m.0[1][0] = b.conj() * beta;
            v[0] = lo;
            v[1] = hi;
            return (m, v);
        }
        let e = self.to_cmat().eigh();
        let mut vals = [0.0; N];
        vals.copy_from_slice(e.values());
        let mut v = Self::zero();
        for i in 0..N {
            for j in 0..N {
                v.0[i][j] = e.vectors.get(i, j);
            }
        }
        let mut out = Self::zero();
        for k in 0..N {
            let fk = f(vals[k]);
            for i in 0..N {
                let vik = v.0[i][k] * fk;
                for j in 0..N {
                    out.0[i][j] += vik * v.0[j][k].conj();
                }
            }
        }
        (out, vals)
    }
}

/// Writes `f(i)` into node `i` of a packed rank-`N` buffer.
pub(crate) fn fill<const N: usize>(out: &mut [C64], f: impl Fn(usize) -> SMat<N> + Sync) {
    out.par_chunks_mut(N * N).with_min_len(1024).enumerate().for_each(|(i, c)| f(i).store(c));
}

impl<const N: usize> Add for SMat<N> {
    type Output = Self;
    #[inline(always)]
    fn add(mut self, b: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] += b.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for SMat<N> {
    type Output = Self;
    #[inline(always)]
    fn sub(mut self, b: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] -= b.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> AddAssign for SMat<N> {
    #[inline(always)]
    fn add_assign(&mut self, b: Self) {
        *self = *self + b;
    }
}

impl<const N: usize> SubAssign for SMat<N> {
    #[inline(always)]
    fn sub_assign(&mut self, b: Self) {
        *self = *self - b;
    }
}

impl<const N: usize> Mul for SMat<N> {
    type Output = Self;
    #[inline(always)]
    fn mul(self, b: Self) -> Self {
        let mut m = Self::zero();
        for i in 0..N {
            for k in 0..N {
                let aik = self.0[i][k];
                for j in 0..N {
                    m.0[i][j] += aik * b.0[k][j];
                }
            }
        }
        m
    }
}
