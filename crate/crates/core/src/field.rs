//! Per-node matrix fields.

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use rayon::prelude::*;

/// An `r × r` complex matrix at every node, stored contiguously row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EndoField {
    rank: usize,
    data: Vec<C64>,
}

impl EndoField {
    pub fn zeros(len: usize, rank: usize) -> Self {
        EndoField { rank, data: vec![C64::new(0.0, 0.0); len * rank * rank] }
    }

    pub fn constant(len: usize, m: &CMat) -> Self {
        let r = m.n();
        let mut f = Self::zeros(len, r);
        for i in 0..len {
            f.set(i, m);
        }
        f
    }

    pub fn identity(len: usize, rank: usize) -> Self {
        Self::constant(len, &CMat::identity(rank))
    }

    pub fn from_fn(len: usize, rank: usize, f: impl Fn(usize) -> CMat + Sync) -> Self {
        let mut out = Self::zeros(len, rank);
        let rr = rank * rank;
        out.data.par_chunks_mut(rr).enumerate().for_each(|(i, chunk)| {
            let m = f(i);
            debug_assert_eq!(m.n(), rank);
            m.write_to(chunk);
        });
        out
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.rank * self.rank)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn at(&self, i: usize) -> CMat {
        let rr = self.rank * self.rank;
        CMat::from_slice(self.rank, &self.data[i * rr..(i + 1) * rr])
    }

    #[inline]
    pub fn set(&mut self, i: usize, m: &CMat) {
        let rr = self.rank * self.rank;
        m.write_to(&mut self.data[i * rr..(i + 1) * rr]);
    }

    pub fn map(&self, f: impl Fn(usize, &CMat) -> CMat + Sync) -> EndoField {
        EndoField::from_fn(self.len(), self.rank, |i| f(i, &self.at(i)))
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// Entry `(p, q)` at every node.
    pub fn component(&self, p: usize, q: usize) -> Vec<C64> {
        let r = self.rank;
        (0..self.len()).map(|i| self.data[i * r * r + p * r + q]).collect()
    }

    /// Largest pointwise Frobenius norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len()).map(|i| self.at(i).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }
}

/// Hermitian positive-definite field `h = H₀⁻¹H` in the working frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField(EndoField);

pub const HERMITIAN_TOL: f64 = 1e-12;

impl MetricField {
    pub fn new(f: EndoField) -> Result<Self> {
        for i in 0..f.len() {
            let m = f.at(i);
            let defect = m.hermitian_defect();
            if defect > HERMITIAN_TOL * m.norm().max(1e-300) || !m.is_finite() {
                return Err(Error::NotHermitian { node: i, defect });
            }
            if m.cholesky().is_none() {
                return Err(Error::NotPositive { node: i });
            }
        }
        Ok(MetricField(f))
    }

    /// Caller guarantees Hermitian positivity.
    pub(crate) fn trusted(f: EndoField) -> Self {
        MetricField(f)
    }

    pub fn identity(len: usize, rank: usize) -> Self {
        MetricField(EndoField::identity(len, rank))
    }

    pub fn constant(len: usize, m: &CMat) -> Result<Self> {
        Self::new(EndoField::constant(len, m))
    }

    pub fn from_diag(len: usize, d: impl Fn(usize) -> Vec<f64> + Sync) -> Result<Self> {
        let r = d(0).len();
        Self::new(EndoField::from_fn(len, r, |i| CMat::from_real_diag(&d(i))))
    }

    pub fn field(&self) -> &EndoField {
        &self.0
    }

    pub fn into_field(self) -> EndoField {
        self.0
    }

    pub fn at(&self, i: usize) -> CMat {
        self.0.at(i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.0.rank()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.len()).map(|i| self.at(i).eigh().min()).fold(f64::INFINITY, f64::min)
    }
}
