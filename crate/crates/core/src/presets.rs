//! Named bundle configurations used by the CLI, the FFI and the tests.
//!
//! Weighted bundles carry the background curvature of the Hermitian weight
//! `e^{−u}`: `√−1Λ F₀ = ½Δ̃u`. The profile `w` is `cos(2πx₁/L₁)` on a torus and
//! `1/τ` on the cusp, with `u = c·w`.

use crate::bundle::HiggsBundleData;
use crate::error::{Error, Result};
use crate::field::EndoField;
use crate::geometry::{GridManifold, Model};
use crate::linalg::{CMat, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// Trivial line bundle.
    LineFlat {},
    /// Line bundle with weight `e^{−c·w}`.
    LineWeight { c: f64 },
    /// `L ⊕ L⁻¹` with weights `e^{∓c·w}` and θ = 0.
    SplitPair { c: f64 },
    /// `L ⊕ L⁻¹` with weight `e^{∓weight·w}` and θ = c·E₁₂ (times `e^{−(z−1)}` on the cusp).
    NilpotentHiggs {
        c: f64,
        #[serde(default)]
        weight: f64,
    },
}

/// The profile `w` at every node.
pub fn weight_profile(m: &GridManifold) -> Vec<f64> {
    match m.model() {
        Model::FlatTorus { .. } => {
            let l = m.axes()[0].period;
            (0..m.len()).map(|i| (2.0 * PI * m.coord(i, 0) / l).cos()).collect()
        }
        Model::CuspCylinder { .. } => (0..m.len()).map(|i| 1.0 / m.coord(i, 0)).collect(),
    }
}

/// `F₀` coefficients for a diagonal bundle of weights `e^{−u_k}`.
fn diagonal_background(m: &GridManifold, us: &[Vec<f64>]) -> Vec<EndoField> {
    let half_laps: Vec<Vec<f64>> = us.iter().map(|u| m.laplacian_complex(u).iter().map(|x| 0.5 * x).collect()).collect();
    let r = us.len();
    let mut f0 = vec![EndoField::zeros(m.len(), r); m.dim()];
    // u depends on the first complex axis only, so its curvature lives there
    f0[0] = EndoField::from_fn(m.len(), r, |i| {
        let d: Vec<f64> = half_laps.iter().map(|l| l[i] / m.inv_metric(i, 0)).collect();
        CMat::from_real_diag(&d)
    });
    f0
}

impl Preset {
    pub fn rank(&self) -> usize {
        match self {
            Preset::LineFlat {} | Preset::LineWeight { .. } => 1,
            Preset::SplitPair { .. } | Preset::NilpotentHiggs { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::LineFlat {} => "line_flat",
            Preset::LineWeight { .. } => "line_weight",
            Preset::SplitPair { .. } => "split_pair",
            Preset::NilpotentHiggs { .. } => "nilpotent_higgs",
        }
    }

    pub fn build(&self, m: &GridManifold) -> Result<HiggsBundleData> {
        let check = |x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("non-finite preset parameter {x}")))
            }
        };
        let w = weight_profile(m);
        let scaled = |c: f64| w.iter().map(|x| c * x).collect::<Vec<f64>>();
        let mut b = HiggsBundleData::trivial(m, self.rank());
        match *self {
            Preset::LineFlat {} => {}
            Preset::LineWeight { c } => {
                check(c)?;
                b.f0 = diagonal_background(m, &[scaled(c)]);
            }
            Preset::SplitPair { c } => {
                check(c)?;
                b.f0 = diagonal_background(m, &[scaled(c), scaled(-c)]);
            }
            Preset::NilpotentHiggs { c, weight } => {
                check(c)?;
                check(weight)?;
                b.f0 = diagonal_background(m, &[scaled(weight), scaled(-weight)]);
                let cusp = matches!(m.model(), Model::CuspCylinder { .. });
                b.theta[0] = EndoField::from_fn(m.len(), 2, |i| {
                    let f = if cusp {
                        let z = C64::new(m.coord(i, 0) - 1.0, m.coord(i, 1));
                        (-z).exp() * c
                    } else {
                        C64::new(c, 0.0)
                    };
                    let mut t = CMat::zeros(2);
                    t.set(0, 1, f);
                    t
                });
            }
        }
        b.label = self.name().to_string();
        Ok(b)
    }

    /// Constant orthogonal projectors onto the coordinate subbundles worth testing:
    /// every coordinate line for θ = 0, the θ-invariant line for the nilpotent field.
    pub fn candidate_projectors(&self) -> Vec<CMat> {
        match self {
            Preset::LineFlat {} | Preset::LineWeight { .. } => vec![],
            Preset::SplitPair { .. } => vec![CMat::from_real_diag(&[1.0, 0.0]), CMat::from_real_diag(&[0.0, 1.0])],
            Preset::NilpotentHiggs { .. } => vec![CMat::from_real_diag(&[1.0, 0.0])],
        }
    }
}
