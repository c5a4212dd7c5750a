use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::assembly::OperatorBundle;
use crate::error::{Error, Result};
use crate::linalg::sparse::bilinear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    /// Nodal P1 pressure with zero mean.
    PressureZeroMean,
    /// Interior displacement degrees of freedom.
    Displacement,
    /// Load vectors paired against pressure test functions.
    PressureDual,
    /// Load vectors paired against displacement test functions.
    DisplacementDual,
}

/// Coefficient vector tagged with the space it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVec {
    pub space: Space,
    pub coeffs: DVector<f64>,
}

impl FieldVec {
    pub fn new(space: Space, coeffs: DVector<f64>) -> Self {
        Self { space, coeffs }
    }

    pub fn pressure(coeffs: DVector<f64>) -> Self {
        Self::new(Space::PressureZeroMean, coeffs)
    }

    pub fn displacement(coeffs: DVector<f64>) -> Self {
        Self::new(Space::Displacement, coeffs)
    }

    pub fn expect_space(&self, space: Space) -> Result<&DVector<f64>> {
        if self.space != space {
            return Err(Error::SpaceMismatch {
                expected: format!("{space:?}"),
                got: format!("{:?}", self.space),
            });
        }
        Ok(&self.coeffs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `sqrt(v^T M v)` with the mass matrix of the field's space.
    L2,
    /// `sqrt(v^T A_p v)` on pressures.
    V,
    /// `sqrt(v^T K_e v)` on displacements.
    Energy,
}

/// Nodal interpolant of a scalar field with its mean removed.
pub fn project_pressure(bundle: &OperatorBundle, f: &dyn Fn(&[f64; 2]) -> f64) -> FieldVec {
    let mut p = bundle.interpolate_pressure(f);
    bundle.remove_mean(&mut p);
    FieldVec::pressure(p)
}

/// Nodal interpolant of a vector field on the interior displacement nodes.
pub fn project_displacement(bundle: &OperatorBundle, f: &dyn Fn(&[f64; 2]) -> [f64; 2]) -> FieldVec {
    FieldVec::displacement(bundle.interpolate_displacement(f))
}

pub fn norm(bundle: &OperatorBundle, v: &FieldVec, kind: NormKind) -> Result<f64> {
    let m = match (kind, v.space) {
        (NormKind::L2, Space::PressureZeroMean) => bundle.mp(),
        (NormKind::L2, Space::Displacement) => bundle.mu(),
        (NormKind::V, Space::PressureZeroMean) => bundle.ap(),
        (NormKind::Energy, Space::Displacement) => bundle.ke(),
        (k, s) => {
            return Err(Error::SpaceMismatch {
                expected: format!("a space carrying the {k:?} norm"),
                got: format!("{s:?}"),
            })
        }
    };
    Ok(bilinear(m, &v.coeffs, &v.coeffs).max(0.0).sqrt())
}
