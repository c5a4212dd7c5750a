//! Body force and fluid source terms as analytic space-time fields.

use std::sync::Arc;

use nalgebra::DVector;

use crate::discretization::OperatorBundle;
use crate::error::{Error, Result};

pub type ScalarField = Arc<dyn Fn(&[f64; 2], f64) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&[f64; 2], f64) -> [f64; 2] + Send + Sync>;

/// Forcing data. Absent fields are zero. Several solvers need the time
/// derivative of the body force, which must be supplied analytically.
#[derive(Clone, Default)]
pub struct SourceSpec {
    pub force: Option<VectorField>,
    pub force_t: Option<VectorField>,
    pub fluid: Option<ScalarField>,
    pub fluid_t: Option<ScalarField>,
}

impl std::fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceSpec")
            .field("force", &self.force.is_some())
            .field("force_t", &self.force_t.is_some())
            .field("fluid", &self.fluid.is_some())
            .field("fluid_t", &self.fluid_t.is_some())
            .finish()
    }
}

impl SourceSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.force.is_none() && self.fluid.is_none()
    }

    pub fn with_force(mut self, f: VectorField, f_t: Option<VectorField>) -> Self {
        self.force = Some(f);
        self.force_t = f_t;
        self
    }

    /// Time-independent body force; its derivative is recorded as zero.
    pub fn with_steady_force(mut self, f: impl Fn(&[f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.force = Some(Arc::new(move |x, _| f(x)));
        self.force_t = Some(Arc::new(|_, _| [0.0; 2]));
        self
    }

    pub fn with_fluid(mut self, s: ScalarField, s_t: Option<ScalarField>) -> Self {
        self.fluid = Some(s);
        self.fluid_t = s_t;
        self
    }

    /// Load vector of the body force at time `t`.
    pub fn force_load(&self, bundle: &OperatorBundle, t: f64) -> DVector<f64> {
        match &self.force {
            Some(f) => bundle.load_displacement(&|x| f(x, t)),
            None => DVector::zeros(bundle.num_displacement_dofs()),
        }
    }

    pub fn force_rate_load(&self, bundle: &OperatorBundle, t: f64) -> Result<DVector<f64>> {
        match (&self.force, &self.force_t) {
            (None, _) => Ok(DVector::zeros(bundle.num_displacement_dofs())),
            (Some(_), Some(ft)) => Ok(bundle.load_displacement(&|x| ft(x, t))),
            (Some(_), None) => Err(Error::MissingTimeDerivative("the body force")),
        }
    }

    /// Mean-free load vector of the fluid source at time `t`.
    pub fn fluid_load(&self, bundle: &OperatorBundle, t: f64) -> DVector<f64> {
        match &self.fluid {
            Some(s) => {
                let mut v = bundle.load_pressure(&|x| s(x, t));
                bundle.remove_dual_mean(&mut v);
                v
            }
            None => DVector::zeros(bundle.num_pressure_dofs()),
        }
    }

    pub fn fluid_rate_load(&self, bundle: &OperatorBundle, t: f64) -> Result<DVector<f64>> {
        match (&self.fluid, &self.fluid_t) {
            (None, _) => Ok(DVector::zeros(bundle.num_pressure_dofs())),
            (Some(_), Some(st)) => {
                let mut v = bundle.load_pressure(&|x| st(x, t));
                bundle.remove_dual_mean(&mut v);
                Ok(v)
            }
            (Some(_), None) => Err(Error::MissingTimeDerivative("the fluid source")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_forms, build_mesh};
    use crate::model::PhysParams;

    #[test]
    fn fluid_load_is_mean_free_and_missing_rate_errors() {
        let b = assemble_forms(&build_mesh(1, 8).unwrap(), &PhysParams::default()).unwrap();
        let s = SourceSpec::zero().with_fluid(Arc::new(|x, t| 1.0 + x[0] * t), None);
        assert!(s.fluid_load(&b, 2.0).sum().abs() < 1e-15);
        assert!(matches!(
            s.fluid_rate_load(&b, 0.0),
            Err(Error::MissingTimeDerivative(_))
        ));
        let f = SourceSpec::zero().with_steady_force(|x| [x[0], 0.0]);
        assert_eq!(f.force_rate_load(&b, 1.0).unwrap().amax(), 0.0);
    }
}
