//! Catalog of named analytic fields used for initial data and sources.
//!
//! Every shape is a function of space; an optional exponential time factor
//! `exp(rate t)` makes the time derivative available in closed form.

use std::f64::consts::{PI, SQRT_2};
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{FieldVec, OperatorBundle, Space};
use crate::error::{Error, Result};
use crate::sources::{ScalarField, VectorField};

/// Spatial shape of a scalar field. Mode shapes are normalized to unit
/// `L2` norm on the unit interval or square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude * prod_i sqrt(2) cos(k_i pi x_i)`; `ky = 0` drops the factor.
    Cosine {
        k: usize,
        #[serde(default)]
        ky: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude * sqrt(2) sin(k pi x) [* sqrt(2) sin(ky pi y)]`.
    Sine {
        k: usize,
        #[serde(default)]
        ky: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `sum c x^i y^j` over `terms = [[c, i, j], ...]`.
    Polynomial {
        terms: Vec<(f64, u32, u32)>,
    },
    /// Cosine series with random signs and `k^-exponent` amplitudes. Without
    /// a `seed` the scenario seed is used.
    Broadband {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        kmax: usize,
        #[serde(default = "half")]
        exponent: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Nodal coefficients read from a file with one value per line
    /// (initial data only).
    File {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn mode(k: usize, x: f64, cosine: bool) -> f64 {
    let a = k as f64 * PI * x;
    SQRT_2 * if cosine { a.cos() } else { a.sin() }
}

/// Random-sign broadband cosine series in `x`.
#[derive(Debug, Clone)]
pub struct Broadband {
    pub coeffs: Vec<f64>,
}

impl Broadband {
    pub fn new(seed: u64, kmax: usize, exponent: f64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (1..=kmax)
            .map(|k| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * amplitude * (k as f64).powf(-exponent)
            })
            .collect();
        Self { coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * mode(i + 1, x, true))
            .sum()
    }
}

impl Shape {
    /// Pointwise evaluation; `File` has no pointwise form.
    pub fn evaluator(&self) -> Result<Arc<dyn Fn(&[f64; 2]) -> f64 + Send + Sync>> {
        Ok(match self.clone() {
            Shape::Zero => Arc::new(|_| 0.0),
            Shape::Constant { value } => Arc::new(move |_| value),
            Shape::Cosine { k, ky, amplitude } => Arc::new(move |x| {
                let fy = if ky > 0 { mode(ky, x[1], true) } else { 1.0 };
                amplitude * mode(k, x[0], true) * fy
            }),
            Shape::Sine { k, ky, amplitude } => Arc::new(move |x| {
                let fy = if ky > 0 { mode(ky, x[1], false) } else { 1.0 };
                amplitude * mode(k, x[0], false) * fy
            }),
            Shape::Polynomial { terms } => Arc::new(move |x| {
                terms
                    .iter()
                    .map(|(c, i, j)| c * x[0].powi(*i as i32) * x[1].powi(*j as i32))
                    .sum()
            }),
            Shape::Broadband {
                seed,
                kmax,
                exponent,
                amplitude,
            } => {
                let b = Broadband::new(seed.unwrap_or(0), kmax, exponent, amplitude);
                Arc::new(move |x| b.eval(x[0]))
            }
            Shape::File { path } => {
                return Err(Error::Config(format!(
                    "file field {} has no pointwise values; it is usable as initial data only",
                    path.display()
                )))
            }
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Shape::Zero)
    }

    /// Fills in a missing broadband seed.
    pub fn seed_default(&mut self, default: u64) {
        if let Shape::Broadband { seed, .. } = self {
            seed.get_or_insert(default);
        }
    }
}

/// Scalar field `shape(x) exp(rate t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSpec {
    pub shape: Shape,
    #[serde(default)]
    pub rate: f64,
}

/// Vector field with one shape per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSpec {
    pub x: Shape,
    #[serde(default = "zero_shape")]
    pub y: Shape,
    #[serde(default)]
    pub rate: f64,
}

fn zero_shape() -> Shape {
    Shape::Zero
}

fn read_nodal(path: &PathBuf, len: usize) -> Result<DVector<f64>> {
    let text = std::fs::read_to_string(path)?;
    let vals = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != len {
        return Err(Error::SpaceMismatch {
            expected: format!("{len} nodal values"),
            got: format!("{} in {}", vals.len(), path.display()),
        });
    }
    Ok(DVector::from_vec(vals))
}

impl ScalarSpec {
    pub fn steady(shape: Shape) -> Self {
        Self { shape, rate: 0.0 }
    }

    /// Source field and its time derivative.
    pub fn source(&self) -> Result<Option<(ScalarField, ScalarField)>> {
        if self.shape.is_zero() {
            return Ok(None);
        }
        let f = self.shape.evaluator()?;
        let g = f.clone();
        let r = self.rate;
        Ok(Some((
            Arc::new(move |x, t| f(x) * (r * t).exp()),
            Arc::new(move |x, t| r * g(x) * (r * t).exp()),
        )))
    }
}

impl Shape {
    /// Mean-free pressure interpolant.
    pub fn pressure(&self, bundle: &OperatorBundle) -> Result<FieldVec> {
        match self {
            Shape::File { path } => {
                let mut v = read_nodal(path, bundle.num_pressure_dofs())?;
                bundle.remove_mean(&mut v);
                Ok(FieldVec::new(Space::PressureZeroMean, v))
            }
            s => Ok(crate::discretization::project_pressure(bundle, &*s.evaluator()?)),
        }
    }
}

impl VectorSpec {
    pub fn source(&self) -> Result<Option<(VectorField, VectorField)>> {
        if self.x.is_zero() && self.y.is_zero() {
            return Ok(None);
        }
        let (fx, fy) = (self.x.evaluator()?, self.y.evaluator()?);
        let (gx, gy) = (fx.clone(), fy.clone());
        let r = self.rate;
        Ok(Some((
            Arc::new(move |x, t| {
                let e = (r * t).exp();
                [fx(x) * e, fy(x) * e]
            }),
            Arc::new(move |x, t| {
                let e = r * (r * t).exp();
                [gx(x) * e, gy(x) * e]
            }),
        )))
    }

    /// Displacement interpolant (homogeneous Dirichlet) at `t = 0`.
    pub fn displacement(&self, bundle: &OperatorBundle) -> Result<FieldVec> {
        if let Shape::File { path } = &self.x {
            let v = read_nodal(path, bundle.num_displacement_dofs())?;
            return Ok(FieldVec::displacement(v));
        }
        let (fx, fy) = (self.x.evaluator()?, self.y.evaluator()?);
        Ok(crate::discretization::project_displacement(bundle, &|x| [fx(x), fy(x)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadband_is_seeded_and_decays() {
        let a = Broadband::new(7, 16, 0.5, 1.0);
        let b = Broadband::new(7, 16, 0.5, 1.0);
        assert_eq!(a.coeffs, b.coeffs);
        assert!((a.coeffs[3].abs() - 0.5).abs() < 1e-15);
        assert_ne!(a.coeffs, Broadband::new(8, 16, 0.5, 1.0).coeffs);
    }

    #[test]
    fn parses_tagged_shapes() {
        let s: ScalarSpec = toml::from_str("shape = { kind = \"cosine\", k = 2 }\nrate = -1.0").unwrap();
        assert_eq!(
            s.shape,
            Shape::Cosine {
                k: 2,
                ky: 0,
                amplitude: 1.0
            }
        );
        let (f, ft) = s.source().unwrap().unwrap();
        let x = [0.1, 0.0];
        assert!((ft(&x, 0.3) + f(&x, 0.3)).abs() < 1e-15);
        assert!(toml::from_str::<Shape>("kind = \"cosine\"\nk = 2\nbogus = 1").is_err());
        assert!(toml::from_str::<ScalarSpec>("shape = { kind = \"zero\" }\nbogus = 1").is_err());
    }
}
