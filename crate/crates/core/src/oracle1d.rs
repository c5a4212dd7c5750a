//! Closed-form modal solutions on the unit interval.
//!
//! Pressure modes are `sqrt(2) cos(k pi x)` and displacement modes
//! `sqrt(2) sin(k pi x)`. Each mode obeys a linear ODE of dimension at most
//! two; algebraic variables are recovered from the differential ones.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::discretization::{FieldVec, OperatorBundle};
use crate::error::{Error, Result};
use crate::linalg::sparse::spmv;
use crate::model::{classify_regime, PhysParams, RegimeKind};
use crate::operators::{zero_mean_basis, SolverConfig};

/// Which modal coefficients evolve differentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModalLayout {
    /// Pressure only; displacement is algebraic.
    Pressure,
    /// Displacement only; pressure is algebraic.
    Displacement,
    Both,
}

/// `x' = M x + G s`, `(P, U) = C x + H s`, with the source vector
/// `s = (S_k, F_k, dF_k/dt)`.
#[derive(Debug, Clone)]
pub struct ModalSystem {
    pub k: usize,
    pub layout: ModalLayout,
    pub m: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

/// Modal forcing.
#[derive(Debug, Clone, PartialEq)]
pub enum ModalSource {
    /// `S_k = s e^{beta t}`, `F_k = f e^{beta t}`; `beta = 0` is constant.
    Exponential { s: f64, f: f64, beta: f64 },
    /// Samples `(t, S_k, F_k)` with no closed form.
    Sampled(Vec<(f64, f64, f64)>),
}

pub fn modal_matrix(params: &PhysParams, k: usize) -> Result<ModalSystem> {
    if k == 0 {
        return Err(Error::Config("mode index must be at least 1".into()));
    }
    let regime = classify_regime(params)?;
    let kp = k as f64 * PI;
    let ek = params.p_modulus() * kp * kp;
    let ak = params.kappa * kp * kp;
    let b = 1.0 / params.p_modulus();
    let (al, c0, d1) = (params.alpha, params.c0, params.delta1);
    let mu = d1 * ek + params.lambda_star * kp * kp;
    let mat = |r: usize, c: usize, v: &[f64]| DMatrix::from_row_slice(r, c, v);

    let sys = if regime.kind == RegimeKind::ViscoAdjustedContent {
        let cb = c0 + al * al * b;
        ModalSystem {
            k,
            layout: ModalLayout::Both,
            m: mat(2, 2, &[-ak / cb, 0.0, al * kp / (d1 * ek), -1.0 / d1]),
            g: mat(2, 3, &[1.0 / cb, 0.0, -al * kp / (ek * cb), 0.0, 1.0 / (d1 * ek), 0.0]),
            c: DMatrix::identity(2, 2),
            h: DMatrix::zeros(2, 3),
        }
    } else if mu == 0.0 {
        let cb = c0 + al * al * b;
        ModalSystem {
            k,
            layout: ModalLayout::Pressure,
            m: mat(1, 1, &[-ak / cb]),
            g: mat(1, 3, &[1.0 / cb, 0.0, -al * kp / (ek * cb)]),
            c: mat(2, 1, &[1.0, al * kp / ek]),
            h: mat(2, 3, &[0.0, 0.0, 0.0, 0.0, 1.0 / ek, 0.0]),
        }
    } else if c0 > 0.0 {
        ModalSystem {
            k,
            layout: ModalLayout::Both,
            m: mat(
                2,
                2,
                &[
                    -(ak + al * al * kp * kp / mu) / c0,
                    al * kp * ek / (mu * c0),
                    al * kp / mu,
                    -ek / mu,
                ],
            ),
            g: mat(2, 3, &[1.0 / c0, -al * kp / (mu * c0), 0.0, 0.0, 1.0 / mu, 0.0]),
            c: DMatrix::identity(2, 2),
            h: DMatrix::zeros(2, 3),
        }
    } else {
        let akp = al * kp;
        let den = akp + mu * ak / akp;
        ModalSystem {
            k,
            layout: ModalLayout::Displacement,
            m: mat(1, 1, &[-ak * ek / (akp * den)]),
            g: mat(1, 3, &[1.0 / akp - ak * mu / (akp * akp * den), ak / (akp * den), 0.0]),
            c: mat(2, 1, &[ek / den, 1.0]),
            h: mat(2, 3, &[mu / (akp * den), -1.0 / den, 0.0, 0.0, 0.0, 0.0]),
        }
    };
    Ok(sys)
}

/// `exp(M t)` for `M` of size one or two, via the real closed form that
/// stays valid for repeated and complex roots.
pub fn expm_small(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    if m.nrows() == 1 {
        return DMatrix::from_element(1, 1, (m[(0, 0)] * t).exp());
    }
    let mm = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let s = 0.5 * mm.trace();
    let d2 = s * s - mm.determinant();
    let shifted = mm - Matrix2::identity() * s;
    let (cosh_part, sinh_part) = if d2 >= 0.0 {
        let d = d2.sqrt();
        let x = d * t;
        if x < 1e-3 {
            let e = (s * t).exp();
            (
                e * (1.0 + x * x / 2.0 + x.powi(4) / 24.0),
                e * t * (1.0 + x * x / 6.0 + x.powi(4) / 120.0),
            )
        } else {
            let e1 = ((s + d) * t).exp();
            let e2 = ((s - d) * t).exp();
            (0.5 * (e1 + e2), (e1 - e2) / (2.0 * d))
        }
    } else {
        let w = (-d2).sqrt();
        let x = w * t;
        let e = (s * t).exp();
        let sinc = if x < 1e-3 { t * (1.0 - x * x / 6.0) } else { x.sin() / w };
        (e * x.cos(), e * sinc)
    };
    let r = Matrix2::identity() * cosh_part + shifted * sinh_part;
    DMatrix::from_row_slice(2, 2, &[r[(0, 0)], r[(0, 1)], r[(1, 0)], r[(1, 1)]])
}

/// Modal coefficients `(P_k(t), U_k(t))` from initial `(P_k(0), U_k(0))`.
/// Only the differential coefficient of the initial pair is used when the
/// other is algebraic.
pub fn exact_modal_solution(
    sys: &ModalSystem,
    p0: f64,
    u0: f64,
    t: f64,
    source: Option<&ModalSource>,
) -> Result<(f64, f64)> {
    let x0 = match sys.layout {
        ModalLayout::Both => DVector::from_vec(vec![p0, u0]),
        ModalLayout::Pressure => DVector::from_vec(vec![p0]),
        ModalLayout::Displacement => DVector::from_vec(vec![u0]),
    };
    let n = x0.len();
    let (x, s_t) = match source {
        None => (expm_small(&sys.m, t) * x0, DVector::zeros(3)),
        Some(ModalSource::Sampled(_)) => {
            return Err(Error::UnsupportedSource(
                "sampled modal forcing has no closed form".into(),
            ))
        }
        Some(&ModalSource::Exponential { s, f, beta }) => {
            let s0 = DVector::from_vec(vec![s, f, beta * f]);
            let shifted = DMatrix::identity(n, n) * beta - &sys.m;
            let det = shifted.determinant();
            if det.abs() <= 1e-12 * shifted.amax().powi(n as i32).max(1e-300) {
                return Err(Error::UnsupportedSource(
                    "forcing rate resonates with a modal rate".into(),
                ));
            }
            let v = shifted
                .lu()
                .solve(&(&sys.g * &s0))
                .expect("nonsingular by the check above");
            let e = (beta * t).exp();
            let x = expm_small(&sys.m, t) * (x0 - &v) + &v * e;
            (x, s0 * e)
        }
    };
    let out = &sys.c * x + &sys.h * s_t;
    Ok((out[0], out[1]))
}

/// Sum of modes on the unit interval.
#[derive(Debug, Clone)]
pub struct ModalExpansion {
    pub params: PhysParams,
    /// `(k, P_k(0), U_k(0))`.
    pub modes: Vec<(usize, f64, f64)>,
    systems: Vec<ModalSystem>,
}

impl ModalExpansion {
    pub fn new(params: &PhysParams, modes: Vec<(usize, f64, f64)>) -> Result<Self> {
        let systems = modes
            .iter()
            .map(|&(k, _, _)| modal_matrix(params, k))
            .collect::<Result<_>>()?;
        Ok(Self {
            params: *params,
            modes,
            systems,
        })
    }

    /// Coefficients `(k, P_k(t), U_k(t))`.
    pub fn coefficients(&self, t: f64) -> Result<Vec<(usize, f64, f64)>> {
        self.modes
            .iter()
            .zip(&self.systems)
            .map(|(&(k, p, u), sys)| exact_modal_solution(sys, p, u, t, None).map(|(p, u)| (k, p, u)))
            .collect()
    }

    pub fn pressure_fn(&self, t: f64) -> Result<impl Fn(&[f64; 2]) -> f64> {
        let c = self.coefficients(t)?;
        Ok(move |x: &[f64; 2]| {
            c.iter()
                .map(|&(k, p, _)| p * SQRT_2 * (k as f64 * PI * x[0]).cos())
                .sum()
        })
    }

    pub fn displacement_fn(&self, t: f64) -> Result<impl Fn(&[f64; 2]) -> [f64; 2]> {
        let c = self.coefficients(t)?;
        Ok(move |x: &[f64; 2]| {
            [
                c.iter()
                    .map(|&(k, _, u)| u * SQRT_2 * (k as f64 * PI * x[0]).sin())
                    .sum(),
                0.0,
            ]
        })
    }
}

/// Nodal interpolants of the exact pressure and displacement at time `t`.
pub fn oracle_field_solution(
    bundle: &OperatorBundle,
    expansion: &ModalExpansion,
    t: f64,
) -> Result<(FieldVec, FieldVec)> {
    if bundle.dim() != 1 {
        return Err(Error::InvalidDimension(bundle.dim()));
    }
    let pf = expansion.pressure_fn(t)?;
    let uf = expansion.displacement_fn(t)?;
    Ok((
        crate::discretization::project_pressure(bundle, &pf),
        crate::discretization::project_displacement(bundle, &uf),
    ))
}

/// Discrete analogue of mode `k`: the `k`-th eigenvector of the Darcy form
/// against the pressure mass, and the displacement it drives elastically,
/// both normalized to match `sqrt(2) cos` and `sqrt(2) sin`.
pub fn discrete_mode(bundle: &OperatorBundle, k: usize, config: &SolverConfig) -> Result<(FieldVec, FieldVec)> {
    if bundle.dim() != 1 {
        return Err(Error::InvalidDimension(bundle.dim()));
    }
    let basis = zero_mean_basis(bundle, config)?;
    if k == 0 || k > basis.dim() {
        return Err(Error::Config(format!("mode {k} is not resolved on this mesh")));
    }
    let mut p = basis.phi.column(k - 1).into_owned();
    let interp = bundle.interpolate_pressure(&|x| SQRT_2 * (k as f64 * PI * x[0]).cos());
    if spmv(bundle.mp(), &p).dot(&interp) < 0.0 {
        p = -p;
    }
    let kp = k as f64 * PI;
    let u = bundle.ke_solve(&spmv(bundle.ddiv_t(), &p)) * (bundle.params().p_modulus() * kp);
    Ok((FieldVec::pressure(p), FieldVec::displacement(u)))
}

/// Modal ODE rates `-eig(M)` sorted by real part, as complex pairs.
pub fn modal_rates(sys: &ModalSystem) -> Vec<(f64, f64)> {
    if sys.m.nrows() == 1 {
        return vec![(-sys.m[(0, 0)], 0.0)];
    }
    let m = &sys.m;
    let s = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let d2 = s * s - det;
    let mut r = if d2 >= 0.0 {
        vec![(-(s + d2.sqrt()), 0.0), (-(s - d2.sqrt()), 0.0)]
    } else {
        vec![(-s, -(-d2).sqrt()), (-s, (-d2).sqrt())]
    };
    r.sort_by(|a, b| a.0.total_cmp(&b.0));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::expm;

    fn regimes() -> Vec<PhysParams> {
        let b = PhysParams::default()
            .with_lame(1.5, 0.8)
            .with_kappa(0.7)
            .with_alpha(0.9);
        vec![
            b,
            b.with_c0(0.3),
            b.with_delta1(0.4),
            b.with_c0(0.3).with_delta1(0.4),
            b.with_delta1(0.4).with_adjusted_content(),
            b.with_c0(0.3).with_delta1(0.4).with_adjusted_content(),
            b.with_lambda_star(2.0),
            b.with_c0(0.3).with_lambda_star(2.0),
        ]
    }

    /// Residual of the modal equations, checked by central differences.
    fn residual(params: &PhysParams, k: usize, p0: f64, u0: f64, t: f64, src: Option<&ModalSource>) -> (f64, f64) {
        let sys = modal_matrix(params, k).unwrap();
        let h = 1e-5;
        let at = |t: f64| exact_modal_solution(&sys, p0, u0, t, src).unwrap();
        let (p, u) = at(t);
        let (pp, up) = at(t + h);
        let (pm, um) = at(t - h);
        let (pt, ut) = ((pp - pm) / (2.0 * h), (up - um) / (2.0 * h));
        let utt = (up - 2.0 * u + um) / (h * h);
        let kp = k as f64 * PI;
        let ek = params.p_modulus() * kp * kp;
        let ak = params.kappa * kp * kp;
        let (sk, fk) = match src {
            Some(&ModalSource::Exponential { s, f, beta }) => (s * (beta * t).exp(), f * (beta * t).exp()),
            _ => (0.0, 0.0),
        };
        let mom = ek * (u + params.delta1 * ut) + params.lambda_star * kp * kp * ut - params.alpha * kp * p - fk;
        let mass = params.c0 * pt + params.alpha * kp * ut + params.delta2 * kp * utt + ak * p - sk;
        (mom, mass)
    }

    #[test]
    fn solutions_satisfy_modal_equations() {
        let src = ModalSource::Exponential {
            s: 0.7,
            f: -0.4,
            beta: -0.3,
        };
        for params in regimes() {
            for k in [1, 2] {
                for s in [None, Some(&src)] {
                    let (m, c) = residual(&params, k, 0.8, 0.05, 0.37, s);
                    assert!(m.abs() < 1e-5 && c.abs() < 1e-4, "{params:?} k={k}: {m} {c}");
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_pade() {
        let m = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 2.0, -4.0]);
        let mc = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -3.0, -1.0]);
        let rep = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -2.0]);
        for a in [m, mc, rep] {
            for t in [1e-4, 0.3, 2.0] {
                let e1 = expm_small(&a, t);
                let e2 = expm(&(&a * t));
                assert!((e1 - e2).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn visco_compressible_characteristic_polynomial() {
        let p = PhysParams::default().with_c0(0.3).with_delta1(0.4);
        let sys = modal_matrix(&p, 1).unwrap();
        let a = p.kappa * PI * PI;
        let bb = 1.0 / p.p_modulus();
        // c0 l^2 + (a + (c0 + alpha^2 b)/delta1) l + a/delta1 = 0 at l = eig(M)
        let tr = sys.m.trace();
        let det = sys.m.determinant();
        assert!((-tr - (a + (p.c0 + bb) / p.delta1) / p.c0).abs() < 1e-12);
        assert!((det - a / (p.delta1 * p.c0)).abs() < 1e-10);
    }

    #[test]
    fn incompressible_visco_rate() {
        let p = PhysParams::default().with_delta1(0.5);
        let sys = modal_matrix(&p, 2).unwrap();
        let a = 4.0 * PI * PI;
        let r = a / (1.0 / p.p_modulus() + p.delta1 * a);
        assert!((modal_rates(&sys)[0].0 - r).abs() < 1e-12);
        assert_eq!(sys.layout, ModalLayout::Displacement);
    }

    #[test]
    fn sampled_source_and_resonance_are_unsupported() {
        let p = PhysParams::default().with_c0(1.0);
        let sys = modal_matrix(&p, 1).unwrap();
        let s = ModalSource::Sampled(vec![(0.0, 1.0, 0.0)]);
        assert!(matches!(
            exact_modal_solution(&sys, 1.0, 0.0, 1.0, Some(&s)),
            Err(Error::UnsupportedSource(_))
        ));
        let rate = modal_rates(&sys)[0].0;
        let s = ModalSource::Exponential {
            s: 1.0,
            f: 0.0,
            beta: -rate,
        };
        assert!(matches!(
            exact_modal_solution(&sys, 1.0, 0.0, 1.0, Some(&s)),
            Err(Error::UnsupportedSource(_))
        ));
    }
}
