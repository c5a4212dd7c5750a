//! Abstract pressure operators built from the assembled forms.
//!
//! Every operator maps a mean-free pressure to a mean-free pressure (primal
//! form, i.e. the mass matrix is inverted). `B` and `𝓑` are applied
//! matrix-free through one elastic solve each.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretization::{FieldVec, OperatorBundle, Space};
use crate::error::{Error, Result};
use crate::linalg::dense::{generalized_symmetric_eigen, sorted_symmetric_eigenvalues, symmetry_defect};
use crate::linalg::sparse::{combine, pcg, spmv, to_dense, SpdSolver};
use crate::model::PhysParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative residual target of every iterative pressure solve.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Largest pressure dimension for which dense matrices are formed.
    pub dense_threshold: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 5000,
            dense_threshold: 1024,
        }
    }
}

/// `D Ke^{-1} D^T p`, the dual form of `B`.
pub fn b_dual(bundle: &OperatorBundle, p: &DVector<f64>) -> DVector<f64> {
    let w = bundle.ke_solve(&spmv(bundle.ddiv_t(), p));
    spmv(bundle.ddiv(), &w)
}

/// Dual form of `𝓑 = c0 I + alpha^2 B`.
pub fn calb_dual(bundle: &OperatorBundle, params: &PhysParams, p: &DVector<f64>) -> DVector<f64> {
    let mut out = b_dual(bundle, p) * params.alpha.powi(2);
    if params.c0 != 0.0 {
        out.axpy(params.c0, &spmv(bundle.mp(), p), 1.0);
    }
    out
}

fn to_primal(bundle: &OperatorBundle, dual: &DVector<f64>) -> FieldVec {
    let mut p = bundle.mp_solve(dual);
    bundle.remove_mean(&mut p);
    FieldVec::pressure(p)
}

/// Displacement solving `e(u, v) = <load, v>` for all `v`.
pub fn apply_einv(bundle: &OperatorBundle, load: &FieldVec) -> Result<FieldVec> {
    let f = load.expect_space(Space::DisplacementDual)?;
    Ok(FieldVec::displacement(bundle.ke_solve(f)))
}

pub fn apply_b(bundle: &OperatorBundle, p: &FieldVec) -> Result<FieldVec> {
    let v = p.expect_space(Space::PressureZeroMean)?;
    Ok(to_primal(bundle, &b_dual(bundle, v)))
}

pub fn apply_calb(bundle: &OperatorBundle, params: &PhysParams, p: &FieldVec) -> Result<FieldVec> {
    let v = p.expect_space(Space::PressureZeroMean)?;
    Ok(to_primal(bundle, &calb_dual(bundle, params, v)))
}

/// Damping operator `A + delta1^{-1} 𝓑` of the strongly damped wave form.
pub fn apply_damping_d(bundle: &OperatorBundle, params: &PhysParams, p: &FieldVec) -> Result<FieldVec> {
    if params.delta1 <= 0.0 {
        return Err(Error::InvalidRegime("the damping operator needs delta1 > 0".into()));
    }
    let v = p.expect_space(Space::PressureZeroMean)?;
    let mut d = calb_dual(bundle, params, v) / params.delta1;
    d += spmv(bundle.ap(), v);
    Ok(to_primal(bundle, &d))
}

/// `R = A (alpha^2 B + delta1 A)^{-1}` acting on `q`, the operator of the
/// first-order ODE for the incompressible visco-elastic case.
pub fn apply_r(bundle: &OperatorBundle, params: &PhysParams, q: &FieldVec, config: &SolverConfig) -> Result<FieldVec> {
    if params.delta1 <= 0.0 {
        return Err(Error::InvalidRegime("R is defined only for delta1 > 0".into()));
    }
    let v = q.expect_space(Space::PressureZeroMean)?;
    let rhs = spmv(bundle.mp(), v);
    let solver = PressureSolver::new(bundle, params.alpha.powi(2) / params.p_modulus(), params.delta1)?;
    let p = solver.solve(
        bundle,
        |x| {
            let mut y = b_dual(bundle, x) * params.alpha.powi(2);
            y.axpy(params.delta1, &spmv(bundle.ap(), x), 1.0);
            Ok(y)
        },
        &rhs,
        None,
        config,
        "R solve",
    )?;
    Ok(to_primal(bundle, &spmv(bundle.ap(), &p)))
}

/// Solves `𝓑 x = d` for a mean-free `d`.
pub fn solve_calb(
    bundle: &OperatorBundle,
    params: &PhysParams,
    d: &FieldVec,
    config: &SolverConfig,
) -> Result<FieldVec> {
    let v = d.expect_space(Space::PressureZeroMean)?;
    let rhs = spmv(bundle.mp(), v);
    let x = solve_calb_dual(bundle, params, &rhs, config)?;
    Ok(FieldVec::pressure(x))
}

/// Solves `𝓑 x = rhs` with `rhs` given in dual form.
pub fn solve_calb_dual(
    bundle: &OperatorBundle,
    params: &PhysParams,
    rhs: &DVector<f64>,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let beta = params.c0 + params.alpha.powi(2) / params.p_modulus();
    let solver = PressureSolver::new(bundle, beta, 0.0)?;
    solver.solve(
        bundle,
        |x| Ok(calb_dual(bundle, params, x)),
        rhs,
        None,
        config,
        "𝓑 solve",
    )
}

/// Conjugate gradients on the mean-free pressure space, preconditioned by a
/// sparse Cholesky factor of `beta Mp + gamma Ap`.
pub(crate) struct PressureSolver {
    factor: SpdSolver,
}

impl PressureSolver {
    pub fn new(bundle: &OperatorBundle, beta: f64, gamma: f64) -> Result<Self> {
        let m = combine(&[(beta, bundle.mp()), (gamma, bundle.ap())]);
        Ok(Self {
            factor: SpdSolver::new(&m, "pressure preconditioner")?,
        })
    }

    pub fn solve(
        &self,
        bundle: &OperatorBundle,
        apply: impl FnMut(&DVector<f64>) -> Result<DVector<f64>>,
        rhs: &DVector<f64>,
        guess: Option<&DVector<f64>>,
        config: &SolverConfig,
        what: &str,
    ) -> Result<DVector<f64>> {
        let mut b = rhs.clone();
        bundle.remove_dual_mean(&mut b);
        let out = pcg(
            apply,
            &b,
            guess,
            |r| self.factor.solve(r),
            config.rel_tol,
            config.max_iter,
            what,
        )?;
        let mut x = out.x;
        bundle.remove_mean(&mut x);
        Ok(x)
    }
}

fn check_dense(bundle: &OperatorBundle, config: &SolverConfig) -> Result<()> {
    let n = bundle.num_pressure_dofs();
    if n > config.dense_threshold {
        return Err(Error::DenseModeUnavailable {
            size: n,
            threshold: config.dense_threshold,
        });
    }
    Ok(())
}

/// Dense `D Ke^{-1} D^T`.
pub fn dense_b(bundle: &OperatorBundle, config: &SolverConfig) -> Result<DMatrix<f64>> {
    check_dense(bundle, config)?;
    let dt = to_dense(bundle.ddiv_t());
    let x = bundle.ke_solver().solve_dense(&dt);
    Ok(&dt.transpose() * x)
}

/// Mass-orthonormal basis of the mean-free pressures that diagonalizes the
/// Darcy form: `Phi^T Mp Phi = I`, `Phi^T Ap Phi = diag(a)`, `a` ascending.
#[derive(Debug, Clone)]
pub struct ZeroMeanBasis {
    pub phi: DMatrix<f64>,
    pub a: DVector<f64>,
}

impl ZeroMeanBasis {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Restriction `Phi^T M Phi` of a dense dual-form matrix.
    pub fn restrict(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.phi.transpose() * m * &self.phi
    }

    /// Coordinates of a nodal pressure, `Phi^T Mp p`.
    pub fn coords(&self, bundle: &OperatorBundle, p: &DVector<f64>) -> DVector<f64> {
        self.phi.transpose() * spmv(bundle.mp(), p)
    }

    pub fn nodal(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.phi * c
    }
}

pub fn zero_mean_basis(bundle: &OperatorBundle, config: &SolverConfig) -> Result<ZeroMeanBasis> {
    check_dense(bundle, config)?;
    let g = generalized_symmetric_eigen(&to_dense(bundle.ap()), &to_dense(bundle.mp()))?;
    let n = g.values.len();
    // The constant mode carries the (near) zero eigenvalue.
    Ok(ZeroMeanBasis {
        phi: g.vectors.columns(1, n - 1).into_owned(),
        a: g.values.rows(1, n - 1).into_owned(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    /// Dimension of the mean-free pressure space.
    pub dimension: usize,
    pub b_symmetry_defect: f64,
    pub b_ritz_min: f64,
    pub b_ritz_max: f64,
    pub calb_ritz_min: f64,
    pub calb_ritz_max: f64,
    pub calb_condition: f64,
    /// Smallest singular value of `B` on the mean-free space.
    pub injectivity_proxy: f64,
    /// Smallest `c` with `2 a(v, v) + (𝓑 v, v) >= c a(v, v)`.
    pub coercivity_constant: f64,
    pub r_spectrum: Option<(f64, f64)>,
}

pub fn check_operator_properties(
    bundle: &OperatorBundle,
    params: &PhysParams,
    config: &SolverConfig,
) -> Result<PropertyReport> {
    let b = dense_b(bundle, config)?;
    let basis = zero_mean_basis(bundle, config)?;
    property_report_from_dense(params, &b, &basis)
}

/// Property report from an explicitly supplied dense `B` (dual form).
pub fn property_report_from_dense(
    params: &PhysParams,
    b: &DMatrix<f64>,
    basis: &ZeroMeanBasis,
) -> Result<PropertyReport> {
    let defect = symmetry_defect(b);
    let bt = basis.restrict(b);
    let ritz = sorted_symmetric_eigenvalues(&bt);
    let n = ritz.len();
    let a2 = params.alpha.powi(2);
    let calb_min = params.c0 + a2 * ritz[0];
    let calb_max = params.c0 + a2 * ritz[n - 1];
    let injectivity = ritz.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));

    let inv_sqrt_a = DVector::from_iterator(n, basis.a.iter().map(|a| 1.0 / a.sqrt()));
    let sym = 0.5 * (&bt + bt.transpose());
    let mut scaled = sym * a2 + DMatrix::identity(n, n) * params.c0;
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= inv_sqrt_a[i] * inv_sqrt_a[j];
        }
    }
    let coercivity = 2.0 + sorted_symmetric_eigenvalues(&scaled)[0];

    let r_spectrum = if params.delta1 > 0.0 {
        let a = DMatrix::from_diagonal(&basis.a);
        let w = 0.5 * (&bt + bt.transpose()) * a2 + &a * params.delta1;
        let g = generalized_symmetric_eigen(&a, &w)?;
        Some((g.values[0], g.values[n - 1]))
    } else {
        None
    };
    Ok(PropertyReport {
        dimension: n,
        b_symmetry_defect: defect,
        b_ritz_min: ritz[0],
        b_ritz_max: ritz[n - 1],
        calb_ritz_min: calb_min,
        calb_ritz_max: calb_max,
        calb_condition: calb_max / calb_min,
        injectivity_proxy: injectivity,
        coercivity_constant: coercivity,
        r_spectrum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Einv,
    B,
    CalB,
    DampingD,
    R,
}

/// Operator handle bound to a bundle and parameter set.
#[derive(Clone, Copy)]
pub struct AbstractOp<'a> {
    pub kind: OperatorKind,
    pub bundle: &'a OperatorBundle,
    pub params: PhysParams,
    pub config: SolverConfig,
}

impl AbstractOp<'_> {
    pub fn apply(&self, v: &FieldVec) -> Result<FieldVec> {
        match self.kind {
            OperatorKind::Einv => apply_einv(self.bundle, v),
            OperatorKind::B => apply_b(self.bundle, v),
            OperatorKind::CalB => apply_calb(self.bundle, &self.params, v),
            OperatorKind::DampingD => apply_damping_d(self.bundle, &self.params, v),
            OperatorKind::R => apply_r(self.bundle, &self.params, v, &self.config),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{
        assemble_forms, assemble_forms_with, build_mesh, project_pressure, DisplacementElement,
    };
    use crate::linalg::sparse::bilinear;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn taylor_hood_b_is_scaled_identity_in_1d() {
        let params = PhysParams::default().with_lame(2.0, 0.5);
        let mesh = build_mesh(1, 16).unwrap();
        let b = assemble_forms(&mesh, &params).unwrap();
        let p = project_pressure(&b, &|x| (3.0 * PI * x[0]).cos() + x[0].powi(3));
        let bp = apply_b(&b, &p).unwrap();
        let diff = &bp.coeffs - &p.coeffs / params.p_modulus();
        assert!(diff.amax() < 1e-12);
    }

    #[test]
    fn equal_order_b_has_checkerboard_kernel() {
        let mesh = build_mesh(1, 8).unwrap();
        let b = assemble_forms_with(&mesh, &PhysParams::default(), DisplacementElement::P1).unwrap();
        let mut zig = DVector::from_fn(9, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        b.remove_mean(&mut zig);
        let bz = b_dual(&b, &zig);
        assert!(bz.amax() < 1e-12);
    }

    #[test]
    fn calb_solve_roundtrip() {
        let params = PhysParams::default();
        let mesh = build_mesh(2, 6).unwrap();
        let b = assemble_forms(&mesh, &params).unwrap();
        let p = project_pressure(&b, &|x| (PI * x[0]).cos() * (2.0 * PI * x[1]).cos() + x[0] * x[1]);
        let d = apply_calb(&b, &params, &p).unwrap();
        let x = solve_calb(&b, &params, &d, &SolverConfig::default()).unwrap();
        assert!((&x.coeffs - &p.coeffs).amax() < 1e-8 * p.coeffs.amax());
    }

    #[test]
    fn properties_on_small_square() {
        let params = PhysParams::default().with_c0(0.1).with_delta1(0.5);
        let mesh = build_mesh(2, 6).unwrap();
        let b = assemble_forms(&mesh, &params).unwrap();
        let r = check_operator_properties(&b, &params, &SolverConfig::default()).unwrap();
        assert!(r.b_symmetry_defect < 1e-12);
        assert!(r.b_ritz_min > 0.0);
        assert!(r.b_ritz_max <= 1.0 / params.p_modulus() + 1e-12);
        assert!(r.coercivity_constant >= 2.0);
        let (rmin, rmax) = r.r_spectrum.unwrap();
        assert!(rmin > 0.0 && rmax < 1.0 / params.delta1);
    }

    #[test]
    fn damping_and_r_need_delta1() {
        let params = PhysParams::default();
        let mesh = build_mesh(1, 8).unwrap();
        let b = assemble_forms(&mesh, &params).unwrap();
        let p = project_pressure(&b, &|x| SQRT_2 * (PI * x[0]).cos());
        assert!(matches!(apply_damping_d(&b, &params, &p), Err(Error::InvalidRegime(_))));
        assert!(matches!(
            apply_r(&b, &params, &p, &SolverConfig::default()),
            Err(Error::InvalidRegime(_))
        ));
    }

    #[test]
    fn r_matches_dense_definition() {
        let params = PhysParams::default().with_delta1(0.5).with_lame(1.5, 0.7);
        let mesh = build_mesh(2, 4).unwrap();
        let b = assemble_forms(&mesh, &params).unwrap();
        let cfg = SolverConfig::default();
        let q = project_pressure(&b, &|x| (PI * x[0]).cos() + 0.3 * x[0] * x[1]);
        let rq = apply_r(&b, &params, &q, &cfg).unwrap();
        let basis = zero_mean_basis(&b, &cfg).unwrap();
        let bt = basis.restrict(&dense_b(&b, &cfg).unwrap());
        let w = bt * params.alpha.powi(2) + DMatrix::from_diagonal(&basis.a) * params.delta1;
        let y = w.lu().solve(&basis.coords(&b, &q.coeffs)).unwrap();
        let expected = DMatrix::from_diagonal(&basis.a) * y;
        let got = basis.coords(&b, &rq.coeffs);
        assert!((&got - &expected).amax() < 1e-9 * expected.amax());
        assert!(bilinear(b.mp(), &rq.coeffs, &rq.coeffs) > 0.0);
    }

    #[test]
    fn dense_mode_threshold() {
        let mesh = build_mesh(1, 16).unwrap();
        let b = assemble_forms(&mesh, &PhysParams::default()).unwrap();
        let cfg = SolverConfig {
            dense_threshold: 8,
            ..Default::default()
        };
        assert!(matches!(dense_b(&b, &cfg), Err(Error::DenseModeUnavailable { .. })));
    }
}
