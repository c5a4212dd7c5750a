//! Pressure-only reformulations: the reduced Biot equation, the strongly
//! damped wave equation, the first-order ODE for the incompressible
//! visco-elastic case, and the spectral analysis of the damped wave
//! generator.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::discretization::{FieldVec, OperatorBundle, Space};
use crate::error::{Error, Result};
use crate::linalg::dense::generalized_symmetric_eigen;
use crate::linalg::sparse::spmv;
use crate::model::{classify_regime, resolve_initial_state, InitialSpec, PhysParams, RegimeKind, MEAN_TOL};
use crate::operators::{b_dual, calb_dual, dense_b, solve_calb_dual, zero_mean_basis, PressureSolver, ZeroMeanBasis};
use crate::sources::SourceSpec;
use crate::timestepper::{StartupPolicy, StepperOptions};

/// Pressure history from a reduced solver.
#[derive(Debug, Clone)]
pub struct PressureTrajectory {
    pub times: Vec<f64>,
    pub p: Vec<DVector<f64>>,
    /// Pressure rate, for solvers that carry it.
    pub p_t: Option<Vec<DVector<f64>>>,
    /// `Mp^{-1} W p`, for the first-order ODE form.
    pub q: Option<Vec<DVector<f64>>>,
    pub startup_steps: usize,
    pub theta: f64,
}

fn startup_count(opts: &StepperOptions, rough: bool, n_steps: usize) -> usize {
    match opts.startup {
        StartupPolicy::Never => 0,
        StartupPolicy::Always => opts.startup_steps,
        StartupPolicy::Auto if rough => opts.startup_steps,
        StartupPolicy::Auto => 0,
    }
    .min(n_steps)
}

/// `S - alpha D Ke^{-1} F_t` at time `t`.
fn reduced_source(bundle: &OperatorBundle, params: &PhysParams, sources: &SourceSpec, t: f64) -> Result<DVector<f64>> {
    let mut s = sources.fluid_load(bundle, t);
    if sources.force.is_some() {
        let ft = sources.force_rate_load(bundle, t)?;
        s.axpy(-params.alpha, &spmv(bundle.ddiv(), &bundle.ke_solve(&ft)), 1.0);
    }
    Ok(s)
}

/// Theta-scheme for `(𝓑 p)_t + A p = S - alpha D Ke^{-1} F_t` in the
/// classical and adjusted-content regimes. Accepts `p0` or `d0`.
pub fn solve_reduced_biot(
    bundle: &OperatorBundle,
    params: &PhysParams,
    initial: &InitialSpec,
    sources: &SourceSpec,
    opts: &StepperOptions,
) -> Result<PressureTrajectory> {
    let regime = classify_regime(params)?;
    if !matches!(
        regime.kind,
        RegimeKind::ClassicalBiot | RegimeKind::ViscoAdjustedContent
    ) {
        return Err(Error::InvalidRegime(format!(
            "the reduced Biot equation does not hold for {regime}"
        )));
    }
    bundle.check_compatible(params)?;
    let n_steps = opts.num_steps()?;
    let cfg = &opts.solver;
    let p0 = match (&initial.p0, &initial.d0) {
        (Some(p0), _) => {
            let spec = InitialSpec::pressure(p0.clone());
            resolve_initial_state(bundle, params, &spec, sources, cfg)?.p.coeffs
        }
        (None, Some(d0)) => {
            let d = d0.expect_space(Space::PressureZeroMean)?;
            let ratio = bundle.relative_mean(d);
            if ratio > MEAN_TOL {
                return Err(Error::NonZeroMean {
                    quantity: "d0".into(),
                    ratio,
                });
            }
            let mut rhs = spmv(bundle.mp(), d);
            let f0 = sources.force_load(bundle, 0.0);
            rhs.axpy(-params.alpha, &spmv(bundle.ddiv(), &bundle.ke_solve(&f0)), 1.0);
            solve_calb_dual(bundle, params, &rhs, cfg)?
        }
        (None, None) => return Err(Error::Underspecified("the reduced Biot equation needs p0 or d0".into())),
    };
    let startup = startup_count(opts, initial.p0.is_none(), n_steps);
    let dt = opts.dt;
    let beta = (params.c0 + params.alpha.powi(2) / params.p_modulus()) / dt;
    let mut solvers: Vec<(f64, PressureSolver)> = Vec::new();
    let mut times = vec![0.0];
    let mut ps = vec![p0];
    let mut s_prev = reduced_source(bundle, params, sources, 0.0)?;
    for k in 0..n_steps {
        let theta = if k < startup { 1.0 } else { opts.theta };
        if !solvers.iter().any(|(t, _)| *t == theta) {
            solvers.push((theta, PressureSolver::new(bundle, beta, theta)?));
        }
        let solver = &solvers.iter().find(|(t, _)| *t == theta).unwrap().1;
        let t1 = (k + 1) as f64 * dt;
        let s_next = reduced_source(bundle, params, sources, t1)?;
        let p = &ps[k];
        let mut rhs = calb_dual(bundle, params, p) / dt;
        rhs.axpy(-(1.0 - theta), &spmv(bundle.ap(), p), 1.0);
        rhs.axpy(theta, &s_next, 1.0);
        rhs.axpy(1.0 - theta, &s_prev, 1.0);
        let next = solver.solve(
            bundle,
            |x| {
                let mut y = calb_dual(bundle, params, x) / dt;
                y.axpy(theta, &spmv(bundle.ap(), x), 1.0);
                Ok(y)
            },
            &rhs,
            Some(p),
            cfg,
            "reduced Biot step",
        )?;
        ps.push(next);
        times.push(t1);
        s_prev = s_next;
    }
    Ok(PressureTrajectory {
        times,
        p: ps,
        p_t: None,
        q: None,
        startup_steps: startup,
        theta: opts.theta,
    })
}

fn require_damped_wave(params: &PhysParams) -> Result<()> {
    let regime = classify_regime(params)?;
    if regime.kind != RegimeKind::ViscoStandardContent || params.c0 <= 0.0 {
        return Err(Error::InvalidRegime(format!(
            "the strongly damped wave form needs c0 > 0, delta1 > 0, delta2 = 0 (got {regime})"
        )));
    }
    Ok(())
}

/// Theta-scheme for the strongly damped wave equation in the pair
/// `(p, p_t)`. Initial data `(p0, u0)` or `(p0, p1)`.
pub fn solve_strongly_damped_wave(
    bundle: &OperatorBundle,
    params: &PhysParams,
    initial: &InitialSpec,
    sources: &SourceSpec,
    opts: &StepperOptions,
) -> Result<PressureTrajectory> {
    require_damped_wave(params)?;
    let n_steps = opts.num_steps()?;
    let cfg = &opts.solver;
    let mut spec = initial.clone();
    spec.want_displacement = false;
    let init = resolve_initial_state(bundle, params, &spec, sources, cfg)?;
    let r0 = init.p_t.expect("compressible visco-elastic state carries p_t").coeffs;
    let (c0, d1, dt) = (params.c0, params.delta1, opts.dt);
    let forcing = |t: f64| -> Result<DVector<f64>> {
        let mut f = reduced_source(bundle, params, sources, t)? / d1;
        if sources.fluid.is_some() {
            f += sources.fluid_rate_load(bundle, t)?;
        }
        Ok(f)
    };
    let damping = |x: &DVector<f64>| calb_dual(bundle, params, x) / d1 + spmv(bundle.ap(), x);
    let m = params.p_modulus();
    let mut times = vec![0.0];
    let mut ps = vec![init.p.coeffs];
    let mut rs = vec![r0];
    let mut f_prev = forcing(0.0)?;
    let mut solvers: Vec<(f64, PressureSolver)> = Vec::new();
    for k in 0..n_steps {
        let theta = opts.theta;
        if solvers.is_empty() {
            let beta = c0 / dt + theta * (c0 + params.alpha.powi(2) / m) / d1;
            let gamma = theta + theta * theta * dt / d1;
            solvers.push((theta, PressureSolver::new(bundle, beta, gamma)?));
        }
        let solver = &solvers[0].1;
        let t1 = (k + 1) as f64 * dt;
        let f_next = forcing(t1)?;
        let (p, r) = (&ps[k], &rs[k]);
        let mut rhs = spmv(bundle.mp(), r) * (c0 / dt);
        rhs.axpy(-(1.0 - theta), &damping(r), 1.0);
        let pin = p + r * (theta * (1.0 - theta) * dt);
        rhs.axpy(-1.0 / d1, &spmv(bundle.ap(), &pin), 1.0);
        rhs.axpy(theta, &f_next, 1.0);
        rhs.axpy(1.0 - theta, &f_prev, 1.0);
        let r1 = solver.solve(
            bundle,
            |x| {
                let mut y = spmv(bundle.mp(), x) * (c0 / dt);
                y.axpy(theta, &damping(x), 1.0);
                y.axpy(theta * theta * dt / d1, &spmv(bundle.ap(), x), 1.0);
                Ok(y)
            },
            &rhs,
            Some(r),
            cfg,
            "damped wave step",
        )?;
        let p1 = p + (&r1 * theta + r * (1.0 - theta)) * dt;
        ps.push(p1);
        rs.push(r1);
        times.push(t1);
        f_prev = f_next;
    }
    Ok(PressureTrajectory {
        times,
        p: ps,
        p_t: Some(rs),
        q: None,
        startup_steps: 0,
        theta: opts.theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QFormMode {
    /// Theta-scheme with the configured step.
    Theta,
    /// Dense exact propagator on the stored grid (unforced only).
    Exact,
}

fn require_q_form(params: &PhysParams) -> Result<()> {
    let regime = classify_regime(params)?;
    if regime.kind != RegimeKind::ViscoStandardContent || params.c0 != 0.0 {
        return Err(Error::InvalidRegime(format!(
            "the first-order ODE form needs c0 = 0, delta1 > 0, delta2 = 0 (got {regime})"
        )));
    }
    Ok(())
}

/// `W = alpha^2 B + delta1 A` in dual form.
fn w_dual(bundle: &OperatorBundle, params: &PhysParams, x: &DVector<f64>) -> DVector<f64> {
    let mut y = b_dual(bundle, x) * params.alpha.powi(2);
    y.axpy(params.delta1, &spmv(bundle.ap(), x), 1.0);
    y
}

/// First-order ODE `q_t + R q = S_bar` with `q = W p`, returned with both
/// `p` and `q` histories.
pub fn solve_ode_q_form(
    bundle: &OperatorBundle,
    params: &PhysParams,
    initial: &InitialSpec,
    sources: &SourceSpec,
    opts: &StepperOptions,
    mode: QFormMode,
) -> Result<PressureTrajectory> {
    require_q_form(params)?;
    let n_steps = opts.num_steps()?;
    let cfg = &opts.solver;
    let mut spec = initial.clone();
    spec.want_displacement = false;
    let init = resolve_initial_state(bundle, params, &spec, sources, cfg)?;
    let rough = init
        .constraint_defect
        .is_some_and(|d| d > crate::timestepper::DEFECT_TOL);
    let dt = opts.dt;
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
    let mut ps = vec![init.p.coeffs.clone()];
    let startup;
    match mode {
        QFormMode::Exact => {
            if !sources.is_zero() {
                return Err(Error::UnsupportedSource(
                    "the exact propagator handles the unforced problem only".into(),
                ));
            }
            startup = 0;
            let basis = zero_mean_basis(bundle, cfg)?;
            let bt = basis.restrict(&dense_b(bundle, cfg)?);
            let a = DMatrix::from_diagonal(&basis.a);
            let w = 0.5 * (&bt + bt.transpose()) * params.alpha.powi(2) + &a * params.delta1;
            let g = generalized_symmetric_eigen(&a, &w)?;
            let y0 = basis.coords(bundle, &ps[0]);
            let c0 = g.vectors.transpose() * (&w * y0);
            for &t in &times[1..] {
                let ct = DVector::from_iterator(
                    c0.len(),
                    c0.iter().zip(g.values.iter()).map(|(c, l)| c * (-l * t).exp()),
                );
                ps.push(basis.nodal(&(&g.vectors * ct)));
            }
        }
        QFormMode::Theta => {
            startup = startup_count(opts, rough, n_steps);
            let sbar = |t: f64| -> Result<DVector<f64>> {
                let mut s = reduced_source(bundle, params, sources, t)?;
                if sources.fluid.is_some() {
                    s.axpy(params.delta1, &sources.fluid_rate_load(bundle, t)?, 1.0);
                }
                Ok(s)
            };
            let beta = params.alpha.powi(2) / (params.p_modulus() * dt);
            let mut solvers: Vec<(f64, PressureSolver)> = Vec::new();
            let mut s_prev = sbar(0.0)?;
            for k in 0..n_steps {
                let theta = if k < startup { 1.0 } else { opts.theta };
                if !solvers.iter().any(|(t, _)| *t == theta) {
                    solvers.push((theta, PressureSolver::new(bundle, beta, params.delta1 / dt + theta)?));
                }
                let solver = &solvers.iter().find(|(t, _)| *t == theta).unwrap().1;
                let s_next = sbar(times[k + 1])?;
                let p = &ps[k];
                let mut rhs = w_dual(bundle, params, p) / dt;
                rhs.axpy(-(1.0 - theta), &spmv(bundle.ap(), p), 1.0);
                rhs.axpy(theta, &s_next, 1.0);
                rhs.axpy(1.0 - theta, &s_prev, 1.0);
                let next = solver.solve(
                    bundle,
                    |x| {
                        let mut y = w_dual(bundle, params, x) / dt;
                        y.axpy(theta, &spmv(bundle.ap(), x), 1.0);
                        Ok(y)
                    },
                    &rhs,
                    Some(p),
                    cfg,
                    "q-form step",
                )?;
                ps.push(next);
                s_prev = s_next;
            }
        }
    }
    let q = ps
        .iter()
        .map(|p| {
            let mut q = bundle.mp_solve(&w_dual(bundle, params, p));
            bundle.remove_mean(&mut q);
            q
        })
        .collect();
    Ok(PressureTrajectory {
        times,
        p: ps,
        p_t: None,
        q: Some(q),
        startup_steps: startup,
        theta: opts.theta,
    })
}

/// First-order generator of the damped wave equation in the coordinates of
/// a [`ZeroMeanBasis`]: state `(y, y_t)` with `p = Phi y`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub matrix: DMatrix<f64>,
    pub basis: ZeroMeanBasis,
}

pub fn build_first_order_generator(
    bundle: &OperatorBundle,
    params: &PhysParams,
    config: &crate::operators::SolverConfig,
) -> Result<GeneratorMatrix> {
    require_damped_wave(params)?;
    let basis = zero_mean_basis(bundle, config)?;
    let n = basis.dim();
    let bt = basis.restrict(&dense_b(bundle, config)?);
    let bt = 0.5 * (&bt + bt.transpose());
    let (c0, d1, a2) = (params.c0, params.delta1, params.alpha.powi(2));
    let mut g = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        g[(i, n + i)] = 1.0;
        g[(n + i, i)] = -basis.a[i] / (d1 * c0);
        for j in 0..n {
            let mut d = a2 * bt[(i, j)] / d1;
            if i == j {
                d += basis.a[i] + c0 / d1;
            }
            g[(n + i, n + j)] = -d / c0;
        }
    }
    Ok(GeneratorMatrix { matrix: g, basis })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// `(re, im)` pairs sorted by descending real part.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Largest real part.
    pub spectral_abscissa: f64,
    pub max_imag_to_real: f64,
    pub oscillatory_count: usize,
}

pub fn spectrum_report(gen: &GeneratorMatrix) -> Result<SpectrumReport> {
    let schur = Schur::try_new(gen.matrix.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("Schur iteration did not converge".into()))?;
    let mut ev: Vec<(f64, f64)> = schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|a, b| b.0.total_cmp(&a.0));
    let scale = ev.iter().fold(0.0f64, |m, z| m.max(z.0.abs()));
    let osc_tol = 1e-10 * scale.max(1.0);
    let oscillatory_count = ev.iter().filter(|z| z.1.abs() > osc_tol).count();
    let max_imag_to_real = ev.iter().fold(0.0f64, |m, z| m.max(z.1.abs() / z.0.abs()));
    Ok(SpectrumReport {
        spectral_abscissa: ev[0].0,
        eigenvalues: ev,
        max_imag_to_real,
        oscillatory_count,
    })
}

/// Real initial data `(p0, p1)` along the eigenvector of the slowest mode.
#[derive(Debug, Clone)]
pub struct SlowestMode {
    pub eigenvalue: (f64, f64),
    pub p0: FieldVec,
    pub p1: FieldVec,
}

pub fn slowest_mode(gen: &GeneratorMatrix, report: &SpectrumReport) -> Result<SlowestMode> {
    let (re, im) = report.eigenvalues[0];
    let n2 = gen.matrix.nrows();
    let shift = Complex::new(re + 1e-7 * re.abs().max(1.0), im);
    let mut a = gen.matrix.map(|v| Complex::new(v, 0.0));
    for i in 0..n2 {
        a[(i, i)] -= shift;
    }
    let lu = a.lu();
    let mut y = DVector::from_element(n2, Complex::new(1.0, 0.0));
    for _ in 0..6 {
        y = lu
            .solve(&y)
            .ok_or_else(|| Error::EigenFailure("inverse iteration hit a singular shift".into()))?;
        let nrm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        y /= Complex::new(nrm, 0.0);
    }
    // Rotate so the largest component is real.
    let imax = (0..n2).max_by(|&i, &j| y[i].norm().total_cmp(&y[j].norm())).unwrap();
    let phase = y[imax] / Complex::new(y[imax].norm(), 0.0);
    let y = y.map(|z| z / phase);
    let n = n2 / 2;
    let y0 = DVector::from_iterator(n, y.rows(0, n).iter().map(|z| z.re));
    let y1 = DVector::from_iterator(n, y.rows(n, n).iter().map(|z| z.re));
    Ok(SlowestMode {
        eigenvalue: (re, im),
        p0: FieldVec::pressure(gen.basis.nodal(&y0)),
        p1: FieldVec::pressure(gen.basis.nodal(&y1)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_forms, build_mesh, project_displacement, project_pressure};
    use crate::operators::SolverConfig;
    use crate::oracle1d::{modal_matrix, modal_rates};
    use crate::timestepper::run;
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_generator_matches_modal_rates() {
        let params = PhysParams::default().with_c0(0.5).with_delta1(0.2);
        let b = assemble_forms(&build_mesh(1, 32).unwrap(), &params).unwrap();
        let gen = build_first_order_generator(&b, &params, &SolverConfig::default()).unwrap();
        let rep = spectrum_report(&gen).unwrap();
        assert!(rep.spectral_abscissa < 0.0);
        let rates = modal_rates(&modal_matrix(&params, 1).unwrap());
        let rel = (-rep.spectral_abscissa - rates[0].0).abs() / rates[0].0;
        assert!(rel < 1e-3, "rel {rel}");
        let m = slowest_mode(&gen, &rep).unwrap();
        assert!(m.p0.coeffs.norm() > 0.0);
    }

    #[test]
    fn reduced_biot_matches_full_classical() {
        let params = PhysParams::default().with_c0(0.1);
        let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
        let p0 = project_pressure(&b, &|x| (PI * x[0]).cos() + 0.3 * (2.0 * PI * x[0]).cos());
        let opts = StepperOptions::crank_nicolson(0.01, 0.2);
        let full = run(
            &b,
            &params,
            &InitialSpec::pressure(p0.clone()),
            &SourceSpec::zero(),
            &opts,
        )
        .unwrap();
        let red = solve_reduced_biot(&b, &params, &InitialSpec::pressure(p0), &SourceSpec::zero(), &opts).unwrap();
        for (s, p) in full.states.iter().zip(&red.p) {
            assert!((&s.p - p).amax() < 1e-9);
        }
    }

    #[test]
    fn damped_wave_matches_full_solver() {
        let params = PhysParams::default().with_c0(0.3).with_delta1(0.4);
        let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
        let p0 = project_pressure(&b, &|x| (PI * x[0]).cos());
        let u0 = project_displacement(&b, &|x| [0.1 * (PI * x[0]).sin(), 0.0]);
        let spec = InitialSpec::pressure_displacement(p0, u0);
        let opts = StepperOptions::crank_nicolson(0.005, 0.2);
        let full = run(&b, &params, &spec, &SourceSpec::zero(), &opts).unwrap();
        let wave = solve_strongly_damped_wave(&b, &params, &spec, &SourceSpec::zero(), &opts).unwrap();
        let pf = &full.last().p;
        let pw = wave.p.last().unwrap();
        assert!((pf - pw).norm() < 1e-3 * pf.norm());
    }

    #[test]
    fn q_form_theta_and_exact_agree() {
        let params = PhysParams::default().with_delta1(0.5);
        let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
        let p0 = project_pressure(&b, &|x| (PI * x[0]).cos());
        let spec = InitialSpec::pressure(p0);
        let opts = StepperOptions::crank_nicolson(0.002, 0.2);
        let th = solve_ode_q_form(&b, &params, &spec, &SourceSpec::zero(), &opts, QFormMode::Theta).unwrap();
        let ex = solve_ode_q_form(&b, &params, &spec, &SourceSpec::zero(), &opts, QFormMode::Exact).unwrap();
        let (a, e) = (th.p.last().unwrap(), ex.p.last().unwrap());
        assert!((a - e).norm() < 1e-5 * e.norm());
    }

    #[test]
    fn regime_guards() {
        let params = PhysParams::default();
        let b = assemble_forms(&build_mesh(1, 8).unwrap(), &params).unwrap();
        let cfg = SolverConfig::default();
        assert!(matches!(
            build_first_order_generator(&b, &params, &cfg),
            Err(Error::InvalidRegime(_))
        ));
        let p = PhysParams::default().with_delta1(0.5);
        let opts = StepperOptions::crank_nicolson(0.1, 0.1);
        let p0 = project_pressure(&b, &|x| (PI * x[0]).cos());
        assert!(matches!(
            solve_reduced_biot(&b, &p, &InitialSpec::pressure(p0), &SourceSpec::zero(), &opts),
            Err(Error::InvalidRegime(_))
        ));
    }
}
