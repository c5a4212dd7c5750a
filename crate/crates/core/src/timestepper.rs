//! Theta-scheme integration of the full coupled system.
//!
//! Each step eliminates the displacement and solves a pressure Schur
//! complement by preconditioned CG; the displacement then follows from one
//! elastic solve.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::discretization::OperatorBundle;
use crate::error::{Error, Result};
use crate::linalg::sparse::{combine, spmv, SpdSolver};
use crate::model::{classify_regime, resolve_initial_state, InitialSpec, PhysParams, RegimeKind, RegimeTag};
use crate::operators::{PressureSolver, SolverConfig};
use crate::sources::SourceSpec;

/// Constraint defect above which rough-data startup steps are taken.
pub const DEFECT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StartupPolicy {
    /// Backward Euler startup only for rough or inconsistent data.
    Auto,
    Never,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperOptions {
    pub dt: f64,
    pub t_end: f64,
    pub theta: f64,
    pub startup: StartupPolicy,
    /// Number of backward Euler steps when a startup is taken.
    pub startup_steps: usize,
    pub solver: SolverConfig,
}

impl StepperOptions {
    pub fn crank_nicolson(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            theta: 0.5,
            startup: StartupPolicy::Auto,
            startup_steps: 2,
            solver: SolverConfig::default(),
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_startup(mut self, startup: StartupPolicy) -> Self {
        self.startup = startup;
        self
    }

    pub fn num_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::Config("dt and t_end must be positive".into()));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [1/2, 1], got {}", self.theta)));
        }
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Config("t_end must be an integer multiple of dt".into()));
        }
        Ok(n as usize)
    }
}

/// Solution at one time level. `zeta` is the fluid content in nodal form.
/// `u_dot` is the collocated rate from the momentum balance when
/// `delta1 > 0` and a backward difference otherwise.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub p: DVector<f64>,
    pub u: DVector<f64>,
    pub u_dot: DVector<f64>,
    pub zeta: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: PhysParams,
    pub regime: RegimeTag,
    pub theta: f64,
    pub dt: f64,
    pub startup_steps: usize,
    pub states: Vec<State>,
    pub sources: SourceSpec,
    pub cg_iterations: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Theta used on the step ending at index `n`.
    pub fn step_theta(&self, n: usize) -> f64 {
        if n <= self.startup_steps {
            1.0
        } else {
            self.theta
        }
    }
}

struct StepOps {
    theta: f64,
    k_scale: f64,
    k_theta: Option<SpdSolver>,
    precond: PressureSolver,
    w_alpha: f64,
    extra: f64,
}

/// Stepper bound to one bundle, parameter set, source and step size.
pub struct TimeStepper<'a> {
    bundle: &'a OperatorBundle,
    params: PhysParams,
    sources: SourceSpec,
    config: SolverConfig,
    dt: f64,
    ops: Vec<StepOps>,
    pub cg_iterations: usize,
}

impl<'a> TimeStepper<'a> {
    pub fn new(
        bundle: &'a OperatorBundle,
        params: &PhysParams,
        sources: &SourceSpec,
        dt: f64,
        config: SolverConfig,
    ) -> Result<Self> {
        classify_regime(params)?;
        if params.lambda_star > 0.0 && params.delta2 > 0.0 {
            return Err(Error::InvalidRegime(
                "secondary consolidation is supported with the standard fluid content only (delta2 = 0)".into(),
            ));
        }
        bundle.check_compatible(params)?;
        Ok(Self {
            bundle,
            params: *params,
            sources: sources.clone(),
            config,
            dt,
            ops: Vec::new(),
            cg_iterations: 0,
        })
    }

    fn ops_index(&mut self, theta: f64) -> Result<usize> {
        if let Some(i) = self.ops.iter().position(|o| o.theta == theta) {
            return Ok(i);
        }
        let p = &self.params;
        let dt = self.dt;
        let b = self.bundle;
        let (k_scale, k_theta) = if p.lambda_star > 0.0 {
            let k = combine(&[(theta + p.delta1 / dt, b.ke()), (p.lambda_star / dt, b.kdivdiv())]);
            (1.0, Some(SpdSolver::new(&k, "theta-scheme momentum matrix")?))
        } else {
            (theta + p.delta1 / dt, None)
        };
        let mut w_alpha = if p.delta1 > 0.0 {
            p.alpha - p.delta2 / p.delta1
        } else {
            p.alpha
        };
        if w_alpha.abs() <= 1e-12 * p.alpha {
            w_alpha = 0.0;
        }
        let extra = if p.delta1 > 0.0 {
            p.delta2 * p.alpha / p.delta1
        } else {
            0.0
        };
        let m = p.p_modulus();
        let k_eff = (theta + p.delta1 / dt) * m + p.lambda_star / dt;
        let beta = (p.c0 + w_alpha * p.alpha * theta / k_eff + extra / m) / dt;
        let precond = PressureSolver::new(b, beta, theta)?;
        self.ops.push(StepOps {
            theta,
            k_scale,
            k_theta,
            precond,
            w_alpha,
            extra,
        });
        Ok(self.ops.len() - 1)
    }

    fn k_solve(&self, ops: &StepOps, x: &DVector<f64>) -> DVector<f64> {
        match &ops.k_theta {
            Some(k) => k.solve(x),
            None => self.bundle.ke_solve(x) / ops.k_scale,
        }
    }

    /// Advances one step with the given theta.
    pub fn step(&mut self, s: &State, theta: f64) -> Result<State> {
        let oi = self.ops_index(theta)?;
        let ops = &self.ops[oi];
        let b = self.bundle;
        let p = self.params;
        let (dt, a) = (self.dt, p.alpha);
        let t1 = s.t + dt;
        let f0 = self.sources.force_load(b, s.t);
        let f1 = self.sources.force_load(b, t1);
        let fth = &f1 * theta + &f0 * (1.0 - theta);
        let sth = self.sources.fluid_load(b, t1) * theta + self.sources.fluid_load(b, s.t) * (1.0 - theta);

        let mut f_u = fth;
        let ke_u = spmv(b.ke(), &s.u);
        f_u.axpy(p.delta1 / dt - (1.0 - theta), &ke_u, 1.0);
        if p.lambda_star > 0.0 {
            f_u.axpy(p.lambda_star / dt, &spmv(b.kdivdiv(), &s.u), 1.0);
        }
        f_u.axpy(a * (1.0 - theta), &spmv(b.ddiv_t(), &s.p), 1.0);

        let mut rhs = sth + spmv(b.mp(), &s.zeta) / dt;
        rhs.axpy(-(1.0 - theta), &spmv(b.ap(), &s.p), 1.0);
        if ops.w_alpha != 0.0 {
            rhs.axpy(-ops.w_alpha / dt, &spmv(b.ddiv(), &self.k_solve(ops, &f_u)), 1.0);
        }
        if ops.extra != 0.0 {
            rhs.axpy(-p.delta2 / (p.delta1 * dt), &spmv(b.ddiv(), &b.ke_solve(&f1)), 1.0);
        }

        let mut iters = 0usize;
        let apply = |x: &DVector<f64>| -> Result<DVector<f64>> {
            iters += 1;
            let mut y = spmv(b.ap(), x) * theta;
            if p.c0 != 0.0 {
                y.axpy(p.c0 / dt, &spmv(b.mp(), x), 1.0);
            }
            let dtx = spmv(b.ddiv_t(), x);
            if ops.w_alpha != 0.0 {
                y.axpy(
                    ops.w_alpha * a * theta / dt,
                    &spmv(b.ddiv(), &self.k_solve(ops, &dtx)),
                    1.0,
                );
            }
            if ops.extra != 0.0 {
                y.axpy(ops.extra / dt, &spmv(b.ddiv(), &b.ke_solve(&dtx)), 1.0);
            }
            Ok(y)
        };
        let p1 = ops
            .precond
            .solve(b, apply, &rhs, Some(&s.p), &self.config, "pressure Schur complement")?;
        self.cg_iterations += iters;

        let dtp = spmv(b.ddiv_t(), &p1);
        let mut ru = f_u;
        ru.axpy(a * theta, &dtp, 1.0);
        let u1 = self.k_solve(ops, &ru);
        // The collocated rate comes from the momentum balance, which only
        // isolates u_t without the consolidation term.
        let u_dot = if p.delta1 > 0.0 && p.lambda_star == 0.0 {
            let mut r = f1;
            r.axpy(a, &dtp, 1.0);
            (b.ke_solve(&r) - &u1) / p.delta1
        } else {
            (&u1 - &s.u) / dt
        };
        let mut w = &u1 * a;
        if p.delta2 != 0.0 {
            w.axpy(p.delta2, &u_dot, 1.0);
        }
        let mut zeta = b.mp_solve(&spmv(b.ddiv(), &w));
        b.remove_mean(&mut zeta);
        zeta.axpy(p.c0, &p1, 1.0);
        Ok(State {
            t: t1,
            p: p1,
            u: u1,
            u_dot,
            zeta,
        })
    }
}

/// Advances the full system from resolved initial data.
pub fn run(
    bundle: &OperatorBundle,
    params: &PhysParams,
    initial: &InitialSpec,
    sources: &SourceSpec,
    opts: &StepperOptions,
) -> Result<Trajectory> {
    let n_steps = opts.num_steps()?;
    let mut spec = initial.clone();
    spec.want_displacement = true;
    let init = resolve_initial_state(bundle, params, &spec, sources, &opts.solver)?;
    let regime = init.regime;
    let u = init.u.clone().expect("displacement was required").coeffs;
    let zeta = init
        .d
        .clone()
        .ok_or_else(|| Error::Underspecified("initial fluid content is undetermined".into()))?
        .coeffs;
    let u_dot = init
        .u_t
        .clone()
        .map(|v| v.coeffs)
        .unwrap_or_else(|| DVector::zeros(u.len()));
    let rough = match regime.kind {
        RegimeKind::ClassicalBiot => initial.p0.is_none(),
        RegimeKind::ViscoStandardContent => init.constraint_defect.is_some_and(|d| d > DEFECT_TOL),
        RegimeKind::SecondaryConsolidation => !regime.is_compressible(),
        RegimeKind::ViscoAdjustedContent => false,
    };
    let startup = match opts.startup {
        StartupPolicy::Never => 0,
        StartupPolicy::Always => opts.startup_steps,
        StartupPolicy::Auto if rough => opts.startup_steps,
        StartupPolicy::Auto => 0,
    }
    .min(n_steps);
    let s0 = State {
        t: 0.0,
        p: init.p.coeffs.clone(),
        u,
        u_dot,
        zeta,
    };
    run_from_state(bundle, params, s0, sources, opts, startup, n_steps, regime)
}

#[allow(clippy::too_many_arguments)]
fn run_from_state(
    bundle: &OperatorBundle,
    params: &PhysParams,
    s0: State,
    sources: &SourceSpec,
    opts: &StepperOptions,
    startup: usize,
    n_steps: usize,
    regime: RegimeTag,
) -> Result<Trajectory> {
    let mut stepper = TimeStepper::new(bundle, params, sources, opts.dt, opts.solver)?;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(s0);
    for k in 0..n_steps {
        let theta = if k < startup { 1.0 } else { opts.theta };
        let mut next = stepper.step(&states[k], theta)?;
        next.t = (k + 1) as f64 * opts.dt;
        states.push(next);
    }
    Ok(Trajectory {
        params: *params,
        regime,
        theta: opts.theta,
        dt: opts.dt,
        startup_steps: startup,
        states,
        sources: sources.clone(),
        cg_iterations: stepper.cg_iterations,
    })
}

/// Recovers the displacement from a pressure history through the momentum
/// balance `u + delta1 u_t = Ke^{-1}(F + alpha D^T p)`, integrating the
/// variation-of-constants formula with the trapezoid rule.
pub fn recover_u_variation_of_constants(
    bundle: &OperatorBundle,
    params: &PhysParams,
    times: &[f64],
    pressures: &[DVector<f64>],
    u0: &DVector<f64>,
    sources: &SourceSpec,
) -> Result<Vec<DVector<f64>>> {
    if params.delta1 <= 0.0 || params.lambda_star != 0.0 {
        return Err(Error::InvalidRegime(
            "displacement recovery needs delta1 > 0 and lambda_star = 0".into(),
        ));
    }
    if times.len() != pressures.len() || times.is_empty() {
        return Err(Error::Config(
            "times and pressures must be non-empty and of equal length".into(),
        ));
    }
    let d1 = params.delta1;
    let q = |k: usize| -> DVector<f64> {
        let mut r = sources.force_load(bundle, times[k]);
        r.axpy(params.alpha, &spmv(bundle.ddiv_t(), &pressures[k]), 1.0);
        bundle.ke_solve(&r) / d1
    };
    let mut out = Vec::with_capacity(times.len());
    out.push(u0.clone());
    let mut q_prev = q(0);
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        let decay = (-h / d1).exp();
        let q_k = q(k);
        let next = &out[k - 1] * decay + (&q_prev * decay + &q_k) * (0.5 * h);
        out.push(next);
        q_prev = q_k;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_forms, build_mesh, project_displacement, project_pressure};
    use crate::model::consistent_pressure;
    use std::f64::consts::PI;

    #[test]
    fn option_validation() {
        assert!(StepperOptions::crank_nicolson(0.1, 1.0).num_steps().unwrap() == 10);
        assert!(StepperOptions::crank_nicolson(0.3, 1.0).num_steps().is_err());
        assert!(StepperOptions::crank_nicolson(0.1, 1.0)
            .with_theta(0.3)
            .num_steps()
            .is_err());
    }

    #[test]
    fn mass_balance_holds_each_step() {
        let params = PhysParams::default().with_c0(0.2).with_delta1(0.3);
        let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
        let p0 = project_pressure(&b, &|x| (PI * x[0]).cos());
        let u0 = project_displacement(&b, &|x| [0.05 * (PI * x[0]).sin(), 0.0]);
        let opts = StepperOptions::crank_nicolson(0.01, 0.1);
        let tr = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(p0, u0),
            &SourceSpec::zero(),
            &opts,
        )
        .unwrap();
        for w in tr.states.windows(2) {
            let dz = spmv(b.mp(), &(&w[1].zeta - &w[0].zeta)) / opts.dt;
            let ap = spmv(b.ap(), &(&w[1].p * 0.5 + &w[0].p * 0.5));
            assert!((dz + ap).amax() < 1e-9);
        }
        assert_eq!(tr.states.len(), 11);
    }

    #[test]
    fn recovered_displacement_is_close_to_stepped() {
        let params = PhysParams::default().with_delta1(0.5);
        let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
        let cfg = SolverConfig::default();
        let u0 = project_displacement(&b, &|x| [0.1 * (PI * x[0]).sin(), 0.0]);
        let p0 = consistent_pressure(&b, &params, &u0, &SourceSpec::zero(), &cfg).unwrap();
        let opts = StepperOptions::crank_nicolson(0.01, 0.5);
        let tr = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(p0, u0.clone()),
            &SourceSpec::zero(),
            &opts,
        )
        .unwrap();
        assert_eq!(tr.startup_steps, 0);
        let ps: Vec<_> = tr.states.iter().map(|s| s.p.clone()).collect();
        let us =
            recover_u_variation_of_constants(&b, &params, &tr.times(), &ps, &u0.coeffs, &SourceSpec::zero()).unwrap();
        let last = tr.last();
        let rel = (&us[us.len() - 1] - &last.u).norm() / last.u.norm();
        assert!(rel < 1e-3, "rel = {rel}");
    }
}
