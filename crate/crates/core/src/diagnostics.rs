//! Numerical verdicts on the energy estimates: discrete energy ledgers,
//! residuals of the energy identities, decay-rate fits, the discrete
//! Poincaré–Korn constant and the parabolic smoothing rate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{FieldVec, OperatorBundle, Space};
use crate::error::{Error, Result};
use crate::linalg::dense::generalized_symmetric_eigen;
use crate::linalg::sparse::{bilinear, spmv, to_dense};
use crate::model::{classify_regime, InitialSpec, PhysParams, RegimeKind};
use crate::operators::{calb_dual, solve_calb_dual, SolverConfig};
use crate::reductions::{solve_reduced_biot, PressureTrajectory};
use crate::sources::SourceSpec;
use crate::timestepper::{StepperOptions, Trajectory};

/// One row of an [`EnergyLedger`]. Dissipation and work columns are
/// cumulative from `t = 0`; `residual` is the balance defect of the interval
/// ending at `t` (zero on the first row).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub elastic: f64,
    pub storage: f64,
    pub viscous: f64,
    pub darcy: f64,
    pub consolidation: f64,
    /// Dissipation of the time discretization, `(theta - 1/2)` times the
    /// energy of the increments; zero for Crank-Nicolson steps.
    pub numerical: f64,
    pub source_work: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerForm {
    /// Elastic energy of `u`; the standard fluid content.
    Standard,
    /// Elastic energy of `u + delta1 u_t`; the adjusted fluid content.
    Adjusted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub form: LedgerForm,
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn energy(&self, i: usize) -> f64 {
        self.rows[i].elastic + self.rows[i].storage
    }

    /// Largest interval balance defect relative to the initial energy (or
    /// to the largest energy, when the initial energy vanishes).
    pub fn max_relative_residual(&self) -> f64 {
        let e0 = self.energy(0);
        let scale = if e0 > 0.0 {
            e0
        } else {
            (0..self.rows.len()).map(|i| self.energy(i)).fold(0.0, f64::max)
        };
        let r = self.rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    }
}

fn states_check(bundle: &OperatorBundle, traj: &Trajectory) -> Result<()> {
    bundle.check_compatible(&traj.params)?;
    if traj.states.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    Ok(())
}

/// Discrete energy balance of a full trajectory. The interval terms use the
/// same theta-averages as the scheme and the `numerical` column carries the
/// damping of `theta > 1/2` steps, so the balance closes to solver tolerance.
pub fn energy_ledger(bundle: &OperatorBundle, traj: &Trajectory) -> Result<EnergyLedger> {
    states_check(bundle, traj)?;
    let p = &traj.params;
    let form = if p.delta2 > 0.0 {
        LedgerForm::Adjusted
    } else {
        LedgerForm::Standard
    };
    let src = &traj.sources;
    let energy_displacement = |s: &crate::timestepper::State| match form {
        LedgerForm::Standard => s.u.clone(),
        LedgerForm::Adjusted => &s.u + &s.u_dot * p.delta1,
    };
    let row0 = |s: &crate::timestepper::State, t: f64| {
        let w = energy_displacement(s);
        LedgerRow {
            t,
            elastic: 0.5 * bilinear(bundle.ke(), &w, &w),
            storage: 0.5 * p.c0 * bilinear(bundle.mp(), &s.p, &s.p),
            ..Default::default()
        }
    };
    let mut rows = vec![row0(&traj.states[0], traj.states[0].t)];
    for n in 0..traj.states.len() - 1 {
        let (s0, s1) = (&traj.states[n], &traj.states[n + 1]);
        let dt = s1.t - s0.t;
        let theta = traj.step_theta(n + 1);
        let pth = &s1.p * theta + &s0.p * (1.0 - theta);
        let sth = src.fluid_load(bundle, s1.t) * theta + src.fluid_load(bundle, s0.t) * (1.0 - theta);
        let prev = rows[n];
        let mut row = row0(s1, s1.t);
        row.darcy = prev.darcy + dt * bilinear(bundle.ap(), &pth, &pth);
        let fth = src.force_load(bundle, s1.t) * theta + src.force_load(bundle, s0.t) * (1.0 - theta);
        let mut work = dt * sth.dot(&pth);
        match form {
            LedgerForm::Standard => {
                let v = (&s1.u - &s0.u) / dt;
                row.viscous = prev.viscous + dt * p.delta1 * bilinear(bundle.ke(), &v, &v);
                row.consolidation = prev.consolidation + dt * p.lambda_star * bilinear(bundle.kdivdiv(), &v, &v);
                work += dt * fth.dot(&v);
            }
            LedgerForm::Adjusted => {
                let dw = energy_displacement(s1) - energy_displacement(s0);
                row.viscous = prev.viscous;
                row.consolidation = prev.consolidation;
                work += fth.dot(&dw);
            }
        }
        let dw = energy_displacement(s1) - energy_displacement(s0);
        let dp = &s1.p - &s0.p;
        row.numerical =
            prev.numerical + (theta - 0.5) * (bilinear(bundle.ke(), &dw, &dw) + p.c0 * bilinear(bundle.mp(), &dp, &dp));
        row.source_work = prev.source_work + work;
        let de = row.elastic + row.storage - prev.elastic - prev.storage;
        let ddiss = (row.viscous - prev.viscous)
            + (row.darcy - prev.darcy)
            + (row.consolidation - prev.consolidation)
            + (row.numerical - prev.numerical);
        row.residual = de + ddiss - work;
        rows.push(row);
    }
    Ok(EnergyLedger { form, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityKind {
    /// Energy balance of the standard fluid-content system.
    EnergyEst,
    /// Energy identity of the strongly damped wave equation.
    Eed1c0,
    /// Incompressible visco-elastic decay argument, first multiplier.
    FirstOne,
    /// Second multiplier (time-differentiated momentum tested with `u_t`).
    SecondOne,
    /// Equipartition inequality; reported as a signed slack.
    ThirdOne,
    /// Energy identity behind the adjusted-content estimate.
    Finest,
    /// Pressure identity of the reduced Biot equation tested with `p_t`.
    Mod2,
}

impl IdentityKind {
    pub const ALL: [IdentityKind; 7] = [
        IdentityKind::EnergyEst,
        IdentityKind::Eed1c0,
        IdentityKind::FirstOne,
        IdentityKind::SecondOne,
        IdentityKind::ThirdOne,
        IdentityKind::Finest,
        IdentityKind::Mod2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityKind::EnergyEst => "energyest",
            IdentityKind::Eed1c0 => "eed1c0",
            IdentityKind::FirstOne => "firstone",
            IdentityKind::SecondOne => "secondone",
            IdentityKind::ThirdOne => "thirdone",
            IdentityKind::Finest => "finest",
            IdentityKind::Mod2 => "mod2",
        }
    }

    pub fn is_inequality(self) -> bool {
        self == IdentityKind::ThirdOne
    }

    /// Whether the identity applies to trajectories with these parameters
    /// and sources.
    pub fn applies_to(self, params: &PhysParams, sources: &SourceSpec) -> bool {
        let p = params;
        let plain_visco = p.delta1 > 0.0 && p.delta2 == 0.0 && p.lambda_star == 0.0;
        match self {
            IdentityKind::EnergyEst => p.delta2 == 0.0,
            IdentityKind::Eed1c0 => plain_visco && p.c0 > 0.0,
            IdentityKind::FirstOne | IdentityKind::SecondOne | IdentityKind::ThirdOne => {
                plain_visco && p.c0 == 0.0 && sources.is_zero()
            }
            IdentityKind::Finest => p.delta2 > 0.0 && p.lambda_star == 0.0,
            IdentityKind::Mod2 => p.delta1 == 0.0 && p.lambda_star == 0.0,
        }
    }
}

impl std::fmt::Display for IdentityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for IdentityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        IdentityKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown identity '{s}'")))
    }
}

/// Residual series of one identity. For identities, `values[n]` is the
/// defect of the identity integrated over `[0, times[n]]` with trapezoid
/// quadrature; for inequalities it is the signed slack (`<= 0` when the
/// inequality holds) at interval midpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentitySeries {
    pub kind: IdentityKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Magnitude of the terms in the identity, for relative comparisons.
    pub scale: f64,
}

impl IdentitySeries {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn max_relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_abs() / self.scale
        } else {
            self.max_abs()
        }
    }

    /// Largest positive slack relative to the scale (inequalities only).
    pub fn max_relative_slack(&self) -> f64 {
        let m = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.scale > 0.0 {
            m / self.scale
        } else {
            m
        }
    }
}

/// Cumulative defect of `E(t) - E(0) + int_0^t g` with trapezoid quadrature.
fn integrated_defect(times: &[f64], energy: &[f64], rate: &[f64]) -> (Vec<f64>, f64) {
    let mut out = vec![0.0];
    let mut integral = 0.0;
    let mut scale = energy[0].abs();
    for n in 1..times.len() {
        integral += 0.5 * (times[n] - times[n - 1]) * (rate[n] + rate[n - 1]);
        out.push(energy[n] - energy[0] + integral);
        scale = scale.max(energy[n].abs()).max(integral.abs());
    }
    (out, scale)
}

fn dual_rate_source(
    bundle: &OperatorBundle,
    params: &PhysParams,
    sources: &SourceSpec,
    t: f64,
) -> Result<DVector<f64>> {
    let mut s = sources.fluid_load(bundle, t);
    if sources.force.is_some() {
        let ft = sources.force_rate_load(bundle, t)?;
        s.axpy(-params.alpha, &spmv(bundle.ddiv(), &bundle.ke_solve(&ft)), 1.0);
    }
    Ok(s)
}

/// Residual series of one identity along a full trajectory.
pub fn identity_residual(bundle: &OperatorBundle, traj: &Trajectory, which: IdentityKind) -> Result<IdentitySeries> {
    states_check(bundle, traj)?;
    let p = traj.params;
    let src = &traj.sources;
    if !which.applies_to(&p, src) {
        return Err(Error::RegimeMismatch(format!(
            "{which} does not apply to {} with {src:?}",
            traj.regime
        )));
    }
    let times = traj.times();
    let st = &traj.states;
    let ke = bundle.ke();
    let ap = bundle.ap();
    let a_form = |x: &DVector<f64>| bilinear(ap, x, x);
    let (values, scale, times) = match which {
        IdentityKind::EnergyEst => {
            let energy: Vec<f64> = st
                .iter()
                .map(|s| 0.5 * bilinear(ke, &s.u, &s.u) + 0.5 * p.c0 * bilinear(bundle.mp(), &s.p, &s.p))
                .collect();
            if p.delta1 > 0.0 && p.lambda_star == 0.0 {
                let rate: Vec<f64> = st
                    .iter()
                    .map(|s| {
                        p.delta1 * bilinear(ke, &s.u_dot, &s.u_dot) + a_form(&s.p)
                            - src.force_load(bundle, s.t).dot(&s.u_dot)
                            - src.fluid_load(bundle, s.t).dot(&s.p)
                    })
                    .collect();
                let (v, sc) = integrated_defect(&times, &energy, &rate);
                (v, sc, times)
            } else {
                // No collocated velocity: velocity terms by the midpoint
                // rule, pressure terms by the trapezoid rule.
                let mut out = vec![0.0];
                let mut integral = 0.0;
                let mut scale = energy[0].abs();
                for n in 1..st.len() {
                    let (s0, s1) = (&st[n - 1], &st[n]);
                    let dt = s1.t - s0.t;
                    let v = (&s1.u - &s0.u) / dt;
                    let fmid = (src.force_load(bundle, s0.t) + src.force_load(bundle, s1.t)) * 0.5;
                    let pres = |s: &crate::timestepper::State| a_form(&s.p) - src.fluid_load(bundle, s.t).dot(&s.p);
                    integral += dt
                        * (p.delta1 * bilinear(ke, &v, &v) + p.lambda_star * bilinear(bundle.kdivdiv(), &v, &v)
                            - fmid.dot(&v)
                            + 0.5 * (pres(s0) + pres(s1)));
                    out.push(energy[n] - energy[0] + integral);
                    scale = scale.max(energy[n].abs()).max(integral.abs());
                }
                (out, scale, times)
            }
        }
        IdentityKind::Eed1c0 => {
            let d1 = p.delta1;
            let mut energy = Vec::with_capacity(st.len());
            let mut rate = Vec::with_capacity(st.len());
            for s in st {
                // Nodal pressure rate from the mass balance.
                let mut r = src.fluid_load(bundle, s.t) - spmv(ap, &s.p);
                r.axpy(-p.alpha, &spmv(bundle.ddiv(), &s.u_dot), 1.0);
                let mut pt = bundle.mp_solve(&r) / p.c0;
                bundle.remove_mean(&mut pt);
                let mut shat = dual_rate_source(bundle, &p, src, s.t)? / d1;
                if src.fluid.is_some() {
                    shat += src.fluid_rate_load(bundle, s.t)?;
                }
                energy.push(0.5 * (p.c0 * bilinear(bundle.mp(), &pt, &pt) + a_form(&s.p) / d1));
                rate.push(a_form(&pt) + calb_dual(bundle, &p, &pt).dot(&pt) / d1 - shat.dot(&pt));
            }
            let (v, sc) = integrated_defect(&times, &energy, &rate);
            (v, sc, times)
        }
        IdentityKind::FirstOne => {
            let energy: Vec<f64> = st.iter().map(|s| 0.5 * bilinear(ke, &s.u, &s.u)).collect();
            let rate: Vec<f64> = st
                .iter()
                .map(|s| p.delta1 * bilinear(ke, &s.u_dot, &s.u_dot) + a_form(&s.p))
                .collect();
            let (v, sc) = integrated_defect(&times, &energy, &rate);
            (v, sc, times)
        }
        IdentityKind::SecondOne => {
            let energy: Vec<f64> = st
                .iter()
                .map(|s| 0.5 * p.delta1 * bilinear(ke, &s.u_dot, &s.u_dot) + 0.5 * a_form(&s.p))
                .collect();
            let rate: Vec<f64> = st.iter().map(|s| bilinear(ke, &s.u_dot, &s.u_dot)).collect();
            let (v, sc) = integrated_defect(&times, &energy, &rate);
            (v, sc, times)
        }
        IdentityKind::ThirdOne => {
            let cp = poincare_korn_constant(bundle)?;
            let w = p.kappa / (p.alpha.powi(2) * cp);
            let mut vals = Vec::with_capacity(st.len() - 1);
            let mut mids = Vec::with_capacity(st.len() - 1);
            let mut scale = 0.0f64;
            for n in 1..st.len() {
                let (s0, s1) = (&st[n - 1], &st[n]);
                let um = (&s0.u + &s1.u) * 0.5;
                let vm = (&s0.u_dot + &s1.u_dot) * 0.5;
                let pm = (&s0.p + &s1.p) * 0.5;
                let lhs = 0.5 * w * bilinear(ke, &um, &um) + p.delta1 * w * bilinear(ke, &um, &vm);
                let rhs = 0.5 * a_form(&pm);
                scale = scale.max(rhs).max(lhs.abs());
                vals.push(lhs - rhs);
                mids.push(0.5 * (s0.t + s1.t));
            }
            (vals, scale, mids)
        }
        IdentityKind::Finest => {
            let mut energy = Vec::with_capacity(st.len());
            let mut rate = Vec::with_capacity(st.len());
            let mut boundary = Vec::with_capacity(st.len());
            for s in st {
                let w = &s.u + &s.u_dot * p.delta1;
                energy.push(0.5 * bilinear(ke, &w, &w) + 0.5 * p.c0 * bilinear(bundle.mp(), &s.p, &s.p));
                let ft = src.force_rate_load(bundle, s.t)?;
                rate.push(a_form(&s.p) + ft.dot(&w) - src.fluid_load(bundle, s.t).dot(&s.p));
                boundary.push(src.force_load(bundle, s.t).dot(&w));
            }
            let (mut v, sc) = integrated_defect(&times, &energy, &rate);
            for (n, x) in v.iter_mut().enumerate() {
                *x -= boundary[n] - boundary[0];
            }
            (v, sc, times)
        }
        IdentityKind::Mod2 => {
            let mut energy = Vec::with_capacity(st.len());
            let mut rate = Vec::with_capacity(st.len());
            for s in st {
                let stilde = dual_rate_source(bundle, &p, src, s.t)?;
                let r = &stilde - spmv(ap, &s.p);
                let pt = solve_calb_dual(bundle, &p, &r, &SolverConfig::default())?;
                energy.push(0.5 * a_form(&s.p));
                rate.push(r.dot(&pt) - stilde.dot(&pt));
            }
            let (v, sc) = integrated_defect(&times, &energy, &rate);
            (v, sc, times)
        }
    };
    Ok(IdentitySeries {
        kind: which,
        times,
        values,
        scale,
    })
}

/// Largest `C` with `||u||_{L2}^2 <= C e(u, u)` on the discrete displacement
/// space, by power iteration on `Ke^{-1} Mu`.
pub fn poincare_korn_constant(bundle: &OperatorBundle) -> Result<f64> {
    let n = bundle.num_displacement_dofs();
    let mut x = DVector::from_element(n, 1.0);
    let mut last = 0.0;
    for _ in 0..10_000 {
        let y = bundle.ke_solve(&spmv(bundle.mu(), &x));
        let rq = bilinear(bundle.mu(), &x, &y) / bilinear(bundle.mu(), &x, &x);
        x = &y / y.norm();
        if (rq - last).abs() <= 1e-15 * rq {
            return Ok(rq);
        }
        last = rq;
    }
    Err(Error::EigenFailure(
        "power iteration for the Poincaré–Korn constant did not converge".into(),
    ))
}

/// Admissible decay rate `0.99 min{1, kappa / (delta1 kappa + alpha^2 C_P)}`
/// for the incompressible visco-elastic system.
pub fn gamma_bound(params: &PhysParams, c_p: f64) -> Result<f64> {
    let regime = classify_regime(params)?;
    if regime.kind != RegimeKind::ViscoStandardContent || params.c0 != 0.0 {
        return Err(Error::InvalidRegime(format!(
            "the decay bound needs c0 = 0, delta1 > 0, delta2 = 0 (got {regime})"
        )));
    }
    let k = params.kappa;
    Ok(0.99 * (k / (params.delta1 * k + params.alpha.powi(2) * c_p)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GronwallForm {
    /// Weighted functional with `(1 + delta1 kappa / (alpha^2 C_P))` on the
    /// elastic term.
    Weighted,
    /// Unweighted variant.
    Plain,
}

/// Gronwall functional along an incompressible visco-elastic trajectory.
pub fn gronwall_functional(
    bundle: &OperatorBundle,
    traj: &Trajectory,
    c_p: f64,
    form: GronwallForm,
) -> Result<Vec<f64>> {
    states_check(bundle, traj)?;
    let p = traj.params;
    gamma_bound(&p, c_p)?;
    let wu = match form {
        GronwallForm::Weighted => 1.0 + p.delta1 * p.kappa / (p.alpha.powi(2) * c_p),
        GronwallForm::Plain => 1.0,
    };
    Ok(traj
        .states
        .iter()
        .map(|s| {
            0.5 * (wu * bilinear(bundle.ke(), &s.u, &s.u)
                + p.delta1 * bilinear(bundle.ke(), &s.u_dot, &s.u_dot)
                + bilinear(bundle.ap(), &s.p, &s.p))
        })
        .collect())
}

/// `(a(p, p) + c0 ||p_t||^2)^{1/2}` along a damped-wave trajectory.
pub fn y_norm_series(bundle: &OperatorBundle, params: &PhysParams, traj: &PressureTrajectory) -> Result<Vec<f64>> {
    let pt = traj
        .p_t
        .as_ref()
        .ok_or_else(|| Error::Config("the Y-norm needs a trajectory carrying p_t".into()))?;
    Ok(traj
        .p
        .iter()
        .zip(pt)
        .map(|(p, r)| {
            (bilinear(bundle.ap(), p, p) + params.c0 * bilinear(bundle.mp(), r, r))
                .max(0.0)
                .sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma_fit: f64,
    pub window: (f64, f64),
    pub rsquared: f64,
    pub quantity: String,
}

/// Least-squares exponential rate of a positive series over `window`
/// (default: the whole series), skipping the first tenth of the window.
pub fn fit_decay_rate(times: &[f64], values: &[f64], window: Option<(f64, f64)>, quantity: &str) -> Result<DecayFit> {
    let (t0, t1) = window.unwrap_or((times[0], *times.last().unwrap_or(&times[0])));
    let start = t0 + 0.1 * (t1 - t0);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= start - 1e-12 * t1.abs() && **t <= t1 + 1e-12 * t1.abs())
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 2 || pts.iter().any(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveSeries);
    }
    let n = pts.len() as f64;
    let (mt, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, v)| (a + t / n, b + v.ln() / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, v) in &pts {
        let (dx, dy) = (t - mt, v.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // A flat series (up to rounding of the logs) has no rate.
    let flat = syy <= 1e-24 * n * my.abs().max(1.0).powi(2);
    let slope = if flat { 0.0 } else { sxy / sxx };
    let rsquared = if !flat { (sxy * sxy / (sxx * syy)).min(1.0) } else { 0.0 };
    Ok(DecayFit {
        gamma_fit: -slope,
        window: (t0, t1),
        rsquared,
        quantity: quantity.into(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingReport {
    /// `(T, ||A p(T)||_{L2})` pairs.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    /// `sup_T T ||A p(T)|| / ||d0||`.
    pub sup_ratio: f64,
    /// Participation ratio of the data's spectral content.
    pub participation: f64,
}

/// Fraction of `||A p(T)||^2` carried by the top half of the discrete
/// spectrum above which a time is considered unresolved.
const UNRESOLVED_FRACTION: f64 = 1e-2;
/// Minimum number of effectively participating modes.
const MIN_PARTICIPATION: f64 = 4.0;

/// Log-log slope of `||A p(T)||` against `T` for the reduced Biot equation
/// started from content `d0`, one theta run of `steps` steps per `T`.
pub fn smoothing_rate_check(
    bundle: &OperatorBundle,
    params: &PhysParams,
    d0: &FieldVec,
    t_list: &[f64],
    steps: usize,
    config: &SolverConfig,
) -> Result<SmoothingReport> {
    let regime = classify_regime(params)?;
    if regime.kind != RegimeKind::ClassicalBiot {
        return Err(Error::InvalidRegime(format!(
            "the smoothing check needs the classical system (got {regime})"
        )));
    }
    let d = d0.expect_space(Space::PressureZeroMean)?;
    let (tmin, tmax) = t_list
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), t| (a.min(*t), b.max(*t)));
    if t_list.len() < 3 || !(tmin > 0.0) || (tmax / tmin).log10() < 1.5 {
        return Err(Error::UnresolvedRange(
            "the time list must hold at least 3 positive times spanning 1.5 decades".into(),
        ));
    }
    let np = bundle.num_pressure_dofs();
    if np > config.dense_threshold {
        return Err(Error::DenseModeUnavailable {
            size: np,
            threshold: config.dense_threshold,
        });
    }
    // Spectral content of d0 in the eigenbasis of (A, 𝓑) on zero-mean fields.
    let ap = to_dense(bundle.ap());
    let mut calb = DMatrix::zeros(np, np);
    for j in 0..np {
        let mut e = DVector::zeros(np);
        e[j] = 1.0;
        calb.set_column(j, &calb_dual(bundle, params, &e));
    }
    let m = bundle.meanvec() / bundle.domain_measure().sqrt();
    let shift = 1.0 + calb.amax();
    let calb = 0.5 * (&calb + calb.transpose()) + &m * m.transpose() * shift;
    let eig = generalized_symmetric_eigen(&ap, &calb)?;
    let dual = spmv(bundle.mp(), d);
    let coeffs = eig.vectors.transpose() * &dual;
    // The constant mode carries eigenvalue 0; skip it.
    let modes: Vec<(f64, f64)> = eig
        .values
        .iter()
        .zip(coeffs.iter())
        .filter(|(r, _)| **r > 1e-10 * eig.values[np - 1])
        .map(|(r, c)| (*r, *c))
        .collect();
    let (s1, s2) = modes
        .iter()
        .fold((0.0, 0.0), |(a, b), (_, c)| (a + c * c, b + c.powi(4)));
    let participation = if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 };
    if participation < MIN_PARTICIPATION {
        return Err(Error::NarrowbandData(format!(
            "the data excite about {participation:.1} modes; a power-law regime needs broadband content"
        )));
    }
    let half = modes.len() / 2;
    let weight = |t: f64, range: &[(f64, f64)]| {
        range
            .iter()
            .map(|(r, c)| (r * c).powi(2) * (-2.0 * r * t).exp())
            .sum::<f64>()
    };
    let frac = weight(tmin, &modes[half..]) / weight(tmin, &modes);
    if frac > UNRESOLVED_FRACTION {
        return Err(Error::UnresolvedRange(format!(
            "at T = {tmin:e}, {:.1}% of ||Ap||^2 sits in the upper half of the discrete spectrum",
            100.0 * frac
        )));
    }

    let d0_norm = bilinear(bundle.mp(), d, d).sqrt();
    let spec = InitialSpec::content(d0.clone());
    let points: Vec<(f64, f64)> = t_list
        .par_iter()
        .map(|&t| -> Result<(f64, f64)> {
            let mut opts = StepperOptions::crank_nicolson(t / steps as f64, t);
            opts.solver = *config;
            let tr = solve_reduced_biot(bundle, params, &spec, &SourceSpec::zero(), &opts)?;
            let p = tr.p.last().unwrap();
            let ap_p = bundle.mp_solve(&spmv(bundle.ap(), p));
            Ok((t, bilinear(bundle.mp(), &ap_p, &ap_p).sqrt()))
        })
        .collect::<Result<_>>()?;
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, v)| (a + t.ln() / n, b + v.ln() / n));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), (t, v)| {
        let dx = t.ln() - mx;
        (a + dx * (v.ln() - my), b + dx * dx)
    });
    let sup_ratio = points.iter().map(|(t, v)| t * v / d0_norm).fold(0.0, f64::max);
    Ok(SmoothingReport {
        points,
        slope: sxy / sxx,
        sup_ratio,
        participation,
    })
}

/// `||A p||_{L^2(0,T;L^2)}` by the trapezoid rule.
pub fn ap_l2_time_norm(bundle: &OperatorBundle, times: &[f64], pressures: &[DVector<f64>]) -> f64 {
    let sq: Vec<f64> = pressures
        .iter()
        .map(|p| {
            let x = bundle.mp_solve(&spmv(bundle.ap(), p));
            bilinear(bundle.mp(), &x, &x)
        })
        .collect();
    let mut acc = 0.0;
    for n in 1..times.len() {
        acc += 0.5 * (times[n] - times[n - 1]) * (sq[n] + sq[n - 1]);
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_forms, build_mesh, project_displacement, project_pressure};
    use crate::model::consistent_pressure;
    use crate::oracle1d::discrete_mode;
    use crate::timestepper::run;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = fit_decay_rate(&t, &v, None, "synthetic").unwrap();
        assert!((fit.gamma_fit - 2.0).abs() < 1e-10);
        assert!(fit.rsquared > 1.0 - 1e-12);
        let c = vec![3.0; 50];
        let fit = fit_decay_rate(&t, &c, None, "constant").unwrap();
        assert_eq!(fit.gamma_fit, 0.0);
        assert_eq!(fit.rsquared, 0.0);
        let mut bad = v.clone();
        bad[30] = 0.0;
        assert!(matches!(
            fit_decay_rate(&t, &bad, None, "x"),
            Err(Error::NonPositiveSeries)
        ));
    }

    #[test]
    fn gamma_bound_formula() {
        let p = PhysParams::default().with_delta1(0.5);
        assert!((gamma_bound(&p, 0.03377).unwrap() - 0.99).abs() < 1e-14);
        let big = PhysParams::default().with_delta1(100.0);
        assert!((gamma_bound(&big, 0.03377).unwrap() - 0.99 / (100.0 + 0.03377)).abs() < 1e-12);
        assert!(matches!(
            gamma_bound(&PhysParams::default(), 0.03),
            Err(Error::InvalidRegime(_))
        ));
    }

    #[test]
    fn poincare_korn_scaling_and_accuracy() {
        let p = PhysParams::default();
        let mesh = build_mesh(1, 64).unwrap();
        let c = poincare_korn_constant(&assemble_forms(&mesh, &p).unwrap()).unwrap();
        let exact = 1.0 / (3.0 * PI * PI);
        assert!((c - exact).abs() < 0.02 * exact);
        let c2 = poincare_korn_constant(&assemble_forms(&mesh, &p.with_lame(2.0, 2.0)).unwrap()).unwrap();
        assert!((c2 - 0.5 * c).abs() < 1e-10 * c);
    }

    #[test]
    fn ledger_closes_for_crank_nicolson() {
        let params = PhysParams::default().with_c0(0.2).with_delta1(0.3);
        let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
        let p0 = project_pressure(&b, &|x| (PI * x[0]).cos());
        let u0 = project_displacement(&b, &|x| [0.05 * (PI * x[0]).sin(), 0.0]);
        let opts = StepperOptions::crank_nicolson(0.01, 0.2);
        let tr = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(p0, u0),
            &SourceSpec::zero(),
            &opts,
        )
        .unwrap();
        let l = energy_ledger(&b, &tr).unwrap();
        assert!(l.max_relative_residual() < 1e-8, "{}", l.max_relative_residual());
        for w in l.rows.windows(2) {
            assert!(w[1].viscous >= w[0].viscous && w[1].darcy >= w[0].darcy);
        }
    }

    #[test]
    fn ledger_closes_for_backward_euler_in_every_regime() {
        let sources = SourceSpec::zero()
            .with_fluid(
                Arc::new(|x, t| (2.0 * PI * x[0]).cos() * (1.0 + t)),
                Some(Arc::new(|x, _| (2.0 * PI * x[0]).cos())),
            )
            .with_force(
                Arc::new(|x, t| [x[0] * (1.0 - x[0]) * (1.0 + t), 0.0]),
                Some(Arc::new(|x, _| [x[0] * (1.0 - x[0]), 0.0])),
            );
        let cases = [
            PhysParams::default(),
            PhysParams::default().with_c0(0.5),
            PhysParams::default().with_c0(0.2).with_delta1(0.3),
            PhysParams::default()
                .with_c0(0.2)
                .with_delta1(0.3)
                .with_adjusted_content(),
            PhysParams::default().with_lambda_star(1.0),
        ];
        for params in cases {
            let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
            let p0 = project_pressure(&b, &|x| (PI * x[0]).cos());
            let u0 = project_displacement(&b, &|x| [0.05 * (PI * x[0]).sin(), 0.0]);
            let opts = StepperOptions::crank_nicolson(0.01, 0.1).with_theta(1.0);
            let spec = if params.delta1 == 0.0 && params.lambda_star == 0.0 {
                InitialSpec::pressure(p0)
            } else {
                InitialSpec::pressure_displacement(p0, u0)
            };
            let tr = run(&b, &params, &spec, &sources, &opts).unwrap();
            let l = energy_ledger(&b, &tr).unwrap();
            assert!(
                l.max_relative_residual() < 1e-8,
                "{params:?}: {}",
                l.max_relative_residual()
            );
            assert!(l.rows.last().unwrap().numerical > 0.0);
        }
    }

    #[test]
    fn zero_trajectory_gives_zero_ledger_and_residuals() {
        let params = PhysParams::default().with_delta1(0.5);
        let b = assemble_forms(&build_mesh(1, 8).unwrap(), &params).unwrap();
        let zero = FieldVec::pressure(DVector::zeros(b.num_pressure_dofs()));
        let opts = StepperOptions::crank_nicolson(0.05, 0.2);
        let zu = FieldVec::displacement(DVector::zeros(b.num_displacement_dofs()));
        let tr = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(zero, zu),
            &SourceSpec::zero(),
            &opts,
        )
        .unwrap();
        let l = energy_ledger(&b, &tr).unwrap();
        assert!(l
            .rows
            .iter()
            .all(|r| r.elastic == 0.0 && r.residual == 0.0 && r.darcy == 0.0));
        for k in [IdentityKind::EnergyEst, IdentityKind::FirstOne, IdentityKind::SecondOne] {
            assert_eq!(identity_residual(&b, &tr, k).unwrap().max_abs(), 0.0);
        }
        assert!(matches!(
            identity_residual(&b, &tr, IdentityKind::Eed1c0),
            Err(Error::RegimeMismatch(_))
        ));
    }

    #[test]
    fn firstone_converges_at_second_order() {
        let params = PhysParams::default().with_delta1(0.5);
        let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
        let cfg = SolverConfig::default();
        let (_, u0) = discrete_mode(&b, 1, &cfg).unwrap();
        let p0 = consistent_pressure(&b, &params, &u0, &SourceSpec::zero(), &cfg).unwrap();
        let spec = InitialSpec::pressure_displacement(p0, u0);
        let err = |dt: f64| {
            let tr = run(
                &b,
                &params,
                &spec,
                &SourceSpec::zero(),
                &StepperOptions::crank_nicolson(dt, 0.1),
            )
            .unwrap();
            let third = identity_residual(&b, &tr, IdentityKind::ThirdOne).unwrap();
            assert!(third.max_relative_slack() <= 1e-10);
            identity_residual(&b, &tr, IdentityKind::FirstOne).unwrap().max_abs()
        };
        let (e1, e2) = (err(0.01), err(0.005));
        let order = (e1 / e2).log2();
        assert!((1.8..2.2).contains(&order), "order {order}");
    }

    #[test]
    fn narrowband_data_is_rejected() {
        let params = PhysParams::default();
        let b = assemble_forms(&build_mesh(1, 32).unwrap(), &params).unwrap();
        let d0 = project_pressure(&b, &|x| (PI * x[0]).cos());
        let r = smoothing_rate_check(&b, &params, &d0, &[1e-4, 1e-3, 1e-2], 50, &SolverConfig::default());
        assert!(matches!(r, Err(Error::NarrowbandData(_))));
    }
}
