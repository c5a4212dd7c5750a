//! Acceptance criteria as executable checks with measured values.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    ap_l2_time_norm, energy_ledger, fit_decay_rate, gamma_bound, gronwall_functional, identity_residual,
    poincare_korn_constant, smoothing_rate_check, y_norm_series, GronwallForm, IdentityKind,
};
use crate::discretization::{
    assemble_forms, build_mesh, project_displacement, project_pressure, FieldVec, OperatorBundle,
};
use crate::error::{Error, Result};
use crate::fields::Shape;
use crate::linalg::sparse::{bilinear, spmv};
use crate::model::{consistent_pressure, resolve_initial_state, InitialSpec, PhysParams};
use crate::operators::{
    apply_b, calb_dual, dense_b, property_report_from_dense, solve_calb_dual, zero_mean_basis, SolverConfig,
};
use crate::oracle1d::{discrete_mode, oracle_field_solution, ModalExpansion};
use crate::reductions::{
    build_first_order_generator, slowest_mode, solve_reduced_biot, solve_strongly_damped_wave, spectrum_report,
};
use crate::sources::SourceSpec;
use crate::timestepper::{recover_u_variation_of_constants, run, StepperOptions};

/// Deliberate defects used to check that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Perturbs one off-diagonal entry of the dense `B` before the
    /// operator-property checks.
    BreakBSymmetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl Level {
    pub fn criteria(self) -> &'static [u8] {
        match self {
            Level::Quick => &[1, 2, 3, 8, 12],
            Level::Full => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition; `reported` for values without one.
    pub threshold: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    pub notes: Vec<String>,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl CriterionReport {
    pub fn summary_line(&self) -> String {
        let worst = self
            .measurements
            .iter()
            .find(|m| !m.passed)
            .map(|m| format!("; failed {} = {:.3e} (need {})", m.name, m.value, m.threshold))
            .unwrap_or_default();
        format!(
            "criterion {:>2} [{}] {} ({:.1} s){}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            worst
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub level: Level,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

#[derive(Default)]
struct Recorder {
    m: Vec<Measurement>,
    notes: Vec<String>,
}

impl Recorder {
    fn push(&mut self, name: impl Into<String>, value: f64, threshold: String, passed: bool) {
        self.m.push(Measurement {
            name: name.into(),
            value,
            threshold,
            passed,
        });
    }
    fn le(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.push(name, value, format!("<= {bound:e}"), value <= bound);
    }
    fn ge(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.push(name, value, format!(">= {bound:e}"), value >= bound);
    }
    fn within(&mut self, name: impl Into<String>, value: f64, lo: f64, hi: f64) {
        self.push(name, value, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&value));
    }
    fn check(&mut self, name: impl Into<String>, ok: bool, what: &str) {
        self.push(name, if ok { 1.0 } else { 0.0 }, what.into(), ok);
    }
    fn info(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, value, "reported".into(), value.is_finite());
    }
}

const TITLES: [(&str, f64); 12] = [
    ("operator properties of B and 𝓑", 10.0),
    ("1D identity B = I/(λ+2μ)", 10.0),
    ("full solver against the 1D modal oracle", 30.0),
    ("adjusted content: full solve equals reduced Biot", 20.0),
    ("energy identities converge at second order", 60.0),
    ("damped-wave generator spectrum and decay", 60.0),
    ("incompressible visco-elastic decay bound", 30.0),
    ("discrete Poincaré–Korn constant", 5.0),
    ("parabolic smoothing rate", 60.0),
    ("secondary consolidation dissipation", 30.0),
    ("displacement by variation of constants", 30.0),
    ("initial-condition table", 5.0),
];

pub fn criterion_title(id: u8) -> &'static str {
    TITLES[(id - 1) as usize].0
}

/// Runs one criterion. Solver errors become a failed measurement.
pub fn run_criterion(id: u8, opts: &VerifyOptions) -> CriterionReport {
    assert!((1..=12).contains(&id), "criteria are numbered 1 to 12");
    let start = Instant::now();
    let mut rec = Recorder::default();
    let outcome = match id {
        1 => c1_operator_properties(&mut rec, opts),
        2 => c2_b_identity(&mut rec),
        3 => c3_oracle(&mut rec),
        4 => c4_adjusted_equivalence(&mut rec),
        5 => c5_identities(&mut rec),
        6 => c6_spectrum(&mut rec),
        7 => c7_ode_decay(&mut rec),
        8 => c8_poincare_korn(&mut rec),
        9 => c9_smoothing(&mut rec),
        10 => c10_secondary(&mut rec),
        11 => c11_variation_of_constants(&mut rec),
        _ => c12_initial_table(&mut rec),
    };
    if let Err(e) = outcome {
        rec.check("completed", false, "no solver error");
        rec.notes.push(format!("error: {e}"));
    }
    let (title, budget) = TITLES[(id - 1) as usize];
    let seconds = start.elapsed().as_secs_f64();
    rec.le("runtime_s", seconds, budget);
    CriterionReport {
        id,
        title: title.into(),
        passed: rec.m.iter().all(|m| m.passed),
        measurements: rec.m,
        notes: rec.notes,
        seconds,
        budget_seconds: budget,
    }
}

pub fn run_suite(level: Level, opts: &VerifyOptions) -> SuiteReport {
    let criteria: Vec<CriterionReport> = level.criteria().iter().map(|&id| run_criterion(id, opts)).collect();
    SuiteReport {
        level,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

fn bundle_1d(n: usize, params: &PhysParams) -> Result<OperatorBundle> {
    assemble_forms(&build_mesh(1, n)?, params)
}

fn l2p(b: &OperatorBundle, v: &DVector<f64>) -> f64 {
    bilinear(b.mp(), v, v).max(0.0).sqrt()
}

fn l2u(b: &OperatorBundle, v: &DVector<f64>) -> f64 {
    bilinear(b.mu(), v, v).max(0.0).sqrt()
}

fn visco(c0: f64, d1: f64) -> PhysParams {
    PhysParams::default().with_c0(c0).with_delta1(d1)
}

fn c1_operator_properties(rec: &mut Recorder, opts: &VerifyOptions) -> Result<()> {
    let params = PhysParams::default();
    let cfg = SolverConfig::default();
    for (dim, n) in [(1usize, 128usize), (2, 24)] {
        let b = assemble_forms(&build_mesh(dim, n)?, &params)?;
        let mut bd = dense_b(&b, &cfg)?;
        if opts.fault == Some(Fault::BreakBSymmetry) {
            let s = 1e-3 * bd.amax();
            bd[(0, 1)] += s;
            rec.notes.push("fault injected: B(0,1) perturbed".into());
        }
        let basis = zero_mean_basis(&b, &cfg)?;
        let rep = property_report_from_dense(&params, &bd, &basis)?;
        let tag = format!("{dim}d_n{n}");
        rec.le(format!("{tag}.b_symmetry_defect"), rep.b_symmetry_defect, 1e-10);
        rec.ge(format!("{tag}.b_ritz_min"), rep.b_ritz_min, -1e-10);
        rec.info(format!("{tag}.calb_condition"), rep.calb_condition);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = DVector::from_fn(b.num_pressure_dofs(), |_, _| rng.random::<f64>() - 0.5);
        b.remove_mean(&mut x);
        let rhs = spmv(b.mp(), &x);
        let sol = solve_calb_dual(&b, &params, &rhs, &cfg)?;
        let res = (calb_dual(&b, &params, &sol) - &rhs).norm() / rhs.norm();
        rec.le(format!("{tag}.calb_solve_residual"), res, 1e-9);
    }
    Ok(())
}

fn c2_b_identity(rec: &mut Recorder) -> Result<()> {
    let params = PhysParams::default();
    let m = params.p_modulus();
    let ns = [32usize, 64, 128];
    for k in [1usize, 2, 4] {
        let mut errs = Vec::new();
        for &n in &ns {
            let b = bundle_1d(n, &params)?;
            let phi = move |x: &[f64; 2]| std::f64::consts::SQRT_2 * (k as f64 * PI * x[0]).cos();
            let bp = apply_b(&b, &project_pressure(&b, &phi))?;
            let err = b.l2_error_pressure(&bp.coeffs, &|x| phi(x) / m);
            let h = 1.0 / n as f64;
            rec.le(format!("k{k}_n{n}.rel_error"), err, 20.0 * h * h * (k * k) as f64);
            errs.push(err);
        }
        let order = errs
            .windows(2)
            .map(|w| (w[0] / w[1]).log2())
            .fold(f64::INFINITY, f64::min);
        rec.ge(format!("k{k}.h_order"), order, 1.9);
    }
    Ok(())
}

/// Runs the full solver from discrete mode-`k` data `(P, U)`.
fn modal_run(
    b: &OperatorBundle,
    params: &PhysParams,
    k: usize,
    pu: (f64, f64),
    dt: f64,
    t_end: f64,
) -> Result<crate::timestepper::Trajectory> {
    let (ph, uh) = discrete_mode(b, k, &SolverConfig::default())?;
    let spec = InitialSpec::pressure_displacement(
        FieldVec::pressure(ph.coeffs * pu.0),
        FieldVec::displacement(uh.coeffs * pu.1),
    );
    run(
        b,
        params,
        &spec,
        &SourceSpec::zero(),
        &StepperOptions::crank_nicolson(dt, t_end),
    )
}

/// Order from three successive self-convergence differences.
fn self_order(finals: &[(DVector<f64>, DVector<f64>)], b: &OperatorBundle) -> f64 {
    let diff = |i: usize| {
        let (p0, u0) = &finals[i];
        let (p1, u1) = &finals[i + 1];
        (l2p(b, &(p0 - p1)).powi(2) + l2u(b, &(u0 - u1)).powi(2)).sqrt()
    };
    (diff(0) / diff(1)).log2()
}

fn c3_oracle(rec: &mut Recorder) -> Result<()> {
    let params = visco(0.1, 0.5);
    let b = bundle_1d(128, &params)?;
    let t_end = 0.1;
    let pu = (1.0, 1.0);
    let exp = ModalExpansion::new(&params, vec![(1, pu.0, pu.1)])?;
    let (pf, uf) = (exp.pressure_fn(t_end)?, exp.displacement_fn(t_end)?);
    let zero_p = DVector::zeros(b.num_pressure_dofs());
    let zero_u = DVector::zeros(b.num_displacement_dofs());
    let norm = (b.l2_error_pressure(&zero_p, &pf).powi(2) + b.l2_error_displacement(&zero_u, &uf).powi(2)).sqrt();
    let mut finals = Vec::new();
    for dt in [1e-3, 5e-4, 2.5e-4] {
        let tr = modal_run(&b, &params, 1, pu, dt, t_end)?;
        let s = tr.last();
        if dt == 1e-3 {
            let err = (b.l2_error_pressure(&s.p, &pf).powi(2) + b.l2_error_displacement(&s.u, &uf).powi(2)).sqrt();
            rec.le("rel_l2_error_dt1e-3", err / norm, 1e-3);
            let (op, ou) = oracle_field_solution(&b, &exp, t_end)?;
            rec.info(
                "nodal_rel_diff_pressure",
                l2p(&b, &(&s.p - &op.coeffs)) / l2p(&b, &op.coeffs),
            );
            rec.info(
                "nodal_rel_diff_displacement",
                l2u(&b, &(&s.u - &ou.coeffs)) / l2u(&b, &ou.coeffs),
            );
        }
        finals.push((s.p.clone(), s.u.clone()));
    }
    rec.ge("dt_order", self_order(&finals, &b), 1.9);
    Ok(())
}

fn c4_adjusted_equivalence(rec: &mut Recorder) -> Result<()> {
    for c0 in [0.0, 1.0] {
        let params = PhysParams::default()
            .with_c0(c0)
            .with_delta1(0.5)
            .with_adjusted_content();
        let b = bundle_1d(64, &params)?;
        let p0 = project_pressure(&b, &|x| (PI * x[0]).cos() + 0.5 * (3.0 * PI * x[0]).cos());
        let u0 = project_displacement(&b, &|x| [0.1 * (2.0 * PI * x[0]).sin(), 0.0]);
        let opts = StepperOptions::crank_nicolson(0.005, 0.2);
        let full = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(p0.clone(), u0),
            &SourceSpec::zero(),
            &opts,
        )?;
        let red = solve_reduced_biot(&b, &params, &InitialSpec::pressure(p0), &SourceSpec::zero(), &opts)?;
        let diff = full
            .states
            .iter()
            .zip(&red.p)
            .map(|(s, p)| l2p(&b, &(&s.p - p)) / l2p(&b, p).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        rec.le(format!("c0_{c0}.max_rel_diff"), diff, 1e-9);
    }
    Ok(())
}

fn identity_order(
    rec: &mut Recorder,
    b: &OperatorBundle,
    params: &PhysParams,
    spec: &InitialSpec,
    kinds: &[IdentityKind],
    dts: [f64; 3],
    t_end: f64,
    tag: &str,
) -> Result<()> {
    let runs = dts
        .iter()
        .map(|&dt| {
            run(
                b,
                params,
                spec,
                &SourceSpec::zero(),
                &StepperOptions::crank_nicolson(dt, t_end),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for &k in kinds {
        let series = runs
            .iter()
            .map(|tr| identity_residual(b, tr, k))
            .collect::<Result<Vec<_>>>()?;
        if k.is_inequality() {
            let worst = series
                .iter()
                .map(|s| s.max_relative_slack())
                .fold(f64::NEG_INFINITY, f64::max);
            rec.le(format!("{tag}.{k}.max_relative_slack"), worst, 1e-10);
        } else {
            let e: Vec<f64> = series.iter().map(|s| s.max_abs()).collect();
            rec.info(format!("{tag}.{k}.residual_finest_dt"), e[2] / series[2].scale);
            rec.within(format!("{tag}.{k}.dt_order"), (e[1] / e[2]).log2(), 1.8, 2.2);
        }
    }
    let ledger = energy_ledger(b, &runs[2])?;
    rec.le(format!("{tag}.ledger_balance"), ledger.max_relative_residual(), 1e-8);
    Ok(())
}

fn c5_identities(rec: &mut Recorder) -> Result<()> {
    let cfg = SolverConfig::default();
    let dts = [4e-3, 2e-3, 1e-3];

    let params = visco(0.1, 0.5);
    let b = bundle_1d(64, &params)?;
    let (ph, uh) = discrete_mode(&b, 1, &cfg)?;
    let spec = InitialSpec::pressure_displacement(ph, uh);
    identity_order(
        rec,
        &b,
        &params,
        &spec,
        &[IdentityKind::EnergyEst, IdentityKind::Eed1c0],
        dts,
        0.2,
        "compressible",
    )?;

    let params = visco(0.0, 0.5);
    let b = bundle_1d(64, &params)?;
    let (_, uh) = discrete_mode(&b, 1, &cfg)?;
    let p0 = consistent_pressure(&b, &params, &uh, &SourceSpec::zero(), &cfg)?;
    let spec = InitialSpec::pressure_displacement(p0, uh);
    identity_order(
        rec,
        &b,
        &params,
        &spec,
        &[IdentityKind::FirstOne, IdentityKind::SecondOne, IdentityKind::ThirdOne],
        dts,
        0.2,
        "incompressible",
    )?;

    let params = PhysParams::default()
        .with_c0(1.0)
        .with_delta1(0.5)
        .with_adjusted_content();
    let b = bundle_1d(64, &params)?;
    let (ph, uh) = discrete_mode(&b, 1, &cfg)?;
    let spec = InitialSpec::pressure_displacement(ph, uh);
    identity_order(rec, &b, &params, &spec, &[IdentityKind::Finest], dts, 0.2, "adjusted")?;
    Ok(())
}

fn c6_spectrum(rec: &mut Recorder) -> Result<()> {
    let grid: Vec<(f64, f64)> = [0.1, 1.0, 10.0]
        .iter()
        .flat_map(|&c0| [0.1, 1.0, 10.0].map(|d1| (c0, d1)))
        .collect();
    let cfg = SolverConfig::default();
    let results = grid
        .par_iter()
        .map(|&(c0, d1)| -> Result<(f64, f64, f64)> {
            let params = visco(c0, d1);
            let b = bundle_1d(64, &params)?;
            let gen = build_first_order_generator(&b, &params, &cfg)?;
            let rep = spectrum_report(&gen)?;
            let mode = slowest_mode(&gen, &rep)?;
            let rate = -rep.spectral_abscissa;
            let t_end = 3.0 / rate;
            let dt = t_end / 400.0;
            let opts = StepperOptions::crank_nicolson(dt, 400.0 * dt);
            let tr = solve_strongly_damped_wave(
                &b,
                &params,
                &InitialSpec::pressure_rate(mode.p0, mode.p1),
                &SourceSpec::zero(),
                &opts,
            )?;
            let y = y_norm_series(&b, &params, &tr)?;
            let fit = fit_decay_rate(&tr.times, &y, None, "Y-norm")?;
            Ok((rep.spectral_abscissa, rate, fit.gamma_fit))
        })
        .collect::<Result<Vec<_>>>()?;
    for ((c0, d1), (abscissa, rate, fit)) in grid.iter().zip(results) {
        let tag = format!("c0_{c0}_d1_{d1}");
        rec.push(
            format!("{tag}.spectral_abscissa"),
            abscissa,
            "< 0".into(),
            abscissa < 0.0,
        );
        rec.le(format!("{tag}.fit_rel_mismatch"), (fit - rate).abs() / rate, 0.05);
    }
    Ok(())
}

fn c7_ode_decay(rec: &mut Recorder) -> Result<()> {
    let params = visco(0.0, 0.5);
    let cfg = SolverConfig::default();
    let b = bundle_1d(128, &params)?;
    let u0 = project_displacement(&b, &|x| {
        let s = |k: f64| (k * PI * x[0]).sin();
        [s(1.0) + 0.5 * s(2.0) + 0.25 * s(3.0), 0.0]
    });
    let p0 = consistent_pressure(&b, &params, &u0, &SourceSpec::zero(), &cfg)?;
    let tr = run(
        &b,
        &params,
        &InitialSpec::pressure_displacement(p0, u0),
        &SourceSpec::zero(),
        &StepperOptions::crank_nicolson(2e-3, 2.0),
    )?;
    let cp = poincare_korn_constant(&b)?;
    let e = gronwall_functional(&b, &tr, cp, GronwallForm::Weighted)?;
    let worst_rise = e
        .windows(2)
        .map(|w| (w[1] - w[0]) / e[0])
        .fold(f64::NEG_INFINITY, f64::max);
    rec.le("max_relative_increase", worst_rise, 1e-12);
    let fit = fit_decay_rate(&tr.times(), &e, None, "Gronwall functional")?;
    let bound = gamma_bound(&params, cp)?;
    rec.info("gamma_bound", bound);
    rec.ge("gamma_fit", fit.gamma_fit, bound);
    rec.info("fit_rsquared", fit.rsquared);
    Ok(())
}

fn c8_poincare_korn(rec: &mut Recorder) -> Result<()> {
    let params = PhysParams::default();
    let b = bundle_1d(128, &params)?;
    let cp = poincare_korn_constant(&b)?;
    let exact = 1.0 / (params.p_modulus() * PI * PI);
    rec.info("c_p", cp);
    rec.le("rel_deviation", (cp - exact).abs() / exact, 0.02);
    Ok(())
}

fn c9_smoothing(rec: &mut Recorder) -> Result<()> {
    let params = PhysParams::default();
    let b = bundle_1d(256, &params)?;
    let d0 = Shape::Broadband {
        seed: Some(2024),
        kmax: 64,
        exponent: 0.5,
        amplitude: 1.0,
    }
    .pressure(&b)?;
    let t_list: Vec<f64> = (0..7).map(|i| 10f64.powf(-4.0 + 0.25 * i as f64)).collect();
    let rep = smoothing_rate_check(&b, &params, &d0, &t_list, 400, &SolverConfig::default())?;
    rec.within("loglog_slope", rep.slope, -1.2, -0.8);
    rec.info("sup_t_ap_over_d0", rep.sup_ratio);
    rec.info("participation", rep.participation);
    Ok(())
}

fn c10_secondary(rec: &mut Recorder) -> Result<()> {
    let sources = SourceSpec::zero().with_fluid(
        std::sync::Arc::new(|x, t| (2.0 * PI * x[0]).cos() * (-t).exp()),
        Some(std::sync::Arc::new(|x, t| -(2.0 * PI * x[0]).cos() * (-t).exp())),
    );
    for c0 in [0.0, 1.0] {
        let params = PhysParams::default().with_c0(c0).with_lambda_star(1.0);
        let b = bundle_1d(64, &params)?;
        let p0 = project_pressure(&b, &|x| 0.5 * (PI * x[0]).cos());
        let u0 = project_displacement(&b, &|x| [(PI * x[0]).sin() + 0.5 * (2.0 * PI * x[0]).sin(), 0.0]);
        let tr = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(p0, u0),
            &sources,
            &StepperOptions::crank_nicolson(5e-3, 0.5),
        )?;
        let ledger = energy_ledger(&b, &tr)?;
        let ap_norm = ap_l2_time_norm(
            &b,
            &tr.times(),
            &tr.states.iter().map(|s| s.p.clone()).collect::<Vec<_>>(),
        );
        let tag = format!("c0_{c0}");
        if c0 == 0.0 {
            let last = ledger.rows.last().unwrap().consolidation;
            rec.push(
                format!("{tag}.consolidation_dissipation"),
                last,
                "> 0".into(),
                last > 0.0,
            );
            let increasing = ledger.rows.windows(2).all(|w| w[1].consolidation > w[0].consolidation);
            rec.check(
                format!("{tag}.consolidation_increasing"),
                increasing,
                "strictly increasing",
            );
            rec.push(
                format!("{tag}.ap_l2_time_norm"),
                ap_norm,
                "finite".into(),
                ap_norm.is_finite(),
            );
        } else {
            rec.info(
                format!("{tag}.consolidation_dissipation"),
                ledger.rows.last().unwrap().consolidation,
            );
            rec.info(format!("{tag}.ap_l2_time_norm"), ap_norm);
        }
    }
    rec.notes
        .push("with c0 = 1 the regularization of A p is reported only; the smoothing effect is not expected".into());
    Ok(())
}

fn c11_variation_of_constants(rec: &mut Recorder) -> Result<()> {
    let params = visco(0.1, 0.5);
    let b = bundle_1d(64, &params)?;
    let mut errs = Vec::new();
    for dt in [2e-3, 1e-3] {
        let tr = modal_run(&b, &params, 1, (1.0, 1.0), dt, 0.1)?;
        let ps: Vec<DVector<f64>> = tr.states.iter().map(|s| s.p.clone()).collect();
        let rec_u =
            recover_u_variation_of_constants(&b, &params, &tr.times(), &ps, &tr.states[0].u, &SourceSpec::zero())?;
        let err = tr
            .states
            .iter()
            .zip(&rec_u)
            .map(|(s, u)| l2u(&b, &(&s.u - u)) / l2u(&b, &s.u))
            .fold(0.0, f64::max);
        errs.push(err);
    }
    rec.le("rel_error_dt1e-3", errs[1], 5e-3);
    rec.ge("dt_order", (errs[0] / errs[1]).log2(), 1.9);
    Ok(())
}

/// Admissible base combinations of the initial-condition table.
fn table_combos(params: &PhysParams) -> Vec<Vec<&'static str>> {
    let (c0, d1, d2) = (params.c0, params.delta1, params.delta2);
    match (d1 > 0.0, d2 > 0.0, c0 > 0.0) {
        (false, _, _) => vec![vec!["p0"], vec!["d0"]],
        (true, false, false) => vec![vec!["p0"], vec!["p0", "u0"]],
        (true, false, true) => vec![vec!["p0", "u0"], vec!["p0", "p1"]],
        (true, true, _) => vec![vec!["p0"], vec!["p0", "u0"]],
    }
}

fn c12_initial_table(rec: &mut Recorder) -> Result<()> {
    let cfg = SolverConfig::default();
    let cells = [
        ("classical", PhysParams::default()),
        ("c0=0,d2=0", visco(0.0, 0.5)),
        ("c0>0,d2=0", visco(1.0, 0.5)),
        ("c0=0,d2>0", visco(0.0, 0.5).with_adjusted_content()),
        ("c0>0,d2>0", visco(1.0, 0.5).with_adjusted_content()),
    ];
    let names = ["p0", "u0", "d0", "p1"];
    for (tag, params) in cells {
        let b = bundle_1d(16, &params)?;
        let p0 = project_pressure(&b, &|x| (PI * x[0]).cos() + 0.3 * (2.0 * PI * x[0]).cos());
        let u0 = project_displacement(&b, &|x| [0.2 * (PI * x[0]).sin(), 0.0]);
        // Consistent values of every quantity, from a reference resolution.
        let base = if params.delta1 > 0.0 {
            InitialSpec::pressure_displacement(p0.clone(), u0)
        } else {
            InitialSpec::pressure(p0.clone())
        };
        let reference = resolve_initial_state(&b, &params, &base, &SourceSpec::zero(), &cfg)?;
        let value = |n: &str| -> Option<FieldVec> {
            match n {
                "p0" => Some(reference.p.clone()),
                "u0" => reference.u.clone(),
                "d0" => reference.d.clone(),
                _ => reference.p_t.clone().or_else(|| Some(reference.p.clone())),
            }
        };
        let recognized = crate::model::recognized(&reference.regime);
        let combos = table_combos(&params);
        let mut mismatches = Vec::new();
        let mut worst_roundtrip = 0.0f64;
        for mask in 1u8..16 {
            let chosen: Vec<&str> = names
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| *n)
                .collect();
            let mut spec = InitialSpec::default();
            for n in &chosen {
                let v = value(n);
                match *n {
                    "p0" => spec.p0 = v,
                    "u0" => spec.u0 = v,
                    "d0" => spec.d0 = v,
                    _ => spec.p1 = v,
                }
            }
            let unrecognized = chosen.iter().any(|n| !recognized.contains(n));
            let covered = combos.iter().any(|c| c.iter().all(|n| chosen.contains(n)));
            let got = resolve_initial_state(&b, &params, &spec, &SourceSpec::zero(), &cfg);
            let ok = match (&got, unrecognized, covered) {
                (Err(Error::NotAdmissible { .. }), true, _) => true,
                (Err(Error::Underspecified(_)), false, false) => true,
                (Ok(_), false, true) => true,
                _ => false,
            };
            if !ok {
                mismatches.push(format!("{{{}}} -> {:?}", chosen.join(","), got.as_ref().err()));
            }
            if let Ok(state) = got {
                let again = resolve_initial_state(&b, &params, &state.as_spec(), &SourceSpec::zero(), &cfg)?;
                let rel = |a: &FieldVec, c: &FieldVec, u: bool| {
                    let (d, s) = if u {
                        (l2u(&b, &(&a.coeffs - &c.coeffs)), l2u(&b, &a.coeffs))
                    } else {
                        (l2p(&b, &(&a.coeffs - &c.coeffs)), l2p(&b, &a.coeffs))
                    };
                    if s == 0.0 {
                        d
                    } else {
                        d / s
                    }
                };
                let mut r = rel(&state.p, &again.p, false);
                for (x, y, u) in [
                    (&state.u, &again.u, true),
                    (&state.d, &again.d, false),
                    (&state.p_t, &again.p_t, false),
                    (&state.u_t, &again.u_t, true),
                ] {
                    if let (Some(x), Some(y)) = (x, y) {
                        r = r.max(rel(x, y, u));
                    }
                }
                worst_roundtrip = worst_roundtrip.max(r);
            }
        }
        rec.check(
            format!("{tag}.table_matches"),
            mismatches.is_empty(),
            "all 15 subsets classified as tabulated",
        );
        rec.notes.extend(mismatches.into_iter().map(|m| format!("{tag}: {m}")));
        rec.le(format!("{tag}.roundtrip"), worst_roundtrip, 1e-12);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_injection_fails_criterion_one() {
        let r = run_criterion(
            1,
            &VerifyOptions {
                fault: Some(Fault::BreakBSymmetry),
            },
        );
        assert!(!r.passed);
        assert!(r.summary_line().contains("b_symmetry_defect"));
    }

    #[test]
    fn table_criterion_passes() {
        let r = run_criterion(12, &VerifyOptions::default());
        assert!(r.passed, "{:#?}", r);
    }
}
