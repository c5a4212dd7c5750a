//! Randomized invariants of the discretization, operators, initial data
//! resolution and time stepping.

use std::f64::consts::PI;

use nalgebra::DVector;
use porovisco::discretization::{
    assemble_forms, assemble_forms_with, build_mesh, project_displacement, project_pressure, DisplacementElement,
    FieldVec, OperatorBundle,
};
use porovisco::linalg::sparse::{bilinear, spmv, to_dense};
use porovisco::model::{
    classify_regime, resolve_initial_state, validate_params, Compressibility, InitialSpec, PhysParams, RegimeKind,
};
use porovisco::operators::{check_operator_properties, SolverConfig};
use porovisco::oracle1d::{modal_matrix, modal_rates};
use porovisco::reductions::solve_reduced_biot;
use porovisco::sources::SourceSpec;
use porovisco::timestepper::{run, StartupPolicy, StepperOptions, Trajectory};
use proptest::prelude::*;

#[derive(Debug, Clone, Copy)]
enum Kind {
    Classical,
    Visco,
    Adjusted,
    Secondary,
}

fn kind() -> impl Strategy<Value = Kind> {
    prop_oneof![
        Just(Kind::Classical),
        Just(Kind::Visco),
        Just(Kind::Adjusted),
        Just(Kind::Secondary)
    ]
}

fn params_of(kind: Kind) -> impl Strategy<Value = PhysParams> {
    (
        0.2f64..5.0,
        0.2f64..3.0,
        0.3f64..1.5,
        0.2f64..3.0,
        prop_oneof![Just(0.0), 0.05f64..5.0],
        0.1f64..2.0,
    )
        .prop_map(move |(lambda_e, mu, alpha, kappa, c0, d)| {
            let p = PhysParams::default()
                .with_lame(lambda_e, mu)
                .with_alpha(alpha)
                .with_kappa(kappa)
                .with_c0(c0);
            match kind {
                Kind::Classical => p,
                Kind::Visco => p.with_delta1(d),
                Kind::Adjusted => p.with_delta1(d).with_adjusted_content(),
                Kind::Secondary => p.with_lambda_star(d),
            }
        })
}

fn any_params() -> impl Strategy<Value = PhysParams> {
    kind().prop_flat_map(params_of)
}

/// Smooth mean-free pressure and clamped displacement built from a few modes.
fn modal_data(b: &OperatorBundle, a: &[f64; 3], c: &[f64; 3]) -> (FieldVec, FieldVec) {
    let (a, c) = (*a, *c);
    let p = project_pressure(b, &move |x| {
        (1..=3).map(|k| a[k - 1] * (k as f64 * PI * x[0]).cos()).sum::<f64>() * (PI * x[1]).cos().max(0.5)
    });
    let u = project_displacement(b, &move |x| {
        let s: f64 = (1..=3).map(|k| c[k - 1] * (k as f64 * PI * x[0]).sin()).sum();
        [s, 0.3 * s * (PI * x[1]).sin()]
    });
    (p, u)
}

fn coeffs() -> impl Strategy<Value = [f64; 3]> {
    [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0]
}

/// Admissible full-solver data for the regime.
fn spec_for(params: &PhysParams, p0: FieldVec, u0: FieldVec) -> InitialSpec {
    if params.delta1 == 0.0 && params.lambda_star == 0.0 {
        InitialSpec::pressure(p0).with_displacement_required()
    } else {
        InitialSpec::pressure_displacement(p0, u0)
    }
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

fn energy(b: &OperatorBundle, tr: &Trajectory, i: usize) -> f64 {
    let s = &tr.states[i];
    let p = &tr.params;
    let w = if p.delta2 > 0.0 {
        &s.u + &s.u_dot * p.delta1
    } else {
        s.u.clone()
    };
    0.5 * bilinear(b.ke(), &w, &w) + 0.5 * p.c0 * bilinear(b.mp(), &s.p, &s.p)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn regime_classification_is_a_partition(
        v in proptest::collection::vec(prop_oneof![Just(0.0), -1.0f64..3.0], 8),
        adjusted in any::<bool>(),
    ) {
        let mut p = PhysParams {
            lambda_e: v[0], mu: v[1], alpha: v[2], c0: v[3], kappa: v[4],
            delta1: v[5], delta2: v[6], lambda_star: v[7],
        };
        if adjusted {
            p.delta2 = p.alpha * p.delta1;
        }
        let valid = validate_params(&p).is_valid();
        match classify_regime(&p) {
            Err(_) => prop_assert!(!valid),
            Ok(tag) => {
                prop_assert!(valid);
                let expected = if p.lambda_star > 0.0 {
                    RegimeKind::SecondaryConsolidation
                } else if p.delta2 > 0.0 {
                    RegimeKind::ViscoAdjustedContent
                } else if p.delta1 > 0.0 {
                    RegimeKind::ViscoStandardContent
                } else {
                    RegimeKind::ClassicalBiot
                };
                prop_assert_eq!(tag.kind, expected);
                prop_assert_eq!(tag.compressibility == Compressibility::Compressible, p.c0 > 0.0);
            }
        }
    }

    #[test]
    fn assembled_forms_are_symmetric_with_constant_kernel(
        params in any_params(), dim in 1usize..=2, n in 2usize..9, p1 in any::<bool>(),
    ) {
        let el = if p1 { DisplacementElement::P1 } else { DisplacementElement::P2 };
        let b = assemble_forms_with(&build_mesh(dim, n).unwrap(), &params, el).unwrap();
        for m in [b.ke(), b.mu(), b.ap(), b.mp(), b.kdivdiv()] {
            let d = to_dense(m);
            prop_assert!((&d - d.transpose()).amax() <= 1e-14 * d.amax());
        }
        let ones = DVector::from_element(b.num_pressure_dofs(), 1.0);
        prop_assert!(spmv(b.ap(), &ones).amax() <= 1e-12 * to_dense(b.ap()).amax());
        prop_assert_eq!(to_dense(b.g()), -to_dense(b.ddiv()).transpose());
    }

    #[test]
    fn b_is_self_adjoint_and_monotone(params in any_params(), dim in 1usize..=2, n in 3usize..9) {
        let b = assemble_forms(&build_mesh(dim, n).unwrap(), &params).unwrap();
        let r = check_operator_properties(&b, &params, &SolverConfig::default()).unwrap();
        prop_assert!(r.b_symmetry_defect <= 1e-10);
        prop_assert!(r.b_ritz_min >= -1e-10);
        prop_assert!(r.calb_condition.is_finite());
        if let (Some((lo, hi)), 1) = (r.r_spectrum, dim) {
            prop_assert!(lo > 0.0);
            prop_assert!(hi <= (1.0 + 1e-10) / params.delta1);
        }
    }

    #[test]
    fn initial_resolution_is_idempotent(params in any_params(), a in coeffs(), c in coeffs()) {
        let b = assemble_forms(&build_mesh(1, 12).unwrap(), &params).unwrap();
        let cfg = SolverConfig::default();
        let (p0, u0) = modal_data(&b, &a, &c);
        let first = resolve_initial_state(&b, &params, &spec_for(&params, p0, u0), &SourceSpec::zero(), &cfg).unwrap();
        let again = resolve_initial_state(&b, &params, &first.as_spec(), &SourceSpec::zero(), &cfg).unwrap();
        prop_assert!(rel(&first.p.coeffs, &again.p.coeffs) <= 1e-12);
        for (x, y) in [(&first.u, &again.u), (&first.u_t, &again.u_t), (&first.p_t, &again.p_t), (&first.d, &again.d)] {
            prop_assert_eq!(x.is_some(), y.is_some());
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!(rel(&x.coeffs, &y.coeffs) <= 1e-12);
            }
        }
    }

    #[test]
    fn classical_content_is_recovered(params in params_of(Kind::Classical), a in coeffs(), dim in 1usize..=2) {
        let b = assemble_forms(&build_mesh(dim, 6).unwrap(), &params).unwrap();
        let (d0, _) = modal_data(&b, &a, &[0.0; 3]);
        let spec = InitialSpec::content(d0.clone()).with_displacement_required();
        let s = resolve_initial_state(&b, &params, &spec, &SourceSpec::zero(), &SolverConfig::default()).unwrap();
        let u = s.u.unwrap().coeffs;
        let mut zeta = b.mp_solve(&spmv(b.ddiv(), &u)) * params.alpha;
        b.remove_mean(&mut zeta);
        zeta.axpy(params.c0, &s.p.coeffs, 1.0);
        prop_assert!(rel(&zeta, &d0.coeffs) <= 1e-10);
    }

    #[test]
    fn stepper_is_linear(params in any_params(), a in coeffs(), c in coeffs(), s in -2.0f64..2.0) {
        let b = assemble_forms(&build_mesh(1, 10).unwrap(), &params).unwrap();
        let (p1, u1) = modal_data(&b, &a, &c);
        let (p2, u2) = modal_data(&b, &c, &a);
        let combo = |x: &FieldVec, y: &FieldVec| FieldVec::new(x.space, &x.coeffs * s + &y.coeffs);
        let opts = StepperOptions::crank_nicolson(0.02, 0.1).with_startup(StartupPolicy::Never);
        let go = |p: FieldVec, u: FieldVec| run(&b, &params, &spec_for(&params, p, u), &SourceSpec::zero(), &opts).unwrap();
        let (ta, tb) = (go(p1.clone(), u1.clone()), go(p2.clone(), u2.clone()));
        let tc = go(combo(&p1, &p2), combo(&u1, &u2));
        for i in 0..tc.states.len() {
            let p = &ta.states[i].p * s + &tb.states[i].p;
            let u = &ta.states[i].u * s + &tb.states[i].u;
            let scale = ta.states[i].p.norm() + tb.states[i].p.norm() + ta.states[i].u.norm() + tb.states[i].u.norm();
            let err = (&tc.states[i].p - p).norm() + (&tc.states[i].u - u).norm();
            prop_assert!(err <= 1e-9 * scale.max(1e-300));
        }
    }

    #[test]
    fn energy_decays_without_sources(params in any_params(), a in coeffs(), c in coeffs()) {
        let b = assemble_forms(&build_mesh(1, 10).unwrap(), &params).unwrap();
        let (p0, u0) = modal_data(&b, &a, &c);
        let opts = StepperOptions::crank_nicolson(0.02, 0.2).with_startup(StartupPolicy::Never);
        let tr = run(&b, &params, &spec_for(&params, p0, u0), &SourceSpec::zero(), &opts).unwrap();
        let e0 = energy(&b, &tr, 0).max(1e-300);
        for i in 1..tr.states.len() {
            prop_assert!(energy(&b, &tr, i) <= energy(&b, &tr, i - 1) + 1e-10 * e0);
        }
        let ledger = porovisco::diagnostics::energy_ledger(&b, &tr).unwrap();
        prop_assert!(ledger.max_relative_residual() <= 1e-8);
    }

    #[test]
    fn stored_content_is_consistent(params in any_params(), a in coeffs(), c in coeffs()) {
        let b = assemble_forms(&build_mesh(1, 10).unwrap(), &params).unwrap();
        let (p0, u0) = modal_data(&b, &a, &c);
        let opts = StepperOptions::crank_nicolson(0.02, 0.1);
        let tr = run(&b, &params, &spec_for(&params, p0, u0), &SourceSpec::zero(), &opts).unwrap();
        for s in &tr.states {
            let w = &s.u * params.alpha + &s.u_dot * params.delta2;
            let mut zeta = b.mp_solve(&spmv(b.ddiv(), &w));
            b.remove_mean(&mut zeta);
            zeta.axpy(params.c0, &s.p, 1.0);
            prop_assert!((&zeta - &s.zeta).norm() <= 1e-10 * zeta.norm().max(s.zeta.norm()).max(1e-300));
        }
    }

    #[test]
    fn modal_rates_are_positive(params in any_params(), k in 1usize..40) {
        let sys = modal_matrix(&params, k).unwrap();
        for (re, _) in modal_rates(&sys) {
            prop_assert!(re > 0.0, "k = {}: rate {}", k, re);
        }
    }

    #[test]
    fn reduced_solver_matches_block_elimination(params in params_of(Kind::Classical), a in coeffs()) {
        let b = assemble_forms(&build_mesh(1, 16).unwrap(), &params).unwrap();
        let (p0, _) = modal_data(&b, &a, &[0.0; 3]);
        let opts = StepperOptions::crank_nicolson(0.01, 0.1);
        let full = run(&b, &params, &InitialSpec::pressure(p0.clone()), &SourceSpec::zero(), &opts).unwrap();
        let red = solve_reduced_biot(&b, &params, &InitialSpec::pressure(p0), &SourceSpec::zero(), &opts).unwrap();
        for (s, p) in full.states.iter().zip(&red.p) {
            prop_assert!(rel(&s.p, p) <= 1e-9);
        }
    }
}
