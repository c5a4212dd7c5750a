//! Incompressible visco-elastic decay: the weighted functional against the
//! rate bound built from the discrete Poincaré–Korn constant.

use porovisco::diagnostics::{fit_decay_rate, gamma_bound, gronwall_functional, poincare_korn_constant, GronwallForm};
use porovisco::discretization::{assemble_forms, build_mesh, project_displacement};
use porovisco::model::{consistent_pressure, InitialSpec, PhysParams};
use porovisco::operators::SolverConfig;
use porovisco::sources::SourceSpec;
use porovisco::timestepper::{run, StepperOptions};

fn main() -> porovisco::Result<()> {
    let params = PhysParams::default().with_delta1(0.5);
    let b = assemble_forms(&build_mesh(1, 128)?, &params)?;
    let cp = poincare_korn_constant(&b)?;
    println!(
        "C_P = {cp:.8e} (continuous value {:.8e})",
        1.0 / (params.p_modulus() * std::f64::consts::PI.powi(2))
    );

    let u0 = project_displacement(&b, &|x| [x[0] * (1.0 - x[0]) * (1.0 + 4.0 * x[0]), 0.0]);
    let p0 = consistent_pressure(&b, &params, &u0, &SourceSpec::zero(), &SolverConfig::default())?;
    let tr = run(
        &b,
        &params,
        &InitialSpec::pressure_displacement(p0, u0),
        &SourceSpec::zero(),
        &StepperOptions::crank_nicolson(2e-3, 2.0),
    )?;
    for form in [GronwallForm::Weighted, GronwallForm::Plain] {
        let e = gronwall_functional(&b, &tr, cp, form)?;
        let fit = fit_decay_rate(&tr.times(), &e, None, "functional")?;
        println!("{form:?}: fitted rate {:.5} (R² {:.6})", fit.gamma_fit, fit.rsquared);
    }
    println!("guaranteed rate {:.5}", gamma_bound(&params, cp)?);
    Ok(())
}
