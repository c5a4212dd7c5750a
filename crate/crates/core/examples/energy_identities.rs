//! Energy ledger and identity residuals of a forced 2D visco-elastic run.

use std::sync::Arc;

use porovisco::diagnostics::{energy_ledger, identity_residual, IdentityKind};
use porovisco::discretization::{assemble_forms, build_mesh, project_displacement, project_pressure};
use porovisco::model::{InitialSpec, PhysParams};
use porovisco::sources::SourceSpec;
use porovisco::timestepper::{run, StepperOptions};

fn main() -> porovisco::Result<()> {
    let params = PhysParams::default().with_c0(0.5).with_delta1(0.2);
    let b = assemble_forms(&build_mesh(2, 12)?, &params)?;
    let p0 = project_pressure(&b, &|x| (std::f64::consts::PI * x[0]).cos());
    let u0 = project_displacement(&b, &|x| [0.0, 0.1 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])]);
    let sources = SourceSpec::zero().with_force(
        Arc::new(|x, t| [0.0, -(1.0 + x[0]) * (-t).exp()]),
        Some(Arc::new(|x, t| [0.0, (1.0 + x[0]) * (-t).exp()])),
    );
    let spec = InitialSpec::pressure_displacement(p0, u0);
    let tr = run(&b, &params, &spec, &sources, &StepperOptions::crank_nicolson(0.01, 0.5))?;

    let ledger = energy_ledger(&b, &tr)?;
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "t", "energy", "viscous", "darcy", "work", "residual"
    );
    for (i, r) in ledger.rows.iter().enumerate().step_by(10) {
        println!(
            "{:>6.2} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.2e}",
            r.t,
            ledger.energy(i),
            r.viscous,
            r.darcy,
            r.source_work,
            r.residual
        );
    }
    println!("max relative ledger residual {:.2e}", ledger.max_relative_residual());

    // Identities hold for the continuous problem; the discrete defect shrinks
    // like dt^2 once the fast pressure modes are resolved in time.
    let kinds: Vec<_> = IdentityKind::ALL
        .into_iter()
        .filter(|k| k.applies_to(&params, &sources))
        .collect();
    for dt in [0.01, 0.0025, 0.000625] {
        let tr = run(&b, &params, &spec, &sources, &StepperOptions::crank_nicolson(dt, 0.5))?;
        for &k in &kinds {
            let s = identity_residual(&b, &tr, k)?;
            println!("dt = {dt:<8} {k:>10}: max relative residual {:.3e}", s.max_relative());
        }
    }
    Ok(())
}
