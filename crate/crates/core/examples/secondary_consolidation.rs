//! Secondary consolidation: the `λ* ‖∇·u_t‖²` dissipation accumulates in the
//! ledger, and `A p` stays square integrable in time.

use std::sync::Arc;

use porovisco::diagnostics::{ap_l2_time_norm, energy_ledger};
use porovisco::discretization::{assemble_forms, build_mesh, project_displacement, project_pressure};
use porovisco::model::{InitialSpec, PhysParams};
use porovisco::sources::SourceSpec;
use porovisco::timestepper::{run, StepperOptions};

fn main() -> porovisco::Result<()> {
    let pi = std::f64::consts::PI;
    let sources = SourceSpec::zero().with_fluid(
        Arc::new(move |x, t| (2.0 * pi * x[0]).cos() * (-t).exp()),
        Some(Arc::new(move |x, t| -(2.0 * pi * x[0]).cos() * (-t).exp())),
    );
    for c0 in [0.0, 1.0] {
        let params = PhysParams::default().with_c0(c0).with_lambda_star(1.0);
        let b = assemble_forms(&build_mesh(1, 64)?, &params)?;
        let p0 = project_pressure(&b, &|x| 0.5 * (pi * x[0]).cos());
        let u0 = project_displacement(&b, &|x| [(pi * x[0]).sin(), 0.0]);
        let tr = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(p0, u0),
            &sources,
            &StepperOptions::crank_nicolson(5e-3, 0.5),
        )?;
        let ledger = energy_ledger(&b, &tr)?;
        let pressures: Vec<_> = tr.states.iter().map(|s| s.p.clone()).collect();
        println!(
            "c0 = {c0}: consolidation dissipation {:.6e}, ‖Ap‖ in L2(0,T;L2) {:.6e}, ledger residual {:.1e}",
            ledger.rows.last().unwrap().consolidation,
            ap_l2_time_norm(&b, &tr.times(), &pressures),
            ledger.max_relative_residual()
        );
    }
    Ok(())
}
