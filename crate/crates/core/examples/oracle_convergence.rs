//! Full solver against the exact single-mode solution on the unit interval.
//! Under time-step refinement the error settles at the spatial error of the
//! mesh.

use porovisco::discretization::{assemble_forms, build_mesh, FieldVec};
use porovisco::model::{InitialSpec, PhysParams};
use porovisco::operators::SolverConfig;
use porovisco::oracle1d::{discrete_mode, ModalExpansion};
use porovisco::sources::SourceSpec;
use porovisco::timestepper::{run, StepperOptions};

fn main() -> porovisco::Result<()> {
    let params = PhysParams::default().with_c0(0.1).with_delta1(0.5);
    let b = assemble_forms(&build_mesh(1, 128)?, &params)?;
    let (p_hat, u_hat) = discrete_mode(&b, 1, &SolverConfig::default())?;
    let exact = ModalExpansion::new(&params, vec![(1, 1.0, 1.0)])?;
    let t_end = 0.1;
    let (pf, uf) = (exact.pressure_fn(t_end)?, exact.displacement_fn(t_end)?);

    println!("{:>10} {:>14} {:>14}", "dt", "L2 err p", "L2 err u");
    for dt in [4e-3, 2e-3, 1e-3, 5e-4] {
        let spec = InitialSpec::pressure_displacement(p_hat.clone(), FieldVec::displacement(u_hat.coeffs.clone()));
        let tr = run(
            &b,
            &params,
            &spec,
            &SourceSpec::zero(),
            &StepperOptions::crank_nicolson(dt, t_end),
        )?;
        let s = tr.last();
        println!(
            "{dt:>10.1e} {:>14.6e} {:>14.6e}",
            b.l2_error_pressure(&s.p, &pf),
            b.l2_error_displacement(&s.u, &uf)
        );
    }
    Ok(())
}
