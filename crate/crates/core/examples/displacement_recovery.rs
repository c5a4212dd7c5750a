//! Recovering the displacement from a pressure history by variation of
//! constants, compared with the coupled solver's displacement.

use porovisco::discretization::{assemble_forms, build_mesh};
use porovisco::model::{InitialSpec, PhysParams};
use porovisco::operators::SolverConfig;
use porovisco::oracle1d::discrete_mode;
use porovisco::sources::SourceSpec;
use porovisco::timestepper::{recover_u_variation_of_constants, run, StepperOptions};

fn main() -> porovisco::Result<()> {
    let params = PhysParams::default().with_c0(0.1).with_delta1(0.5);
    let b = assemble_forms(&build_mesh(1, 64)?, &params)?;
    let (p0, u0) = discrete_mode(&b, 2, &SolverConfig::default())?;
    for dt in [4e-3, 2e-3, 1e-3] {
        let tr = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(p0.clone(), u0.clone()),
            &SourceSpec::zero(),
            &StepperOptions::crank_nicolson(dt, 0.1),
        )?;
        let ps: Vec<_> = tr.states.iter().map(|s| s.p.clone()).collect();
        let rec =
            recover_u_variation_of_constants(&b, &params, &tr.times(), &ps, &tr.states[0].u, &SourceSpec::zero())?;
        let err = tr
            .states
            .iter()
            .zip(&rec)
            .map(|(s, u)| (&s.u - u).norm() / s.u.norm())
            .fold(0.0, f64::max);
        println!("dt = {dt:.0e}: max relative difference {err:.3e}");
    }
    Ok(())
}
