//! With `delta2 = alpha delta1` the pressure decouples: the full solver and
//! the pressure-only Biot-type solver agree to solver tolerance.

use porovisco::discretization::{assemble_forms, build_mesh, project_displacement, project_pressure};
use porovisco::model::{InitialSpec, PhysParams};
use porovisco::reductions::solve_reduced_biot;
use porovisco::sources::SourceSpec;
use porovisco::timestepper::{run, StepperOptions};

fn main() -> porovisco::Result<()> {
    for c0 in [0.0, 1.0] {
        let params = PhysParams::default()
            .with_c0(c0)
            .with_delta1(0.5)
            .with_adjusted_content();
        let b = assemble_forms(&build_mesh(2, 10)?, &params)?;
        let p0 = project_pressure(&b, &|x| (std::f64::consts::PI * x[0]).cos() * x[1]);
        let u0 = project_displacement(&b, &|x| [x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]), 0.0]);
        let opts = StepperOptions::crank_nicolson(0.01, 0.3);
        let full = run(
            &b,
            &params,
            &InitialSpec::pressure_displacement(p0.clone(), u0),
            &SourceSpec::zero(),
            &opts,
        )?;
        let reduced = solve_reduced_biot(&b, &params, &InitialSpec::pressure(p0), &SourceSpec::zero(), &opts)?;
        let worst = full
            .states
            .iter()
            .zip(&reduced.p)
            .map(|(s, p)| (&s.p - p).norm() / p.norm())
            .fold(0.0, f64::max);
        println!("c0 = {c0}: max relative pressure difference {worst:.2e}");
    }
    Ok(())
}
