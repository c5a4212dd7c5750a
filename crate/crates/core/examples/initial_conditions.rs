//! Which combinations of initial quantities each regime accepts.

use porovisco::discretization::{assemble_forms, build_mesh, project_displacement, project_pressure, FieldVec};
use porovisco::model::{resolve_initial_state, InitialSpec, PhysParams};
use porovisco::operators::SolverConfig;
use porovisco::sources::SourceSpec;

fn main() -> porovisco::Result<()> {
    let cells = [
        ("classical", PhysParams::default()),
        ("visco, c0 = 0", PhysParams::default().with_delta1(0.5)),
        ("visco, c0 > 0", PhysParams::default().with_c0(1.0).with_delta1(0.5)),
        (
            "adjusted",
            PhysParams::default()
                .with_c0(1.0)
                .with_delta1(0.5)
                .with_adjusted_content(),
        ),
    ];
    let cfg = SolverConfig::default();
    for (name, params) in cells {
        let b = assemble_forms(&build_mesh(1, 16)?, &params)?;
        let p = project_pressure(&b, &|x| (std::f64::consts::PI * x[0]).cos());
        let u = project_displacement(&b, &|x| [0.1 * (std::f64::consts::PI * x[0]).sin(), 0.0]);
        let candidates: [(&str, InitialSpec); 4] = [
            ("p0", InitialSpec::pressure(p.clone())),
            ("d0", InitialSpec::content(p.clone())),
            ("p0+u0", InitialSpec::pressure_displacement(p.clone(), u)),
            (
                "p0+p1",
                InitialSpec::pressure_rate(p.clone(), FieldVec::new(p.space, p.coeffs.clone() * -1.0)),
            ),
        ];
        println!("{name}:");
        for (label, spec) in candidates {
            match resolve_initial_state(&b, &params, &spec, &SourceSpec::zero(), &cfg) {
                Ok(s) => println!(
                    "  {label:<6} accepted; derived {:?}",
                    s.origin
                        .iter()
                        .filter(|(_, o)| format!("{o:?}") == "Derived")
                        .map(|(k, _)| *k)
                        .collect::<Vec<_>>()
                ),
                Err(e) => println!("  {label:<6} rejected: {e}"),
            }
        }
    }
    Ok(())
}
