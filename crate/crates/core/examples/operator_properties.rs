//! Symmetry, monotonicity and conditioning of `B` and `𝓑 = c0 I + alpha^2 B`
//! on 1D and 2D meshes, for both displacement elements.

use porovisco::discretization::{assemble_forms_with, build_mesh, DisplacementElement};
use porovisco::model::PhysParams;
use porovisco::operators::{check_operator_properties, SolverConfig};

fn main() -> porovisco::Result<()> {
    let params = PhysParams::default().with_c0(0.01).with_delta1(0.2);
    println!(
        "{:>3} {:>4} {:>4} {:>12} {:>12} {:>12} {:>12}",
        "dim", "n", "el", "sym defect", "B ritz min", "B ritz max", "cond 𝓑"
    );
    for (dim, n) in [(1, 64), (2, 8), (2, 16)] {
        for el in [DisplacementElement::P1, DisplacementElement::P2] {
            let b = assemble_forms_with(&build_mesh(dim, n)?, &params, el)?;
            let r = check_operator_properties(&b, &params, &SolverConfig::default())?;
            println!(
                "{dim:>3} {n:>4} {:>4} {:>12.3e} {:>12.4e} {:>12.4e} {:>12.4e}",
                format!("{el:?}"),
                r.b_symmetry_defect,
                r.b_ritz_min,
                r.b_ritz_max,
                r.calb_condition
            );
            if let Some((lo, hi)) = r.r_spectrum {
                println!(
                    "{:>28} R spectrum in [{lo:.4e}, {hi:.4e}], 1/delta1 = {}",
                    "",
                    1.0 / params.delta1
                );
            }
        }
    }
    Ok(())
}
