//! Smoothing of rough fluid content in classical Biot: `‖A p(T)‖` grows like
//! `1/T` as `T` decreases.

use porovisco::diagnostics::smoothing_rate_check;
use porovisco::discretization::{assemble_forms, build_mesh};
use porovisco::fields::Shape;
use porovisco::model::PhysParams;
use porovisco::operators::SolverConfig;

fn main() -> porovisco::Result<()> {
    let params = PhysParams::default();
    let b = assemble_forms(&build_mesh(1, 256)?, &params)?;
    let d0 = Shape::Broadband {
        seed: Some(7),
        kmax: 64,
        exponent: 0.5,
        amplitude: 1.0,
    }
    .pressure(&b)?;
    let t_list: Vec<f64> = (0..9).map(|i| 10f64.powf(-4.0 + 0.25 * i as f64)).collect();
    let rep = smoothing_rate_check(&b, &params, &d0, &t_list, 400, &SolverConfig::default())?;
    println!("{:>10} {:>14}", "T", "‖A p(T)‖");
    for (t, v) in &rep.points {
        println!("{t:>10.3e} {v:>14.6e}");
    }
    println!(
        "log-log slope {:.4}, sup T‖Ap‖/‖d0‖ = {:.4}, participation {:.1}",
        rep.slope, rep.sup_ratio, rep.participation
    );
    Ok(())
}
