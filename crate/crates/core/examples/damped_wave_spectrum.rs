//! Spectrum of the first-order damped-wave generator and the decay of a run
//! started on its slowest eigenvector.

use porovisco::diagnostics::{fit_decay_rate, y_norm_series};
use porovisco::discretization::{assemble_forms, build_mesh};
use porovisco::model::{InitialSpec, PhysParams};
use porovisco::operators::SolverConfig;
use porovisco::reductions::{build_first_order_generator, slowest_mode, solve_strongly_damped_wave, spectrum_report};
use porovisco::sources::SourceSpec;
use porovisco::timestepper::StepperOptions;

fn main() -> porovisco::Result<()> {
    let cfg = SolverConfig::default();
    println!(
        "{:>6} {:>6} {:>14} {:>12} {:>12}",
        "c0", "delta1", "abscissa", "oscillatory", "fitted rate"
    );
    for c0 in [0.01, 0.1, 1.0] {
        for d1 in [0.01, 0.1, 1.0] {
            let params = PhysParams::default().with_c0(c0).with_delta1(d1);
            let b = assemble_forms(&build_mesh(1, 48)?, &params)?;
            let gen = build_first_order_generator(&b, &params, &cfg)?;
            let rep = spectrum_report(&gen)?;
            let mode = slowest_mode(&gen, &rep)?;
            let t_end = 3.0 / -rep.spectral_abscissa;
            let opts = StepperOptions::crank_nicolson(t_end / 300.0, t_end);
            let tr = solve_strongly_damped_wave(
                &b,
                &params,
                &InitialSpec::pressure_rate(mode.p0, mode.p1),
                &SourceSpec::zero(),
                &opts,
            )?;
            let fit = fit_decay_rate(&tr.times, &y_norm_series(&b, &params, &tr)?, None, "Y-norm")?;
            println!(
                "{c0:>6} {d1:>6} {:>14.6e} {:>12} {:>12.6e}",
                rep.spectral_abscissa, rep.oscillatory_count, fit.gamma_fit
            );
        }
    }
    Ok(())
}
