//! Batch front-end: scenario runs and the verification suite, with
//! deterministic CSV and JSON artifacts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure,
//! 4 verification failure (`--strict` runs and `verify`).

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{
    InitialConfig, MeshConfig, OutputsConfig, ScenarioConfig, SolverKind, SourcesConfig, Startup, TimeConfig,
};

use crate::diagnostics::{energy_ledger, identity_residual, EnergyLedger, IdentitySeries, LedgerForm};
use crate::discretization::OperatorBundle;
use crate::error::Error;
use crate::linalg::sparse::bilinear;
use crate::reductions::{
    build_first_order_generator, solve_ode_q_form, solve_reduced_biot, solve_strongly_damped_wave, spectrum_report,
    PressureTrajectory,
};
use crate::timestepper::{run, Trajectory};
use crate::verify::{run_suite, Fault, Level, SuiteReport, VerifyOptions};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Whether dense matrices may be formed for spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenseMode {
    /// Dense up to the default size threshold.
    #[default]
    Auto,
    Off,
    /// No size limit.
    Force,
}

impl std::str::FromStr for DenseMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "off" => Ok(Self::Off),
            "force" => Ok(Self::Force),
            _ => Err(format!("unknown dense mode `{s}` (auto, off, force)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub strict: bool,
    pub dense_mode: DenseMode,
    /// Overrides `outputs.dir`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

/// Errors caused by the scenario itself rather than by a solve.
fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParams(_)
            | Error::InvalidResolution(_)
            | Error::InvalidDimension(_)
            | Error::SpaceMismatch { .. }
            | Error::InvalidRegime(_)
            | Error::Underspecified(_)
            | Error::Inconsistent { .. }
            | Error::NotAdmissible { .. }
            | Error::NonZeroMean { .. }
            | Error::MissingTimeDerivative(_)
            | Error::UnsupportedSource(_)
            | Error::RegimeMismatch(_)
            | Error::Config(_)
    )
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: if is_config_error(&e) { EXIT_CONFIG } else { EXIT_SOLVER },
            message: e.to_string(),
        }
    }
}

/// Git-style content hash: SHA-256 of `blob <len>\0<bytes>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// 17 significant digits.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: impl IntoIterator<Item = String>) -> Self {
        Self {
            columns: columns.into_iter().collect(),
            rows: Vec::new(),
        }
    }

    fn to_csv(&self) -> Result<Vec<u8>, Error> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn l2(m: &nalgebra_sparse::CsrMatrix<f64>, v: &DVector<f64>) -> f64 {
    bilinear(m, v, v).max(0.0).sqrt()
}

fn full_trajectory_table(b: &OperatorBundle, tr: &Trajectory, full_fields: bool) -> Table {
    let mut cols: Vec<String> = ["t", "p_l2", "u_l2", "u_dot_l2"].map(String::from).to_vec();
    if full_fields {
        cols.extend((0..b.num_pressure_dofs()).map(|i| format!("p_{i}")));
        cols.extend((0..b.num_displacement_dofs()).map(|i| format!("u_{i}")));
    }
    let mut t = Table::new(cols);
    for s in &tr.states {
        let mut r = vec![
            fmt(s.t),
            fmt(l2(b.mp(), &s.p)),
            fmt(l2(b.mu(), &s.u)),
            fmt(l2(b.mu(), &s.u_dot)),
        ];
        if full_fields {
            r.extend(s.p.iter().chain(s.u.iter()).map(|v| fmt(*v)));
        }
        t.rows.push(r);
    }
    t
}

fn pressure_trajectory_table(b: &OperatorBundle, tr: &PressureTrajectory, full_fields: bool) -> Table {
    let mut cols = vec!["t".to_string(), "p_l2".into()];
    if tr.p_t.is_some() {
        cols.push("p_t_l2".into());
    }
    if tr.q.is_some() {
        cols.push("q_l2".into());
    }
    if full_fields {
        cols.extend((0..b.num_pressure_dofs()).map(|i| format!("p_{i}")));
    }
    let mut t = Table::new(cols);
    for (i, &time) in tr.times.iter().enumerate() {
        let mut r = vec![fmt(time), fmt(l2(b.mp(), &tr.p[i]))];
        if let Some(pt) = &tr.p_t {
            r.push(fmt(l2(b.mp(), &pt[i])));
        }
        if let Some(q) = &tr.q {
            // q is a dual quantity; its Euclidean norm is reported.
            r.push(fmt(q[i].norm()));
        }
        if full_fields {
            r.extend(tr.p[i].iter().map(|v| fmt(*v)));
        }
        t.rows.push(r);
    }
    t
}

const LEDGER_COLUMNS: [&str; 9] = [
    "t",
    "elastic",
    "storage",
    "viscous",
    "darcy",
    "consolidation",
    "numerical",
    "source_work",
    "residual",
];
const IDENTITY_COLUMNS: [&str; 4] = ["identity", "t", "residual", "relative"];

fn ledger_table(ledger: Option<&EnergyLedger>) -> Table {
    let mut t = Table::new(LEDGER_COLUMNS.map(String::from));
    for r in ledger.map(|l| l.rows.as_slice()).unwrap_or_default() {
        t.rows.push(
            [
                r.t,
                r.elastic,
                r.storage,
                r.viscous,
                r.darcy,
                r.consolidation,
                r.numerical,
                r.source_work,
                r.residual,
            ]
            .map(fmt)
            .to_vec(),
        );
    }
    t
}

fn identity_table(series: &[IdentitySeries]) -> Table {
    let mut t = Table::new(IDENTITY_COLUMNS.map(String::from));
    for s in series {
        for (&time, &v) in s.times.iter().zip(&s.values) {
            let rel = if s.scale > 0.0 { v / s.scale } else { 0.0 };
            t.rows
                .push(vec![s.kind.name().to_string(), fmt(time), fmt(v), fmt(rel)]);
        }
    }
    t
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub dir: PathBuf,
    pub regime: String,
    /// Strict-mode checks that failed; empty without `--strict`.
    pub strict_failures: Vec<String>,
}

/// Loads a scenario (TOML, or a previous `manifest.json`) and runs it.
pub fn run_scenario(path: &Path, flags: &RunFlags) -> Result<ScenarioOutcome, CliError> {
    let cfg = ScenarioConfig::load(path).map_err(|e| CliError::config(e.to_string()))?;
    let dir = flags.out.clone().unwrap_or_else(|| cfg.outputs.dir.clone());
    run_config(&cfg, &dir, flags)
}

/// Runs several scenarios in parallel. With `--out`, each scenario writes
/// to a subdirectory named after its file stem.
pub fn run_batch(paths: &[PathBuf], flags: &RunFlags) -> Vec<(PathBuf, Result<ScenarioOutcome, CliError>)> {
    if paths.len() == 1 {
        return vec![(paths[0].clone(), run_scenario(&paths[0], flags))];
    }
    let dirs: Vec<Result<PathBuf, CliError>> = paths
        .iter()
        .map(|p| match &flags.out {
            Some(root) => Ok(root.join(p.file_stem().unwrap_or_default())),
            None => ScenarioConfig::load(p)
                .map(|c| c.outputs.dir)
                .map_err(|e| CliError::config(e.to_string())),
        })
        .collect();
    let mut seen = BTreeSet::new();
    let duplicated: BTreeSet<PathBuf> = dirs
        .iter()
        .flatten()
        .filter(|d| !seen.insert(d.to_path_buf()))
        .cloned()
        .collect();
    paths
        .par_iter()
        .zip(dirs)
        .map(|(p, dir)| {
            let res = dir.and_then(|dir| {
                if duplicated.contains(&dir) {
                    return Err(CliError::config(format!(
                        "output directory {} is shared by several scenarios",
                        dir.display()
                    )));
                }
                let f = RunFlags {
                    out: Some(dir),
                    ..flags.clone()
                };
                run_scenario(p, &f)
            });
            (p.clone(), res)
        })
        .collect()
}

enum Solved {
    Full(Trajectory),
    Pressure(PressureTrajectory),
}

pub fn run_config(cfg: &ScenarioConfig, dir: &Path, flags: &RunFlags) -> Result<ScenarioOutcome, CliError> {
    let regime = cfg.params.regime().map_err(|e| CliError::config(e.to_string()))?;
    let mut opts = cfg.stepper_options();
    opts.num_steps().map_err(|e| CliError::config(e.to_string()))?;
    opts.solver.dense_threshold = match flags.dense_mode {
        DenseMode::Auto => opts.solver.dense_threshold,
        DenseMode::Off => 0,
        DenseMode::Force => usize::MAX,
    };
    let bundle = cfg.bundle().map_err(|e| CliError::config(e.to_string()))?;
    let sources = cfg.sources().map_err(|e| CliError::config(e.to_string()))?;
    let initial = cfg.initial_spec(&bundle).map_err(|e| CliError::config(e.to_string()))?;
    let full = cfg.solver == SolverKind::Full;
    let kinds = if full {
        cfg.identities(&sources).map_err(|e| CliError::config(e.to_string()))?
    } else if cfg.outputs.identities.as_ref().is_some_and(|v| !v.is_empty()) {
        return Err(CliError::config("identities are evaluated for the full solver only"));
    } else {
        Vec::new()
    };

    let solved = match cfg.solver {
        SolverKind::Full => Solved::Full(run(&bundle, &cfg.params, &initial, &sources, &opts)?),
        SolverKind::Reduced => Solved::Pressure(solve_reduced_biot(&bundle, &cfg.params, &initial, &sources, &opts)?),
        SolverKind::DampedWave => Solved::Pressure(solve_strongly_damped_wave(
            &bundle,
            &cfg.params,
            &initial,
            &sources,
            &opts,
        )?),
        SolverKind::QForm => Solved::Pressure(solve_ode_q_form(
            &bundle,
            &cfg.params,
            &initial,
            &sources,
            &opts,
            cfg.q_form_mode(),
        )?),
    };

    let (trajectory, ledger, series, startup_steps) = match &solved {
        Solved::Full(tr) => {
            let ledger = if cfg.outputs.ledger {
                Some(energy_ledger(&bundle, tr)?)
            } else {
                None
            };
            let series = kinds
                .iter()
                .map(|&k| identity_residual(&bundle, tr, k))
                .collect::<Result<Vec<_>, _>>()?;
            (
                full_trajectory_table(&bundle, tr, cfg.outputs.full_fields),
                ledger,
                series,
                tr.startup_steps,
            )
        }
        Solved::Pressure(tr) => (
            pressure_trajectory_table(&bundle, tr, cfg.outputs.full_fields),
            None,
            Vec::new(),
            tr.startup_steps,
        ),
    };

    let spectrum = if cfg.outputs.spectrum {
        let gen = build_first_order_generator(&bundle, &cfg.params, &opts.solver)?;
        Some(spectrum_report(&gen)?)
    } else {
        None
    };

    let mut strict_failures = Vec::new();
    if flags.strict {
        let tol = cfg.outputs.tolerance;
        for s in &series {
            let (what, v) = if s.kind.is_inequality() {
                ("slack", s.max_relative_slack())
            } else {
                ("residual", s.max_relative())
            };
            if !(v <= tol) {
                strict_failures.push(format!("{} relative {what} {v:.3e} exceeds {tol:e}", s.kind));
            }
        }
        if let Some(l) = &ledger {
            let v = l.max_relative_residual();
            if !(v <= tol) {
                strict_failures.push(format!("energy ledger relative residual {v:.3e} exceeds {tol:e}"));
            }
        }
    }

    let io = |e: std::io::Error| CliError {
        code: EXIT_SOLVER,
        message: format!("writing {}: {e}", dir.display()),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut files = Vec::new();
    for (name, table) in [
        ("trajectory.csv", trajectory),
        ("ledger.csv", ledger_table(ledger.as_ref())),
        ("identities.csv", identity_table(&series)),
    ] {
        let bytes = table.to_csv()?;
        std::fs::write(dir.join(name), &bytes).map_err(io)?;
        files.push(json!({
            "name": name,
            "hash": blob_hash(&bytes),
            "columns": table.columns,
            "rows": table.rows.len(),
        }));
    }
    if let Some(s) = &spectrum {
        let bytes = serde_json::to_vec_pretty(s).map_err(Error::from)?;
        std::fs::write(dir.join("spectrum.json"), &bytes).map_err(io)?;
        files.push(json!({ "name": "spectrum.json", "hash": blob_hash(&bytes) }));
    }

    let config_echo = serde_json::to_value(cfg).map_err(Error::from)?;
    let config_bytes = serde_json::to_vec(&config_echo).map_err(Error::from)?;
    let manifest = json!({
        "tool": "porovisco",
        "version": env!("CARGO_PKG_VERSION"),
        "regime": regime.to_string(),
        "solver": cfg.solver,
        "config": config_echo,
        "config_hash": blob_hash(&config_bytes),
        "dofs": { "pressure": bundle.num_pressure_dofs(), "displacement": bundle.num_displacement_dofs() },
        "startup_steps": startup_steps,
        "ledger_form": ledger.as_ref().map(|l| match l.form {
            LedgerForm::Standard => "standard",
            LedgerForm::Adjusted => "adjusted",
        }),
        "identities": series.iter().map(|s| s.kind.name()).collect::<Vec<_>>(),
        "float_format": "17 significant digits, scientific",
        "files": files,
        "strict": flags.strict,
        "strict_failures": strict_failures,
    });
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(Error::from)?;
    std::fs::write(dir.join("manifest.json"), bytes).map_err(io)?;

    let outcome = ScenarioOutcome {
        dir: dir.to_path_buf(),
        regime: regime.to_string(),
        strict_failures,
    };
    if !outcome.strict_failures.is_empty() {
        return Err(CliError {
            code: EXIT_VERIFY,
            message: format!("verification failed: {}", outcome.strict_failures.join("; ")),
        });
    }
    Ok(outcome)
}

/// Runs the verification suite and writes its JSON report to `out`, or
/// returns it for printing. Exit code 4 when any criterion fails.
pub fn run_verify(level: Level, fault: Option<Fault>, out: Option<&Path>) -> Result<(SuiteReport, i32), CliError> {
    let report = run_suite(level, &VerifyOptions { fault });
    if let Some(path) = out {
        let bytes = serde_json::to_vec_pretty(&report).map_err(Error::from)?;
        std::fs::write(path, bytes).map_err(|e| CliError {
            code: EXIT_SOLVER,
            message: format!("writing {}: {e}", path.display()),
        })?;
    }
    let code = if report.passed { 0 } else { EXIT_VERIFY };
    Ok((report, code))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_convention() {
        // sha256 of b"blob 5\0hello", as in a SHA-256 git repository.
        assert_eq!(
            blob_hash(b"hello"),
            "8aec4e4876f854f688d0ebfc8f37598f38e5fd6903cccc850ca36591175aeb60"
        );
    }

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Underspecified("x".into())).code, EXIT_CONFIG);
        assert_eq!(
            CliError::from(Error::SolveFailure {
                what: "cg".into(),
                iterations: 1,
                residual: 1.0
            })
            .code,
            EXIT_SOLVER
        );
    }
}
