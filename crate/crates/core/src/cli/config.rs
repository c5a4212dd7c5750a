//! Scenario configuration file schema (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::IdentityKind;
use crate::discretization::{assemble_forms_with, build_mesh, DisplacementElement, OperatorBundle};
use crate::error::{Error, Result};
use crate::fields::{ScalarSpec, Shape, VectorSpec};
use crate::model::{InitialSpec, PhysParams};
use crate::reductions::QFormMode;
use crate::sources::SourceSpec;
use crate::timestepper::{StartupPolicy, StepperOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Coupled displacement-pressure stepper.
    #[default]
    Full,
    /// Pressure-only equation for classical or adjusted-content runs.
    Reduced,
    /// Second-order-in-time pressure equation (compressible visco-elastic).
    DampedWave,
    /// First-order `q = W p` form (incompressible visco-elastic).
    QForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub dim: usize,
    pub n: usize,
    #[serde(default)]
    pub element: DisplacementElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Startup {
    #[default]
    Auto,
    Never,
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "half")]
    pub theta: f64,
    #[serde(default)]
    pub startup: Startup,
    /// Only used by the `q_form` solver.
    #[serde(default)]
    pub q_form_exact: bool,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<VectorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d0: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<Shape>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<VectorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluid: Option<ScalarSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Append every nodal coefficient to `trajectory.csv`.
    #[serde(default)]
    pub full_fields: bool,
    #[serde(default = "yes")]
    pub ledger: bool,
    /// Identity names; `None` selects every identity that applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identities: Option<Vec<String>>,
    #[serde(default)]
    pub spectrum: bool,
    /// Bound on relative identity and ledger residuals under `--strict`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

fn default_tolerance() -> f64 {
    1e-6
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            full_fields: false,
            ledger: true,
            identities: None,
            spectrum: false,
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverKind,
    pub params: PhysParams,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub sources: SourcesConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.apply_seed();
        Ok(cfg)
    }

    /// Reads a TOML scenario, or the `config` echo of a previous run's
    /// `manifest.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let echo = manifest
                .get("config")
                .ok_or_else(|| Error::Config(format!("{} has no `config` entry", path.display())))?;
            let mut cfg: Self = serde_json::from_value(echo.clone()).map_err(|e| Error::Config(e.to_string()))?;
            cfg.apply_seed();
            return Ok(cfg);
        }
        Self::from_toml(&text)
    }

    fn apply_seed(&mut self) {
        let seed = self.seed;
        let i = &mut self.initial;
        for s in [i.p0.as_mut(), i.d0.as_mut(), i.p1.as_mut()].into_iter().flatten() {
            s.seed_default(seed);
        }
        let mut vectors: Vec<&mut VectorSpec> = i.u0.iter_mut().collect();
        vectors.extend(self.sources.force.iter_mut());
        for v in vectors {
            v.x.seed_default(seed);
            v.y.seed_default(seed);
        }
        if let Some(f) = self.sources.fluid.as_mut() {
            f.shape.seed_default(seed);
        }
    }

    pub fn stepper_options(&self) -> StepperOptions {
        let startup = match self.time.startup {
            Startup::Auto => StartupPolicy::Auto,
            Startup::Never => StartupPolicy::Never,
            Startup::Always => StartupPolicy::Always,
        };
        StepperOptions::crank_nicolson(self.time.dt, self.time.t_end)
            .with_theta(self.time.theta)
            .with_startup(startup)
    }

    pub fn q_form_mode(&self) -> QFormMode {
        if self.time.q_form_exact {
            QFormMode::Exact
        } else {
            QFormMode::Theta
        }
    }

    pub fn bundle(&self) -> Result<OperatorBundle> {
        let mesh = build_mesh(self.mesh.dim, self.mesh.n)?;
        assemble_forms_with(&mesh, &self.params, self.mesh.element)
    }

    pub fn sources(&self) -> Result<SourceSpec> {
        let mut s = SourceSpec::zero();
        if let Some(f) = &self.sources.force {
            if let Some((f, f_t)) = f.source()? {
                s = s.with_force(f, Some(f_t));
            }
        }
        if let Some(g) = &self.sources.fluid {
            if let Some((g, g_t)) = g.source()? {
                s = s.with_fluid(g, Some(g_t));
            }
        }
        Ok(s)
    }

    pub fn initial_spec(&self, bundle: &OperatorBundle) -> Result<InitialSpec> {
        let i = &self.initial;
        let mut spec = InitialSpec {
            p0: i.p0.as_ref().map(|s| s.pressure(bundle)).transpose()?,
            u0: i.u0.as_ref().map(|v| v.displacement(bundle)).transpose()?,
            d0: i.d0.as_ref().map(|s| s.pressure(bundle)).transpose()?,
            p1: i.p1.as_ref().map(|s| s.pressure(bundle)).transpose()?,
            ..Default::default()
        };
        spec.want_displacement = self.solver == SolverKind::Full;
        Ok(spec)
    }

    /// Identities to evaluate; explicit names must apply to the regime.
    pub fn identities(&self, sources: &SourceSpec) -> Result<Vec<IdentityKind>> {
        match &self.outputs.identities {
            None => Ok(IdentityKind::ALL
                .iter()
                .copied()
                .filter(|k| k.applies_to(&self.params, sources))
                .collect()),
            Some(names) => names
                .iter()
                .map(|n| {
                    let k: IdentityKind = n.parse()?;
                    if !k.applies_to(&self.params, sources) {
                        return Err(Error::Config(format!(
                            "identity `{k}` does not apply to these parameters and sources"
                        )));
                    }
                    Ok(k)
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[params]
lambda_e = 1.0
mu = 1.0
alpha = 1.0
kappa = 1.0
c0 = 0.1
delta1 = 0.5

[mesh]
dim = 1
n = 16

[time]
dt = 0.01
t_end = 0.1

[initial]
p0 = { kind = "broadband", kmax = 4 }
u0 = { x = { kind = "sine", k = 1 } }
"#;

    #[test]
    fn parses_minimal_and_fills_seed() {
        let mut text = String::from("seed = 9\n");
        text.push_str(MINIMAL);
        let cfg = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.solver, SolverKind::Full);
        assert_eq!(cfg.time.theta, 0.5);
        assert!(matches!(cfg.initial.p0, Some(Shape::Broadband { seed: Some(9), .. })));
        let b = cfg.bundle().unwrap();
        let spec = cfg.initial_spec(&b).unwrap();
        assert!(spec.p0.is_some() && spec.u0.is_some() && spec.want_displacement);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = MINIMAL.replace("n = 16", "n = 16\ncells = 3");
        assert!(matches!(ScenarioConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("c0 = 0.1", "c0 = 0.1\nporosity = 0.3");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn json_echo_round_trips() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        let json = serde_json::to_value(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn explicit_identity_must_apply() {
        let mut cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        cfg.outputs.identities = Some(vec!["firstone".into()]);
        assert!(cfg.identities(&SourceSpec::zero()).is_err());
        cfg.outputs.identities = None;
        let ids = cfg.identities(&SourceSpec::zero()).unwrap();
        assert!(ids.contains(&IdentityKind::Eed1c0));
    }
}
