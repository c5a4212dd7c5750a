use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the adjusted fluid content relation `delta2 = alpha * delta1`.
pub const ADJUSTED_CONTENT_TOL: f64 = 1e-12;

/// Material parameters of the poro-visco-elastic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysParams {
    pub lambda_e: f64,
    pub mu: f64,
    pub alpha: f64,
    #[serde(default)]
    pub c0: f64,
    pub kappa: f64,
    #[serde(default)]
    pub delta1: f64,
    #[serde(default)]
    pub delta2: f64,
    #[serde(default)]
    pub lambda_star: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            lambda_e: 1.0,
            mu: 1.0,
            alpha: 1.0,
            c0: 0.0,
            kappa: 1.0,
            delta1: 0.0,
            delta2: 0.0,
            lambda_star: 0.0,
        }
    }
}

impl PhysParams {
    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn with_delta1(mut self, delta1: f64) -> Self {
        self.delta1 = delta1;
        self
    }

    /// Sets `delta2 = alpha * delta1` for the current `alpha` and `delta1`.
    pub fn with_adjusted_content(mut self) -> Self {
        self.delta2 = self.alpha * self.delta1;
        self
    }

    pub fn with_lambda_star(mut self, lambda_star: f64) -> Self {
        self.lambda_star = lambda_star;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_lame(mut self, lambda_e: f64, mu: f64) -> Self {
        self.lambda_e = lambda_e;
        self.mu = mu;
        self
    }

    /// P-wave modulus `lambda + 2 mu`.
    pub fn p_modulus(&self) -> f64 {
        self.lambda_e + 2.0 * self.mu
    }

    pub fn regime(&self) -> Result<RegimeTag> {
        classify_regime(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeKind {
    ClassicalBiot,
    ViscoStandardContent,
    ViscoAdjustedContent,
    SecondaryConsolidation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compressibility {
    Incompressible,
    Compressible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegimeTag {
    pub kind: RegimeKind,
    pub compressibility: Compressibility,
}

impl RegimeTag {
    pub fn is_compressible(&self) -> bool {
        self.compressibility == Compressibility::Compressible
    }
}

impl std::fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}/{:?}", self.kind, self.compressibility)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_params(p: &PhysParams) -> ValidationReport {
    let mut r = ValidationReport::default();
    let fields = [
        ("lambda_e", p.lambda_e),
        ("mu", p.mu),
        ("alpha", p.alpha),
        ("c0", p.c0),
        ("kappa", p.kappa),
        ("delta1", p.delta1),
        ("delta2", p.delta2),
        ("lambda_star", p.lambda_star),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            r.violations.push(format!("{name} must be finite, got {v}"));
        }
    }
    if !r.violations.is_empty() {
        return r;
    }
    for (name, v) in [
        ("mu", p.mu),
        ("lambda_e", p.lambda_e),
        ("alpha", p.alpha),
        ("kappa", p.kappa),
    ] {
        if v <= 0.0 {
            r.violations.push(format!("{name} > 0 required, got {v}"));
        }
    }
    for (name, v) in [
        ("c0", p.c0),
        ("delta1", p.delta1),
        ("delta2", p.delta2),
        ("lambda_star", p.lambda_star),
    ] {
        if v < 0.0 {
            r.violations.push(format!("{name} >= 0 required, got {v}"));
        }
    }
    if p.delta2 > 0.0 {
        if p.delta1 <= 0.0 {
            r.violations
                .push("δ₂ > 0 requires δ₁ > 0 (delta2 > 0 with delta1 = 0)".into());
        } else if (p.delta2 - p.alpha * p.delta1).abs() > ADJUSTED_CONTENT_TOL * p.alpha * p.delta1 {
            r.violations.push(format!(
                "δ₂ = α δ₁ required when delta2 > 0 (delta2 = {}, alpha * delta1 = {})",
                p.delta2,
                p.alpha * p.delta1
            ));
        }
    }
    if p.lambda_star > 0.0 && p.delta1 > 0.0 {
        r.violations
            .push("λ* > 0 and δ₁ > 0 cannot be combined (lambda_star with delta1)".into());
    }
    if p.lambda_star > 0.0 && p.delta2 > 0.0 {
        r.violations.push("λ* > 0 and δ₂ > 0 cannot be combined".into());
    }
    if r.violations.is_empty() {
        let classical = p.delta1 == 0.0 && p.lambda_star == 0.0;
        if classical && p.c0 == 0.0 && p.alpha != 1.0 {
            r.warnings
                .push("incompressible classical Biot usually takes alpha = 1".into());
        }
        if p.c0 == 0.0 && p.delta2 > 0.0 {
            r.warnings
                .push("adjusted fluid content with c0 = 0 is physically dubious".into());
        }
    }
    r
}

pub fn classify_regime(p: &PhysParams) -> Result<RegimeTag> {
    let report = validate_params(p);
    if !report.is_valid() {
        return Err(Error::InvalidParams(report.violations));
    }
    let kind = if p.lambda_star > 0.0 {
        RegimeKind::SecondaryConsolidation
    } else if p.delta2 > 0.0 {
        RegimeKind::ViscoAdjustedContent
    } else if p.delta1 > 0.0 {
        RegimeKind::ViscoStandardContent
    } else {
        RegimeKind::ClassicalBiot
    };
    let compressibility = if p.c0 > 0.0 {
        Compressibility::Compressible
    } else {
        Compressibility::Incompressible
    };
    Ok(RegimeTag { kind, compressibility })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_each_regime() {
        let base = PhysParams::default();
        let t = classify_regime(&base).unwrap();
        assert_eq!(t.kind, RegimeKind::ClassicalBiot);
        assert_eq!(t.compressibility, Compressibility::Incompressible);

        let t = classify_regime(&base.with_c0(0.1).with_delta1(0.5)).unwrap();
        assert_eq!(t.kind, RegimeKind::ViscoStandardContent);
        assert!(t.is_compressible());

        let t = classify_regime(&base.with_delta1(0.5).with_adjusted_content()).unwrap();
        assert_eq!(t.kind, RegimeKind::ViscoAdjustedContent);

        let t = classify_regime(&base.with_lambda_star(2.0)).unwrap();
        assert_eq!(t.kind, RegimeKind::SecondaryConsolidation);
    }

    #[test]
    fn mismatched_delta2_names_the_relation() {
        let p = PhysParams {
            delta1: 0.5,
            delta2: 0.3,
            ..Default::default()
        };
        match classify_regime(&p) {
            Err(Error::InvalidParams(v)) => assert!(v.iter().any(|m| m.contains("δ₂ = α δ₁"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_forbidden_combinations() {
        let p = PhysParams {
            delta2: 0.5,
            ..Default::default()
        };
        assert!(matches!(classify_regime(&p), Err(Error::InvalidParams(_))));
        let p = PhysParams::default().with_delta1(1.0).with_lambda_star(1.0);
        assert!(matches!(classify_regime(&p), Err(Error::InvalidParams(_))));
        let p = PhysParams::default().with_lame(1.0, 0.0);
        assert!(matches!(classify_regime(&p), Err(Error::InvalidParams(_))));
        let p = PhysParams::default().with_c0(f64::NAN);
        assert!(matches!(classify_regime(&p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn warns_on_alpha_for_incompressible_classical() {
        let r = validate_params(&PhysParams::default().with_alpha(0.7));
        assert!(r.is_valid());
        assert_eq!(r.warnings.len(), 1);
    }
}
