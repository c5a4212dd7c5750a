use std::collections::BTreeMap;

use nalgebra::DVector;

use super::params::{classify_regime, PhysParams, RegimeKind, RegimeTag};
use crate::discretization::{FieldVec, OperatorBundle, Space};
use crate::error::{Error, Result};
use crate::linalg::sparse::{bilinear, spmv};
use crate::operators::{calb_dual, solve_calb_dual, SolverConfig};
use crate::sources::SourceSpec;

/// Relative tolerance for accepting redundant initial data.
pub const CONSISTENCY_TOL: f64 = 1e-10;
/// Relative tolerance on the mean of pressure-like data.
pub const MEAN_TOL: f64 = 1e-12;

/// Initial data as supplied by the user. `d0` is the initial fluid content
/// and `p1` the initial pressure rate.
#[derive(Debug, Clone, Default)]
pub struct InitialSpec {
    pub p0: Option<FieldVec>,
    pub u0: Option<FieldVec>,
    pub d0: Option<FieldVec>,
    pub p1: Option<FieldVec>,
    /// Require the displacement to be determined, not only the pressure.
    pub want_displacement: bool,
}

impl InitialSpec {
    pub fn pressure(p0: FieldVec) -> Self {
        Self {
            p0: Some(p0),
            ..Default::default()
        }
    }

    pub fn pressure_displacement(p0: FieldVec, u0: FieldVec) -> Self {
        Self {
            p0: Some(p0),
            u0: Some(u0),
            want_displacement: true,
            ..Default::default()
        }
    }

    pub fn content(d0: FieldVec) -> Self {
        Self {
            d0: Some(d0),
            ..Default::default()
        }
    }

    pub fn pressure_rate(p0: FieldVec, p1: FieldVec) -> Self {
        Self {
            p0: Some(p0),
            p1: Some(p1),
            ..Default::default()
        }
    }

    pub fn with_displacement_required(mut self) -> Self {
        self.want_displacement = true;
        self
    }

    fn given(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (name, f) in [("p0", &self.p0), ("u0", &self.u0), ("d0", &self.d0), ("p1", &self.p1)] {
            if f.is_some() {
                v.push(name);
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Given,
    Derived,
}

/// Fully determined initial state.
#[derive(Debug, Clone)]
pub struct ResolvedInitialState {
    pub regime: RegimeTag,
    pub p: FieldVec,
    pub u: Option<FieldVec>,
    pub u_t: Option<FieldVec>,
    pub p_t: Option<FieldVec>,
    /// Fluid content in primal (nodal) form, when determined.
    pub d: Option<FieldVec>,
    pub origin: BTreeMap<&'static str, Origin>,
    /// Relative defect of the algebraic mass constraint at `t = 0`
    /// (incompressible standard visco-elastic case with a given `u0`).
    pub constraint_defect: Option<f64>,
    pub want_displacement: bool,
}

impl ResolvedInitialState {
    /// Feeds the resolved state back as a maximal, consistent spec.
    pub fn as_spec(&self) -> InitialSpec {
        let recognized = recognized(&self.regime);
        let keep = |name: &str, f: &Option<FieldVec>| if recognized.contains(&name) { f.clone() } else { None };
        InitialSpec {
            p0: Some(self.p.clone()),
            u0: keep("u0", &self.u),
            d0: keep("d0", &self.d),
            p1: keep("p1", &self.p_t),
            want_displacement: self.want_displacement,
        }
    }

    pub fn origin_of(&self, name: &str) -> Option<Origin> {
        self.origin.get(name).copied()
    }
}

/// Initial quantities that may appear in a spec for the given regime.
pub fn recognized(regime: &RegimeTag) -> &'static [&'static str] {
    match (regime.kind, regime.is_compressible()) {
        (RegimeKind::ViscoStandardContent, true) => &["p0", "u0", "d0", "p1"],
        _ => &["p0", "u0", "d0"],
    }
}

struct Ctx<'a> {
    bundle: &'a OperatorBundle,
    params: &'a PhysParams,
    f0: DVector<f64>,
    s0: DVector<f64>,
}

impl Ctx<'_> {
    /// `Ke^{-1} (F0 + alpha D^T p)`, the displacement in elastic equilibrium
    /// with `p`.
    fn u_eq(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut rhs = spmv(self.bundle.ddiv_t(), p) * self.params.alpha;
        rhs += &self.f0;
        self.bundle.ke_solve(&rhs)
    }

    fn primal(&self, dual: &DVector<f64>) -> DVector<f64> {
        let mut v = self.bundle.mp_solve(dual);
        self.bundle.remove_mean(&mut v);
        v
    }

    /// Primal fluid content `c0 p + alpha div u + delta2 div u_t`.
    fn content(&self, p: &DVector<f64>, u: &DVector<f64>, u_t: Option<&DVector<f64>>) -> DVector<f64> {
        let mut w = u * self.params.alpha;
        if let Some(ut) = u_t {
            w.axpy(self.params.delta2, ut, 1.0);
        }
        let mut d = self.primal(&spmv(self.bundle.ddiv(), &w));
        d.axpy(self.params.c0, p, 1.0);
        d
    }

    fn l2(&self, v: &DVector<f64>, space: Space) -> f64 {
        let m = if space == Space::Displacement {
            self.bundle.mu()
        } else {
            self.bundle.mp()
        };
        bilinear(m, v, v).max(0.0).sqrt()
    }

    fn check(&self, name: &str, given: &FieldVec, derived: &DVector<f64>) -> Result<()> {
        let diff = self.l2(&(&given.coeffs - derived), given.space);
        let scale = self.l2(&given.coeffs, given.space).max(self.l2(derived, given.space));
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        if rel > CONSISTENCY_TOL {
            return Err(Error::Inconsistent {
                quantity: name.to_string(),
                residual: rel,
            });
        }
        Ok(())
    }
}

pub fn resolve_initial_state(
    bundle: &OperatorBundle,
    params: &PhysParams,
    spec: &InitialSpec,
    sources: &SourceSpec,
    config: &SolverConfig,
) -> Result<ResolvedInitialState> {
    let regime = classify_regime(params)?;
    bundle.check_compatible(params)?;
    let np = bundle.num_pressure_dofs();
    let nu = bundle.num_displacement_dofs();
    for (name, f, space, n) in [
        ("p0", &spec.p0, Space::PressureZeroMean, np),
        ("d0", &spec.d0, Space::PressureZeroMean, np),
        ("p1", &spec.p1, Space::PressureZeroMean, np),
        ("u0", &spec.u0, Space::Displacement, nu),
    ] {
        if let Some(f) = f {
            let v = f.expect_space(space)?;
            if v.len() != n {
                return Err(Error::SpaceMismatch {
                    expected: format!("{name} with {n} coefficients"),
                    got: format!("{} coefficients", v.len()),
                });
            }
            if space == Space::PressureZeroMean {
                let ratio = bundle.relative_mean(v);
                if ratio > MEAN_TOL {
                    return Err(Error::NonZeroMean {
                        quantity: name.to_string(),
                        ratio,
                    });
                }
            }
        }
    }
    let allowed = recognized(&regime);
    for name in spec.given() {
        if !allowed.contains(&name) {
            return Err(Error::NotAdmissible {
                quantity: name.to_string(),
            });
        }
    }

    let ctx = Ctx {
        bundle,
        params,
        f0: sources.force_load(bundle, 0.0),
        s0: sources.fluid_load(bundle, 0.0),
    };
    let mut origin = BTreeMap::new();
    let mut mark = |name: &'static str, given: bool| {
        origin.insert(name, if given { Origin::Given } else { Origin::Derived });
    };
    let need_p0 = |what: &str| -> Result<&FieldVec> {
        spec.p0
            .as_ref()
            .ok_or_else(|| Error::Underspecified(format!("{regime} needs p0 {what}")))
    };
    let a = params.alpha;

    let mut constraint_defect = None;
    let (p, u, u_t, p_t, d) = match regime.kind {
        RegimeKind::ClassicalBiot => {
            let p = if let Some(p0) = &spec.p0 {
                mark("p0", true);
                p0.coeffs.clone()
            } else if let Some(d0) = &spec.d0 {
                mark("p0", false);
                let mut rhs = spmv(bundle.mp(), &d0.coeffs);
                rhs.axpy(-a, &spmv(bundle.ddiv(), &bundle.ke_solve(&ctx.f0)), 1.0);
                solve_calb_dual(bundle, params, &rhs, config)?
            } else {
                return Err(Error::Underspecified(format!("{regime} needs d0 or p0")));
            };
            let u = ctx.u_eq(&p);
            if let Some(u0) = &spec.u0 {
                ctx.check("u0", u0, &u)?;
            }
            mark("u0", spec.u0.is_some());
            let d = ctx.content(&p, &u, None);
            if let (Some(d0), Some(_)) = (&spec.d0, &spec.p0) {
                ctx.check("d0", d0, &d)?;
            }
            mark("d0", spec.d0.is_some());
            (p, Some(u), None, None, Some(d))
        }
        RegimeKind::ViscoStandardContent if !regime.is_compressible() => {
            let p0 = need_p0("(and u0 for the displacement)")?;
            mark("p0", true);
            match &spec.u0 {
                Some(u0) => {
                    mark("u0", true);
                    let ut = (ctx.u_eq(&p0.coeffs) - &u0.coeffs) / params.delta1;
                    mark("u_t", false);
                    let d = ctx.content(&p0.coeffs, &u0.coeffs, None);
                    if let Some(d0) = &spec.d0 {
                        ctx.check("d0", d0, &d)?;
                    }
                    mark("d0", spec.d0.is_some());
                    let dut = spmv(bundle.ddiv(), &ut) * a;
                    let ap = spmv(bundle.ap(), &p0.coeffs);
                    let defect = &dut + &ap - &ctx.s0;
                    let scale = dut.norm().max(ap.norm()).max(ctx.s0.norm());
                    constraint_defect = Some(if scale == 0.0 { 0.0 } else { defect.norm() / scale });
                    (p0.coeffs.clone(), Some(u0.coeffs.clone()), Some(ut), None, Some(d))
                }
                None => {
                    if spec.want_displacement {
                        return Err(Error::Underspecified(format!(
                            "{regime} determines the displacement only from p0 together with u0"
                        )));
                    }
                    let d = spec.d0.as_ref().map(|d0| d0.coeffs.clone());
                    mark("d0", spec.d0.is_some());
                    (p0.coeffs.clone(), None, None, None, d)
                }
            }
        }
        RegimeKind::ViscoStandardContent => {
            let p0 = need_p0("with u0 or p1")?;
            mark("p0", true);
            let (u, ut) = if let Some(u0) = &spec.u0 {
                mark("u0", true);
                let ut = (ctx.u_eq(&p0.coeffs) - &u0.coeffs) / params.delta1;
                (u0.coeffs.clone(), ut)
            } else if let Some(p1) = &spec.p1 {
                mark("u0", false);
                // Minimum-energy u_t(0) compatible with the mass balance.
                let mut g = &ctx.s0 - spmv(bundle.ap(), &p0.coeffs);
                g.axpy(-params.c0, &spmv(bundle.mp(), &p1.coeffs), 1.0);
                g /= a;
                let unit = PhysParams {
                    c0: 0.0,
                    alpha: 1.0,
                    ..*params
                };
                let y = solve_calb_dual(bundle, &unit, &g, config)?;
                let ut = bundle.ke_solve(&spmv(bundle.ddiv_t(), &y));
                let u = ctx.u_eq(&p0.coeffs) - &ut * params.delta1;
                (u, ut)
            } else {
                return Err(Error::Underspecified(format!("{regime} needs p0 with u0 or p1")));
            };
            mark("u_t", false);
            let mut rhs = &ctx.s0 - spmv(bundle.ap(), &p0.coeffs);
            rhs.axpy(-a, &spmv(bundle.ddiv(), &ut), 1.0);
            let pt = ctx.primal(&rhs) / params.c0;
            if let (Some(p1), Some(_)) = (&spec.p1, &spec.u0) {
                ctx.check("p1", p1, &pt)?;
            }
            if let (Some(u0), Some(_)) = (&spec.u0, &spec.p1) {
                ctx.check("u0", u0, &u)?;
            }
            mark("p1", spec.p1.is_some());
            let d = ctx.content(&p0.coeffs, &u, None);
            if let Some(d0) = &spec.d0 {
                ctx.check("d0", d0, &d)?;
            }
            mark("d0", spec.d0.is_some());
            (p0.coeffs.clone(), Some(u), Some(ut), Some(pt), Some(d))
        }
        RegimeKind::ViscoAdjustedContent => {
            let p0 = need_p0("(d0 alone does not fix the state)")?;
            mark("p0", true);
            let mut d_dual = calb_dual(bundle, params, &p0.coeffs);
            d_dual.axpy(a, &spmv(bundle.ddiv(), &bundle.ke_solve(&ctx.f0)), 1.0);
            let d = ctx.primal(&d_dual);
            if let Some(d0) = &spec.d0 {
                ctx.check("d0", d0, &d)?;
            }
            mark("d0", spec.d0.is_some());
            match &spec.u0 {
                Some(u0) => {
                    mark("u0", true);
                    mark("u_t", false);
                    let ut = (ctx.u_eq(&p0.coeffs) - &u0.coeffs) / params.delta1;
                    (p0.coeffs.clone(), Some(u0.coeffs.clone()), Some(ut), None, Some(d))
                }
                None if spec.want_displacement => {
                    return Err(Error::Underspecified(format!(
                        "{regime} determines the displacement only from p0 together with u0"
                    )))
                }
                None => (p0.coeffs.clone(), None, None, None, Some(d)),
            }
        }
        RegimeKind::SecondaryConsolidation => {
            let (Some(p0), Some(u0)) = (&spec.p0, &spec.u0) else {
                return Err(Error::Underspecified(format!("{regime} needs p0 and u0")));
            };
            mark("p0", true);
            mark("u0", true);
            let d = ctx.content(&p0.coeffs, &u0.coeffs, None);
            if let Some(d0) = &spec.d0 {
                ctx.check("d0", d0, &d)?;
            }
            mark("d0", spec.d0.is_some());
            (p0.coeffs.clone(), Some(u0.coeffs.clone()), None, None, Some(d))
        }
    };

    Ok(ResolvedInitialState {
        regime,
        p: FieldVec::pressure(p),
        u: u.map(FieldVec::displacement),
        u_t: u_t.map(FieldVec::displacement),
        p_t: p_t.map(FieldVec::pressure),
        d: d.map(FieldVec::pressure),
        origin,
        constraint_defect,
        want_displacement: spec.want_displacement,
    })
}

/// Pressure consistent with `u0` for the incompressible standard
/// visco-elastic case, i.e. the unique `p` with a zero constraint defect.
pub fn consistent_pressure(
    bundle: &OperatorBundle,
    params: &PhysParams,
    u0: &FieldVec,
    sources: &SourceSpec,
    config: &SolverConfig,
) -> Result<FieldVec> {
    if params.delta1 <= 0.0 || params.c0 != 0.0 || params.delta2 != 0.0 {
        return Err(Error::InvalidRegime(
            "consistent pressure is defined for c0 = 0, delta1 > 0, delta2 = 0".into(),
        ));
    }
    let u = u0.expect_space(Space::Displacement)?;
    let (a, d1) = (params.alpha, params.delta1);
    // (alpha^2/delta1 B + A) p = S - alpha/delta1 D Ke^{-1} F + alpha/delta1 D u0
    let f0 = sources.force_load(bundle, 0.0);
    let mut rhs = sources.fluid_load(bundle, 0.0);
    let w = u - bundle.ke_solve(&f0);
    rhs.axpy(a / d1, &spmv(bundle.ddiv(), &w), 1.0);
    let solver = crate::operators::PressureSolver::new(bundle, a * a / (d1 * params.p_modulus()), 1.0)?;
    let p = solver.solve(
        bundle,
        |x| {
            let mut y = crate::operators::b_dual(bundle, x) * (a * a / d1);
            y += spmv(bundle.ap(), x);
            Ok(y)
        },
        &rhs,
        None,
        config,
        "consistent pressure",
    )?;
    Ok(FieldVec::pressure(p))
}
