//! Parameters, regime classification and initial data.

mod initial;
mod params;

pub use initial::{
    consistent_pressure, recognized, resolve_initial_state, InitialSpec, Origin, ResolvedInitialState, CONSISTENCY_TOL,
    MEAN_TOL,
};
pub use params::{
    classify_regime, validate_params, Compressibility, PhysParams, RegimeKind, RegimeTag, ValidationReport,
    ADJUSTED_CONTENT_TOL,
};
