//! Meshes, finite element spaces and assembled forms.

mod assembly;
mod field;
mod mesh;
pub mod quadrature;

pub use assembly::{assemble_forms, assemble_forms_with, DisplacementElement, OperatorBundle};
pub use field::{norm, project_displacement, project_pressure, FieldVec, NormKind, Space};
pub use mesh::{build_mesh, Mesh};
