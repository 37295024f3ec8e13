//! Holonomy analysis and the seamless deformation of the sliced layout.

mod deform;
mod field;
mod holonomy;

pub use deform::{
    dirichlet_energy, quantize_to_grid, snap_and_solve, Axis, BoundaryAxis, DeformedImmersion,
    SnapOptions, SnappedPairing,
};
pub use field::{build_cross_field, induced_metric, CrossField, COPY_TOL};
pub use holonomy::{
    check_holonomy_condition, holonomy_of_loop, holonomy_signature, layout_signature,
    quarter_turn_distance, vertex_face_loop, Generator, GeneratorKind, HolonomyCheck,
    HolonomySignature,
};
