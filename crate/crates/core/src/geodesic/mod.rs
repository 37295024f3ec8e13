//! Geodesic tracing on flat cone metrics, separatrices, the rectangular
//! skeleton and its quad subdivision.

mod quad;
mod separatrix;
mod skeleton;
mod trace;

pub use quad::{
    pull_back, quad_quality, quantize_and_subdivide, reconcile_counts, QuadMesh, QualityReport,
};
pub use separatrix::{separatrix_angles, trace_separatrices, Separatrix};
pub use skeleton::{
    boundary_sequences, build_skeleton, lattice_basis, periodic_skeleton, ArcSource, NodeKind,
    Patch, SideArc, Skeleton, SkeletonArc, SkeletonNode, ANGLE_TOL, SIDE_TOL,
};
pub use trace::{
    face_frame, trace_geodesic, Crossing, FacePoint, GeodesicPath, Terminal, TraceOptions, Tracer,
    VERTEX_EPS,
};
