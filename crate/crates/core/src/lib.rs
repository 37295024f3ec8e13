//! Semi-regular quad meshes from flat cone metrics.
//!
//! The pipeline computes a flat metric with prescribed cone singularities by
//! discrete Ricci flow, cuts the surface to a disk and lays it out in the
//! plane, deforms the layout so that cut transitions are quarter-turn
//! rotations plus translations and boundaries are axis aligned, and finally
//! traces separatrices of the induced cross field to obtain a skeleton of
//! rectangles that is subdivided into quads.

pub mod cut;
pub mod error;
pub mod geodesic;
pub mod linalg;
pub mod mesh;
pub mod metric;
pub mod models;
pub mod pipeline;
pub mod prescription;
pub mod seamless;

pub use error::{Error, Result};
pub use geodesic::{
    build_skeleton, quad_quality, quantize_and_subdivide, trace_geodesic, trace_separatrices,
    QuadMesh, QualityReport, Separatrix, Skeleton, TraceOptions,
};
pub use mesh::io::{load_mesh, write_obj, MeshFormat};
pub use mesh::{topology_report, TopologyReport, TriangleMesh};
pub use metric::{
    corner_angle, intrinsic_delaunay, ricci_energy_gradient, ricci_flow, vertex_curvature,
    ConeMetric, CurvatureField, RicciOptions, RicciReport,
};
pub use pipeline::{run_pipeline, Pipeline, PipelineConfig, RunReport, Stage, StageParams};
pub use prescription::{validate_prescription, Singularity, SingularityPrescription, Validation};
pub use seamless::{
    build_cross_field, check_holonomy_condition, holonomy_of_loop, induced_metric, snap_and_solve,
    CrossField, DeformedImmersion, HolonomySignature,
};
