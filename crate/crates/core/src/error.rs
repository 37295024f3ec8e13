use thiserror::Error;

/// Every failure the toolkit can report, grouped roughly by stage.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // mesh
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-manifold mesh: {0}")]
    NonManifold(String),
    #[error("face {0} is not a triangle")]
    NonTriangleFace(usize),
    #[error("unknown vertex {0}")]
    UnknownVertex(usize),
    #[error("invalid prescription: {0}")]
    InvalidPrescription(String),

    // metric
    #[error("degenerate triangle with lengths ({0}, {1}, {2})")]
    DegenerateTriangle(f64, f64, f64),
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),
    #[error("edge {0} cannot be flipped")]
    NonFlippable(usize),
    #[error("Gauss-Bonnet violated: sum of indices minus 4*chi = {residual}")]
    GaussBonnetViolation { residual: i64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    // cut / immersion
    #[error("mesh is disconnected")]
    DisconnectedMesh,
    #[error("invalid cut: {0}")]
    InvalidCut(String),
    #[error("metric is not flat at vertex {vertex} (curvature {curvature:e})")]
    NotFlat { vertex: usize, curvature: f64 },
    #[error("segment {0} has a degenerate chord")]
    DegenerateSegment(usize),

    // seamless deformation
    #[error("face path is not connected at step {0}")]
    NotAFacePath(usize),
    #[error("rotation of pairing {segment} is {distance:.4} rad from the nearest quarter turn")]
    SnapInfeasible { segment: usize, distance: f64 },
    #[error("singular constraint system: {0}")]
    SingularSystem(String),
    #[error("{0} image triangles are folded over")]
    FoldoverPresent(usize),
    #[error("cut edge copies disagree on edge {edge} (relative mismatch {mismatch:e})")]
    CopyMismatch { edge: usize, mismatch: f64 },

    // geodesics and quads
    #[error("trace starts within the stop radius of vertex {0}")]
    StartOnVertex(usize),
    #[error("separatrix {0} exceeded the length budget")]
    InfiniteSeparatrix(usize),
    #[error("skeleton patch {patch} has {corners} corners")]
    NonRectangularPatch { patch: usize, corners: usize },
    #[error("separatrices overlap: {0}")]
    OverlappingSeparatrices(String),
    #[error("quantization infeasible: {0}")]
    QuantizationInfeasible(String),
    #[error("target edge length is too coarse: {0}")]
    TooCoarse(String),
    #[error("face {0} is not a quad")]
    NonQuadFace(usize),

    // pipeline
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Variant name, used as the machine-readable code in error payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "Parse",
            Error::NonManifold(_) => "NonManifold",
            Error::NonTriangleFace(_) => "NonTriangleFace",
            Error::UnknownVertex(_) => "UnknownVertex",
            Error::InvalidPrescription(_) => "InvalidPrescription",
            Error::DegenerateTriangle(..) => "DegenerateTriangle",
            Error::DegenerateMetric(_) => "DegenerateMetric",
            Error::NonFlippable(_) => "NonFlippable",
            Error::GaussBonnetViolation { .. } => "GaussBonnetViolation",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DisconnectedMesh => "DisconnectedMesh",
            Error::InvalidCut(_) => "InvalidCut",
            Error::NotFlat { .. } => "NotFlat",
            Error::DegenerateSegment(_) => "DegenerateSegment",
            Error::NotAFacePath(_) => "NotAFacePath",
            Error::SnapInfeasible { .. } => "SnapInfeasible",
            Error::SingularSystem(_) => "SingularSystem",
            Error::FoldoverPresent(_) => "FoldoverPresent",
            Error::CopyMismatch { .. } => "CopyMismatch",
            Error::StartOnVertex(_) => "StartOnVertex",
            Error::InfiniteSeparatrix(_) => "InfiniteSeparatrix",
            Error::NonRectangularPatch { .. } => "NonRectangularPatch",
            Error::OverlappingSeparatrices(_) => "OverlappingSeparatrices",
            Error::QuantizationInfeasible(_) => "QuantizationInfeasible",
            Error::TooCoarse(_) => "TooCoarse",
            Error::NonQuadFace(_) => "NonQuadFace",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Stage { source, .. } => source.code(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
