//! Stage orchestration with content-keyed caching and artifact output.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{Length, PipelineConfig, PrescriptionSource, StageParams};

use crate::cut::{
    build_cut_graph, immerse, segment_pairings, slice_along, CutGraph, SegmentPairing,
    SlicedImmersion,
};
use crate::error::{Error, Result};
use crate::geodesic::{
    build_skeleton, lattice_basis, periodic_skeleton, pull_back, quad_quality,
    quantize_and_subdivide, trace_separatrices, FacePoint, QuadMesh, QualityReport, Separatrix,
    Skeleton, TraceOptions,
};
use crate::mesh::io::{load_mesh, MeshFormat};
use crate::mesh::{topology_report, TriangleMesh};
use crate::metric::{ricci_flow, vertex_curvature, ConeMetric};
use crate::prescription::{validate_prescription, SingularityPrescription, Validation};
use crate::seamless::{
    build_cross_field, check_holonomy_condition, holonomy_signature, induced_metric,
    layout_signature, quantize_to_grid, snap_and_solve, CrossField, DeformedImmersion,
    HolonomyCheck, HolonomySignature, SnapOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Ricci,
    Cut,
    Immerse,
    Deform,
    Separatrices,
    Skeleton,
    Quad,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Validate,
        Stage::Ricci,
        Stage::Cut,
        Stage::Immerse,
        Stage::Deform,
        Stage::Separatrices,
        Stage::Skeleton,
        Stage::Quad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Ricci => "ricci",
            Stage::Cut => "cut",
            Stage::Immerse => "immerse",
            Stage::Deform => "deform",
            Stage::Separatrices => "separatrices",
            Stage::Skeleton => "skeleton",
            Stage::Quad => "quad",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// An output file with its content hash.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
    #[serde(skip)]
    pub bytes: Arc<[u8]>,
}

impl Artifact {
    fn new(name: &str, bytes: Vec<u8>) -> Self {
        Artifact {
            name: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.into(),
        }
    }

    fn json(name: &str, value: &serde_json::Value) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("json value serializes");
        bytes.push(b'\n');
        Self::new(name, bytes)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub stage: Stage,
    /// Hash of the stage inputs and parameters.
    pub key: String,
    /// Key of the preceding stage.
    pub input_key: String,
    pub millis: f64,
    /// Reused from an earlier run.
    pub cached: bool,
    /// Artifact name to sha256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageFailure {
    pub stage: Stage,
    pub error: String,
    /// `sum k - 4 chi` when the prescription failed Gauss-Bonnet.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<i64>,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelInfo {
    pub model: String,
    pub vertices: usize,
    pub faces: usize,
    pub singularities: usize,
    pub euler_characteristic: i64,
}

/// Manifest of the current stage outputs with timings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub model: ModelInfo,
    pub stages: Vec<StageRecord>,
    pub failure: Option<StageFailure>,
    pub total_millis: f64,
}

struct Entry {
    key: String,
    input_key: String,
    millis: f64,
    artifacts: Vec<Artifact>,
}

#[derive(Default)]
struct State {
    ricci: Option<(TriangleMesh, ConeMetric)>,
    cut: Option<CutGraph>,
    immersion: Option<(SlicedImmersion, Vec<SegmentPairing>)>,
    deform: Option<(DeformedImmersion, ConeMetric, CrossField)>,
    separatrices: Option<Vec<Separatrix>>,
    skeleton: Option<Skeleton>,
    quads: Option<(QuadMesh, QualityReport)>,
}

impl State {
    fn clear_from(&mut self, stage: Stage) {
        let i = stage.index();
        if i <= 1 {
            self.ricci = None;
        }
        if i <= 2 {
            self.cut = None;
        }
        if i <= 3 {
            self.immersion = None;
        }
        if i <= 4 {
            self.deform = None;
        }
        if i <= 5 {
            self.separatrices = None;
        }
        if i <= 6 {
            self.skeleton = None;
        }
        self.quads = None;
    }
}

/// One mesh, one prescription and the cached results of every stage run
/// so far. Changing an input only recomputes the stages whose key changes.
pub struct Pipeline {
    name: String,
    mesh: TriangleMesh,
    mesh_hash: String,
    diag: f64,
    presc: SingularityPrescription,
    params: StageParams,
    entries: Vec<Option<Entry>>,
    state: State,
    failure: Option<(StageFailure, Vec<Artifact>)>,
    last_run: Vec<(Stage, bool)>,
}

impl Pipeline {
    pub fn from_bytes(name: &str, bytes: &[u8], format: MeshFormat) -> Result<Self> {
        let mesh = load_mesh(bytes, format)?;
        let diag = mesh
            .bbox_diagonal()
            .filter(|d| *d > 0.0)
            .ok_or_else(|| Error::Config("mesh needs vertex positions".into()))?;
        let mut hasher = Sha256::new();
        hasher.update(format!("{format:?}").as_bytes());
        hasher.update(bytes);
        Ok(Pipeline {
            name: name.to_string(),
            mesh,
            mesh_hash: hex::encode(hasher.finalize()),
            diag,
            presc: SingularityPrescription::default(),
            params: StageParams::default(),
            entries: Stage::ALL.iter().map(|_| None).collect(),
            state: State::default(),
            failure: None,
            last_run: Vec::new(),
        })
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let bytes = std::fs::read(&cfg.mesh)?;
        let name = cfg
            .mesh
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("mesh");
        let mut p = Self::from_bytes(name, &bytes, cfg.format()?)?;
        p.set_prescription(cfg.prescription()?);
        p.set_params(cfg.params.clone())?;
        Ok(p)
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn prescription(&self) -> &SingularityPrescription {
        &self.presc
    }

    pub fn params(&self) -> &StageParams {
        &self.params
    }

    /// Bounding-box diagonal of the input; relative lengths refer to it.
    pub fn diagonal(&self) -> f64 {
        self.diag
    }

    pub fn set_prescription(&mut self, presc: SingularityPrescription) {
        self.presc = presc;
    }

    pub fn set_params(&mut self, params: StageParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn validate(&self) -> Result<Validation> {
        validate_prescription(&self.mesh, &self.presc)
    }

    fn trace_options(&self) -> TraceOptions {
        TraceOptions {
            stop_radius: self.params.stop_radius.resolve(self.diag),
            max_length: self.params.max_length.resolve(self.diag),
        }
    }

    fn stage_params(&self, stage: Stage) -> serde_json::Value {
        let p = &self.params;
        let opts = self.trace_options();
        match stage {
            Stage::Validate => json!({ "prescription": self.presc }),
            Stage::Ricci => json!({ "tol": p.ricci_tol, "maxIter": p.ricci_max_iter }),
            Stage::Deform => json!({
                "tolSnap": p.tol_snap,
                "gridUnit": p.grid_unit.resolve(self.diag),
            }),
            Stage::Separatrices => json!(opts),
            Stage::Quad => json!({ "h": p.h.resolve(self.diag) }),
            Stage::Cut | Stage::Immerse | Stage::Skeleton => json!(null),
        }
    }

    /// Chained cache keys: each hashes the previous key, the stage name and
    /// the stage parameters.
    pub fn stage_keys(&self) -> Vec<String> {
        let mut prev = self.mesh_hash.clone();
        Stage::ALL
            .iter()
            .map(|&s| {
                let mut hasher = Sha256::new();
                hasher.update(prev.as_bytes());
                hasher.update(s.name().as_bytes());
                hasher.update(self.stage_params(s).to_string().as_bytes());
                prev = hex::encode(hasher.finalize());
                prev.clone()
            })
            .collect()
    }

    /// Runs every stage up to `through`, reusing cached results whose key
    /// is unchanged. Stops at the first failing stage.
    pub fn run(&mut self, through: Stage) -> Result<RunReport> {
        let keys = self.stage_keys();
        self.failure = None;
        self.last_run.clear();
        for stage in Stage::ALL.into_iter().take(through.index() + 1) {
            let i = stage.index();
            if self.entries[i].as_ref().is_some_and(|e| e.key == keys[i]) {
                self.last_run.push((stage, true));
                continue;
            }
            for e in &mut self.entries[i..] {
                *e = None;
            }
            self.state.clear_from(stage);
            let t = Instant::now();
            let mut artifacts = Vec::new();
            match self.compute(stage, &mut artifacts) {
                Ok(()) => {
                    self.entries[i] = Some(Entry {
                        key: keys[i].clone(),
                        input_key: if i == 0 {
                            self.mesh_hash.clone()
                        } else {
                            keys[i - 1].clone()
                        },
                        millis: t.elapsed().as_secs_f64() * 1e3,
                        artifacts,
                    });
                    self.last_run.push((stage, false));
                }
                Err(err) => {
                    self.state.clear_from(stage);
                    let residual = match err {
                        Error::GaussBonnetViolation { residual } => Some(residual),
                        _ => None,
                    };
                    self.failure = Some((
                        StageFailure {
                            stage,
                            error: err.to_string(),
                            residual,
                            artifacts: hashes(&artifacts),
                        },
                        artifacts,
                    ));
                    return Err(Error::Stage {
                        stage: stage.name().to_string(),
                        source: Box::new(err),
                    });
                }
            }
        }
        Ok(self.report())
    }

    /// Manifest of the results currently held.
    pub fn report(&self) -> RunReport {
        let stages: Vec<StageRecord> = Stage::ALL
            .iter()
            .zip(&self.entries)
            .filter_map(|(&stage, e)| {
                let e = e.as_ref()?;
                let cached = self
                    .last_run
                    .iter()
                    .find(|(s, _)| *s == stage)
                    .is_some_and(|&(_, c)| c);
                Some(StageRecord {
                    stage,
                    key: e.key.clone(),
                    input_key: e.input_key.clone(),
                    millis: e.millis,
                    cached,
                    artifacts: hashes(&e.artifacts),
                })
            })
            .collect();
        RunReport {
            model: ModelInfo {
                model: self.name.clone(),
                vertices: self.mesh.num_vertices(),
                faces: self.mesh.num_faces(),
                singularities: self.presc.len(),
                euler_characteristic: self.mesh.euler_characteristic(),
            },
            total_millis: stages.iter().map(|s| s.millis).sum(),
            stages,
            failure: self.failure.as_ref().map(|(f, _)| f.clone()),
        }
    }

    /// Published artifacts of completed stages, then any diagnostics of
    /// the failed stage.
    pub fn artifacts(&self) -> Vec<&Artifact> {
        let mut out: Vec<&Artifact> = self
            .entries
            .iter()
            .flatten()
            .flat_map(|e| &e.artifacts)
            .collect();
        if let Some((_, extra)) = &self.failure {
            out.extend(extra);
        }
        out
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts().into_iter().find(|a| a.name == name)
    }

    /// Writes the artifacts and `report.json` into `dir`, each through a
    /// temporary file and a rename.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for a in self.artifacts() {
            write_atomic(dir, &a.name, &a.bytes)?;
        }
        let mut report = serde_json::to_vec_pretty(&self.report())?;
        report.push(b'\n');
        write_atomic(dir, "report.json", &report)
    }

    /// Intrinsic mesh and flat metric after Ricci flow.
    pub fn flat_metric(&self) -> Option<(&TriangleMesh, &ConeMetric)> {
        self.state.ricci.as_ref().map(|(m, g)| (m, g))
    }

    pub fn cut_graph(&self) -> Option<&CutGraph> {
        self.state.cut.as_ref()
    }

    pub fn immersion(&self) -> Option<(&SlicedImmersion, &[SegmentPairing])> {
        self.state
            .immersion
            .as_ref()
            .map(|(i, p)| (i, p.as_slice()))
    }

    /// Seamless layout, its induced metric and cross field.
    pub fn deformation(&self) -> Option<(&DeformedImmersion, &ConeMetric, &CrossField)> {
        self.state.deform.as_ref().map(|(d, g, f)| (d, g, f))
    }

    pub fn separatrices(&self) -> Option<&[Separatrix]> {
        self.state.separatrices.as_deref()
    }

    pub fn skeleton(&self) -> Option<&Skeleton> {
        self.state.skeleton.as_ref()
    }

    pub fn quads(&self) -> Option<(&QuadMesh, &QualityReport)> {
        self.state.quads.as_ref().map(|(q, r)| (q, r))
    }

    /// Holonomy of the flat metric before deformation, checked against the
    /// snap tolerance. Needs the immerse stage.
    pub fn holonomy(&self) -> Option<Result<(HolonomySignature, HolonomyCheck)>> {
        let (m2, g2) = self.state.ricci.as_ref()?;
        let (_, pairings) = self.state.immersion.as_ref()?;
        Some(
            holonomy_signature(m2, g2, &self.presc, pairings).map(|sig| {
                let check = check_holonomy_condition(&sig, self.params.tol_snap);
                (sig, check)
            }),
        )
    }

    fn compute(&mut self, stage: Stage, out: &mut Vec<Artifact>) -> Result<()> {
        match stage {
            Stage::Validate => self.run_validate(out),
            Stage::Ricci => self.run_ricci(out),
            Stage::Cut => self.run_cut(out),
            Stage::Immerse => self.run_immerse(out),
            Stage::Deform => self.run_deform(out),
            Stage::Separatrices => self.run_separatrices(out),
            Stage::Skeleton => self.run_skeleton(out),
            Stage::Quad => self.run_quad(out),
        }
    }

    fn run_validate(&mut self, out: &mut Vec<Artifact>) -> Result<()> {
        let topo = topology_report(&self.mesh);
        let validation = validate_prescription(&self.mesh, &self.presc)?;
        let positions = self.mesh.positions().unwrap_or_default();
        out.push(Artifact::json(
            "mesh.json",
            &json!({ "positions": positions, "indices": self.mesh.triangles() }),
        ));
        out.push(Artifact::json(
            "topology.json",
            &json!({
                "topology": topo,
                "prescription": self.presc,
                "indexSum": self.presc.index_sum(),
                "validation": validation,
            }),
        ));
        match validation {
            Validation::Ok => Ok(()),
            Validation::Violation { residual } => Err(Error::GaussBonnetViolation { residual }),
        }
    }

    fn run_ricci(&mut self, out: &mut Vec<Artifact>) -> Result<()> {
        let g0 = ConeMetric::from_positions(&self.mesh)?;
        let (m2, mut g2, report) = ricci_flow(
            &self.mesh,
            &g0,
            &self.presc,
            self.params.ricci_tol,
            self.params.ricci_max_iter,
        )?;
        // keep the input area so relative lengths mean the same thing
        let scale = (g0.total_area(&self.mesh) / g2.total_area(&m2)).sqrt();
        g2.rescale(scale);
        out.push(Artifact::json(
            "ricci_report.json",
            &json!({ "report": report, "areaScale": scale }),
        ));
        let mut metric = serde_json::to_value(&g2)?;
        metric["faces"] = json!(m2.triangles());
        out.push(Artifact::json("metric.json", &metric));
        self.state.ricci = Some((m2, g2));
        Ok(())
    }

    fn run_cut(&mut self, out: &mut Vec<Artifact>) -> Result<()> {
        let (m2, g2) = self.state.ricci.as_ref().expect("ricci stage done");
        let cut = build_cut_graph(m2, g2, &self.presc)?;
        out.push(Artifact::json("cut_graph.json", &cut.to_json(m2)));
        self.state.cut = Some(cut);
        Ok(())
    }

    fn run_immerse(&mut self, out: &mut Vec<Artifact>) -> Result<()> {
        let (m2, g2) = self.state.ricci.as_ref().expect("ricci stage done");
        let cut = self.state.cut.as_ref().expect("cut stage done");
        let sliced = slice_along(m2, g2, cut)?;
        let imm = immerse(&sliced, g2)?;
        let pairings = segment_pairings(&imm, cut)?;
        out.push(Artifact::new(
            "immersion.obj",
            imm.to_obj(positions_of(m2), &m2.triangles()).into_bytes(),
        ));
        let summary: Vec<_> = pairings
            .iter()
            .map(|p| {
                json!({
                    "segment": p.segment,
                    "rotation": p.rotation,
                    "translation": p.translation,
                    "residual": p.residual,
                })
            })
            .collect();
        out.push(Artifact::json(
            "pairings.json",
            &json!({
                "pairings": summary,
                "lengthError": imm.length_error(),
                "bboxDiagonal": imm.bbox_diagonal(),
            }),
        ));
        self.state.immersion = Some((imm, pairings));
        Ok(())
    }

    fn run_deform(&mut self, out: &mut Vec<Artifact>) -> Result<()> {
        let (sig, check) = self.holonomy().expect("immerse stage done")?;
        let (m2, _) = self.state.ricci.as_ref().expect("ricci stage done");
        let cut = self.state.cut.as_ref().expect("cut stage done");
        let (imm, pairings) = self.state.immersion.as_ref().expect("immerse stage done");
        let mut def = snap_and_solve(
            imm,
            cut,
            pairings,
            SnapOptions {
                tol_snap: self.params.tol_snap,
            },
        )?;
        if m2.boundary_loops().is_empty() {
            def = quantize_refining(&def, cut, self.params.grid_unit.resolve(self.diag))?;
        }
        let after = layout_signature(m2, &def.immersion, cut, &self.presc)?;
        let induced = induced_metric(m2, &def)?;
        let field = build_cross_field(&def);
        let total_curvature = vertex_curvature(m2, &induced)?.total();
        out.push(Artifact::json(
            "holonomy.json",
            &json!({ "signature": sig, "check": check, "deformed": after }),
        ));
        let mut report = def.report_json();
        report["totalCurvature"] = json!(total_curvature);
        out.push(Artifact::json("deformation.json", &report));
        out.push(Artifact::new(
            "deformed.obj",
            def.immersion
                .to_obj(positions_of(m2), &m2.triangles())
                .into_bytes(),
        ));
        let mut cross = field.to_json();
        cross["faces"] = json!(m2.triangles());
        out.push(Artifact::json("cross_field.json", &cross));
        self.state.deform = Some((def, induced, field));
        Ok(())
    }

    fn run_separatrices(&mut self, out: &mut Vec<Artifact>) -> Result<()> {
        let (m2, _) = self.state.ricci.as_ref().expect("ricci stage done");
        let (_, induced, field) = self.state.deform.as_ref().expect("deform stage done");
        let seps = trace_separatrices(m2, induced, field, &self.presc, self.trace_options())?;
        let curves: Vec<_> = seps
            .iter()
            .map(|s| {
                let mut pts = Vec::with_capacity(s.path.crossings.len() + 1);
                if let Some(c) = s.path.crossings.first() {
                    pts.push(to_3d(m2, c.face, c.from));
                }
                pts.extend(s.path.crossings.iter().map(|c| to_3d(m2, c.face, c.to)));
                json!({
                    "id": s.id,
                    "source": s.source,
                    "angle": s.angle,
                    "length": s.path.length,
                    "terminal": s.path.terminal,
                    "duplicateOf": s.duplicate_of,
                    "polyline": pts,
                })
            })
            .collect();
        out.push(Artifact::json(
            "separatrices.json",
            &json!({ "separatrices": curves }),
        ));
        self.state.separatrices = Some(seps);
        Ok(())
    }

    fn run_skeleton(&mut self, out: &mut Vec<Artifact>) -> Result<()> {
        let (m2, _) = self.state.ricci.as_ref().expect("ricci stage done");
        let (def, induced, field) = self.state.deform.as_ref().expect("deform stage done");
        let seps = self
            .state
            .separatrices
            .as_ref()
            .expect("separatrix stage done");
        let sk = if seps.is_empty() && m2.boundary_loops().is_empty() {
            let unit = def
                .grid_unit
                .ok_or_else(|| Error::QuantizationInfeasible("layout is not on a grid".into()))?;
            let periods: Vec<[f64; 2]> = def.pairings.iter().map(|p| p.translation).collect();
            let basis = lattice_basis(&periods, unit).ok_or_else(|| {
                Error::QuantizationInfeasible("translations do not span a lattice".into())
            })?;
            let b = basis.map(|v| [v[0] as f64 * unit, v[1] as f64 * unit]);
            periodic_skeleton(m2, induced, field, b, self.trace_options())?
        } else {
            build_skeleton(m2, induced, seps)?
        };
        out.push(Artifact::json(
            "skeleton.json",
            &sk.to_json(&|p: FacePoint| to_3d(m2, p.face, p.bary)),
        ));
        self.state.skeleton = Some(sk);
        Ok(())
    }

    fn run_quad(&mut self, out: &mut Vec<Artifact>) -> Result<()> {
        let (m2, _) = self.state.ricci.as_ref().expect("ricci stage done");
        let (_, induced, _) = self.state.deform.as_ref().expect("deform stage done");
        let sk = self.state.skeleton.as_ref().expect("skeleton stage done");
        let h = self.params.h.resolve(self.diag);
        let mut quads = quantize_and_subdivide(m2, induced, sk, h, self.trace_options()).map_err(
            |e| match e {
                Error::QuantizationInfeasible(msg) if sk.periodic => Error::TooCoarse(msg),
                e => e,
            },
        )?;
        pull_back(&self.mesh, m2, &mut quads)?;
        let quality = quad_quality(&quads)?;
        out.push(Artifact::new("quads.obj", quads.to_obj().into_bytes()));
        out.push(Artifact::json(
            "quality.json",
            &serde_json::to_value(&quality)?,
        ));
        self.state.quads = Some((quads, quality));
        Ok(())
    }
}

/// Loads the config's inputs, runs through the selected stage and writes
/// whatever was produced, failed stages included.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    let mut p = Pipeline::from_config(cfg)?;
    let res = p.run(cfg.through);
    p.write_artifacts(&cfg.out)?;
    res
}

/// Grid quantization, halving the unit while a segment collapses.
fn quantize_refining(
    def: &DeformedImmersion,
    cut: &CutGraph,
    unit: f64,
) -> Result<DeformedImmersion> {
    let mut unit = unit;
    for _ in 0..GRID_REFINEMENTS {
        match quantize_to_grid(def, cut, unit) {
            Err(Error::QuantizationInfeasible(msg)) => {
                log::debug!("{msg}; halving the grid unit");
                unit *= 0.5;
            }
            r => return r,
        }
    }
    quantize_to_grid(def, cut, unit)
}

const GRID_REFINEMENTS: usize = 4;

fn hashes(artifacts: &[Artifact]) -> BTreeMap<String, String> {
    artifacts
        .iter()
        .map(|a| (a.name.clone(), a.sha256.clone()))
        .collect()
}

fn positions_of(mesh: &TriangleMesh) -> &[[f64; 3]] {
    mesh.positions().unwrap_or_default()
}

fn to_3d(mesh: &TriangleMesh, f: usize, bary: [f64; 3]) -> [f64; 3] {
    let pos = positions_of(mesh);
    if pos.is_empty() {
        return [0.0; 3];
    }
    let vs = mesh.face_vertices(f);
    [0, 1, 2].map(|k| (0..3).map(|i| bary[i] * pos[vs[i]][k]).sum())
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}
