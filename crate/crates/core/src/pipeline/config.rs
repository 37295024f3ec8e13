use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Stage;
use crate::error::{Error, Result};
use crate::mesh::io::MeshFormat;
use crate::prescription::{Singularity, SingularityPrescription};

/// A length given outright or as a fraction of the input bounding-box
/// diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Length {
    Absolute(f64),
    Relative(f64),
}

impl Length {
    pub fn resolve(self, diag: f64) -> f64 {
        match self {
            Length::Absolute(x) => x,
            Length::Relative(r) => r * diag,
        }
    }

    fn value(self) -> f64 {
        match self {
            Length::Absolute(x) | Length::Relative(x) => x,
        }
    }
}

/// Numerical parameters of the stages. Hashed into the stage cache keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct StageParams {
    pub ricci_tol: f64,
    pub ricci_max_iter: usize,
    pub tol_snap: f64,
    /// Lattice the layout is moved onto. Only used on closed surfaces.
    pub grid_unit: Length,
    pub h: Length,
    pub stop_radius: Length,
    pub max_length: Length,
}

impl Default for StageParams {
    fn default() -> Self {
        StageParams {
            ricci_tol: 1e-10,
            ricci_max_iter: 50,
            tol_snap: 0.35,
            grid_unit: Length::Relative(0.01),
            h: Length::Relative(0.02),
            stop_radius: Length::Relative(1e-4),
            max_length: Length::Relative(50.0),
        }
    }
}

impl StageParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ricciTol", self.ricci_tol),
            ("tolSnap", self.tol_snap),
            ("gridUnit", self.grid_unit.value()),
            ("h", self.h.value()),
            ("stopRadius", self.stop_radius.value()),
            ("maxLength", self.max_length.value()),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        if self.ricci_max_iter == 0 {
            return Err(Error::Config("ricciMaxIter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrescriptionSource {
    Inline(Vec<Singularity>),
    File(PathBuf),
}

/// One JSON document describing a run. Relative paths are taken from the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineConfig {
    pub mesh: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_format: Option<MeshFormat>,
    #[serde(default = "no_singularities")]
    pub singularities: PrescriptionSource,
    #[serde(flatten)]
    pub params: StageParams,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_through")]
    pub through: Stage,
}

fn no_singularities() -> PrescriptionSource {
    PrescriptionSource::Inline(Vec::new())
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_through() -> Stage {
    Stage::Quad
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config and rebases its relative paths onto the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.mesh);
        fix(&mut self.out);
        if let PrescriptionSource::File(p) = &mut self.singularities {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mesh.is_file() {
            return Err(Error::Config(format!(
                "mesh file {} does not exist",
                self.mesh.display()
            )));
        }
        if let PrescriptionSource::File(p) = &self.singularities {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "prescription file {} does not exist",
                    p.display()
                )));
            }
        }
        self.format()?;
        self.params.validate()
    }

    pub fn format(&self) -> Result<MeshFormat> {
        self.mesh_format
            .or_else(|| MeshFormat::from_extension(&self.mesh))
            .ok_or_else(|| {
                Error::Config(format!(
                    "cannot tell the format of {}; set meshFormat",
                    self.mesh.display()
                ))
            })
    }

    pub fn prescription(&self) -> Result<SingularityPrescription> {
        match &self.singularities {
            PrescriptionSource::Inline(list) => Ok(list.clone().into()),
            PrescriptionSource::File(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                SingularityPrescription::from_json(&text)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"mesh": "m.obj"}"#).unwrap();
        assert_eq!(cfg.params, StageParams::default());
        assert_eq!(cfg.through, Stage::Quad);
        assert_eq!(cfg.singularities, PrescriptionSource::Inline(vec![]));
        assert_eq!(cfg.format().unwrap(), MeshFormat::Obj);
    }

    #[test]
    fn full_config() {
        let cfg = PipelineConfig::from_json(
            r#"{"mesh": "m.off", "singularities": [{"vertex": 3, "index": -4}],
                "h": {"absolute": 0.05}, "tolSnap": 0.5, "through": "skeleton",
                "out": "/tmp/x"}"#,
        )
        .unwrap();
        assert_eq!(cfg.params.h, Length::Absolute(0.05));
        assert_eq!(cfg.params.tol_snap, 0.5);
        assert_eq!(cfg.through, Stage::Skeleton);
        assert_eq!(cfg.prescription().unwrap().index_of(3), Some(-4));
    }

    #[test]
    fn prescription_file_reference() {
        let cfg =
            PipelineConfig::from_json(r#"{"mesh": "m.obj", "singularities": "p.json"}"#).unwrap();
        assert_eq!(
            cfg.singularities,
            PrescriptionSource::File(PathBuf::from("p.json"))
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut p = StageParams::default();
        p.h = Length::Relative(0.0);
        assert!(p.validate().is_err());
        let mut p = StageParams::default();
        p.tol_snap = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rebase_keeps_absolute_paths() {
        let mut cfg = PipelineConfig::from_json(r#"{"mesh": "m.obj", "out": "/abs/out"}"#).unwrap();
        cfg.rebase(Path::new("/base"));
        assert_eq!(cfg.mesh, PathBuf::from("/base/m.obj"));
        assert_eq!(cfg.out, PathBuf::from("/abs/out"));
    }
}
