use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::deform::DeformedImmersion;
use crate::cut::dist;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metric::ConeMetric;

/// Relative tolerance for the two copies of a cut edge.
pub const COPY_TOL: f64 = 1e-8;

/// Flat metric on the original mesh read off a seamless layout.
pub fn induced_metric(mesh: &TriangleMesh, def: &DeformedImmersion) -> Result<ConeMetric> {
    if def.foldovers > 0 {
        return Err(Error::FoldoverPresent(def.foldovers));
    }
    let s = &def.immersion.sliced;
    let uv = &def.immersion.uv;
    let mut lengths = vec![f64::NAN; mesh.num_edges()];
    for e in 0..s.mesh.num_edges() {
        let [a, b] = s.mesh.edge_vertices(e);
        let l = dist(uv[a], uv[b]);
        let o = s.edge_origin[e];
        if lengths[o].is_nan() {
            lengths[o] = l;
        } else {
            let mismatch = (lengths[o] - l).abs() / lengths[o].max(l);
            if mismatch > COPY_TOL {
                return Err(Error::CopyMismatch { edge: o, mismatch });
            }
        }
    }
    ConeMetric::from_lengths(mesh, lengths)
}

/// Per-face cross field: the direction of the layout's first axis,
/// measured in each face's frame (corner 0 at the origin, side 0 along +x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrossField {
    /// Full frame angle; the cross is this angle modulo pi/2.
    pub frame: Vec<f64>,
}

impl CrossField {
    pub fn angle(&self, f: usize) -> f64 {
        self.frame[f].rem_euclid(FRAC_PI_2)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let angles: Vec<f64> = (0..self.frame.len()).map(|f| self.angle(f)).collect();
        serde_json::json!({ "faceAngles": angles })
    }
}

pub fn build_cross_field(def: &DeformedImmersion) -> CrossField {
    let s = &def.immersion.sliced;
    let uv = &def.immersion.uv;
    let frame = (0..s.mesh.num_faces())
        .map(|f| {
            let [a, b, _] = s.mesh.face_vertices(f);
            let d = [uv[b][0] - uv[a][0], uv[b][1] - uv[a][1]];
            -d[1].atan2(d[0])
        })
        .collect();
    CrossField { frame }
}
