use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::trace::{angle_of, face_frame, sub, Fan, GeodesicPath, Terminal, TraceOptions, Tracer};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metric::ConeMetric;
use crate::prescription::SingularityPrescription;
use crate::seamless::CrossField;

/// Rays closer than this to a boundary edge direction run along the
/// boundary and are not traced.
const RAY_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Separatrix {
    pub id: usize,
    pub source: usize,
    /// Leaving angle in the fan of the source vertex.
    pub angle: f64,
    pub path: GeodesicPath,
    /// Set when this is the reverse of an earlier saddle connection.
    pub duplicate_of: Option<usize>,
}

/// Fan angles of the cross-field directions leaving singular vertex `v`.
pub fn separatrix_angles(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    field: &CrossField,
    v: usize,
) -> Result<Vec<f64>> {
    let fan = Fan::new(mesh, metric, v)?;
    let Some(&h0) = fan.corners.first() else {
        return Ok(Vec::new());
    };
    let f0 = mesh.face(h0).unwrap();
    let c0 = mesh.local_index(h0);
    let frame = face_frame(mesh, metric, f0);
    let a0 = angle_of(sub(frame[(c0 + 1) % 3], frame[c0]));
    let mut tau0 = (field.frame[f0] - a0).rem_euclid(FRAC_PI_2);
    if tau0 > FRAC_PI_2 - RAY_EPS {
        tau0 -= FRAC_PI_2;
    }
    let boundary = mesh.is_boundary_vertex(v);
    let count = (fan.total / FRAC_PI_2).round() as i64;
    let rays = (0..=count).map(|m| tau0 + m as f64 * FRAC_PI_2);
    Ok(if boundary {
        rays.filter(|&t| t > RAY_EPS && t < fan.total - RAY_EPS)
            .collect()
    } else {
        rays.take(count as usize)
            .map(|t| t.rem_euclid(fan.total))
            .collect()
    })
}

/// Traces every separatrix of the cross field, singular vertices in id
/// order, rays in fan order.
pub fn trace_separatrices(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    field: &CrossField,
    presc: &SingularityPrescription,
    opts: TraceOptions,
) -> Result<Vec<Separatrix>> {
    let mut singular = vec![false; mesh.num_vertices()];
    for s in presc.iter() {
        singular[s.vertex] = true;
    }
    let tracer = Tracer::new(mesh, metric, singular, opts);
    let mut out: Vec<Separatrix> = Vec::new();
    for s in presc.iter() {
        for angle in separatrix_angles(mesh, metric, field, s.vertex)? {
            let id = out.len();
            let path = tracer.trace_from_vertex(s.vertex, angle, opts.max_length)?;
            if path.terminal == Terminal::LengthBudget {
                return Err(Error::InfiniteSeparatrix(id));
            }
            out.push(Separatrix {
                id,
                source: s.vertex,
                angle,
                path,
                duplicate_of: None,
            });
        }
    }
    // reverse traversals of saddle connections
    for j in 0..out.len() {
        let Terminal::Singularity { vertex: b } = out[j].path.terminal else {
            continue;
        };
        for i in 0..j {
            if out[i].duplicate_of.is_some() {
                continue;
            }
            let Terminal::Singularity { vertex: a } = out[i].path.terminal else {
                continue;
            };
            let (pi, pj) = (&out[i].path, &out[j].path);
            let tol = 2.0 * opts.stop_radius + 1e-9 * pi.length;
            if out[i].source != b || a != out[j].source || (pi.length - pj.length).abs() > tol {
                continue;
            }
            // the midpoint of one must lie on the other
            let half = 0.5 * pi.length;
            let mid = pi.point_at(half);
            let mirrored = pj.crossings.iter().any(|c| {
                c.face == mid.face
                    && c.s0 <= pj.length - half + tol
                    && c.s1 >= pj.length - half - tol
            });
            if mirrored {
                out[j].duplicate_of = Some(i);
                break;
            }
        }
    }
    Ok(out)
}
