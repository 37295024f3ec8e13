use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::cut::{segment_pairings, CutGraph, SegmentPairing, SlicedImmersion};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metric::{vertex_curvature, ConeMetric};
use crate::prescription::SingularityPrescription;

/// Distance from `a` to the nearest multiple of pi/2.
pub fn quarter_turn_distance(a: f64) -> f64 {
    let k = (a / FRAC_PI_2).round();
    (a - k * FRAC_PI_2).abs()
}

pub(crate) use crate::cut::wrap_angle as wrap;

/// Places face `f` in its canonical frame: corner 0 at the origin, side 0
/// along +x.
pub(crate) fn canonical_face(metric: &ConeMetric, mesh: &TriangleMesh, f: usize) -> [[f64; 2]; 3] {
    let [l0, l1, l2] = metric.face_lengths(mesh, f);
    let p0 = [0.0, 0.0];
    let p1 = [l0, 0.0];
    let p2 = crate::cut::third_point(p0, p1, l0, l1, l2);
    [p0, p1, p2]
}

/// Rotation of the developed frame after parallel transport around a
/// closed face loop. Consecutive faces must share an edge; the last face
/// must share an edge with the first (or equal it).
pub fn holonomy_of_loop(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    face_loop: &[usize],
) -> Result<f64> {
    let mut faces = face_loop.to_vec();
    if faces.len() > 1 && faces.first() == faces.last() {
        faces.pop();
    }
    if faces.is_empty() {
        return Ok(0.0);
    }
    for &f in &faces {
        if f >= mesh.num_faces() {
            return Err(Error::NotAFacePath(0));
        }
    }
    let f0 = faces[0];
    // corner positions of the current face, keyed by its local corners
    let mut cur = canonical_face(metric, mesh, f0);
    let start = cur;
    let n = faces.len();
    for i in 0..n {
        let f = faces[i];
        let g = faces[(i + 1) % n];
        if n == 1 {
            break;
        }
        let hs = mesh.face_halfedges(f);
        let Some(j) = (0..3).find(|&j| mesh.face(hs[j] ^ 1) == Some(g)) else {
            return Err(Error::NotAFacePath(i));
        };
        let t = hs[j] ^ 1;
        let gh = mesh.face_halfedges(g);
        let k = gh.iter().position(|&x| x == t).unwrap();
        // t runs from corner k to k+1 of g: corner k is f's corner j+1
        let a = cur[(j + 1) % 3];
        let b = cur[j];
        let [l0, l1, l2] = metric.face_lengths(mesh, g);
        let ls = [l0, l1, l2];
        let c = crate::cut::third_point(a, b, ls[k], ls[(k + 1) % 3], ls[(k + 2) % 3]);
        let mut next = [[0.0; 2]; 3];
        next[k] = a;
        next[(k + 1) % 3] = b;
        next[(k + 2) % 3] = c;
        cur = next;
    }
    let d0 = [start[1][0] - start[0][0], start[1][1] - start[0][1]];
    let d1 = [cur[1][0] - cur[0][0], cur[1][1] - cur[0][1]];
    let developed = d1[1].atan2(d1[0]) - d0[1].atan2(d0[0]);
    Ok(wrap(-developed))
}

/// Faces around interior vertex `v` in counterclockwise order.
pub fn vertex_face_loop(mesh: &TriangleMesh, v: usize) -> Vec<usize> {
    mesh.corners_around(v)
        .into_iter()
        .filter_map(|h| mesh.face(h))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Pairing,
    Singularity,
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Generator {
    pub kind: GeneratorKind,
    /// Segment index, vertex id or boundary loop index.
    pub id: usize,
    pub angle: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HolonomySignature {
    pub generators: Vec<Generator>,
}

impl HolonomySignature {
    pub fn max_distance(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| g.distance)
            .fold(0.0, f64::max)
    }
}

fn generator(kind: GeneratorKind, id: usize, angle: f64) -> Generator {
    let angle = wrap(angle);
    Generator {
        kind,
        id,
        angle,
        distance: quarter_turn_distance(angle),
    }
}

/// Holonomy generators of a metric: one per cut pairing, one per interior
/// singularity and one per boundary loop (its total turning).
pub fn holonomy_signature(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    presc: &SingularityPrescription,
    pairings: &[SegmentPairing],
) -> Result<HolonomySignature> {
    let mut generators: Vec<Generator> = pairings
        .iter()
        .map(|p| generator(GeneratorKind::Pairing, p.segment, p.rotation))
        .collect();
    for s in presc.iter() {
        if !mesh.is_boundary_vertex(s.vertex) {
            let a = holonomy_of_loop(mesh, metric, &vertex_face_loop(mesh, s.vertex))?;
            generators.push(generator(GeneratorKind::Singularity, s.vertex, a));
        }
    }
    let k = vertex_curvature(mesh, metric)?;
    for (i, lp) in mesh.boundary_loops().iter().enumerate() {
        let total: f64 = lp.iter().map(|&h| k.0[mesh.origin(h)]).sum();
        generators.push(generator(GeneratorKind::Boundary, i, total));
    }
    Ok(HolonomySignature { generators })
}

/// Holonomy generators read directly off a planar layout: pairing chord
/// rotations, and cone and boundary turning from signed corner angles, so
/// the result is defined even when image triangles fold over.
pub fn layout_signature(
    mesh: &TriangleMesh,
    imm: &SlicedImmersion,
    cut: &CutGraph,
    presc: &SingularityPrescription,
) -> Result<HolonomySignature> {
    let pairings = segment_pairings(imm, cut)?;
    let mut generators: Vec<Generator> = pairings
        .iter()
        .map(|p| generator(GeneratorKind::Pairing, p.segment, p.rotation))
        .collect();
    let s = &imm.sliced;
    let mut sums = vec![0.0; mesh.num_vertices()];
    for f in 0..s.mesh.num_faces() {
        let c = s.mesh.face_vertices(f).map(|v| imm.uv[v]);
        for i in 0..3 {
            let a = c[i];
            let b = c[(i + 1) % 3];
            let d = c[(i + 2) % 3];
            let u = [b[0] - a[0], b[1] - a[1]];
            let w = [d[0] - a[0], d[1] - a[1]];
            let ang = (u[0] * w[1] - u[1] * w[0]).atan2(u[0] * w[0] + u[1] * w[1]);
            sums[s.vertex_origin[s.mesh.face_vertices(f)[i]]] += ang;
        }
    }
    for sg in presc.iter() {
        if !mesh.is_boundary_vertex(sg.vertex) {
            generators.push(generator(
                GeneratorKind::Singularity,
                sg.vertex,
                TAU - sums[sg.vertex],
            ));
        }
    }
    for (i, lp) in mesh.boundary_loops().iter().enumerate() {
        let total: f64 = lp.iter().map(|&h| PI - sums[mesh.origin(h)]).sum();
        generators.push(generator(GeneratorKind::Boundary, i, total));
    }
    Ok(HolonomySignature { generators })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HolonomyCheck {
    pub pass: bool,
    pub per_generator: Vec<bool>,
    pub worst_distance: f64,
    pub tol_snap: f64,
}

/// Passes iff every generator is within `tol_snap` of a multiple of pi/2.
pub fn check_holonomy_condition(signature: &HolonomySignature, tol_snap: f64) -> HolonomyCheck {
    let per_generator: Vec<bool> = signature
        .generators
        .iter()
        .map(|g| g.distance <= tol_snap)
        .collect();
    HolonomyCheck {
        pass: per_generator.iter().all(|&b| b),
        per_generator,
        worst_distance: signature.max_distance(),
        tol_snap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{ricci_flow_to_target, CurvatureField, RicciOptions};
    use crate::models;

    #[test]
    fn flat_fan_has_trivial_holonomy() {
        let m = models::unit_square_grid(4);
        let g = ConeMetric::from_positions(&m).unwrap();
        let a = holonomy_of_loop(&m, &g, &vertex_face_loop(&m, 6)).unwrap();
        assert!(a.abs() < 1e-9);
    }

    #[test]
    fn cone_loop_returns_curvature() {
        let m = models::unit_square_grid(4);
        let g = ConeMetric::from_positions(&m).unwrap();
        let mut k = vec![0.0; m.num_vertices()];
        k[12] = -FRAC_PI_2;
        for c in [0, 4, 20, 24] {
            k[c] = FRAC_PI_2 + FRAC_PI_2 / 4.0;
        }
        let (m2, g2, _) =
            ricci_flow_to_target(&m, &g, &CurvatureField(k), RicciOptions::default()).unwrap();
        let a = holonomy_of_loop(&m2, &g2, &vertex_face_loop(&m2, 12)).unwrap();
        assert!((a + FRAC_PI_2).abs() < 1e-9, "{a}");
    }

    #[test]
    fn non_adjacent_faces_are_rejected() {
        let m = models::unit_square_grid(4);
        let g = ConeMetric::from_positions(&m).unwrap();
        assert!(matches!(
            holonomy_of_loop(&m, &g, &[0, 30, 0]),
            Err(Error::NotAFacePath(0))
        ));
    }

    #[test]
    fn empty_signature_passes() {
        let s = HolonomySignature { generators: vec![] };
        assert!(check_holonomy_condition(&s, 0.35).pass);
    }

    #[test]
    fn distance_to_quarter_turns() {
        assert!(quarter_turn_distance(0.6) - 0.6 < 1e-15);
        assert!((quarter_turn_distance(FRAC_PI_2 + 0.1) - 0.1).abs() < 1e-12);
        assert!(quarter_turn_distance(-std::f64::consts::PI) < 1e-15);
    }
}
