use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::slice::SlicedMesh;
use super::{CutGraph, SegmentKind};
use crate::error::{Error, Result};
use crate::metric::{face_angles_from_lengths, ConeMetric};

/// Flatness tolerance at interior vertices of the sliced disk.
pub const NOT_FLAT_TOL: f64 = 1e-6;

/// Planar layout `phi` of the sliced disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicedImmersion {
    pub sliced: SlicedMesh,
    /// Coordinates per sliced vertex.
    pub uv: Vec<[f64; 2]>,
}

impl SlicedImmersion {
    /// Per-corner coordinates indexed `[face][corner]`.
    pub fn corner_uv(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.sliced.mesh.num_faces())
            .map(|f| {
                self.sliced
                    .mesh
                    .face_vertices(f)
                    .iter()
                    .map(|&v| self.uv[v])
                    .collect()
            })
            .collect()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diag(&self.uv)
    }

    /// Largest relative difference between image and metric edge lengths.
    pub fn length_error(&self) -> f64 {
        let m = &self.sliced.mesh;
        (0..m.num_edges())
            .map(|e| {
                let [a, b] = m.edge_vertices(e);
                let l = self.sliced.lengths[e];
                (dist(self.uv[a], self.uv[b]) - l).abs() / l
            })
            .fold(0.0, f64::max)
    }

    /// Signed area of each image triangle.
    pub fn signed_areas(&self) -> Vec<f64> {
        let m = &self.sliced.mesh;
        (0..m.num_faces())
            .map(|f| {
                let [a, b, c] = m.face_vertices(f).map(|v| self.uv[v]);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            })
            .collect()
    }

    /// OBJ of the sliced disk with the layout as wedge texture coordinates,
    /// written over the original faces.
    pub fn to_obj(&self, positions: &[[f64; 3]], triangles: &[[usize; 3]]) -> String {
        let faces: Vec<Vec<usize>> = triangles.iter().map(|t| t.to_vec()).collect();
        crate::mesh::io::write_obj(positions, &faces, Some(&self.corner_uv()))
    }
}

pub(crate) fn bbox_diag(uv: &[[f64; 2]]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in uv {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    dist(lo, hi)
}

#[inline]
pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Third corner of a counterclockwise triangle `(p, q, r)` with
/// `|pr| = l_pr` and `|qr| = l_qr`.
#[inline]
pub(crate) fn third_point(p: [f64; 2], q: [f64; 2], l_pq: f64, l_qr: f64, l_pr: f64) -> [f64; 2] {
    let d = [q[0] - p[0], q[1] - p[1]];
    let len = d[0].hypot(d[1]);
    let e = [d[0] / len, d[1] / len];
    let t = (l_pr * l_pr - l_qr * l_qr + l_pq * l_pq) / (2.0 * l_pq);
    let s = (l_pr * l_pr - t * t).max(0.0).sqrt();
    [p[0] + t * e[0] - s * e[1], p[1] + t * e[1] + s * e[0]]
}

/// Breadth-first isometric layout of the sliced disk.
pub fn immerse(sliced: &SlicedMesh, metric: &ConeMetric) -> Result<SlicedImmersion> {
    let m = &sliced.mesh;
    let mut sliced = sliced.clone();
    sliced.lengths = sliced
        .edge_origin
        .iter()
        .map(|&e| metric.length(e))
        .collect();
    let l = &sliced.lengths;
    // flatness at interior vertices of the disk
    let mut sums = vec![0.0; m.num_vertices()];
    for f in 0..m.num_faces() {
        let hs = m.face_halfedges(f);
        let ang = face_angles_from_lengths(hs.map(|h| l[h / 2]))?;
        for i in 0..3 {
            sums[m.origin(hs[i])] += ang[i];
        }
    }
    for v in 0..m.num_vertices() {
        if !m.is_boundary_vertex(v) {
            let k = TAU - sums[v];
            if k.abs() > NOT_FLAT_TOL {
                return Err(Error::NotFlat {
                    vertex: sliced.vertex_origin[v],
                    curvature: k,
                });
            }
        }
    }
    let mut uv = vec![[f64::NAN; 2]; m.num_vertices()];
    let mut placed = vec![false; m.num_vertices()];
    if m.num_faces() == 0 {
        return Ok(SlicedImmersion { sliced, uv });
    }
    let hs = m.face_halfedges(0);
    let mut best = 0;
    for i in 1..3 {
        if l[hs[i] / 2] > l[hs[best] / 2] {
            best = i;
        }
    }
    let h = hs[best];
    let (a, b, c) = (m.origin(h), m.dest(h), m.origin(m.prev(h)));
    let lab = l[h / 2];
    uv[a] = [0.0, 0.0];
    uv[b] = [lab, 0.0];
    uv[c] = third_point(uv[a], uv[b], lab, l[m.next(h) / 2], l[m.prev(h) / 2]);
    placed[a] = true;
    placed[b] = true;
    placed[c] = true;
    let mut seen = vec![false; m.num_faces()];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(f) = queue.pop_front() {
        for h in m.face_halfedges(f) {
            let t = h ^ 1;
            let Some(g) = m.face(t) else { continue };
            if seen[g] {
                continue;
            }
            seen[g] = true;
            // t runs p -> q in g; third vertex r
            let (p, q) = (m.origin(t), m.dest(t));
            let r = m.origin(m.prev(t));
            if !placed[r] {
                uv[r] = third_point(uv[p], uv[q], l[t / 2], l[m.next(t) / 2], l[m.prev(t) / 2]);
                placed[r] = true;
            }
            queue.push_back(g);
        }
    }
    Ok(SlicedImmersion { sliced, uv })
}

/// Rigid motion relating the two images of a cut segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentPairing {
    pub segment: usize,
    pub plus_vertices: Vec<usize>,
    pub minus_vertices: Vec<usize>,
    pub plus: Vec<[f64; 2]>,
    pub minus: Vec<[f64; 2]>,
    /// Rotation in `(-pi, pi]` taking the plus chord to the minus chord.
    pub rotation: f64,
    pub translation: [f64; 2],
    pub residual: f64,
}

impl SegmentPairing {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [
            c * p[0] - s * p[1] + self.translation[0],
            s * p[0] + c * p[1] + self.translation[1],
        ]
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(TAU);
    if x > PI {
        x -= TAU;
    }
    x
}

/// One pairing per cut segment, in segment order.
pub fn segment_pairings(imm: &SlicedImmersion, cut: &CutGraph) -> Result<Vec<SegmentPairing>> {
    let diag = imm.bbox_diagonal().max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    for img in &imm.sliced.segment_images {
        if img.kind != SegmentKind::Cut {
            continue;
        }
        debug_assert_eq!(cut.segments[img.segment].kind, SegmentKind::Cut);
        let minus_v = img.minus.clone().expect("cut segment has two sides");
        let plus: Vec<[f64; 2]> = img.plus.iter().map(|&v| imm.uv[v]).collect();
        let minus: Vec<[f64; 2]> = minus_v.iter().map(|&v| imm.uv[v]).collect();
        let n = plus.len() - 1;
        let cp = [plus[n][0] - plus[0][0], plus[n][1] - plus[0][1]];
        let cm = [minus[n][0] - minus[0][0], minus[n][1] - minus[0][1]];
        if cp[0].hypot(cp[1]) < 1e-12 * diag || cm[0].hypot(cm[1]) < 1e-12 * diag {
            return Err(Error::DegenerateSegment(img.segment));
        }
        let rotation = wrap_angle(cm[1].atan2(cm[0]) - cp[1].atan2(cp[0]));
        let (s, c) = rotation.sin_cos();
        let rp0 = [
            c * plus[0][0] - s * plus[0][1],
            s * plus[0][0] + c * plus[0][1],
        ];
        let translation = [minus[0][0] - rp0[0], minus[0][1] - rp0[1]];
        let mut p = SegmentPairing {
            segment: img.segment,
            plus_vertices: img.plus.clone(),
            minus_vertices: minus_v,
            plus,
            minus,
            rotation,
            translation,
            residual: 0.0,
        };
        p.residual = p
            .plus
            .iter()
            .zip(&p.minus)
            .map(|(&a, &b)| dist(p.apply(a), b))
            .fold(0.0, f64::max);
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cut::{build_cut_graph, slice_along};
    use crate::mesh::TriangleMesh;
    use crate::models;
    use crate::prescription::SingularityPrescription;

    #[test]
    fn two_triangle_oracle() {
        // circle-circle intersection, counterclockwise branch
        let p = third_point([0.0, 0.0], [2.0, 0.0], 2.0, 1.5, 1.2);
        let x = (1.2f64 * 1.2 - 1.5 * 1.5 + 4.0) / 4.0;
        let y = (1.2f64 * 1.2 - x * x).sqrt();
        assert!((p[0] - x).abs() < 1e-14 && (p[1] - y).abs() < 1e-14);
    }

    #[test]
    fn planar_layout_is_congruent() {
        let m = models::unit_square_grid(4);
        let g = ConeMetric::from_positions(&m).unwrap();
        let cut = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        let s = slice_along(&m, &g, &cut).unwrap();
        let imm = immerse(&s, &g).unwrap();
        assert!(imm.length_error() < 1e-12);
        // Gram matrix of edge vectors from vertex 0
        let p = m.positions().unwrap();
        for i in 1..m.num_vertices() {
            for j in 1..m.num_vertices() {
                let a = [p[i][0] - p[0][0], p[i][1] - p[0][1]];
                let b = [p[j][0] - p[0][0], p[j][1] - p[0][1]];
                let c = [imm.uv[i][0] - imm.uv[0][0], imm.uv[i][1] - imm.uv[0][1]];
                let d = [imm.uv[j][0] - imm.uv[0][0], imm.uv[j][1] - imm.uv[0][1]];
                assert!((a[0] * b[0] + a[1] * b[1] - c[0] * d[0] - c[1] * d[1]).abs() < 1e-12);
            }
        }
        assert!(imm.signed_areas().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn seed_face_longest_edge_on_x_axis() {
        let p = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 3.0, 0.0]];
        let m = TriangleMesh::from_triangles(3, &[[0, 1, 2]], Some(p)).unwrap();
        let g = ConeMetric::from_positions(&m).unwrap();
        let cut = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        let imm = immerse(&slice_along(&m, &g, &cut).unwrap(), &g).unwrap();
        // longest side runs 1 -> 2
        assert_eq!(imm.uv[1], [0.0, 0.0]);
        assert!((imm.uv[2][0] - 10f64.sqrt()).abs() < 1e-14 && imm.uv[2][1] == 0.0);
    }

    #[test]
    fn torus_pairings_are_translations() {
        let (m, g) = models::flat_torus(3, 2, 1.0, 1.0);
        let cut = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        let imm = immerse(&slice_along(&m, &g, &cut).unwrap(), &g).unwrap();
        let pairs = segment_pairings(&imm, &cut).unwrap();
        assert!(!pairs.is_empty());
        for p in pairs {
            assert!(p.rotation.abs() < 1e-9);
            assert!(p.residual < 1e-9);
        }
    }
}
