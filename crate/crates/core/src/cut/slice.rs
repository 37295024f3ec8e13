use serde::{Deserialize, Serialize};

use super::{CutGraph, SegmentKind};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metric::ConeMetric;

/// Vertex chains of one cut-graph segment on the sliced disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentImage {
    pub segment: usize,
    pub kind: SegmentKind,
    /// Sliced vertices along the chain, on the left side for cut segments.
    pub plus: Vec<usize>,
    /// Right-side copies matching `plus` entry by entry (cut segments only).
    pub minus: Option<Vec<usize>>,
}

/// The disk `M - L` with its projection back to `M`. Face ids are shared.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicedMesh {
    pub mesh: TriangleMesh,
    pub vertex_origin: Vec<usize>,
    pub edge_origin: Vec<usize>,
    /// Sliced halfedge occupying the same face side as each original
    /// halfedge that carries a face.
    pub half_map: Vec<usize>,
    pub copies: Vec<Vec<usize>>,
    pub segment_images: Vec<SegmentImage>,
    pub lengths: Vec<f64>,
}

impl SlicedMesh {
    /// Sliced vertex at corner `i` of face `f`.
    pub fn corner_vertex(&self, f: usize, i: usize) -> usize {
        self.mesh.face_vertices(f)[i]
    }
}

/// Cuts `mesh` open along the interior edges of `cut`.
pub fn slice_along(mesh: &TriangleMesh, metric: &ConeMetric, cut: &CutGraph) -> Result<SlicedMesh> {
    let nv = mesh.num_vertices();
    let nf = mesh.num_faces();
    let in_l = &cut.in_l;
    let mut corner = vec![[usize::MAX; 3]; nf];
    let mut vertex_origin = Vec::new();
    let mut copies = vec![Vec::new(); nv];
    for v in 0..nv {
        let mut out = mesh.outgoing(v);
        let boundary = mesh.is_boundary_vertex(v);
        if boundary {
            out.pop();
        } else if let Some(k) = out.iter().position(|&h| in_l[h / 2]) {
            out.rotate_left(k);
        }
        let mut current = usize::MAX;
        for (i, &h) in out.iter().enumerate() {
            if i == 0 || in_l[h / 2] {
                current = vertex_origin.len();
                vertex_origin.push(v);
                copies[v].push(current);
            }
            let f = mesh.face(h).expect("corner halfedge has a face");
            corner[f][mesh.local_index(h)] = current;
        }
    }
    let mut keys = Vec::with_capacity(nf);
    for f in 0..nf {
        let hs = mesh.face_halfedges(f);
        keys.push(hs.map(|h| {
            let e = h / 2;
            if in_l[e] && !mesh.is_boundary_edge(e) {
                (e, h & 1)
            } else {
                (e, 2)
            }
        }));
    }
    let positions = mesh
        .positions()
        .map(|p| vertex_origin.iter().map(|&v| p[v]).collect());
    let sliced = TriangleMesh::from_glued_triangles(vertex_origin.len(), &corner, &keys, positions)
        .map_err(|e| Error::InvalidCut(e.to_string()))?;
    let chi = sliced.euler_characteristic();
    let loops = sliced.boundary_loops().len();
    if chi != 1 || loops != 1 {
        return Err(Error::InvalidCut(format!(
            "complement has Euler characteristic {chi} and {loops} boundary loops"
        )));
    }
    let mut half_map = vec![usize::MAX; mesh.num_halfedges()];
    let mut edge_origin = vec![usize::MAX; sliced.num_edges()];
    for f in 0..nf {
        let a = mesh.face_halfedges(f);
        let b = sliced.face_halfedges(f);
        for i in 0..3 {
            half_map[a[i]] = b[i];
            edge_origin[b[i] / 2] = a[i] / 2;
        }
    }
    let lengths = edge_origin.iter().map(|&e| metric.length(e)).collect();
    let segment_images = cut
        .segments
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let mut plus: Vec<usize> = seg
                .halfedges
                .iter()
                .map(|&h| sliced.origin(half_map[h]))
                .collect();
            plus.push(sliced.dest(half_map[*seg.halfedges.last().unwrap()]));
            let minus = (seg.kind == SegmentKind::Cut).then(|| {
                let mut m: Vec<usize> = seg
                    .halfedges
                    .iter()
                    .map(|&h| sliced.dest(half_map[h ^ 1]))
                    .collect();
                m.push(sliced.origin(half_map[*seg.halfedges.last().unwrap() ^ 1]));
                m
            });
            SegmentImage {
                segment: s,
                kind: seg.kind,
                plus,
                minus,
            }
        })
        .collect();
    Ok(SlicedMesh {
        mesh: sliced,
        vertex_origin,
        edge_origin,
        half_map,
        copies,
        segment_images,
        lengths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cut::build_cut_graph;
    use crate::models;
    use crate::prescription::SingularityPrescription;

    #[test]
    fn disk_slicing_is_identity() {
        let m = models::unit_square_grid(3);
        let g = ConeMetric::from_positions(&m).unwrap();
        let cut = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        let s = slice_along(&m, &g, &cut).unwrap();
        assert_eq!(s.mesh.num_vertices(), m.num_vertices());
        assert_eq!(s.mesh.triangles(), m.triangles());
    }

    #[test]
    fn two_triangle_torus_slices_to_square() {
        let (m, g) = models::flat_torus(1, 1, 1.0, 1.0);
        let cut = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        let s = slice_along(&m, &g, &cut).unwrap();
        assert_eq!(s.mesh.euler_characteristic(), 1);
        let loops = s.mesh.boundary_loops();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 2 * cut.edges().len());
        assert_eq!(s.mesh.num_vertices(), 4);
        let images: usize = s
            .segment_images
            .iter()
            .map(|i| 1 + i.minus.is_some() as usize)
            .sum();
        assert_eq!(images, 4);
    }
}
