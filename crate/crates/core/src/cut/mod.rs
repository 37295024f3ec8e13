//! Cut graph, slicing to a disk, planar immersion and cut pairings.

mod immerse;
mod slice;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metric::ConeMetric;
use crate::prescription::SingularityPrescription;

pub(crate) use immerse::{bbox_diag, dist, third_point, wrap_angle};
pub use immerse::{immerse, segment_pairings, SegmentPairing, SlicedImmersion};
pub use slice::{slice_along, SlicedMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Interior cut chain; becomes two boundary chains after slicing.
    Cut,
    /// Chain of original boundary edges.
    Boundary,
}

/// Maximal node-free chain of `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Segment {
    pub kind: SegmentKind,
    /// Directed halfedges of the chain. Boundary chains use the halfedges
    /// that carry a face.
    pub halfedges: Vec<usize>,
    /// `halfedges.len() + 1` vertices from start node to end node.
    pub vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CutGraph {
    /// Membership in `L` per edge, boundary edges included.
    pub in_l: Vec<bool>,
    pub nodes: Vec<usize>,
    pub segments: Vec<Segment>,
    /// Interior edges left over from the dual spanning tree after pruning.
    pub tree_cut_edges: Vec<usize>,
    /// Shortest paths added for singularities, as edge lists, with the
    /// singular vertex they start from.
    pub singularity_paths: Vec<(usize, Vec<usize>)>,
    pub singularities: Vec<usize>,
}

impl CutGraph {
    /// Edge ids in `L`.
    pub fn edges(&self) -> Vec<usize> {
        (0..self.in_l.len()).filter(|&e| self.in_l[e]).collect()
    }

    /// Interior edges of `L`, those duplicated by slicing.
    pub fn cut_edges(&self, mesh: &TriangleMesh) -> Vec<usize> {
        self.edges()
            .into_iter()
            .filter(|&e| !mesh.is_boundary_edge(e))
            .collect()
    }

    pub fn valence(&self, mesh: &TriangleMesh, v: usize) -> usize {
        mesh.outgoing(v)
            .into_iter()
            .filter(|&h| self.in_l[h / 2])
            .count()
    }

    /// JSON edge list with segment tags.
    pub fn to_json(&self, mesh: &TriangleMesh) -> serde_json::Value {
        let segments: Vec<serde_json::Value> = self
            .segments
            .iter()
            .map(|s| {
                serde_json::json!({
                    "kind": s.kind,
                    "vertices": s.vertices,
                    "edges": s.halfedges.iter().map(|h| h / 2).collect::<Vec<_>>(),
                })
            })
            .collect();
        let edges: Vec<[usize; 2]> = self
            .edges()
            .into_iter()
            .map(|e| mesh.edge_vertices(e))
            .collect();
        serde_json::json!({
            "edges": edges,
            "nodes": self.nodes,
            "segments": segments,
            "singularities": self.singularities,
        })
    }
}

/// Builds `L = G + singularity paths` where `G` is the pruned complement of
/// a breadth-first dual spanning tree rooted at face 0.
pub fn build_cut_graph(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    presc: &SingularityPrescription,
) -> Result<CutGraph> {
    if !mesh.is_connected() {
        return Err(Error::DisconnectedMesh);
    }
    let ne = mesh.num_edges();
    let nv = mesh.num_vertices();
    let mut in_l = vec![true; ne];
    if mesh.num_faces() > 0 {
        let mut seen = vec![false; mesh.num_faces()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(f) = queue.pop_front() {
            let mut nb: Vec<(usize, usize)> = mesh
                .face_halfedges(f)
                .iter()
                .filter_map(|&h| mesh.face(h ^ 1).map(|g| (g, h / 2)))
                .collect();
            nb.sort_unstable();
            for (g, e) in nb {
                if !seen[g] {
                    seen[g] = true;
                    in_l[e] = false;
                    queue.push_back(g);
                }
            }
        }
    }
    let singular: Vec<bool> = {
        let mut s = vec![false; nv];
        for x in presc.iter() {
            if x.vertex >= nv {
                return Err(Error::UnknownVertex(x.vertex));
            }
            s[x.vertex] = true;
        }
        s
    };
    let mut val = vec![0usize; nv];
    for e in 0..ne {
        if in_l[e] {
            let [a, b] = mesh.edge_vertices(e);
            val[a] += 1;
            val[b] += 1;
        }
    }
    // prune dangling chains; singularities are attached afterwards by
    // shortest paths, so they do not hold on to tree branches
    let mut stack: Vec<usize> = (0..nv).filter(|&v| val[v] == 1).collect();
    while let Some(v) = stack.pop() {
        if val[v] != 1 || mesh.is_boundary_vertex(v) {
            continue;
        }
        let h = mesh
            .outgoing(v)
            .into_iter()
            .find(|&h| in_l[h / 2])
            .expect("valence one");
        in_l[h / 2] = false;
        let w = mesh.dest(h);
        val[v] -= 1;
        val[w] -= 1;
        if val[w] == 1 {
            stack.push(w);
        }
    }
    let tree_cut_edges: Vec<usize> = (0..ne)
        .filter(|&e| in_l[e] && !mesh.is_boundary_edge(e))
        .collect();

    // connect singularities by shortest paths
    let mut on_l: Vec<bool> = (0..nv)
        .map(|v| val[v] > 0 || mesh.is_boundary_vertex(v))
        .collect();
    let sing_list: Vec<usize> = presc.iter().map(|s| s.vertex).collect();
    if !on_l.iter().any(|&b| b) {
        if let Some(&s0) = sing_list.first() {
            on_l[s0] = true;
        }
    }
    let mut singularity_paths = Vec::new();
    for &s in &sing_list {
        if on_l[s] {
            continue;
        }
        let path = dijkstra_to_set(mesh, metric, s, &on_l);
        for &h in &path {
            in_l[h / 2] = true;
            on_l[mesh.origin(h)] = true;
            on_l[mesh.dest(h)] = true;
        }
        singularity_paths.push((s, path.iter().map(|h| h / 2).collect()));
    }

    let (nodes, segments) = segment_l(mesh, &in_l, &singular);
    Ok(CutGraph {
        in_l,
        nodes,
        segments,
        tree_cut_edges,
        singularity_paths,
        singularities: sing_list,
    })
}

/// Halfedges of a shortest path from `s` to the first vertex in `targets`,
/// ties broken by vertex id.
fn dijkstra_to_set(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    s: usize,
    targets: &[bool],
) -> Vec<usize> {
    let nv = mesh.num_vertices();
    let mut dist = vec![f64::INFINITY; nv];
    let mut via = vec![usize::MAX; nv];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Reverse((OrdF64(0.0), s)));
    let mut hit = None;
    while let Some(Reverse((OrdF64(d), v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        if targets[v] {
            hit = Some(v);
            break;
        }
        for h in mesh.outgoing(v) {
            let w = mesh.dest(h);
            let nd = d + metric.length(h / 2);
            if nd < dist[w] {
                dist[w] = nd;
                via[w] = h;
                heap.push(Reverse((OrdF64(nd), w)));
            }
        }
    }
    let mut path = Vec::new();
    let mut v = hit.expect("connected mesh reaches the target set");
    while v != s {
        let h = via[v];
        path.push(h);
        v = mesh.origin(h);
    }
    path.reverse();
    path
}

#[derive(Clone, Copy)]
struct OrdF64(f64);
impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn segment_l(mesh: &TriangleMesh, in_l: &[bool], singular: &[bool]) -> (Vec<usize>, Vec<Segment>) {
    let nv = mesh.num_vertices();
    let mut val = vec![0usize; nv];
    for e in 0..in_l.len() {
        if in_l[e] {
            let [a, b] = mesh.edge_vertices(e);
            val[a] += 1;
            val[b] += 1;
        }
    }
    let mut is_node: Vec<bool> = (0..nv)
        .map(|v| val[v] > 0 && (val[v] != 2 || singular[v]))
        .collect();
    let mut used = vec![false; in_l.len()];
    let mut segments = Vec::new();
    let walk = |h0: usize, used: &mut Vec<bool>, is_node: &Vec<bool>| {
        let mut hs = vec![h0];
        used[h0 / 2] = true;
        let mut h = h0;
        loop {
            let w = mesh.dest(h);
            if is_node[w] {
                break;
            }
            let next = mesh
                .outgoing(w)
                .into_iter()
                .find(|&x| in_l[x / 2] && !used[x / 2]);
            match next {
                Some(x) => {
                    used[x / 2] = true;
                    hs.push(x);
                    h = x;
                }
                None => break,
            }
        }
        hs
    };
    let emit = |hs: Vec<usize>, segments: &mut Vec<Segment>| {
        let boundary = mesh.is_boundary_edge(hs[0] / 2);
        let hs: Vec<usize> = if boundary && mesh.face(hs[0]).is_none() {
            hs.iter().rev().map(|h| h ^ 1).collect()
        } else {
            hs
        };
        let mut vertices: Vec<usize> = hs.iter().map(|&h| mesh.origin(h)).collect();
        vertices.push(mesh.dest(*hs.last().unwrap()));
        segments.push(Segment {
            kind: if boundary {
                SegmentKind::Boundary
            } else {
                SegmentKind::Cut
            },
            halfedges: hs,
            vertices,
        });
    };
    let process_node =
        |v: usize, used: &mut Vec<bool>, is_node: &Vec<bool>, segments: &mut Vec<Segment>| {
            for h in mesh.outgoing(v) {
                if in_l[h / 2] && !used[h / 2] {
                    let hs = walk(h, used, is_node);
                    emit(hs, segments);
                }
            }
        };
    for v in 0..nv {
        if is_node[v] {
            process_node(v, &mut used, &is_node, &mut segments);
        }
    }
    // closed loops without nodes get one at their smallest vertex
    loop {
        let Some(e) = (0..in_l.len()).find(|&e| in_l[e] && !used[e]) else {
            break;
        };
        let mut comp_min = usize::MAX;
        let mut stack = vec![mesh.edge_vertices(e)[0]];
        let mut seen = std::collections::HashSet::new();
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            comp_min = comp_min.min(v);
            for h in mesh.outgoing(v) {
                if in_l[h / 2] && !used[h / 2] {
                    stack.push(mesh.dest(h));
                }
            }
        }
        is_node[comp_min] = true;
        process_node(comp_min, &mut used, &is_node, &mut segments);
    }
    let nodes = (0..nv).filter(|&v| is_node[v]).collect();
    (nodes, segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn triangle_has_no_cut_edges() {
        let m = TriangleMesh::from_triangles(
            3,
            &[[0, 1, 2]],
            Some(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        )
        .unwrap();
        let g = ConeMetric::from_positions(&m).unwrap();
        let cut = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        assert!(cut.cut_edges(&m).is_empty());
        assert_eq!(cut.segments.len(), 1);
        assert_eq!(cut.segments[0].kind, SegmentKind::Boundary);
    }

    #[test]
    fn grid_disk_cut_is_boundary_only() {
        let m = models::unit_square_grid(4);
        let g = ConeMetric::from_positions(&m).unwrap();
        let cut = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        assert!(cut.cut_edges(&m).is_empty());
    }

    #[test]
    fn two_triangle_torus_has_two_loops() {
        let (m, g) = models::flat_torus(1, 1, 1.0, 1.0);
        let cut = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        assert_eq!(cut.cut_edges(&m).len(), 2);
        assert_eq!(cut.nodes, vec![0]);
        assert_eq!(cut.segments.len(), 2);
    }

    #[test]
    fn interior_singularity_is_joined_to_boundary() {
        let m = models::unit_square_grid(6);
        let g = ConeMetric::from_positions(&m).unwrap();
        let p = SingularityPrescription::new([(3 * 7 + 3, -1)]);
        let cut = build_cut_graph(&m, &g, &p).unwrap();
        assert_eq!(cut.singularity_paths.len(), 1);
        assert_eq!(cut.singularity_paths[0].1.len(), 3);
        assert!(cut.nodes.contains(&24));
    }

    #[test]
    fn deterministic() {
        let (m, g) = models::flat_torus(4, 3, 1.0, 1.0);
        let a = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        let b = build_cut_graph(&m, &g, &SingularityPrescription::default()).unwrap();
        assert_eq!(a, b);
    }
}
