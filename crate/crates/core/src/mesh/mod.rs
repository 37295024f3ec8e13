//! Halfedge triangle mesh.
//!
//! Halfedges come in twin pairs: edge `e` owns halfedges `2e` and `2e + 1`,
//! so `twin(h) == h ^ 1`. Boundary halfedges carry no face and are linked
//! into loops that run clockwise around the surface. Faces are oriented
//! counterclockwise.

pub mod io;
pub mod topology;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use topology::{topology_report, TopologyReport};

/// Sentinel for "no face" on boundary halfedges.
pub const NONE: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    positions: Option<Vec<[f64; 3]>>,
    origin: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
    face: Vec<usize>,
    face_half: Vec<usize>,
    vert_half: Vec<usize>,
}

impl TriangleMesh {
    /// Builds a mesh from counterclockwise triangles, gluing sides that share
    /// a vertex pair.
    pub fn from_triangles(
        num_vertices: usize,
        faces: &[[usize; 3]],
        positions: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        let mut keys = Vec::with_capacity(faces.len());
        for (f, tri) in faces.iter().enumerate() {
            if tri.iter().any(|&v| v >= num_vertices) {
                return Err(Error::UnknownVertex(*tri.iter().max().unwrap()));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::NonManifold(format!("face {f} repeats a vertex")));
            }
            let mut k = [0u128; 3];
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                k[i] = ((lo as u128) << 64) | hi as u128;
            }
            keys.push(k);
        }
        Self::from_glued_triangles(num_vertices, faces, &keys, positions)
    }

    /// Builds a mesh from triangles whose sides are glued by explicit keys:
    /// a key used by two sides glues them, a key used once marks a boundary
    /// side. Allows several edges between the same vertex pair, which occurs
    /// in intrinsic triangulations and sliced surfaces.
    pub fn from_glued_triangles<K: Copy + Eq + std::hash::Hash>(
        num_vertices: usize,
        faces: &[[usize; 3]],
        side_keys: &[[K; 3]],
        positions: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        if let Some(p) = &positions {
            if p.len() != num_vertices {
                return Err(Error::NonManifold(format!(
                    "{} positions for {} vertices",
                    p.len(),
                    num_vertices
                )));
            }
        }
        let nf = faces.len();
        // side (f, i) -> halfedge
        let mut side_half = vec![[NONE; 3]; nf];
        let mut key_edge: HashMap<K, (usize, usize, usize)> = HashMap::new();
        let mut origin = Vec::with_capacity(nf * 3 + 8);
        let mut face = Vec::with_capacity(nf * 3 + 8);
        let mut glued = Vec::new();
        for (f, tri) in faces.iter().enumerate() {
            for i in 0..3 {
                let a = tri[i];
                let b = tri[(i + 1) % 3];
                match key_edge.get_mut(&side_keys[f][i]) {
                    None => {
                        let e = origin.len() / 2;
                        origin.push(a);
                        origin.push(b);
                        face.push(f);
                        face.push(NONE);
                        side_half[f][i] = 2 * e;
                        key_edge.insert(side_keys[f][i], (e, f, i));
                        glued.push(false);
                    }
                    Some(&mut (e, f0, i0)) => {
                        if glued[e] {
                            return Err(Error::NonManifold(format!(
                                "edge ({a}, {b}) has more than two incident faces"
                            )));
                        }
                        let t0 = faces[f0];
                        let (a0, b0) = (t0[i0], t0[(i0 + 1) % 3]);
                        if a0 != b || b0 != a {
                            return Err(Error::NonManifold(format!(
                                "faces {f0} and {f} are inconsistently oriented across ({a}, {b})"
                            )));
                        }
                        glued[e] = true;
                        face[2 * e + 1] = f;
                        side_half[f][i] = 2 * e + 1;
                    }
                }
            }
        }
        let nh = origin.len();
        let mut next = vec![NONE; nh];
        let mut prev = vec![NONE; nh];
        let mut face_half = vec![NONE; nf];
        for f in 0..nf {
            let hs = side_half[f];
            for i in 0..3 {
                next[hs[i]] = hs[(i + 1) % 3];
                prev[hs[(i + 1) % 3]] = hs[i];
            }
            face_half[f] = hs[0];
        }
        // boundary loops
        let mut boundary_out = vec![NONE; num_vertices];
        for h in 0..nh {
            if face[h] == NONE {
                let v = origin[h];
                if boundary_out[v] != NONE {
                    return Err(Error::NonManifold(format!(
                        "vertex {v} has more than one boundary fan"
                    )));
                }
                boundary_out[v] = h;
            }
        }
        for h in 0..nh {
            if face[h] == NONE {
                let dest = origin[h ^ 1];
                let n = boundary_out[dest];
                next[h] = n;
                prev[n] = h;
            }
        }
        let mut vert_half = vec![NONE; num_vertices];
        let mut degree = vec![0usize; num_vertices];
        for h in 0..nh {
            let v = origin[h];
            degree[v] += 1;
            if vert_half[v] == NONE {
                vert_half[v] = h;
            }
        }
        for v in 0..num_vertices {
            if boundary_out[v] != NONE {
                vert_half[v] = boundary_out[v];
            }
            if vert_half[v] == NONE {
                return Err(Error::NonManifold(format!("vertex {v} is isolated")));
            }
        }
        let mesh = TriangleMesh {
            positions,
            origin,
            next,
            prev,
            face,
            face_half,
            vert_half,
        };
        for v in 0..num_vertices {
            let mut count = 0;
            let start = mesh.vert_half[v];
            let mut h = start;
            loop {
                count += 1;
                h = mesh.rotate_ccw(h);
                if h == start || count > degree[v] {
                    break;
                }
            }
            if count != degree[v] {
                return Err(Error::NonManifold(format!(
                    "star of vertex {v} is not a disk or half-disk"
                )));
            }
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vert_half.len()
    }

    pub fn num_faces(&self) -> usize {
        self.face_half.len()
    }

    pub fn num_edges(&self) -> usize {
        self.origin.len() / 2
    }

    pub fn num_halfedges(&self) -> usize {
        self.origin.len()
    }

    pub fn positions(&self) -> Option<&[[f64; 3]]> {
        self.positions.as_deref()
    }

    pub fn set_positions(&mut self, positions: Option<Vec<[f64; 3]>>) {
        self.positions = positions;
    }

    #[inline]
    pub fn twin(&self, h: usize) -> usize {
        h ^ 1
    }

    #[inline]
    pub fn next(&self, h: usize) -> usize {
        self.next[h]
    }

    #[inline]
    pub fn prev(&self, h: usize) -> usize {
        self.prev[h]
    }

    #[inline]
    pub fn origin(&self, h: usize) -> usize {
        self.origin[h]
    }

    #[inline]
    pub fn dest(&self, h: usize) -> usize {
        self.origin[h ^ 1]
    }

    #[inline]
    pub fn edge(&self, h: usize) -> usize {
        h / 2
    }

    #[inline]
    pub fn face(&self, h: usize) -> Option<usize> {
        let f = self.face[h];
        (f != NONE).then_some(f)
    }

    #[inline]
    pub fn is_boundary_halfedge(&self, h: usize) -> bool {
        self.face[h] == NONE
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.face[2 * e] == NONE || self.face[2 * e + 1] == NONE
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.face[self.vert_half[v]] == NONE
    }

    /// Endpoints of edge `e`, in the direction of halfedge `2e`.
    pub fn edge_vertices(&self, e: usize) -> [usize; 2] {
        [self.origin[2 * e], self.origin[2 * e + 1]]
    }

    /// The halfedge of `e` that has a face; the lower one when both do.
    pub fn edge_interior_half(&self, e: usize) -> usize {
        if self.face[2 * e] != NONE {
            2 * e
        } else {
            2 * e + 1
        }
    }

    /// The halfedge starting the face's corner cycle.
    pub fn face_half(&self, f: usize) -> usize {
        self.face_half[f]
    }

    /// Halfedges of `f`; `hs[i]` runs from corner `i` to corner `i + 1`.
    pub fn face_halfedges(&self, f: usize) -> [usize; 3] {
        let h0 = self.face_half[f];
        let h1 = self.next[h0];
        [h0, h1, self.next[h1]]
    }

    pub fn face_vertices(&self, f: usize) -> [usize; 3] {
        let hs = self.face_halfedges(f);
        [self.origin[hs[0]], self.origin[hs[1]], self.origin[hs[2]]]
    }

    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        self.face_halfedges(f).map(|h| h / 2)
    }

    /// Position of halfedge `h` inside its face (0, 1 or 2).
    pub fn local_index(&self, h: usize) -> usize {
        let f = self.face[h];
        debug_assert_ne!(f, NONE);
        let hs = self.face_halfedges(f);
        hs.iter()
            .position(|&x| x == h)
            .expect("halfedge in its face")
    }

    /// Faces across the three sides of `f` (`None` on boundary sides).
    pub fn face_neighbors(&self, f: usize) -> [Option<usize>; 3] {
        self.face_halfedges(f).map(|h| self.face(h ^ 1))
    }

    /// Next outgoing halfedge counterclockwise around the origin of `h`.
    #[inline]
    pub fn rotate_ccw(&self, h: usize) -> usize {
        self.prev[h] ^ 1
    }

    /// Outgoing halfedges of `v` in counterclockwise order. For a boundary
    /// vertex the list starts after the boundary halfedge and ends with it,
    /// so the faces of all but the last entry are the incident faces in
    /// counterclockwise order.
    pub fn outgoing(&self, v: usize) -> Vec<usize> {
        let start = self.vert_half[v];
        let mut out = Vec::with_capacity(8);
        let mut h = self.rotate_ccw(start);
        loop {
            out.push(h);
            if h == start {
                break;
            }
            h = self.rotate_ccw(h);
        }
        out
    }

    /// Outgoing halfedges of `v` that carry a face, counterclockwise. Each
    /// one identifies the corner of its face at `v`.
    pub fn corners_around(&self, v: usize) -> Vec<usize> {
        self.outgoing(v)
            .into_iter()
            .filter(|&h| self.face[h] != NONE)
            .collect()
    }

    /// Number of incident faces.
    pub fn vertex_face_count(&self, v: usize) -> usize {
        self.corners_around(v).len()
    }

    /// One outgoing halfedge of `v`; the boundary one for boundary vertices.
    pub fn vertex_half(&self, v: usize) -> usize {
        self.vert_half[v]
    }

    /// Flips interior edge `e` inside the quadrilateral formed by its two
    /// faces. The edge keeps its id; its halfedge `2e` afterwards runs between
    /// the two previously opposite vertices.
    pub fn flip_edge(&mut self, e: usize) -> Result<()> {
        let h0 = 2 * e;
        let h1 = 2 * e + 1;
        let (f0, f1) = (self.face[h0], self.face[h1]);
        if f0 == NONE || f1 == NONE || f0 == f1 {
            return Err(Error::NonFlippable(e));
        }
        let h0n = self.next[h0];
        let h0p = self.next[h0n];
        let h1n = self.next[h1];
        let h1p = self.next[h1n];
        let a = self.origin[h0];
        let b = self.origin[h1];
        let c = self.origin[h0p];
        let d = self.origin[h1p];
        if c == d {
            return Err(Error::NonFlippable(e));
        }
        // f0 = (c, a, d): h0p, h1n, h0 ; f1 = (d, b, c): h1p, h0n, h1
        self.origin[h0] = d;
        self.origin[h1] = c;
        self.link(h0p, h1n);
        self.link(h1n, h0);
        self.link(h0, h0p);
        self.link(h1p, h0n);
        self.link(h0n, h1);
        self.link(h1, h1p);
        self.face[h1n] = f0;
        self.face[h0n] = f1;
        self.face_half[f0] = h0;
        self.face_half[f1] = h1;
        if self.vert_half[a] == h0 {
            self.vert_half[a] = h1n;
        }
        if self.vert_half[b] == h1 {
            self.vert_half[b] = h0n;
        }
        Ok(())
    }

    fn link(&mut self, a: usize, b: usize) {
        self.next[a] = b;
        self.prev[b] = a;
    }

    /// Boundary loops as cycles of boundary halfedges, ordered by their
    /// smallest halfedge id.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.num_halfedges()];
        let mut loops = Vec::new();
        for h in 0..self.num_halfedges() {
            if self.face[h] != NONE || seen[h] {
                continue;
            }
            let mut lp = Vec::new();
            let mut x = h;
            while !seen[x] {
                seen[x] = true;
                lp.push(x);
                x = self.next[x];
            }
            loops.push(lp);
        }
        loops
    }

    /// Triangles as vertex triples in face order.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        (0..self.num_faces())
            .map(|f| self.face_vertices(f))
            .collect()
    }

    /// Connected components of the face adjacency graph.
    pub fn is_connected(&self) -> bool {
        if self.num_faces() == 0 {
            return true;
        }
        let mut seen = vec![false; self.num_faces()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(f) = stack.pop() {
            for g in self.face_neighbors(f).into_iter().flatten() {
                if !seen[g] {
                    seen[g] = true;
                    count += 1;
                    stack.push(g);
                }
            }
        }
        count == self.num_faces()
    }

    /// Euclidean length of every edge from vertex positions.
    pub fn euclidean_lengths(&self) -> Option<Vec<f64>> {
        let p = self.positions.as_ref()?;
        Some(
            (0..self.num_edges())
                .map(|e| {
                    let [a, b] = self.edge_vertices(e);
                    dist3(p[a], p[b])
                })
                .collect(),
        )
    }

    /// Diagonal of the axis-aligned bounding box of the vertex positions.
    pub fn bbox_diagonal(&self) -> Option<f64> {
        let p = self.positions.as_ref()?;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for q in p {
            for k in 0..3 {
                lo[k] = lo[k].min(q[k]);
                hi[k] = hi[k].max(q[k]);
            }
        }
        Some(dist3(lo, hi))
    }
}

pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> TriangleMesh {
        TriangleMesh::from_triangles(4, &[[0, 1, 2], [0, 2, 3]], None).unwrap()
    }

    #[test]
    fn single_triangle_counts() {
        let m = TriangleMesh::from_triangles(3, &[[0, 1, 2]], None).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_faces()), (3, 3, 1));
        assert_eq!(m.boundary_loops().len(), 1);
        assert!((0..3).all(|v| m.is_boundary_vertex(v)));
    }

    #[test]
    fn twin_and_next_cycles() {
        let m = quad();
        for h in 0..m.num_halfedges() {
            assert_eq!(m.twin(m.twin(h)), h);
            if m.face(h).is_some() {
                assert_eq!(m.next(m.next(m.next(h))), h);
            }
            assert_eq!(m.prev(m.next(h)), h);
        }
    }

    #[test]
    fn rejects_three_faces_on_an_edge() {
        let r = TriangleMesh::from_triangles(5, &[[0, 1, 2], [1, 0, 3], [0, 1, 4]], None);
        assert!(matches!(r, Err(Error::NonManifold(_))));
    }

    #[test]
    fn rejects_pinched_vertex() {
        // two triangles sharing only vertex 0
        let r = TriangleMesh::from_triangles(5, &[[0, 1, 2], [0, 3, 4]], None);
        assert!(matches!(r, Err(Error::NonManifold(_))));
    }

    #[test]
    fn rejects_inconsistent_orientation() {
        let r = TriangleMesh::from_triangles(4, &[[0, 1, 2], [0, 1, 3]], None);
        assert!(matches!(r, Err(Error::NonManifold(_))));
    }

    #[test]
    fn flip_changes_diagonal_and_keeps_counts() {
        let mut m = quad();
        let e = (0..m.num_edges())
            .find(|&e| !m.is_boundary_edge(e))
            .unwrap();
        let mut before = m.edge_vertices(e);
        before.sort();
        assert_eq!(before, [0, 2]);
        m.flip_edge(e).unwrap();
        let mut after = m.edge_vertices(e);
        after.sort();
        assert_eq!(after, [1, 3]);
        for f in 0..m.num_faces() {
            let hs = m.face_halfedges(f);
            for i in 0..3 {
                assert_eq!(m.face(hs[i]), Some(f));
                assert_eq!(m.dest(hs[i]), m.origin(hs[(i + 1) % 3]));
            }
        }
        for v in 0..4 {
            assert_eq!(m.vertex_face_count(v) >= 1, true);
        }
        m.flip_edge(e).unwrap();
        let mut back = m.edge_vertices(e);
        back.sort();
        assert_eq!(back, [0, 2]);
    }

    #[test]
    fn boundary_edge_is_not_flippable() {
        let mut m = quad();
        let e = (0..m.num_edges()).find(|&e| m.is_boundary_edge(e)).unwrap();
        assert!(matches!(m.flip_edge(e), Err(Error::NonFlippable(_))));
    }

    #[test]
    fn corners_around_interior_vertex_cover_all_faces() {
        // fan of 4 triangles around vertex 0
        let faces = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]];
        let m = TriangleMesh::from_triangles(5, &faces, None).unwrap();
        assert!(!m.is_boundary_vertex(0));
        let corners = m.corners_around(0);
        assert_eq!(corners.len(), 4);
        // ccw: consecutive corners share the edge v -> next
        for w in corners.windows(2) {
            let f = m.face(w[0]).unwrap();
            let third = m.face_vertices(f);
            assert!(third.contains(&m.dest(w[1])));
        }
    }
}
