//! Procedurally generated meshes used by the examples, tests and benches.

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::mesh::TriangleMesh;
use crate::metric::ConeMetric;
use crate::prescription::SingularityPrescription;

/// Regular `n x n` grid on the unit square, each cell split along its
/// `(i, j) - (i+1, j+1)` diagonal. Vertex `(i, j)` has id `j * (n + 1) + i`.
pub fn unit_square_grid(n: usize) -> TriangleMesh {
    rectangle_grid(n, n, 1.0, 1.0)
}

pub fn rectangle_grid(nx: usize, ny: usize, width: f64, height: f64) -> TriangleMesh {
    assert!(nx >= 1 && ny >= 1);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut positions = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            positions.push([
                width * i as f64 / nx as f64,
                height * j as f64 / ny as f64,
                0.0,
            ]);
        }
    }
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::from_triangles(positions.len(), &faces, Some(positions))
        .expect("grid is manifold")
}

/// Flat torus `R^2 / (size_x Z x size_y Z)` triangulated by an `n x m`
/// periodic grid. Positions place it on a torus of revolution for export;
/// the returned metric holds the flat lengths.
pub fn flat_torus(n: usize, m: usize, size_x: f64, size_y: f64) -> (TriangleMesh, ConeMetric) {
    assert!(n >= 1 && m >= 1);
    let id = |i: usize, j: usize| (j % m) * n + (i % n);
    // side keys: (kind, i, j) with kind 0 = horizontal, 1 = vertical, 2 = diagonal
    let key = |kind: u8, i: usize, j: usize| (kind, i % n, j % m);
    let mut faces = Vec::with_capacity(2 * n * m);
    let mut keys = Vec::with_capacity(2 * n * m);
    let mut side_len = Vec::with_capacity(2 * n * m);
    let (hx, hy) = (size_x / n as f64, size_y / m as f64);
    let hd = (hx * hx + hy * hy).sqrt();
    for j in 0..m {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            keys.push([key(0, i, j), key(1, i + 1, j), key(2, i, j)]);
            side_len.push([hx, hy, hd]);
            faces.push([a, c, d]);
            keys.push([key(2, i, j), key(0, i, j + 1), key(1, i, j)]);
            side_len.push([hd, hx, hy]);
        }
    }
    let (big_r, small_r) = (2.0, 0.8);
    let mut positions = vec![[0.0; 3]; n * m];
    for j in 0..m {
        for i in 0..n {
            let s = std::f64::consts::TAU * i as f64 / n as f64;
            let t = std::f64::consts::TAU * j as f64 / m as f64;
            positions[id(i, j)] = [
                (big_r + small_r * t.cos()) * s.cos(),
                (big_r + small_r * t.cos()) * s.sin(),
                small_r * t.sin(),
            ];
        }
    }
    let mesh = TriangleMesh::from_glued_triangles(n * m, &faces, &keys, Some(positions))
        .expect("torus is manifold");
    let mut lengths = vec![0.0; mesh.num_edges()];
    for f in 0..mesh.num_faces() {
        let hs = mesh.face_halfedges(f);
        for k in 0..3 {
            lengths[mesh.edge(hs[k])] = side_len[f][k];
        }
    }
    let metric = ConeMetric::from_lengths(&mesh, lengths).expect("flat torus lengths");
    (mesh, metric)
}

/// Geometry of the planar rectangle with two circular holes.
#[derive(Clone, Copy, Debug)]
pub struct TwoHoleDomain {
    pub width: f64,
    pub height: f64,
    pub holes: [([f64; 2], f64); 2],
}

impl Default for TwoHoleDomain {
    fn default() -> Self {
        TwoHoleDomain {
            width: 3.0,
            height: 2.0,
            holes: [([0.9, 1.0], 0.4), ([2.1, 1.0], 0.4)],
        }
    }
}

impl TwoHoleDomain {
    fn area(&self) -> f64 {
        self.width * self.height
            - self
                .holes
                .iter()
                .map(|(_, r)| std::f64::consts::PI * r * r)
                .sum::<f64>()
    }

    fn inside(&self, p: [f64; 2], margin: f64) -> bool {
        p[0] > margin
            && p[0] < self.width - margin
            && p[1] > margin
            && p[1] < self.height - margin
            && self
                .holes
                .iter()
                .all(|(c, r)| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() > r + margin)
    }
}

/// Triangulates the two-hole rectangle with roughly `target_vertices`
/// vertices: uniform boundary samples plus a hexagonal interior lattice,
/// joined by a constrained Delaunay triangulation. The outer corners and
/// every point of `required` are vertices. Faces are ordered by centroid.
pub fn two_hole_rectangle(
    domain: TwoHoleDomain,
    target_vertices: usize,
    required: &[[f64; 2]],
) -> TriangleMesh {
    let spacing = (2.0 * domain.area() / (3f64.sqrt() * target_vertices as f64)).sqrt();
    let mut pts: Vec<[f64; 2]> = Vec::new();
    let mut loops: Vec<Vec<usize>> = Vec::new();

    // outer rectangle, counterclockwise, corners included
    let corners = [
        [0.0, 0.0],
        [domain.width, 0.0],
        [domain.width, domain.height],
        [0.0, domain.height],
    ];
    let mut outer = Vec::new();
    for k in 0..4 {
        let a = corners[k];
        let b = corners[(k + 1) % 4];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let n = (len / spacing).round().max(1.0) as usize;
        for s in 0..n {
            let t = s as f64 / n as f64;
            outer.push(pts.len());
            pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    loops.push(outer);
    for (c, r) in domain.holes {
        let n = (std::f64::consts::TAU * r / spacing).round().max(6.0) as usize;
        let mut lp = Vec::new();
        for s in 0..n {
            let t = std::f64::consts::TAU * s as f64 / n as f64;
            lp.push(pts.len());
            pts.push([c[0] + r * t.cos(), c[1] + r * t.sin()]);
        }
        loops.push(lp);
    }
    for &p in required {
        if domain.inside(p, 0.0) {
            pts.push(p);
        }
    }
    let near_required = |p: [f64; 2]| {
        required
            .iter()
            .any(|q| (p[0] - q[0]).hypot(p[1] - q[1]) < 0.5 * spacing)
    };
    let dy = spacing * 3f64.sqrt() / 2.0;
    let rows = (domain.height / dy).ceil() as usize + 1;
    let cols = (domain.width / spacing).ceil() as usize + 1;
    for j in 0..rows {
        let y = j as f64 * dy;
        let shift = if j % 2 == 1 { spacing / 2.0 } else { 0.0 };
        for i in 0..cols {
            let p = [i as f64 * spacing + shift, y];
            if domain.inside(p, 0.6 * spacing) && !near_required(p) {
                pts.push(p);
            }
        }
    }

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();
    let mut handles = Vec::with_capacity(pts.len());
    for p in &pts {
        handles.push(cdt.insert(Point2::new(p[0], p[1])).expect("finite point"));
    }
    for lp in &loops {
        for k in 0..lp.len() {
            cdt.add_constraint(handles[lp[k]], handles[lp[(k + 1) % lp.len()]]);
        }
    }
    let mut faces = Vec::new();
    for f in cdt.inner_faces() {
        let vs = f.vertices();
        let q: Vec<[f64; 2]> = vs
            .iter()
            .map(|v| [v.position().x, v.position().y])
            .collect();
        let centroid = [
            (q[0][0] + q[1][0] + q[2][0]) / 3.0,
            (q[0][1] + q[1][1] + q[2][1]) / 3.0,
        ];
        if domain.inside(centroid, 0.0) {
            faces.push(vs.map(|v| v.fix().index()));
        }
    }
    // spade indices follow insertion order, so they match `pts`
    let mut used = vec![usize::MAX; pts.len()];
    let mut positions = Vec::new();
    for f in faces.iter_mut() {
        for v in f.iter_mut() {
            if used[*v] == usize::MAX {
                used[*v] = positions.len();
                positions.push([pts[*v][0], pts[*v][1], 0.0]);
            }
            *v = used[*v];
        }
    }
    // renumber in original point order so that corners come first
    let mut order: Vec<usize> = (0..pts.len()).filter(|&i| used[i] != usize::MAX).collect();
    order.sort_unstable();
    let mut remap = vec![0; positions.len()];
    let mut new_pos = vec![[0.0; 3]; positions.len()];
    for (new_id, &old) in order.iter().enumerate() {
        remap[used[old]] = new_id;
        new_pos[new_id] = [pts[old][0], pts[old][1], 0.0];
    }
    for f in faces.iter_mut() {
        for v in f.iter_mut() {
            *v = remap[*v];
        }
    }
    let centroid = |f: &[usize; 3]| {
        let c = f.iter().fold([0.0, 0.0], |a, &v| {
            [a[0] + new_pos[v][0], a[1] + new_pos[v][1]]
        });
        (c[0], c[1])
    };
    faces.sort_by(|a, b| {
        let (ca, cb) = (centroid(a), centroid(b));
        ca.0.total_cmp(&cb.0).then(ca.1.total_cmp(&cb.1))
    });
    TriangleMesh::from_triangles(new_pos.len(), &faces, Some(new_pos))
        .expect("two-hole mesh is manifold")
}

/// The four outer corners of a mesh made by [`two_hole_rectangle`].
pub fn two_hole_corners(mesh: &TriangleMesh, domain: &TwoHoleDomain) -> [usize; 4] {
    [
        [0.0, 0.0],
        [domain.width, 0.0],
        [domain.width, domain.height],
        [0.0, domain.height],
    ]
    .map(|p| nearest_vertex(mesh, [p[0], p[1], 0.0]))
}

/// Closed genus-two surface: a planar grid domain with two square holes,
/// doubled along its boundary. `res` cells per unit; the domain is 5 x 3
/// units with holes `[1,2] x [1,2]` and `[3,4] x [1,2]`. The two sheets are
/// pushed apart to `z = +-bulge(d)` where `d` is the grid distance to the
/// seam.
pub fn genus_two(res: usize) -> TriangleMesh {
    assert!(res >= 1);
    let (nx, ny) = (5 * res, 3 * res);
    let in_hole_cell = |i: usize, j: usize| {
        let (x, y) = (i / res, j / res);
        y == 1 && (x == 1 || x == 3)
    };
    let cell_ok = |i: usize, j: usize| i < nx && j < ny && !in_hole_cell(i, j);
    // count cells around each grid vertex
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells_at = vec![0u8; (nx + 1) * (ny + 1)];
    for j in 0..ny {
        for i in 0..nx {
            if cell_ok(i, j) {
                for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                    cells_at[vid(a, b)] += 1;
                }
            }
        }
    }
    let seam = |v: usize| cells_at[v] > 0 && cells_at[v] < 4;
    // grid distance to the seam (multi-source BFS on 8-neighbourhood)
    let mut dist = vec![usize::MAX; cells_at.len()];
    let mut queue = std::collections::VecDeque::new();
    for v in 0..cells_at.len() {
        if seam(v) {
            dist[v] = 0;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        let (i, j) = ((v % (nx + 1)) as i64, (v / (nx + 1)) as i64);
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a > nx as i64 || b > ny as i64 {
                    continue;
                }
                let w = vid(a as usize, b as usize);
                if cells_at[w] > 0 && dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    let mut top = vec![usize::MAX; cells_at.len()];
    let mut bottom = vec![usize::MAX; cells_at.len()];
    let mut positions = Vec::new();
    let bulge = |d: usize| 0.4 * (d as f64 / res as f64 * 2.0).tanh();
    for v in 0..cells_at.len() {
        if cells_at[v] == 0 {
            continue;
        }
        let (x, y) = (
            (v % (nx + 1)) as f64 / res as f64,
            (v / (nx + 1)) as f64 / res as f64,
        );
        top[v] = positions.len();
        positions.push([x, y, bulge(dist[v])]);
    }
    for v in 0..cells_at.len() {
        if cells_at[v] == 0 {
            continue;
        }
        if seam(v) {
            bottom[v] = top[v];
        } else {
            let (x, y) = (
                (v % (nx + 1)) as f64 / res as f64,
                (v / (nx + 1)) as f64 / res as f64,
            );
            bottom[v] = positions.len();
            positions.push([x, y, -bulge(dist[v])]);
        }
    }
    let mut faces = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !cell_ok(i, j) {
                continue;
            }
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            // alternate diagonals so the triangulation has the domain's mirror symmetries
            let flip = ((i >= nx / 2) as usize + (j >= ny / 2) as usize) % 2 == 1;
            let tris = if flip {
                [[a, b, d], [b, c, d]]
            } else {
                [[a, b, c], [a, c, d]]
            };
            for t in tris {
                faces.push(t.map(|v| top[v]));
                let bt = t.map(|v| bottom[v]);
                faces.push([bt[0], bt[2], bt[1]]);
            }
        }
    }
    TriangleMesh::from_triangles(positions.len(), &faces, Some(positions))
        .expect("genus-two mesh is manifold")
}

/// Vertex of a [`genus_two`] mesh at domain point `(x, y)` on the top
/// (`z >= 0`) or bottom sheet. Seam points are shared by both sheets.
pub fn genus_two_vertex(mesh: &TriangleMesh, x: f64, y: f64, top: bool) -> usize {
    let pos = mesh.positions().expect("mesh has positions");
    let mut best = (f64::INFINITY, 0);
    for (v, q) in pos.iter().enumerate() {
        if (q[2] > 0.0 && !top) || (q[2] < 0.0 && top) {
            continue;
        }
        let d = (q[0] - x).hypot(q[1] - y);
        if d < best.0 {
            best = (d, v);
        }
    }
    best.1
}

/// Vertex closest to `p`.
pub fn nearest_vertex(mesh: &TriangleMesh, p: [f64; 3]) -> usize {
    let pos = mesh.positions().expect("mesh has positions");
    let mut best = (f64::INFINITY, 0);
    for (v, q) in pos.iter().enumerate() {
        let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2);
        if d < best.0 {
            best = (d, v);
        }
    }
    best.1
}

/// Regular tetrahedron surface with unit edges.
pub fn regular_tetrahedron() -> TriangleMesh {
    let s = 1.0 / 8f64.sqrt();
    tetrahedron([[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]])
}

pub fn tetrahedron(p: [[f64; 3]; 4]) -> TriangleMesh {
    // orient outward: faces opposite each vertex, wound by the signed volume
    let vol = {
        let a = sub(p[1], p[0]);
        let b = sub(p[2], p[0]);
        let c = sub(p[3], p[0]);
        dot(a, cross(b, c))
    };
    let faces = if vol > 0.0 {
        [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]]
    } else {
        [[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]]
    };
    TriangleMesh::from_triangles(4, &faces, Some(p.to_vec())).expect("tetrahedron")
}

/// A shipped model together with its singularity prescription.
#[derive(Clone, Debug)]
pub struct BundledModel {
    pub name: &'static str,
    pub mesh: TriangleMesh,
    pub prescription: SingularityPrescription,
}

/// Names accepted by [`bundled`].
pub const BUNDLED: [&str; 8] = [
    "square",
    "torus",
    "two-hole-saddle",
    "two-hole-mixed",
    "two-hole-four",
    "genus-two-four",
    "genus-two-eight",
    "genus-two-cone",
];

/// Interior points of the four index -1 singularities on the two-hole
/// rectangle.
pub const TWO_HOLE_SADDLES: [[f64; 2]; 4] =
    [[0.25, 0.25], [2.75, 0.25], [0.25, 1.75], [2.75, 1.75]];

/// Builds a bundled model. `resolution` is grid cells per side for the
/// square and torus, a vertex target for the two-hole rectangle and cells
/// per unit for the genus-two surface.
pub fn bundled(name: &str, resolution: Option<usize>) -> Option<BundledModel> {
    let (mesh, list): (TriangleMesh, Vec<(usize, i32)>) = match name {
        "square" => {
            let n = resolution.unwrap_or(16);
            let m = unit_square_grid(n);
            let c = [0, n, (n + 1) * (n + 1) - 1, n * (n + 1)];
            (m, c.iter().map(|&v| (v, 1)).collect())
        }
        "torus" => {
            let n = resolution.unwrap_or(12);
            (flat_torus(n, (2 * n / 3).max(1), 1.5, 1.0).0, vec![])
        }
        "two-hole-saddle" => {
            let m = two_hole_rectangle(
                TwoHoleDomain::default(),
                resolution.unwrap_or(3000),
                &[[1.5, 1.0]],
            );
            let v = nearest_vertex(&m, [1.5, 1.0, 0.0]);
            (m, vec![(v, -4)])
        }
        "two-hole-mixed" | "two-hole-four" => {
            let d = TwoHoleDomain::default();
            let m = two_hole_rectangle(d, resolution.unwrap_or(3000), &TWO_HOLE_SADDLES);
            let mut list: Vec<(usize, i32)> = TWO_HOLE_SADDLES
                .iter()
                .map(|p| (nearest_vertex(&m, [p[0], p[1], 0.0]), -1))
                .collect();
            if name == "two-hole-mixed" {
                list.extend(two_hole_corners(&m, &d).iter().map(|&v| (v, 1)));
            }
            (m, list)
        }
        "genus-two-four" | "genus-two-eight" | "genus-two-cone" => {
            let m = genus_two(resolution.unwrap_or(12));
            let g = |x, y, top| genus_two_vertex(&m, x, y, top);
            let list = match name {
                "genus-two-four" => vec![
                    (g(1.5, 0.5, true), -2),
                    (g(3.5, 2.5, true), -2),
                    (g(1.5, 2.5, false), -2),
                    (g(3.5, 0.5, false), -2),
                ],
                "genus-two-eight" => [(1.5, 0.5), (1.5, 2.5), (3.5, 0.5), (3.5, 2.5)]
                    .iter()
                    .flat_map(|&(x, y)| [(g(x, y, true), -1), (g(x, y, false), -1)])
                    .collect(),
                _ => vec![(g(2.5, 0.7, true), -8)],
            };
            (m, list)
        }
        _ => return None,
    };
    let name = BUNDLED.iter().find(|&&n| n == name)?;
    Some(BundledModel {
        name,
        mesh,
        prescription: SingularityPrescription::new(list),
    })
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::topology_report;

    #[test]
    fn grid_topology() {
        let m = unit_square_grid(3);
        let r = topology_report(&m);
        assert_eq!((r.vertices, r.faces, r.euler_characteristic), (16, 18, 1));
    }

    #[test]
    fn two_triangle_torus() {
        let (m, _) = flat_torus(1, 1, 1.0, 1.0);
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_faces()), (1, 3, 2));
        assert_eq!(m.euler_characteristic(), 0);
    }

    #[test]
    fn torus_grid_topology() {
        let (m, metric) = flat_torus(4, 3, 1.0, 1.0);
        assert_eq!(m.euler_characteristic(), 0);
        assert!(m.boundary_loops().is_empty());
        assert_eq!(metric.lengths().len(), m.num_edges());
    }

    #[test]
    fn two_hole_topology_matches_euler_count() {
        let m = two_hole_rectangle(TwoHoleDomain::default(), 600, &[[1.5, 1.0]]);
        let r = topology_report(&m);
        let direct = r.vertices as i64 - r.edges as i64 + r.faces as i64;
        assert_eq!(r.euler_characteristic, direct);
        assert_eq!(r.euler_characteristic, -1);
        assert_eq!(r.boundary_loops.len(), 3);
        let genus = 0;
        let chi = 2 - 2 * genus - r.boundary_loops.len() as i64;
        assert_eq!(chi, r.euler_characteristic);
    }

    #[test]
    fn two_hole_corners_are_boundary_vertices() {
        let d = TwoHoleDomain::default();
        let m = two_hole_rectangle(d, 600, &[]);
        for c in two_hole_corners(&m, &d) {
            assert!(m.is_boundary_vertex(c));
        }
    }

    #[test]
    fn genus_two_topology() {
        let m = genus_two(2);
        let r = topology_report(&m);
        assert_eq!(r.euler_characteristic, -2);
        assert_eq!(r.genus, 2);
        assert!(r.boundary_loops.is_empty());
    }

    #[test]
    fn every_bundled_name_builds() {
        for name in BUNDLED {
            let res = if name.starts_with("two-hole") { 300 } else { 4 };
            let b = bundled(name, Some(res)).unwrap();
            assert_eq!(b.name, name);
            assert!(b
                .prescription
                .iter()
                .all(|s| s.vertex < b.mesh.num_vertices()));
        }
        assert!(bundled("cube", None).is_none());
    }

    #[test]
    fn tetrahedra_are_spheres() {
        assert_eq!(regular_tetrahedron().euler_characteristic(), 2);
        let m = tetrahedron([
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.2, 0.9, 0.0],
            [0.3, 0.2, 0.7],
        ]);
        assert_eq!(m.euler_characteristic(), 2);
    }
}
