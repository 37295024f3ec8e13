use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::skeleton::{NodeKind, SideArc, Skeleton};
use super::trace::{angle_of, FacePoint, Terminal, TraceOptions, Tracer};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metric::ConeMetric;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuadMesh {
    /// Vertex anchors on the triangle mesh the skeleton lives on.
    pub anchors: Vec<FacePoint>,
    pub positions: Vec<[f64; 3]>,
    pub faces: Vec<Vec<usize>>,
    /// Vertices sitting on cone points of the metric.
    pub singular_vertices: Vec<usize>,
    /// Segment count of every skeleton arc.
    pub arc_counts: Vec<usize>,
}

impl QuadMesh {
    /// Quad-only OBJ.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for p in &self.positions {
            s.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
        }
        for f in &self.faces {
            s.push('f');
            for &v in f {
                s.push_str(&format!(" {}", v + 1));
            }
            s.push('\n');
        }
        s
    }

    /// Number of faces around every vertex.
    pub fn valences(&self) -> Vec<usize> {
        let mut val = vec![0; self.positions.len()];
        for f in &self.faces {
            for &v in f {
                val[v] += 1;
            }
        }
        val
    }

    /// Vertices on the mesh boundary (incident to an edge used once).
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut uses: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..f.len() {
                let (a, b) = (f[k], f[(k + 1) % f.len()]);
                *uses.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut on = vec![false; self.positions.len()];
        for ((a, b), n) in uses {
            if n == 1 {
                on[a] = true;
                on[b] = true;
            }
        }
        on
    }

    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for k in 0..f.len() {
                let (a, b) = (f[k], f[(k + 1) % f.len()]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.positions.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }
}

/// Integer segment counts: rounded lengths, then unit steps until opposite
/// sides of every patch agree.
pub fn reconcile_counts(skeleton: &Skeleton, h: f64) -> Result<Vec<usize>> {
    let lengths: Vec<f64> = skeleton.arcs.iter().map(|a| a.length).collect();
    let mut n: Vec<usize> = lengths
        .iter()
        .map(|&l| ((l / h).round() as usize).max(1))
        .collect();
    let cost =
        |a: usize, c: usize| (c as f64 * h - lengths[a]).abs() / lengths[a].max(f64::MIN_POSITIVE);
    let side_sum =
        |n: &[usize], side: &[SideArc]| side.iter().map(|s| n[s.arc] as i64).sum::<i64>();
    let cap = 10 * skeleton.arcs.len().max(1);
    for _ in 0..cap {
        let mut violated = None;
        'search: for p in &skeleton.patches {
            for k in 0..2 {
                let d = side_sum(&n, &p.sides[k]) - side_sum(&n, &p.sides[k + 2]);
                if d != 0 {
                    violated = Some((p.id, k, d));
                    break 'search;
                }
            }
        }
        let Some((pid, k, d)) = violated else {
            return Ok(n);
        };
        let p = &skeleton.patches[pid];
        let (long, short) = if d > 0 {
            (&p.sides[k], &p.sides[k + 2])
        } else {
            (&p.sides[k + 2], &p.sides[k])
        };
        // candidate unit steps: shrink the long side or grow the short one
        let mut best: Option<(f64, usize, bool)> = None;
        for s in long.iter().filter(|s| n[s.arc] > 1) {
            let c = cost(s.arc, n[s.arc] - 1) - cost(s.arc, n[s.arc]);
            if best.is_none_or(|b| (c, s.arc) < (b.0, b.1)) {
                best = Some((c, s.arc, false));
            }
        }
        for s in short {
            let c = cost(s.arc, n[s.arc] + 1) - cost(s.arc, n[s.arc]);
            if best.is_none_or(|b| (c, s.arc) < (b.0, b.1)) {
                best = Some((c, s.arc, true));
            }
        }
        let Some((_, arc, grow)) = best else {
            return Err(Error::QuantizationInfeasible(format!(
                "patch {pid} cannot balance its sides"
            )));
        };
        if grow {
            n[arc] += 1;
        } else {
            n[arc] -= 1;
        }
    }
    Err(Error::QuantizationInfeasible(format!(
        "segment counts did not settle within {cap} steps"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Node(usize),
    Arc(usize, usize),
    Inner(usize, usize, usize),
}

/// Vertex keys along one side in traversal order with their distance from
/// the side start.
fn side_points(skeleton: &Skeleton, counts: &[usize], side: &[SideArc]) -> Vec<(Key, f64)> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    for s in side {
        let arc = &skeleton.arcs[s.arc];
        let c = counts[s.arc];
        let start = if s.forward { arc.from } else { arc.to };
        out.push((Key::Node(start), acc));
        for k in 1..c {
            let kk = if s.forward { k } else { c - k };
            out.push((Key::Arc(s.arc, kk), acc + arc.length * k as f64 / c as f64));
        }
        acc += arc.length;
    }
    let last = side.last().map(|s| {
        let a = &skeleton.arcs[s.arc];
        if s.forward {
            a.to
        } else {
            a.from
        }
    });
    if let Some(v) = last {
        out.push((Key::Node(v), acc));
    }
    out
}

/// Point at distance `x` along a side and the side direction there.
fn point_on_side(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    skeleton: &Skeleton,
    side: &[SideArc],
    x: f64,
) -> (FacePoint, [f64; 2]) {
    let mut acc = 0.0;
    for (i, s) in side.iter().enumerate() {
        let l = skeleton.arcs[s.arc].length;
        if x <= acc + l || i + 1 == side.len() {
            let local = (x - acc).clamp(0.0, l);
            if s.forward {
                return skeleton.sample(mesh, metric, s.arc, local);
            }
            let (p, d) = skeleton.sample(mesh, metric, s.arc, l - local);
            return (p, [-d[0], -d[1]]);
        }
        acc += l;
    }
    unreachable!("empty side")
}

/// Subdivides every patch into a grid with arc counts from
/// [`reconcile_counts`]. Interior grid points are reached by tracing from
/// the bottom side. Returns anchors on `mesh`; 3D positions are barycentric
/// on its faces.
pub fn quantize_and_subdivide(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    skeleton: &Skeleton,
    h: f64,
    opts: TraceOptions,
) -> Result<QuadMesh> {
    if !(h > 0.0) {
        return Err(Error::Config("target edge length must be positive".into()));
    }
    // arcs exactly at h/2 (lattice layouts) must not fail on rounding
    if let Some(a) = skeleton
        .arcs
        .iter()
        .find(|a| a.length < 0.5 * h * (1.0 - 1e-9))
    {
        return Err(Error::TooCoarse(format!(
            "arc {} has length {:.6} below h/2 = {:.6}",
            a.id,
            a.length,
            0.5 * h
        )));
    }
    let counts = reconcile_counts(skeleton, h)?;
    let mut singular = vec![false; mesh.num_vertices()];
    for n in &skeleton.nodes {
        if let NodeKind::Singularity { vertex } = n.kind {
            singular[vertex] = true;
        }
    }
    let tracer = Tracer::new(mesh, metric, singular, opts);

    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut anchors: Vec<FacePoint> = Vec::new();
    let mut singular_vertices = Vec::new();
    let mut faces = Vec::new();
    let mut vertex = |key: Key, make: &mut dyn FnMut() -> Result<FacePoint>| -> Result<usize> {
        if let Some(&i) = index.get(&key) {
            return Ok(i);
        }
        let i = anchors.len();
        anchors.push(make()?);
        index.insert(key, i);
        if let Key::Node(n) = key {
            if matches!(skeleton.nodes[n].kind, NodeKind::Singularity { .. }) {
                singular_vertices.push(i);
            }
        }
        Ok(i)
    };

    for p in &skeleton.patches {
        let sides: Vec<Vec<(Key, f64)>> = p
            .sides
            .iter()
            .map(|s| side_points(skeleton, &counts, s))
            .collect();
        let n = sides[0].len() - 1;
        let m = sides[1].len() - 1;
        if sides[2].len() != n + 1 || sides[3].len() != m + 1 {
            return Err(Error::QuantizationInfeasible(format!(
                "patch {} sides disagree",
                p.id
            )));
        }
        let (w, hh) = (p.width, p.height);
        // grid coordinates of the boundary samples
        let xb: Vec<f64> = sides[0].iter().map(|s| s.1).collect();
        let xt: Vec<f64> = (0..=n).map(|i| w - sides[2][n - i].1).collect();
        let yr: Vec<f64> = sides[1].iter().map(|s| s.1).collect();
        let yl: Vec<f64> = (0..=m).map(|j| hh - sides[3][m - j].1).collect();
        let mut grid = vec![vec![0usize; m + 1]; n + 1];
        for i in 0..=n {
            for j in 0..=m {
                let key = if j == 0 {
                    Some(sides[0][i].0)
                } else if i == n {
                    Some(sides[1][j].0)
                } else if j == m {
                    Some(sides[2][n - i].0)
                } else if i == 0 {
                    Some(sides[3][m - j].0)
                } else {
                    None
                };
                grid[i][j] = match key {
                    Some(k) => vertex(k, &mut || {
                        Ok(boundary_anchor(mesh, metric, skeleton, &counts, k))
                    })?,
                    None => {
                        let (s, t) = (i as f64 / n as f64, j as f64 / m as f64);
                        let x = (1.0 - t) * xb[i] + t * xt[i];
                        let y = (1.0 - s) * yl[j] + s * yr[j];
                        vertex(Key::Inner(p.id, i, j), &mut || {
                            let (start, d) = point_on_side(mesh, metric, skeleton, &p.sides[0], x);
                            let a = angle_of(d) + p.angle;
                            let path = tracer.trace_from_point(start, a, y, false)?;
                            if path.terminal != Terminal::LengthBudget {
                                return Err(Error::DegenerateMetric(format!(
                                    "grid trace in patch {} stopped early: {:?}",
                                    p.id, path.terminal
                                )));
                            }
                            Ok(path.point_at(path.length))
                        })?
                    }
                };
            }
        }
        for i in 0..n {
            for j in 0..m {
                faces.push(vec![
                    grid[i][j],
                    grid[i + 1][j],
                    grid[i + 1][j + 1],
                    grid[i][j + 1],
                ]);
            }
        }
    }
    let positions = match mesh.positions() {
        Some(pos) => anchors
            .iter()
            .map(|a| barycentric_point(mesh, pos, *a))
            .collect(),
        None => vec![[0.0; 3]; anchors.len()],
    };
    Ok(QuadMesh {
        anchors,
        positions,
        faces,
        singular_vertices,
        arc_counts: counts,
    })
}

fn boundary_anchor(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    skeleton: &Skeleton,
    counts: &[usize],
    key: Key,
) -> FacePoint {
    match key {
        Key::Node(n) => skeleton.nodes[n].anchor,
        Key::Arc(a, k) => {
            let l = skeleton.arcs[a].length;
            skeleton
                .sample(mesh, metric, a, l * k as f64 / counts[a] as f64)
                .0
        }
        Key::Inner(..) => unreachable!("inner keys are traced"),
    }
}

pub(crate) fn barycentric_point(mesh: &TriangleMesh, pos: &[[f64; 3]], p: FacePoint) -> [f64; 3] {
    let vs = mesh.face_vertices(p.face);
    let mut out = [0.0; 3];
    for k in 0..3 {
        for c in 0..3 {
            out[c] += p.bary[k] * pos[vs[k]][c];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QualityReport {
    /// Valence (incident faces) to count, interior vertices.
    pub interior_census: BTreeMap<usize, usize>,
    pub boundary_census: BTreeMap<usize, usize>,
    pub max_angle_deviation: f64,
    pub edge_length_cv: f64,
    pub index_sum: i64,
    pub euler_characteristic: i64,
}

impl QualityReport {
    /// Interior vertices of valence other than four.
    pub fn irregular_interior(&self) -> BTreeMap<usize, usize> {
        self.interior_census
            .iter()
            .filter(|(&v, _)| v != 4)
            .map(|(&v, &c)| (v, c))
            .collect()
    }
}

/// Valence census and shape statistics. Index is `4 - valence` inside and
/// `2 - valence` on the boundary, summing to four times the Euler
/// characteristic.
pub fn quad_quality(quads: &QuadMesh) -> Result<QualityReport> {
    if let Some(f) = quads.faces.iter().position(|f| f.len() != 4) {
        return Err(Error::NonQuadFace(f));
    }
    let val = quads.valences();
    let on_boundary = quads.boundary_vertices();
    let mut interior_census = BTreeMap::new();
    let mut boundary_census = BTreeMap::new();
    let mut index_sum = 0i64;
    for v in 0..val.len() {
        if on_boundary[v] {
            *boundary_census.entry(val[v]).or_insert(0) += 1;
            index_sum += 2 - val[v] as i64;
        } else {
            *interior_census.entry(val[v]).or_insert(0) += 1;
            index_sum += 4 - val[v] as i64;
        }
    }
    let p = &quads.positions;
    let mut max_dev: f64 = 0.0;
    let mut lengths = Vec::new();
    for f in &quads.faces {
        for k in 0..4 {
            let (a, b, c) = (p[f[(k + 3) % 4]], p[f[k]], p[f[(k + 1) % 4]]);
            let u = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            let w = [c[0] - b[0], c[1] - b[1], c[2] - b[2]];
            let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            let nw = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            lengths.push(nw);
            if nu > 0.0 && nw > 0.0 {
                let cos = ((u[0] * w[0] + u[1] * w[1] + u[2] * w[2]) / (nu * nw)).clamp(-1.0, 1.0);
                max_dev = max_dev.max((cos.acos() - FRAC_PI_2).abs());
            }
        }
    }
    let mean = lengths.iter().sum::<f64>() / lengths.len().max(1) as f64;
    let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / lengths.len().max(1) as f64;
    Ok(QualityReport {
        interior_census,
        boundary_census,
        max_angle_deviation: max_dev,
        edge_length_cv: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
        index_sum,
        euler_characteristic: quads.euler_characteristic(),
    })
}

/// Re-anchors quad vertices on `original`, the mesh the skeleton's mesh was
/// obtained from by intrinsic edge flips. Each point is projected onto the
/// nearest original face around the vertices of its intrinsic face.
pub fn pull_back(
    original: &TriangleMesh,
    intrinsic: &TriangleMesh,
    quads: &mut QuadMesh,
) -> Result<Vec<FacePoint>> {
    let pos = original
        .positions()
        .ok_or_else(|| Error::Config("pullback needs vertex positions".into()))?;
    let mut out = Vec::with_capacity(quads.anchors.len());
    for (i, a) in quads.anchors.iter().enumerate() {
        let p = barycentric_point(intrinsic, pos, *a);
        let seeds = intrinsic.face_vertices(a.face);
        let mut faces: Vec<usize> = Vec::new();
        let mut ring: Vec<usize> = seeds.to_vec();
        let mut seen_v = std::collections::HashSet::new();
        for _ in 0..2 {
            let mut next = Vec::new();
            for v in ring {
                if !seen_v.insert(v) {
                    continue;
                }
                for h in original.corners_around(v) {
                    let f = original.face(h).unwrap();
                    if !faces.contains(&f) {
                        faces.push(f);
                        next.extend(original.face_vertices(f));
                    }
                }
            }
            ring = next;
        }
        let mut best: Option<(f64, usize, [f64; 3], [f64; 3])> = None;
        for f in faces {
            let [x, y, z] = original.face_vertices(f).map(|v| pos[v]);
            let (q, bary) = closest_on_triangle(p, x, y, z);
            let d = (0..3).map(|c| (q[c] - p[c]).powi(2)).sum::<f64>();
            if best.is_none_or(|b| (d, f) < (b.0, b.1)) {
                best = Some((d, f, q, bary));
            }
        }
        let (_, f, q, bary) =
            best.ok_or_else(|| Error::DegenerateMetric(format!("no face near quad vertex {i}")))?;
        quads.positions[i] = q;
        out.push(FacePoint { face: f, bary });
    }
    Ok(out)
}

fn closest_on_triangle(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let sub = |u: [f64; 3], v: [f64; 3]| [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let dot = |u: [f64; 3], v: [f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let at = |w: [f64; 3]| {
        let q = [0, 1, 2].map(|k| w[0] * a[k] + w[1] * b[k] + w[2] * c[k]);
        (q, w)
    };
    let (ab, ac, ap) = (sub(b, a), sub(c, a), sub(p, a));
    let (d1, d2) = (dot(ab, ap), dot(ac, ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return at([1.0, 0.0, 0.0]);
    }
    let bp = sub(p, b);
    let (d3, d4) = (dot(ab, bp), dot(ac, bp));
    if d3 >= 0.0 && d4 <= d3 {
        return at([0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return at([1.0 - v, v, 0.0]);
    }
    let cp = sub(p, c);
    let (d5, d6) = (dot(ab, cp), dot(ac, cp));
    if d6 >= 0.0 && d5 <= d6 {
        return at([0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return at([1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return at([0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let (v, w) = (vb * denom, vc * denom);
    at([1.0 - v - w, v, w])
}
