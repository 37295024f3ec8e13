use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::separatrix::Separatrix;
use super::trace::{
    angle_of, ccw_angle, cross, edge_scale, face_frame, from_bary, sub, to_bary, FacePoint, Fan,
    GeodesicPath, Terminal, TraceOptions, Tracer,
};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metric::{angle_sums, ConeMetric};
use crate::seamless::CrossField;

/// Tolerance on patch corner angles (radians).
pub const ANGLE_TOL: f64 = 1e-6;
/// Relative tolerance on opposite side lengths.
pub const SIDE_TOL: f64 = 1e-6;
/// Angle defect above which a vertex counts as singular.
const CONE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum NodeKind {
    Singularity {
        vertex: usize,
    },
    /// Flat vertex where separatrices meet or end.
    Vertex {
        vertex: usize,
    },
    /// Separatrix foot inside a boundary edge.
    Foot {
        halfedge: usize,
        t: f64,
    },
    Crossing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SkeletonNode {
    pub id: usize,
    #[serde(flatten)]
    pub kind: NodeKind,
    pub anchor: FacePoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ArcSource {
    /// Piece `[s0, s1]` of curve `curve`.
    Separatrix { curve: usize, s0: f64, s1: f64 },
    /// Piece of boundary loop `boundary` between two loop parameters
    /// (halfedge position plus edge fraction).
    Boundary { boundary: usize, p0: f64, p1: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SkeletonArc {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub length: f64,
    pub source: ArcSource,
    pub polyline: Vec<FacePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SideArc {
    pub arc: usize,
    pub forward: bool,
}

/// Rectangle with counterclockwise sides: bottom, right, top, left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Patch {
    pub id: usize,
    pub corners: [usize; 4],
    pub sides: [Vec<SideArc>; 4],
    pub width: f64,
    pub height: f64,
    /// Angle from the bottom side to the left side at corner 0; a right
    /// angle except for the periodic patch.
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Skeleton {
    pub nodes: Vec<SkeletonNode>,
    pub arcs: Vec<SkeletonArc>,
    pub patches: Vec<Patch>,
    /// Set for a closed surface without singularities.
    pub periodic: bool,
    pub chi: i64,
    /// Traced curves the separatrix arcs refer to.
    #[serde(skip)]
    pub curves: Vec<GeodesicPath>,
    /// Boundary loops as face-carrying halfedges, interior on the left.
    #[serde(skip)]
    pub boundaries: Vec<Vec<usize>>,
}

impl Skeleton {
    pub fn euler(&self) -> i64 {
        self.nodes.len() as i64 - self.arcs.len() as i64 + self.patches.len() as i64
    }

    pub fn side_length(&self, side: &[SideArc]) -> f64 {
        side.iter().map(|s| self.arcs[s.arc].length).sum()
    }

    /// Worst relative mismatch between opposite sides over all patches.
    pub fn side_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for p in &self.patches {
            for k in 0..2 {
                let (a, b) = (
                    self.side_length(&p.sides[k]),
                    self.side_length(&p.sides[k + 2]),
                );
                worst = worst.max((a - b).abs() / a.max(b).max(f64::MIN_POSITIVE));
            }
        }
        worst
    }

    /// Point at distance `s` from the start of `arc` and the arc direction
    /// there, in the canonical frame of the point's face.
    pub fn sample(
        &self,
        mesh: &TriangleMesh,
        metric: &ConeMetric,
        arc: usize,
        s: f64,
    ) -> (FacePoint, [f64; 2]) {
        match self.arcs[arc].source {
            ArcSource::Separatrix { curve, s0, s1 } => {
                let path = &self.curves[curve];
                let at = (s0 + s).clamp(s0.min(s1), s1.max(s0));
                let k = path.crossing_at(at, true);
                let c = &path.crossings[k];
                let frame = face_frame(mesh, metric, c.face);
                let d = sub(from_bary(c.to, &frame), from_bary(c.from, &frame));
                (path.point_at_in(k, at), d)
            }
            ArcSource::Boundary { boundary, p0, .. } => {
                let seq = &self.boundaries[boundary];
                let (h, t) = walk_boundary(mesh, metric, seq, p0, s);
                let (fp, d) = halfedge_point(mesh, metric, h, t);
                (fp, d)
            }
        }
    }

    /// JSON export with 3D anchors and polylines.
    pub fn to_json(&self, to3d: &dyn Fn(FacePoint) -> [f64; 3]) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                let mut v = serde_json::to_value(n).unwrap_or_default();
                v["position"] = serde_json::json!(to3d(n.anchor));
                v
            })
            .collect();
        let arcs: Vec<_> = self
            .arcs
            .iter()
            .map(|a| {
                let pts: Vec<[f64; 3]> = a.polyline.iter().map(|&p| to3d(p)).collect();
                serde_json::json!({
                    "id": a.id, "from": a.from, "to": a.to, "length": a.length,
                    "source": a.source, "polyline": pts,
                })
            })
            .collect();
        serde_json::json!({
            "nodes": nodes,
            "arcs": arcs,
            "patches": self.patches,
            "periodic": self.periodic,
            "chi": self.chi,
            "euler": self.euler(),
            "sideMismatch": self.side_mismatch(),
        })
    }
}

impl GeodesicPath {
    /// Point at arclength `s` inside crossing `k`.
    pub(crate) fn point_at_in(&self, k: usize, s: f64) -> FacePoint {
        let c = &self.crossings[k];
        let t = if c.s1 > c.s0 {
            ((s - c.s0) / (c.s1 - c.s0)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        FacePoint {
            face: c.face,
            bary: super::trace::lerp3(c.from, c.to, t),
        }
    }
}

/// Boundary loops as sequences of face-carrying halfedges with the
/// interior on the left.
pub fn boundary_sequences(mesh: &TriangleMesh) -> Vec<Vec<usize>> {
    mesh.boundary_loops()
        .into_iter()
        .map(|lp| lp.iter().rev().map(|&b| b ^ 1).collect())
        .collect()
}

fn halfedge_point(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    h: usize,
    t: f64,
) -> (FacePoint, [f64; 2]) {
    let f = mesh.face(h).expect("face-carrying halfedge");
    let k = mesh.local_index(h);
    let frame = face_frame(mesh, metric, f);
    let mut bary = [0.0; 3];
    bary[k] = 1.0 - t;
    bary[(k + 1) % 3] = t;
    (
        FacePoint { face: f, bary },
        sub(frame[(k + 1) % 3], frame[k]),
    )
}

/// Halfedge and fraction at distance `s` past parameter `p0` of a loop.
fn walk_boundary(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    seq: &[usize],
    p0: f64,
    s: f64,
) -> (usize, f64) {
    let n = seq.len();
    let mut i = (p0.floor() as usize).min(n - 1);
    let mut t = p0 - i as f64;
    let mut rest = s;
    for _ in 0..=2 * n {
        let l = metric.length(mesh.edge(seq[i]));
        let left = (1.0 - t) * l;
        if rest <= left {
            return (seq[i], t + rest / l);
        }
        rest -= left;
        i = (i + 1) % n;
        t = 0.0;
    }
    (seq[i], t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Vertex(usize),
    Foot(usize, i64),
    Point(usize),
}

#[derive(Clone, Copy, Debug)]
struct Event {
    s: f64,
    node: usize,
    ang_in: f64,
    ang_out: f64,
}

#[derive(Clone, Copy, Debug)]
struct Seg {
    curve: usize,
    p0: [f64; 2],
    p1: [f64; 2],
    s0: f64,
    s1: f64,
}

struct Builder<'a> {
    mesh: &'a TriangleMesh,
    metric: &'a ConeMetric,
    fans: HashMap<usize, Fan>,
    nodes: Vec<SkeletonNode>,
    keys: HashMap<Key, usize>,
    /// Angular period at each node; `None` on the boundary.
    wrap: Vec<Option<f64>>,
    /// Angle of the backward boundary direction at boundary nodes.
    back: Vec<f64>,
}

impl<'a> Builder<'a> {
    fn fan(&mut self, v: usize) -> Result<&Fan> {
        if !self.fans.contains_key(&v) {
            let fan = Fan::new(self.mesh, self.metric, v)?;
            self.fans.insert(v, fan);
        }
        Ok(&self.fans[&v])
    }

    fn node(
        &mut self,
        key: Key,
        kind: NodeKind,
        anchor: FacePoint,
        wrap: Option<f64>,
        back: f64,
    ) -> usize {
        if let Some(&id) = self.keys.get(&key) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(SkeletonNode { id, kind, anchor });
        self.keys.insert(key, id);
        self.wrap.push(wrap);
        self.back.push(back);
        id
    }

    fn vertex_node(&mut self, v: usize, singular: bool) -> Result<usize> {
        if let Some(&id) = self.keys.get(&Key::Vertex(v)) {
            return Ok(id);
        }
        let boundary = self.mesh.is_boundary_vertex(v);
        let fan = self.fan(v)?;
        let total = fan.total;
        let h = fan.corners[0];
        let f = self.mesh.face(h).unwrap();
        let mut bary = [0.0; 3];
        bary[self.mesh.local_index(h)] = 1.0;
        let kind = if singular {
            NodeKind::Singularity { vertex: v }
        } else {
            NodeKind::Vertex { vertex: v }
        };
        let wrap = (!boundary).then_some(total);
        Ok(self.node(
            Key::Vertex(v),
            kind,
            FacePoint { face: f, bary },
            wrap,
            total,
        ))
    }

    /// Fan angle at `v` of direction `d` leaving corner `q` of face `f`.
    fn fan_angle(&mut self, v: usize, f: usize, q: usize, d: [f64; 2]) -> Result<f64> {
        let frame = face_frame(self.mesh, self.metric, f);
        let u1 = sub(frame[(q + 1) % 3], frame[q]);
        let mut a = ccw_angle(u1, d);
        if a > TAU - 1e-9 {
            a = 0.0;
        }
        let mesh = self.mesh;
        let fan = self.fan(v)?;
        let slot = fan
            .slot(mesh, f, q)
            .ok_or_else(|| Error::DegenerateMetric(format!("corner of vertex {v} not found")))?;
        Ok(fan.start[slot] + a)
    }

    fn crossing_points(&self, path: &GeodesicPath, k: usize) -> ([f64; 2], [f64; 2]) {
        let c = &path.crossings[k];
        let frame = face_frame(self.mesh, self.metric, c.face);
        (from_bary(c.from, &frame), from_bary(c.to, &frame))
    }
}

fn corner_of(bary: [f64; 3]) -> usize {
    (0..3).max_by(|&a, &b| bary[a].total_cmp(&bary[b])).unwrap()
}

fn norm_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU - 1e-12 {
        0.0
    } else {
        r
    }
}

/// Arrangement of separatrices and boundary loops, checked to consist of
/// Euclidean rectangles.
pub fn build_skeleton(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    separatrices: &[Separatrix],
) -> Result<Skeleton> {
    let sums = angle_sums(mesh, metric)?;
    let mut b = Builder {
        mesh,
        metric,
        fans: HashMap::new(),
        nodes: Vec::new(),
        keys: HashMap::new(),
        wrap: Vec::new(),
        back: Vec::new(),
    };
    let mut any_singular = false;
    for v in 0..mesh.num_vertices() {
        let flat = if mesh.is_boundary_vertex(v) { PI } else { TAU };
        if (sums[v] - flat).abs() > CONE_TOL {
            b.vertex_node(v, true)?;
            any_singular = true;
        }
    }
    let boundaries = boundary_sequences(mesh);
    let chi = mesh.num_vertices() as i64 - mesh.num_edges() as i64 + mesh.num_faces() as i64;

    // curves and their end events
    let mut curves: Vec<GeodesicPath> = Vec::new();
    let mut events: Vec<Vec<Event>> = Vec::new();
    if separatrices.is_empty() && !any_singular && boundaries.is_empty() {
        // nothing to split along; see periodic_skeleton
        return Err(Error::NonRectangularPatch {
            patch: 0,
            corners: 0,
        });
    }
    for sep in separatrices.iter().filter(|s| s.duplicate_of.is_none()) {
        let path = &sep.path;
        let id = curves.len();
        let first = &path.crossings[0];
        let q = corner_of(first.from);
        let (p0, p1) = b.crossing_points(path, 0);
        let ang_out = b.fan_angle(sep.source, first.face, q, sub(p1, p0))?;
        let start = b.vertex_node(sep.source, true)?;
        let last = path.crossings.len() - 1;
        let lc = &path.crossings[last];
        let (q0, q1) = b.crossing_points(path, last);
        let (node, ang_in) = match path.terminal {
            Terminal::Singularity { vertex } | Terminal::BoundaryVertex { vertex } => {
                let q = mesh
                    .face_vertices(lc.face)
                    .iter()
                    .position(|&x| x == vertex)
                    .unwrap();
                let a = b.fan_angle(vertex, lc.face, q, sub(q0, q1))?;
                let singular = matches!(path.terminal, Terminal::Singularity { .. });
                (b.vertex_node(vertex, singular)?, a)
            }
            Terminal::Boundary { halfedge, t } => {
                let (fp, e) = halfedge_point(mesh, metric, halfedge, t);
                let a = ccw_angle(e, sub(q0, q1));
                let key = Key::Foot(halfedge, (t * 1e9).round() as i64);
                (b.node(key, NodeKind::Foot { halfedge, t }, fp, None, PI), a)
            }
            Terminal::ClosedLoop | Terminal::LengthBudget => {
                return Err(Error::InfiniteSeparatrix(sep.id))
            }
        };
        events.push(vec![
            Event {
                s: 0.0,
                node: start,
                ang_in: f64::NAN,
                ang_out,
            },
            Event {
                s: path.length,
                node,
                ang_in,
                ang_out: f64::NAN,
            },
        ]);
        curves.push(path.clone());
        debug_assert_eq!(events.len(), id + 1);
    }

    // meetings at flat vertices
    let mut passes: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (ci, path) in curves.iter().enumerate() {
        for &(v, s) in &path.vertex_passes {
            passes.entry(v).or_default().push((ci, s));
        }
    }
    let mut pass_vertices: Vec<usize> = passes
        .iter()
        .filter(|(_, l)| l.len() > 1)
        .map(|(&v, _)| v)
        .collect();
    pass_vertices.sort_unstable();
    for v in pass_vertices {
        let node = b.vertex_node(v, false)?;
        for &(ci, s) in &passes[&v] {
            let path = &curves[ci];
            let k = path.crossing_at(s, false);
            let (a0, a1) = b.crossing_points(path, k);
            let ca = &path.crossings[k];
            let ang_in = b.fan_angle(v, ca.face, corner_of(ca.to), sub(a0, a1))?;
            let cb = &path.crossings[k + 1];
            let (b0, b1) = b.crossing_points(path, k + 1);
            let ang_out = b.fan_angle(v, cb.face, corner_of(cb.from), sub(b1, b0))?;
            events[ci].push(Event {
                s,
                node,
                ang_in,
                ang_out,
            });
        }
    }

    // transversal crossings inside faces
    let mut by_face: HashMap<usize, Vec<Seg>> = HashMap::new();
    for (ci, path) in curves.iter().enumerate() {
        for (k, c) in path.crossings.iter().enumerate() {
            let (p0, p1) = b.crossing_points(path, k);
            by_face.entry(c.face).or_default().push(Seg {
                curve: ci,
                p0,
                p1,
                s0: c.s0,
                s1: c.s1,
            });
        }
    }
    let mut faces: Vec<usize> = by_face.keys().copied().collect();
    faces.sort_unstable();
    let mut found: Vec<(usize, f64, usize, f64)> = Vec::new();
    for f in faces {
        let segs = &by_face[&f];
        let frame = face_frame(mesh, metric, f);
        let scale = edge_scale(&frame);
        for i in 0..segs.len() {
            for j in i + 1..segs.len() {
                let (sa, sb) = (segs[i], segs[j]);
                let r = sub(sa.p1, sa.p0);
                let q = sub(sb.p1, sb.p0);
                let (lr, lq) = (r[0].hypot(r[1]), q[0].hypot(q[1]));
                if lr <= 1e-12 * scale || lq <= 1e-12 * scale {
                    continue;
                }
                let w = sub(sb.p0, sa.p0);
                let den = cross(r, q);
                if den.abs() <= 1e-12 * lr * lq {
                    if cross(r, w).abs() / lr < 1e-9 * scale {
                        let t0 = (w[0] * r[0] + w[1] * r[1]) / (lr * lr);
                        let w1 = sub(sb.p1, sa.p0);
                        let t1 = (w1[0] * r[0] + w1[1] * r[1]) / (lr * lr);
                        let overlap = (t0.max(t1).min(1.0) - t0.min(t1).max(0.0)) * lr;
                        if overlap > 1e-9 * scale {
                            return Err(Error::OverlappingSeparatrices(format!(
                                "curves {} and {} share a stretch in face {f}",
                                sa.curve, sb.curve
                            )));
                        }
                    }
                    continue;
                }
                let u = cross(w, q) / den;
                let v = cross(w, r) / den;
                if !(-1e-12..=1.0 + 1e-12).contains(&u) || !(-1e-12..=1.0 + 1e-12).contains(&v) {
                    continue;
                }
                let x = [sa.p0[0] + u * r[0], sa.p0[1] + u * r[1]];
                if frame
                    .iter()
                    .any(|&c| sub(x, c)[0].hypot(sub(x, c)[1]) < 1e-8 * scale)
                {
                    continue;
                }
                let s_a = sa.s0 + u * (sa.s1 - sa.s0);
                let s_b = sb.s0 + v * (sb.s1 - sb.s0);
                let (la, lb) = (curves[sa.curve].length, curves[sb.curve].length);
                let tol = 1e-9 * scale;
                if s_a < tol || s_a > la - tol || s_b < tol || s_b > lb - tol {
                    continue;
                }
                if sa.curve == sb.curve && (s_a - s_b).abs() < tol {
                    continue;
                }
                let (ca, sa_, cb, sb_) = if (sa.curve, s_a) <= (sb.curve, s_b) {
                    (sa.curve, s_a, sb.curve, s_b)
                } else {
                    (sb.curve, s_b, sa.curve, s_a)
                };
                let dup = found.iter().any(|&(c0, t0, c1, t1)| {
                    c0 == ca
                        && c1 == cb
                        && (t0 - sa_).abs() < 1e-8 * scale
                        && (t1 - sb_).abs() < 1e-8 * scale
                });
                if dup {
                    continue;
                }
                found.push((ca, sa_, cb, sb_));
                let key = Key::Point(found.len() - 1);
                let anchor = FacePoint {
                    face: f,
                    bary: to_bary(x, &frame),
                };
                let node = b.node(key, NodeKind::Crossing, anchor, Some(TAU), TAU);
                for (seg, s) in [(sa, s_a), (sb, s_b)] {
                    let out = norm_angle(angle_of(sub(seg.p1, seg.p0)));
                    events[seg.curve].push(Event {
                        s,
                        node,
                        ang_in: norm_angle(out + PI),
                        ang_out: out,
                    });
                }
            }
        }
    }

    // separatrix arcs
    let mut arcs: Vec<SkeletonArc> = Vec::new();
    let mut half_angle: Vec<f64> = Vec::new();
    let mut exterior: Vec<bool> = Vec::new();
    for (ci, ev) in events.iter_mut().enumerate() {
        ev.sort_by(|a, c| a.s.total_cmp(&c.s));
        for w in ev.windows(2) {
            let (e0, e1) = (w[0], w[1]);
            let id = arcs.len();
            arcs.push(SkeletonArc {
                id,
                from: e0.node,
                to: e1.node,
                length: e1.s - e0.s,
                source: ArcSource::Separatrix {
                    curve: ci,
                    s0: e0.s,
                    s1: e1.s,
                },
                polyline: curve_polyline(&curves[ci], e0.s, e1.s),
            });
            half_angle.push(e0.ang_out);
            half_angle.push(e1.ang_in);
            exterior.extend([false, false]);
        }
    }

    // boundary arcs
    for (li, seq) in boundaries.iter().enumerate() {
        let pos: HashMap<usize, usize> = seq.iter().enumerate().map(|(i, &h)| (h, i)).collect();
        let mut on: Vec<(f64, usize)> = Vec::new();
        for node in &b.nodes {
            let p = match node.kind {
                NodeKind::Foot { halfedge, t } => pos.get(&halfedge).map(|&i| i as f64 + t),
                NodeKind::Singularity { vertex } | NodeKind::Vertex { vertex } => {
                    if mesh.is_boundary_vertex(vertex) {
                        seq.iter()
                            .position(|&h| mesh.origin(h) == vertex)
                            .map(|i| i as f64)
                    } else {
                        None
                    }
                }
                NodeKind::Crossing => None,
            };
            if let Some(p) = p {
                on.push((p, node.id));
            }
        }
        if on.is_empty() {
            return Err(Error::NonRectangularPatch {
                patch: 0,
                corners: 0,
            });
        }
        on.sort_by(|a, c| a.0.total_cmp(&c.0));
        let cum = cumulative(mesh, metric, seq);
        let total = cum[seq.len()];
        let at = |p: f64| {
            let i = (p.floor() as usize).min(seq.len() - 1);
            cum[i] + (p - i as f64) * (cum[i + 1] - cum[i])
        };
        for k in 0..on.len() {
            let (p0, n0) = on[k];
            let (p1, n1) = on[(k + 1) % on.len()];
            let mut length = at(p1) - at(p0);
            if k + 1 == on.len() {
                length += total;
            }
            let id = arcs.len();
            let p1_unwrapped = if k + 1 == on.len() {
                p1 + seq.len() as f64
            } else {
                p1
            };
            arcs.push(SkeletonArc {
                id,
                from: n0,
                to: n1,
                length,
                source: ArcSource::Boundary {
                    boundary: li,
                    p0,
                    p1,
                },
                polyline: boundary_polyline(mesh, metric, seq, p0, p1_unwrapped),
            });
            half_angle.push(0.0);
            half_angle.push(b.back[n1]);
            exterior.extend([false, true]);
        }
    }

    // half-arcs around each node
    let tail = |ha: usize| {
        if ha.is_multiple_of(2) {
            arcs[ha / 2].from
        } else {
            arcs[ha / 2].to
        }
    };
    let mut around: Vec<Vec<usize>> = vec![Vec::new(); b.nodes.len()];
    for ha in 0..2 * arcs.len() {
        around[tail(ha)].push(ha);
    }
    for (n, list) in around.iter_mut().enumerate() {
        list.sort_by(|&x, &y| half_angle[x].total_cmp(&half_angle[y]));
        for w in list.windows(2) {
            if half_angle[w[1]] - half_angle[w[0]] < ANGLE_TOL {
                return Err(Error::OverlappingSeparatrices(format!(
                    "two arcs leave node {n} in one direction"
                )));
            }
        }
        if let (Some(total), Some(&first), Some(&last)) = (b.wrap[n], list.first(), list.last()) {
            if list.len() > 1 && half_angle[first] + total - half_angle[last] < ANGLE_TOL {
                return Err(Error::OverlappingSeparatrices(format!(
                    "two arcs leave node {n} in one direction"
                )));
            }
        }
    }
    // clockwise successor of the reverse of `ha` and the corner angle between
    let next = |ha: usize| -> Option<(usize, f64)> {
        let t = ha ^ 1;
        let n = tail(t);
        let list = &around[n];
        let i = list.iter().position(|&x| x == t)?;
        if i > 0 {
            let nx = list[i - 1];
            Some((nx, half_angle[t] - half_angle[nx]))
        } else {
            let total = b.wrap[n]?;
            let nx = *list.last()?;
            Some((nx, half_angle[t] + total - half_angle[nx]))
        }
    };

    let mut patches = Vec::new();
    let mut seen = vec![false; 2 * arcs.len()];
    for h0 in 0..2 * arcs.len() {
        if seen[h0] || exterior[h0] {
            continue;
        }
        let pid = patches.len();
        let mut cycle: Vec<(usize, bool)> = Vec::new();
        let mut cur = h0;
        loop {
            seen[cur] = true;
            let (nx, theta) = next(cur).ok_or(Error::NonRectangularPatch {
                patch: pid,
                corners: 0,
            })?;
            let corner = if (theta - FRAC_PI_2).abs() <= ANGLE_TOL {
                true
            } else if (theta - PI).abs() <= ANGLE_TOL {
                false
            } else {
                let corners = cycle.iter().filter(|c| c.1).count() + 1;
                return Err(Error::NonRectangularPatch {
                    patch: pid,
                    corners,
                });
            };
            cycle.push((cur, corner));
            if exterior[nx] {
                return Err(Error::NonRectangularPatch {
                    patch: pid,
                    corners: 0,
                });
            }
            cur = nx;
            if cur == h0 {
                break;
            }
            if cycle.len() > 2 * arcs.len() {
                return Err(Error::NonRectangularPatch {
                    patch: pid,
                    corners: 0,
                });
            }
        }
        let count = cycle.iter().filter(|c| c.1).count();
        if count != 4 {
            return Err(Error::NonRectangularPatch {
                patch: pid,
                corners: count,
            });
        }
        let i0 = cycle.iter().position(|c| c.1).unwrap();
        let mut sides: [Vec<SideArc>; 4] = Default::default();
        let mut corners = [0usize; 4];
        let mut side = 0;
        for k in 0..cycle.len() {
            let (ha, corner) = cycle[(i0 + 1 + k) % cycle.len()];
            if sides[side].is_empty() {
                corners[side] = tail(ha);
            }
            sides[side].push(SideArc {
                arc: ha / 2,
                forward: ha % 2 == 0,
            });
            if corner {
                side += 1;
            }
        }
        let len = |s: &[SideArc]| s.iter().map(|x| arcs[x.arc].length).sum::<f64>();
        let l: Vec<f64> = sides.iter().map(|s| len(s)).collect();
        for k in 0..2 {
            if (l[k] - l[k + 2]).abs() > SIDE_TOL * l[k].max(l[k + 2]) {
                return Err(Error::NonRectangularPatch {
                    patch: pid,
                    corners: 4,
                });
            }
        }
        patches.push(Patch {
            id: pid,
            corners,
            sides,
            width: l[0],
            height: l[1],
            angle: FRAC_PI_2,
        });
    }

    Ok(Skeleton {
        nodes: b.nodes,
        arcs,
        patches,
        periodic: false,
        chi,
        curves,
        boundaries,
    })
}

/// Reduced basis of the lattice generated by `periods`, which must lie on
/// the grid `unit Z^2`. Returns `None` when they do not span the plane.
pub fn lattice_basis(periods: &[[f64; 2]], unit: f64) -> Option<[[i64; 2]; 2]> {
    let mut vs: Vec<[i64; 2]> = periods
        .iter()
        .map(|p| [(p[0] / unit).round() as i64, (p[1] / unit).round() as i64])
        .filter(|v| *v != [0, 0])
        .collect();
    // Euclid on the first coordinate
    let mut a: Option<[i64; 2]> = None;
    let mut rest: Vec<[i64; 2]> = Vec::new();
    for v in vs.drain(..) {
        if v[0] == 0 {
            rest.push(v);
            continue;
        }
        let Some(mut u) = a else {
            a = Some(v);
            continue;
        };
        let mut w = v;
        while w[0] != 0 {
            let q = u[0].div_euclid(w[0]);
            let r = [u[0] - q * w[0], u[1] - q * w[1]];
            u = w;
            w = r;
        }
        a = Some(u);
        rest.push(w);
    }
    let a = a?;
    let g = rest.iter().fold(0i64, |g, v| gcd(g, v[1]));
    if g == 0 {
        return None;
    }
    Some(gauss_reduce(a, [0, g]))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn gauss_reduce(mut a: [i64; 2], mut b: [i64; 2]) -> [[i64; 2]; 2] {
    let n2 = |v: [i64; 2]| v[0] * v[0] + v[1] * v[1];
    let dot = |u: [i64; 2], v: [i64; 2]| u[0] * v[0] + u[1] * v[1];
    if n2(a) > n2(b) {
        std::mem::swap(&mut a, &mut b);
    }
    loop {
        let m = (dot(a, b) as f64 / n2(a) as f64).round() as i64;
        b = [b[0] - m * a[0], b[1] - m * a[1]];
        if n2(b) >= n2(a) {
            break;
        }
        std::mem::swap(&mut a, &mut b);
    }
    // counterclockwise order
    if a[0] * b[1] - a[1] * b[0] < 0 {
        b = [-b[0], -b[1]];
    }
    [a, b]
}

/// Skeleton of a closed flat surface without singularities: one node, the
/// two closed geodesics along a lattice basis (`periods`, in layout
/// coordinates) and a single periodic patch.
pub fn periodic_skeleton(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    field: &CrossField,
    periods: [[f64; 2]; 2],
    opts: TraceOptions,
) -> Result<Skeleton> {
    let chi = mesh.num_vertices() as i64 - mesh.num_edges() as i64 + mesh.num_faces() as i64;
    let start = FacePoint {
        face: 0,
        bary: [1.0 / 3.0; 3],
    };
    let tracer = Tracer::new(mesh, metric, vec![false; mesh.num_vertices()], opts);
    let node = SkeletonNode {
        id: 0,
        kind: NodeKind::Crossing,
        anchor: start,
    };
    let mut curves = Vec::new();
    let mut arcs = Vec::new();
    for (k, v) in periods.iter().enumerate() {
        let len = v[0].hypot(v[1]);
        let a = field.frame[0] + v[1].atan2(v[0]);
        let path = tracer.trace_from_point(start, a, 1.5 * len, true)?;
        if path.terminal != Terminal::ClosedLoop || (path.length - len).abs() > 1e-6 * len {
            return Err(Error::QuantizationInfeasible(format!(
                "period {k} does not close"
            )));
        }
        arcs.push(SkeletonArc {
            id: k,
            from: 0,
            to: 0,
            length: path.length,
            source: ArcSource::Separatrix {
                curve: k,
                s0: 0.0,
                s1: path.length,
            },
            polyline: curve_polyline(&path, 0.0, path.length),
        });
        curves.push(path);
    }
    let side = |arc, forward| vec![SideArc { arc, forward }];
    let patch = Patch {
        id: 0,
        corners: [0; 4],
        sides: [side(0, true), side(1, true), side(0, false), side(1, false)],
        width: arcs[0].length,
        height: arcs[1].length,
        angle: (periods[1][1].atan2(periods[1][0]) - periods[0][1].atan2(periods[0][0]))
            .rem_euclid(TAU),
    };
    Ok(Skeleton {
        nodes: vec![node],
        arcs,
        patches: vec![patch],
        periodic: true,
        chi,
        curves,
        boundaries: Vec::new(),
    })
}

fn cumulative(mesh: &TriangleMesh, metric: &ConeMetric, seq: &[usize]) -> Vec<f64> {
    let mut cum = vec![0.0];
    for &h in seq {
        cum.push(cum.last().unwrap() + metric.length(mesh.edge(h)));
    }
    cum
}

fn curve_polyline(path: &GeodesicPath, s0: f64, s1: f64) -> Vec<FacePoint> {
    let k0 = path.crossing_at(s0, true);
    let k1 = path.crossing_at(s1, false);
    let mut pts = vec![path.point_at_in(k0, s0)];
    for k in k0..k1 {
        pts.push(FacePoint {
            face: path.crossings[k].face,
            bary: path.crossings[k].to,
        });
    }
    pts.push(path.point_at_in(k1, s1));
    pts
}

/// Points of a boundary loop between two parameters; `p1` may exceed the
/// loop size to wrap around.
fn boundary_polyline(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    seq: &[usize],
    p0: f64,
    p1: f64,
) -> Vec<FacePoint> {
    let n = seq.len();
    let at = |p: f64| {
        let i = p.floor();
        halfedge_point(mesh, metric, seq[i as usize % n], p - i).0
    };
    let mut pts = vec![at(p0)];
    let mut k = p0.floor() + 1.0;
    while k < p1 {
        pts.push(at(k));
        k += 1.0;
    }
    pts.push(at(p1));
    pts
}
