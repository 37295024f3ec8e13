use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::cut::third_point;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metric::{face_angles_from_lengths, ConeMetric};

/// A hit closer than this fraction of the local edge length lands on the
/// vertex.
pub const VERTEX_EPS: f64 = 1e-9;

const MAX_STEPS: usize = 50_000_000;

/// Point of a face in barycentric coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacePoint {
    pub face: usize,
    pub bary: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Terminal {
    Singularity {
        vertex: usize,
    },
    /// Point on the face-carrying halfedge, `t` measured from its origin.
    Boundary {
        halfedge: usize,
        t: f64,
    },
    BoundaryVertex {
        vertex: usize,
    },
    ClosedLoop,
    LengthBudget,
}

/// Straight run of a geodesic through one face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Crossing {
    pub face: usize,
    pub from: [f64; 3],
    pub to: [f64; 3],
    pub s0: f64,
    pub s1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeodesicPath {
    /// Start point and direction in the canonical frame of its face.
    pub start: FacePoint,
    pub start_angle: f64,
    pub crossings: Vec<Crossing>,
    /// Flat vertices passed straight through, with their arclength.
    pub vertex_passes: Vec<(usize, f64)>,
    pub length: f64,
    pub terminal: Terminal,
}

impl GeodesicPath {
    /// Index of the crossing containing arclength `s`; ties go to the later
    /// crossing when `after` is set.
    pub fn crossing_at(&self, s: f64, after: bool) -> usize {
        let n = self.crossings.len();
        let idx = if after {
            self.crossings.partition_point(|c| c.s1 <= s)
        } else {
            self.crossings.partition_point(|c| c.s1 < s)
        };
        idx.min(n - 1)
    }

    pub fn point_at(&self, s: f64) -> FacePoint {
        let c = &self.crossings[self.crossing_at(s, false)];
        let t = if c.s1 > c.s0 {
            ((s - c.s0) / (c.s1 - c.s0)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        FacePoint {
            face: c.face,
            bary: lerp3(c.from, c.to, t),
        }
    }
}

pub(crate) fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + t * (b[i] - a[i]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceOptions {
    pub stop_radius: f64,
    pub max_length: f64,
}

/// Face placed in its canonical frame: corner 0 at the origin, side 0
/// along +x.
pub fn face_frame(mesh: &TriangleMesh, metric: &ConeMetric, f: usize) -> [[f64; 2]; 3] {
    let [l0, l1, l2] = metric.face_lengths(mesh, f);
    [
        [0.0, 0.0],
        [l0, 0.0],
        third_point([0.0, 0.0], [l0, 0.0], l0, l1, l2),
    ]
}

pub(crate) fn to_bary(p: [f64; 2], c: &[[f64; 2]; 3]) -> [f64; 3] {
    let area = cross(sub(c[1], c[0]), sub(c[2], c[0]));
    let b1 = cross(sub(p, c[0]), sub(c[2], c[0])) / area;
    let b2 = cross(sub(c[1], c[0]), sub(p, c[0])) / area;
    [1.0 - b1 - b2, b1, b2]
}

pub(crate) fn from_bary(b: [f64; 3], c: &[[f64; 2]; 3]) -> [f64; 2] {
    [
        b[0] * c[0][0] + b[1] * c[1][0] + b[2] * c[2][0],
        b[0] * c[0][1] + b[1] * c[1][1] + b[2] * c[2][1],
    ]
}

#[inline]
pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub(crate) fn angle_of(a: [f64; 2]) -> f64 {
    a[1].atan2(a[0])
}

/// Counterclockwise angle from `a` to `b` in `[0, 2pi)`.
pub(crate) fn ccw_angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    (angle_of(b) - angle_of(a)).rem_euclid(TAU)
}

#[inline]
pub(crate) fn dir(a: f64) -> [f64; 2] {
    let (s, c) = a.sin_cos();
    [c, s]
}

/// Angular bookkeeping around one vertex: corners in counterclockwise
/// order with their cumulative start angles.
#[derive(Clone, Debug)]
pub(crate) struct Fan {
    /// Outgoing face-carrying halfedges, counterclockwise.
    pub corners: Vec<usize>,
    pub start: Vec<f64>,
    pub total: f64,
}

impl Fan {
    pub fn new(mesh: &TriangleMesh, metric: &ConeMetric, v: usize) -> Result<Fan> {
        let corners = mesh.corners_around(v);
        let mut start = Vec::with_capacity(corners.len());
        let mut acc = 0.0;
        for &h in &corners {
            start.push(acc);
            let f = mesh.face(h).unwrap();
            let a = face_angles_from_lengths(metric.face_lengths(mesh, f))?;
            acc += a[mesh.local_index(h)];
        }
        Ok(Fan {
            corners,
            start,
            total: acc,
        })
    }

    /// Corner slot containing angle `tau` (taken modulo the total for
    /// interior vertices).
    pub fn locate(&self, tau: f64, wrap: bool) -> (usize, f64) {
        let t = if wrap {
            tau.rem_euclid(self.total)
        } else {
            tau.clamp(0.0, self.total)
        };
        let j = self.start.partition_point(|&a| a <= t).saturating_sub(1);
        (j, t - self.start[j])
    }

    /// Slot of the corner `(f, c)`.
    pub fn slot(&self, mesh: &TriangleMesh, f: usize, c: usize) -> Option<usize> {
        let h = mesh.face_halfedges(f)[c];
        self.corners.iter().position(|&x| x == h)
    }
}

struct State {
    face: usize,
    corners: [[f64; 2]; 3],
    p: [f64; 2],
    d: [f64; 2],
    /// Side the point lies on, or the corner it sits at (as 3 + corner).
    skip: Option<usize>,
}

/// Straight-line tracer on a flat cone metric by triangle unfolding.
pub struct Tracer<'a> {
    pub mesh: &'a TriangleMesh,
    pub metric: &'a ConeMetric,
    pub singular: Vec<bool>,
    pub opts: TraceOptions,
}

impl<'a> Tracer<'a> {
    pub fn new(
        mesh: &'a TriangleMesh,
        metric: &'a ConeMetric,
        singular: Vec<bool>,
        opts: TraceOptions,
    ) -> Self {
        Tracer {
            mesh,
            metric,
            singular,
            opts,
        }
    }

    fn stops_at(&self, v: usize) -> bool {
        self.singular[v]
    }

    /// State leaving vertex `v` at angle `tau` of its fan.
    fn leave_vertex(&self, v: usize, fan: &Fan, tau: f64) -> State {
        let wrap = !self.mesh.is_boundary_vertex(v);
        let (j, beta) = fan.locate(tau, wrap);
        let h = fan.corners[j];
        let f = self.mesh.face(h).unwrap();
        let c = self.mesh.local_index(h);
        let corners = face_frame(self.mesh, self.metric, f);
        let u1 = sub(corners[(c + 1) % 3], corners[c]);
        State {
            face: f,
            corners,
            p: corners[c],
            d: dir(angle_of(u1) + beta),
            skip: Some(3 + c),
        }
    }

    /// Trace leaving vertex `v` at fan angle `tau`.
    pub fn trace_from_vertex(&self, v: usize, tau: f64, max_length: f64) -> Result<GeodesicPath> {
        let fan = Fan::new(self.mesh, self.metric, v)?;
        let st = self.leave_vertex(v, &fan, tau);
        self.run(st, max_length, None)
    }

    /// Trace from a face point along `angle` (face frame). Points on an
    /// edge whose direction leaves the face move to the neighbour.
    pub fn trace_from_point(
        &self,
        start: FacePoint,
        angle: f64,
        max_length: f64,
        detect_loop: bool,
    ) -> Result<GeodesicPath> {
        let corners = face_frame(self.mesh, self.metric, start.face);
        let p = from_bary(start.bary, &corners);
        let scale = edge_scale(&corners);
        for c in 0..3 {
            if norm(sub(p, corners[c])) < VERTEX_EPS * scale {
                let v = self.mesh.face_vertices(start.face)[c];
                let fan = Fan::new(self.mesh, self.metric, v)?;
                let slot = fan.slot(self.mesh, start.face, c).unwrap();
                let u1 = sub(corners[(c + 1) % 3], corners[c]);
                let mut diff = (angle - angle_of(u1)).rem_euclid(TAU);
                if diff > PI {
                    diff -= TAU;
                }
                let mut tau = fan.start[slot] + diff;
                if self.mesh.is_boundary_vertex(v) {
                    if tau < -1e-9 || tau > fan.total + 1e-9 {
                        return Err(Error::StartOnVertex(v));
                    }
                    tau = tau.clamp(0.0, fan.total);
                }
                let st = self.leave_vertex(v, &fan, tau);
                return self.run(st, max_length, None);
            }
        }
        let d = dir(angle);
        let mut st = State {
            face: start.face,
            corners,
            p,
            d,
            skip: None,
        };
        for k in 0..3 {
            let a = corners[k];
            let b = corners[(k + 1) % 3];
            let e = sub(b, a);
            let off = cross(e, sub(p, a)) / norm(e);
            if off.abs() < VERTEX_EPS * scale {
                if cross(e, d) >= 0.0 {
                    st.skip = Some(k);
                } else {
                    let h = self.mesh.face_halfedges(start.face)[k];
                    let Some(g) = self.mesh.face(h ^ 1) else {
                        return Ok(GeodesicPath {
                            start,
                            start_angle: angle,
                            crossings: vec![],
                            vertex_passes: vec![],
                            length: 0.0,
                            terminal: Terminal::Boundary {
                                halfedge: h,
                                t: (dot(sub(p, a), e) / dot(e, e)).clamp(0.0, 1.0),
                            },
                        });
                    };
                    let (gc, kk) = self.unfold(g, h ^ 1, a, b);
                    st = State {
                        face: g,
                        corners: gc,
                        p,
                        d,
                        skip: Some(kk),
                    };
                }
                break;
            }
        }
        let lp = detect_loop.then_some((start.face, p, d));
        self.run(st, max_length, lp)
    }

    /// Places face `g` so that its halfedge `t` runs from `a` to `b`.
    fn unfold(&self, g: usize, t: usize, a: [f64; 2], b: [f64; 2]) -> ([[f64; 2]; 3], usize) {
        let gh = self.mesh.face_halfedges(g);
        let k = gh.iter().position(|&x| x == t).unwrap();
        let ls = self.metric.face_lengths(self.mesh, g);
        let c = third_point(a, b, ls[k], ls[(k + 1) % 3], ls[(k + 2) % 3]);
        let mut out = [[0.0; 2]; 3];
        out[k] = a;
        out[(k + 1) % 3] = b;
        out[(k + 2) % 3] = c;
        (out, k)
    }

    fn run(
        &self,
        st: State,
        max_length: f64,
        detect_loop: Option<(usize, [f64; 2], [f64; 2])>,
    ) -> Result<GeodesicPath> {
        let canon = face_frame(self.mesh, self.metric, st.face);
        let rot = angle_of(sub(canon[1], canon[0])) - angle_of(sub(st.corners[1], st.corners[0]));
        let start = FacePoint {
            face: st.face,
            bary: to_bary(st.p, &st.corners),
        };
        let start_angle = angle_of(st.d) + rot;
        let mut path = self.walk(st, max_length, detect_loop)?;
        path.start = start;
        path.start_angle = start_angle;
        Ok(path)
    }

    fn walk(
        &self,
        mut st: State,
        max_length: f64,
        detect_loop: Option<(usize, [f64; 2], [f64; 2])>,
    ) -> Result<GeodesicPath> {
        let mut crossings = Vec::new();
        let mut vertex_passes = Vec::new();
        let mut s = 0.0;
        let mut steps = 0usize;
        let mut left_start = false;
        loop {
            steps += 1;
            if steps > MAX_STEPS {
                return Ok(finish(crossings, vertex_passes, s, Terminal::LengthBudget));
            }
            let c = st.corners;
            let scale = edge_scale(&c);
            // exit side
            let mut best: Option<(f64, usize, f64)> = None;
            for k in 0..3 {
                match st.skip {
                    Some(x) if x == k => continue,
                    Some(x) if x >= 3 && (k == x - 3 || (k + 1) % 3 == x - 3) => continue,
                    _ => {}
                }
                let a = c[k];
                let e = sub(c[(k + 1) % 3], a);
                let den = cross(st.d, e);
                if den.abs() < 1e-14 * norm(e) {
                    continue;
                }
                let ap = sub(a, st.p);
                let sk = cross(ap, e) / den;
                let tk = cross(ap, st.d) / den;
                if sk < -VERTEX_EPS * scale || !(-1e-7..=1.0 + 1e-7).contains(&tk) {
                    continue;
                }
                if best.is_none_or(|b| sk > b.0) {
                    // the farthest candidate, so a side the point touches never wins
                    best = Some((sk.max(0.0), k, tk.clamp(0.0, 1.0)));
                }
            }
            let Some((len, k, t)) = best else {
                return Err(Error::DegenerateMetric(format!(
                    "trace lost in face {}",
                    st.face
                )));
            };
            let x = [st.p[0] + len * st.d[0], st.p[1] + len * st.d[1]];
            let fv = self.mesh.face_vertices(st.face);
            // stop radius around singular corners passed on the way
            let mut stop: Option<(usize, f64)> = None;
            for q in 0..3 {
                if st.skip == Some(3 + q) || !self.stops_at(fv[q]) {
                    continue;
                }
                let w = sub(c[q], st.p);
                let tau = dot(w, st.d).clamp(0.0, len);
                let closest = [st.p[0] + tau * st.d[0], st.p[1] + tau * st.d[1]];
                if norm(sub(closest, c[q])) <= self.opts.stop_radius
                    && stop.is_none_or(|(_, b)| tau < b)
                {
                    stop = Some((q, tau));
                }
            }
            if let Some((q, tau)) = stop {
                // ends at the closest approach so the direction stays exact
                let to = to_bary([st.p[0] + tau * st.d[0], st.p[1] + tau * st.d[1]], &c);
                let end = s + tau;
                if end > max_length {
                    return Ok(self.budget_stop(crossings, vertex_passes, &st, s, max_length));
                }
                crossings.push(Crossing {
                    face: st.face,
                    from: to_bary(st.p, &c),
                    to,
                    s0: s,
                    s1: end,
                });
                return Ok(finish(
                    crossings,
                    vertex_passes,
                    end,
                    Terminal::Singularity { vertex: fv[q] },
                ));
            }
            if s + len > max_length {
                return Ok(self.budget_stop(crossings, vertex_passes, &st, s, max_length));
            }
            if let Some((f0, p0, d0)) = detect_loop {
                if st.face == f0 && left_start {
                    let canon = face_frame(self.mesh, self.metric, f0);
                    let pp = from_bary(to_bary(st.p, &c), &canon);
                    let rot = angle_of(sub(canon[1], canon[0])) - angle_of(sub(c[1], c[0]));
                    let dd = dir(angle_of(st.d) + rot);
                    let w = sub(p0, pp);
                    let along = dot(w, dd);
                    let off = cross(dd, w).abs();
                    let turn = cross(d0, dd).atan2(dot(d0, dd)).abs();
                    let near = off <= self.opts.stop_radius.max(1e-9 * scale);
                    if turn < 1e-6 && near && (0.0..=len).contains(&along) {
                        crossings.push(Crossing {
                            face: st.face,
                            from: to_bary(st.p, &c),
                            to: to_bary([st.p[0] + along * st.d[0], st.p[1] + along * st.d[1]], &c),
                            s0: s,
                            s1: s + along,
                        });
                        return Ok(finish(
                            crossings,
                            vertex_passes,
                            s + along,
                            Terminal::ClosedLoop,
                        ));
                    }
                }
            }
            left_start = true;
            let e_len = norm(sub(c[(k + 1) % 3], c[k]));
            let near = if t * e_len < VERTEX_EPS * e_len.max(scale) {
                Some(k)
            } else if (1.0 - t) * e_len < VERTEX_EPS * e_len.max(scale) {
                Some((k + 1) % 3)
            } else {
                None
            };
            let mut to = to_bary(x, &c);
            if let Some(q) = near {
                to = [0.0; 3];
                to[q] = 1.0;
            }
            crossings.push(Crossing {
                face: st.face,
                from: to_bary(st.p, &c),
                to,
                s0: s,
                s1: s + len,
            });
            s += len;
            if let Some(q) = near {
                let v = fv[q];
                if self.stops_at(v) {
                    return Ok(finish(
                        crossings,
                        vertex_passes,
                        s,
                        Terminal::Singularity { vertex: v },
                    ));
                }
                if self.mesh.is_boundary_vertex(v) {
                    return Ok(finish(
                        crossings,
                        vertex_passes,
                        s,
                        Terminal::BoundaryVertex { vertex: v },
                    ));
                }
                // straight continuation through a regular vertex
                let fan = Fan::new(self.mesh, self.metric, v)?;
                let slot = fan.slot(self.mesh, st.face, q).ok_or_else(|| {
                    Error::DegenerateMetric(format!("corner of vertex {v} not found"))
                })?;
                let u1 = sub(c[(q + 1) % 3], c[q]);
                let back = [-st.d[0], -st.d[1]];
                let tau_in = fan.start[slot] + ccw_angle(u1, back).min(TAU - 1e-15);
                vertex_passes.push((v, s));
                st = self.leave_vertex(v, &fan, tau_in + 0.5 * fan.total);
                continue;
            }
            let h = self.mesh.face_halfedges(st.face)[k];
            let Some(g) = self.mesh.face(h ^ 1) else {
                return Ok(finish(
                    crossings,
                    vertex_passes,
                    s,
                    Terminal::Boundary { halfedge: h, t },
                ));
            };
            let (gc, kk) = self.unfold(g, h ^ 1, c[(k + 1) % 3], c[k]);
            st = State {
                face: g,
                corners: gc,
                p: x,
                d: st.d,
                skip: Some(kk),
            };
        }
    }

    fn budget_stop(
        &self,
        mut crossings: Vec<Crossing>,
        passes: Vec<(usize, f64)>,
        st: &State,
        s: f64,
        max_length: f64,
    ) -> GeodesicPath {
        let rest = (max_length - s).max(0.0);
        let x = [st.p[0] + rest * st.d[0], st.p[1] + rest * st.d[1]];
        crossings.push(Crossing {
            face: st.face,
            from: to_bary(st.p, &st.corners),
            to: to_bary(x, &st.corners),
            s0: s,
            s1: max_length,
        });
        finish(crossings, passes, max_length, Terminal::LengthBudget)
    }
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn edge_scale(c: &[[f64; 2]; 3]) -> f64 {
    norm(sub(c[1], c[0]))
        .max(norm(sub(c[2], c[1])))
        .max(norm(sub(c[0], c[2])))
}

fn finish(
    crossings: Vec<Crossing>,
    vertex_passes: Vec<(usize, f64)>,
    length: f64,
    terminal: Terminal,
) -> GeodesicPath {
    GeodesicPath {
        start: FacePoint {
            face: 0,
            bary: [0.0; 3],
        },
        start_angle: 0.0,
        crossings,
        vertex_passes,
        length,
        terminal,
    }
}

/// Straight-line geodesic from a face point. `angle` is measured in the
/// face frame (corner 0 at the origin, side 0 along +x). Starting within
/// the stop radius of a vertex is rejected.
pub fn trace_geodesic(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
    singular: &[bool],
    start: FacePoint,
    angle: f64,
    opts: TraceOptions,
) -> Result<GeodesicPath> {
    if start.face >= mesh.num_faces() {
        return Err(Error::NotAFacePath(0));
    }
    let corners = face_frame(mesh, metric, start.face);
    let p = from_bary(start.bary, &corners);
    for (q, &v) in mesh.face_vertices(start.face).iter().enumerate() {
        if norm(sub(p, corners[q])) <= opts.stop_radius.max(VERTEX_EPS * edge_scale(&corners)) {
            return Err(Error::StartOnVertex(v));
        }
    }
    let tracer = Tracer::new(mesh, metric, singular.to_vec(), opts);
    tracer.trace_from_point(start, angle, opts.max_length, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{flat_torus, rectangle_grid};

    fn opts() -> TraceOptions {
        TraceOptions {
            stop_radius: 1e-6,
            max_length: 100.0,
        }
    }

    /// Face containing planar point `p` and its barycentric coordinates.
    fn locate(mesh: &TriangleMesh, p: [f64; 2]) -> FacePoint {
        let pos = mesh.positions().unwrap();
        for f in 0..mesh.num_faces() {
            let c = mesh.face_vertices(f).map(|v| [pos[v][0], pos[v][1]]);
            let b = to_bary(p, &c);
            if b.iter().all(|&x| x > 1e-12) {
                return FacePoint { face: f, bary: b };
            }
        }
        panic!("no face")
    }

    fn world_angle(mesh: &TriangleMesh, f: usize, a: f64) -> f64 {
        let pos = mesh.positions().unwrap();
        let [v0, v1, _] = mesh.face_vertices(f);
        a - (pos[v1][1] - pos[v0][1]).atan2(pos[v1][0] - pos[v0][0])
    }

    #[test]
    fn straight_line_hits_the_right_boundary_point() {
        let m = rectangle_grid(7, 5, 1.0, 1.0);
        let g = ConeMetric::from_positions(&m).unwrap();
        let start = locate(&m, [0.13, 0.31]);
        let slope: f64 = 0.3;
        let a = world_angle(&m, start.face, slope.atan());
        let path =
            trace_geodesic(&m, &g, &vec![false; m.num_vertices()], start, a, opts()).unwrap();
        let Terminal::Boundary { halfedge, t } = path.terminal else {
            panic!("{:?}", path.terminal)
        };
        let pos = m.positions().unwrap();
        let (p, q) = (pos[m.origin(halfedge)], pos[m.dest(halfedge)]);
        let hit = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
        assert!((hit[0] - 1.0).abs() < 1e-12);
        assert!((hit[1] - (0.31 + 0.87 * slope)).abs() < 1e-12);
        assert!((path.length - 0.87 * (1.0 + slope * slope).sqrt()).abs() < 1e-12);
        for w in path.crossings.windows(2) {
            assert!((w[0].s1 - w[1].s0).abs() < 1e-15);
        }
    }

    #[test]
    fn rational_slope_closes_on_the_torus() {
        let (m, g) = flat_torus(6, 4, 1.0, 1.0);
        let start = FacePoint {
            face: 4,
            bary: [0.3, 0.3, 0.4],
        };
        // even faces have side 0 along the x period
        let path = trace_geodesic(
            &m,
            &g,
            &vec![false; m.num_vertices()],
            start,
            2f64.atan(),
            opts(),
        )
        .unwrap();
        assert_eq!(path.terminal, Terminal::ClosedLoop);
        assert!((path.length - 5f64.sqrt()).abs() < 1e-9, "{}", path.length);
    }

    #[test]
    fn start_near_vertex_is_rejected() {
        let m = rectangle_grid(3, 3, 1.0, 1.0);
        let g = ConeMetric::from_positions(&m).unwrap();
        let start = FacePoint {
            face: 0,
            bary: [1.0 - 2e-9, 1e-9, 1e-9],
        };
        let r = trace_geodesic(&m, &g, &vec![false; m.num_vertices()], start, 0.3, opts());
        assert!(matches!(r, Err(Error::StartOnVertex(_))));
    }

    #[test]
    fn singular_vertex_stops_the_trace() {
        let m = rectangle_grid(4, 4, 1.0, 1.0);
        let g = ConeMetric::from_positions(&m).unwrap();
        let target = crate::models::nearest_vertex(&m, [0.5, 0.5, 0.0]);
        let mut singular = vec![false; m.num_vertices()];
        singular[target] = true;
        let start = locate(&m, [0.1, 0.1 + 1e-3]);
        let dirn = (0.4 - 1e-3f64).atan2(0.4);
        let a = world_angle(&m, start.face, dirn);
        let o = TraceOptions {
            stop_radius: 1e-2,
            max_length: 10.0,
        };
        let path = trace_geodesic(&m, &g, &singular, start, a, o).unwrap();
        assert_eq!(path.terminal, Terminal::Singularity { vertex: target });
    }

    #[test]
    fn budget_limits_length() {
        let (m, g) = flat_torus(5, 5, 1.0, 1.0);
        let irrational = 2f64.sqrt().atan();
        let o = TraceOptions {
            stop_radius: 1e-6,
            max_length: 7.5,
        };
        let start = FacePoint {
            face: 0,
            bary: [0.5, 0.25, 0.25],
        };
        let path =
            trace_geodesic(&m, &g, &vec![false; m.num_vertices()], start, irrational, o).unwrap();
        assert_eq!(path.terminal, Terminal::LengthBudget);
        assert!((path.length - 7.5).abs() < 1e-12);
        let p = path.point_at(3.0);
        assert!(p.bary.iter().all(|&b| b > -1e-9));
    }
}
