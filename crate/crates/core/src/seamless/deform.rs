use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::cut::{
    bbox_diag, dist, wrap_angle, CutGraph, SegmentKind, SegmentPairing, SlicedImmersion, SlicedMesh,
};
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, SparseBuilder};
use crate::metric::face_angles_from_lengths;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl Axis {
    fn unit(self) -> [f64; 2] {
        match self {
            Axis::Horizontal => [1.0, 0.0],
            Axis::Vertical => [0.0, 1.0],
        }
    }

    /// Coordinate that is constant along a line of this axis.
    fn level(self, p: [f64; 2]) -> f64 {
        match self {
            Axis::Horizontal => p[1],
            Axis::Vertical => p[0],
        }
    }
}

/// Boundary chain pinned to an axis-parallel line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundaryAxis {
    pub segment: usize,
    pub axis: Axis,
    pub value: f64,
}

/// Cut pairing after snapping: `minus = R^k plus + translation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SnappedPairing {
    pub segment: usize,
    pub quarter_turns: u8,
    pub translation: [f64; 2],
    pub original_rotation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SnapOptions {
    pub tol_snap: f64,
}

impl Default for SnapOptions {
    fn default() -> Self {
        SnapOptions { tol_snap: 0.35 }
    }
}

/// Seamless layout of the sliced disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformedImmersion {
    pub immersion: SlicedImmersion,
    pub pairings: Vec<SnappedPairing>,
    pub axes: Vec<BoundaryAxis>,
    /// Rotation applied to the input layout before snapping.
    pub global_rotation: f64,
    pub foldovers: usize,
    /// Set when all node copies sit on multiples of this length.
    pub grid_unit: Option<f64>,
    /// Largest vertex displacement from the (rotated) input layout.
    pub max_displacement: f64,
}

impl DeformedImmersion {
    pub fn uv(&self) -> &[[f64; 2]] {
        &self.immersion.uv
    }

    /// Largest violation of the pairing and axis constraints.
    pub fn constraint_residual(&self) -> f64 {
        let s = &self.immersion.sliced;
        let uv = &self.immersion.uv;
        let mut worst: f64 = 0.0;
        for p in &self.pairings {
            let img = &s.segment_images[p.segment];
            let minus = img.minus.as_ref().expect("cut image");
            for (&a, &b) in img.plus.iter().zip(minus) {
                let q = rotate_quarter(p.quarter_turns as i64, uv[a]);
                let q = [q[0] + p.translation[0], q[1] + p.translation[1]];
                worst = worst.max(dist(q, uv[b]));
            }
        }
        for ax in &self.axes {
            for &v in &s.segment_images[ax.segment].plus {
                worst = worst.max((ax.axis.level(uv[v]) - ax.value).abs());
            }
        }
        worst
    }

    pub fn dirichlet_energy(&self) -> f64 {
        dirichlet_energy(&self.immersion.sliced, &self.immersion.uv)
    }

    pub fn report_json(&self) -> serde_json::Value {
        serde_json::json!({
            "pairings": self.pairings,
            "axes": self.axes,
            "globalRotation": self.global_rotation,
            "foldovers": self.foldovers,
            "gridUnit": self.grid_unit,
            "maxDisplacement": self.max_displacement,
            "constraintResidual": self.constraint_residual(),
            "dirichletEnergy": self.dirichlet_energy(),
        })
    }
}

pub(crate) fn rotate_quarter(k: i64, p: [f64; 2]) -> [f64; 2] {
    match k.rem_euclid(4) {
        0 => p,
        1 => [-p[1], p[0]],
        2 => [-p[0], -p[1]],
        _ => [p[1], -p[0]],
    }
}

fn rotate(a: f64, p: [f64; 2]) -> [f64; 2] {
    let (s, c) = a.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Per-edge cotangent weights of the sliced disk.
pub(crate) fn cot_weights(s: &SlicedMesh) -> Result<Vec<f64>> {
    let m = &s.mesh;
    let mut w = vec![0.0; m.num_edges()];
    for f in 0..m.num_faces() {
        let hs = m.face_halfedges(f);
        let ang = face_angles_from_lengths(hs.map(|h| s.lengths[h / 2]))?;
        for i in 0..3 {
            w[hs[i] / 2] += 0.5 / ang[(i + 2) % 3].tan();
        }
    }
    Ok(w)
}

/// Cotangent Dirichlet energy of a layout.
pub fn dirichlet_energy(s: &SlicedMesh, uv: &[[f64; 2]]) -> f64 {
    let Ok(w) = cot_weights(s) else {
        return f64::NAN;
    };
    (0..s.mesh.num_edges())
        .map(|e| {
            let [a, b] = s.mesh.edge_vertices(e);
            let d = dist(uv[a], uv[b]);
            0.5 * w[e] * d * d
        })
        .sum()
}

/// Discrete harmonic extension of the boundary values in `fixed`.
pub(crate) fn harmonic_fill(s: &SlicedMesh, fixed: &[Option<[f64; 2]>]) -> Result<Vec<[f64; 2]>> {
    let m = &s.mesh;
    let w = cot_weights(s)?;
    let mut index = vec![usize::MAX; m.num_vertices()];
    let mut free = Vec::new();
    for v in 0..m.num_vertices() {
        if fixed[v].is_none() {
            index[v] = free.len();
            free.push(v);
        }
    }
    let mut out: Vec<[f64; 2]> = fixed.iter().map(|p| p.unwrap_or([0.0; 2])).collect();
    if free.is_empty() {
        return Ok(out);
    }
    let n = free.len();
    let mut a = SparseBuilder::new(n, n);
    let mut rhs = vec![vec![0.0; n], vec![0.0; n]];
    for e in 0..m.num_edges() {
        let [i, j] = m.edge_vertices(e);
        let we = w[e];
        for (p, q) in [(i, j), (j, i)] {
            if index[p] == usize::MAX {
                continue;
            }
            a.add(index[p], index[p], we);
            if index[q] == usize::MAX {
                let x = fixed[q].unwrap();
                rhs[0][index[p]] += we * x[0];
                rhs[1][index[p]] += we * x[1];
            } else {
                a.add(index[p], index[q], -we);
            }
        }
    }
    let sol = solve_spd(&a, &rhs)?;
    for (k, &v) in free.iter().enumerate() {
        out[v] = [sol[0][k], sol[1][k]];
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Plus,
    Minus,
}

/// Maximal run of the disk boundary covering one chain image.
#[derive(Clone, Copy, Debug)]
struct Piece {
    image: usize,
    side: Side,
    forward: bool,
    start: usize,
    end: usize,
}

fn node_copies(s: &SlicedMesh, cut: &CutGraph) -> Vec<bool> {
    let mut is_node = vec![false; s.copies.len()];
    for &v in &cut.nodes {
        is_node[v] = true;
    }
    s.vertex_origin.iter().map(|&v| is_node[v]).collect()
}

fn boundary_pieces(s: &SlicedMesh, cut: &CutGraph) -> Result<Vec<Piece>> {
    let m = &s.mesh;
    let mut lookup: HashMap<usize, (usize, Side, bool)> = HashMap::new();
    for (i, img) in s.segment_images.iter().enumerate() {
        for &h in &cut.segments[img.segment].halfedges {
            lookup.insert(s.half_map[h] ^ 1, (i, Side::Plus, false));
            if img.kind == SegmentKind::Cut {
                lookup.insert(s.half_map[h ^ 1] ^ 1, (i, Side::Minus, true));
            }
        }
    }
    let is_node = node_copies(s, cut);
    let loops = m.boundary_loops();
    let lp = loops
        .first()
        .ok_or_else(|| Error::InvalidCut("sliced mesh has no boundary".into()))?;
    let n = lp.len();
    let i0 = (0..n)
        .find(|&i| is_node[m.origin(lp[i])])
        .ok_or_else(|| Error::InvalidCut("no node on the disk boundary".into()))?;
    let mut pieces: Vec<Piece> = Vec::new();
    for step in 0..n {
        let bh = lp[(i0 + step) % n];
        let &(image, side, forward) = lookup.get(&bh).ok_or_else(|| {
            Error::InvalidCut(format!("boundary halfedge {bh} is not on a chain"))
        })?;
        let o = m.origin(bh);
        if step == 0 || is_node[o] {
            pieces.push(Piece {
                image,
                side,
                forward,
                start: o,
                end: m.dest(bh),
            });
        } else {
            let p = pieces.last_mut().unwrap();
            if (p.image, p.side, p.forward) != (image, side, forward) {
                return Err(Error::InvalidCut(
                    "boundary chain changes between nodes".into(),
                ));
            }
            p.end = m.dest(bh);
        }
    }
    Ok(pieces)
}

/// Column layout of the chord unknowns: two per cut image, one per
/// boundary image.
struct Unknowns {
    col: Vec<usize>,
    len: usize,
}

impl Unknowns {
    fn new(s: &SlicedMesh) -> Self {
        let mut col = Vec::new();
        let mut len = 0;
        for img in &s.segment_images {
            col.push(len);
            len += if img.kind == SegmentKind::Cut { 2 } else { 1 };
        }
        Unknowns { col, len }
    }
}

/// Constraint data shared by the snapping and grid passes.
struct Plan<'a> {
    s: &'a SlicedMesh,
    pieces: Vec<Piece>,
    unknowns: Unknowns,
    /// Quarter turns per image (cut images only).
    turns: Vec<i64>,
    /// Axis per image (boundary images only).
    axes: Vec<Option<Axis>>,
}

impl Plan<'_> {
    /// Closure matrix columns: the boundary walk sums to `sum_j a_j x_j`.
    fn columns(&self) -> Vec<[f64; 2]> {
        let mut a = vec![[0.0; 2]; self.unknowns.len];
        for p in &self.pieces {
            let sign = if p.forward { 1.0 } else { -1.0 };
            let c = self.unknowns.col[p.image];
            match self.axes[p.image] {
                Some(ax) => {
                    let u = ax.unit();
                    a[c][0] += sign * u[0];
                    a[c][1] += sign * u[1];
                }
                None => {
                    let k = if p.side == Side::Minus {
                        self.turns[p.image]
                    } else {
                        0
                    };
                    for (j, e) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
                        let r = rotate_quarter(k, e);
                        a[c + j][0] += sign * r[0];
                        a[c + j][1] += sign * r[1];
                    }
                }
            }
        }
        a
    }

    /// Chord unknowns read off a layout.
    fn chords(&self, uv: &[[f64; 2]]) -> Vec<f64> {
        let mut x = vec![0.0; self.unknowns.len];
        for (i, img) in self.s.segment_images.iter().enumerate() {
            let d = sub(uv[*img.plus.last().unwrap()], uv[img.plus[0]]);
            let c = self.unknowns.col[i];
            match self.axes[i] {
                Some(ax) => x[c] = dot(d, ax.unit()),
                None => {
                    x[c] = d[0];
                    x[c + 1] = d[1];
                }
            }
        }
        x
    }

    fn chain_chord(&self, image: usize, side: Side, x: &[f64]) -> [f64; 2] {
        let c = self.unknowns.col[image];
        match self.axes[image] {
            Some(ax) => {
                let u = ax.unit();
                [u[0] * x[c], u[1] * x[c]]
            }
            None => {
                let d = [x[c], x[c + 1]];
                if side == Side::Minus {
                    rotate_quarter(self.turns[image], d)
                } else {
                    d
                }
            }
        }
    }

    /// Places every boundary vertex from the chords `x`, mapping chain
    /// interiors by similarities of the old layout.
    fn assemble(
        &self,
        old: &[[f64; 2]],
        x: &[f64],
        anchor: [f64; 2],
    ) -> Result<(Vec<Option<[f64; 2]>>, Vec<[f64; 2]>)> {
        let nv = self.s.mesh.num_vertices();
        let mut node_pos: Vec<Option<[f64; 2]>> = vec![None; nv];
        let mut cur = anchor;
        node_pos[self.pieces[0].start] = Some(cur);
        for p in &self.pieces {
            let d = self.chain_chord(p.image, p.side, x);
            let d = if p.forward { d } else { [-d[0], -d[1]] };
            cur = [cur[0] + d[0], cur[1] + d[1]];
            match node_pos[p.end] {
                Some(q) if dist(q, cur) > 1e-9 * (1.0 + dist(q, [0.0; 2])) => {
                    return Err(Error::SingularSystem(format!(
                        "boundary walk does not close (gap {:e})",
                        dist(q, cur)
                    )));
                }
                Some(_) => {}
                None => node_pos[p.end] = Some(cur),
            }
        }
        let mut fixed: Vec<Option<[f64; 2]>> = vec![None; nv];
        let mut translations = vec![[0.0; 2]; self.s.segment_images.len()];
        for (i, img) in self.s.segment_images.iter().enumerate() {
            let a = img.plus[0];
            let b = *img.plus.last().unwrap();
            let (Some(na), Some(nb)) = (node_pos[a], node_pos[b]) else {
                return Err(Error::InvalidCut(format!(
                    "segment {} has no placed endpoints",
                    img.segment
                )));
            };
            let mapped = similarity(
                &img.plus.iter().map(|&v| old[v]).collect::<Vec<_>>(),
                na,
                nb,
            )
            .ok_or(Error::DegenerateSegment(img.segment))?;
            match self.axes[i] {
                Some(ax) => {
                    let level = ax.level(na);
                    for (&v, mut p) in img.plus.iter().zip(mapped) {
                        match ax {
                            Axis::Horizontal => p[1] = level,
                            Axis::Vertical => p[0] = level,
                        }
                        fixed[v] = Some(p);
                    }
                }
                None => {
                    let minus = img.minus.as_ref().expect("cut image");
                    let k = self.turns[i];
                    let r0 = rotate_quarter(k, na);
                    let m0 = node_pos[minus[0]].ok_or_else(|| {
                        Error::InvalidCut(format!("segment {} has no placed copy", img.segment))
                    })?;
                    let t = sub(m0, r0);
                    translations[i] = t;
                    for ((&v, &w), p) in img.plus.iter().zip(minus).zip(mapped) {
                        fixed[v] = Some(p);
                        let q = rotate_quarter(k, p);
                        fixed[w] = Some([q[0] + t[0], q[1] + t[1]]);
                    }
                }
            }
        }
        for v in 0..nv {
            if let Some(p) = node_pos[v] {
                fixed[v] = Some(p);
            }
        }
        Ok((fixed, translations))
    }
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Maps a polyline by the similarity taking its endpoints to `a`, `b`.
fn similarity(pts: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Option<Vec<[f64; 2]>> {
    let p0 = pts[0];
    let d_old = sub(*pts.last().unwrap(), p0);
    let d_new = sub(b, a);
    let n2 = dot(d_old, d_old);
    if n2 < 1e-300 || dot(d_new, d_new) < 1e-300 {
        return None;
    }
    // complex factor d_new / d_old
    let re = dot(d_new, d_old) / n2;
    let im = (d_new[1] * d_old[0] - d_new[0] * d_old[1]) / n2;
    Some(
        pts.iter()
            .map(|&p| {
                let z = sub(p, p0);
                [a[0] + re * z[0] - im * z[1], a[1] + im * z[0] + re * z[1]]
            })
            .collect(),
    )
}

/// Pseudo-inverse of a symmetric 2x2 matrix.
fn pinv2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let tr = a + d;
    let disc = (((a - d) * 0.5).powi(2) + b * b).sqrt();
    let l1 = tr * 0.5 + disc;
    let l2 = tr * 0.5 - disc;
    let scale = l1.abs().max(1e-300);
    let v1 = if b.abs() > 1e-300 || (a - l1).abs() > 1e-300 {
        let v = if b.abs() > 1e-300 {
            [b, l1 - a]
        } else if a >= d {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    } else {
        [1.0, 0.0]
    };
    let v2 = [-v1[1], v1[0]];
    let mut out = [[0.0; 2]; 2];
    for (l, v) in [(l1, v1), (l2, v2)] {
        if l.abs() > 1e-12 * scale {
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += v[i] * v[j] / l;
                }
            }
        }
    }
    out
}

/// Smallest weighted change of `x0` satisfying `sum_j a_j x_j = 0`.
fn least_change(a: &[[f64; 2]], x0: &[f64], w: &[f64]) -> Vec<f64> {
    let mut r = [0.0; 2];
    let mut m = [[0.0; 2]; 2];
    for j in 0..a.len() {
        for i in 0..2 {
            r[i] += a[j][i] * x0[j];
            for k in 0..2 {
                m[i][k] += w[j] * a[j][i] * a[j][k];
            }
        }
    }
    let p = pinv2(m);
    let y = [
        p[0][0] * r[0] + p[0][1] * r[1],
        p[1][0] * r[0] + p[1][1] * r[1],
    ];
    (0..a.len())
        .map(|j| x0[j] - w[j] * (a[j][0] * y[0] + a[j][1] * y[1]))
        .collect()
}

/// Rounds `x0` to integers and repairs the closure sum greedily.
fn integer_closure(a: &[[f64; 2]], x0: &[f64]) -> Result<Vec<f64>> {
    let mut x: Vec<f64> = x0.iter().map(|v| v.round()).collect();
    let residual = |x: &[f64]| {
        let mut r = [0.0; 2];
        for j in 0..a.len() {
            r[0] += a[j][0] * x[j];
            r[1] += a[j][1] * x[j];
        }
        [r[0].round(), r[1].round()]
    };
    let mut r = residual(&x);
    for _ in 0..100_000 {
        if r == [0.0, 0.0] {
            return Ok(x);
        }
        let norm = dot(r, r);
        let mut best: Option<(f64, f64, usize, f64)> = None;
        for j in 0..a.len() {
            if a[j] == [0.0, 0.0] {
                continue;
            }
            for step in [-1.0, 1.0] {
                let nr = [r[0] + step * a[j][0], r[1] + step * a[j][1]];
                let score = dot(nr, nr);
                if score >= norm {
                    continue;
                }
                let cost =
                    ((x[j] + step - x0[j]).abs() - (x[j] - x0[j]).abs()) / (x0[j].abs() + 1.0);
                let better = match best {
                    None => true,
                    Some((s, c, _, _)) => score < s || (score == s && cost < c),
                };
                if better {
                    best = Some((score, cost, j, step));
                }
            }
        }
        if let Some((_, _, j, step)) = best {
            x[j] += step;
            r = [r[0] + step * a[j][0], r[1] + step * a[j][1]];
            continue;
        }
        // no single step helps; look for a pair
        let mut pair: Option<(f64, usize, f64, usize, f64)> = None;
        for j in 0..a.len() {
            for k in j + 1..a.len() {
                for s1 in [-1.0, 1.0] {
                    for s2 in [-1.0, 1.0] {
                        let nr = [
                            r[0] + s1 * a[j][0] + s2 * a[k][0],
                            r[1] + s1 * a[j][1] + s2 * a[k][1],
                        ];
                        let score = dot(nr, nr);
                        if score < norm && pair.is_none_or(|p| score < p.0) {
                            pair = Some((score, j, s1, k, s2));
                        }
                    }
                }
            }
        }
        let Some((_, j, s1, k, s2)) = pair else {
            return Err(Error::QuantizationInfeasible(format!(
                "closure residual ({}, {}) cannot be repaired",
                r[0], r[1]
            )));
        };
        x[j] += s1;
        x[k] += s2;
        r = [
            r[0] + s1 * a[j][0] + s2 * a[k][0],
            r[1] + s1 * a[j][1] + s2 * a[k][1],
        ];
    }
    Err(Error::QuantizationInfeasible(
        "closure repair did not terminate".into(),
    ))
}

/// Quarter-turn counts for the cut images, repaired so that the turns
/// around every interior node add up to the node's own cone angle.
fn snap_turns(
    s: &SlicedMesh,
    cut: &CutGraph,
    pairings: &[SegmentPairing],
    tol_snap: f64,
) -> Result<Vec<i64>> {
    let mut theta = vec![0.0; s.segment_images.len()];
    let mut turns = vec![0i64; s.segment_images.len()];
    let by_segment: HashMap<usize, &SegmentPairing> =
        pairings.iter().map(|p| (p.segment, p)).collect();
    for (i, img) in s.segment_images.iter().enumerate() {
        if img.kind != SegmentKind::Cut {
            continue;
        }
        let p = by_segment
            .get(&img.segment)
            .ok_or_else(|| Error::InvalidCut(format!("segment {} has no pairing", img.segment)))?;
        theta[i] = p.rotation;
        turns[i] = (p.rotation / FRAC_PI_2).round() as i64;
        let d = wrap_angle(p.rotation - turns[i] as f64 * FRAC_PI_2).abs();
        if d > tol_snap {
            return Err(Error::SnapInfeasible {
                segment: img.segment,
                distance: d,
            });
        }
    }
    // node bookkeeping on the original vertices
    let nn = cut.nodes.len();
    let node_index: HashMap<usize, usize> =
        cut.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut on_boundary = vec![false; nn];
    for seg in &cut.segments {
        if seg.kind == SegmentKind::Boundary {
            for v in [seg.vertices[0], *seg.vertices.last().unwrap()] {
                on_boundary[node_index[&v]] = true;
            }
        }
    }
    let mut real = vec![0.0; nn];
    let mut resid = vec![0i64; nn];
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nn];
    for (i, img) in s.segment_images.iter().enumerate() {
        if img.kind != SegmentKind::Cut {
            continue;
        }
        let seg = &cut.segments[img.segment];
        let u = node_index[&seg.vertices[0]];
        let w = node_index[seg.vertices.last().unwrap()];
        real[u] += theta[i];
        real[w] -= theta[i];
        resid[u] += turns[i];
        resid[w] -= turns[i];
        if u != w {
            adj[u].push((w, i));
            adj[w].push((u, i));
        }
    }
    for v in 0..nn {
        let target = (real[v] / FRAC_PI_2).round() as i64;
        resid[v] = (resid[v] - target).rem_euclid(4);
    }
    // move each unit of residual along the path whose worst rotation error
    // stays smallest, until it reaches a boundary node or cancels
    let err = |i: usize, k: i64| wrap_angle(theta[i] - k as f64 * FRAC_PI_2).abs();
    let norm = |r: i64| match r.rem_euclid(4) {
        3 => -1,
        x => x,
    };
    for _ in 0..4 * nn + 4 {
        let Some(v0) = (0..nn).find(|&v| !on_boundary[v] && resid[v] != 0) else {
            break;
        };
        // unit to move: moving +1 lowers the residual at v0 by one
        let unit = if norm(resid[v0]) < 0 { -1 } else { 1 };
        let mut best = vec![f64::INFINITY; nn];
        let mut via: Vec<Option<(usize, usize, i64)>> = vec![None; nn];
        best[v0] = 0.0;
        let mut done = vec![false; nn];
        let mut sink = None;
        loop {
            let Some(v) = (0..nn)
                .filter(|&v| !done[v] && best[v].is_finite())
                .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            else {
                break;
            };
            done[v] = true;
            if v != v0 && (on_boundary[v] || norm(resid[v] + unit).abs() < norm(resid[v]).abs()) {
                sink = Some(v);
                break;
            }
            for &(w, i) in &adj[v] {
                let seg = &cut.segments[s.segment_images[i].segment];
                let u = node_index[&seg.vertices[0]];
                // a unit leaves v: the start loses it through -1, the end through +1
                let delta = if u == v { -unit } else { unit };
                let cost = best[v].max(err(i, turns[i] + delta));
                if cost < best[w] {
                    best[w] = cost;
                    via[w] = Some((v, i, delta));
                }
            }
        }
        let Some(mut w) = sink else {
            return Err(Error::SingularSystem(format!(
                "quarter turns around node {} do not close",
                cut.nodes[v0]
            )));
        };
        while let Some((v, i, delta)) = via[w] {
            turns[i] += delta;
            let seg = &cut.segments[s.segment_images[i].segment];
            let u = node_index[&seg.vertices[0]];
            let e = node_index[seg.vertices.last().unwrap()];
            resid[u] = (resid[u] + delta).rem_euclid(4);
            resid[e] = (resid[e] - delta).rem_euclid(4);
            w = v;
        }
    }
    if let Some(v) = (0..nn).find(|&v| !on_boundary[v] && resid[v] != 0) {
        return Err(Error::SingularSystem(format!(
            "quarter turns around node {} do not close",
            cut.nodes[v]
        )));
    }
    for (i, img) in s.segment_images.iter().enumerate() {
        if img.kind == SegmentKind::Cut {
            let d = wrap_angle(theta[i] - turns[i] as f64 * FRAC_PI_2).abs();
            if d > tol_snap {
                return Err(Error::SnapInfeasible {
                    segment: img.segment,
                    distance: d,
                });
            }
        }
    }
    Ok(turns)
}

fn finish(
    plan: &Plan,
    old: &[[f64; 2]],
    x: &[f64],
    anchor: [f64; 2],
    global_rotation: f64,
    original_rotation: &[f64],
    grid_unit: Option<f64>,
) -> Result<DeformedImmersion> {
    let s = plan.s;
    let (fixed, translations) = plan.assemble(old, x, anchor)?;
    let uv = harmonic_fill(s, &fixed)?;
    let max_displacement = uv
        .iter()
        .zip(old)
        .map(|(&a, &b)| dist(a, b))
        .fold(0.0, f64::max);
    let immersion = SlicedImmersion {
        sliced: s.clone(),
        uv,
    };
    let foldovers = immersion
        .signed_areas()
        .iter()
        .filter(|&&a| a <= 0.0)
        .count();
    let mut pairings = Vec::new();
    let mut axes = Vec::new();
    for (i, img) in s.segment_images.iter().enumerate() {
        match plan.axes[i] {
            Some(axis) => axes.push(BoundaryAxis {
                segment: img.segment,
                axis,
                value: axis.level(immersion.uv[img.plus[0]]),
            }),
            None => pairings.push(SnappedPairing {
                segment: img.segment,
                quarter_turns: plan.turns[i].rem_euclid(4) as u8,
                translation: translations[i],
                original_rotation: original_rotation[i],
            }),
        }
    }
    Ok(DeformedImmersion {
        immersion,
        pairings,
        axes,
        global_rotation,
        foldovers,
        grid_unit,
        max_displacement,
    })
}

/// Snaps pairing rotations to quarter turns and boundary chains to axis
/// lines, then rebuilds the layout: chain chords change as little as
/// closure allows, chain interiors follow by similarity and the interior
/// is the harmonic extension.
pub fn snap_and_solve(
    imm: &SlicedImmersion,
    cut: &CutGraph,
    pairings: &[SegmentPairing],
    opts: SnapOptions,
) -> Result<DeformedImmersion> {
    let s = &imm.sliced;
    let turns = snap_turns(s, cut, pairings, opts.tol_snap)?;
    // global rotation that best aligns the boundary chords with the axes
    let mut acc = [0.0; 2];
    for img in &s.segment_images {
        if img.kind == SegmentKind::Boundary {
            let d = sub(imm.uv[*img.plus.last().unwrap()], imm.uv[img.plus[0]]);
            let w = d[0].hypot(d[1]);
            let a = 4.0 * d[1].atan2(d[0]);
            acc[0] += w * a.cos();
            acc[1] += w * a.sin();
        }
    }
    let global_rotation = if acc[0].hypot(acc[1]) > 0.0 {
        -acc[1].atan2(acc[0]) / 4.0
    } else {
        0.0
    };
    let old: Vec<[f64; 2]> = imm.uv.iter().map(|&p| rotate(global_rotation, p)).collect();
    let axes: Vec<Option<Axis>> = s
        .segment_images
        .iter()
        .map(|img| {
            (img.kind == SegmentKind::Boundary).then(|| {
                let d = sub(old[*img.plus.last().unwrap()], old[img.plus[0]]);
                if d[0].abs() >= d[1].abs() {
                    Axis::Horizontal
                } else {
                    Axis::Vertical
                }
            })
        })
        .collect();
    let plan = Plan {
        s,
        pieces: boundary_pieces(s, cut)?,
        unknowns: Unknowns::new(s),
        turns,
        axes,
    };
    let a = plan.columns();
    let x0 = plan.chords(&old);
    let w: Vec<f64> = x0.iter().map(|v| v.abs() + 1e-12).collect();
    let x = least_change(&a, &x0, &w);
    let diag = bbox_diag(&old).max(f64::MIN_POSITIVE);
    let mut r = [0.0; 2];
    for j in 0..a.len() {
        r[0] += a[j][0] * x[j];
        r[1] += a[j][1] * x[j];
    }
    if r[0].hypot(r[1]) > 1e-9 * diag {
        return Err(Error::SingularSystem(format!(
            "closure residual {:e} after projection",
            r[0].hypot(r[1])
        )));
    }
    let original: Vec<f64> = original_rotations(s, pairings);
    finish(
        &plan,
        &old,
        &x,
        old[plan.pieces[0].start],
        global_rotation,
        &original,
        None,
    )
}

fn original_rotations(s: &SlicedMesh, pairings: &[SegmentPairing]) -> Vec<f64> {
    let by_segment: HashMap<usize, f64> =
        pairings.iter().map(|p| (p.segment, p.rotation)).collect();
    s.segment_images
        .iter()
        .map(|img| by_segment.get(&img.segment).copied().unwrap_or(0.0))
        .collect()
}

/// Moves every node copy onto the lattice `unit * Z^2` while keeping the
/// snapped constraints, so that transition translations become lattice
/// vectors.
pub fn quantize_to_grid(
    def: &DeformedImmersion,
    cut: &CutGraph,
    unit: f64,
) -> Result<DeformedImmersion> {
    if !(unit > 0.0 && unit.is_finite()) {
        return Err(Error::QuantizationInfeasible(format!("grid unit {unit}")));
    }
    let s = &def.immersion.sliced;
    let mut turns = vec![0i64; s.segment_images.len()];
    let mut axes = vec![None; s.segment_images.len()];
    let mut original = vec![0.0; s.segment_images.len()];
    for (i, img) in s.segment_images.iter().enumerate() {
        if let Some(p) = def.pairings.iter().find(|p| p.segment == img.segment) {
            turns[i] = p.quarter_turns as i64;
            original[i] = p.original_rotation;
        }
        if let Some(a) = def.axes.iter().find(|a| a.segment == img.segment) {
            axes[i] = Some(a.axis);
        }
    }
    let plan = Plan {
        s,
        pieces: boundary_pieces(s, cut)?,
        unknowns: Unknowns::new(s),
        turns,
        axes,
    };
    let a = plan.columns();
    let old = &def.immersion.uv;
    let x0: Vec<f64> = plan.chords(old).iter().map(|v| v / unit).collect();
    let xi = integer_closure(&a, &x0)?;
    for (i, img) in s.segment_images.iter().enumerate() {
        let c = plan.unknowns.col[i];
        let zero = match plan.axes[i] {
            Some(_) => xi[c] == 0.0,
            None => xi[c] == 0.0 && xi[c + 1] == 0.0,
        };
        if zero {
            return Err(Error::QuantizationInfeasible(format!(
                "segment {} collapses on a grid of unit {unit:e}",
                img.segment
            )));
        }
    }
    let x: Vec<f64> = xi.iter().map(|v| v * unit).collect();
    let p0 = old[plan.pieces[0].start];
    let anchor = [(p0[0] / unit).round() * unit, (p0[1] / unit).round() * unit];
    let mut out = finish(
        &plan,
        old,
        &x,
        anchor,
        def.global_rotation,
        &original,
        Some(unit),
    )?;
    out.max_displacement = out
        .immersion
        .uv
        .iter()
        .zip(old)
        .map(|(&a, &b)| dist(a, b))
        .fold(0.0, f64::max);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_maps_endpoints() {
        let pts = [[0.0, 0.0], [0.5, 0.1], [1.0, 0.0]];
        let out = similarity(&pts, [1.0, 1.0], [1.0, 3.0]).unwrap();
        assert!(dist(out[0], [1.0, 1.0]) < 1e-15);
        assert!(dist(out[2], [1.0, 3.0]) < 1e-15);
        assert!(dist(out[1], [0.8, 2.0]) < 1e-12);
    }

    #[test]
    fn pinv_of_rank_one() {
        let p = pinv2([[1.0, 1.0], [1.0, 1.0]]);
        for row in p {
            for v in row {
                assert!((v - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn least_change_closes() {
        let a = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let x = least_change(&a, &[1.0, 1.0, 1.2, 0.9], &[1.0; 4]);
        assert!((x[0] - x[2]).abs() < 1e-12 && (x[1] - x[3]).abs() < 1e-12);
        assert!((x[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn integer_closure_repairs_parity() {
        // (I - R) with R a quarter turn, plus a horizontal chord
        let a = [[1.0, -1.0], [1.0, 1.0], [1.0, 0.0]];
        let x = integer_closure(&a, &[0.4, 0.6, -1.4]).unwrap();
        let r0: f64 = (0..3).map(|j| a[j][0] * x[j]).sum();
        let r1: f64 = (0..3).map(|j| a[j][1] * x[j]).sum();
        assert_eq!((r0, r1), (0.0, 0.0));
    }

    #[test]
    fn quarter_rotation_is_exact() {
        assert_eq!(rotate_quarter(1, [1.0, 2.0]), [-2.0, 1.0]);
        assert_eq!(rotate_quarter(-1, [1.0, 2.0]), [2.0, -1.0]);
        assert_eq!(rotate_quarter(6, [1.0, 2.0]), [-1.0, -2.0]);
    }
}
