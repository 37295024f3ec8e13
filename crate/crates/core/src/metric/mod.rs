//! Discrete cone metrics, corner angles and vertex curvature.

mod delaunay;
mod ricci;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::prescription::SingularityPrescription;

pub use delaunay::{delaunay_violation, intrinsic_delaunay, make_delaunay};
pub use ricci::{
    ricci_energy_gradient, ricci_flow, ricci_flow_to_target, RicciOptions, RicciReport,
};

/// Edge lengths together with the vertex-scaling data that produced them:
/// `edge_length(i, j) = exp(u_i) * beta_ij * exp(u_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConeMetric {
    u: Vec<f64>,
    beta: Vec<f64>,
    edge_length: Vec<f64>,
}

impl ConeMetric {
    /// Metric with the given lengths as reference lengths and `u = 0`.
    pub fn from_lengths(mesh: &TriangleMesh, lengths: Vec<f64>) -> Result<Self> {
        if lengths.len() != mesh.num_edges() {
            return Err(Error::DegenerateMetric(format!(
                "{} lengths for {} edges",
                lengths.len(),
                mesh.num_edges()
            )));
        }
        let m = ConeMetric {
            u: vec![0.0; mesh.num_vertices()],
            beta: lengths.clone(),
            edge_length: lengths,
        };
        m.check(mesh)?;
        Ok(m)
    }

    /// Metric induced by the vertex positions.
    pub fn from_positions(mesh: &TriangleMesh) -> Result<Self> {
        let l = mesh
            .euclidean_lengths()
            .ok_or_else(|| Error::DegenerateMetric("mesh has no positions".into()))?;
        Self::from_lengths(mesh, l)
    }

    /// Same reference lengths, new conformal factors.
    pub fn scaled(&self, mesh: &TriangleMesh, u: &[f64]) -> Result<Self> {
        let m = ConeMetric {
            u: u.to_vec(),
            beta: self.beta.clone(),
            edge_length: scaled_lengths(mesh, &self.beta, u),
        };
        m.check(mesh)?;
        Ok(m)
    }

    pub fn lengths(&self) -> &[f64] {
        &self.edge_length
    }

    #[inline]
    pub fn length(&self, e: usize) -> f64 {
        self.edge_length[e]
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub(crate) fn set_flipped_length(&mut self, mesh: &TriangleMesh, e: usize, l: f64) {
        let [a, b] = mesh.edge_vertices(e);
        self.edge_length[e] = l;
        self.beta[e] = l * (-self.u[a] - self.u[b]).exp();
    }

    /// Lengths of the sides `hs[0], hs[1], hs[2]` of face `f`.
    #[inline]
    pub fn face_lengths(&self, mesh: &TriangleMesh, f: usize) -> [f64; 3] {
        mesh.face_halfedges(f).map(|h| self.edge_length[h / 2])
    }

    /// Corner angles of `f`, at corners 0, 1, 2.
    pub fn face_angles(&self, mesh: &TriangleMesh, f: usize) -> Result<[f64; 3]> {
        face_angles_from_lengths(self.face_lengths(mesh, f))
    }

    pub fn face_area(&self, mesh: &TriangleMesh, f: usize) -> f64 {
        let [a, b, c] = self.face_lengths(mesh, f);
        heron(a, b, c)
    }

    pub fn total_area(&self, mesh: &TriangleMesh) -> f64 {
        (0..mesh.num_faces()).map(|f| self.face_area(mesh, f)).sum()
    }

    /// Multiplies every length by `s`, keeping `u`.
    pub fn rescale(&mut self, s: f64) {
        for l in self.edge_length.iter_mut().chain(self.beta.iter_mut()) {
            *l *= s;
        }
    }

    /// Largest relative deviation from the vertex-scaling rule.
    pub fn scaling_residual(&self, mesh: &TriangleMesh) -> f64 {
        let expect = scaled_lengths(mesh, &self.beta, &self.u);
        expect
            .iter()
            .zip(&self.edge_length)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max)
    }

    /// Checks the strict triangle inequality on every face.
    pub fn check(&self, mesh: &TriangleMesh) -> Result<()> {
        if self.u.len() != mesh.num_vertices() || self.edge_length.len() != mesh.num_edges() {
            return Err(Error::DegenerateMetric("size mismatch with mesh".into()));
        }
        for f in 0..mesh.num_faces() {
            let [a, b, c] = self.face_lengths(mesh, f);
            if !is_triangle(a, b, c) {
                return Err(Error::DegenerateTriangle(a, b, c));
            }
        }
        Ok(())
    }
}

pub(crate) fn scaled_lengths(mesh: &TriangleMesh, beta: &[f64], u: &[f64]) -> Vec<f64> {
    (0..mesh.num_edges())
        .map(|e| {
            let [a, b] = mesh.edge_vertices(e);
            (u[a] + u[b]).exp() * beta[e]
        })
        .collect()
}

#[inline]
pub(crate) fn is_triangle(a: f64, b: f64, c: f64) -> bool {
    a > 0.0
        && b > 0.0
        && c > 0.0
        && a < b + c
        && b < a + c
        && c < a + b
        && a.is_finite()
        && b.is_finite()
        && c.is_finite()
}

pub(crate) fn heron(a: f64, b: f64, c: f64) -> f64 {
    // sorted form for stability
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    let p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * p.max(0.0).sqrt()
}

/// Angle opposite `l_i` in the triangle with sides `l_i, l_j, l_k`.
pub fn corner_angle(l_i: f64, l_j: f64, l_k: f64) -> Result<f64> {
    if !is_triangle(l_i, l_j, l_k) {
        return Err(Error::DegenerateTriangle(l_i, l_j, l_k));
    }
    Ok(angle_unchecked(l_i, l_j, l_k))
}

/// Half-angle form of the cosine law, accurate for needle triangles too.
#[inline]
pub(crate) fn angle_unchecked(a: f64, b: f64, c: f64) -> f64 {
    let num = (a - b + c) * (a + b - c);
    let den = (a + b + c) * (-a + b + c);
    2.0 * (num / den).max(0.0).sqrt().atan()
}

#[inline]
pub(crate) fn face_angles_from_lengths(l: [f64; 3]) -> Result<[f64; 3]> {
    if !is_triangle(l[0], l[1], l[2]) {
        return Err(Error::DegenerateTriangle(l[0], l[1], l[2]));
    }
    // corner i sits between sides i-1 and i, opposite side i+1
    Ok([
        angle_unchecked(l[1], l[0], l[2]),
        angle_unchecked(l[2], l[1], l[0]),
        angle_unchecked(l[0], l[2], l[1]),
    ])
}

/// Curvature per vertex in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CurvatureField(pub Vec<f64>);

impl CurvatureField {
    pub fn total(&self) -> f64 {
        // compensated sum
        let mut s = 0.0;
        let mut c = 0.0;
        for &k in &self.0 {
            let y = k - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
        }
        s
    }

    pub fn max_abs_diff(&self, other: &CurvatureField) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Angle sum at every vertex.
pub fn angle_sums(mesh: &TriangleMesh, metric: &ConeMetric) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; mesh.num_vertices()];
    for f in 0..mesh.num_faces() {
        let ang = metric.face_angles(mesh, f)?;
        let vs = mesh.face_vertices(f);
        for i in 0..3 {
            sums[vs[i]] += ang[i];
        }
    }
    Ok(sums)
}

/// Angle deficit `2pi - sum` inside, turning `pi - sum` on the boundary.
pub fn vertex_curvature(mesh: &TriangleMesh, metric: &ConeMetric) -> Result<CurvatureField> {
    let sums = angle_sums(mesh, metric)?;
    Ok(CurvatureField(
        sums.iter()
            .enumerate()
            .map(|(v, s)| {
                if mesh.is_boundary_vertex(v) {
                    PI - s
                } else {
                    TAU - s
                }
            })
            .collect(),
    ))
}

/// Target curvature: `k pi/2` at prescribed vertices and zero elsewhere,
/// including non-singular boundary vertices.
pub fn target_curvature(mesh: &TriangleMesh, presc: &SingularityPrescription) -> CurvatureField {
    let mut k = vec![0.0; mesh.num_vertices()];
    for s in presc.iter() {
        if s.vertex < k.len() {
            k[s.vertex] = s.index as f64 * std::f64::consts::FRAC_PI_2;
        }
    }
    CurvatureField(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn angle_examples() {
        assert!((corner_angle(1.0, 1.0, 1.0).unwrap() - PI / 3.0).abs() < 1e-15);
        assert!((corner_angle(5.0, 3.0, 4.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(corner_angle(2.9, 1.0, 2.0).is_ok());
        assert!(matches!(
            corner_angle(3.1, 1.0, 2.0),
            Err(Error::DegenerateTriangle(..))
        ));
        assert!(corner_angle(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn half_angle_matches_arccos() {
        for &(a, b, c) in &[(1.0, 1.2, 0.7), (0.3, 2.0, 1.9), (1.99, 1.0, 1.0)] {
            let direct = ((b * b + c * c - a * a) / (2.0 * b * c) as f64).acos();
            assert!((corner_angle(a, b, c).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_curvature() {
        let m = models::unit_square_grid(3);
        let k = vertex_curvature(&m, &ConeMetric::from_positions(&m).unwrap()).unwrap();
        for v in 0..m.num_vertices() {
            let (i, j) = (v % 4, v / 4);
            let corner = (i == 0 || i == 3) && (j == 0 || j == 3);
            let want = if corner { PI / 2.0 } else { 0.0 };
            assert!((k.0[v] - want).abs() < 1e-12, "vertex {v}");
        }
        assert!((k.total() - TAU).abs() < 1e-12);
    }

    #[test]
    fn regular_tetrahedron_curvature() {
        let m = models::regular_tetrahedron();
        let k = vertex_curvature(&m, &ConeMetric::from_positions(&m).unwrap()).unwrap();
        for v in 0..4 {
            assert!((k.0[v] - PI).abs() < 1e-12);
        }
        assert!((k.total() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn scaling_rule_holds() {
        let m = models::unit_square_grid(2);
        let g = ConeMetric::from_positions(&m).unwrap();
        let u: Vec<f64> = (0..m.num_vertices()).map(|v| 0.01 * v as f64).collect();
        let s = g.scaled(&m, &u).unwrap();
        assert!(s.scaling_residual(&m) < 1e-12);
    }

    #[test]
    fn heron_right_triangle() {
        assert!((heron(3.0, 4.0, 5.0) - 6.0).abs() < 1e-12);
    }
}
