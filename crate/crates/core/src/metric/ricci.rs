//! Newton's method for the discrete Ricci energy under vertex scaling.

use serde::{Deserialize, Serialize};

use super::{
    face_angles_from_lengths, make_delaunay, scaled_lengths, target_curvature, vertex_curvature,
    ConeMetric, CurvatureField,
};
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, SparseBuilder};
use crate::mesh::TriangleMesh;
use crate::prescription::{validate_prescription, SingularityPrescription, Validation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RicciOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RicciOptions {
    fn default() -> Self {
        RicciOptions {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RicciReport {
    pub iterations: usize,
    /// Final `max |target - K|` in radians.
    pub residual: f64,
    /// Convex energy (negated Ricci energy) after each accepted step,
    /// starting from 0 at the initial metric.
    pub energy_trace: Vec<f64>,
    /// `max |target - K|` before each iteration and at the end.
    pub residual_trace: Vec<f64>,
    pub flips: usize,
    pub line_search_halvings: usize,
}

// 8-point Gauss-Legendre rule on [-1, 1]
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Curvature of the metric `exp(u_i) beta_ij exp(u_j)` on the fixed
/// triangulation, or `None` if some face degenerates.
fn curvature_at(mesh: &TriangleMesh, beta: &[f64], u: &[f64]) -> Option<Vec<f64>> {
    let l = scaled_lengths(mesh, beta, u);
    let mut sums = vec![0.0; mesh.num_vertices()];
    for f in 0..mesh.num_faces() {
        let hs = mesh.face_halfedges(f);
        let ang = face_angles_from_lengths(hs.map(|h| l[h / 2])).ok()?;
        for i in 0..3 {
            sums[mesh.origin(hs[i])] += ang[i];
        }
    }
    Some(
        sums.iter()
            .enumerate()
            .map(|(v, s)| {
                if mesh.is_boundary_vertex(v) {
                    std::f64::consts::PI - s
                } else {
                    std::f64::consts::TAU - s
                }
            })
            .collect(),
    )
}

/// `int_0^alpha sum_i (K_i(u + s d) - target_i) d_i ds` by composite
/// Gauss-Legendre quadrature on the fixed triangulation.
fn energy_change(
    mesh: &TriangleMesh,
    beta: &[f64],
    u: &[f64],
    d: &[f64],
    target: &[f64],
    alpha: f64,
    panels: usize,
) -> Option<f64> {
    let mut total = 0.0;
    let mut x = vec![0.0; u.len()];
    let h = alpha / panels as f64;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for q in 0..8 {
            let s = mid + 0.5 * h * GL_X[q];
            for i in 0..u.len() {
                x[i] = u[i] + s * d[i];
            }
            let k = curvature_at(mesh, beta, &x)?;
            let dot: f64 = k
                .iter()
                .zip(target)
                .zip(d)
                .map(|((k, t), d)| (k - t) * d)
                .sum();
            total += 0.5 * h * GL_W[q] * dot;
        }
    }
    Some(total)
}

/// Ricci energy and its gradient at `u`, relative to `metric0`: the metric
/// at `u` has lengths `exp(u_i) l0_ij exp(u_j)`. The energy is the path
/// integral of `sum (target_i - K_i) du_i` along the segment from 0 to `u`;
/// the gradient is `target - K(u)`.
pub fn ricci_energy_gradient(
    mesh: &TriangleMesh,
    metric0: &ConeMetric,
    target: &CurvatureField,
    u: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = mesh.num_vertices();
    if u.len() != n || target.0.len() != n {
        return Err(Error::DegenerateMetric("size mismatch".into()));
    }
    let base = metric0.lengths();
    let zero = vec![0.0; n];
    let degenerate =
        || Error::DegenerateMetric("scaled metric violates the triangle inequality".into());
    let k = curvature_at(mesh, base, u).ok_or_else(degenerate)?;
    let de = energy_change(mesh, base, &zero, u, &target.0, 1.0, 4).ok_or_else(degenerate)?;
    let grad = target.0.iter().zip(&k).map(|(t, k)| t - k).collect();
    Ok((-de, grad))
}

/// Hessian of the convex energy: the cotangent Laplacian of the current
/// metric, assembled with vertex `pin` removed.
fn reduced_hessian(mesh: &TriangleMesh, metric: &ConeMetric, pin: usize) -> Result<SparseBuilder> {
    let n = mesh.num_vertices();
    let idx = |v: usize| if v < pin { v } else { v - 1 };
    let mut h = SparseBuilder::new(n - 1, n - 1);
    for f in 0..mesh.num_faces() {
        let ang = metric.face_angles(mesh, f)?;
        let vs = mesh.face_vertices(f);
        for i in 0..3 {
            let w = 1.0 / ang[i].tan();
            let (a, b) = (vs[(i + 1) % 3], vs[(i + 2) % 3]);
            if a != pin {
                h.add(idx(a), idx(a), w);
            }
            if b != pin {
                h.add(idx(b), idx(b), w);
            }
            if a != pin && b != pin {
                h.add(idx(a), idx(b), -w);
                h.add(idx(b), idx(a), -w);
            }
        }
    }
    Ok(h)
}

/// Ricci flow toward the curvature of a singularity prescription.
pub fn ricci_flow(
    mesh: &TriangleMesh,
    metric0: &ConeMetric,
    presc: &SingularityPrescription,
    tol: f64,
    max_iter: usize,
) -> Result<(TriangleMesh, ConeMetric, RicciReport)> {
    if let Validation::Violation { residual } = validate_prescription(mesh, presc)? {
        return Err(Error::GaussBonnetViolation { residual });
    }
    let target = target_curvature(mesh, presc);
    ricci_flow_to_target(mesh, metric0, &target, RicciOptions { tol, max_iter })
}

/// Newton iteration on the convex energy with backtracking and intrinsic
/// Delaunay flips after every accepted step.
pub fn ricci_flow_to_target(
    mesh: &TriangleMesh,
    metric0: &ConeMetric,
    target: &CurvatureField,
    opts: RicciOptions,
) -> Result<(TriangleMesh, ConeMetric, RicciReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::Config("Ricci tolerance must be positive".into()));
    }
    let n = mesh.num_vertices();
    if target.0.len() != n {
        return Err(Error::DegenerateMetric("target size mismatch".into()));
    }
    let gb = target.total() - vertex_curvature(mesh, metric0)?.total();
    if gb.abs() > 1e-8 {
        return Err(Error::GaussBonnetViolation {
            residual: (gb / std::f64::consts::FRAC_PI_2).round() as i64,
        });
    }
    let mut mesh = mesh.clone();
    let mut metric = metric0.clone();
    metric.check(&mesh)?;
    let mut report = RicciReport {
        iterations: 0,
        residual: f64::INFINITY,
        energy_trace: vec![0.0],
        residual_trace: Vec::new(),
        flips: make_delaunay(&mut mesh, &mut metric)?,
        line_search_halvings: 0,
    };
    let mut energy = 0.0;
    loop {
        let k = vertex_curvature(&mesh, &metric)?;
        let g: Vec<f64> = k.0.iter().zip(&target.0).map(|(k, t)| k - t).collect();
        let res = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        report.residual_trace.push(res);
        report.residual = res;
        log::debug!("ricci iteration {} residual {res:e}", report.iterations);
        if res <= opts.tol {
            return Ok((mesh, metric, report));
        }
        if report.iterations >= opts.max_iter || n < 2 {
            return Err(Error::NoConvergence {
                iterations: report.iterations,
                residual: res,
            });
        }
        report.iterations += 1;

        let pin = 0;
        let h = reduced_hessian(&mesh, &metric, pin)?;
        let rhs: Vec<f64> = (0..n).filter(|&v| v != pin).map(|v| -g[v]).collect();
        let sol = solve_spd(&h, &[rhs])?.remove(0);
        let mut d = Vec::with_capacity(n);
        let mut it = sol.into_iter();
        for v in 0..n {
            d.push(if v == pin { 0.0 } else { it.next().unwrap() });
        }
        let mean = d.iter().sum::<f64>() / n as f64;
        for x in d.iter_mut() {
            *x -= mean;
        }

        let u = metric.u().to_vec();
        let beta = metric.beta().to_vec();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(u, d)| u + alpha * d).collect();
            if let Ok(m) = metric.scaled(&mesh, &trial) {
                if let Some(de) = energy_change(&mesh, &beta, &u, &d, &target.0, alpha, 1) {
                    if de <= 0.0 {
                        accepted = Some((m, de));
                        break;
                    }
                }
            }
            alpha *= 0.5;
            report.line_search_halvings += 1;
        }
        let Some((m, de)) = accepted else {
            return Err(Error::NoConvergence {
                iterations: report.iterations,
                residual: res,
            });
        };
        metric = m;
        energy += de;
        report.energy_trace.push(energy);
        report.flips += make_delaunay(&mut mesh, &mut metric)?;
    }
}
