use std::collections::VecDeque;
use std::f64::consts::PI;

use super::{angle_unchecked, is_triangle, ConeMetric};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

const DELAUNAY_EPS: f64 = 1e-10;

/// Sum of the two angles opposite interior edge `e` minus pi; positive means
/// the edge is not Delaunay. `None` for boundary edges.
pub fn delaunay_violation(mesh: &TriangleMesh, metric: &ConeMetric, e: usize) -> Option<f64> {
    if mesh.is_boundary_edge(e) {
        return None;
    }
    let l = metric.lengths();
    let h0 = 2 * e;
    let h1 = 2 * e + 1;
    let a0 = angle_unchecked(l[e], l[mesh.next(h0) / 2], l[mesh.prev(h0) / 2]);
    let a1 = angle_unchecked(l[e], l[mesh.next(h1) / 2], l[mesh.prev(h1) / 2]);
    Some(a0 + a1 - PI)
}

/// Length of the other diagonal of the quadrilateral around `e`, by
/// unfolding its two triangles into the plane. `None` if the quadrilateral
/// is not strictly convex at the edge's endpoints.
fn flipped_length(mesh: &TriangleMesh, metric: &ConeMetric, e: usize) -> Option<f64> {
    let l = metric.lengths();
    let h0 = 2 * e;
    let h1 = 2 * e + 1;
    let (h0n, h0p) = (mesh.next(h0), mesh.prev(h0));
    let (h1n, h1p) = (mesh.next(h1), mesh.prev(h1));
    let le = l[e];
    // f0 = (a, b, c), f1 = (b, a, d)
    let (l_bc, l_ca) = (l[h0n / 2], l[h0p / 2]);
    let (l_ad, l_db) = (l[h1n / 2], l[h1p / 2]);
    let at_a = angle_unchecked(l_bc, le, l_ca) + angle_unchecked(l_db, le, l_ad);
    let at_b = angle_unchecked(l_ca, le, l_bc) + angle_unchecked(l_ad, le, l_db);
    if at_a >= PI || at_b >= PI {
        return None;
    }
    let d2 = l_ca * l_ca + l_ad * l_ad - 2.0 * l_ca * l_ad * at_a.cos();
    let d = d2.max(0.0).sqrt();
    (is_triangle(d, l_ca, l_ad) && is_triangle(d, l_bc, l_db)).then_some(d)
}

/// Flips edges in place until every interior edge is Delaunay. Returns the
/// number of flips.
pub fn make_delaunay(mesh: &mut TriangleMesh, metric: &mut ConeMetric) -> Result<usize> {
    let ne = mesh.num_edges();
    let budget = 50 * ne.max(1);
    let mut queue: VecDeque<usize> = (0..ne).collect();
    let mut queued = vec![true; ne];
    let mut flips = 0;
    let mut stuck = Vec::new();
    while let Some(e) = queue.pop_front() {
        queued[e] = false;
        let Some(viol) = delaunay_violation(mesh, metric, e) else {
            continue;
        };
        if viol <= DELAUNAY_EPS {
            continue;
        }
        let Some(d) = flipped_length(mesh, metric, e) else {
            stuck.push(e);
            continue;
        };
        if mesh.flip_edge(e).is_err() {
            stuck.push(e);
            continue;
        }
        metric.set_flipped_length(mesh, e, d);
        flips += 1;
        if flips > budget {
            return Err(Error::NonFlippable(e));
        }
        for h in [2 * e, 2 * e + 1] {
            for x in [mesh.next(h), mesh.prev(h)] {
                let g = x / 2;
                if !queued[g] {
                    queued[g] = true;
                    queue.push_back(g);
                }
            }
        }
    }
    for e in stuck {
        if delaunay_violation(mesh, metric, e).is_some_and(|v| v > DELAUNAY_EPS) {
            return Err(Error::NonFlippable(e));
        }
    }
    Ok(flips)
}

/// Intrinsic Delaunay retriangulation by edge flips; flipped edges receive
/// the planar diagonal of their unfolded quadrilateral.
pub fn intrinsic_delaunay(
    mesh: &TriangleMesh,
    metric: &ConeMetric,
) -> Result<(TriangleMesh, ConeMetric, usize)> {
    metric.check(mesh)?;
    let mut m = mesh.clone();
    let mut g = metric.clone();
    let flips = make_delaunay(&mut m, &mut g)?;
    Ok((m, g, flips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::vertex_curvature;
    use crate::models;

    fn kite() -> (TriangleMesh, ConeMetric) {
        // planar quad (0,0) (1,0) (1.6,1.6)... with a long shared edge
        let p = vec![
            [0.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
            [1.5, 0.3, 0.0],
            [1.5, -0.3, 0.0],
        ];
        let m = TriangleMesh::from_triangles(4, &[[0, 1, 2], [1, 0, 3]], Some(p)).unwrap();
        let g = ConeMetric::from_positions(&m).unwrap();
        (m, g)
    }

    #[test]
    fn delaunay_grid_needs_no_flips() {
        let m = models::unit_square_grid(4);
        let g = ConeMetric::from_positions(&m).unwrap();
        let (m2, g2, flips) = intrinsic_delaunay(&m, &g).unwrap();
        assert_eq!(flips, 0);
        assert_eq!(m2, m);
        assert_eq!(g2, g);
    }

    #[test]
    fn kite_flip_matches_planar_diagonal() {
        let (m, g) = kite();
        let (m2, g2, flips) = intrinsic_delaunay(&m, &g).unwrap();
        assert_eq!(flips, 1);
        let e = (0..m.num_edges())
            .find(|&e| {
                let [a, b] = m.edge_vertices(e);
                a.min(b) == 0 && a.max(b) == 1
            })
            .unwrap();
        let [a, b] = m2.edge_vertices(e);
        assert_eq!([a.min(b), a.max(b)], [2, 3]);
        assert!((g2.length(e) - 0.6).abs() < 1e-12);
        assert!(delaunay_violation(&m2, &g2, e).unwrap() <= 0.0);
        // curvature and counts unchanged
        let k1 = vertex_curvature(&m, &g).unwrap();
        let k2 = vertex_curvature(&m2, &g2).unwrap();
        assert!(k1.max_abs_diff(&k2) < 1e-12);
        assert_eq!(m2.euler_characteristic(), m.euler_characteristic());
    }

    #[test]
    fn flip_back_restores_length() {
        let (m, g) = kite();
        let (mut m2, mut g2, _) = intrinsic_delaunay(&m, &g).unwrap();
        let e = (0..m2.num_edges())
            .find(|&e| !m2.is_boundary_edge(e))
            .unwrap();
        let d = flipped_length(&m2, &g2, e).unwrap();
        m2.flip_edge(e).unwrap();
        g2.set_flipped_length(&m2, e, d);
        assert!((g2.length(e) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn flips_preserve_counts_on_perturbed_grid() {
        let m = models::unit_square_grid(5);
        let mut p = m.positions().unwrap().to_vec();
        for (i, q) in p.iter_mut().enumerate() {
            q[2] = 0.3 * ((i * 7919 % 13) as f64 / 13.0);
        }
        let mut m = m;
        m.set_positions(Some(p));
        let g = ConeMetric::from_positions(&m).unwrap();
        let k1 = vertex_curvature(&m, &g).unwrap();
        let (m2, g2, _) = intrinsic_delaunay(&m, &g).unwrap();
        for e in 0..m2.num_edges() {
            if let Some(v) = delaunay_violation(&m2, &g2, e) {
                assert!(v <= 1e-10);
            }
        }
        let k2 = vertex_curvature(&m2, &g2).unwrap();
        assert!(k1.max_abs_diff(&k2) < 1e-10);
        assert_eq!(m2.boundary_loops().len(), 1);
    }
}
