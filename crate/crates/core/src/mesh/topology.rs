use serde::{Deserialize, Serialize};

use super::TriangleMesh;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TopologyReport {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler_characteristic: i64,
    pub genus: i64,
    /// Each loop as its ordered vertex cycle.
    pub boundary_loops: Vec<Vec<usize>>,
}

pub fn topology_report(mesh: &TriangleMesh) -> TopologyReport {
    let v = mesh.num_vertices();
    let e = mesh.num_edges();
    let f = mesh.num_faces();
    let chi = v as i64 - e as i64 + f as i64;
    let boundary_loops: Vec<Vec<usize>> = mesh
        .boundary_loops()
        .into_iter()
        .map(|lp| lp.into_iter().map(|h| mesh.origin(h)).collect())
        .collect();
    let b = boundary_loops.len() as i64;
    TopologyReport {
        vertices: v,
        edges: e,
        faces: f,
        euler_characteristic: chi,
        genus: (2 - chi - b) / 2,
        boundary_loops,
    }
}

impl TriangleMesh {
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_faces() as i64
    }
}
