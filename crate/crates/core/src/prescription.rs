//! Cone singularity prescriptions and the Gauss-Bonnet budget.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// One prescribed singularity. The curvature it carries is `index * pi/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord, Hash)]
pub struct Singularity {
    pub vertex: usize,
    pub index: i32,
}

/// Singular vertices and their indices, kept sorted by vertex id.
///
/// Serialized as a JSON array of `{"vertex": int, "index": int}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Singularity>", into = "Vec<Singularity>")]
pub struct SingularityPrescription {
    entries: BTreeMap<usize, i32>,
    duplicates: Vec<usize>,
}

impl From<Vec<Singularity>> for SingularityPrescription {
    fn from(list: Vec<Singularity>) -> Self {
        let mut p = SingularityPrescription::default();
        for s in list {
            if p.entries.insert(s.vertex, s.index).is_some() {
                p.duplicates.push(s.vertex);
            }
        }
        p
    }
}

impl From<SingularityPrescription> for Vec<Singularity> {
    fn from(p: SingularityPrescription) -> Self {
        p.iter().collect()
    }
}

impl SingularityPrescription {
    pub fn new(list: impl IntoIterator<Item = (usize, i32)>) -> Self {
        list.into_iter()
            .map(|(vertex, index)| Singularity { vertex, index })
            .collect::<Vec<_>>()
            .into()
    }

    pub fn iter(&self) -> impl Iterator<Item = Singularity> + '_ {
        self.entries
            .iter()
            .map(|(&vertex, &index)| Singularity { vertex, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, v: usize) -> Option<i32> {
        self.entries.get(&v).copied()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.entries.contains_key(&v)
    }

    pub fn set(&mut self, vertex: usize, index: i32) {
        self.entries.insert(vertex, index);
    }

    pub fn remove(&mut self, vertex: usize) -> Option<i32> {
        self.entries.remove(&vertex)
    }

    pub fn index_sum(&self) -> i64 {
        self.entries.values().map(|&k| k as i64).sum()
    }

    /// Target curvature of a listed vertex in radians.
    pub fn curvature(&self, v: usize) -> Option<f64> {
        self.index_of(v).map(|k| k as f64 * FRAC_PI_2)
    }

    /// Target valence: `4 - k` inside, `2 - k` on the boundary.
    pub fn target_valence(&self, mesh: &TriangleMesh, v: usize) -> Option<i64> {
        let k = self.index_of(v)? as i64;
        Some(if mesh.is_boundary_vertex(v) {
            2 - k
        } else {
            4 - k
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("prescription serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Validation {
    Ok,
    /// `sum k - 4 chi`, in units of pi/2.
    Violation {
        residual: i64,
    },
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        matches!(self, Validation::Ok)
    }
}

/// Checks that the prescription references existing vertices with positive
/// target valence, then checks `sum k == 4 chi` in integer arithmetic.
pub fn validate_prescription(
    mesh: &TriangleMesh,
    presc: &SingularityPrescription,
) -> Result<Validation> {
    if let Some(&v) = presc.duplicates.first() {
        return Err(Error::InvalidPrescription(format!(
            "vertex {v} listed twice"
        )));
    }
    for s in presc.iter() {
        if s.vertex >= mesh.num_vertices() {
            return Err(Error::UnknownVertex(s.vertex));
        }
        let val = presc.target_valence(mesh, s.vertex).unwrap();
        if val < 1 {
            return Err(Error::InvalidPrescription(format!(
                "vertex {} would have target valence {val}",
                s.vertex
            )));
        }
    }
    let residual = presc.index_sum() - 4 * mesh.euler_characteristic();
    Ok(if residual == 0 {
        Validation::Ok
    } else {
        Validation::Violation { residual }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> TriangleMesh {
        TriangleMesh::from_triangles(3, &[[0, 1, 2]], None).unwrap()
    }

    #[test]
    fn json_shape() {
        let p = SingularityPrescription::new([(2, -1), (0, 1)]);
        assert_eq!(
            p.to_json(),
            r#"[{"vertex":0,"index":1},{"vertex":2,"index":-1}]"#
        );
        assert_eq!(SingularityPrescription::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn duplicate_vertex_is_rejected() {
        let p = SingularityPrescription::from_json(
            r#"[{"vertex":0,"index":1},{"vertex":0,"index":2}]"#,
        )
        .unwrap();
        assert!(matches!(
            validate_prescription(&triangle(), &p),
            Err(Error::InvalidPrescription(_))
        ));
    }

    #[test]
    fn unknown_vertex() {
        let p = SingularityPrescription::new([(7, 1)]);
        assert_eq!(
            validate_prescription(&triangle(), &p),
            Err(Error::UnknownVertex(7))
        );
    }

    #[test]
    fn valence_must_stay_positive() {
        // boundary vertex with k = 2 has valence 0
        let p = SingularityPrescription::new([(0, 2), (1, 1), (2, 1)]);
        assert!(validate_prescription(&triangle(), &p).is_err());
    }

    #[test]
    fn triangle_corners() {
        // three corners with index +1 leave one unit of budget
        let p = SingularityPrescription::new([(0, 1), (1, 1), (2, 1)]);
        assert_eq!(
            validate_prescription(&triangle(), &p).unwrap(),
            Validation::Violation { residual: -1 }
        );
        let p = SingularityPrescription::new([(0, 1), (1, 1), (2, 2)]);
        assert!(validate_prescription(&triangle(), &p).is_err());
    }
}
