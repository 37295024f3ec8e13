//! Benchmark fixtures.

use metricquad::mesh::io::MeshFormat;
use metricquad::models::bundled;
use metricquad::pipeline::{Length, Pipeline, Stage};

/// Pipeline over a bundled model, run through `through`.
pub fn prepared(name: &str, resolution: Option<usize>, through: Stage) -> Pipeline {
    let model = bundled(name, resolution).expect("bundled model");
    let obj = model.mesh.to_obj(None);
    let mut p = Pipeline::from_bytes(name, obj.as_bytes(), MeshFormat::Obj).expect("mesh loads");
    p.set_prescription(model.prescription);
    p.run(through).expect("fixture runs");
    p
}

/// Target edge length equal to the shortest skeleton arc, so every model
/// quantizes.
pub fn shortest_arc_h(p: &mut Pipeline) {
    let sk = p.skeleton().expect("skeleton stage ran");
    let h = sk
        .arcs
        .iter()
        .map(|a| a.length)
        .fold(f64::INFINITY, f64::min);
    let mut params = p.params().clone();
    params.h = Length::Absolute(h);
    p.set_params(params).expect("positive h");
}
