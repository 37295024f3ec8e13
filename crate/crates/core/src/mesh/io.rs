//! OFF / OBJ reading and OBJ writing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_extension(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

pub fn load_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let (positions, faces) = match format {
        MeshFormat::Off => parse_off(text)?,
        MeshFormat::Obj => parse_obj(text)?,
    };
    TriangleMesh::from_triangles(positions.len(), &faces, Some(positions))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_off(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    // (line number, tokens) with comments removed
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then(|| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
    });
    let (ln, mut head) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    if head[0] == "OFF" {
        head.remove(0);
    } else if head[0].ends_with("OFF") {
        return Err(parse_err(ln, format!("unsupported header {}", head[0])));
    }
    let (ln, counts) = if head.is_empty() {
        lines
            .next()
            .ok_or_else(|| parse_err(ln, "missing counts"))?
    } else {
        (ln, head)
    };
    if counts.len() < 2 {
        return Err(parse_err(ln, "expected vertex and face counts"));
    }
    let nv: usize = counts[0]
        .parse()
        .map_err(|_| parse_err(ln, "bad vertex count"))?;
    let nf: usize = counts[1]
        .parse()
        .map_err(|_| parse_err(ln, "bad face count"))?;
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, t) = lines
            .next()
            .ok_or_else(|| parse_err(0, "truncated vertex list"))?;
        if t.len() < 3 {
            return Err(parse_err(ln, "vertex needs three coordinates"));
        }
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = t[k].parse().map_err(|_| parse_err(ln, "bad coordinate"))?;
        }
        positions.push(p);
    }
    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let (ln, t) = lines
            .next()
            .ok_or_else(|| parse_err(0, "truncated face list"))?;
        let n: usize = t[0].parse().map_err(|_| parse_err(ln, "bad face size"))?;
        if n != 3 {
            return Err(Error::NonTriangleFace(f));
        }
        if t.len() < 4 {
            return Err(parse_err(ln, "face has too few indices"));
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            tri[k] = t[k + 1].parse().map_err(|_| parse_err(ln, "bad index"))?;
            if tri[k] >= nv {
                return Err(parse_err(ln, format!("index {} out of range", tri[k])));
            }
        }
        faces.push(tri);
    }
    Ok((positions, faces))
}

fn parse_obj(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut t = line.split_whitespace();
        match t.next() {
            Some("v") => {
                let c: Vec<f64> = t
                    .take(3)
                    .map(|x| x.parse().map_err(|_| parse_err(ln, "bad coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(parse_err(ln, "vertex needs three coordinates"));
                }
                positions.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = t
                    .map(|x| {
                        let first = x.split('/').next().unwrap_or("");
                        let k: i64 = first.parse().map_err(|_| parse_err(ln, "bad index"))?;
                        let n = positions.len() as i64;
                        let k = if k < 0 { n + k } else { k - 1 };
                        if k < 0 || k >= n {
                            return Err(parse_err(ln, format!("index {first} out of range")));
                        }
                        Ok(k as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::NonTriangleFace(faces.len()));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok((positions, faces))
}

/// Writes a triangle mesh as OBJ. With `wedge_uv`, every corner gets its own
/// `vt` record and faces are written as `f v/vt`.
pub fn write_obj(
    positions: &[[f64; 3]],
    faces: &[Vec<usize>],
    wedge_uv: Option<&[Vec<[f64; 2]>]>,
) -> String {
    let mut s = String::new();
    for p in positions {
        let _ = writeln!(s, "v {} {} {}", fmt(p[0]), fmt(p[1]), fmt(p[2]));
    }
    match wedge_uv {
        Some(uv) => {
            for corners in uv {
                for c in corners {
                    let _ = writeln!(s, "vt {} {}", fmt(c[0]), fmt(c[1]));
                }
            }
            let mut t = 1;
            for f in faces {
                s.push('f');
                for &v in f {
                    let _ = write!(s, " {}/{}", v + 1, t);
                    t += 1;
                }
                s.push('\n');
            }
        }
        None => {
            for f in faces {
                s.push('f');
                for &v in f {
                    let _ = write!(s, " {}", v + 1);
                }
                s.push('\n');
            }
        }
    }
    s
}

/// Fixed-precision float formatting so artifacts are byte-stable.
pub(crate) fn fmt(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.12}")
}

impl TriangleMesh {
    /// OBJ export of the triangles, with optional per-corner texture
    /// coordinates indexed `[face][corner]`.
    pub fn to_obj(&self, wedge_uv: Option<&[Vec<[f64; 2]>]>) -> String {
        let positions: Vec<[f64; 3]> = match self.positions() {
            Some(p) => p.to_vec(),
            None => vec![[0.0; 3]; self.num_vertices()],
        };
        let faces: Vec<Vec<usize>> = self.triangles().iter().map(|t| t.to_vec()).collect();
        write_obj(&positions, &faces, wedge_uv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn off_single_triangle() {
        let m = load_mesh(
            b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
            MeshFormat::Off,
        )
        .unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_faces()), (3, 3, 1));
    }

    #[test]
    fn off_two_triangles() {
        let src = "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";
        let m = load_mesh(src.as_bytes(), MeshFormat::Off).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_faces()), (4, 5, 2));
        let loops = m.boundary_loops();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 4);
    }

    #[test]
    fn off_three_faces_on_edge_is_non_manifold() {
        let src = "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 -1 0\n0 0 1\n3 0 1 2\n3 1 0 3\n3 0 1 4\n";
        assert!(matches!(
            load_mesh(src.as_bytes(), MeshFormat::Off),
            Err(Error::NonManifold(_))
        ));
    }

    #[test]
    fn off_quad_is_rejected() {
        let src = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(matches!(
            load_mesh(src.as_bytes(), MeshFormat::Off),
            Err(Error::NonTriangleFace(0))
        ));
    }

    #[test]
    fn off_garbage_is_parse_error() {
        assert!(matches!(
            load_mesh(b"OFF\n3 x 0\n", MeshFormat::Off),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn obj_with_texture_indices_and_comments() {
        let src = "# test\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1\n";
        let m = load_mesh(src.as_bytes(), MeshFormat::Obj).unwrap();
        assert_eq!(m.num_faces(), 1);
    }

    #[test]
    fn obj_roundtrip_preserves_vertex_order() {
        let src = "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";
        let m = load_mesh(src.as_bytes(), MeshFormat::Off).unwrap();
        let obj = m.to_obj(None);
        let m2 = load_mesh(obj.as_bytes(), MeshFormat::Obj).unwrap();
        assert_eq!(m.positions(), m2.positions());
        assert_eq!(m.triangles(), m2.triangles());
    }

    #[test]
    fn obj_wedge_uv_records() {
        let m = TriangleMesh::from_triangles(3, &[[0, 1, 2]], Some(vec![[0.0; 3]; 3])).unwrap();
        let uv = vec![vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]];
        let obj = m.to_obj(Some(&uv));
        assert_eq!(obj.lines().filter(|l| l.starts_with("vt ")).count(), 3);
        assert!(obj.contains("f 1/1 2/2 3/3"));
    }
}
