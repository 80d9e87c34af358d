//! OBJ and OFF mesh parsing and writing.
//!
//! Both formats are handled in their plain ASCII triangle form. OBJ input
//! reads `v` and `f` records, tolerates `v/vt/vn` sub-indices by keeping the
//! vertex index, and skips unrelated keywords (`vn`, `vt`, `g`, ...). OFF
//! input accepts an optional comment-laden header and ignores trailing color
//! values on face rows. Writers emit vertices and faces in index order with
//! shortest round-trip float formatting, so writing is deterministic and
//! parsing a written file reproduces the mesh exactly.

use crate::mesh::{Mesh, MeshError};
use nalgebra::Point3;
use thiserror::Error;

/// Supported mesh file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
}

impl MeshFormat {
    /// Picks a format from a file extension (case-insensitive).
    #[must_use]
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "obj" => Some(Self::Obj),
            "off" => Some(Self::Off),
            _ => None,
        }
    }
}

/// Errors produced while parsing a mesh file.
#[derive(Debug, Error)]
pub enum ParseError {
    /// A record could not be interpreted. Lines are numbered from 1.
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    /// A face with other than three vertices was encountered.
    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangular { line: usize, count: usize },
    /// The assembled mesh failed index validation.
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn malformed(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        message: message.into(),
    }
}

/// Parses mesh text in the given format.
pub fn load_mesh(text: &str, format: MeshFormat) -> Result<Mesh, ParseError> {
    match format {
        MeshFormat::Obj => load_obj(text),
        MeshFormat::Off => load_off(text),
    }
}

/// Writes the mesh in the given format.
#[must_use]
pub fn save_mesh(mesh: &Mesh, format: MeshFormat) -> String {
    match format {
        MeshFormat::Obj => save_obj(mesh),
        MeshFormat::Off => save_off(mesh),
    }
}

/// Strips a `#` comment and surrounding whitespace.
fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => line[..pos].trim(),
        None => line.trim(),
    }
}

fn parse_float(token: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    token
        .parse::<f64>()
        .map_err(|_| malformed(line, format!("invalid {what} '{token}'")))
}

fn load_obj(text: &str) -> Result<Mesh, ParseError> {
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    // Faces are validated against the final vertex count, so files that
    // interleave v and f records in any order parse the same way.
    let mut faces: Vec<([i64; 3], usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().expect("non-empty line has a token");
        match keyword {
            "v" => {
                let mut coords = [0.0; 3];
                for coord in &mut coords {
                    let token = tokens
                        .next()
                        .ok_or_else(|| malformed(line_no, "vertex record needs 3 coordinates"))?;
                    *coord = parse_float(token, line_no, "coordinate")?;
                }
                // A fourth w coordinate (or color values) may trail; ignore.
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(ParseError::NonTriangular {
                        line: line_no,
                        count: refs.len(),
                    });
                }
                let mut indices = [0i64; 3];
                for (slot, r) in indices.iter_mut().zip(&refs) {
                    // `v/vt/vn` references keep only the vertex index.
                    let vertex_part = r.split('/').next().unwrap_or("");
                    *slot = vertex_part
                        .parse::<i64>()
                        .map_err(|_| malformed(line_no, format!("invalid face index '{r}'")))?;
                }
                faces.push((indices, line_no));
            }
            // Normals, texture coordinates, groups, materials, and other
            // keywords carry no triangle geometry here.
            _ => {}
        }
    }

    let count = vertices.len();
    let mut resolved = Vec::with_capacity(faces.len());
    for (indices, line_no) in faces {
        let mut face = [0u32; 3];
        for (slot, &i) in face.iter_mut().zip(&indices) {
            if i < 1 || i as usize > count {
                return Err(malformed(
                    line_no,
                    format!("face index {i} out of range (1..={count})"),
                ));
            }
            *slot = (i - 1) as u32;
        }
        resolved.push(face);
    }
    Ok(Mesh::new(vertices, resolved)?)
}

fn load_off(text: &str) -> Result<Mesh, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(idx, raw)| (idx + 1, strip_comment(raw)))
        .filter(|(_, line)| !line.is_empty());

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| malformed(0, "empty OFF file"))?;
    if header != "OFF" {
        return Err(malformed(line_no, format!("expected OFF header, found '{header}'")));
    }

    let (line_no, counts) = lines
        .next()
        .ok_or_else(|| malformed(line_no, "missing OFF count line"))?;
    let mut count_tokens = counts.split_whitespace();
    let mut next_count = |what: &str| -> Result<usize, ParseError> {
        count_tokens
            .next()
            .ok_or_else(|| malformed(line_no, format!("missing {what} count")))?
            .parse::<usize>()
            .map_err(|_| malformed(line_no, format!("invalid {what} count")))
    };
    let n_vertices = next_count("vertex")?;
    let n_faces = next_count("face")?;
    // The edge count is traditionally present but unused.

    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| malformed(line_no, "unexpected end of file in vertex list"))?;
        let mut tokens = line.split_whitespace();
        let mut coords = [0.0; 3];
        for coord in &mut coords {
            let token = tokens
                .next()
                .ok_or_else(|| malformed(line_no, "vertex row needs 3 coordinates"))?;
            *coord = parse_float(token, line_no, "coordinate")?;
        }
        vertices.push(Point3::new(coords[0], coords[1], coords[2]));
    }

    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| malformed(line_no, "unexpected end of file in face list"))?;
        let mut tokens = line.split_whitespace();
        let arity: usize = tokens
            .next()
            .ok_or_else(|| malformed(line_no, "face row needs a vertex count"))?
            .parse()
            .map_err(|_| malformed(line_no, "invalid face vertex count"))?;
        if arity != 3 {
            return Err(ParseError::NonTriangular {
                line: line_no,
                count: arity,
            });
        }
        let mut face = [0u32; 3];
        for slot in &mut face {
            let token = tokens
                .next()
                .ok_or_else(|| malformed(line_no, "face row ended early"))?;
            let i: usize = token
                .parse()
                .map_err(|_| malformed(line_no, format!("invalid face index '{token}'")))?;
            if i >= n_vertices {
                return Err(malformed(
                    line_no,
                    format!("face index {i} out of range (0..{n_vertices})"),
                ));
            }
            *slot = i as u32;
        }
        // Trailing tokens (face colors) are ignored.
        faces.push(face);
    }
    Ok(Mesh::new(vertices, faces)?)
}

fn save_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for &[a, b, c] in mesh.faces() {
        out.push_str(&format!("f {} {} {}\n", a + 1, b + 1, c + 1));
    }
    out
}

fn save_off(mesh: &Mesh) -> String {
    let mut out = String::from("OFF\n");
    out.push_str(&format!("{} {} 0\n", mesh.n_vertices(), mesh.n_faces()));
    for v in mesh.vertices() {
        out.push_str(&format!("{} {} {}\n", v.x, v.y, v.z));
    }
    for &[a, b, c] in mesh.faces() {
        out.push_str(&format!("3 {} {} {}\n", a, b, c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn obj_round_trip_is_exact() {
        let mesh = shapes::wavy_sphere(1, 0.07);
        let text = save_mesh(&mesh, MeshFormat::Obj);
        let back = load_mesh(&text, MeshFormat::Obj).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.faces(), mesh.faces());
        // A second write is byte-identical.
        assert_eq!(save_mesh(&back, MeshFormat::Obj), text);
    }

    #[test]
    fn off_round_trip_is_exact() {
        let mesh = shapes::cylinder(12, 3, 0.4, 1.7);
        let text = save_mesh(&mesh, MeshFormat::Off);
        let back = load_mesh(&text, MeshFormat::Off).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.faces(), mesh.faces());
    }

    #[test]
    fn obj_parses_comments_and_sub_indices() {
        let text = "\
# full-line comment
v 0 0 0
v 1 0 0  # trailing comment
v 0 1 0
vn 0 0 1
f 1/1/1 2/2/1 3/3/1
";
        let mesh = load_mesh(text, MeshFormat::Obj).unwrap();
        assert_eq!(mesh.n_vertices(), 3);
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn obj_rejects_bad_records() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(
            load_mesh(quad, MeshFormat::Obj),
            Err(ParseError::NonTriangular { line: 5, count: 4 })
        ));

        let out_of_range = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n";
        assert!(matches!(
            load_mesh(out_of_range, MeshFormat::Obj),
            Err(ParseError::Malformed { line: 4, .. })
        ));

        let bad_float = "v 0 zero 0\n";
        assert!(matches!(
            load_mesh(bad_float, MeshFormat::Obj),
            Err(ParseError::Malformed { line: 1, .. })
        ));

        // Negative (relative) indices are not supported.
        let relative = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n";
        assert!(matches!(
            load_mesh(relative, MeshFormat::Obj),
            Err(ParseError::Malformed { line: 4, .. })
        ));
    }

    #[test]
    fn off_parses_header_comments_and_colors() {
        let text = "\
# comment before header
OFF
3 1 3
0 0 0
1 0 0
0 1 0
3 0 1 2 255 0 0
";
        let mesh = load_mesh(text, MeshFormat::Off).unwrap();
        assert_eq!(mesh.n_faces(), 1);
    }

    #[test]
    fn off_rejects_bad_input() {
        assert!(matches!(
            load_mesh("NOFF\n1 0 0\n0 0 0\n", MeshFormat::Off),
            Err(ParseError::Malformed { .. })
        ));
        assert!(matches!(
            load_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 2\n", MeshFormat::Off),
            Err(ParseError::NonTriangular { count: 4, .. })
        ));
        assert!(matches!(
            load_mesh("OFF\n2 0 0\n0 0 0\n", MeshFormat::Off),
            Err(ParseError::Malformed { .. })
        ));
    }

    #[test]
    fn empty_mesh_round_trips() {
        let mesh = crate::mesh::Mesh::new(Vec::new(), Vec::new()).unwrap();
        let obj = save_mesh(&mesh, MeshFormat::Obj);
        assert_eq!(obj, "");
        let off = save_mesh(&mesh, MeshFormat::Off);
        let back = load_mesh(&off, MeshFormat::Off).unwrap();
        assert_eq!(back.n_vertices(), 0);
        assert_eq!(back.n_faces(), 0);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(MeshFormat::from_extension("obj"), Some(MeshFormat::Obj));
        assert_eq!(MeshFormat::from_extension("OFF"), Some(MeshFormat::Off));
        assert_eq!(MeshFormat::from_extension("stl"), None);
    }
}
