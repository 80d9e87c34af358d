//! Indexed triangle meshes and their derived quantities.
//!
//! [`Mesh`] owns vertex positions and face index triples and caches the
//! per-face and per-vertex quantities the rest of the pipeline reads in hot
//! loops: centroids, unit normals, areas, area-weighted vertex normals, the
//! unique undirected edge list, and the mean edge length. Connectivity is
//! immutable after construction; [`Mesh::with_vertices`] produces a new mesh
//! with the same faces and freshly computed caches.
//!
//! Degenerate faces (zero cross-product norm) are permitted and flagged
//! instead of rejected: their cached normal is the zero vector, and accessor
//! methods that cannot produce a meaningful value report errors instead.

use nalgebra::{Point3, Vector3};
use thiserror::Error;

/// Relative tolerance for classifying a face as degenerate: the face is
/// degenerate when its cross-product norm is at most this factor times the
/// square of its longest edge, which keeps the test scale-invariant.
const DEGENERACY_RELATIVE_EPS: f64 = 1e-12;

/// Errors for mesh construction and per-element queries.
#[derive(Debug, Error)]
pub enum MeshError {
    /// A face references a vertex index outside the vertex array.
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    /// A face lists the same vertex more than once.
    #[error("face {0} repeats a vertex index")]
    RepeatedIndex(usize),
    /// The face has zero area, so it has no well-defined normal.
    #[error("face {0} is degenerate (zero cross-product norm)")]
    DegenerateFace(usize),
    /// The vertex has no incident face with a well-defined normal.
    #[error("vertex {0} has no incident non-degenerate face")]
    IsolatedVertex(usize),
    /// The incident face normals of the vertex cancel exactly.
    #[error("vertex {0} has a zero area-weighted normal sum")]
    DegenerateVertexNormal(usize),
    /// The mesh has no edges, so the mean edge length is undefined.
    #[error("mesh has no edges")]
    NoEdges,
    /// A face index argument is out of range.
    #[error("face index {0} out of range ({1} faces)")]
    NoSuchFace(usize, usize),
    /// A vertex index argument is out of range.
    #[error("vertex index {0} out of range ({1} vertices)")]
    NoSuchVertex(usize, usize),
    /// A replacement vertex array has the wrong length.
    #[error("expected {expected} vertex positions, got {got}")]
    VertexCountMismatch { expected: usize, got: usize },
}

/// An indexed triangle mesh with cached derived quantities.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    face_centroids: Vec<Point3<f64>>,
    /// Unit normals; the zero vector for degenerate faces.
    face_normals: Vec<Vector3<f64>>,
    face_areas: Vec<f64>,
    face_degenerate: Vec<bool>,
    /// Area-weighted unit vertex normals; the zero vector where undefined.
    vertex_normals: Vec<Vector3<f64>>,
    /// Unique undirected edges as (low, high) vertex pairs, sorted.
    edges: Vec<(u32, u32)>,
    /// Mean edge length; `None` when the mesh has no edges.
    avg_edge_length: Option<f64>,
}

impl Mesh {
    /// Builds a mesh and all derived caches.
    ///
    /// Validates that every face index is in range and that no face repeats
    /// a vertex. Geometrically degenerate faces are accepted and flagged.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        for (f, idx) in faces.iter().enumerate() {
            for &i in idx {
                if i as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face: f,
                        index: i,
                        count: vertices.len(),
                    });
                }
            }
            if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
                return Err(MeshError::RepeatedIndex(f));
            }
        }

        let mut mesh = Self {
            vertices,
            faces,
            face_centroids: Vec::new(),
            face_normals: Vec::new(),
            face_areas: Vec::new(),
            face_degenerate: Vec::new(),
            vertex_normals: Vec::new(),
            edges: Vec::new(),
            avg_edge_length: None,
        };
        mesh.rebuild_edge_cache();
        mesh.rebuild_geometry_caches();
        Ok(mesh)
    }

    /// Returns a mesh with the same connectivity and new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::VertexCountMismatch {
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        let mut mesh = Self {
            vertices,
            faces: self.faces.clone(),
            face_centroids: Vec::new(),
            face_normals: Vec::new(),
            face_areas: Vec::new(),
            face_degenerate: Vec::new(),
            vertex_normals: Vec::new(),
            edges: self.edges.clone(),
            avg_edge_length: None,
        };
        mesh.rebuild_geometry_caches();
        Ok(mesh)
    }

    fn rebuild_edge_cache(&mut self) {
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(self.faces.len() * 3);
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                edges.push((u.min(v), u.max(v)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        self.edges = edges;
    }

    fn rebuild_geometry_caches(&mut self) {
        let n_faces = self.faces.len();
        self.face_centroids = Vec::with_capacity(n_faces);
        self.face_normals = Vec::with_capacity(n_faces);
        self.face_areas = Vec::with_capacity(n_faces);
        self.face_degenerate = Vec::with_capacity(n_faces);

        for &[a, b, c] in &self.faces {
            let (pa, pb, pc) = (
                self.vertices[a as usize],
                self.vertices[b as usize],
                self.vertices[c as usize],
            );
            self.face_centroids
                .push(Point3::from((pa.coords + pb.coords + pc.coords) / 3.0));
            let e1 = pb - pa;
            let e2 = pc - pa;
            let cross = e1.cross(&e2);
            let cross_norm = cross.norm();
            let longest_sq = e1.norm_squared().max(e2.norm_squared()).max((pc - pb).norm_squared());
            let degenerate = cross_norm <= DEGENERACY_RELATIVE_EPS * longest_sq;
            self.face_degenerate.push(degenerate);
            self.face_areas.push(0.5 * cross_norm);
            self.face_normals.push(if degenerate {
                Vector3::zeros()
            } else {
                cross / cross_norm
            });
        }

        // Area-weighted vertex normals over non-degenerate incident faces.
        let mut sums = vec![Vector3::zeros(); self.vertices.len()];
        let mut has_face = vec![false; self.vertices.len()];
        for (f, &[a, b, c]) in self.faces.iter().enumerate() {
            if self.face_degenerate[f] {
                continue;
            }
            let weighted = self.face_normals[f] * self.face_areas[f];
            for i in [a, b, c] {
                sums[i as usize] += weighted;
                has_face[i as usize] = true;
            }
        }
        self.vertex_normals = sums
            .iter()
            .zip(&has_face)
            .map(|(s, &h)| {
                let norm = s.norm();
                if h && norm > 1e-300 {
                    s / norm
                } else {
                    Vector3::zeros()
                }
            })
            .collect();

        self.avg_edge_length = if self.edges.is_empty() {
            None
        } else {
            let total: f64 = self
                .edges
                .iter()
                .map(|&(u, v)| (self.vertices[v as usize] - self.vertices[u as usize]).norm())
                .sum();
            Some(total / self.edges.len() as f64)
        };
    }

    #[must_use]
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    #[must_use]
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    #[must_use]
    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    #[must_use]
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Unique undirected edges as sorted (low, high) index pairs.
    #[must_use]
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Cached face centroids, indexed by face.
    #[must_use]
    pub fn face_centroids(&self) -> &[Point3<f64>] {
        &self.face_centroids
    }

    /// Cached unit face normals; entries for degenerate faces are zero.
    #[must_use]
    pub fn face_normals(&self) -> &[Vector3<f64>] {
        &self.face_normals
    }

    /// Cached face areas (zero for degenerate faces).
    #[must_use]
    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    /// Cached unit vertex normals; entries without a defined normal are zero.
    #[must_use]
    pub fn vertex_normals(&self) -> &[Vector3<f64>] {
        &self.vertex_normals
    }

    fn check_face(&self, face: usize) -> Result<(), MeshError> {
        if face >= self.faces.len() {
            Err(MeshError::NoSuchFace(face, self.faces.len()))
        } else {
            Ok(())
        }
    }

    /// Whether the face has zero area. Errors if the index is out of range.
    pub fn face_is_degenerate(&self, face: usize) -> Result<bool, MeshError> {
        self.check_face(face)?;
        Ok(self.face_degenerate[face])
    }

    /// Arithmetic mean of the three corner positions.
    pub fn face_centroid(&self, face: usize) -> Result<Point3<f64>, MeshError> {
        self.check_face(face)?;
        Ok(self.face_centroids[face])
    }

    /// Unit normal from the face winding. Errors for degenerate faces.
    pub fn face_normal(&self, face: usize) -> Result<Vector3<f64>, MeshError> {
        self.check_face(face)?;
        if self.face_degenerate[face] {
            return Err(MeshError::DegenerateFace(face));
        }
        Ok(self.face_normals[face])
    }

    /// Triangle area (half the cross-product norm).
    pub fn face_area(&self, face: usize) -> Result<f64, MeshError> {
        self.check_face(face)?;
        Ok(self.face_areas[face])
    }

    /// Area-weighted unit normal over the vertex's non-degenerate faces.
    pub fn vertex_normal(&self, vertex: usize) -> Result<Vector3<f64>, MeshError> {
        if vertex >= self.vertices.len() {
            return Err(MeshError::NoSuchVertex(vertex, self.vertices.len()));
        }
        if self.vertex_normals[vertex] == Vector3::zeros() {
            let touches_any = self
                .faces
                .iter()
                .enumerate()
                .any(|(f, idx)| !self.face_degenerate[f] && idx.contains(&(vertex as u32)));
            return Err(if touches_any {
                MeshError::DegenerateVertexNormal(vertex)
            } else {
                MeshError::IsolatedVertex(vertex)
            });
        }
        Ok(self.vertex_normals[vertex])
    }

    /// Mean length of the unique undirected edges.
    pub fn average_edge_length(&self) -> Result<f64, MeshError> {
        self.avg_edge_length.ok_or(MeshError::NoEdges)
    }
}

/// Precomputed connectivity lookups for a fixed mesh.
///
/// All neighbor lists are sorted ascending and duplicate-free, which makes
/// iteration order (and therefore every downstream computation) reproducible.
#[derive(Debug, Clone)]
pub struct Adjacency {
    vertex_to_faces: Vec<Vec<u32>>,
    vertex_to_vertices: Vec<Vec<u32>>,
    face_to_faces: Vec<Vec<u32>>,
}

impl Adjacency {
    /// Builds vertex-to-face, vertex-to-vertex, and shared-vertex
    /// face-to-face adjacency in one pass over the faces.
    #[must_use]
    pub fn build(mesh: &Mesh) -> Self {
        let n_vertices = mesh.n_vertices();
        let mut vertex_to_faces: Vec<Vec<u32>> = vec![Vec::new(); n_vertices];
        let mut vertex_to_vertices: Vec<Vec<u32>> = vec![Vec::new(); n_vertices];

        for (f, &[a, b, c]) in mesh.faces().iter().enumerate() {
            // Faces are visited in ascending order, so these lists end up
            // sorted without an extra pass; a valid face never repeats a
            // vertex, so they are also duplicate-free.
            for i in [a, b, c] {
                vertex_to_faces[i as usize].push(f as u32);
            }
            for (u, v) in [(a, b), (b, c), (c, a)] {
                vertex_to_vertices[u as usize].push(v);
                vertex_to_vertices[v as usize].push(u);
            }
        }
        for list in &mut vertex_to_vertices {
            list.sort_unstable();
            list.dedup();
        }

        let mut face_to_faces: Vec<Vec<u32>> = vec![Vec::new(); mesh.n_faces()];
        for (f, &[a, b, c]) in mesh.faces().iter().enumerate() {
            let list = &mut face_to_faces[f];
            for i in [a, b, c] {
                list.extend(
                    vertex_to_faces[i as usize]
                        .iter()
                        .copied()
                        .filter(|&g| g != f as u32),
                );
            }
            list.sort_unstable();
            list.dedup();
        }

        Self {
            vertex_to_faces,
            vertex_to_vertices,
            face_to_faces,
        }
    }

    /// Faces incident to the vertex, ascending.
    #[must_use]
    pub fn vertex_faces(&self, vertex: usize) -> &[u32] {
        &self.vertex_to_faces[vertex]
    }

    /// Vertices sharing an edge with the vertex, ascending.
    #[must_use]
    pub fn vertex_vertices(&self, vertex: usize) -> &[u32] {
        &self.vertex_to_vertices[vertex]
    }

    /// Faces sharing at least one vertex with the face, ascending,
    /// excluding the face itself.
    #[must_use]
    pub fn face_faces(&self, face: usize) -> &[u32] {
        &self.face_to_faces[face]
    }
}
