//! Procedural test shapes.
//!
//! Closed manifolds (cube, icosphere, cylinder, torus) for training corpora
//! and benchmarks, plus open surfaces (planar grid, triangle fan) for edge
//! cases. All generators are deterministic: the same arguments produce the
//! same mesh bit for bit. Windings are consistently counter-clockwise seen
//! from outside, so face normals point outward (or toward +z for the flat
//! shapes).

use crate::mesh::Mesh;
use nalgebra::{Point3, Vector3};
use std::collections::HashMap;
use std::f64::consts::TAU;

/// Interns bitwise-identical positions so shared boundary vertices between
/// generated grids collapse to a single mesh vertex.
struct VertexInterner {
    positions: Vec<Point3<f64>>,
    index: HashMap<[u64; 3], u32>,
}

impl VertexInterner {
    fn new() -> Self {
        Self {
            positions: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, p: Point3<f64>) -> u32 {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        *self.index.entry(key).or_insert_with(|| {
            self.positions.push(p);
            (self.positions.len() - 1) as u32
        })
    }
}

/// Unit cube [0,1]^3 as 12 triangles with outward normals.
#[must_use]
pub fn unit_cube() -> Mesh {
    let vertices = vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(1.0, 1.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
        Point3::new(1.0, 0.0, 1.0),
        Point3::new(1.0, 1.0, 1.0),
        Point3::new(0.0, 1.0, 1.0),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [3, 7, 6],
        [3, 6, 2],
        [1, 2, 6],
        [1, 6, 5],
        [0, 4, 7],
        [0, 7, 3],
    ];
    Mesh::new(vertices, faces).expect("cube indices are valid")
}

/// Unit cube [0,1]^3 with every side split into `n` x `n` quads,
/// giving `12 n^2` triangles. Panics if `n == 0`.
#[must_use]
pub fn cuboid(n: u32) -> Mesh {
    assert!(n > 0, "cuboid requires n > 0");
    let mut interner = VertexInterner::new();
    let mut faces = Vec::with_capacity((12 * n * n) as usize);
    let step = |i: u32| f64::from(i) / f64::from(n);

    // Each side maps grid coordinates (u, v) to a point so that the local
    // u-then-v cross product points outward.
    type SideFn = fn(f64, f64) -> Point3<f64>;
    let sides: [SideFn; 6] = [
        |u, v| Point3::new(v, u, 0.0), // bottom, -z
        |u, v| Point3::new(u, v, 1.0), // top, +z
        |u, v| Point3::new(u, 0.0, v), // front, -y
        |u, v| Point3::new(v, 1.0, u), // back, +y
        |u, v| Point3::new(0.0, v, u), // left, -x
        |u, v| Point3::new(1.0, u, v), // right, +x
    ];

    for side in sides {
        for i in 0..n {
            for j in 0..n {
                let a = interner.intern(side(step(i), step(j)));
                let b = interner.intern(side(step(i + 1), step(j)));
                let c = interner.intern(side(step(i + 1), step(j + 1)));
                let d = interner.intern(side(step(i), step(j + 1)));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
    }
    Mesh::new(interner.positions, faces).expect("cuboid indices are valid")
}

/// Unit sphere built by subdividing an icosahedron `subdivisions` times,
/// giving `20 * 4^subdivisions` triangles.
#[must_use]
pub fn icosphere(subdivisions: u32) -> Mesh {
    let t = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
    .collect();

    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let mut mid = |u: u32, v: u32| -> u32 {
                let key = (u.min(v), u.max(v));
                *midpoint.entry(key).or_insert_with(|| {
                    let m = (vertices[u as usize].coords + vertices[v as usize].coords) / 2.0;
                    vertices.push(Point3::from(m.normalize()));
                    (vertices.len() - 1) as u32
                })
            };
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces).expect("icosphere indices are valid")
}

/// Icosphere with a smooth, symmetry-breaking radial modulation of the given
/// amplitude. Useful where exact mesh symmetries would create distance ties.
#[must_use]
pub fn wavy_sphere(subdivisions: u32, amplitude: f64) -> Mesh {
    let base = icosphere(subdivisions);
    let vertices = base
        .vertices()
        .iter()
        .map(|v| {
            let d = v.coords;
            let f = (3.0 * d.x + 1.3).sin() * (2.0 * d.y - 0.7).cos() * (5.0 * d.z + 0.2).cos();
            Point3::from(d * (1.0 + amplitude * f))
        })
        .collect();
    base.with_vertices(vertices).expect("same vertex count")
}

/// Closed cylinder of the given radius and height along +z, with `segments`
/// faces around and `stacks` rows up the side, plus fan caps:
/// `2 * segments * stacks + 2 * segments` triangles.
/// Panics if `segments < 3` or `stacks == 0`.
#[must_use]
pub fn cylinder(segments: u32, stacks: u32, radius: f64, height: f64) -> Mesh {
    assert!(segments >= 3, "cylinder requires at least 3 segments");
    assert!(stacks > 0, "cylinder requires at least 1 stack");
    let mut vertices = Vec::new();
    let ring = |i: u32| {
        let angle = TAU * f64::from(i % segments) / f64::from(segments);
        (radius * angle.cos(), radius * angle.sin())
    };
    for j in 0..=stacks {
        let z = height * f64::from(j) / f64::from(stacks);
        for i in 0..segments {
            let (x, y) = ring(i);
            vertices.push(Point3::new(x, y, z));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, 0.0));
    let top_center = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, height));

    let at = |i: u32, j: u32| j * segments + (i % segments);
    let mut faces = Vec::new();
    for j in 0..stacks {
        for i in 0..segments {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for i in 0..segments {
        faces.push([bottom_center, at(i + 1, 0), at(i, 0)]);
        faces.push([top_center, at(i, stacks), at(i + 1, stacks)]);
    }
    Mesh::new(vertices, faces).expect("cylinder indices are valid")
}

/// Torus with `major_segments` around the main ring and `minor_segments`
/// around the tube: `2 * major_segments * minor_segments` triangles.
/// Panics if either segment count is below 3.
#[must_use]
pub fn torus(major_segments: u32, minor_segments: u32, major_radius: f64, minor_radius: f64) -> Mesh {
    assert!(major_segments >= 3 && minor_segments >= 3, "torus requires >= 3 segments");
    let mut vertices = Vec::with_capacity((major_segments * minor_segments) as usize);
    for i in 0..major_segments {
        let theta = TAU * f64::from(i) / f64::from(major_segments);
        for j in 0..minor_segments {
            let phi = TAU * f64::from(j) / f64::from(minor_segments);
            let rim = major_radius + minor_radius * phi.cos();
            vertices.push(Point3::new(
                rim * theta.cos(),
                rim * theta.sin(),
                minor_radius * phi.sin(),
            ));
        }
    }
    let at = |i: u32, j: u32| (i % major_segments) * minor_segments + (j % minor_segments);
    let mut faces = Vec::with_capacity((2 * major_segments * minor_segments) as usize);
    for i in 0..major_segments {
        for j in 0..minor_segments {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(vertices, faces).expect("torus indices are valid")
}

/// Planar grid over [0,1]^2 at z = 0 with `nx` x `ny` quads
/// (`2 * nx * ny` triangles) and normals along +z.
/// Panics if either count is zero.
#[must_use]
pub fn plane_grid(nx: u32, ny: u32) -> Mesh {
    assert!(nx > 0 && ny > 0, "plane_grid requires nx, ny > 0");
    let mut vertices = Vec::with_capacity(((nx + 1) * (ny + 1)) as usize);
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point3::new(
                f64::from(i) / f64::from(nx),
                f64::from(j) / f64::from(ny),
                0.0,
            ));
        }
    }
    let at = |i: u32, j: u32| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity((2 * nx * ny) as usize);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(vertices, faces).expect("grid indices are valid")
}

/// Flat disc of `n` triangles sharing a center vertex, normals along +z.
/// Panics if `n < 3`.
#[must_use]
pub fn triangle_fan(n: u32) -> Mesh {
    assert!(n >= 3, "triangle_fan requires at least 3 triangles");
    let mut vertices = vec![Point3::new(0.0, 0.0, 0.0)];
    for k in 0..n {
        let angle = TAU * f64::from(k) / f64::from(n);
        vertices.push(Point3::new(angle.cos(), angle.sin(), 0.0));
    }
    let faces = (0..n).map(|k| [0, 1 + k, 1 + (k + 1) % n]).collect();
    Mesh::new(vertices, faces).expect("fan indices are valid")
}
