//! Face patches and rotation-invariant descriptors.
//!
//! A patch is a face together with its `n` nearest topological neighbors.
//! Its descriptor is the list of patch normals expressed in a canonical
//! orientation: a single rotation takes the patch's area-weighted mean
//! normal onto the alignment target `a_c` and simultaneously pins the
//! residual spin around `a_c`, so that any rigid motion of the input mesh
//! produces the same descriptor values. Components are mapped from [-1, 1]
//! to [0, 1] because the network decodes through a sigmoid.
//!
//! Canonicalization happens in two conceptual steps that are composed into
//! the one stored rotation:
//!
//! 1. the minimal rotation taking the unit mean normal onto `a_c`;
//! 2. a turn about `a_c` that brings the first member centroid offset
//!    (projected into the plane orthogonal to `a_c`) onto a fixed reference
//!    direction derived from `a_c` alone.
//!
//! Step 2 exists because step 1 leaves one degree of freedom free: two
//! copies of the same patch rotated against each other around their mean
//! normal would otherwise produce different descriptors. With both steps
//! the map is fully invariant, which the tests check directly.

use crate::mesh::{Adjacency, Mesh};
use nalgebra::{Point3, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

/// Patch-level errors.
#[derive(Debug, Error)]
pub enum PatchError {
    /// Ring expansion exhausted the connected component before finding
    /// enough members.
    #[error("face {face}: found {found} patch candidates, need {needed}")]
    InsufficientNeighbors { face: u32, needed: usize, found: usize },
    /// The area-weighted normals cancel, so no alignment exists.
    #[error("face {face}: area-weighted mean normal is degenerate")]
    DegenerateMeanNormal { face: u32 },
    /// The alignment target must be a nonzero vector.
    #[error("alignment target is a zero vector")]
    ZeroAlignmentTarget,
    /// Decoded values collapse to (a numerical) zero vector.
    #[error("decoded center normal has vanishing norm")]
    ZeroVector,
    /// The network output is too short to contain a center normal.
    #[error("descriptor output has {got} values, need at least 3")]
    TooShort { got: usize },
}

/// A face and its sorted topological neighborhood.
///
/// All per-face arrays are ordered center first, then members sorted by
/// ascending centroid distance (ties by ascending face index).
#[derive(Debug, Clone)]
pub struct Patch {
    /// The face this patch describes.
    pub center_face: u32,
    /// Neighboring faces, nearest first; `members.len() == n`.
    pub member_faces: Vec<u32>,
    /// Unit face normals, center first (`n + 1` entries). Degenerate center
    /// faces contribute a zero normal.
    pub normals: Vec<Vector3<f64>>,
    /// Face areas, center first.
    pub areas: Vec<f64>,
    /// Face centroids, center first.
    pub centroids: Vec<Point3<f64>>,
}

impl Patch {
    /// Area-weighted mean of the patch normals, `(1/N) * sum A_i n_i`.
    #[must_use]
    pub fn area_weighted_mean_normal(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self
            .normals
            .iter()
            .zip(&self.areas)
            .map(|(n, &a)| n * a)
            .sum();
        sum / self.normals.len() as f64
    }
}

/// The canonical rotation for one patch, stored as a unit axis and an angle
/// in [0, pi]. Applying it to the patch's unit mean normal yields `a_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchAlignment {
    pub axis: Vector3<f64>,
    pub angle: f64,
}

/// A patch descriptor: canonically oriented normals flattened to
/// `3 * (n + 1)` values in [0, 1], plus the rotation that produced them.
#[derive(Debug, Clone)]
pub struct PatchDescriptor {
    pub values: Vec<f64>,
    pub alignment: PatchAlignment,
    pub center_face: u32,
}

/// Collects the patch of `face`: its `n` nearest neighbors by centroid
/// distance among breadth-first rings of the shared-vertex adjacency.
///
/// Rings are expanded until at least `n` candidates exist (or the component
/// is exhausted), then all candidates are sorted by squared centroid
/// distance with face index as the tie-breaker and truncated to `n`.
/// Degenerate faces conduct the expansion but are never collected.
pub fn build_patch(mesh: &Mesh, adj: &Adjacency, face: u32, n: usize) -> Result<Patch, PatchError> {
    let center = mesh.face_centroids()[face as usize];
    let mut visited = vec![false; mesh.n_faces()];
    visited[face as usize] = true;
    let mut frontier = vec![face];
    let mut candidates: Vec<u32> = Vec::new();

    while candidates.len() < n && !frontier.is_empty() {
        let mut next = Vec::new();
        for &f in &frontier {
            for &g in adj.face_faces(f as usize) {
                if !visited[g as usize] {
                    visited[g as usize] = true;
                    next.push(g);
                    if !mesh.face_is_degenerate(g as usize).expect("index in range") {
                        candidates.push(g);
                    }
                }
            }
        }
        frontier = next;
    }

    if candidates.len() < n {
        return Err(PatchError::InsufficientNeighbors {
            face,
            needed: n,
            found: candidates.len(),
        });
    }

    let centroids = mesh.face_centroids();
    candidates.sort_unstable_by(|&a, &b| {
        let da = (centroids[a as usize] - center).norm_squared();
        let db = (centroids[b as usize] - center).norm_squared();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    candidates.truncate(n);

    let mut faces = Vec::with_capacity(n + 1);
    faces.push(face);
    faces.extend(&candidates);
    Ok(Patch {
        center_face: face,
        member_faces: candidates,
        normals: faces.iter().map(|&f| mesh.face_normals()[f as usize]).collect(),
        areas: faces.iter().map(|&f| mesh.face_areas()[f as usize]).collect(),
        centroids: faces.iter().map(|&f| centroids[f as usize]).collect(),
    })
}

/// The minimal rotation taking unit vector `from` onto unit vector `to`.
///
/// Antipodal inputs rotate by pi about a deterministic axis orthogonal to
/// `to`; identical inputs yield the identity.
fn minimal_rotation(from: &Vector3<f64>, to: &Vector3<f64>) -> UnitQuaternion<f64> {
    let dot = from.dot(to).clamp(-1.0, 1.0);
    if dot >= 1.0 - 1e-14 {
        return UnitQuaternion::identity();
    }
    if dot <= -1.0 + 1e-14 {
        let (e1, _) = orthonormal_frame(to);
        return UnitQuaternion::from_axis_angle(&Unit::new_normalize(e1), std::f64::consts::PI);
    }
    let axis = Unit::new_normalize(from.cross(to));
    UnitQuaternion::from_axis_angle(&axis, dot.acos())
}

/// A deterministic right-handed frame (e1, e2, a) for unit vector `a`:
/// e1 is the coordinate axis of smallest |component| projected orthogonal
/// to `a`, and e2 completes the triad.
fn orthonormal_frame(a: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let abs = a.map(f64::abs);
    let pick = if abs.x <= abs.y && abs.x <= abs.z {
        Vector3::x()
    } else if abs.y <= abs.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = (pick - a * a.dot(&pick)).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

/// Computes the canonical alignment rotation for a patch.
///
/// The rotation maps the patch's unit area-weighted mean normal onto `a_c`
/// (within 1e-6) and fixes the spin around `a_c` from the first member
/// centroid whose offset does not collapse onto the mean-normal axis.
pub fn compute_alignment(patch: &Patch, a_c: &Vector3<f64>) -> Result<PatchAlignment, PatchError> {
    let target_norm = a_c.norm();
    if target_norm <= 1e-12 {
        return Err(PatchError::ZeroAlignmentTarget);
    }
    let target = a_c / target_norm;

    let m = patch.area_weighted_mean_normal();
    let mean_area = patch.areas.iter().sum::<f64>() / patch.areas.len().max(1) as f64;
    let m_norm = m.norm();
    // Relative to the mean area so the test is scale-invariant.
    if m_norm <= 1e-12 * mean_area || mean_area == 0.0 {
        return Err(PatchError::DegenerateMeanNormal {
            face: patch.center_face,
        });
    }
    let m_hat = m / m_norm;

    let base = minimal_rotation(&m_hat, &target);

    // Pin the residual spin about the target: rotate the first usable member
    // offset and measure its angle in the fixed (e1, e2) plane.
    let (e1, e2) = orthonormal_frame(&target);
    let mut rotation = base;
    for k in 1..patch.centroids.len() {
        let offset = patch.centroids[k] - patch.centroids[0];
        let rotated = base * offset;
        let (px, py) = (rotated.dot(&e1), rotated.dot(&e2));
        let in_plane = (px * px + py * py).sqrt();
        if in_plane > 1e-9 * offset.norm() {
            let spin = py.atan2(px);
            let untwist =
                UnitQuaternion::from_axis_angle(&Unit::new_unchecked(target), -spin);
            rotation = untwist * base;
            break;
        }
    }

    Ok(match rotation.axis_angle() {
        Some((axis, angle)) => PatchAlignment {
            axis: axis.into_inner(),
            angle,
        },
        None => PatchAlignment {
            axis: Vector3::x(),
            angle: 0.0,
        },
    })
}

/// Applies the alignment rotation (or its inverse) to each vector using the
/// Rodrigues formula `v cos + (k x v) sin + k (k . v)(1 - cos)`.
#[must_use]
pub fn rotate_vectors(
    vectors: &[Vector3<f64>],
    alignment: &PatchAlignment,
    inverse: bool,
) -> Vec<Vector3<f64>> {
    let angle = if inverse { -alignment.angle } else { alignment.angle };
    let (sin, cos) = angle.sin_cos();
    let k = alignment.axis;
    vectors
        .iter()
        .map(|v| v * cos + k.cross(v) * sin + k * (k.dot(v) * (1.0 - cos)))
        .collect()
}

/// Rotates the given normals by the alignment and flattens them to
/// descriptor values: each component mapped by `(x + 1) / 2` and clamped to
/// [0, 1]. Layout is one face after another, center first.
#[must_use]
pub fn encode_values(normals: &[Vector3<f64>], alignment: &PatchAlignment) -> Vec<f64> {
    let rotated = rotate_vectors(normals, alignment, false);
    let mut values = Vec::with_capacity(3 * rotated.len());
    for v in &rotated {
        for x in [v.x, v.y, v.z] {
            values.push(((x + 1.0) / 2.0).clamp(0.0, 1.0));
        }
    }
    values
}

/// Encodes the patch as a rotation-invariant descriptor of length
/// `3 * (n + 1)`.
pub fn encode_descriptor(patch: &Patch, a_c: &Vector3<f64>) -> Result<PatchDescriptor, PatchError> {
    let alignment = compute_alignment(patch, a_c)?;
    Ok(PatchDescriptor {
        values: encode_values(&patch.normals, &alignment),
        alignment,
        center_face: patch.center_face,
    })
}

/// Recovers a world-frame unit center normal from network output values.
///
/// The first three values are mapped back from [0, 1] to [-1, 1],
/// normalized, and rotated by the inverse alignment.
pub fn decode_center_normal(
    values: &[f64],
    alignment: &PatchAlignment,
) -> Result<Vector3<f64>, PatchError> {
    if values.len() < 3 {
        return Err(PatchError::TooShort { got: values.len() });
    }
    let raw = Vector3::new(
        2.0 * values[0] - 1.0,
        2.0 * values[1] - 1.0,
        2.0 * values[2] - 1.0,
    );
    let norm = raw.norm();
    if norm <= 1e-12 {
        return Err(PatchError::ZeroVector);
    }
    let aligned = raw / norm;
    Ok(rotate_vectors(&[aligned], alignment, true)[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::shapes;
    use approx::assert_relative_eq;

    fn random_unit(rng: &mut SeededRng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.uniform_symmetric(),
                rng.uniform_symmetric(),
                rng.uniform_symmetric(),
            );
            let norm = v.norm();
            if norm > 1e-3 && norm <= 1.0 {
                return v / norm;
            }
        }
    }

    fn random_rotation(rng: &mut SeededRng) -> UnitQuaternion<f64> {
        let axis = Unit::new_normalize(random_unit(rng));
        UnitQuaternion::from_axis_angle(&axis, rng.uniform() * std::f64::consts::TAU)
    }

    /// A synthetic patch with mildly perturbed +z-ish normals and centroids
    /// scattered in the z = 0-ish plane. Asymmetric by construction.
    fn synthetic_patch(rng: &mut SeededRng, n: usize) -> Patch {
        let center = Point3::new(0.1, -0.2, 0.05);
        let mut normals = Vec::with_capacity(n + 1);
        let mut areas = Vec::with_capacity(n + 1);
        let mut centroids = Vec::with_capacity(n + 1);
        centroids.push(center);
        normals.push(
            (Vector3::z() + Vector3::new(rng.uniform_symmetric(), rng.uniform_symmetric(), 0.0) * 0.3)
                .normalize(),
        );
        areas.push(0.4 + rng.uniform());
        for k in 0..n {
            let angle = (k as f64 + rng.uniform() * 0.5) * 1.1;
            let radius = 0.5 + 0.3 * rng.uniform();
            centroids.push(Point3::new(
                center.x + radius * angle.cos(),
                center.y + radius * angle.sin(),
                center.z + 0.1 * rng.uniform_symmetric(),
            ));
            normals.push(
                (Vector3::z()
                    + Vector3::new(rng.uniform_symmetric(), rng.uniform_symmetric(), 0.0) * 0.4)
                    .normalize(),
            );
            areas.push(0.3 + rng.uniform());
        }
        Patch {
            center_face: 0,
            member_faces: (1..=n as u32).collect(),
            normals,
            areas,
            centroids,
        }
    }

    /// Applies a rigid motion (rotation plus translation) to the patch.
    fn transform_patch(patch: &Patch, q: &UnitQuaternion<f64>, t: &Vector3<f64>) -> Patch {
        Patch {
            center_face: patch.center_face,
            member_faces: patch.member_faces.clone(),
            normals: patch.normals.iter().map(|n| q * n).collect(),
            areas: patch.areas.clone(),
            centroids: patch
                .centroids
                .iter()
                .map(|c| Point3::from(q * c.coords + t))
                .collect(),
        }
    }

    #[test]
    fn minimal_rotation_oracle_cases() {
        let z = Vector3::z();
        // x-hat to z-hat: quarter turn about -y.
        let q = minimal_rotation(&Vector3::x(), &z);
        let (axis, angle) = q.axis_angle().unwrap();
        assert_relative_eq!(axis.into_inner(), Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-14);
        assert_relative_eq!(angle, std::f64::consts::FRAC_PI_2, epsilon = 1e-14);
        // Identity case.
        assert!(minimal_rotation(&z, &z).axis_angle().is_none());
        // Antipodal case: half turn about an axis orthogonal to the target.
        let q = minimal_rotation(&-z, &z);
        let (axis, angle) = q.axis_angle().unwrap();
        assert_relative_eq!(angle, std::f64::consts::PI, epsilon = 1e-14);
        assert!(axis.into_inner().dot(&z).abs() < 1e-14);
        assert_relative_eq!(q * -z, z, epsilon = 1e-14);
    }

    #[test]
    fn alignment_maps_mean_normal_to_target() {
        let mut rng = SeededRng::new(101);
        let a_c = Vector3::z();
        for _ in 0..50 {
            let patch = synthetic_patch(&mut rng, 8);
            let alignment = compute_alignment(&patch, &a_c).unwrap();
            assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&alignment.angle));
            assert_relative_eq!(alignment.axis.norm(), 1.0, epsilon = 1e-12);
            let m_hat = patch.area_weighted_mean_normal().normalize();
            let mapped = rotate_vectors(&[m_hat], &alignment, false)[0];
            assert!((mapped - a_c).norm() < 1e-6, "mean normal missed target");
        }
    }

    #[test]
    fn descriptor_is_rigid_motion_invariant() {
        let mut rng = SeededRng::new(77);
        let a_c = Vector3::z();
        for round in 0..40 {
            let patch = synthetic_patch(&mut rng, 10);
            let reference = encode_descriptor(&patch, &a_c).unwrap();
            let q = random_rotation(&mut rng);
            let t = random_unit(&mut rng) * (10.0 * rng.uniform());
            let moved = transform_patch(&patch, &q, &t);
            let transformed = encode_descriptor(&moved, &a_c).unwrap();
            let worst = reference
                .values
                .iter()
                .zip(&transformed.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-9, "round {round}: max deviation {worst}");
        }
    }

    #[test]
    fn descriptor_is_scale_invariant() {
        let mut rng = SeededRng::new(88);
        let a_c = Vector3::z();
        let patch = synthetic_patch(&mut rng, 12);
        let reference = encode_descriptor(&patch, &a_c).unwrap();
        for scale in [0.1, 10.0] {
            let scaled = Patch {
                center_face: patch.center_face,
                member_faces: patch.member_faces.clone(),
                normals: patch.normals.clone(),
                areas: patch.areas.iter().map(|a| a * scale * scale).collect(),
                centroids: patch.centroids.iter().map(|c| Point3::from(c.coords * scale)).collect(),
            };
            let got = encode_descriptor(&scaled, &a_c).unwrap();
            let worst = reference
                .values
                .iter()
                .zip(&got.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-12, "scale {scale}: max deviation {worst}");
        }
    }

    #[test]
    fn flat_patch_descriptor_is_half_half_one() {
        // Every normal equals the target, so aligned normals stay (0,0,1)
        // and each face contributes the triple (0.5, 0.5, 1.0).
        let mut rng = SeededRng::new(5);
        let mut patch = synthetic_patch(&mut rng, 6);
        for n in &mut patch.normals {
            *n = Vector3::z();
        }
        let descriptor = encode_descriptor(&patch, &Vector3::z()).unwrap();
        assert_eq!(descriptor.values.len(), 3 * 7);
        for chunk in descriptor.values.chunks(3) {
            assert_relative_eq!(chunk[0], 0.5, epsilon = 1e-12);
            assert_relative_eq!(chunk[1], 0.5, epsilon = 1e-12);
            assert_relative_eq!(chunk[2], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn encode_decode_recovers_center_normal() {
        let mut rng = SeededRng::new(31);
        for _ in 0..20 {
            let patch = synthetic_patch(&mut rng, 8);
            let descriptor = encode_descriptor(&patch, &Vector3::z()).unwrap();
            let decoded = decode_center_normal(&descriptor.values, &descriptor.alignment).unwrap();
            assert!((decoded - patch.normals[0]).norm() < 1e-9);
        }
    }

    #[test]
    fn decode_rejects_degenerate_input() {
        let alignment = PatchAlignment {
            axis: Vector3::x(),
            angle: 0.0,
        };
        assert!(matches!(
            decode_center_normal(&[0.5, 0.5], &alignment),
            Err(PatchError::TooShort { got: 2 })
        ));
        assert!(matches!(
            decode_center_normal(&[0.5, 0.5, 0.5], &alignment),
            Err(PatchError::ZeroVector)
        ));
    }

    #[test]
    fn rotate_vectors_preserves_norms_and_inverts() {
        let mut rng = SeededRng::new(13);
        for _ in 0..100 {
            let alignment = PatchAlignment {
                axis: random_unit(&mut rng),
                angle: rng.uniform() * std::f64::consts::PI,
            };
            let vectors: Vec<_> = (0..5).map(|_| random_unit(&mut rng) * (2.0 * rng.uniform())).collect();
            let rotated = rotate_vectors(&vectors, &alignment, false);
            for (v, r) in vectors.iter().zip(&rotated) {
                assert!((v.norm() - r.norm()).abs() < 1e-9);
            }
            let back = rotate_vectors(&rotated, &alignment, true);
            for (v, b) in vectors.iter().zip(&back) {
                assert!((v - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn build_patch_orders_members_by_distance() {
        let mesh = shapes::wavy_sphere(2, 0.04);
        let adj = Adjacency::build(&mesh);
        let patch = build_patch(&mesh, &adj, 17, 20).unwrap();
        assert_eq!(patch.member_faces.len(), 20);
        assert_eq!(patch.normals.len(), 21);
        assert_eq!(patch.areas.len(), 21);
        assert_eq!(patch.centroids.len(), 21);
        let center = mesh.face_centroids()[17];
        let mut previous = 0.0;
        for &f in &patch.member_faces {
            let d = (mesh.face_centroids()[f as usize] - center).norm_squared();
            assert!(d >= previous, "members not sorted by distance");
            previous = d;
        }
        let mut unique = patch.member_faces.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), 20);
        assert!(!patch.member_faces.contains(&17));
    }

    #[test]
    fn build_patch_exhausted_component_errors() {
        let mesh = shapes::triangle_fan(5);
        let adj = Adjacency::build(&mesh);
        let err = build_patch(&mesh, &adj, 0, 10);
        assert!(matches!(
            err,
            Err(PatchError::InsufficientNeighbors { face: 0, needed: 10, found: 4 })
        ));
    }

    #[test]
    fn build_patch_skips_degenerate_members() {
        use nalgebra::Point3 as P;
        // Fan around vertex 0 where one blade is collapsed to a line.
        let mesh = crate::mesh::Mesh::new(
            vec![
                P::new(0.0, 0.0, 0.0),
                P::new(1.0, 0.0, 0.0),
                P::new(0.0, 1.0, 0.0),
                P::new(-1.0, 0.0, 0.0),
                P::new(-2.0, 0.0, 0.0), // collinear with 0 and 3
                P::new(0.0, -1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 5, 1]],
        )
        .unwrap();
        assert!(mesh.face_is_degenerate(2).unwrap());
        let adj = Adjacency::build(&mesh);
        let patch = build_patch(&mesh, &adj, 0, 2).unwrap();
        assert!(!patch.member_faces.contains(&2));
    }

    #[test]
    fn mean_normal_cancellation_is_reported() {
        let patch = Patch {
            center_face: 9,
            member_faces: vec![1],
            normals: vec![Vector3::z(), -Vector3::z()],
            areas: vec![1.0, 1.0],
            centroids: vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)],
        };
        assert!(matches!(
            compute_alignment(&patch, &Vector3::z()),
            Err(PatchError::DegenerateMeanNormal { face: 9 })
        ));
    }

    #[test]
    fn zero_alignment_target_is_rejected() {
        let mut rng = SeededRng::new(3);
        let patch = synthetic_patch(&mut rng, 4);
        assert!(matches!(
            compute_alignment(&patch, &Vector3::zeros()),
            Err(PatchError::ZeroAlignmentTarget)
        ));
    }
}
