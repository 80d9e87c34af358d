//! Quantitative comparison of a reconstructed mesh against a reference.
//!
//! Two complementary measurements: [`one_sided_distance`] averages, over
//! the reconstructed vertices, the exact distance to the closest point of
//! the reference surface (any vertex, edge, or interior point of any
//! triangle); [`normal_angle_alpha`] averages the per-face angle between
//! corresponding normals and therefore requires identical connectivity.
//! [`export_error_colormap`] renders per-vertex errors as a vertex-colored
//! OFF file plus a raw CSV for downstream plotting.
//!
//! Distance queries are exact in both search routes: small references are
//! scanned exhaustively, large ones through a bounding-volume hierarchy
//! that prunes but never approximates.

mod bvh;

use crate::mesh::{Mesh, MeshError};
use bvh::{Bvh, RefFace};
use rayon::prelude::*;
use thiserror::Error;

/// Reference face count above which queries go through the BVH.
const BVH_THRESHOLD: usize = 10_000;

/// Number of histogram bins for [`AlphaReport`]; each bin spans 5 degrees
/// of the [0, 180] range.
pub const ALPHA_HISTOGRAM_BINS: usize = 36;

/// Errors for mesh comparison.
#[derive(Debug, Error)]
pub enum MetricsError {
    /// A mesh has no faces (or the query mesh no vertices).
    #[error("comparison requires non-empty meshes")]
    EmptyMesh,
    /// Face lists differ, so per-face normals cannot be paired.
    #[error("meshes must share connectivity: {0}")]
    ConnectivityMismatch(String),
    /// A per-vertex value list does not match the vertex count.
    #[error("expected {expected} per-vertex values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    /// A mesh query failed.
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Distances from reconstructed vertices to the reference surface.
#[derive(Debug, Clone)]
pub struct DistanceReport {
    /// Mean of the per-vertex distances.
    pub mean: f64,
    /// Largest per-vertex distance.
    pub max: f64,
    /// One distance per reconstructed vertex, in vertex order.
    pub per_vertex: Vec<f64>,
}

/// Per-face normal deviation in degrees.
#[derive(Debug, Clone)]
pub struct AlphaReport {
    /// Mean of the per-face angles.
    pub mean_deg: f64,
    /// One angle per face, in [0, 180], in face order.
    pub per_face_deg: Vec<f64>,
    /// Counts of per-face angles in [`ALPHA_HISTOGRAM_BINS`] 5-degree bins.
    pub histogram: Vec<usize>,
}

/// Vertex-colored OFF text plus the raw values as CSV.
#[derive(Debug, Clone)]
pub struct ColormapExport {
    /// COFF file: per-vertex RGBA, blue at the minimum error, red at the
    /// maximum, linear in between.
    pub coff: String,
    /// `vertex_index,distance` rows with a header line.
    pub csv: String,
}

/// How the per-query face search runs; both produce identical distances.
#[derive(Clone, Copy, PartialEq, Eq)]
enum SearchStrategy {
    Exhaustive,
    Bvh,
}

fn reference_faces(reference: &Mesh) -> Result<Vec<RefFace>, MetricsError> {
    (0..reference.n_faces())
        .map(|i| {
            let [a, b, c] = reference.faces()[i];
            Ok(RefFace {
                a: reference.vertices()[a as usize],
                b: reference.vertices()[b as usize],
                c: reference.vertices()[c as usize],
                degenerate: reference.face_is_degenerate(i)?,
            })
        })
        .collect()
}

fn distances_with(
    reconstructed: &Mesh,
    reference: &Mesh,
    strategy: SearchStrategy,
) -> Result<Vec<f64>, MetricsError> {
    if reconstructed.n_vertices() == 0 || reference.n_faces() == 0 {
        return Err(MetricsError::EmptyMesh);
    }
    let faces = reference_faces(reference)?;
    let bvh = match strategy {
        SearchStrategy::Bvh => Some(Bvh::build(&faces)),
        SearchStrategy::Exhaustive => None,
    };
    Ok(reconstructed
        .vertices()
        .par_iter()
        .map(|p| {
            let d2 = match &bvh {
                Some(tree) => tree.distance_squared(p, &faces),
                None => faces
                    .iter()
                    .map(|f| f.distance_squared(p))
                    .fold(f64::INFINITY, f64::min),
            };
            d2.sqrt()
        })
        .collect())
}

/// Mean (and per-vertex) distance from each reconstructed vertex to the
/// closest point of the reference surface.
///
/// The measure is one-sided: reference vertices are not compared against
/// the reconstruction. Identical meshes score exactly zero, and applying
/// one rigid motion to both meshes leaves the result unchanged up to
/// floating-point roundoff.
pub fn one_sided_distance(
    reconstructed: &Mesh,
    reference: &Mesh,
) -> Result<DistanceReport, MetricsError> {
    let strategy = if reference.n_faces() > BVH_THRESHOLD {
        SearchStrategy::Bvh
    } else {
        SearchStrategy::Exhaustive
    };
    let per_vertex = distances_with(reconstructed, reference, strategy)?;
    let mean = per_vertex.iter().sum::<f64>() / per_vertex.len() as f64;
    let max = per_vertex.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(DistanceReport {
        mean,
        max,
        per_vertex,
    })
}

/// Mean per-face angle in degrees between corresponding normals.
///
/// Both meshes must list exactly the same face index triples; the angle
/// for face i is `arccos(clamp(<n_rec, n_ref>, -1, 1))`. The measure is
/// symmetric in its arguments.
pub fn normal_angle_alpha(
    reconstructed: &Mesh,
    reference: &Mesh,
) -> Result<AlphaReport, MetricsError> {
    if reconstructed.n_faces() == 0 {
        return Err(MetricsError::EmptyMesh);
    }
    if reconstructed.n_faces() != reference.n_faces() {
        return Err(MetricsError::ConnectivityMismatch(format!(
            "{} faces vs {}",
            reconstructed.n_faces(),
            reference.n_faces()
        )));
    }
    if reconstructed.faces() != reference.faces() {
        return Err(MetricsError::ConnectivityMismatch(
            "face index triples differ".into(),
        ));
    }

    let mut per_face_deg = Vec::with_capacity(reconstructed.n_faces());
    for i in 0..reconstructed.n_faces() {
        let n_rec = reconstructed.face_normal(i)?;
        let n_ref = reference.face_normal(i)?;
        // atan2(|cross|, dot) is the arccos of the clamped dot product,
        // evaluated so that identical normals give exactly zero and
        // opposite normals exactly pi; acos(dot) would turn the one-ulp
        // error of a stored unit normal into a spurious angle.
        let angle = n_rec
            .cross(&n_ref)
            .norm()
            .atan2(n_rec.dot(&n_ref))
            .to_degrees();
        per_face_deg.push(angle);
    }
    let mean_deg = per_face_deg.iter().sum::<f64>() / per_face_deg.len() as f64;

    let mut histogram = vec![0usize; ALPHA_HISTOGRAM_BINS];
    let bin_width = 180.0 / ALPHA_HISTOGRAM_BINS as f64;
    for &angle in &per_face_deg {
        let bin = ((angle / bin_width) as usize).min(ALPHA_HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    Ok(AlphaReport {
        mean_deg,
        per_face_deg,
        histogram,
    })
}

/// Renders per-vertex error values onto the mesh as vertex colors.
///
/// The COFF output colors each vertex by linear interpolation from blue
/// (minimum value) to red (maximum value); a constant value list renders
/// all blue. The CSV lists the raw values for external tooling.
pub fn export_error_colormap(
    mesh: &Mesh,
    per_vertex: &[f64],
) -> Result<ColormapExport, MetricsError> {
    if per_vertex.len() != mesh.n_vertices() {
        return Err(MetricsError::LengthMismatch {
            expected: mesh.n_vertices(),
            got: per_vertex.len(),
        });
    }
    let lo = per_vertex.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = per_vertex.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let range = hi - lo;

    let mut coff = String::new();
    coff.push_str("COFF\n");
    coff.push_str(&format!(
        "{} {} {}\n",
        mesh.n_vertices(),
        mesh.n_faces(),
        mesh.edges().len()
    ));
    for (v, &value) in mesh.vertices().iter().zip(per_vertex) {
        let t = if range > 0.0 { (value - lo) / range } else { 0.0 };
        coff.push_str(&format!(
            "{} {} {} {} 0 {} 1\n",
            v.x,
            v.y,
            v.z,
            t,
            1.0 - t
        ));
    }
    for f in mesh.faces() {
        coff.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }

    let mut csv = String::from("vertex_index,distance\n");
    for (i, value) in per_vertex.iter().enumerate() {
        csv.push_str(&format!("{i},{value}\n"));
    }
    Ok(ColormapExport { coff, csv })
}
