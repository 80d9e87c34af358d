//! Synthetic noise for clean meshes.
//!
//! Corrupts a mesh by displacing every vertex along its area-weighted unit
//! normal by `mu * L + beta * L * z`, where `L` is the mesh's mean edge
//! length, `z` a standard normal draw, and (`mu`, `beta`) the offset and
//! spread in mean-edge-length units. Scaling the displacement by `L` makes
//! the corruption level comparable across meshes of different tessellation
//! density. Vertices are processed in index order with a fixed per-spec
//! seed, so the same call is reproducible bit for bit.

use crate::mesh::{Mesh, MeshError};
use crate::rng::SeededRng;
use thiserror::Error;

/// Gaussian displacement parameters in mean-edge-length units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Constant offset along the vertex normal, as a fraction of the mean
    /// edge length. Zero for unbiased noise; nonzero models scanner bias.
    pub mu: f64,
    /// Standard deviation of the displacement as a fraction of the mean
    /// edge length. Must be non-negative.
    pub beta: f64,
    /// Seed for the displacement stream.
    pub seed: u64,
}

impl NoiseSpec {
    /// Unbiased Gaussian noise of the given spread.
    #[must_use]
    pub fn gaussian(beta: f64, seed: u64) -> Self {
        Self { mu: 0.0, beta, seed }
    }

    /// Offset Gaussian noise, for depth-camera-like corruption.
    #[must_use]
    pub fn offset_gaussian(mu: f64, beta: f64, seed: u64) -> Self {
        Self { mu, beta, seed }
    }
}

/// Errors from noise synthesis.
#[derive(Debug, Error)]
pub enum NoiseError {
    /// `beta` was negative.
    #[error("noise spread beta must be non-negative, got {0}")]
    NegativeBeta(f64),
    /// The mesh lacks the derived quantities the displacement needs
    /// (mean edge length, or a normal for every vertex).
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Returns a copy of the mesh with noisy vertex positions.
///
/// Every vertex must have a well-defined normal; meshes with isolated
/// vertices or vertices touching only degenerate faces are rejected so that
/// corruption never silently skips part of the surface. Draws exactly two
/// raw words per vertex, in vertex index order.
pub fn add_gaussian_noise(mesh: &Mesh, spec: &NoiseSpec) -> Result<Mesh, NoiseError> {
    if spec.beta < 0.0 {
        return Err(NoiseError::NegativeBeta(spec.beta));
    }
    let scale = mesh.average_edge_length()?;
    for v in 0..mesh.n_vertices() {
        mesh.vertex_normal(v)?;
    }

    let mut rng = SeededRng::new(spec.seed);
    let normals = mesh.vertex_normals();
    let vertices = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(v, position)| {
            let displacement = spec.mu * scale + spec.beta * scale * rng.standard_normal();
            position + normals[v] * displacement
        })
        .collect();
    Ok(mesh.with_vertices(vertices)?)
}
