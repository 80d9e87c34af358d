//! Learning-based denoising for triangle meshes.
//!
//! The library takes a noisy triangle mesh, describes the neighborhood of
//! every face as a rotation-invariant patch descriptor, maps each descriptor
//! through a trained conditional variational autoencoder to recover a clean
//! face normal, optionally sharpens the normal field with a few bilateral
//! iterations, and finally moves the vertices to match the filtered normals.
//!
//! The crate is organized bottom-up:
//!
//! - [`mesh`] / [`io`]: indexed triangle meshes, derived quantities
//!   (centroids, normals, areas, adjacency), and OBJ/OFF parsing.
//! - [`shapes`]: procedural test shapes (spheres, cuboids, tori, grids).
//! - [`noise`]: seeded Gaussian displacement along vertex normals.
//! - [`patch`]: face patches, alignment rotations, and descriptor encoding.
//! - [`cluster`]: k-means over descriptors; cluster ids condition the network.
//! - [`neural`]: the conditional VAE and a plain autoencoder baseline, with
//!   hand-written gradients and Adam.
//! - [`filter`]: bilateral normal filtering and normal-driven vertex updates.
//! - [`metrics`]: one-sided surface distance and normal angle error.
//! - [`model`]: binary serialization of trained bundles and training sets.
//! - [`pipeline`]: end-to-end training set construction, denoising, and a
//!   thread-scaling benchmark harness.
//!
//! Every randomized stage draws from [`rng::SeededRng`], so a fixed seed and
//! fixed inputs reproduce results bitwise, independent of thread count.

pub mod cluster;
pub mod filter;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod noise;
pub mod patch;
pub mod pipeline;
pub mod rng;
pub mod shapes;
