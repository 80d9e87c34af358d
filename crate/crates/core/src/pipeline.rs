//! End-to-end orchestration: training-set construction, model training,
//! denoising, and the benchmark harness.
//!
//! Denoising runs in four stages, each timed separately: descriptor
//! extraction, per-face network inference, bilateral filtering, and the
//! vertex update. The per-face stages are parallel maps over face indices
//! with read-only shared state; every face writes only its own output
//! slot, so the result is independent of the thread count, and one thread
//! is the baseline that any pool size must match bitwise.
//!
//! Training-set construction pairs each noisy patch descriptor with the
//! clean normals of the same faces encoded under the noisy patch's
//! alignment, and labels it by its nearest cluster centroid. Per-mesh
//! noise seeds are derived from the base seed and the mesh index, so one
//! seed pins the whole corpus.

use crate::cluster::{assign_label, kmeans_fit, ClusterError, KmeansOptions};
use crate::filter::{
    bilateral_filter, update_vertices, BilateralConfig, FilterError, Sigma1Mode,
    VertexUpdateConfig,
};
use crate::mesh::{Adjacency, Mesh, MeshError};
use crate::model::{ModelBundle, ModelError, NetworkKind, Provenance, TrainingSet};
use crate::neural::ae::{infer_ae, train_ae_with_widths};
use crate::neural::cvae::{infer_cvae, train_cvae, NetworkShape};
use crate::neural::{NeuralError, TrainConfig, TrainReport, TrainingPair};
use crate::noise::{add_gaussian_noise, NoiseError, NoiseSpec};
use crate::patch::{
    build_patch, decode_center_normal, encode_descriptor, encode_values, PatchDescriptor,
    PatchError,
};
use crate::rng::SeededRng;
use nalgebra::Vector3;
use ndarray::Array2;
use rayon::prelude::*;
use std::time::Instant;
use thiserror::Error;

/// Full single-thread denoise of a 100k-face mesh on the reference
/// workstation, in seconds. Benchmark output prints it next to measured
/// totals for orientation.
pub const REFERENCE_100K_FACES_SECONDS: f64 = 0.9872;

/// Pipeline-level errors; module errors pass through unchanged.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    /// The runtime configuration disagrees with the one the model was
    /// trained for on a parameter baked into the weights.
    #[error("configuration does not match the model: {0}")]
    ConfigMismatch(String),
    /// No meshes, or meshes without a single usable patch.
    #[error("training input produced no training pairs")]
    EmptyTrainingInput,
    #[error("thread pool construction failed: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Worker count for the parallel stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    /// One worker per available core.
    All,
    /// Exactly this many workers; must be at least 1.
    Count(usize),
}

impl Default for Threads {
    fn default() -> Self {
        Threads::All
    }
}

impl Threads {
    /// Builds a dedicated pool; stages run inside it so the ambient
    /// global pool never influences results or timings.
    pub(crate) fn build_pool(self) -> Result<rayon::ThreadPool, PipelineError> {
        let workers = match self {
            Threads::All => 0,
            Threads::Count(0) => {
                return Err(PipelineError::InvalidConfig(
                    "thread count must be at least 1".into(),
                ))
            }
            Threads::Count(n) => n,
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| PipelineError::ThreadPool(e.to_string()))
    }
}

/// All knobs of the denoising pass.
///
/// The first three fields are structural: the model is trained for one
/// patch size, cluster count, and alignment target, and
/// [`denoise_mesh`] rejects a config that disagrees with the bundle on
/// any of them. The remaining fields tune the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseConfig {
    /// Patch size `n`; descriptors have `3 * (n + 1)` values.
    pub patch_size: usize,
    /// Cluster count `K`, the width of the one-hot label.
    pub clusters: usize,
    /// Canonical alignment target `a_c`, a unit vector.
    pub alignment_target: Vector3<f64>,
    /// Bilateral iterations after inference. Zero skips the filter.
    pub bilateral_iterations: usize,
    /// Vertex-update iterations. Zero keeps the input vertices.
    pub vertex_update_iterations: usize,
    /// Range scale of the bilateral normal-difference weight.
    pub sigma2: f64,
    /// Spatial-scale convention of the bilateral filter.
    pub sigma1_mode: Sigma1Mode,
    /// Worker count; not part of the model, never serialized.
    pub threads: Threads,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            patch_size: 20,
            clusters: 200,
            alignment_target: Vector3::z(),
            bilateral_iterations: 1,
            vertex_update_iterations: 20,
            sigma2: 0.15,
            sigma1_mode: Sigma1Mode::default(),
            threads: Threads::All,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.patch_size == 0 {
            return Err(PipelineError::InvalidConfig(
                "patch_size must be at least 1".into(),
            ));
        }
        if self.clusters == 0 {
            return Err(PipelineError::InvalidConfig(
                "clusters must be at least 1".into(),
            ));
        }
        if (self.alignment_target.norm() - 1.0).abs() > 1e-9 {
            return Err(PipelineError::InvalidConfig(
                "alignment_target must be a unit vector".into(),
            ));
        }
        if !self.sigma2.is_finite() || self.sigma2 <= 0.0 {
            return Err(PipelineError::InvalidConfig(
                "sigma2 must be finite and positive".into(),
            ));
        }
        if let Threads::Count(0) = self.threads {
            return Err(PipelineError::InvalidConfig(
                "thread count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Settings for [`build_training_set`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSetOptions {
    /// Base noise; mesh `i` is corrupted with a seed derived from
    /// `(noise.seed, i)`, so distinct meshes get independent noise.
    pub noise: NoiseSpec,
    pub patch_size: usize,
    pub clusters: usize,
    pub alignment_target: Vector3<f64>,
    /// Seed of the k-means fit on the noisy descriptors.
    pub cluster_seed: u64,
    /// Lloyd iteration cap of that fit.
    pub kmeans_iterations: usize,
    pub threads: Threads,
}

impl Default for TrainingSetOptions {
    fn default() -> Self {
        Self {
            noise: NoiseSpec {
                mu: 0.0,
                beta: 0.2,
                seed: 0,
            },
            patch_size: 20,
            clusters: 200,
            alignment_target: Vector3::z(),
            cluster_seed: 0,
            kmeans_iterations: 100,
            threads: Threads::All,
        }
    }
}

impl TrainingSetOptions {
    fn validate(&self) -> Result<(), PipelineError> {
        if self.patch_size == 0 {
            return Err(PipelineError::InvalidConfig(
                "patch_size must be at least 1".into(),
            ));
        }
        if self.clusters == 0 {
            return Err(PipelineError::InvalidConfig(
                "clusters must be at least 1".into(),
            ));
        }
        if (self.alignment_target.norm() - 1.0).abs() > 1e-9 {
            return Err(PipelineError::InvalidConfig(
                "alignment_target must be a unit vector".into(),
            ));
        }
        if self.kmeans_iterations == 0 {
            return Err(PipelineError::InvalidConfig(
                "kmeans_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Corrupts each mesh, pairs every noisy descriptor with its clean
/// counterpart, and clusters the noisy descriptors.
///
/// Every face of every mesh yields exactly one pair: the noisy patch
/// descriptor as input and the clean normals of the same faces, encoded
/// with the noisy patch's alignment, as target. The noisy normals define
/// the rotation; the clean ones only follow it. A face without enough
/// neighbors is an error here (training data must be adequate), unlike
/// during denoising where such faces fall back to their input normal.
pub fn build_training_set(
    meshes: &[Mesh],
    options: &TrainingSetOptions,
) -> Result<TrainingSet, PipelineError> {
    options.validate()?;
    if meshes.is_empty() {
        return Err(PipelineError::EmptyTrainingInput);
    }
    let pool = options.threads.build_pool()?;
    let dim = 3 * (options.patch_size + 1);

    let mut descriptor_rows: Vec<f64> = Vec::new();
    let mut raw_pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();

    for (index, clean) in meshes.iter().enumerate() {
        let spec = NoiseSpec {
            mu: options.noise.mu,
            beta: options.noise.beta,
            seed: SeededRng::derive(options.noise.seed, index as u64).next_u64(),
        };
        let noisy = add_gaussian_noise(clean, &spec)?;
        let adj = Adjacency::build(&noisy);
        let clean_normals = clean.face_normals();

        let per_face: Vec<Result<(Vec<f64>, Vec<f64>), PatchError>> = pool.install(|| {
            (0..noisy.n_faces() as u32)
                .into_par_iter()
                .map(|face| {
                    let patch = build_patch(&noisy, &adj, face, options.patch_size)?;
                    let descriptor = encode_descriptor(&patch, &options.alignment_target)?;
                    let mut normals = Vec::with_capacity(patch.member_faces.len() + 1);
                    normals.push(clean_normals[face as usize]);
                    for &member in &patch.member_faces {
                        normals.push(clean_normals[member as usize]);
                    }
                    let x_clean = encode_values(&normals, &descriptor.alignment);
                    Ok((descriptor.values, x_clean))
                })
                .collect()
        });
        for entry in per_face {
            let (x_noisy, x_clean) = entry?;
            descriptor_rows.extend_from_slice(&x_noisy);
            raw_pairs.push((x_noisy, x_clean));
        }
    }
    if raw_pairs.is_empty() {
        return Err(PipelineError::EmptyTrainingInput);
    }

    let data = Array2::from_shape_vec((raw_pairs.len(), dim), descriptor_rows)
        .expect("every row has descriptor length");
    let cluster = kmeans_fit(
        data.view(),
        KmeansOptions {
            k: options.clusters,
            seed: options.cluster_seed,
            max_iterations: options.kmeans_iterations,
        },
    )?;

    let pairs = raw_pairs
        .into_iter()
        .map(|(x_noisy, x_clean)| {
            let label = assign_label(&cluster, &x_noisy)?;
            Ok(TrainingPair {
                x_noisy,
                x_clean,
                label: label as u32,
            })
        })
        .collect::<Result<Vec<_>, ClusterError>>()?;

    Ok(TrainingSet {
        patch_size: options.patch_size,
        alignment_target: options.alignment_target,
        noise: options.noise,
        cluster,
        pairs,
    })
}

fn bundle_from(
    set: &TrainingSet,
    network: NetworkKind,
    report: &TrainReport,
    cfg: &TrainConfig,
) -> ModelBundle {
    ModelBundle {
        config: DenoiseConfig {
            patch_size: set.patch_size,
            clusters: set.cluster.k(),
            alignment_target: set.alignment_target,
            ..DenoiseConfig::default()
        },
        cluster: set.cluster.clone(),
        network,
        provenance: Provenance {
            noise: set.noise,
            epochs: report.epochs.len() as u32,
            training_seed: cfg.seed,
            final_train_loss: report.final_train_loss().unwrap_or(f64::NAN),
            final_holdout_loss: report.final_holdout_loss(),
        },
    }
}

/// Trains the conditional VAE on a training set and wraps the result in
/// a ready-to-save bundle whose config snapshot records the structural
/// parameters (patch size, clusters, alignment target) of the set.
pub fn train_model(
    set: &TrainingSet,
    shape: &NetworkShape,
    cfg: &TrainConfig,
) -> Result<(ModelBundle, TrainReport), PipelineError> {
    let (params, report) = train_cvae(&set.pairs, set.cluster.k(), shape, cfg)?;
    let bundle = bundle_from(set, NetworkKind::Cvae(params), &report, cfg);
    Ok((bundle, report))
}

/// Trains the autoencoder baseline instead of the conditional VAE.
pub fn train_model_ae(
    set: &TrainingSet,
    widths: [usize; 5],
    cfg: &TrainConfig,
) -> Result<(ModelBundle, TrainReport), PipelineError> {
    let (params, report) = train_ae_with_widths(&set.pairs, widths, cfg)?;
    let bundle = bundle_from(set, NetworkKind::Ae(params), &report, cfg);
    Ok((bundle, report))
}

/// Wall-clock seconds per denoising stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    /// Adjacency construction plus patch building and encoding.
    pub descriptor_seconds: f64,
    /// Label assignment, network forward pass, and normal decoding.
    pub inference_seconds: f64,
    pub bilateral_seconds: f64,
    pub vertex_update_seconds: f64,
}

impl StageTimings {
    #[must_use]
    pub fn total_seconds(&self) -> f64 {
        self.descriptor_seconds
            + self.inference_seconds
            + self.bilateral_seconds
            + self.vertex_update_seconds
    }
}

/// Result of a denoising pass.
#[derive(Debug, Clone)]
pub struct DenoiseOutcome {
    pub mesh: Mesh,
    /// The filtered normals the vertex update ran against, in face order.
    pub normals: Vec<Vector3<f64>>,
    pub timings: StageTimings,
    /// Faces that kept their input normal because no patch could be
    /// built or inference failed. Zero on well-formed meshes.
    pub skipped_faces: usize,
}

/// Denoises a mesh with a trained bundle: per-face descriptor encoding
/// and network inference, bilateral fine-tuning, then vertex updates.
///
/// The output mesh has the input's exact connectivity. Faces without a
/// usable patch keep their input normal and are counted in the outcome
/// (and logged); the pass never aborts over individual faces. The
/// result is bitwise independent of `cfg.threads`.
pub fn denoise_mesh(
    mesh: &Mesh,
    bundle: &ModelBundle,
    cfg: &DenoiseConfig,
) -> Result<DenoiseOutcome, PipelineError> {
    cfg.validate()?;
    bundle.validate()?;
    let trained = &bundle.config;
    if cfg.patch_size != trained.patch_size {
        return Err(PipelineError::ConfigMismatch(format!(
            "patch size {} requested, model was trained with {}",
            cfg.patch_size, trained.patch_size
        )));
    }
    if cfg.clusters != trained.clusters {
        return Err(PipelineError::ConfigMismatch(format!(
            "{} clusters requested, model was trained with {}",
            cfg.clusters, trained.clusters
        )));
    }
    if cfg.alignment_target != trained.alignment_target {
        return Err(PipelineError::ConfigMismatch(format!(
            "alignment target {:?} requested, model was trained with {:?}",
            cfg.alignment_target, trained.alignment_target
        )));
    }

    let pool = cfg.threads.build_pool()?;

    let start = Instant::now();
    let adj = Adjacency::build(mesh);
    let descriptors: Vec<Option<PatchDescriptor>> = pool.install(|| {
        (0..mesh.n_faces() as u32)
            .into_par_iter()
            .map(|face| {
                let patch = build_patch(mesh, &adj, face, cfg.patch_size).ok()?;
                encode_descriptor(&patch, &cfg.alignment_target).ok()
            })
            .collect()
    });
    let descriptor_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let inferred: Vec<Option<Vector3<f64>>> = pool.install(|| {
        descriptors
            .par_iter()
            .map(|slot| {
                let descriptor = slot.as_ref()?;
                let label = assign_label(&bundle.cluster, &descriptor.values).ok()?;
                let output = match &bundle.network {
                    NetworkKind::Cvae(p) => infer_cvae(p, &descriptor.values, label).ok()?,
                    NetworkKind::Ae(p) => infer_ae(p, &descriptor.values).ok()?,
                };
                decode_center_normal(&output, &descriptor.alignment).ok()
            })
            .collect()
    });
    let input_normals = mesh.face_normals();
    let mut normals = Vec::with_capacity(inferred.len());
    let mut skipped_faces = 0usize;
    for (face, slot) in inferred.into_iter().enumerate() {
        match slot {
            Some(n) => normals.push(n),
            None => {
                skipped_faces += 1;
                normals.push(input_normals[face]);
            }
        }
    }
    let inference_seconds = start.elapsed().as_secs_f64();
    if skipped_faces > 0 {
        log::warn!(
            "{skipped_faces} of {} faces kept their input normal (unusable patch or failed inference)",
            mesh.n_faces()
        );
    }

    let start = Instant::now();
    let bilateral_cfg = BilateralConfig {
        sigma2: cfg.sigma2,
        iterations: cfg.bilateral_iterations,
        patch_size: cfg.patch_size,
        sigma1_mode: cfg.sigma1_mode,
    };
    let normals = pool.install(|| bilateral_filter(mesh, &adj, &normals, &bilateral_cfg))?;
    let bilateral_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let update_cfg = VertexUpdateConfig {
        iterations: cfg.vertex_update_iterations,
    };
    let denoised = pool.install(|| update_vertices(mesh, &adj, &normals, &update_cfg))?;
    let vertex_update_seconds = start.elapsed().as_secs_f64();

    Ok(DenoiseOutcome {
        mesh: denoised,
        normals,
        timings: StageTimings {
            descriptor_seconds,
            inference_seconds,
            bilateral_seconds,
            vertex_update_seconds,
        },
        skipped_faces,
    })
}

/// Benchmark protocol: which pool sizes to test and how often.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkOptions {
    /// Worker counts to measure, each run `repetitions` times.
    pub thread_counts: Vec<usize>,
    pub repetitions: usize,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            thread_counts: vec![1, 2, 4, 8],
            repetitions: 20,
        }
    }
}

/// One timed sample of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub stage: &'static str,
    pub threads: usize,
    pub repetition: usize,
    pub seconds: f64,
}

/// Distribution of one stage's samples at one thread count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

/// All samples of a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub records: Vec<BenchmarkRecord>,
    /// Whether every thread count produced bitwise-identical vertices
    /// and normals.
    pub identical_across_threads: bool,
}

/// Stage names in execution order; `to_csv` and the stats helpers use
/// these plus `"total"`.
pub const BENCHMARK_STAGES: [&str; 4] = ["descriptor", "inference", "bilateral", "vertex_update"];

impl BenchmarkReport {
    /// Renders all records as CSV with the header
    /// `stage,threads,repetition,seconds`.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,threads,repetition,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.stage, r.threads, r.repetition, r.seconds
            ));
        }
        out
    }

    /// Sample distribution of one stage at one thread count, or `None`
    /// if no such samples exist.
    #[must_use]
    pub fn stage_stats(&self, stage: &str, threads: usize) -> Option<SummaryStats> {
        let mut samples: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.stage == stage && r.threads == threads)
            .map(|r| r.seconds)
            .collect();
        if samples.is_empty() {
            return None;
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let median = if n % 2 == 1 {
            samples[n / 2]
        } else {
            0.5 * (samples[n / 2 - 1] + samples[n / 2])
        };
        Some(SummaryStats {
            min: samples[0],
            mean: samples.iter().sum::<f64>() / n as f64,
            median,
            max: samples[n - 1],
        })
    }

    /// Mean-time ratio `baseline_threads / threads` for one stage;
    /// greater than 1 means the larger pool was faster.
    #[must_use]
    pub fn speedup(&self, stage: &str, baseline_threads: usize, threads: usize) -> Option<f64> {
        let base = self.stage_stats(stage, baseline_threads)?;
        let other = self.stage_stats(stage, threads)?;
        Some(base.mean / other.mean)
    }
}

/// Bit patterns of everything denoising outputs, for cross-thread
/// identity checks.
fn outcome_bits(outcome: &DenoiseOutcome) -> Vec<u64> {
    let mut bits =
        Vec::with_capacity(3 * (outcome.mesh.n_vertices() + outcome.normals.len()));
    for v in outcome.mesh.vertices() {
        bits.extend([v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]);
    }
    for n in &outcome.normals {
        bits.extend([n.x.to_bits(), n.y.to_bits(), n.z.to_bits()]);
    }
    bits
}

/// Times the full denoising pass per stage, thread count, and
/// repetition, and verifies that every setting produces the same output
/// bits.
pub fn benchmark(
    mesh: &Mesh,
    bundle: &ModelBundle,
    cfg: &DenoiseConfig,
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport, PipelineError> {
    if options.thread_counts.is_empty() || options.repetitions == 0 {
        return Err(PipelineError::InvalidConfig(
            "benchmark needs at least one thread count and one repetition".into(),
        ));
    }
    let mut records = Vec::new();
    let mut reference_bits: Option<Vec<u64>> = None;
    let mut identical = true;

    for &threads in &options.thread_counts {
        let run_cfg = DenoiseConfig {
            threads: Threads::Count(threads),
            ..*cfg
        };
        for repetition in 0..options.repetitions {
            let outcome = denoise_mesh(mesh, bundle, &run_cfg)?;
            let t = &outcome.timings;
            for (stage, seconds) in [
                ("descriptor", t.descriptor_seconds),
                ("inference", t.inference_seconds),
                ("bilateral", t.bilateral_seconds),
                ("vertex_update", t.vertex_update_seconds),
                ("total", t.total_seconds()),
            ] {
                records.push(BenchmarkRecord {
                    stage,
                    threads,
                    repetition,
                    seconds,
                });
            }
            if repetition == 0 {
                let bits = outcome_bits(&outcome);
                match &reference_bits {
                    None => reference_bits = Some(bits),
                    Some(reference) => identical &= *reference == bits,
                }
            }
        }
    }
    Ok(BenchmarkReport {
        records,
        identical_across_threads: identical,
    })
}
