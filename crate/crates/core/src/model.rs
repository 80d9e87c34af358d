//! Binary serialization of trained models and training sets.
//!
//! Both artifacts share one container format: an 8-byte magic, a u32
//! format version, then tagged sections, each a u32 tag, a u64 payload
//! length, and the payload. All integers and floats are little-endian;
//! floats are raw IEEE 754 bits, so a save/load round trip reproduces
//! every weight bit for bit on any platform.
//!
//! A model bundle carries everything denoising needs: the configuration
//! snapshot it was trained for, the cluster centroids, the network
//! parameters (either architecture), and training provenance. A training
//! set carries encoded pairs plus the clustering and the noise settings
//! that produced them, so training can resume from the file alone.
//!
//! Unknown versions, unknown tags, duplicate or missing sections, and
//! any truncation are rejected; readers never guess.

use crate::cluster::ClusterModel;
use crate::filter::Sigma1Mode;
use crate::neural::ae::AeParams;
use crate::neural::cvae::{CvaeParams, NetworkShape};
use crate::neural::{Activation, TrainingPair};
use crate::noise::NoiseSpec;
use crate::pipeline::{DenoiseConfig, Threads};
use nalgebra::Vector3;
use ndarray::{Array1, Array2};
use thiserror::Error;

const MODEL_MAGIC: &[u8; 8] = b"MDNMODEL";
const TRAINSET_MAGIC: &[u8; 8] = b"MDNTRSET";
const FORMAT_VERSION: u32 = 1;

const TAG_CONFIG: u32 = 1;
const TAG_CLUSTER: u32 = 2;
const TAG_CVAE: u32 = 3;
const TAG_AE: u32 = 4;
const TAG_PROVENANCE: u32 = 5;
const TAG_TRAINCFG: u32 = 6;
const TAG_PAIRS: u32 = 7;

/// Errors for model and training-set files.
#[derive(Debug, Error)]
pub enum ModelError {
    /// Structurally invalid bytes: wrong magic, truncation, bad section
    /// framing, or inconsistent shapes.
    #[error("corrupt model data: {0}")]
    CorruptModel(String),
    /// The file declares a format version this build does not read.
    #[error("unsupported format version {found} (this build reads {supported})")]
    VersionMismatch { found: u32, supported: u32 },
}

/// Network parameters of either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkKind {
    Cvae(CvaeParams),
    Ae(AeParams),
}

impl NetworkKind {
    /// Descriptor length the network consumes and produces.
    #[must_use]
    pub fn input_dim(&self) -> usize {
        match self {
            NetworkKind::Cvae(p) => p.input_dim,
            NetworkKind::Ae(p) => p.input_dim,
        }
    }
}

/// How a bundle's network was trained, kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    /// Noise that corrupted the training meshes.
    pub noise: NoiseSpec,
    /// Epochs actually run.
    pub epochs: u32,
    /// Seed of the training run (weight init, shuffling, sampling).
    pub training_seed: u64,
    /// Training loss of the final epoch.
    pub final_train_loss: f64,
    /// Holdout loss of the final epoch, when a holdout split existed.
    pub final_holdout_loss: Option<f64>,
}

/// A trained model plus everything needed to apply it consistently.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    /// Configuration snapshot; denoising rejects configs that disagree on
    /// patch size, cluster count, or alignment target.
    pub config: DenoiseConfig,
    pub cluster: ClusterModel,
    pub network: NetworkKind,
    pub provenance: Provenance,
}

impl ModelBundle {
    /// Checks that the configuration snapshot matches the parameter
    /// shapes: descriptor length `3 * (n + 1)` must equal the network
    /// input and the cluster dimension, the label width must equal the
    /// cluster count, and all layer shapes must chain correctly.
    pub fn validate(&self) -> Result<(), ModelError> {
        let cfg = &self.config;
        if cfg.patch_size == 0 || cfg.clusters == 0 {
            return Err(ModelError::CorruptModel(
                "patch_size and clusters must be at least 1".into(),
            ));
        }
        if (cfg.alignment_target.norm() - 1.0).abs() > 1e-9 {
            return Err(ModelError::CorruptModel(
                "alignment target must be a unit vector".into(),
            ));
        }
        if !cfg.sigma2.is_finite() || cfg.sigma2 <= 0.0 {
            return Err(ModelError::CorruptModel("sigma2 must be positive".into()));
        }
        let descriptor_len = 3 * (cfg.patch_size + 1);
        if self.network.input_dim() != descriptor_len {
            return Err(ModelError::CorruptModel(format!(
                "network input {} does not match descriptor length {descriptor_len}",
                self.network.input_dim()
            )));
        }
        if self.cluster.dim() != descriptor_len {
            return Err(ModelError::CorruptModel(format!(
                "cluster dimension {} does not match descriptor length {descriptor_len}",
                self.cluster.dim()
            )));
        }
        if self.cluster.k() != cfg.clusters {
            return Err(ModelError::CorruptModel(format!(
                "cluster model has k={} but config says {}",
                self.cluster.k(),
                cfg.clusters
            )));
        }
        match &self.network {
            NetworkKind::Cvae(p) => validate_cvae_shapes(p, cfg.clusters),
            NetworkKind::Ae(p) => validate_ae_shapes(p),
        }
    }
}

fn validate_cvae_shapes(p: &CvaeParams, clusters: usize) -> Result<(), ModelError> {
    if p.label_dim != clusters {
        return Err(ModelError::CorruptModel(format!(
            "label width {} does not match cluster count {clusters}",
            p.label_dim
        )));
    }
    if !(p.keep_ratio > 0.0 && p.keep_ratio <= 1.0) {
        return Err(ModelError::CorruptModel("keep_ratio outside (0, 1]".into()));
    }
    let s = &p.shape;
    let expect = [
        (p.w_e1.dim(), (p.label_dim + p.input_dim, s.encoder1), "w_e1"),
        (p.w_e2.dim(), (s.encoder1, s.encoder2), "w_e2"),
        (p.w_e3.dim(), (s.encoder2, 2 * s.latent), "w_e3"),
        (p.w_d1.dim(), (p.label_dim + s.latent, s.decoder1), "w_d1"),
        (p.w_d2.dim(), (s.decoder1, s.decoder2), "w_d2"),
        (p.w_out.dim(), (s.decoder2, p.input_dim), "w_out"),
    ];
    for (got, want, name) in expect {
        if got != want {
            return Err(ModelError::CorruptModel(format!(
                "{name} has shape {got:?}, expected {want:?}"
            )));
        }
    }
    let biases = [
        (p.b_e1.len(), s.encoder1, "b_e1"),
        (p.b_e2.len(), s.encoder2, "b_e2"),
        (p.b_e3.len(), 2 * s.latent, "b_e3"),
        (p.b_d1.len(), s.decoder1, "b_d1"),
        (p.b_d2.len(), s.decoder2, "b_d2"),
        (p.b_out.len(), p.input_dim, "b_out"),
    ];
    for (got, want, name) in biases {
        if got != want {
            return Err(ModelError::CorruptModel(format!(
                "{name} has length {got}, expected {want}"
            )));
        }
    }
    Ok(())
}

fn validate_ae_shapes(p: &AeParams) -> Result<(), ModelError> {
    if !(p.keep_ratio > 0.0 && p.keep_ratio <= 1.0) {
        return Err(ModelError::CorruptModel("keep_ratio outside (0, 1]".into()));
    }
    if p.weights.len() != 6 || p.biases.len() != 6 {
        return Err(ModelError::CorruptModel(format!(
            "expected 6 layers, found {} weights and {} biases",
            p.weights.len(),
            p.biases.len()
        )));
    }
    let mut dims = Vec::with_capacity(7);
    dims.push(p.input_dim);
    dims.extend_from_slice(&p.widths);
    dims.push(p.input_dim);
    for layer in 0..6 {
        let want = (dims[layer], dims[layer + 1]);
        if p.weights[layer].dim() != want {
            return Err(ModelError::CorruptModel(format!(
                "layer {layer} weight has shape {:?}, expected {want:?}",
                p.weights[layer].dim()
            )));
        }
        if p.biases[layer].len() != dims[layer + 1] {
            return Err(ModelError::CorruptModel(format!(
                "layer {layer} bias has length {}, expected {}",
                p.biases[layer].len(),
                dims[layer + 1]
            )));
        }
    }
    Ok(())
}

/// Everything a training run consumes, as written by trainset building.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    /// Patch size the descriptors were built with.
    pub patch_size: usize,
    /// Alignment target the descriptors were encoded against.
    pub alignment_target: Vector3<f64>,
    /// Noise that produced the noisy half of each pair.
    pub noise: NoiseSpec,
    /// Clustering fitted on the noisy descriptors; labels in `pairs`
    /// index into it.
    pub cluster: ClusterModel,
    pub pairs: Vec<TrainingPair>,
}

// ---------------------------------------------------------------------
// Byte-level writer and reader

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize_as_u32(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension fits in u32"));
    }

    /// Writes a section: tag, then the payload produced by `fill`,
    /// preceded by its byte length.
    fn section(&mut self, tag: u32, fill: impl FnOnce(&mut Self)) {
        self.u32(tag);
        let len_at = self.buf.len();
        self.u64(0);
        let start = self.buf.len();
        fill(self);
        let len = (self.buf.len() - start) as u64;
        self.buf[len_at..len_at + 8].copy_from_slice(&len.to_le_bytes());
    }

    fn matrix(&mut self, m: &Array2<f64>) {
        let (rows, cols) = m.dim();
        self.usize_as_u32(rows);
        self.usize_as_u32(cols);
        for &v in m.iter() {
            self.f64(v);
        }
    }

    fn vector(&mut self, v: &Array1<f64>) {
        self.usize_as_u32(v.len());
        for &x in v.iter() {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::CorruptModel(format!(
                "unexpected end of data at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len_u32(&mut self) -> Result<usize, ModelError> {
        Ok(self.u32()? as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn matrix(&mut self) -> Result<Array2<f64>, ModelError> {
        let rows = self.len_u32()?;
        let cols = self.len_u32()?;
        let count = rows.checked_mul(cols).ok_or_else(|| {
            ModelError::CorruptModel(format!("matrix shape {rows}x{cols} overflows"))
        })?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(self.f64()?);
        }
        Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| ModelError::CorruptModel(format!("bad matrix shape: {e}")))
    }

    fn vector(&mut self) -> Result<Array1<f64>, ModelError> {
        let len = self.len_u32()?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(self.f64()?);
        }
        Ok(Array1::from_vec(data))
    }
}

fn check_header(r: &mut Reader<'_>, magic: &[u8; 8]) -> Result<(), ModelError> {
    let found = r.take(8)?;
    if found != magic {
        return Err(ModelError::CorruptModel(format!(
            "bad magic {found:?}, expected {magic:?}"
        )));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}

/// Splits the remaining bytes into (tag, payload) pairs, enforcing the
/// declared lengths and rejecting trailing garbage.
fn read_sections<'a>(r: &mut Reader<'a>) -> Result<Vec<(u32, &'a [u8])>, ModelError> {
    let mut sections = Vec::new();
    while !r.done() {
        let tag = r.u32()?;
        let len = r.u64()?;
        let len = usize::try_from(len)
            .map_err(|_| ModelError::CorruptModel(format!("section {tag} length overflows")))?;
        let payload = r.take(len)?;
        sections.push((tag, payload));
    }
    Ok(sections)
}

/// Returns the payload of the unique section with `tag`.
fn unique_section<'a>(
    sections: &[(u32, &'a [u8])],
    tag: u32,
    name: &str,
) -> Result<&'a [u8], ModelError> {
    let mut found = None;
    for &(t, payload) in sections {
        if t == tag {
            if found.is_some() {
                return Err(ModelError::CorruptModel(format!(
                    "duplicate {name} section"
                )));
            }
            found = Some(payload);
        }
    }
    found.ok_or_else(|| ModelError::CorruptModel(format!("missing {name} section")))
}

fn expect_consumed(r: &Reader<'_>, name: &str) -> Result<(), ModelError> {
    if r.done() {
        Ok(())
    } else {
        Err(ModelError::CorruptModel(format!(
            "{name} section has {} unread trailing bytes",
            r.bytes.len() - r.pos
        )))
    }
}

// ---------------------------------------------------------------------
// Section payloads

fn write_config(w: &mut Writer, cfg: &DenoiseConfig) {
    w.usize_as_u32(cfg.patch_size);
    w.usize_as_u32(cfg.clusters);
    for k in 0..3 {
        w.f64(cfg.alignment_target[k]);
    }
    w.usize_as_u32(cfg.bilateral_iterations);
    w.usize_as_u32(cfg.vertex_update_iterations);
    w.f64(cfg.sigma2);
    w.u8(match cfg.sigma1_mode {
        Sigma1Mode::MeanSquaredDistance => 0,
        Sigma1Mode::MeanDistance => 1,
    });
}

/// Thread count is a runtime property of the host, not of the model, so
/// it is not stored; loaded configs default to all cores.
fn read_config(payload: &[u8]) -> Result<DenoiseConfig, ModelError> {
    let mut r = Reader::new(payload);
    let patch_size = r.len_u32()?;
    let clusters = r.len_u32()?;
    let alignment_target = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
    let bilateral_iterations = r.len_u32()?;
    let vertex_update_iterations = r.len_u32()?;
    let sigma2 = r.f64()?;
    let sigma1_mode = match r.u8()? {
        0 => Sigma1Mode::MeanSquaredDistance,
        1 => Sigma1Mode::MeanDistance,
        other => {
            return Err(ModelError::CorruptModel(format!(
                "unknown sigma1 mode {other}"
            )))
        }
    };
    expect_consumed(&r, "config")?;
    Ok(DenoiseConfig {
        patch_size,
        clusters,
        alignment_target,
        bilateral_iterations,
        vertex_update_iterations,
        sigma2,
        sigma1_mode,
        threads: Threads::All,
    })
}

fn write_cluster(w: &mut Writer, model: &ClusterModel) {
    w.usize_as_u32(model.k());
    w.usize_as_u32(model.dim());
    w.u64(model.seed);
    for &v in model.centroids.iter() {
        w.f64(v);
    }
}

fn read_cluster(payload: &[u8]) -> Result<ClusterModel, ModelError> {
    let mut r = Reader::new(payload);
    let k = r.len_u32()?;
    let dim = r.len_u32()?;
    let seed = r.u64()?;
    let count = k
        .checked_mul(dim)
        .ok_or_else(|| ModelError::CorruptModel("centroid shape overflows".into()))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.f64()?);
    }
    expect_consumed(&r, "cluster")?;
    let centroids = Array2::from_shape_vec((k, dim), data)
        .map_err(|e| ModelError::CorruptModel(format!("bad centroid shape: {e}")))?;
    Ok(ClusterModel { centroids, seed })
}

fn write_activation(w: &mut Writer, activation: Activation) {
    match activation {
        Activation::Relu => w.u8(0),
        Activation::LeakyRelu(slope) => {
            w.u8(1);
            w.f64(slope);
        }
    }
}

fn read_activation(r: &mut Reader<'_>) -> Result<Activation, ModelError> {
    match r.u8()? {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::LeakyRelu(r.f64()?)),
        other => Err(ModelError::CorruptModel(format!(
            "unknown activation {other}"
        ))),
    }
}

fn write_cvae(w: &mut Writer, p: &CvaeParams) {
    w.usize_as_u32(p.input_dim);
    w.usize_as_u32(p.label_dim);
    w.usize_as_u32(p.shape.encoder1);
    w.usize_as_u32(p.shape.encoder2);
    w.usize_as_u32(p.shape.latent);
    w.usize_as_u32(p.shape.decoder1);
    w.usize_as_u32(p.shape.decoder2);
    write_activation(w, p.shape.activation);
    w.f64(p.keep_ratio);
    w.matrix(&p.w_e1);
    w.vector(&p.b_e1);
    w.matrix(&p.w_e2);
    w.vector(&p.b_e2);
    w.matrix(&p.w_e3);
    w.vector(&p.b_e3);
    w.matrix(&p.w_d1);
    w.vector(&p.b_d1);
    w.matrix(&p.w_d2);
    w.vector(&p.b_d2);
    w.matrix(&p.w_out);
    w.vector(&p.b_out);
}

fn read_cvae(payload: &[u8]) -> Result<CvaeParams, ModelError> {
    let mut r = Reader::new(payload);
    let input_dim = r.len_u32()?;
    let label_dim = r.len_u32()?;
    let shape = NetworkShape {
        encoder1: r.len_u32()?,
        encoder2: r.len_u32()?,
        latent: r.len_u32()?,
        decoder1: r.len_u32()?,
        decoder2: r.len_u32()?,
        activation: read_activation(&mut r)?,
    };
    let keep_ratio = r.f64()?;
    let params = CvaeParams {
        input_dim,
        label_dim,
        shape,
        keep_ratio,
        w_e1: r.matrix()?,
        b_e1: r.vector()?,
        w_e2: r.matrix()?,
        b_e2: r.vector()?,
        w_e3: r.matrix()?,
        b_e3: r.vector()?,
        w_d1: r.matrix()?,
        b_d1: r.vector()?,
        w_d2: r.matrix()?,
        b_d2: r.vector()?,
        w_out: r.matrix()?,
        b_out: r.vector()?,
    };
    expect_consumed(&r, "network")?;
    Ok(params)
}

fn write_ae(w: &mut Writer, p: &AeParams) {
    w.usize_as_u32(p.input_dim);
    for &width in &p.widths {
        w.usize_as_u32(width);
    }
    w.f64(p.keep_ratio);
    w.usize_as_u32(p.weights.len());
    for (weight, bias) in p.weights.iter().zip(&p.biases) {
        w.matrix(weight);
        w.vector(bias);
    }
}

fn read_ae(payload: &[u8]) -> Result<AeParams, ModelError> {
    let mut r = Reader::new(payload);
    let input_dim = r.len_u32()?;
    let mut widths = [0usize; 5];
    for slot in &mut widths {
        *slot = r.len_u32()?;
    }
    let keep_ratio = r.f64()?;
    let layers = r.len_u32()?;
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for _ in 0..layers {
        weights.push(r.matrix()?);
        biases.push(r.vector()?);
    }
    expect_consumed(&r, "network")?;
    Ok(AeParams {
        input_dim,
        widths,
        keep_ratio,
        weights,
        biases,
    })
}

fn write_provenance(w: &mut Writer, p: &Provenance) {
    w.f64(p.noise.mu);
    w.f64(p.noise.beta);
    w.u64(p.noise.seed);
    w.u32(p.epochs);
    w.u64(p.training_seed);
    w.f64(p.final_train_loss);
    match p.final_holdout_loss {
        Some(v) => {
            w.u8(1);
            w.f64(v);
        }
        None => {
            w.u8(0);
            w.f64(0.0);
        }
    }
}

fn read_provenance(payload: &[u8]) -> Result<Provenance, ModelError> {
    let mut r = Reader::new(payload);
    let noise = NoiseSpec {
        mu: r.f64()?,
        beta: r.f64()?,
        seed: r.u64()?,
    };
    let epochs = r.u32()?;
    let training_seed = r.u64()?;
    let final_train_loss = r.f64()?;
    let has_holdout = r.u8()?;
    let holdout = r.f64()?;
    expect_consumed(&r, "provenance")?;
    Ok(Provenance {
        noise,
        epochs,
        training_seed,
        final_train_loss,
        final_holdout_loss: match has_holdout {
            0 => None,
            1 => Some(holdout),
            other => {
                return Err(ModelError::CorruptModel(format!(
                    "bad holdout flag {other}"
                )))
            }
        },
    })
}

// ---------------------------------------------------------------------
// Public entry points

/// Serializes a bundle; [`load_model`] restores it bit for bit.
#[must_use]
pub fn save_model(bundle: &ModelBundle) -> Vec<u8> {
    let mut w = Writer::new(MODEL_MAGIC);
    w.section(TAG_CONFIG, |w| write_config(w, &bundle.config));
    w.section(TAG_CLUSTER, |w| write_cluster(w, &bundle.cluster));
    match &bundle.network {
        NetworkKind::Cvae(p) => w.section(TAG_CVAE, |w| write_cvae(w, p)),
        NetworkKind::Ae(p) => w.section(TAG_AE, |w| write_ae(w, p)),
    }
    w.section(TAG_PROVENANCE, |w| write_provenance(w, &bundle.provenance));
    w.buf
}

/// Parses and validates a bundle written by [`save_model`].
pub fn load_model(bytes: &[u8]) -> Result<ModelBundle, ModelError> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MODEL_MAGIC)?;
    let sections = read_sections(&mut r)?;
    for &(tag, _) in &sections {
        if !matches!(tag, TAG_CONFIG | TAG_CLUSTER | TAG_CVAE | TAG_AE | TAG_PROVENANCE) {
            return Err(ModelError::CorruptModel(format!(
                "unknown section tag {tag}"
            )));
        }
    }
    let config = read_config(unique_section(&sections, TAG_CONFIG, "config")?)?;
    let cluster = read_cluster(unique_section(&sections, TAG_CLUSTER, "cluster")?)?;
    let cvae = sections.iter().find(|&&(t, _)| t == TAG_CVAE);
    let ae = sections.iter().find(|&&(t, _)| t == TAG_AE);
    let network = match (cvae, ae) {
        (Some(&(_, payload)), None) => NetworkKind::Cvae(read_cvae(payload)?),
        (None, Some(&(_, payload))) => NetworkKind::Ae(read_ae(payload)?),
        (Some(_), Some(_)) => {
            return Err(ModelError::CorruptModel(
                "bundle contains two networks".into(),
            ))
        }
        (None, None) => return Err(ModelError::CorruptModel("missing network section".into())),
    };
    let provenance = read_provenance(unique_section(&sections, TAG_PROVENANCE, "provenance")?)?;
    let bundle = ModelBundle {
        config,
        cluster,
        network,
        provenance,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Serializes a training set; [`load_training_set`] restores it bit for
/// bit.
#[must_use]
pub fn save_training_set(set: &TrainingSet) -> Vec<u8> {
    let mut w = Writer::new(TRAINSET_MAGIC);
    w.section(TAG_TRAINCFG, |w| {
        w.usize_as_u32(set.patch_size);
        for k in 0..3 {
            w.f64(set.alignment_target[k]);
        }
        w.f64(set.noise.mu);
        w.f64(set.noise.beta);
        w.u64(set.noise.seed);
    });
    w.section(TAG_CLUSTER, |w| write_cluster(w, &set.cluster));
    w.section(TAG_PAIRS, |w| {
        w.u64(set.pairs.len() as u64);
        let dim = set.pairs.first().map_or(0, |p| p.x_noisy.len());
        w.usize_as_u32(dim);
        for pair in &set.pairs {
            w.u32(pair.label);
            for &v in &pair.x_noisy {
                w.f64(v);
            }
            for &v in &pair.x_clean {
                w.f64(v);
            }
        }
    });
    w.buf
}

/// Parses a training set written by [`save_training_set`].
pub fn load_training_set(bytes: &[u8]) -> Result<TrainingSet, ModelError> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, TRAINSET_MAGIC)?;
    let sections = read_sections(&mut r)?;
    for &(tag, _) in &sections {
        if !matches!(tag, TAG_TRAINCFG | TAG_CLUSTER | TAG_PAIRS) {
            return Err(ModelError::CorruptModel(format!(
                "unknown section tag {tag}"
            )));
        }
    }

    let mut r = Reader::new(unique_section(&sections, TAG_TRAINCFG, "config")?);
    let patch_size = r.len_u32()?;
    let alignment_target = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
    let noise = NoiseSpec {
        mu: r.f64()?,
        beta: r.f64()?,
        seed: r.u64()?,
    };
    expect_consumed(&r, "config")?;

    let cluster = read_cluster(unique_section(&sections, TAG_CLUSTER, "cluster")?)?;

    let mut r = Reader::new(unique_section(&sections, TAG_PAIRS, "pairs")?);
    let count = r.u64()?;
    let count = usize::try_from(count)
        .map_err(|_| ModelError::CorruptModel("pair count overflows".into()))?;
    let dim = r.len_u32()?;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let label = r.u32()?;
        let mut x_noisy = Vec::with_capacity(dim);
        for _ in 0..dim {
            x_noisy.push(r.f64()?);
        }
        let mut x_clean = Vec::with_capacity(dim);
        for _ in 0..dim {
            x_clean.push(r.f64()?);
        }
        pairs.push(TrainingPair {
            x_noisy,
            x_clean,
            label,
        });
    }
    expect_consumed(&r, "pairs")?;

    if cluster.dim() != 3 * (patch_size + 1) {
        return Err(ModelError::CorruptModel(format!(
            "cluster dimension {} does not match descriptor length {}",
            cluster.dim(),
            3 * (patch_size + 1)
        )));
    }
    Ok(TrainingSet {
        patch_size,
        alignment_target,
        noise,
        cluster,
        pairs,
    })
}
