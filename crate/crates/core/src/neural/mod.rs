//! Dense networks over patch descriptors.
//!
//! Two architectures share this module's plumbing: a conditional variational
//! autoencoder ([`cvae`]) that learns to map noisy descriptors to clean ones
//! under a cluster-id condition, and a plain autoencoder baseline ([`ae`]).
//! Both are implemented directly on `ndarray` matrices with hand-written
//! backward passes and a shared Adam optimizer, so training is priced in
//! plain matrix products and stays bitwise reproducible for a fixed seed:
//! weight init, batch shuffling, reparameterization noise, and dropout masks
//! all come from one [`SeededRng`] stream in a documented order, and no
//! parallelism enters the training loop.
//!
//! Conventions: samples are rows; a layer computes `H = act(X W + b)` with
//! `W` of shape `in x out`; dropout is inverted (masks hold `1 / keep_ratio`
//! or zero) so inference applies no rescaling.

pub mod ae;
mod adam;
pub mod cvae;

pub use ae::{infer_ae, train_ae, AeParams};
pub use cvae::{infer_cvae, train_cvae, CvaeParams, NetworkShape};

pub(crate) use adam::AdamState;

use crate::rng::SeededRng;
use ndarray::Array2;
use thiserror::Error;

/// Errors from network construction, training, and inference.
#[derive(Debug, Error)]
pub enum NeuralError {
    /// An input's dimensions do not match the network or its companions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// Training requires at least one pair.
    #[error("training set is empty")]
    EmptyTrainingSet,
    /// A conditioning label is outside the configured range.
    #[error("label {label} out of range for {count} classes")]
    LabelOutOfRange { label: usize, count: usize },
    /// A value left the domain its formula requires.
    #[error("domain error: {0}")]
    Domain(String),
    /// Loss or gradients stopped being finite, usually a runaway step size.
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: &'static str, epoch: usize },
    /// A configuration field has an unusable value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Hidden-layer activation. The final encoder layer (mean and raw variance)
/// is always affine and the output layer is always a sigmoid; this choice
/// only affects hidden layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Leaky variant with the given negative-side slope.
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    /// Derivative as a function of the preactivation.
    #[inline]
    pub(crate) fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

/// One training example: a noisy descriptor, its clean counterpart in the
/// same alignment, and the cluster label of the noisy descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x_noisy: Vec<f64>,
    pub x_clean: Vec<f64>,
    pub label: u32,
}

/// Optimizer and schedule settings shared by both architectures.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    /// Initial Adam step size.
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Dropout keep probability for hidden layers, in (0, 1].
    pub keep_ratio: f64,
    /// Fraction of pairs held out for the per-epoch validation loss,
    /// in [0, 1). Zero disables the holdout.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            lr_decay: 0.998,
            batch_size: 256,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            keep_ratio: 0.99,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self) -> Result<(), NeuralError> {
        if !(self.learning_rate > 0.0) {
            return Err(NeuralError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(NeuralError::InvalidConfig("lr_decay must be in (0, 1]".into()));
        }
        if self.batch_size == 0 {
            return Err(NeuralError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return Err(NeuralError::InvalidConfig("keep_ratio must be in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(NeuralError::InvalidConfig("holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Losses observed during one epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample training loss across the epoch's batches.
    pub train_loss: f64,
    /// Loss on the held-out split, evaluated deterministically
    /// (zero latent noise, no dropout). `None` when no holdout exists.
    pub holdout_loss: Option<f64>,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
}

/// Full training trace.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    #[must_use]
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    #[must_use]
    pub fn final_holdout_loss(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.holdout_loss)
    }
}

/// Glorot-uniform weight matrix: entries drawn from
/// `U(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`, row-major.
pub(crate) fn glorot(rng: &mut SeededRng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| s * rng.uniform_symmetric())
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one logit against a target in [0, 1], computed
/// without forming the sigmoid: `max(a, 0) - a t + ln(1 + exp(-|a|))`.
/// Algebraically identical to `-(t ln s(a) + (1 - t) ln(1 - s(a)))` but
/// immune to saturated outputs.
#[inline]
pub(crate) fn bce_from_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// KL divergence of `N(mu, exp(sigma_raw))` from the standard normal,
/// `-0.5 * sum(1 + sigma_raw - mu^2 - exp(sigma_raw))`.
pub fn kl_divergence(mu: &[f64], sigma_raw: &[f64]) -> Result<f64, NeuralError> {
    if mu.len() != sigma_raw.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "mu has {} entries, sigma_raw has {}",
            mu.len(),
            sigma_raw.len()
        )));
    }
    Ok(mu
        .iter()
        .zip(sigma_raw)
        .map(|(&m, &sr)| -0.5 * (1.0 + sr - m * m - sr.exp()))
        .sum())
}

/// Latent sample `z = mu + exp(sigma_raw / 2) * eps`.
pub fn reparameterize(mu: &[f64], sigma_raw: &[f64], eps: &[f64]) -> Result<Vec<f64>, NeuralError> {
    if mu.len() != sigma_raw.len() || mu.len() != eps.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "mu/sigma_raw/eps lengths differ: {}/{}/{}",
            mu.len(),
            sigma_raw.len(),
            eps.len()
        )));
    }
    Ok(mu
        .iter()
        .zip(sigma_raw)
        .zip(eps)
        .map(|((&m, &sr), &e)| m + (0.5 * sr).exp() * e)
        .collect())
}

/// Variational loss of one sample: binary cross-entropy between the target
/// descriptor and the reconstruction, plus the KL term.
///
/// `x_out` must lie strictly inside (0, 1) and `x_target` within [0, 1].
pub fn elbo_loss(
    x_target: &[f64],
    x_out: &[f64],
    mu: &[f64],
    sigma_raw: &[f64],
) -> Result<f64, NeuralError> {
    if x_target.len() != x_out.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "target has {} entries, output has {}",
            x_target.len(),
            x_out.len()
        )));
    }
    let mut bce = 0.0;
    for (&t, &o) in x_target.iter().zip(x_out) {
        if !(0.0..=1.0).contains(&t) {
            return Err(NeuralError::Domain(format!("target value {t} outside [0, 1]")));
        }
        if !(o > 0.0 && o < 1.0) {
            return Err(NeuralError::Domain(format!("output value {o} outside (0, 1)")));
        }
        bce -= t * o.ln() + (1.0 - t) * (1.0 - o).ln();
    }
    Ok(bce + kl_divergence(mu, sigma_raw)?)
}

/// Checks pairs for consistency and returns `(input_dim, n_pairs)`.
pub(crate) fn validate_pairs(
    pairs: &[TrainingPair],
    label_count: usize,
) -> Result<(usize, usize), NeuralError> {
    let first = pairs.first().ok_or(NeuralError::EmptyTrainingSet)?;
    let dim = first.x_noisy.len();
    if dim == 0 {
        return Err(NeuralError::ShapeMismatch("descriptors are empty".into()));
    }
    for (i, pair) in pairs.iter().enumerate() {
        if pair.x_noisy.len() != dim || pair.x_clean.len() != dim {
            return Err(NeuralError::ShapeMismatch(format!(
                "pair {i} has lengths {}/{} but the set uses {dim}",
                pair.x_noisy.len(),
                pair.x_clean.len()
            )));
        }
        if pair.label as usize >= label_count {
            return Err(NeuralError::LabelOutOfRange {
                label: pair.label as usize,
                count: label_count,
            });
        }
    }
    Ok((dim, pairs.len()))
}

/// Splits `0..n` into shuffled train and holdout index sets.
/// The train side is never empty.
pub(crate) fn split_indices(
    n: usize,
    holdout_fraction: f64,
    rng: &mut SeededRng,
) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut indices);
    let mut holdout = ((n as f64) * holdout_fraction).floor() as usize;
    if holdout >= n {
        holdout = n - 1;
    }
    let train = indices[..n - holdout].to_vec();
    let held = indices[n - holdout..].to_vec();
    (train, held)
}

/// Gathers the selected pairs into `(x_noisy, x_clean)` batch matrices,
/// ignoring labels.
pub(crate) fn gather_unlabeled(
    pairs: &[TrainingPair],
    indices: &[usize],
    dim: usize,
) -> (Array2<f64>, Array2<f64>) {
    let b = indices.len();
    let mut x_noisy = Array2::zeros((b, dim));
    let mut x_clean = Array2::zeros((b, dim));
    for (row, &i) in indices.iter().enumerate() {
        let pair = &pairs[i];
        x_noisy.row_mut(row).assign(&ndarray::ArrayView1::from(&pair.x_noisy[..]));
        x_clean.row_mut(row).assign(&ndarray::ArrayView1::from(&pair.x_clean[..]));
    }
    (x_noisy, x_clean)
}

/// Gathers the selected pairs into `(x_noisy, x_clean, one_hot_labels)`
/// batch matrices. Labels must be below `label_count`.
pub(crate) fn gather_batch(
    pairs: &[TrainingPair],
    indices: &[usize],
    dim: usize,
    label_count: usize,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (x_noisy, x_clean) = gather_unlabeled(pairs, indices, dim);
    let mut labels = Array2::zeros((indices.len(), label_count));
    for (row, &i) in indices.iter().enumerate() {
        labels[(row, pairs[i].label as usize)] = 1.0;
    }
    (x_noisy, x_clean, labels)
}

/// Standard-normal matrix drawn row-major.
pub(crate) fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.standard_normal())
}

/// Inverted dropout mask: `1 / keep_ratio` with probability `keep_ratio`,
/// else zero, drawn row-major.
pub(crate) fn dropout_mask(rng: &mut SeededRng, keep_ratio: f64, rows: usize, cols: usize) -> Array2<f64> {
    let inv = 1.0 / keep_ratio;
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.uniform() < keep_ratio {
            inv
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_oracles() {
        // Standard normal against itself.
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        // One dimension with mu = 1: -0.5 (1 + 0 - 1 - 1) = 0.5.
        assert!((kl_divergence(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        // KL is non-negative across random parameters.
        let mut rng = crate::rng::SeededRng::new(2);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..4).map(|_| 3.0 * rng.uniform_symmetric()).collect();
            let sr: Vec<f64> = (0..4).map(|_| 2.0 * rng.uniform_symmetric()).collect();
            assert!(kl_divergence(&mu, &sr).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn reparameterize_oracle() {
        // sigma = exp(ln 3) = 3, so z = 1 + 3 * 2 = 7.
        let z = reparameterize(&[1.0], &[2.0 * 3.0_f64.ln()], &[2.0]).unwrap();
        assert!((z[0] - 7.0).abs() < 1e-12);
        assert!(reparameterize(&[1.0], &[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn elbo_uniform_oracle() {
        // Output and target both 0.5 everywhere: BCE = L ln 2, KL = 0.
        let l = 24;
        let half = vec![0.5; l];
        let zq = vec![0.0; 4];
        let loss = elbo_loss(&half, &half, &zq, &zq).unwrap();
        assert!((loss - l as f64 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn elbo_domain_checks() {
        let ok = vec![0.5; 2];
        assert!(matches!(
            elbo_loss(&[0.5, 1.5], &ok, &[0.0], &[0.0]),
            Err(NeuralError::Domain(_))
        ));
        assert!(matches!(
            elbo_loss(&ok, &[0.5, 1.0], &[0.0], &[0.0]),
            Err(NeuralError::Domain(_))
        ));
        assert!(matches!(
            elbo_loss(&ok, &[0.5], &[0.0], &[0.0]),
            Err(NeuralError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn bce_from_logit_matches_direct_formula() {
        let mut rng = crate::rng::SeededRng::new(8);
        for _ in 0..500 {
            let a = 8.0 * rng.uniform_symmetric();
            let t = rng.uniform();
            let s = sigmoid(a);
            let direct = -(t * s.ln() + (1.0 - t) * (1.0 - s).ln());
            assert!((bce_from_logit(a, t) - direct).abs() < 1e-12);
        }
        // Extreme logits stay finite.
        assert!(bce_from_logit(-800.0, 1.0).is_finite());
        assert!(bce_from_logit(800.0, 0.0).is_finite());
    }

    #[test]
    fn dropout_mask_statistics() {
        let mut rng = crate::rng::SeededRng::new(4);
        let mask = dropout_mask(&mut rng, 0.8, 200, 50);
        let zeros = mask.iter().filter(|&&v| v == 0.0).count();
        let kept = mask.iter().filter(|&&v| (v - 1.25).abs() < 1e-12).count();
        assert_eq!(zeros + kept, 10_000);
        let drop_rate = zeros as f64 / 10_000.0;
        assert!((drop_rate - 0.2).abs() < 0.02, "drop rate {drop_rate}");
    }

    #[test]
    fn split_keeps_train_nonempty() {
        let mut rng = crate::rng::SeededRng::new(5);
        let (train, held) = split_indices(10, 0.3, &mut rng);
        assert_eq!(train.len(), 7);
        assert_eq!(held.len(), 3);
        let (train, held) = split_indices(1, 0.9, &mut rng);
        assert_eq!(train.len(), 1);
        assert!(held.is_empty());
        let mut all: Vec<usize> = train.into_iter().chain(held).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0]);
    }

    #[test]
    fn activation_derivatives() {
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Relu.derivative(-2.0), 0.0);
        assert_eq!(Activation::Relu.derivative(3.0), 1.0);
        let leaky = Activation::LeakyRelu(0.1);
        assert!((leaky.apply(-2.0) + 0.2).abs() < 1e-15);
        assert_eq!(leaky.derivative(-2.0), 0.1);
    }
}
