//! Plain autoencoder baseline.
//!
//! A fixed-depth bottleneck network (five hidden layers) that maps a noisy
//! descriptor straight to a clean one with no labels and no sampling.
//! Unlike the conditional VAE, every layer including the hidden ones ends
//! in a sigmoid, and training minimizes the mean squared error. It exists
//! as a like-for-like comparison point for the conditional model.

use super::{
    dropout_mask, gather_unlabeled, glorot, sigmoid, split_indices, validate_pairs, AdamState,
    EpochStats, NeuralError, TrainConfig, TrainReport, TrainingPair,
};
use crate::rng::SeededRng;
use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Default hidden-layer widths, narrowing to a 64-unit bottleneck.
pub const DEFAULT_AE_WIDTHS: [usize; 5] = [256, 128, 64, 128, 256];

/// Weights of the autoencoder: six sigmoid layers
/// `input -> w1 .. w5 -> output`, each `in x out` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    pub input_dim: usize,
    pub widths: [usize; 5],
    /// Dropout keep probability the model was trained with.
    pub keep_ratio: f64,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer dropout masks for the five hidden layers of one batch.
#[derive(Debug, Clone)]
pub struct AeDropoutMasks {
    pub layers: Vec<Array2<f64>>,
}

impl AeDropoutMasks {
    /// Draws the five hidden-layer masks in network order, row-major each.
    #[must_use]
    pub fn sample(rng: &mut SeededRng, keep_ratio: f64, batch: usize, widths: &[usize; 5]) -> Self {
        Self {
            layers: widths
                .iter()
                .map(|&w| dropout_mask(rng, keep_ratio, batch, w))
                .collect(),
        }
    }
}

/// Gradients in the same order as [`AeParams`] tensors.
#[derive(Debug, Clone)]
pub struct AeGradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl AeGradients {
    /// Gradient tensors flattened in parameter order
    /// (w1, b1, w2, b2, ...).
    #[must_use]
    pub fn parameter_slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice().unwrap(), b.as_slice().unwrap()])
            .collect()
    }
}

/// Forward quantities per layer: preactivation sigmoid `s` and the value
/// actually fed forward (post-dropout on hidden layers).
struct AeForward {
    /// Layer inputs: x, h1, ..., h5 (post-dropout where applicable).
    inputs: Vec<Array2<f64>>,
    /// Sigmoid outputs per layer, pre-dropout.
    sigmoids: Vec<Array2<f64>>,
    x_out: Array2<f64>,
}

impl AeParams {
    /// Glorot-initialized parameters; weights drawn in layer order.
    pub fn init(
        input_dim: usize,
        widths: [usize; 5],
        keep_ratio: f64,
        rng: &mut SeededRng,
    ) -> Result<Self, NeuralError> {
        if input_dim == 0 || widths.contains(&0) {
            return Err(NeuralError::InvalidConfig("layer widths must be positive".into()));
        }
        if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
            return Err(NeuralError::InvalidConfig("keep_ratio must be in (0, 1]".into()));
        }
        let dims: Vec<usize> = std::iter::once(input_dim)
            .chain(widths)
            .chain(std::iter::once(input_dim))
            .collect();
        let mut weights = Vec::with_capacity(6);
        let mut biases = Vec::with_capacity(6);
        for pair in dims.windows(2) {
            weights.push(glorot(rng, pair[0], pair[1]));
            biases.push(Array1::zeros(pair[1]));
        }
        Ok(Self {
            input_dim,
            widths,
            keep_ratio,
            weights,
            biases,
        })
    }

    /// Parameter tensors as flat slices in optimizer order.
    #[must_use]
    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_slice_mut().unwrap(), b.as_slice_mut().unwrap()])
            .collect()
    }

    /// Sizes of the parameter tensors in optimizer order.
    #[must_use]
    pub fn parameter_sizes(&self) -> Vec<usize> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.len(), b.len()])
            .collect()
    }

    fn forward(&self, x: ArrayView2<'_, f64>, masks: Option<&AeDropoutMasks>) -> Result<AeForward, NeuralError> {
        if x.ncols() != self.input_dim {
            return Err(NeuralError::ShapeMismatch(format!(
                "descriptor width {} does not match input_dim {}",
                x.ncols(),
                self.input_dim
            )));
        }
        if let Some(m) = masks {
            if m.layers.len() != 5
                || m.layers
                    .iter()
                    .zip(&self.widths)
                    .any(|(mask, &w)| mask.dim() != (x.nrows(), w))
            {
                return Err(NeuralError::ShapeMismatch(
                    "dropout mask shape does not match the batch".into(),
                ));
            }
        }
        let mut inputs = vec![x.to_owned()];
        let mut sigmoids = Vec::with_capacity(6);
        for layer in 0..6 {
            let a = inputs[layer].dot(&self.weights[layer]) + &self.biases[layer];
            let s = a.mapv(sigmoid);
            sigmoids.push(s.clone());
            if layer < 5 {
                let mut h = s;
                if let Some(m) = masks {
                    h *= &m.layers[layer];
                }
                inputs.push(h);
            }
        }
        let x_out = sigmoids[5].clone();
        Ok(AeForward {
            inputs,
            sigmoids,
            x_out,
        })
    }

    /// Mean per-sample squared reconstruction error of a batch.
    pub fn loss_batch(
        &self,
        x_noisy: ArrayView2<'_, f64>,
        x_clean: ArrayView2<'_, f64>,
        masks: Option<&AeDropoutMasks>,
    ) -> Result<f64, NeuralError> {
        if x_clean.dim() != x_noisy.dim() {
            return Err(NeuralError::ShapeMismatch(
                "clean batch shape differs from noisy batch".into(),
            ));
        }
        let fwd = self.forward(x_noisy, masks)?;
        let b = x_noisy.nrows() as f64;
        let sse: f64 = fwd
            .x_out
            .iter()
            .zip(x_clean.iter())
            .map(|(&o, &t)| (o - t) * (o - t))
            .sum();
        Ok(sse / b)
    }

    /// Loss and parameter gradients for a batch; the finite-difference
    /// oracle for this pass is [`Self::loss_batch`].
    pub fn gradients(
        &self,
        x_noisy: ArrayView2<'_, f64>,
        x_clean: ArrayView2<'_, f64>,
        masks: Option<&AeDropoutMasks>,
    ) -> Result<(f64, AeGradients), NeuralError> {
        if x_clean.dim() != x_noisy.dim() {
            return Err(NeuralError::ShapeMismatch(
                "clean batch shape differs from noisy batch".into(),
            ));
        }
        let fwd = self.forward(x_noisy, masks)?;
        let b = x_noisy.nrows() as f64;
        let sse: f64 = fwd
            .x_out
            .iter()
            .zip(x_clean.iter())
            .map(|(&o, &t)| (o - t) * (o - t))
            .sum();
        let loss = sse / b;

        let mut weights = vec![Array2::zeros((0, 0)); 6];
        let mut biases = vec![Array1::zeros(0); 6];

        // Output layer: d loss / d a6 = (2/B)(out - target) * s'(a6).
        let mut d_a = (&fwd.x_out - &x_clean) * (2.0 / b) * &fwd.sigmoids[5] * &(1.0 - &fwd.sigmoids[5]);
        for layer in (0..6).rev() {
            weights[layer] = fwd.inputs[layer].t().dot(&d_a);
            biases[layer] = d_a.sum_axis(Axis(0));
            if layer > 0 {
                let mut d_h = d_a.dot(&self.weights[layer].t());
                if let Some(m) = masks {
                    d_h *= &m.layers[layer - 1];
                }
                let s = &fwd.sigmoids[layer - 1];
                d_a = &d_h * s * &(1.0 - s);
            }
        }
        Ok((loss, AeGradients { weights, biases }))
    }
}

/// Reconstructs one descriptor without dropout.
pub fn infer_ae(params: &AeParams, descriptor: &[f64]) -> Result<Vec<f64>, NeuralError> {
    let x = Array2::from_shape_vec((1, descriptor.len()), descriptor.to_vec())
        .expect("shape matches length");
    let fwd = params.forward(x.view(), None)?;
    Ok(fwd.x_out.row(0).to_vec())
}

/// Trains the autoencoder baseline. Labels in the pairs are ignored.
///
/// Batch schedule, dropout draws, learning-rate decay, and the holdout
/// evaluation follow the same scheme as CVAE training, minus the latent
/// noise (the AE has none).
pub fn train_ae(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<(AeParams, TrainReport), NeuralError> {
    train_ae_with_widths(pairs, DEFAULT_AE_WIDTHS, cfg)
}

/// [`train_ae`] with explicit hidden-layer widths.
pub fn train_ae_with_widths(
    pairs: &[TrainingPair],
    widths: [usize; 5],
    cfg: &TrainConfig,
) -> Result<(AeParams, TrainReport), NeuralError> {
    cfg.validate()?;
    // Labels play no role; validate with an effectively unbounded count.
    let (dim, n) = validate_pairs(pairs, usize::MAX)?;

    let mut rng = SeededRng::new(cfg.seed);
    let mut params = AeParams::init(dim, widths, cfg.keep_ratio, &mut rng)?;
    let mut adam = AdamState::new(&params.parameter_sizes(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let (mut train_idx, holdout_idx) = split_indices(n, cfg.holdout_fraction, &mut rng);
    let holdout = if holdout_idx.is_empty() {
        None
    } else {
        Some(gather_unlabeled(pairs, &holdout_idx, dim))
    };

    let mut report = TrainReport::default();
    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut train_idx);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let (x_noisy, x_clean) = gather_unlabeled(pairs, chunk, dim);
            let masks = AeDropoutMasks::sample(&mut rng, cfg.keep_ratio, chunk.len(), &widths);
            let (loss, grads) = params.gradients(x_noisy.view(), x_clean.view(), Some(&masks))?;
            if !loss.is_finite() {
                return Err(NeuralError::NonFinite { what: "loss", epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.step(lr, &mut params.parameter_slices_mut(), &grads.parameter_slices());
        }
        let holdout_loss = match &holdout {
            Some((hx, hc)) => Some(params.loss_batch(hx.view(), hc.view(), None)?),
            None => None,
        };
        report.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            holdout_loss,
            learning_rate: lr,
        });
        lr *= cfg.lr_decay;
    }
    Ok((params, report))
}
