//! Conditional variational autoencoder over patch descriptors.
//!
//! The encoder consumes a one-hot cluster label concatenated with a noisy
//! descriptor and produces the latent mean and raw log-variance through two
//! hidden layers; the final encoder layer is affine. The decoder consumes
//! the label concatenated with a latent sample and reconstructs a clean
//! descriptor through two hidden layers and a sigmoid output. Training
//! minimizes the mean per-sample variational loss: binary cross-entropy of
//! the clean descriptor against the reconstruction plus the KL divergence
//! of the latent posterior from the standard normal.
//!
//! The backward pass is hand-written; `gradients` is validated against
//! central finite differences of `loss_batch` in the tests, which pins the
//! two independent routes against each other.

use super::{
    bce_from_logit, dropout_mask, gather_batch, glorot, normal_matrix, sigmoid, split_indices,
    validate_pairs, Activation, AdamState, NeuralError, TrainConfig, TrainReport, TrainingPair,
};
use crate::rng::SeededRng;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

/// Column-wise concatenation into a freshly allocated row-major array.
/// `ndarray::concatenate` may return a non-standard layout, which would
/// poison downstream matrix products and flat parameter views.
fn concat_columns(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let (rows, ca) = a.dim();
    let mut out = Array2::zeros((rows, ca + b.ncols()));
    out.slice_mut(s![.., ..ca]).assign(&a);
    out.slice_mut(s![.., ca..]).assign(&b);
    out
}

/// Layer widths and hidden activation for a CVAE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkShape {
    pub encoder1: usize,
    pub encoder2: usize,
    pub latent: usize,
    pub decoder1: usize,
    pub decoder2: usize,
    pub activation: Activation,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            encoder1: 2048,
            encoder2: 2048,
            latent: 64,
            decoder1: 2048,
            decoder2: 2048,
            activation: Activation::Relu,
        }
    }
}

impl NetworkShape {
    fn validate(&self) -> Result<(), NeuralError> {
        for (name, v) in [
            ("encoder1", self.encoder1),
            ("encoder2", self.encoder2),
            ("latent", self.latent),
            ("decoder1", self.decoder1),
            ("decoder2", self.decoder2),
        ] {
            if v == 0 {
                return Err(NeuralError::InvalidConfig(format!("{name} width must be positive")));
            }
        }
        Ok(())
    }
}

/// All weights of a conditional VAE, plus the dimensions they were built
/// for. Tensors are row-major with shape `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvaeParams {
    pub input_dim: usize,
    pub label_dim: usize,
    pub shape: NetworkShape,
    /// Dropout keep probability the model was trained with.
    pub keep_ratio: f64,
    pub w_e1: Array2<f64>,
    pub b_e1: Array1<f64>,
    pub w_e2: Array2<f64>,
    pub b_e2: Array1<f64>,
    /// Final encoder layer; its `2 * latent` outputs split into the mean
    /// and the raw log-variance.
    pub w_e3: Array2<f64>,
    pub b_e3: Array1<f64>,
    pub w_d1: Array2<f64>,
    pub b_d1: Array1<f64>,
    pub w_d2: Array2<f64>,
    pub b_d2: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// Gradients in the same shapes and order as [`CvaeParams`] tensors.
#[derive(Debug, Clone)]
pub struct CvaeGradients {
    pub w_e1: Array2<f64>,
    pub b_e1: Array1<f64>,
    pub w_e2: Array2<f64>,
    pub b_e2: Array1<f64>,
    pub w_e3: Array2<f64>,
    pub b_e3: Array1<f64>,
    pub w_d1: Array2<f64>,
    pub b_d1: Array1<f64>,
    pub w_d2: Array2<f64>,
    pub b_d2: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl CvaeGradients {
    /// Gradient tensors flattened in parameter order.
    #[must_use]
    pub fn parameter_slices(&self) -> Vec<&[f64]> {
        vec![
            self.w_e1.as_slice().unwrap(),
            self.b_e1.as_slice().unwrap(),
            self.w_e2.as_slice().unwrap(),
            self.b_e2.as_slice().unwrap(),
            self.w_e3.as_slice().unwrap(),
            self.b_e3.as_slice().unwrap(),
            self.w_d1.as_slice().unwrap(),
            self.b_d1.as_slice().unwrap(),
            self.w_d2.as_slice().unwrap(),
            self.b_d2.as_slice().unwrap(),
            self.w_out.as_slice().unwrap(),
            self.b_out.as_slice().unwrap(),
        ]
    }
}

/// Dropout masks for the four hidden layers of one batch. Entries are
/// `1 / keep_ratio` or zero.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub encoder1: Array2<f64>,
    pub encoder2: Array2<f64>,
    pub decoder1: Array2<f64>,
    pub decoder2: Array2<f64>,
}

impl DropoutMasks {
    /// Draws masks for a batch, layer by layer in network order,
    /// each row-major.
    #[must_use]
    pub fn sample(rng: &mut SeededRng, keep_ratio: f64, batch: usize, shape: &NetworkShape) -> Self {
        Self {
            encoder1: dropout_mask(rng, keep_ratio, batch, shape.encoder1),
            encoder2: dropout_mask(rng, keep_ratio, batch, shape.encoder2),
            decoder1: dropout_mask(rng, keep_ratio, batch, shape.decoder1),
            decoder2: dropout_mask(rng, keep_ratio, batch, shape.decoder2),
        }
    }
}

/// Everything the backward pass needs from a forward pass.
struct Forward {
    x_in: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    mu: Array2<f64>,
    sigma_raw: Array2<f64>,
    sigma: Array2<f64>,
    z_in: Array2<f64>,
    a4: Array2<f64>,
    h4: Array2<f64>,
    a5: Array2<f64>,
    h5: Array2<f64>,
    a6: Array2<f64>,
    x_out: Array2<f64>,
}

impl CvaeParams {
    /// Glorot-initialized parameters. Weights are drawn from `rng` in
    /// declaration order; biases start at zero.
    pub fn init(
        input_dim: usize,
        label_dim: usize,
        shape: NetworkShape,
        keep_ratio: f64,
        rng: &mut SeededRng,
    ) -> Result<Self, NeuralError> {
        shape.validate()?;
        if input_dim == 0 || label_dim == 0 {
            return Err(NeuralError::InvalidConfig(
                "input_dim and label_dim must be positive".into(),
            ));
        }
        if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
            return Err(NeuralError::InvalidConfig("keep_ratio must be in (0, 1]".into()));
        }
        let enc_in = label_dim + input_dim;
        let dec_in = label_dim + shape.latent;
        Ok(Self {
            input_dim,
            label_dim,
            shape,
            keep_ratio,
            w_e1: glorot(rng, enc_in, shape.encoder1),
            b_e1: Array1::zeros(shape.encoder1),
            w_e2: glorot(rng, shape.encoder1, shape.encoder2),
            b_e2: Array1::zeros(shape.encoder2),
            w_e3: glorot(rng, shape.encoder2, 2 * shape.latent),
            b_e3: Array1::zeros(2 * shape.latent),
            w_d1: glorot(rng, dec_in, shape.decoder1),
            b_d1: Array1::zeros(shape.decoder1),
            w_d2: glorot(rng, shape.decoder1, shape.decoder2),
            b_d2: Array1::zeros(shape.decoder2),
            w_out: glorot(rng, shape.decoder2, input_dim),
            b_out: Array1::zeros(input_dim),
        })
    }

    /// Parameter tensors as flat slices, in the fixed optimizer order.
    #[must_use]
    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_e1.as_slice_mut().unwrap(),
            self.b_e1.as_slice_mut().unwrap(),
            self.w_e2.as_slice_mut().unwrap(),
            self.b_e2.as_slice_mut().unwrap(),
            self.w_e3.as_slice_mut().unwrap(),
            self.b_e3.as_slice_mut().unwrap(),
            self.w_d1.as_slice_mut().unwrap(),
            self.b_d1.as_slice_mut().unwrap(),
            self.w_d2.as_slice_mut().unwrap(),
            self.b_d2.as_slice_mut().unwrap(),
            self.w_out.as_slice_mut().unwrap(),
            self.b_out.as_slice_mut().unwrap(),
        ]
    }

    /// Sizes of the parameter tensors in optimizer order.
    #[must_use]
    pub fn parameter_sizes(&self) -> Vec<usize> {
        vec![
            self.w_e1.len(),
            self.b_e1.len(),
            self.w_e2.len(),
            self.b_e2.len(),
            self.w_e3.len(),
            self.b_e3.len(),
            self.w_d1.len(),
            self.b_d1.len(),
            self.w_d2.len(),
            self.b_d2.len(),
            self.w_out.len(),
            self.b_out.len(),
        ]
    }

    fn check_batch(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        eps: ArrayView2<'_, f64>,
        masks: Option<&DropoutMasks>,
    ) -> Result<usize, NeuralError> {
        let b = x.nrows();
        if x.ncols() != self.input_dim {
            return Err(NeuralError::ShapeMismatch(format!(
                "descriptor width {} does not match input_dim {}",
                x.ncols(),
                self.input_dim
            )));
        }
        if y.nrows() != b || y.ncols() != self.label_dim {
            return Err(NeuralError::ShapeMismatch(format!(
                "label batch {:?} does not match ({b}, {})",
                y.dim(),
                self.label_dim
            )));
        }
        if eps.nrows() != b || eps.ncols() != self.shape.latent {
            return Err(NeuralError::ShapeMismatch(format!(
                "noise batch {:?} does not match ({b}, {})",
                eps.dim(),
                self.shape.latent
            )));
        }
        if let Some(m) = masks {
            let expected = [
                (m.encoder1.dim(), self.shape.encoder1),
                (m.encoder2.dim(), self.shape.encoder2),
                (m.decoder1.dim(), self.shape.decoder1),
                (m.decoder2.dim(), self.shape.decoder2),
            ];
            for ((rows, cols), want_cols) in expected {
                if rows != b || cols != want_cols {
                    return Err(NeuralError::ShapeMismatch(
                        "dropout mask shape does not match the batch".into(),
                    ));
                }
            }
        }
        Ok(b)
    }

    fn forward(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        eps: ArrayView2<'_, f64>,
        masks: Option<&DropoutMasks>,
    ) -> Result<Forward, NeuralError> {
        self.check_batch(x, y, eps, masks)?;
        let act = self.shape.activation;
        let d_z = self.shape.latent;

        let x_in = concat_columns(y, x);
        let a1 = x_in.dot(&self.w_e1) + &self.b_e1;
        let mut h1 = a1.mapv(|v| act.apply(v));
        if let Some(m) = masks {
            h1 *= &m.encoder1;
        }
        let a2 = h1.dot(&self.w_e2) + &self.b_e2;
        let mut h2 = a2.mapv(|v| act.apply(v));
        if let Some(m) = masks {
            h2 *= &m.encoder2;
        }
        let a3 = h2.dot(&self.w_e3) + &self.b_e3;
        let mu = a3.slice(s![.., ..d_z]).to_owned();
        let sigma_raw = a3.slice(s![.., d_z..]).to_owned();
        let sigma = sigma_raw.mapv(|v| (0.5 * v).exp());

        let z = &mu + &(&sigma * &eps);
        let z_in = concat_columns(y, z.view());
        let a4 = z_in.dot(&self.w_d1) + &self.b_d1;
        let mut h4 = a4.mapv(|v| act.apply(v));
        if let Some(m) = masks {
            h4 *= &m.decoder1;
        }
        let a5 = h4.dot(&self.w_d2) + &self.b_d2;
        let mut h5 = a5.mapv(|v| act.apply(v));
        if let Some(m) = masks {
            h5 *= &m.decoder2;
        }
        let a6 = h5.dot(&self.w_out) + &self.b_out;
        let x_out = a6.mapv(sigmoid);

        Ok(Forward {
            x_in,
            a1,
            h1,
            a2,
            h2,
            mu,
            sigma_raw,
            sigma,
            z_in,
            a4,
            h4,
            a5,
            h5,
            a6,
            x_out,
        })
    }

    fn loss_from_forward(&self, fwd: &Forward, x_clean: ArrayView2<'_, f64>) -> f64 {
        let b = fwd.a6.nrows() as f64;
        let bce: f64 = fwd
            .a6
            .iter()
            .zip(x_clean.iter())
            .map(|(&logit, &t)| bce_from_logit(logit, t))
            .sum();
        let kl: f64 = fwd
            .mu
            .iter()
            .zip(fwd.sigma_raw.iter())
            .map(|(&m, &sr)| -0.5 * (1.0 + sr - m * m - sr.exp()))
            .sum();
        (bce + kl) / b
    }

    /// Mean per-sample variational loss of a batch under fixed latent noise
    /// and (optionally) fixed dropout masks. The binary cross-entropy term
    /// is evaluated from the output logits, which is algebraically the same
    /// as forming the sigmoid first but immune to saturation.
    pub fn loss_batch(
        &self,
        x_noisy: ArrayView2<'_, f64>,
        x_clean: ArrayView2<'_, f64>,
        labels: ArrayView2<'_, f64>,
        eps: ArrayView2<'_, f64>,
        masks: Option<&DropoutMasks>,
    ) -> Result<f64, NeuralError> {
        if x_clean.dim() != x_noisy.dim() {
            return Err(NeuralError::ShapeMismatch(
                "clean batch shape differs from noisy batch".into(),
            ));
        }
        let fwd = self.forward(x_noisy, labels, eps, masks)?;
        Ok(self.loss_from_forward(&fwd, x_clean))
    }

    /// Loss and parameter gradients for a batch.
    ///
    /// Shares the exact forward quantities with [`Self::loss_batch`], so a
    /// finite-difference probe of that function is a valid oracle for the
    /// returned gradients.
    pub fn gradients(
        &self,
        x_noisy: ArrayView2<'_, f64>,
        x_clean: ArrayView2<'_, f64>,
        labels: ArrayView2<'_, f64>,
        eps: ArrayView2<'_, f64>,
        masks: Option<&DropoutMasks>,
    ) -> Result<(f64, CvaeGradients), NeuralError> {
        if x_clean.dim() != x_noisy.dim() {
            return Err(NeuralError::ShapeMismatch(
                "clean batch shape differs from noisy batch".into(),
            ));
        }
        let fwd = self.forward(x_noisy, labels, eps, masks)?;
        let loss = self.loss_from_forward(&fwd, x_clean);
        let act = self.shape.activation;
        let b = fwd.a6.nrows() as f64;
        let k = self.label_dim;

        // Output layer: d loss / d a6 = (sigmoid(a6) - target) / B.
        let d_a6 = (&fwd.x_out - &x_clean) / b;
        let g_w_out = fwd.h5.t().dot(&d_a6);
        let g_b_out = d_a6.sum_axis(Axis(0));
        let mut d_h5 = d_a6.dot(&self.w_out.t());

        if let Some(m) = masks {
            d_h5 *= &m.decoder2;
        }
        let d_a5 = &d_h5 * &fwd.a5.mapv(|v| act.derivative(v));
        let g_w_d2 = fwd.h4.t().dot(&d_a5);
        let g_b_d2 = d_a5.sum_axis(Axis(0));
        let mut d_h4 = d_a5.dot(&self.w_d2.t());

        if let Some(m) = masks {
            d_h4 *= &m.decoder1;
        }
        let d_a4 = &d_h4 * &fwd.a4.mapv(|v| act.derivative(v));
        let g_w_d1 = fwd.z_in.t().dot(&d_a4);
        let g_b_d1 = d_a4.sum_axis(Axis(0));
        let d_z_in = d_a4.dot(&self.w_d1.t());

        // Only the latent part of the decoder input feeds back into the
        // encoder; the label columns are constants.
        let d_z = d_z_in.slice(s![.., k..]).to_owned();

        // Reparameterization plus the KL term.
        let d_mu = &d_z + &(&fwd.mu / b);
        let d_sigma_raw =
            &(&d_z * &eps) * &(0.5 * &fwd.sigma) + (fwd.sigma_raw.mapv(f64::exp) - 1.0) * (0.5 / b);
        let d_a3 = concat_columns(d_mu.view(), d_sigma_raw.view());

        let g_w_e3 = fwd.h2.t().dot(&d_a3);
        let g_b_e3 = d_a3.sum_axis(Axis(0));
        let mut d_h2 = d_a3.dot(&self.w_e3.t());

        if let Some(m) = masks {
            d_h2 *= &m.encoder2;
        }
        let d_a2 = &d_h2 * &fwd.a2.mapv(|v| act.derivative(v));
        let g_w_e2 = fwd.h1.t().dot(&d_a2);
        let g_b_e2 = d_a2.sum_axis(Axis(0));
        let mut d_h1 = d_a2.dot(&self.w_e2.t());

        if let Some(m) = masks {
            d_h1 *= &m.encoder1;
        }
        let d_a1 = &d_h1 * &fwd.a1.mapv(|v| act.derivative(v));
        let g_w_e1 = fwd.x_in.t().dot(&d_a1);
        let g_b_e1 = d_a1.sum_axis(Axis(0));

        Ok((
            loss,
            CvaeGradients {
                w_e1: g_w_e1,
                b_e1: g_b_e1,
                w_e2: g_w_e2,
                b_e2: g_b_e2,
                w_e3: g_w_e3,
                b_e3: g_b_e3,
                w_d1: g_w_d1,
                b_d1: g_b_d1,
                w_d2: g_w_d2,
                b_d2: g_b_d2,
                w_out: g_w_out,
                b_out: g_b_out,
            },
        ))
    }

    /// Encodes one descriptor under a one-hot label, without dropout.
    /// Returns `(mu, sigma_raw)`.
    pub fn encode(&self, x: &[f64], label: usize) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
        let (x, y) = self.single_inputs(x, label)?;
        let eps = Array2::zeros((1, self.shape.latent));
        let fwd = self.forward(x.view(), y.view(), eps.view(), None)?;
        Ok((fwd.mu.row(0).to_vec(), fwd.sigma_raw.row(0).to_vec()))
    }

    /// Decodes a latent vector under a one-hot label, without dropout.
    pub fn decode(&self, z: &[f64], label: usize) -> Result<Vec<f64>, NeuralError> {
        if z.len() != self.shape.latent {
            return Err(NeuralError::ShapeMismatch(format!(
                "latent vector has {} entries, network uses {}",
                z.len(),
                self.shape.latent
            )));
        }
        if label >= self.label_dim {
            return Err(NeuralError::LabelOutOfRange {
                label,
                count: self.label_dim,
            });
        }
        let act = self.shape.activation;
        let mut z_in = Array2::zeros((1, self.label_dim + self.shape.latent));
        z_in[(0, label)] = 1.0;
        for (i, &v) in z.iter().enumerate() {
            z_in[(0, self.label_dim + i)] = v;
        }
        let a4 = z_in.dot(&self.w_d1) + &self.b_d1;
        let h4 = a4.mapv(|v| act.apply(v));
        let a5 = h4.dot(&self.w_d2) + &self.b_d2;
        let h5 = a5.mapv(|v| act.apply(v));
        let a6 = h5.dot(&self.w_out) + &self.b_out;
        Ok(a6.mapv(sigmoid).row(0).to_vec())
    }

    fn single_inputs(&self, x: &[f64], label: usize) -> Result<(Array2<f64>, Array2<f64>), NeuralError> {
        if x.len() != self.input_dim {
            return Err(NeuralError::ShapeMismatch(format!(
                "descriptor has {} entries, network uses {}",
                x.len(),
                self.input_dim
            )));
        }
        if label >= self.label_dim {
            return Err(NeuralError::LabelOutOfRange {
                label,
                count: self.label_dim,
            });
        }
        let x_mat = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape matches");
        let mut y = Array2::zeros((1, self.label_dim));
        y[(0, label)] = 1.0;
        Ok((x_mat, y))
    }
}

/// Denoises one descriptor: encodes it, takes the latent mean (inference
/// uses zero noise and no dropout), and decodes it under the same label.
pub fn infer_cvae(params: &CvaeParams, descriptor: &[f64], label: usize) -> Result<Vec<f64>, NeuralError> {
    let (mu, _) = params.encode(descriptor, label)?;
    params.decode(&mu, label)
}

/// Trains a CVAE on descriptor pairs.
///
/// Per batch, the draw order from the seeded stream is: reparameterization
/// noise, then the four dropout masks. Batches are the shuffled training
/// indices in chunks of `batch_size` (the final chunk may be short). The
/// learning rate decays by `lr_decay` after every epoch, and the holdout
/// loss is evaluated with zero latent noise and no dropout.
pub fn train_cvae(
    pairs: &[TrainingPair],
    label_count: usize,
    shape: &NetworkShape,
    cfg: &TrainConfig,
) -> Result<(CvaeParams, TrainReport), NeuralError> {
    cfg.validate()?;
    let (dim, n) = validate_pairs(pairs, label_count)?;

    let mut rng = SeededRng::new(cfg.seed);
    let mut params = CvaeParams::init(dim, label_count, *shape, cfg.keep_ratio, &mut rng)?;
    let mut adam = AdamState::new(&params.parameter_sizes(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let (mut train_idx, holdout_idx) = split_indices(n, cfg.holdout_fraction, &mut rng);

    let holdout = if holdout_idx.is_empty() {
        None
    } else {
        Some(gather_batch(pairs, &holdout_idx, dim, label_count))
    };

    let mut report = TrainReport::default();
    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut train_idx);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let (x_noisy, x_clean, labels) = gather_batch(pairs, chunk, dim, label_count);
            let eps = normal_matrix(&mut rng, chunk.len(), shape.latent);
            let masks = DropoutMasks::sample(&mut rng, cfg.keep_ratio, chunk.len(), shape);
            let (loss, grads) =
                params.gradients(x_noisy.view(), x_clean.view(), labels.view(), eps.view(), Some(&masks))?;
            if !loss.is_finite() {
                return Err(NeuralError::NonFinite { what: "loss", epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.step(lr, &mut params.parameter_slices_mut(), &grads.parameter_slices());
        }

        let holdout_loss = match &holdout {
            Some((hx, hc, hy)) => {
                let eps = Array2::zeros((hx.nrows(), shape.latent));
                Some(params.loss_batch(hx.view(), hc.view(), hy.view(), eps.view(), None)?)
            }
            None => None,
        };
        report.epochs.push(super::EpochStats {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            holdout_loss,
            learning_rate: lr,
        });
        lr *= cfg.lr_decay;
    }
    Ok((params, report))
}
