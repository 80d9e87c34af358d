//! Adam optimizer over flat parameter slices.

/// First and second moment estimates for a fixed list of parameter tensors,
/// updated with bias-corrected Adam steps.
#[derive(Debug, Clone)]
pub(crate) struct AdamState {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    /// Completed steps; bias correction uses `t + 1` during the step.
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub(crate) fn new(sizes: &[usize], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    /// Applies one update: `p -= lr * m_hat / (sqrt(v_hat) + epsilon)`.
    ///
    /// `params` and `grads` must list tensors in the same order as the
    /// `sizes` the state was created with.
    pub(crate) fn step(&mut self, lr: f64, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len(), "tensor count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(param.len(), m.len(), "tensor size mismatch");
            assert_eq!(grad.len(), m.len(), "gradient size mismatch");
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
