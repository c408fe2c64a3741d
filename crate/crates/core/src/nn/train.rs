//! Backpropagation training with the Adam optimizer.

use super::{softmax_rows, MlpModel};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_epochs(mut self, epochs: usize) -> TrainConfig {
        self.epochs = epochs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> TrainConfig {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.adam_epsilon <= 0.0 {
            return Err(Error::Config("adam_epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// First/second moment estimates, one entry per weight matrix and bias vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> AdamState {
        AdamState {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            t: 0,
        }
    }

    /// Applies one Adam update with the given gradients.
    pub fn step(
        &mut self,
        model: &mut MlpModel,
        grads_w: &[Array2<f64>],
        grads_b: &[Array1<f64>],
        cfg: &TrainConfig,
    ) {
        self.t += 1;
        let t = self.t as f64;
        let bias1 = 1.0 - cfg.adam_beta1.powf(t);
        let bias2 = 1.0 - cfg.adam_beta2.powf(t);
        for l in 0..model.weights.len() {
            update_tensor(
                &mut model.weights[l],
                &mut self.m_w[l],
                &mut self.v_w[l],
                &grads_w[l],
                cfg,
                bias1,
                bias2,
            );
            update_vector(
                &mut model.biases[l],
                &mut self.m_b[l],
                &mut self.v_b[l],
                &grads_b[l],
                cfg,
                bias1,
                bias2,
            );
        }
    }
}

fn update_tensor(
    param: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    grad: &Array2<f64>,
    cfg: &TrainConfig,
    bias1: f64,
    bias2: f64,
) {
    ndarray::Zip::from(param)
        .and(m)
        .and(v)
        .and(grad)
        .for_each(|p, m, v, &g| {
            *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * g;
            *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        });
}

fn update_vector(
    param: &mut Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    grad: &Array1<f64>,
    cfg: &TrainConfig,
    bias1: f64,
    bias2: f64,
) {
    ndarray::Zip::from(param)
        .and(m)
        .and(v)
        .and(grad)
        .for_each(|p, m, v, &g| {
            *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * g;
            *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        });
}

impl MlpModel {
    /// Trains on `(features, class)` pairs with uniform sample weights.
    /// Returns the per-epoch mean cross-entropy trace.
    pub fn fit(&mut self, samples: &[(Vec<f64>, usize)], cfg: &TrainConfig) -> Result<Vec<f64>> {
        let weights = vec![1.0; samples.len()];
        self.fit_weighted(samples, &weights, cfg)
    }

    /// Trains with per-sample weights (normalized internally to mean one).
    pub fn fit_weighted(
        &mut self,
        samples: &[(Vec<f64>, usize)],
        sample_weights: &[f64],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        if samples.is_empty() {
            return Err(Error::EmptySampleSet("training data".into()));
        }
        if sample_weights.len() != samples.len() {
            return Err(Error::InvalidInput(format!(
                "{} sample weights for {} samples",
                sample_weights.len(),
                samples.len()
            )));
        }
        if sample_weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidInput("sample weights must be finite and >= 0".into()));
        }
        let n = samples.len();
        let in_dim = self.spec.input_dim;
        let out_dim = self.spec.output_dim;
        let mut features = Array2::zeros((n, in_dim));
        let mut labels = Vec::with_capacity(n);
        for (i, (x, y)) in samples.iter().enumerate() {
            if x.len() != in_dim {
                return Err(Error::DimMismatch {
                    expected: in_dim,
                    actual: x.len(),
                });
            }
            if *y >= out_dim {
                return Err(Error::InvalidInput(format!(
                    "class label {y} out of range for {out_dim} outputs"
                )));
            }
            features.row_mut(i).assign(&ndarray::ArrayView1::from(&x[..]));
            labels.push(*y);
        }
        let weight_sum: f64 = sample_weights.iter().sum();
        if weight_sum <= 0.0 {
            return Err(Error::InvalidInput("sample weights sum to zero".into()));
        }
        let norm = n as f64 / weight_sum;
        let weights: Vec<f64> = sample_weights.iter().map(|&w| w * norm).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut adam = AdamState::new(self);
        let mut order: Vec<usize> = (0..n).collect();
        let mut trace = Vec::with_capacity(cfg.epochs);

        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch_x = features.select(Axis(0), chunk);
                let batch_y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let batch_w: Vec<f64> = chunk.iter().map(|&i| weights[i]).collect();
                let (loss, grads_w, grads_b) = self.batch_gradients(&batch_x, &batch_y, &batch_w);
                epoch_loss += loss * chunk.len() as f64;
                adam.step(self, &grads_w, &grads_b, cfg);
            }
            trace.push(epoch_loss / n as f64);
        }
        if cfg.epochs > 0 {
            self.mark_trained();
        }
        Ok(trace)
    }

    /// Weighted mean cross-entropy over a batch plus parameter gradients.
    fn batch_gradients(
        &self,
        batch_x: &Array2<f64>,
        batch_y: &[usize],
        batch_w: &[f64],
    ) -> (f64, Vec<Array2<f64>>, Vec<Array1<f64>>) {
        let layers = self.weights.len();
        let m = batch_x.nrows() as f64;

        // Forward, retaining pre-activations.
        let mut pre = Vec::with_capacity(layers);
        let mut h = batch_x.clone();
        let mut acts: Vec<Array2<f64>> = vec![h.clone()];
        for l in 0..layers {
            let mut z = h.dot(&self.weights[l].t());
            z += &self
                .biases[l]
                .view()
                .insert_axis(Axis(0))
                .broadcast(z.dim())
                .unwrap();
            pre.push(z.clone());
            if l + 1 < layers {
                h = z.mapv(|v| v.max(0.0));
                acts.push(h.clone());
            }
        }
        let logits = pre.last().unwrap().clone();

        // Cross-entropy from logits via log-sum-exp for stability.
        let mut loss = 0.0;
        for (i, (&y, &w)) in batch_y.iter().zip(batch_w).enumerate() {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            loss += w * (lse - row[y]);
        }
        loss /= m;

        // Fused softmax / cross-entropy gradient at the output.
        let mut delta = logits;
        softmax_rows(&mut delta);
        for (i, (&y, &w)) in batch_y.iter().zip(batch_w).enumerate() {
            let mut row = delta.row_mut(i);
            row[y] -= 1.0;
            row.mapv_inplace(|v| v * w / m);
        }

        // Backward.
        let mut grads_w = vec![Array2::zeros((0, 0)); layers];
        let mut grads_b = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            grads_w[l] = delta.t().dot(&acts[l]);
            grads_b[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&self.weights[l]);
                ndarray::Zip::from(&mut upstream)
                    .and(&pre[l - 1])
                    .for_each(|u, &z| {
                        if z <= 0.0 {
                            *u = 0.0;
                        }
                    });
                delta = upstream;
            }
        }
        (loss, grads_w, grads_b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use rand::Rng;

    fn blob_dataset(seed: u64, per_class: usize) -> Vec<(Vec<f64>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for i in 0..per_class {
            let _ = i;
            samples.push((
                vec![rng.gen_range(-1.0..1.0) + 3.0, rng.gen_range(-1.0..1.0) + 3.0],
                1,
            ));
            samples.push((
                vec![rng.gen_range(-1.0..1.0) - 3.0, rng.gen_range(-1.0..1.0) - 3.0],
                0,
            ));
        }
        samples
    }

    fn train_accuracy(model: &MlpModel, samples: &[(Vec<f64>, usize)]) -> f64 {
        let correct = samples
            .iter()
            .filter(|(x, y)| model.predict_scores(x).unwrap().argmax() == *y)
            .count();
        correct as f64 / samples.len() as f64
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        let samples = blob_dataset(5, 100);
        let mut model = MlpModel::init(LayerSpec::new(2, vec![16], 2), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let trace = model.fit(&samples, &cfg).unwrap();
        assert!(train_accuracy(&model, &samples) >= 0.99);
        // Smoothed loss trends down.
        let head: f64 = trace[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = trace[trace.len() - 5..].iter().sum::<f64>() / 5.0;
        assert!(tail < head);
    }

    #[test]
    fn xor_is_learnable_with_one_hidden_layer() {
        let points = [
            (vec![0.0, 0.0], 0),
            (vec![0.0, 1.0], 1),
            (vec![1.0, 0.0], 1),
            (vec![1.0, 1.0], 0),
        ];
        let samples: Vec<(Vec<f64>, usize)> = (0..64).map(|i| points[i % 4].clone()).collect();
        let mut model = MlpModel::init(LayerSpec::new(2, vec![8], 2), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 400,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        model.fit(&samples, &cfg).unwrap();
        assert!((train_accuracy(&model, &samples) - 1.0).abs() < f64::EPSILON);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let samples = blob_dataset(5, 10);
        let mut model = MlpModel::init(LayerSpec::new(2, vec![4], 2), 1).unwrap();
        let before = model.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let trace = model.fit(&samples, &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!(model, before);
        assert!(!model.is_trained());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let samples = blob_dataset(2, 50);
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let mut a = MlpModel::init(LayerSpec::new(2, vec![8], 2), 7).unwrap();
        let mut b = MlpModel::init(LayerSpec::new(2, vec![8], 2), 7).unwrap();
        a.fit(&samples, &cfg).unwrap();
        b.fit(&samples, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adam_step_with_zero_gradient_keeps_parameters() {
        let mut model = MlpModel::init(LayerSpec::new(3, vec![4], 2), 9).unwrap();
        let before = model.clone();
        let mut adam = AdamState::new(&model);
        let grads_w: Vec<Array2<f64>> =
            model.weights().iter().map(|w| Array2::zeros(w.dim())).collect();
        let grads_b: Vec<Array1<f64>> =
            model.biases().iter().map(|b| Array1::zeros(b.len())).collect();
        adam.step(&mut model, &grads_w, &grads_b, &TrainConfig::default());
        assert_eq!(model, before);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut model = MlpModel::init(LayerSpec::new(2, vec![4], 2), 1).unwrap();
        let err = model.fit(&[], &TrainConfig::default());
        assert!(matches!(err, Err(Error::EmptySampleSet(_))));
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let mut model = MlpModel::init(LayerSpec::new(2, vec![4], 2), 1).unwrap();
        let err = model.fit(&[(vec![0.0, 0.0], 5)], &TrainConfig::default());
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            adam_beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
