//! Feedforward networks trained from scratch.
//!
//! Dense ReLU layers with a softmax output, cross-entropy loss, Adam updates,
//! and analytic gradients of scalar readouts with respect to the *inputs*.
//! The input gradients are what the defense solver differentiates through, so
//! they are first-class here rather than an afterthought.

mod grad;
mod io;
mod train;

pub use grad::Readout;
pub use train::{AdamState, TrainConfig};

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shape of a multilayer perceptron: dense hidden layers with ReLU, softmax output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl LayerSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> LayerSpec {
        LayerSpec {
            input_dim,
            hidden_dims,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "all layer dimensions must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Layer sizes as `(fan_in, fan_out)` pairs, input to output.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }
}

/// Per-class probabilities on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    /// Tolerance on the sum-to-one invariant.
    pub const SIMPLEX_TOL: f64 = 1e-9;

    /// Validates nonnegativity and normalization before wrapping.
    pub fn new(probabilities: Vec<f64>) -> Result<ScoreVector> {
        if probabilities.is_empty() {
            return Err(Error::InvalidInput("empty score vector".into()));
        }
        if probabilities.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidInput(
                "score vector has negative or non-finite entries".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > Self::SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!(
                "score vector sums to {sum}, expected 1"
            )));
        }
        Ok(ScoreVector(probabilities))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest score; ties resolve to the first index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Scores in non-increasing order plus the permutation that produced them:
    /// `sorted[k] == self[perm[k]]`. Ties keep their original relative order.
    pub fn sorted_desc(&self) -> (Vec<f64>, Vec<usize>) {
        let mut perm: Vec<usize> = (0..self.0.len()).collect();
        perm.sort_by(|&a, &b| self.0[b].partial_cmp(&self.0[a]).unwrap());
        let sorted = perm.iter().map(|&i| self.0[i]).collect();
        (sorted, perm)
    }
}

/// First index of the maximum entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let _ = values[best];
    best
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
}

/// Feedforward network with explicit weights; inference is reentrant, training
/// is single-writer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    spec: LayerSpec,
    /// One `(out, in)` matrix per layer.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    trained: bool,
}

impl MlpModel {
    /// Random initialization: uniform Kaiming-style scale per layer, zero biases.
    pub fn init(spec: LayerSpec, seed: u64) -> Result<MlpModel> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (fan_in, fan_out) in spec.layer_dims() {
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpModel {
            spec,
            weights,
            biases,
            trained: false,
        })
    }

    /// All-zero weights; forward passes emit the uniform distribution.
    pub fn zeroed(spec: LayerSpec) -> Result<MlpModel> {
        spec.validate()?;
        let weights = spec
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| Array2::zeros((fan_out, fan_in)))
            .collect();
        let biases = spec
            .layer_dims()
            .iter()
            .map(|&(_, fan_out)| Array1::zeros(fan_out))
            .collect();
        Ok(MlpModel {
            spec,
            weights,
            biases,
            trained: false,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.spec.input_dim {
            return Err(Error::DimMismatch {
                expected: self.spec.input_dim,
                actual: features.len(),
            });
        }
        Ok(())
    }

    /// Raw output-layer logits for a single input.
    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_input(features)?;
        let mut h = Array1::from_vec(features.to_vec());
        let layers = self.weights.len();
        for l in 0..layers {
            let mut z = self.weights[l].dot(&h) + &self.biases[l];
            if l + 1 < layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h.to_vec())
    }

    /// Softmax class probabilities for a single input.
    pub fn predict_scores(&self, features: &[f64]) -> Result<ScoreVector> {
        let logits = self.logits(features)?;
        ScoreVector::new(softmax(&logits))
    }

    /// Softmax probabilities for a batch, one row per sample.
    pub fn predict_batch(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.spec.input_dim {
            return Err(Error::DimMismatch {
                expected: self.spec.input_dim,
                actual: features.ncols(),
            });
        }
        let mut logits = self.forward_logits_batch(&features);
        softmax_rows(&mut logits);
        Ok(logits)
    }

    fn forward_logits_batch(&self, features: &ArrayView2<f64>) -> Array2<f64> {
        let layers = self.weights.len();
        let mut h = features.to_owned();
        for l in 0..layers {
            let mut z = h.dot(&self.weights[l].t());
            z += &self
                .biases[l]
                .view()
                .insert_axis(Axis(0))
                .broadcast(z.dim())
                .unwrap();
            if l + 1 < layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        h
    }

    /// Forward pass retaining pre-activations, for backward passes.
    /// Returns `(pre_activations per layer, hidden activations per layer)`;
    /// the last pre-activation row holds the output logits.
    fn forward_cached(&self, features: ArrayView1<f64>) -> (Vec<Array1<f64>>, Vec<Array1<f64>>) {
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut acts = Vec::with_capacity(layers);
        let mut h = features.to_owned();
        for l in 0..layers {
            let z = self.weights[l].dot(&h) + &self.biases[l];
            pre.push(z.clone());
            if l + 1 < layers {
                h = z.mapv(|v| v.max(0.0));
                acts.push(h.clone());
            }
        }
        (pre, acts)
    }

    pub(crate) fn mark_trained(&mut self) {
        self.trained = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let spec = LayerSpec::new(4, vec![8, 8], 3);
        let a = MlpModel::init(spec.clone(), 11).unwrap();
        let b = MlpModel::init(spec, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_differs_across_seeds() {
        let spec = LayerSpec::new(4, vec![8], 3);
        let a = MlpModel::init(spec.clone(), 1).unwrap();
        let b = MlpModel::init(spec, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_weight_model_is_uniform() {
        let model = MlpModel::zeroed(LayerSpec::new(5, vec![7], 4)).unwrap();
        let scores = model.predict_scores(&[0.3, -1.0, 2.0, 0.0, 5.0]).unwrap();
        for &p in scores.probabilities() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn param_count_matches_shape_arithmetic() {
        // 32 -> 100 -> 100 -> 100 -> 2
        let model = MlpModel::init(LayerSpec::new(32, vec![100, 100, 100], 2), 0).unwrap();
        let expected = 33 * 100 + 101 * 100 * 2 + 101 * 2;
        assert_eq!(model.param_count(), expected);
    }

    #[test]
    fn scores_sum_to_one_on_random_inputs() {
        let model = MlpModel::init(LayerSpec::new(8, vec![16, 16], 5), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let s = model.predict_scores(&x).unwrap();
            let sum: f64 = s.probabilities().iter().sum();
            assert!((sum - 1.0).abs() <= ScoreVector::SIMPLEX_TOL);
            assert!(s.probabilities().iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let model = MlpModel::init(LayerSpec::new(6, vec![10], 3), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows = 9;
        let x = Array2::from_shape_fn((rows, 6), |_| rng.gen_range(-2.0..2.0));
        let batch = model.predict_batch(x.view()).unwrap();
        for i in 0..rows {
            let single = model.predict_scores(&x.row(i).to_vec()).unwrap();
            for (a, b) in batch.row(i).iter().zip(single.probabilities()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let model = MlpModel::init(LayerSpec::new(4, vec![4], 2), 0).unwrap();
        assert!(matches!(
            model.predict_scores(&[1.0, 2.0]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn argmax_breaks_ties_to_first() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.4]), 1);
    }

    #[test]
    fn sorted_desc_tracks_permutation() {
        let s = ScoreVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let (sorted, perm) = s.sorted_desc();
        assert_eq!(sorted, vec![0.5, 0.3, 0.2]);
        assert_eq!(perm, vec![1, 2, 0]);
    }

    #[test]
    fn score_vector_rejects_bad_input() {
        assert!(ScoreVector::new(vec![0.5, 0.6]).is_err());
        assert!(ScoreVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ScoreVector::new(vec![]).is_err());
    }
}
