//! Gradients of scalar readouts with respect to model inputs.

use super::{softmax, MlpModel};
use crate::error::{Error, Result};
use ndarray::{Array1, ArrayView1};

/// A differentiable scalar of the network output.
///
/// `Logit` reads a raw output-layer component, `Prob` a softmax component,
/// and `ProbDistToHalf` the distance `|s_c - 0.5|` the defense solver
/// minimizes. At the kink `s_c = 0.5` the subgradient is fixed to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Logit(usize),
    Prob(usize),
    ProbDistToHalf(usize),
}

impl Readout {
    fn component(&self) -> usize {
        match *self {
            Readout::Logit(c) | Readout::Prob(c) | Readout::ProbDistToHalf(c) => c,
        }
    }
}

impl MlpModel {
    /// Evaluates the readout at `features`.
    pub fn readout_value(&self, features: &[f64], readout: Readout) -> Result<f64> {
        let logits = self.logits(features)?;
        self.check_component(readout, logits.len())?;
        Ok(match readout {
            Readout::Logit(c) => logits[c],
            Readout::Prob(c) => softmax(&logits)[c],
            Readout::ProbDistToHalf(c) => (softmax(&logits)[c] - 0.5).abs(),
        })
    }

    /// Analytic gradient of the readout with respect to the input features.
    ///
    /// ReLU uses the subgradient convention `relu'(0) = 0`; the absolute-value
    /// readout returns the zero vector exactly at `s_c = 0.5`.
    pub fn input_gradient(&self, features: &[f64], readout: Readout) -> Result<Vec<f64>> {
        self.check_input(features)?;
        let (pre, _acts) = self.forward_cached(ArrayView1::from(features));
        let logits = pre.last().unwrap();
        self.check_component(readout, logits.len())?;

        // Seed gradient at the output layer.
        let out_dim = logits.len();
        let mut delta: Array1<f64> = Array1::zeros(out_dim);
        match readout {
            Readout::Logit(c) => {
                delta[c] = 1.0;
            }
            Readout::Prob(c) => {
                let probs = softmax(&logits.to_vec());
                softmax_component_gradient(&mut delta, &probs, c, 1.0);
            }
            Readout::ProbDistToHalf(c) => {
                let probs = softmax(&logits.to_vec());
                let sign = match probs[c].partial_cmp(&0.5).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Less => -1.0,
                    std::cmp::Ordering::Equal => return Ok(vec![0.0; features.len()]),
                };
                softmax_component_gradient(&mut delta, &probs, c, sign);
            }
        }

        // Backward through the hidden layers down to the input.
        let layers = self.weights.len();
        for l in (0..layers).rev() {
            let mut upstream = self.weights[l].t().dot(&delta);
            if l > 0 {
                ndarray::Zip::from(&mut upstream)
                    .and(&pre[l - 1])
                    .for_each(|u, &z| {
                        if z <= 0.0 {
                            *u = 0.0;
                        }
                    });
            }
            delta = upstream;
        }
        Ok(delta.to_vec())
    }

    fn check_component(&self, readout: Readout, out_dim: usize) -> Result<()> {
        if readout.component() >= out_dim {
            return Err(Error::InvalidInput(format!(
                "readout component {} out of range for {out_dim} outputs",
                readout.component()
            )));
        }
        Ok(())
    }
}

/// `d s_c / d z_j = s_c (δ_cj - s_j)`, scaled by `factor`.
fn softmax_component_gradient(delta: &mut Array1<f64>, probs: &[f64], c: usize, factor: f64) {
    for (j, d) in delta.iter_mut().enumerate() {
        let indicator = if j == c { 1.0 } else { 0.0 };
        *d = factor * probs[c] * (indicator - probs[j]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite difference of a readout, the independent oracle.
    fn fd_gradient(model: &MlpModel, x: &[f64], readout: Readout, h: f64) -> Vec<f64> {
        let mut grad = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for k in 0..x.len() {
            probe[k] = x[k] + h;
            let plus = model.readout_value(&probe, readout).unwrap();
            probe[k] = x[k] - h;
            let minus = model.readout_value(&probe, readout).unwrap();
            probe[k] = x[k];
            grad[k] = (plus - minus) / (2.0 * h);
        }
        grad
    }

    fn max_rel_error(analytic: &[f64], fd: &[f64]) -> f64 {
        let scale = fd.iter().fold(0.0f64, |m, &g| m.max(g.abs())).max(1e-6);
        analytic
            .iter()
            .zip(fd)
            .map(|(a, f)| (a - f).abs() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn linear_single_layer_logit_gradient_is_weight_row() {
        let mut model = MlpModel::init(LayerSpec::new(4, vec![], 3), 21).unwrap();
        model.biases[0].fill(0.5);
        let x = [0.3, -0.7, 1.2, 0.0];
        let grad = model.input_gradient(&x, Readout::Logit(1)).unwrap();
        let row: Vec<f64> = model.weights[0].row(1).to_vec();
        assert_eq!(grad, row);
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for case in 0..100 {
            let spec = LayerSpec::new(5, vec![9, 7], 3);
            let model = MlpModel::init(spec, 1000 + case).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let readout = match case % 3 {
                0 => Readout::Logit((case as usize) % 3),
                1 => Readout::Prob((case as usize) % 3),
                _ => Readout::ProbDistToHalf((case as usize) % 3),
            };
            let analytic = model.input_gradient(&x, readout).unwrap();
            let fd = fd_gradient(&model, &x, readout, 1e-5);
            assert!(
                max_rel_error(&analytic, &fd) <= 1e-4,
                "case {case}: readout {readout:?} rel err {}",
                max_rel_error(&analytic, &fd)
            );
        }
    }

    #[test]
    fn abs_readout_at_half_returns_zero_subgradient() {
        // Two equal logits give s = [0.5, 0.5] exactly.
        let model = MlpModel::zeroed(LayerSpec::new(3, vec![4], 2)).unwrap();
        let grad = model
            .input_gradient(&[1.0, -2.0, 0.5], Readout::ProbDistToHalf(1))
            .unwrap();
        assert_eq!(grad, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn component_out_of_range_is_rejected() {
        let model = MlpModel::zeroed(LayerSpec::new(2, vec![], 2)).unwrap();
        assert!(model.input_gradient(&[0.0, 0.0], Readout::Prob(5)).is_err());
    }
}
