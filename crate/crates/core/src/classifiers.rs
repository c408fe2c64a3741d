//! The provider's target classifier, the adversary's surrogate, and
//! confusion-matrix evaluation.
//!
//! The surrogate never sees provider-side features: its training view is
//! adversary-side receptions labeled by the access decisions the provider's
//! classifier made on its own receptions of the same transmissions.

use crate::error::{Error, Result};
use crate::nn::{argmax, LayerSpec, MlpModel, ScoreVector, TrainConfig};
use crate::signal::{splits, Dataset, Observer};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Three hidden layers of 100 ReLU units, softmax output.
pub fn classifier_spec(input_dim: usize, classes: usize) -> LayerSpec {
    LayerSpec::new(input_dim, vec![100, 100, 100], classes)
}

/// The service provider's classifier together with the ids of the
/// observations it was trained on (the member set).
#[derive(Debug, Clone)]
pub struct TargetClassifier {
    pub model: MlpModel,
    pub training_ids: Vec<usize>,
}

impl TargetClassifier {
    pub fn from_parts(model: MlpModel, training_ids: Vec<usize>) -> TargetClassifier {
        TargetClassifier {
            model,
            training_ids,
        }
    }

    pub fn scores(&self, features: &[f64]) -> Result<ScoreVector> {
        self.model.predict_scores(features)
    }

    /// The access decision: the class with the largest score.
    pub fn decide(&self, features: &[f64]) -> Result<usize> {
        Ok(self.scores(features)?.argmax())
    }
}

/// The adversary's functional replica of the target classifier.
#[derive(Debug, Clone)]
pub struct SurrogateClassifier {
    pub model: MlpModel,
}

impl SurrogateClassifier {
    pub fn decide(&self, features: &[f64]) -> Result<usize> {
        Ok(self.model.predict_scores(features)?.argmax())
    }
}

fn target_train_split(dataset: &Dataset) -> Result<&'static str> {
    if dataset.splits.contains_key(splits::TARGET_TRAIN) {
        Ok(splits::TARGET_TRAIN)
    } else if dataset.splits.contains_key(splits::SET_A) {
        Ok(splits::SET_A)
    } else {
        Err(Error::Config("dataset has no target training split".into()))
    }
}

fn check_labels(samples: &[(Vec<f64>, usize)], classes: usize) -> Result<()> {
    if let Some((_, label)) = samples.iter().find(|(_, y)| *y >= classes) {
        return Err(Error::InvalidInput(format!(
            "class label {label} outside the {classes}-class label space"
        )));
    }
    Ok(())
}

/// Trains the target classifier on provider-side features of the dataset's
/// training split.
pub fn train_target(
    dataset: &Dataset,
    classes: usize,
    cfg: &TrainConfig,
) -> Result<TargetClassifier> {
    let split = target_train_split(dataset)?;
    let samples = dataset.labeled_features(split, Observer::Provider)?;
    if samples.is_empty() {
        return Err(Error::EmptySampleSet("target training split".into()));
    }
    check_labels(&samples, classes)?;
    let input_dim = samples[0].0.len();
    let mut model = MlpModel::init(classifier_spec(input_dim, classes), cfg.seed)?;
    model.fit(&samples, cfg)?;
    Ok(TargetClassifier {
        model,
        training_ids: dataset.split(split)?.to_vec(),
    })
}

/// Adversary-side training view: overheard features labeled by the observed
/// access decision for the same transmission. Requesting a provider-side view
/// is rejected; the surrogate trains exclusively on what the adversary hears.
pub fn surrogate_training_view(
    dataset: &Dataset,
    observer: Observer,
    target: &TargetClassifier,
    split: &str,
) -> Result<Vec<(Vec<f64>, usize)>> {
    if observer == Observer::Provider {
        return Err(Error::InvalidInput(
            "surrogate classifiers train exclusively on adversary-side features".into(),
        ));
    }
    dataset
        .split(split)?
        .iter()
        .map(|&id| {
            let obs = dataset.observation(id)?;
            let decision = target.decide(&obs.provider_features.flatten())?;
            Ok((obs.adversary_features.flatten(), decision))
        })
        .collect()
}

/// Trains the surrogate on the dataset's surrogate split.
pub fn train_surrogate(
    dataset: &Dataset,
    target: &TargetClassifier,
    cfg: &TrainConfig,
) -> Result<SurrogateClassifier> {
    let samples =
        surrogate_training_view(dataset, Observer::Adversary, target, splits::SURROGATE_TRAIN)?;
    if samples.is_empty() {
        return Err(Error::EmptySampleSet("surrogate training split".into()));
    }
    let classes = target.model.spec().output_dim;
    check_labels(&samples, classes)?;
    let input_dim = samples[0].0.len();
    let mut model = MlpModel::init(classifier_spec(input_dim, classes), cfg.seed.wrapping_add(1))?;
    model.fit(&samples, cfg)?;
    Ok(SurrogateClassifier { model })
}

/// Row-normalized confusion matrix over the true classes present in the
/// evaluation set, plus overall accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// True-class ids with at least one sample, ascending; one row each.
    pub true_classes: Vec<usize>,
    /// Number of predicted-class columns.
    pub predicted_classes: usize,
    /// Row-normalized rates; each row sums to 1.
    pub rates: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    pub fn from_predictions(
        true_labels: &[usize],
        predicted: &[usize],
        predicted_classes: usize,
    ) -> Result<ConfusionMatrix> {
        if true_labels.is_empty() {
            return Err(Error::EmptySampleSet("evaluation".into()));
        }
        if true_labels.len() != predicted.len() {
            return Err(Error::DimMismatch {
                expected: true_labels.len(),
                actual: predicted.len(),
            });
        }
        let mut true_classes: Vec<usize> = true_labels.to_vec();
        true_classes.sort_unstable();
        true_classes.dedup();
        let row_of = |class: usize| true_classes.binary_search(&class).unwrap();

        let mut counts = vec![vec![0usize; predicted_classes]; true_classes.len()];
        let mut correct = 0usize;
        for (&y, &p) in true_labels.iter().zip(predicted) {
            if p >= predicted_classes {
                return Err(Error::InvalidInput(format!(
                    "prediction {p} outside the {predicted_classes}-class label space"
                )));
            }
            counts[row_of(y)][p] += 1;
            if y == p {
                correct += 1;
            }
        }
        let rates = counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter().map(|&c| c as f64 / total as f64).collect()
            })
            .collect();
        Ok(ConfusionMatrix {
            true_classes,
            predicted_classes,
            rates,
            counts,
            accuracy: correct as f64 / true_labels.len() as f64,
        })
    }

    /// Rate for a `(true class, predicted class)` pair.
    pub fn rate(&self, true_class: usize, predicted_class: usize) -> f64 {
        match self.true_classes.binary_search(&true_class) {
            Ok(row) => self.rates[row][predicted_class],
            Err(_) => 0.0,
        }
    }
}

/// Evaluates a model over labeled samples.
pub fn evaluate(
    model: &MlpModel,
    samples: &[(Vec<f64>, usize)],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet("evaluation".into()));
    }
    check_labels(samples, classes)?;
    let input_dim = samples[0].0.len();
    let mut features = Array2::zeros((samples.len(), input_dim));
    for (i, (x, _)) in samples.iter().enumerate() {
        if x.len() != input_dim {
            return Err(Error::DimMismatch {
                expected: input_dim,
                actual: x.len(),
            });
        }
        features.row_mut(i).assign(&ndarray::ArrayView1::from(&x[..]));
    }
    let probs = model.predict_batch(features.view())?;
    let predicted: Vec<usize> = probs
        .rows()
        .into_iter()
        .map(|row| argmax(row.as_slice().unwrap()))
        .collect();
    let true_labels: Vec<usize> = samples.iter().map(|(_, y)| *y).collect();
    ConfusionMatrix::from_predictions(&true_labels, &predicted, classes)
}

/// Fraction of a split's transmissions where the surrogate's decision on the
/// adversary-side reception matches the target's decision on the
/// provider-side reception.
pub fn paired_agreement(
    target: &TargetClassifier,
    surrogate: &SurrogateClassifier,
    dataset: &Dataset,
    split: &str,
) -> Result<f64> {
    let ids = dataset.split(split)?;
    if ids.is_empty() {
        return Err(Error::EmptySampleSet(format!("split {split}")));
    }
    let mut agree = 0usize;
    for &id in ids {
        let obs = dataset.observation(id)?;
        let target_decision = target.decide(&obs.provider_features.flatten())?;
        let surrogate_decision = surrogate.decide(&obs.adversary_features.flatten())?;
        if target_decision == surrogate_decision {
            agree += 1;
        }
    }
    Ok(agree as f64 / ids.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_scenario, ScenarioConfig, SettingConfig};

    fn small_setting1() -> ScenarioConfig {
        let mut config = ScenarioConfig::setting1_strong();
        if let SettingConfig::Setting1(ref mut s) = config.setting {
            s.target_train = 400;
            s.target_test = 200;
            s.surrogate_train = 200;
            s.surrogate_test = 200;
            s.mia_members = 100;
            s.mia_nonmembers = 100;
        }
        config
    }

    fn quick_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 15,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn perfect_predictor_gives_identity_matrix() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        let cm = ConfusionMatrix::from_predictions(&truth, &truth, 3).unwrap();
        for (r, row) in cm.rates.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(v, if r == c { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(cm.accuracy, 1.0);
    }

    #[test]
    fn constant_predictor_on_balanced_set_scores_half() {
        let truth = vec![0, 1, 0, 1, 0, 1];
        let predicted = vec![0; 6];
        let cm = ConfusionMatrix::from_predictions(&truth, &predicted, 2).unwrap();
        assert_eq!(cm.accuracy, 0.5);
    }

    #[test]
    fn rows_sum_to_one_and_accuracy_is_weighted_trace() {
        let truth = vec![0, 0, 0, 1, 1, 1, 1, 1];
        let predicted = vec![0, 1, 0, 1, 1, 0, 1, 1];
        let cm = ConfusionMatrix::from_predictions(&truth, &predicted, 2).unwrap();
        for row in &cm.rates {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
        }
        let weighted: f64 = (3.0 / 8.0) * cm.rate(0, 0) + (5.0 / 8.0) * cm.rate(1, 1);
        assert!((cm.accuracy - weighted).abs() < 1e-12);
    }

    #[test]
    fn empty_evaluation_is_rejected() {
        assert!(matches!(
            ConfusionMatrix::from_predictions(&[], &[], 2),
            Err(Error::EmptySampleSet(_))
        ));
    }

    #[test]
    fn target_and_surrogate_separate_easy_classes() {
        let ds = synth_scenario(&small_setting1(), 31).unwrap();
        let target = train_target(&ds, 2, &quick_cfg(1)).unwrap();
        let test = ds
            .labeled_features(splits::TARGET_TEST, Observer::Provider)
            .unwrap();
        let cm = evaluate(&target.model, &test, 2).unwrap();
        assert!(cm.accuracy >= 0.95, "target accuracy {}", cm.accuracy);

        let surrogate = train_surrogate(&ds, &target, &quick_cfg(2)).unwrap();
        let surrogate_test = ds
            .labeled_features(splits::SURROGATE_TEST, Observer::Adversary)
            .unwrap();
        let cm = evaluate(&surrogate.model, &surrogate_test, 2).unwrap();
        assert!(cm.accuracy >= 0.95, "surrogate accuracy {}", cm.accuracy);

        let agreement =
            paired_agreement(&target, &surrogate, &ds, splits::SURROGATE_TEST).unwrap();
        assert!(agreement >= 0.95, "agreement {agreement}");
    }

    #[test]
    fn degenerate_relabeling_gives_constant_predictions() {
        let mut ds = synth_scenario(&small_setting1(), 33).unwrap();
        for obs in &mut ds.observations {
            obs.class_label = 1;
        }
        let target = train_target(&ds, 2, &quick_cfg(3)).unwrap();
        let test = ds
            .labeled_features(splits::TARGET_TEST, Observer::Provider)
            .unwrap();
        for (x, _) in &test {
            assert_eq!(target.decide(x).unwrap(), 1);
        }
    }

    #[test]
    fn provider_side_surrogate_view_is_rejected() {
        let ds = synth_scenario(&small_setting1(), 35).unwrap();
        let target = train_target(&ds, 2, &quick_cfg(4)).unwrap();
        let err = surrogate_training_view(
            &ds,
            Observer::Provider,
            &target,
            splits::SURROGATE_TRAIN,
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn retraining_with_same_seed_reproduces_accuracy() {
        let ds = synth_scenario(&small_setting1(), 37).unwrap();
        let test = ds
            .labeled_features(splits::TARGET_TEST, Observer::Provider)
            .unwrap();
        let a = train_target(&ds, 2, &quick_cfg(5)).unwrap();
        let b = train_target(&ds, 2, &quick_cfg(5)).unwrap();
        let acc_a = evaluate(&a.model, &test, 2).unwrap().accuracy;
        let acc_b = evaluate(&b.model, &test, 2).unwrap().accuracy;
        assert_eq!(acc_a, acc_b);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn label_space_mismatch_is_rejected() {
        let ds = synth_scenario(&small_setting1(), 39).unwrap();
        // Setting-1 labels are {0, 1}; a 1-class space must be rejected.
        assert!(matches!(
            train_target(&ds, 1, &quick_cfg(6)),
            Err(Error::InvalidInput(_))
        ));
    }
}
