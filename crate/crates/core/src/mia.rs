//! Membership inference: the empirical-gain objective, attack model training
//! in both input modes, and the noisy-variation evaluation protocol.
//!
//! A membership inference model is a 2-class network whose class-1 probability
//! is the membership score `m(.) in [0, 1]`. Label-based models consume
//! adversary-side features plus a one-hot class; score-based models consume a
//! classification score vector sorted in non-increasing order, which collapses
//! the input space the attack has to learn.

use crate::classifiers::{ConfusionMatrix, SurrogateClassifier};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, MlpModel, ScoreVector, TrainConfig};
use crate::signal::{perturb_features, Dataset, FeatureVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Floor applied to membership scores inside the empirical-gain logarithms.
pub const GAIN_CLAMP: f64 = 1e-12;

/// Floor for scores entering the log-space input map of score-based models.
/// Far below [`GAIN_CLAMP`]: the depth of a score vector's tail is exactly
/// the structure that separates memorized training scores from fresh ones.
const LOG_INPUT_FLOOR: f64 = 1e-300;

/// Input layout of a membership inference model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum MiaMode {
    /// Raw features plus a one-hot encoding of the (surrogate-assigned) class.
    LabelBased { feature_dim: usize, classes: usize },
    /// A score vector sorted in non-increasing order.
    ScoreBased { classes: usize },
}

impl MiaMode {
    pub fn input_dim(&self) -> usize {
        match *self {
            MiaMode::LabelBased {
                feature_dim,
                classes,
            } => feature_dim + classes,
            MiaMode::ScoreBased { classes } => classes,
        }
    }
}

/// Per-feature standardization fitted on the training pools. Applied to the
/// raw feature portion of label-based inputs; one-hot class coordinates and
/// score vectors pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits over the leading `dims` coordinates of the inputs: per-feature
    /// centering with one shared scale (the root mean variance), so the
    /// relative magnitudes of the coordinates are preserved.
    fn fit(inputs: &[Vec<f64>], dims: usize) -> Normalizer {
        let n = inputs.len() as f64;
        let mut mean = vec![0.0; dims];
        for input in inputs {
            for (m, v) in mean.iter_mut().zip(input) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var_sum = 0.0;
        for input in inputs {
            for (v, m) in input[..dims].iter().zip(&mean) {
                var_sum += (v - m) * (v - m);
            }
        }
        let scale = (var_sum / (n * dims as f64)).sqrt().max(1e-9);
        Normalizer {
            mean,
            std: vec![scale; dims],
        }
    }

    fn apply(&self, input: &mut [f64]) {
        for ((v, m), s) in input.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}

/// Binary membership scorer; class-1 probability is the membership score.
#[derive(Debug, Clone)]
pub struct MiaModel {
    pub mode: MiaMode,
    pub model: MlpModel,
    /// Present on label-based models; fitted during training.
    pub normalizer: Option<Normalizer>,
}

/// Membership score and thresholded decision; ties at 0.5 count as member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiaVerdict {
    pub membership_score: f64,
    pub is_member: bool,
}

impl MiaModel {
    /// Wraps an existing 2-class model; its input width must match the mode.
    pub fn from_parts(mode: MiaMode, model: MlpModel) -> Result<MiaModel> {
        MiaModel::from_parts_normalized(mode, model, None)
    }

    pub fn from_parts_normalized(
        mode: MiaMode,
        model: MlpModel,
        normalizer: Option<Normalizer>,
    ) -> Result<MiaModel> {
        if model.spec().output_dim != 2 {
            return Err(Error::Config(
                "membership inference models need a 2-class output".into(),
            ));
        }
        if model.spec().input_dim != mode.input_dim() {
            return Err(Error::DimMismatch {
                expected: mode.input_dim(),
                actual: model.spec().input_dim,
            });
        }
        if let Some(n) = &normalizer {
            if n.mean.len() > mode.input_dim() || n.mean.len() != n.std.len() {
                return Err(Error::Config("normalizer shape mismatch".into()));
            }
        }
        Ok(MiaModel {
            mode,
            model,
            normalizer,
        })
    }

    /// Encodes `(features, class)` for a label-based model.
    pub fn encode_labeled(&self, features: &[f64], label: usize) -> Result<Vec<f64>> {
        match self.mode {
            MiaMode::LabelBased {
                feature_dim,
                classes,
            } => {
                if features.len() != feature_dim {
                    return Err(Error::DimMismatch {
                        expected: feature_dim,
                        actual: features.len(),
                    });
                }
                if label >= classes {
                    return Err(Error::InvalidInput(format!(
                        "class {label} outside the {classes}-class label space"
                    )));
                }
                let mut input = Vec::with_capacity(feature_dim + classes);
                input.extend_from_slice(features);
                let mut one_hot = vec![0.0; classes];
                one_hot[label] = 1.0;
                input.extend_from_slice(&one_hot);
                Ok(input)
            }
            MiaMode::ScoreBased { .. } => Err(Error::InvalidInput(
                "score-based models take score vectors, not labeled features".into(),
            )),
        }
    }

    /// Encodes a score vector for a score-based model (sorts it descending).
    pub fn encode_scores(&self, scores: &ScoreVector) -> Result<Vec<f64>> {
        match self.mode {
            MiaMode::ScoreBased { classes } => {
                if scores.len() != classes {
                    return Err(Error::DimMismatch {
                        expected: classes,
                        actual: scores.len(),
                    });
                }
                Ok(scores.sorted_desc().0)
            }
            MiaMode::LabelBased { .. } => Err(Error::InvalidInput(
                "label-based models take labeled features, not score vectors".into(),
            )),
        }
    }

    /// Maps a raw input in the mode's layout to the network's input space.
    /// Score-based inputs are sorted in non-increasing order (so permuted
    /// inputs yield identical verdicts) and taken to log space, where the
    /// tail structure of a score vector becomes linearly visible.
    fn network_input(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.mode.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.mode.input_dim(),
                actual: input.len(),
            });
        }
        let mut mapped = match self.mode {
            MiaMode::LabelBased { .. } => input.to_vec(),
            MiaMode::ScoreBased { .. } => {
                let mut sorted = input.to_vec();
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                sorted.iter_mut().for_each(|v| *v = v.max(LOG_INPUT_FLOOR).ln());
                sorted
            }
        };
        if let Some(n) = &self.normalizer {
            n.apply(&mut mapped[..n.mean.len()]);
        }
        Ok(mapped)
    }

    /// Membership score for an input in the model's layout.
    pub fn membership_score(&self, input: &[f64]) -> Result<f64> {
        let mapped = self.network_input(input)?;
        Ok(self.model.predict_scores(&mapped)?.probabilities()[1])
    }

    /// For score-based models: membership score plus its gradient with
    /// respect to the *log* of the (already sorted) scores, with the
    /// normalizer chain folded in. The defense solver composes this with the
    /// softmax parameterization, where the log factors cancel.
    pub fn log_score_gradient(&self, sorted_scores: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.mode {
            MiaMode::ScoreBased { .. } => {}
            MiaMode::LabelBased { .. } => {
                return Err(Error::InvalidInput(
                    "log-score gradients are defined for score-based models".into(),
                ));
            }
        }
        let mapped = self.network_input(sorted_scores)?;
        let mhat = self.model.predict_scores(&mapped)?.probabilities()[1];
        let mut grad = self
            .model
            .input_gradient(&mapped, crate::nn::Readout::Prob(1))?;
        if let Some(n) = &self.normalizer {
            for (g, s) in grad.iter_mut().zip(&n.std) {
                *g /= s;
            }
        }
        Ok((mhat, grad))
    }

    /// Scores an input and applies the decision threshold.
    pub fn infer(&self, input: &[f64]) -> Result<MiaVerdict> {
        let membership_score = self.membership_score(input)?;
        Ok(MiaVerdict {
            membership_score,
            is_member: membership_score >= 0.5,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let dump = MiaModelDump {
            mode: self.mode,
            normalizer: self.normalizer.clone(),
            model: self.model.to_json()?,
        };
        std::fs::write(path, serde_json::to_string_pretty(&dump)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<MiaModel> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let dump: MiaModelDump = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        MiaModel::from_parts_normalized(dump.mode, MlpModel::from_json(&dump.model)?, dump.normalizer)
    }
}

#[derive(Serialize, Deserialize)]
struct MiaModelDump {
    mode: MiaMode,
    normalizer: Option<Normalizer>,
    /// Nested weight dump in the versioned model format.
    model: String,
}

/// Representative member and non-member pools, already encoded in the
/// inference model's input layout.
#[derive(Debug, Clone)]
pub struct MembershipSets {
    pub members: Vec<Vec<f64>>,
    pub nonmembers: Vec<Vec<f64>>,
}

impl MembershipSets {
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::EmptySampleSet("member pool".into()));
        }
        if self.nonmembers.is_empty() {
            return Err(Error::EmptySampleSet("non-member pool".into()));
        }
        Ok(())
    }
}

fn check_disjoint(member_ids: &[usize], nonmember_ids: &[usize]) -> Result<()> {
    let members: std::collections::BTreeSet<usize> = member_ids.iter().copied().collect();
    if let Some(id) = nonmember_ids.iter().find(|id| members.contains(id)) {
        return Err(Error::InvalidInput(format!(
            "observation {id} appears in both the member and non-member pools"
        )));
    }
    Ok(())
}

/// Label-based pools: adversary-side features of each observation plus the
/// class the surrogate assigns to them.
pub fn build_label_sets(
    dataset: &Dataset,
    surrogate: &SurrogateClassifier,
    member_ids: &[usize],
    nonmember_ids: &[usize],
) -> Result<(MiaMode, MembershipSets)> {
    check_disjoint(member_ids, nonmember_ids)?;
    let classes = surrogate.model.spec().output_dim;
    let feature_dim = surrogate.model.spec().input_dim;
    let mode = MiaMode::LabelBased {
        feature_dim,
        classes,
    };
    let encode_pool = |ids: &[usize]| -> Result<Vec<Vec<f64>>> {
        ids.iter()
            .map(|&id| {
                let features = dataset.observation(id)?.adversary_features.flatten();
                let label = surrogate.decide(&features)?;
                let mut input = features;
                let mut one_hot = vec![0.0; classes];
                one_hot[label] = 1.0;
                input.extend_from_slice(&one_hot);
                Ok(input)
            })
            .collect()
    };
    let sets = MembershipSets {
        members: encode_pool(member_ids)?,
        nonmembers: encode_pool(nonmember_ids)?,
    };
    sets.validate()?;
    Ok((mode, sets))
}

/// Score-based pools: the target's scores on provider-side receptions,
/// sorted in non-increasing order.
pub fn build_score_sets(
    dataset: &Dataset,
    target: &crate::classifiers::TargetClassifier,
    member_ids: &[usize],
    nonmember_ids: &[usize],
) -> Result<(MiaMode, MembershipSets)> {
    check_disjoint(member_ids, nonmember_ids)?;
    let classes = target.model.spec().output_dim;
    let mode = MiaMode::ScoreBased { classes };
    let encode_pool = |ids: &[usize]| -> Result<Vec<Vec<f64>>> {
        ids.iter()
            .map(|&id| {
                let obs = dataset.observation(id)?;
                let scores = target.scores(&obs.provider_features.flatten())?;
                Ok(scores.sorted_desc().0)
            })
            .collect()
    };
    let sets = MembershipSets {
        members: encode_pool(member_ids)?,
        nonmembers: encode_pool(nonmember_ids)?,
    };
    sets.validate()?;
    Ok((mode, sets))
}

/// Empirical gain from raw membership scores: the balanced average of
/// `log m` over members and `log (1 - m)` over non-members, with scores
/// clamped to `[1e-12, 1 - 1e-12]` before the logarithm.
pub fn empirical_gain_from_scores(member_scores: &[f64], nonmember_scores: &[f64]) -> Result<f64> {
    if member_scores.is_empty() {
        return Err(Error::EmptySampleSet("member pool".into()));
    }
    if nonmember_scores.is_empty() {
        return Err(Error::EmptySampleSet("non-member pool".into()));
    }
    let member_sum: f64 = member_scores
        .iter()
        .map(|m| m.clamp(GAIN_CLAMP, 1.0 - GAIN_CLAMP).ln())
        .sum();
    let nonmember_sum: f64 = nonmember_scores
        .iter()
        .map(|m| (1.0 - m.clamp(GAIN_CLAMP, 1.0 - GAIN_CLAMP)).ln())
        .sum();
    Ok(0.5 * member_sum / member_scores.len() as f64
        + 0.5 * nonmember_sum / nonmember_scores.len() as f64)
}

/// Empirical gain of an inference model over representative pools.
pub fn empirical_gain(model: &MiaModel, sets: &MembershipSets) -> Result<f64> {
    sets.validate()?;
    let member_scores = sets
        .members
        .iter()
        .map(|input| model.membership_score(input))
        .collect::<Result<Vec<f64>>>()?;
    let nonmember_scores = sets
        .nonmembers
        .iter()
        .map(|input| model.membership_score(input))
        .collect::<Result<Vec<f64>>>()?;
    empirical_gain_from_scores(&member_scores, &nonmember_scores)
}

/// Two hidden layers of 64 for the inference model.
pub fn mia_spec(input_dim: usize) -> LayerSpec {
    LayerSpec::new(input_dim, vec![64, 64], 2)
}

/// Trains an inference model by maximizing the empirical gain, implemented as
/// cross-entropy minimization on membership labels. On balanced pools the two
/// objectives coincide up to sign; unbalanced pools are reweighted (with a
/// warning) so each pool still contributes half the loss.
pub fn train_mia(sets: &MembershipSets, mode: MiaMode, cfg: &TrainConfig) -> Result<MiaModel> {
    sets.validate()?;
    let n_members = sets.members.len();
    let n_nonmembers = sets.nonmembers.len();
    let mut samples = Vec::with_capacity(n_members + n_nonmembers);
    for input in &sets.members {
        samples.push((input.clone(), 1usize));
    }
    for input in &sets.nonmembers {
        samples.push((input.clone(), 0usize));
    }
    // Inputs are centered with one shared scale: raw phases and powers live
    // on very different magnitudes, and log-scores span a wide range.
    let normalizer = match mode {
        MiaMode::LabelBased { feature_dim, .. } => {
            let inputs: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.clone()).collect();
            let normalizer = Normalizer::fit(&inputs, feature_dim);
            for (x, _) in &mut samples {
                normalizer.apply(&mut x[..feature_dim]);
            }
            Some(normalizer)
        }
        MiaMode::ScoreBased { classes } => {
            for (x, _) in &mut samples {
                x.sort_by(|a, b| b.partial_cmp(a).unwrap());
                x.iter_mut().for_each(|v| *v = v.max(LOG_INPUT_FLOOR).ln());
            }
            let inputs: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.clone()).collect();
            let normalizer = Normalizer::fit(&inputs, classes);
            for (x, _) in &mut samples {
                normalizer.apply(x);
            }
            Some(normalizer)
        }
    };
    let mut model = MlpModel::init(mia_spec(mode.input_dim()), cfg.seed)?;
    if n_members == n_nonmembers {
        model.fit(&samples, cfg)?;
    } else {
        log::warn!(
            "unbalanced membership pools ({n_members} members vs {n_nonmembers} non-members); \
             reweighting the loss"
        );
        let total = (n_members + n_nonmembers) as f64;
        let member_weight = total / (2.0 * n_members as f64);
        let nonmember_weight = total / (2.0 * n_nonmembers as f64);
        let mut weights = vec![member_weight; n_members];
        weights.extend(vec![nonmember_weight; n_nonmembers]);
        model.fit_weighted(&samples, &weights, cfg)?;
    }
    MiaModel::from_parts_normalized(mode, model, normalizer)
}

/// Member/non-member confusion matrix (class 0 = non-member, 1 = member).
pub fn evaluate_mia(model: &MiaModel, sets: &MembershipSets) -> Result<ConfusionMatrix> {
    sets.validate()?;
    let mut true_labels = Vec::with_capacity(sets.members.len() + sets.nonmembers.len());
    let mut predicted = Vec::with_capacity(true_labels.capacity());
    for input in &sets.nonmembers {
        true_labels.push(0);
        predicted.push(model.infer(input)?.is_member as usize);
    }
    for input in &sets.members {
        true_labels.push(1);
        predicted.push(model.infer(input)?.is_member as usize);
    }
    ConfusionMatrix::from_predictions(&true_labels, &predicted, 2)
}

/// How variant scores are combined into one verdict per original sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Average,
    Maximum,
}

impl Aggregate {
    pub fn apply(&self, scores: &[f64]) -> f64 {
        match self {
            Aggregate::Average => scores.iter().sum::<f64>() / scores.len() as f64,
            Aggregate::Maximum => scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Aggregate::Average => "average",
            Aggregate::Maximum => "maximum",
        }
    }
}

/// One row of the noisy-variation accuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyVariationRow {
    pub level: f64,
    pub aggregate: Aggregate,
    pub nonmember_acc: f64,
    pub member_acc: f64,
}

/// Evaluates a label-based inference model on noisy variations of the
/// original samples.
///
/// For every original and nonzero level, `per_level_count` variants are drawn
/// with [`perturb_features`], scored, aggregated by each rule, and
/// thresholded at 0.5. The surrogate assigns each original's class once and
/// the variants inherit it: they probe the membership of the same underlying
/// transmission, not of new signals. The level 0 rows reproduce the plain
/// single-sample accuracies. Each original gets its own generator substream,
/// keyed by pool and position.
#[allow(clippy::too_many_arguments)]
pub fn noisy_variation_eval(
    model: &MiaModel,
    surrogate: &SurrogateClassifier,
    member_originals: &[FeatureVector],
    nonmember_originals: &[FeatureVector],
    levels: &[f64],
    per_level_count: usize,
    feature_ranges: &[f64],
    base_rng: &ChaCha8Rng,
) -> Result<Vec<NoisyVariationRow>> {
    let feature_dim = match model.mode {
        MiaMode::LabelBased { feature_dim, .. } => feature_dim,
        MiaMode::ScoreBased { .. } => {
            return Err(Error::InvalidInput(
                "noisy-variation evaluation needs a label-based inference model".into(),
            ));
        }
    };
    if member_originals.is_empty() || nonmember_originals.is_empty() {
        return Err(Error::EmptySampleSet("noisy-variation originals".into()));
    }
    if per_level_count == 0 {
        return Err(Error::InvalidInput("per_level_count must be >= 1".into()));
    }
    let mut sorted_levels = levels.to_vec();
    sorted_levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted_levels.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput(
            "levels must be positive; level 0 is always reported from the originals".into(),
        ));
    }

    let label_of = |fv: &FeatureVector| -> Result<usize> {
        let features = fv.flatten();
        if features.len() != feature_dim {
            return Err(Error::DimMismatch {
                expected: feature_dim,
                actual: features.len(),
            });
        }
        surrogate.decide(&features)
    };
    let score_with_label = |fv: &FeatureVector, label: usize| -> Result<f64> {
        model.membership_score(&model.encode_labeled(&fv.flatten(), label)?)
    };
    let score_original =
        |fv: &FeatureVector| -> Result<f64> { score_with_label(fv, label_of(fv)?) };

    let mut rows = Vec::new();
    // Level 0: decisions on the originals themselves, identical under both
    // aggregation rules.
    let member_hits = member_originals
        .iter()
        .map(|fv| Ok((score_original(fv)? >= 0.5) as usize))
        .collect::<Result<Vec<usize>>>()?
        .iter()
        .sum::<usize>();
    let nonmember_hits = nonmember_originals
        .iter()
        .map(|fv| Ok((score_original(fv)? < 0.5) as usize))
        .collect::<Result<Vec<usize>>>()?
        .iter()
        .sum::<usize>();
    let member_acc0 = member_hits as f64 / member_originals.len() as f64;
    let nonmember_acc0 = nonmember_hits as f64 / nonmember_originals.len() as f64;
    for aggregate in [Aggregate::Average, Aggregate::Maximum] {
        rows.push(NoisyVariationRow {
            level: 0.0,
            aggregate,
            nonmember_acc: nonmember_acc0,
            member_acc: member_acc0,
        });
    }

    // Aggregated membership scores per (pool, original, level).
    let pool_scores = |originals: &[FeatureVector],
                       pool_offset: u64|
     -> Result<Vec<Vec<(f64, f64)>>> {
        originals
            .iter()
            .enumerate()
            .map(|(i, fv)| {
                let mut rng = crate::rng::substream(base_rng, pool_offset + i as u64);
                let label = label_of(fv)?;
                sorted_levels
                    .iter()
                    .map(|&level| {
                        let variants = perturb_features(
                            fv,
                            level,
                            feature_ranges,
                            per_level_count,
                            &mut rng,
                        )?;
                        let scores = variants
                            .iter()
                            .map(|v| score_with_label(v, label))
                            .collect::<Result<Vec<f64>>>()?;
                        Ok((
                            Aggregate::Average.apply(&scores),
                            Aggregate::Maximum.apply(&scores),
                        ))
                    })
                    .collect()
            })
            .collect()
    };
    let member_pool = pool_scores(member_originals, 0)?;
    let nonmember_pool = pool_scores(nonmember_originals, member_originals.len() as u64)?;

    for (li, &level) in sorted_levels.iter().enumerate() {
        for aggregate in [Aggregate::Average, Aggregate::Maximum] {
            let select = |pair: &(f64, f64)| match aggregate {
                Aggregate::Average => pair.0,
                Aggregate::Maximum => pair.1,
            };
            let member_acc = member_pool
                .iter()
                .filter(|per_level| select(&per_level[li]) >= 0.5)
                .count() as f64
                / member_pool.len() as f64;
            let nonmember_acc = nonmember_pool
                .iter()
                .filter(|per_level| select(&per_level[li]) < 0.5)
                .count() as f64
                / nonmember_pool.len() as f64;
            rows.push(NoisyVariationRow {
                level,
                aggregate,
                nonmember_acc,
                member_acc,
            });
        }
    }
    Ok(rows)
}
