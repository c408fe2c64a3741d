//! End-to-end experiment orchestration.
//!
//! Each named experiment runs the full pipeline deterministically: scenario
//! synthesis, target/surrogate training, the membership inference attack, and
//! (where applicable) the noisy-variation protocol or the score-perturbation
//! defense. Every stage derives its randomness from `(master seed, stage
//! label)`, writes its artifacts into the run directory, and failures carry
//! the stage name while earlier artifacts stay on disk.
//!
//! `report.json` is a pure function of the configuration: wall-clock numbers
//! go to a separate `timings.json` so reports from identical configs are
//! byte-identical.

use crate::classifiers::{
    evaluate, paired_agreement, train_surrogate, train_target, ConfusionMatrix, SurrogateClassifier,
    TargetClassifier,
};
use crate::defense::{
    defend_pipeline, train_shadow, DefendedSample, IntegrityReport, ShadowMia, SolverConfig,
};
use crate::error::{Error, Result};
use crate::mia::{
    build_label_sets, build_score_sets, evaluate_mia, noisy_variation_eval, train_mia, Aggregate,
    MembershipSets, MiaMode, MiaModel, NoisyVariationRow,
};
use crate::nn::{MlpModel, ScoreVector, TrainConfig};
use crate::rng;
use crate::signal::{
    feature_ranges, splits, synth_scenario, Dataset, Observer, ScenarioConfig,
};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// The experiment matrix, one name per reproduced table group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Setting1Strong,
    Setting1Weak,
    Setting1Noisy,
    Setting2Mia,
    Setting2Defense,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Setting1Strong,
        ExperimentKind::Setting1Weak,
        ExperimentKind::Setting1Noisy,
        ExperimentKind::Setting2Mia,
        ExperimentKind::Setting2Defense,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Setting1Strong => "setting1-strong",
            ExperimentKind::Setting1Weak => "setting1-weak",
            ExperimentKind::Setting1Noisy => "setting1-noisy",
            ExperimentKind::Setting2Mia => "setting2-mia",
            ExperimentKind::Setting2Defense => "setting2-defense",
        }
    }

    fn uses_setting1(&self) -> bool {
        matches!(
            self,
            ExperimentKind::Setting1Strong
                | ExperimentKind::Setting1Weak
                | ExperimentKind::Setting1Noisy
        )
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ExperimentKind> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown experiment {s:?}; expected one of: {}",
                    ExperimentKind::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

/// Optional replacements for the per-stage recipes. Training seeds are always
/// derived from the master seed regardless of the `seed` field in an override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    pub scenario: Option<ScenarioConfig>,
    pub target_train: Option<TrainConfig>,
    pub surrogate_train: Option<TrainConfig>,
    pub mia_train: Option<TrainConfig>,
    pub shadow_train: Option<TrainConfig>,
    pub solver: Option<SolverConfig>,
    pub noisy_levels: Option<Vec<f64>>,
    pub noisy_per_level: Option<usize>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub overrides: Overrides,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            experiment,
            seed,
            overrides: Overrides::default(),
        }
    }

    /// SHA-256 over the canonical JSON encoding of the configuration.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn scenario(&self) -> ScenarioConfig {
        if let Some(s) = &self.overrides.scenario {
            return s.clone();
        }
        match self.experiment {
            ExperimentKind::Setting1Strong | ExperimentKind::Setting1Noisy => {
                ScenarioConfig::setting1_strong()
            }
            ExperimentKind::Setting1Weak => ScenarioConfig::setting1_weak(),
            ExperimentKind::Setting2Mia | ExperimentKind::Setting2Defense => {
                ScenarioConfig::setting2()
            }
        }
    }

    fn stage_seed(&self, label: &str) -> u64 {
        rng::stream(self.seed, label).next_u64()
    }

    fn stage_cfg(&self, base: TrainConfig, override_cfg: &Option<TrainConfig>, label: &str) -> TrainConfig {
        let mut cfg = override_cfg.clone().unwrap_or(base);
        cfg.seed = self.stage_seed(label);
        cfg
    }

    pub fn target_cfg(&self) -> TrainConfig {
        // The multi-device classifier trains long enough to memorize its
        // training set; the confidence gap on fresh samples is what the
        // score-based attack feeds on.
        let epochs = if self.experiment.uses_setting1() { 20 } else { 300 };
        self.stage_cfg(
            TrainConfig::default().with_epochs(epochs),
            &self.overrides.target_train,
            "target-train",
        )
    }

    pub fn surrogate_cfg(&self) -> TrainConfig {
        self.stage_cfg(
            TrainConfig::default().with_epochs(40),
            &self.overrides.surrogate_train,
            "surrogate-train",
        )
    }

    pub fn mia_cfg(&self) -> TrainConfig {
        // The label-based attack trains with large batches and a raised
        // learning rate: shared fingerprint structure then dominates the
        // gradient over per-sample noise memorization.
        let base = if self.experiment.uses_setting1() {
            TrainConfig {
                epochs: 150,
                batch_size: 256,
                learning_rate: 3e-3,
                ..TrainConfig::default()
            }
        } else {
            TrainConfig::default().with_epochs(400)
        };
        self.stage_cfg(base, &self.overrides.mia_train, "mia-train")
    }

    pub fn shadow_cfg(&self) -> TrainConfig {
        self.stage_cfg(
            TrainConfig::default().with_epochs(400),
            &self.overrides.shadow_train,
            "shadow-train",
        )
    }

    pub fn solver_cfg(&self) -> SolverConfig {
        self.overrides.solver.clone().unwrap_or_default()
    }

    pub fn noisy_levels(&self) -> Vec<f64> {
        self.overrides
            .noisy_levels
            .clone()
            .unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect())
    }

    pub fn noisy_per_level(&self) -> usize {
        self.overrides.noisy_per_level.unwrap_or(10)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Evaluation artifact: matrix, accuracy, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub matrix: ConfusionMatrix,
    pub seed: u64,
    pub config_digest: String,
}

/// Defense-stage aggregate, the summary the defense experiment reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseSummary {
    pub convergence_rate: f64,
    pub argmax_violations: usize,
    /// Defended argmax equals the undefended argmax (all samples).
    pub classification_match_rate: f64,
    pub shadow_accuracy_no_defense: f64,
    pub mia_accuracy_no_defense: f64,
    pub shadow_accuracy_with_defense: f64,
    pub mia_accuracy_with_defense: f64,
    pub shadow_confusion_with_defense: ConfusionMatrix,
    pub mia_confusion_with_defense: ConfusionMatrix,
}

/// Everything a finished run reports. Wall-clock timings are held in memory
/// and written to `timings.json`, never into `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub config_digest: String,
    pub scenario_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired_agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mia: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shadow: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noisy_rows: Option<Vec<NoisyVariationRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defense: Option<DefenseSummary>,
    #[serde(skip, default)]
    pub stage_timings_ms: BTreeMap<String, u64>,
}

/// File names of the run artifacts.
pub mod artifacts {
    pub const CONFIG: &str = "config.json";
    pub const SCENARIO: &str = "scenario.json";
    pub const DATASET_DIR: &str = "dataset";
    pub const TARGET_MODEL: &str = "target_model.json";
    pub const TARGET_EVAL: &str = "target_eval.json";
    pub const SURROGATE_MODEL: &str = "surrogate_model.json";
    pub const SURROGATE_EVAL: &str = "surrogate_eval.json";
    pub const MIA_MODEL: &str = "mia_model.json";
    pub const MIA_EVAL: &str = "mia_eval.json";
    pub const SHADOW_MODEL: &str = "shadow_model.json";
    pub const SHADOW_EVAL: &str = "shadow_eval.json";
    pub const NOISY_AVERAGE: &str = "noisy_average.csv";
    pub const NOISY_MAXIMUM: &str = "noisy_maximum.csv";
    pub const DEFENSE_REPORT: &str = "defense_report.json";
    pub const REPORT: &str = "report.json";
    pub const TIMINGS: &str = "timings.json";
}

/// Writes via a temp file and rename so partial writes never corrupt a report.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_string_pretty(value)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// A run directory plus its configuration; every pipeline stage reads its
/// inputs from and writes its outputs to this directory.
pub struct Workbench {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
}

impl Workbench {
    /// Creates the run directory and persists the configuration.
    pub fn init(config: ExperimentConfig, dir: &Path) -> Result<Workbench> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join(artifacts::CONFIG), &config)?;
        write_json(&dir.join(artifacts::SCENARIO), &config.scenario())?;
        Ok(Workbench {
            config,
            dir: dir.to_path_buf(),
        })
    }

    /// Opens an existing run directory.
    pub fn open(dir: &Path) -> Result<Workbench> {
        let config: ExperimentConfig = read_json(&dir.join(artifacts::CONFIG))?;
        Ok(Workbench {
            config,
            dir: dir.to_path_buf(),
        })
    }

    fn classes(&self) -> usize {
        self.config.scenario().class_count()
    }

    fn eval_report(&self, matrix: ConfusionMatrix) -> EvalReport {
        EvalReport {
            accuracy: matrix.accuracy,
            matrix,
            seed: self.config.seed,
            config_digest: self.config.digest(),
        }
    }

    pub fn synth(&self) -> Result<Dataset> {
        let dataset = synth_scenario(&self.config.scenario(), self.config.seed)
            .map_err(|e| e.in_stage("synth"))?;
        dataset
            .save(&self.dir.join(artifacts::DATASET_DIR))
            .map_err(|e| e.in_stage("synth"))?;
        Ok(dataset)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        Dataset::load(&self.dir.join(artifacts::DATASET_DIR))
    }

    pub fn train_target(&self, dataset: &Dataset) -> Result<(TargetClassifier, EvalReport)> {
        let stage = |e: Error| e.in_stage("train-target");
        let target = train_target(dataset, self.classes(), &self.config.target_cfg()).map_err(stage)?;
        target
            .model
            .save(&self.dir.join(artifacts::TARGET_MODEL))
            .map_err(stage)?;
        let test_split = if self.config.experiment.uses_setting1() {
            splits::TARGET_TEST
        } else {
            splits::SET_B
        };
        let samples = dataset
            .labeled_features(test_split, Observer::Provider)
            .map_err(stage)?;
        let matrix = evaluate(&target.model, &samples, self.classes()).map_err(stage)?;
        let report = self.eval_report(matrix);
        write_json(&self.dir.join(artifacts::TARGET_EVAL), &report).map_err(stage)?;
        Ok((target, report))
    }

    pub fn load_target(&self, dataset: &Dataset) -> Result<TargetClassifier> {
        let model = MlpModel::load(&self.dir.join(artifacts::TARGET_MODEL))?;
        let split = if self.config.experiment.uses_setting1() {
            splits::TARGET_TRAIN
        } else {
            splits::SET_A
        };
        Ok(TargetClassifier::from_parts(
            model,
            dataset.split(split)?.to_vec(),
        ))
    }

    pub fn train_surrogate(
        &self,
        dataset: &Dataset,
        target: &TargetClassifier,
    ) -> Result<(SurrogateClassifier, EvalReport, f64)> {
        let stage = |e: Error| e.in_stage("train-surrogate");
        let surrogate =
            train_surrogate(dataset, target, &self.config.surrogate_cfg()).map_err(stage)?;
        surrogate
            .model
            .save(&self.dir.join(artifacts::SURROGATE_MODEL))
            .map_err(stage)?;
        let samples = dataset
            .labeled_features(splits::SURROGATE_TEST, Observer::Adversary)
            .map_err(stage)?;
        let matrix = evaluate(&surrogate.model, &samples, self.classes()).map_err(stage)?;
        let agreement =
            paired_agreement(target, &surrogate, dataset, splits::SURROGATE_TEST).map_err(stage)?;
        let report = self.eval_report(matrix);
        write_json(&self.dir.join(artifacts::SURROGATE_EVAL), &report).map_err(stage)?;
        Ok((surrogate, report, agreement))
    }

    pub fn load_surrogate(&self) -> Result<SurrogateClassifier> {
        Ok(SurrogateClassifier {
            model: MlpModel::load(&self.dir.join(artifacts::SURROGATE_MODEL))?,
        })
    }

    /// Trains the attack model and evaluates it.
    ///
    /// Both pool layouts follow the scenario protocols: the single-provider
    /// setting trains the label-based attack on the eavesdropped member and
    /// non-member pools and measures recall on those same pools (the attack
    /// question is whether these specific catalogued signals were trained on),
    /// while the multi-device setting trains the score-based attack on the
    /// overheard subset and evaluates on held-out members and non-members.
    pub fn attack(
        &self,
        dataset: &Dataset,
        target: &TargetClassifier,
        surrogate: Option<&SurrogateClassifier>,
    ) -> Result<(MiaModel, EvalReport)> {
        let stage = |e: Error| e.in_stage("attack");
        let (mia, matrix) = if self.config.experiment.uses_setting1() {
            let surrogate = surrogate.ok_or_else(|| {
                Error::Config("the label-based attack needs a surrogate classifier".into())
            })?;
            let member_ids = dataset.split(splits::MIA_MEMBER).map_err(stage)?;
            let nonmember_ids = dataset.split(splits::MIA_NONMEMBER).map_err(stage)?;
            let (mode, sets) = build_label_sets(dataset, surrogate, member_ids, nonmember_ids)
                .map_err(stage)?;
            let mia = train_mia(&sets, mode, &self.config.mia_cfg()).map_err(stage)?;
            let matrix = evaluate_mia(&mia, &sets).map_err(stage)?;
            (mia, matrix)
        } else {
            let a = dataset.split(splits::SET_A).map_err(stage)?;
            let a1 = dataset.split(splits::A1).map_err(stage)?;
            let d = dataset.split(splits::SET_D).map_err(stage)?;
            let d1 = dataset.split(splits::D1).map_err(stage)?;
            let (mode, train_sets) = build_score_sets(dataset, target, a1, d1).map_err(stage)?;
            let mia = train_mia(&train_sets, mode, &self.config.mia_cfg()).map_err(stage)?;
            let holdout_members: Vec<usize> =
                a.iter().copied().filter(|id| !a1.contains(id)).collect();
            let holdout_nonmembers: Vec<usize> =
                d.iter().copied().filter(|id| !d1.contains(id)).collect();
            let (_, eval_sets) =
                build_score_sets(dataset, target, &holdout_members, &holdout_nonmembers)
                    .map_err(stage)?;
            let matrix = evaluate_mia(&mia, &eval_sets).map_err(stage)?;
            (mia, matrix)
        };
        mia.save(&self.dir.join(artifacts::MIA_MODEL)).map_err(stage)?;
        let report = self.eval_report(matrix);
        write_json(&self.dir.join(artifacts::MIA_EVAL), &report).map_err(stage)?;
        Ok((mia, report))
    }

    pub fn load_mia(&self) -> Result<MiaModel> {
        MiaModel::load(&self.dir.join(artifacts::MIA_MODEL))
    }

    /// Runs the noisy-variation protocol and writes one CSV per aggregate.
    pub fn noisy_eval(
        &self,
        dataset: &Dataset,
        mia: &MiaModel,
        surrogate: &SurrogateClassifier,
    ) -> Result<Vec<NoisyVariationRow>> {
        let stage = |e: Error| e.in_stage("noisy-eval");
        let member_ids = dataset.split(splits::MIA_MEMBER).map_err(stage)?;
        let nonmember_ids = dataset.split(splits::MIA_NONMEMBER).map_err(stage)?;
        let collect = |ids: &[usize]| -> Result<Vec<crate::signal::FeatureVector>> {
            ids.iter()
                .map(|&id| Ok(dataset.observation(id)?.adversary_features.clone()))
                .collect()
        };
        let members = collect(member_ids).map_err(stage)?;
        let nonmembers = collect(nonmember_ids).map_err(stage)?;
        // Ranges over the full evaluation pool, members and non-members alike.
        let ranges = feature_ranges(members.iter().chain(nonmembers.iter())).map_err(stage)?;
        let base_rng = rng::stream(self.config.seed, "noisy-eval");
        let rows = noisy_variation_eval(
            mia,
            surrogate,
            &members,
            &nonmembers,
            &self.config.noisy_levels(),
            self.config.noisy_per_level(),
            &ranges,
            &base_rng,
        )
        .map_err(stage)?;
        for (aggregate, artifact) in [
            (Aggregate::Average, artifacts::NOISY_AVERAGE),
            (Aggregate::Maximum, artifacts::NOISY_MAXIMUM),
        ] {
            let mut out = String::from("level,aggregate,nonmember_acc,member_acc\n");
            for row in rows.iter().filter(|r| r.aggregate == aggregate) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    row.level,
                    row.aggregate.name(),
                    row.nonmember_acc,
                    row.member_acc
                ));
            }
            write_atomic(&self.dir.join(artifact), &out).map_err(stage)?;
        }
        Ok(rows)
    }

    fn provider_scores(
        &self,
        dataset: &Dataset,
        target: &TargetClassifier,
        ids: &[usize],
    ) -> Result<Vec<ScoreVector>> {
        ids.iter()
            .map(|&id| {
                let obs = dataset.observation(id)?;
                target.scores(&obs.provider_features.flatten())
            })
            .collect()
    }

    /// Trains the defender's shadow attack and evaluates it on its member
    /// training set plus fresh non-members.
    pub fn train_shadow(
        &self,
        dataset: &Dataset,
        target: &TargetClassifier,
    ) -> Result<(ShadowMia, EvalReport)> {
        let stage = |e: Error| e.in_stage("train-shadow");
        let a = dataset.split(splits::SET_A).map_err(stage)?;
        let c = dataset.split(splits::SET_C).map_err(stage)?;
        let d = dataset.split(splits::SET_D).map_err(stage)?;
        let member_scores = self.provider_scores(dataset, target, a).map_err(stage)?;
        let shadow_nonmember_scores = self.provider_scores(dataset, target, c).map_err(stage)?;
        let shadow = train_shadow(
            &member_scores,
            &shadow_nonmember_scores,
            &self.config.shadow_cfg(),
        )
        .map_err(stage)?;
        shadow
            .mia
            .model
            .save(&self.dir.join(artifacts::SHADOW_MODEL))
            .map_err(stage)?;
        let eval_nonmember_scores = self.provider_scores(dataset, target, d).map_err(stage)?;
        let sets = score_sets(&shadow.mia, &member_scores, &eval_nonmember_scores).map_err(stage)?;
        let matrix = evaluate_mia(&shadow.mia, &sets).map_err(stage)?;
        let report = self.eval_report(matrix);
        write_json(&self.dir.join(artifacts::SHADOW_EVAL), &report).map_err(stage)?;
        Ok((shadow, report))
    }

    pub fn load_shadow(&self) -> Result<ShadowMia> {
        let model = MlpModel::load(&self.dir.join(artifacts::SHADOW_MODEL))?;
        ShadowMia::new(MiaModel::from_parts(
            MiaMode::ScoreBased {
                classes: self.classes(),
            },
            model,
        )?)
    }

    /// Defends every score emitted for the evaluation pools and re-evaluates
    /// both the shadow attack and the adversary's attack on defended scores.
    pub fn defend(
        &self,
        dataset: &Dataset,
        target: &TargetClassifier,
        mia: &MiaModel,
        shadow: &ShadowMia,
        shadow_accuracy_no_defense: f64,
        mia_accuracy_no_defense: f64,
    ) -> Result<DefenseSummary> {
        let stage = |e: Error| e.in_stage("defend");
        let a = dataset.split(splits::SET_A).map_err(stage)?.to_vec();
        let d = dataset.split(splits::SET_D).map_err(stage)?.to_vec();
        let a1 = dataset.split(splits::A1).map_err(stage)?;
        let d1 = dataset.split(splits::D1).map_err(stage)?;

        let mut defend_ids = a.clone();
        defend_ids.extend(&d);
        let features: Vec<Vec<f64>> = defend_ids
            .iter()
            .map(|&id| Ok(dataset.observation(id)?.provider_features.flatten()))
            .collect::<Result<_>>()
            .map_err(stage)?;
        let mut shuffle_rng = rng::stream(self.config.seed, "defense/shuffle");
        let (samples, integrity) = defend_pipeline(
            target,
            &features,
            shadow,
            &self.config.solver_cfg(),
            &mut shuffle_rng,
        )
        .map_err(stage)?;

        let defended: BTreeMap<usize, &DefendedSample> =
            defend_ids.iter().copied().zip(samples.iter()).collect();
        let matches = samples
            .iter()
            .filter(|s| s.defended_argmax == s.original_argmax)
            .count();
        let classification_match_rate = matches as f64 / samples.len() as f64;

        // Shadow attack on defended scores: members A, non-members D.
        let pick = |ids: &[usize]| -> Vec<ScoreVector> {
            ids.iter()
                .map(|id| defended[id].defended_scores.clone())
                .collect()
        };
        let shadow_sets = score_sets(&shadow.mia, &pick(&a), &pick(&d)).map_err(stage)?;
        let shadow_matrix = evaluate_mia(&shadow.mia, &shadow_sets).map_err(stage)?;

        // Adversary attack (trained on undefended scores) on defended scores:
        // held-out members and non-members only.
        let holdout = |ids: &[usize], sub: &[usize]| -> Vec<usize> {
            ids.iter().copied().filter(|id| !sub.contains(id)).collect()
        };
        let mia_sets = score_sets(
            mia,
            &pick(&holdout(&a, a1)),
            &pick(&holdout(&d, d1)),
        )
        .map_err(stage)?;
        let mia_matrix = evaluate_mia(mia, &mia_sets).map_err(stage)?;

        let summary = DefenseSummary {
            convergence_rate: integrity.convergence_rate,
            argmax_violations: integrity.argmax_violations,
            classification_match_rate,
            shadow_accuracy_no_defense,
            mia_accuracy_no_defense,
            shadow_accuracy_with_defense: shadow_matrix.accuracy,
            mia_accuracy_with_defense: mia_matrix.accuracy,
            shadow_confusion_with_defense: shadow_matrix,
            mia_confusion_with_defense: mia_matrix,
        };
        write_json(
            &self.dir.join(artifacts::DEFENSE_REPORT),
            &DefenseReportFile {
                samples: samples.iter().map(DefenseSampleRecord::from).collect(),
                integrity,
                summary: summary.clone(),
            },
        )
        .map_err(stage)?;
        Ok(summary)
    }

    pub fn write_report(&self, report: &RunReport) -> Result<()> {
        write_json(&self.dir.join(artifacts::REPORT), report)?;
        write_json(&self.dir.join(artifacts::TIMINGS), &report.stage_timings_ms)?;
        Ok(())
    }
}

/// Encodes raw score vectors into evaluation pools for a score-based model.
fn score_sets(
    mia: &MiaModel,
    member_scores: &[ScoreVector],
    nonmember_scores: &[ScoreVector],
) -> Result<MembershipSets> {
    let encode = |pool: &[ScoreVector]| -> Result<Vec<Vec<f64>>> {
        pool.iter().map(|s| mia.encode_scores(s)).collect()
    };
    Ok(MembershipSets {
        members: encode(member_scores)?,
        nonmembers: encode(nonmember_scores)?,
    })
}

/// Per-sample entry of `defense_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DefenseSampleRecord {
    original_argmax: usize,
    defended_argmax: usize,
    mhat_before: f64,
    mhat_after: f64,
    loss_l: f64,
    iterations: usize,
    converged: bool,
}

impl From<&DefendedSample> for DefenseSampleRecord {
    fn from(s: &DefendedSample) -> DefenseSampleRecord {
        DefenseSampleRecord {
            original_argmax: s.original_argmax,
            defended_argmax: s.defended_argmax,
            mhat_before: s.mhat_before,
            mhat_after: s.mhat_after,
            loss_l: s.loss_l,
            iterations: s.iterations,
            converged: s.converged,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DefenseReportFile {
    samples: Vec<DefenseSampleRecord>,
    integrity: IntegrityReport,
    summary: DefenseSummary,
}

/// Runs a full experiment into `out_dir` and returns the report.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let bench = Workbench::init(config.clone(), out_dir)?;
    let mut timings: BTreeMap<String, u64> = BTreeMap::new();
    let mut timed = |label: &str, t0: Instant| {
        timings.insert(label.to_string(), t0.elapsed().as_millis() as u64);
    };

    let t0 = Instant::now();
    let dataset = bench.synth()?;
    timed("synth", t0);

    let t0 = Instant::now();
    let (target, target_eval) = bench.train_target(&dataset)?;
    timed("train-target", t0);

    let mut report = RunReport {
        experiment: config.experiment,
        seed: config.seed,
        config_digest: config.digest(),
        scenario_name: config.scenario().name,
        target: Some(target_eval),
        surrogate: None,
        paired_agreement: None,
        mia: None,
        shadow: None,
        noisy_rows: None,
        defense: None,
        stage_timings_ms: BTreeMap::new(),
    };

    if config.experiment.uses_setting1() {
        let t0 = Instant::now();
        let (surrogate, surrogate_eval, agreement) = bench.train_surrogate(&dataset, &target)?;
        timed("train-surrogate", t0);
        report.surrogate = Some(surrogate_eval);
        report.paired_agreement = Some(agreement);

        let t0 = Instant::now();
        let (mia, mia_eval) = bench.attack(&dataset, &target, Some(&surrogate))?;
        timed("attack", t0);
        report.mia = Some(mia_eval);

        if config.experiment == ExperimentKind::Setting1Noisy {
            let t0 = Instant::now();
            report.noisy_rows = Some(bench.noisy_eval(&dataset, &mia, &surrogate)?);
            timed("noisy-eval", t0);
        }
    } else {
        let t0 = Instant::now();
        let (mia, mia_eval) = bench.attack(&dataset, &target, None)?;
        timed("attack", t0);
        let mia_accuracy = mia_eval.accuracy;
        report.mia = Some(mia_eval);

        if config.experiment == ExperimentKind::Setting2Defense {
            let t0 = Instant::now();
            let (shadow, shadow_eval) = bench.train_shadow(&dataset, &target)?;
            timed("train-shadow", t0);
            let shadow_accuracy = shadow_eval.accuracy;
            report.shadow = Some(shadow_eval);

            let t0 = Instant::now();
            report.defense = Some(bench.defend(
                &dataset,
                &target,
                &mia,
                &shadow,
                shadow_accuracy,
                mia_accuracy,
            )?);
            timed("defend", t0);
        }
    }

    report.stage_timings_ms = timings;
    bench.write_report(&report)?;
    Ok(report)
}

/// Mean and sample standard deviation of repeated-run accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedStat {
    pub mean: f64,
    pub std_dev: f64,
    pub values: Vec<f64>,
}

impl MultiSeedStat {
    fn from_values(values: Vec<f64>) -> MultiSeedStat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() < 2 {
            0.0
        } else {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        MultiSeedStat {
            mean,
            std_dev: var.sqrt(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub experiment: ExperimentKind,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub stats: BTreeMap<String, MultiSeedStat>,
}

/// Repeats an experiment over `count` consecutive master seeds; each run goes
/// to `out_dir/seed-<n>`, with aggregate statistics in `multi_report.json`.
pub fn run_multi(config: &ExperimentConfig, out_dir: &Path, count: usize) -> Result<MultiSeedReport> {
    if count == 0 {
        return Err(Error::Config("--seeds must be >= 1".into()));
    }
    let mut reports = Vec::with_capacity(count);
    let mut seeds = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let seed = config.seed.wrapping_add(i);
        let mut cfg = config.clone();
        cfg.seed = seed;
        let dir = out_dir.join(format!("seed-{seed}"));
        reports.push(run(&cfg, &dir)?);
        seeds.push(seed);
    }
    let mut stats = BTreeMap::new();
    let mut add = |name: &str, extract: &dyn Fn(&RunReport) -> Option<f64>| {
        let values: Vec<f64> = reports.iter().filter_map(extract).collect();
        if values.len() == reports.len() {
            stats.insert(name.to_string(), MultiSeedStat::from_values(values));
        }
    };
    add("target_accuracy", &|r| r.target.as_ref().map(|e| e.accuracy));
    add("surrogate_accuracy", &|r| r.surrogate.as_ref().map(|e| e.accuracy));
    add("paired_agreement", &|r| r.paired_agreement);
    add("mia_accuracy", &|r| r.mia.as_ref().map(|e| e.accuracy));
    add("shadow_accuracy", &|r| r.shadow.as_ref().map(|e| e.accuracy));
    add("mia_accuracy_with_defense", &|r| {
        r.defense.as_ref().map(|d| d.mia_accuracy_with_defense)
    });
    add("shadow_accuracy_with_defense", &|r| {
        r.defense.as_ref().map(|d| d.shadow_accuracy_with_defense)
    });
    add("defense_convergence_rate", &|r| {
        r.defense.as_ref().map(|d| d.convergence_rate)
    });
    let multi = MultiSeedReport {
        experiment: config.experiment,
        base_seed: config.seed,
        seeds,
        stats,
    };
    write_json(&out_dir.join("multi_report.json"), &multi)?;
    Ok(multi)
}

/// Threshold check outcome for one reported quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCheck {
    pub name: String,
    pub value: f64,
    pub requirement: String,
    pub passed: bool,
}

/// Human-readable summary of a finished run plus pass/fail threshold checks.
#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub report: RunReport,
    pub checks: Vec<ThresholdCheck>,
    pub text: String,
}

impl ReportSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn fmt_matrix(matrix: &ConfusionMatrix, row_names: Option<&[&str]>) -> String {
    let mut out = String::new();
    for (i, row) in matrix.rates.iter().enumerate() {
        let label = match row_names {
            Some(names) if i < names.len() => names[i].to_string(),
            _ => format!("class {}", matrix.true_classes[i]),
        };
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        out.push_str(&format!("    {label:<12} {}\n", cells.join("  ")));
    }
    out
}

/// Loads `report.json` from a run directory, renders a summary, and checks
/// the experiment's acceptance thresholds. The summary is a pure function of
/// the on-disk artifacts.
pub fn report(run_dir: &Path) -> Result<ReportSummary> {
    let report: RunReport = read_json(&run_dir.join(artifacts::REPORT))?;
    let mut checks = Vec::new();
    let mut check = |name: &str, value: f64, requirement: String, passed: bool| {
        checks.push(ThresholdCheck {
            name: name.to_string(),
            value,
            requirement,
            passed,
        });
    };

    match report.experiment {
        ExperimentKind::Setting1Strong | ExperimentKind::Setting1Weak | ExperimentKind::Setting1Noisy => {
            if let Some(t) = &report.target {
                check("target_accuracy", t.accuracy, ">= 0.95".into(), t.accuracy >= 0.95);
            }
            if let Some(s) = &report.surrogate {
                check("surrogate_accuracy", s.accuracy, ">= 0.95".into(), s.accuracy >= 0.95);
            }
            if let Some(a) = report.paired_agreement {
                check("paired_agreement", a, ">= 0.95".into(), a >= 0.95);
            }
            if report.experiment == ExperimentKind::Setting1Strong {
                if let Some(m) = &report.mia {
                    check(
                        "mia_accuracy",
                        m.accuracy,
                        "in [0.78, 0.95]".into(),
                        (0.78..=0.95).contains(&m.accuracy),
                    );
                }
            }
            if let Some(rows) = &report.noisy_rows {
                let level0_member = rows
                    .iter()
                    .find(|r| r.level == 0.0 && r.aggregate == Aggregate::Average)
                    .map(|r| r.member_acc)
                    .unwrap_or(f64::NAN);
                let max_rows: Vec<&NoisyVariationRow> = rows
                    .iter()
                    .filter(|r| r.aggregate == Aggregate::Maximum && r.level > 0.0)
                    .collect();
                let members_all_one = max_rows.iter().all(|r| r.member_acc == 1.0);
                check(
                    "max_aggregation_member_accuracy",
                    if members_all_one { 1.0 } else { 0.0 },
                    "= 1.0 at every level >= 0.1".into(),
                    members_all_one,
                );
                let first = max_rows.iter().find(|r| (r.level - 0.1).abs() < 1e-9);
                let last = max_rows.iter().find(|r| (r.level - 0.9).abs() < 1e-9);
                if let (Some(first), Some(last)) = (first, last) {
                    check(
                        "max_aggregation_nonmember_trend",
                        last.nonmember_acc,
                        format!("< {:.4} (level 0.1)", first.nonmember_acc),
                        last.nonmember_acc < first.nonmember_acc,
                    );
                }
                let avg_drops = rows
                    .iter()
                    .filter(|r| r.aggregate == Aggregate::Average && r.level >= 0.3 - 1e-9 && r.level > 0.0)
                    .all(|r| r.member_acc < level0_member);
                check(
                    "average_aggregation_member_drop",
                    if avg_drops { 1.0 } else { 0.0 },
                    format!("member accuracy < level-0 value {level0_member:.4} at levels >= 0.3"),
                    avg_drops,
                );
            }
        }
        ExperimentKind::Setting2Mia | ExperimentKind::Setting2Defense => {
            if let Some(t) = &report.target {
                check(
                    "target_accuracy",
                    t.accuracy,
                    "in [0.85, 1.0]".into(),
                    (0.85..=1.0).contains(&t.accuracy),
                );
            }
            if let Some(m) = &report.mia {
                check("mia_accuracy", m.accuracy, ">= 0.90".into(), m.accuracy >= 0.90);
            }
            if let Some(s) = &report.shadow {
                check("shadow_accuracy", s.accuracy, ">= 0.90".into(), s.accuracy >= 0.90);
            }
            if let Some(d) = &report.defense {
                check(
                    "mia_accuracy_with_defense",
                    d.mia_accuracy_with_defense,
                    "<= 0.60".into(),
                    d.mia_accuracy_with_defense <= 0.60,
                );
                check(
                    "shadow_accuracy_with_defense",
                    d.shadow_accuracy_with_defense,
                    "<= 0.75".into(),
                    d.shadow_accuracy_with_defense <= 0.75,
                );
                check(
                    "defense_convergence_rate",
                    d.convergence_rate,
                    ">= 0.95".into(),
                    d.convergence_rate >= 0.95,
                );
                check(
                    "defense_argmax_violations",
                    d.argmax_violations as f64,
                    "= 0".into(),
                    d.argmax_violations == 0,
                );
            }
        }
    }

    let mut text = String::new();
    text.push_str(&format!(
        "experiment {}  seed {}  digest {}\n",
        report.experiment.name(),
        report.seed,
        &report.config_digest[..12]
    ));
    if let Some(t) = &report.target {
        text.push_str(&format!("  target classifier accuracy:    {:.4}\n", t.accuracy));
    }
    if let Some(s) = &report.surrogate {
        text.push_str(&format!("  surrogate classifier accuracy: {:.4}\n", s.accuracy));
    }
    if let Some(a) = report.paired_agreement {
        text.push_str(&format!("  paired label agreement:        {a:.4}\n"));
    }
    if let Some(m) = &report.mia {
        text.push_str(&format!("  attack accuracy:               {:.4}\n", m.accuracy));
        text.push_str("  attack confusion (rows: nonmember, member):\n");
        text.push_str(&fmt_matrix(&m.matrix, Some(&["nonmember", "member"])));
    }
    if let Some(s) = &report.shadow {
        text.push_str(&format!("  shadow attack accuracy:        {:.4}\n", s.accuracy));
        text.push_str("  shadow confusion (rows: nonmember, member):\n");
        text.push_str(&fmt_matrix(&s.matrix, Some(&["nonmember", "member"])));
    }
    if let Some(rows) = &report.noisy_rows {
        for aggregate in [Aggregate::Average, Aggregate::Maximum] {
            text.push_str(&format!(
                "  noisy-variation accuracies ({}): level nonmember member\n",
                aggregate.name()
            ));
            for row in rows.iter().filter(|r| r.aggregate == aggregate) {
                text.push_str(&format!(
                    "    {:>4.1}  {:.4}  {:.4}\n",
                    row.level, row.nonmember_acc, row.member_acc
                ));
            }
        }
    }
    if let Some(d) = &report.defense {
        text.push_str("  defense summary (accuracies):\n");
        text.push_str(&format!(
            "    shadow attack:    {:.4} -> {:.4}\n",
            d.shadow_accuracy_no_defense, d.shadow_accuracy_with_defense
        ));
        text.push_str(&format!(
            "    adversary attack: {:.4} -> {:.4}\n",
            d.mia_accuracy_no_defense, d.mia_accuracy_with_defense
        ));
        text.push_str(&format!(
            "    convergence rate {:.4}, argmax violations {}, classification match {:.4}\n",
            d.convergence_rate, d.argmax_violations, d.classification_match_rate
        ));
    }
    text.push_str("  checks:\n");
    for c in &checks {
        text.push_str(&format!(
            "    [{}] {} = {:.4} (require {})\n",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.requirement
        ));
    }

    Ok(ReportSummary {
        report,
        checks,
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SettingConfig;

    fn tiny_setting1(kind: ExperimentKind) -> ExperimentConfig {
        let mut scenario = match kind {
            ExperimentKind::Setting1Weak => ScenarioConfig::setting1_weak(),
            _ => ScenarioConfig::setting1_strong(),
        };
        if let SettingConfig::Setting1(ref mut s) = scenario.setting {
            s.target_train = 200;
            s.target_test = 100;
            s.surrogate_train = 100;
            s.surrogate_test = 100;
            s.mia_members = 50;
            s.mia_nonmembers = 50;
        }
        let mut config = ExperimentConfig::new(kind, 1);
        config.overrides.scenario = Some(scenario);
        config.overrides.target_train = Some(TrainConfig::default().with_epochs(8));
        config.overrides.surrogate_train = Some(TrainConfig::default().with_epochs(8));
        config.overrides.mia_train = Some(TrainConfig::default().with_epochs(15));
        config.overrides.noisy_levels = Some(vec![0.2, 0.5]);
        config.overrides.noisy_per_level = Some(3);
        config
    }

    #[test]
    fn setting1_run_produces_artifacts_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_setting1(ExperimentKind::Setting1Strong);
        let report = run(&config, dir.path()).unwrap();
        assert!(report.target.is_some());
        assert!(report.surrogate.is_some());
        assert!(report.mia.is_some());
        for artifact in [
            artifacts::CONFIG,
            artifacts::SCENARIO,
            artifacts::TARGET_MODEL,
            artifacts::TARGET_EVAL,
            artifacts::SURROGATE_MODEL,
            artifacts::MIA_MODEL,
            artifacts::MIA_EVAL,
            artifacts::REPORT,
            artifacts::TIMINGS,
        ] {
            assert!(dir.path().join(artifact).exists(), "missing {artifact}");
        }
        let summary = super::report(dir.path()).unwrap();
        assert!(!summary.text.is_empty());
    }

    #[test]
    fn noisy_run_writes_per_level_tables() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_setting1(ExperimentKind::Setting1Noisy);
        let report = run(&config, dir.path()).unwrap();
        let rows = report.noisy_rows.unwrap();
        // Levels {0, 0.2, 0.5} x two aggregates.
        assert_eq!(rows.len(), 6);
        let avg_csv = std::fs::read_to_string(dir.path().join(artifacts::NOISY_AVERAGE)).unwrap();
        assert!(avg_csv.starts_with("level,aggregate,nonmember_acc,member_acc"));
        assert_eq!(avg_csv.lines().count(), 4);
        let level0_avg = rows
            .iter()
            .find(|r| r.level == 0.0 && r.aggregate == Aggregate::Average)
            .unwrap();
        let level0_max = rows
            .iter()
            .find(|r| r.level == 0.0 && r.aggregate == Aggregate::Maximum)
            .unwrap();
        assert_eq!(level0_avg.member_acc, level0_max.member_acc);
        assert_eq!(level0_avg.nonmember_acc, level0_max.nonmember_acc);
    }

    #[test]
    fn reports_are_deterministic_modulo_timings() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let config = tiny_setting1(ExperimentKind::Setting1Strong);
        run(&config, dir_a.path()).unwrap();
        run(&config, dir_b.path()).unwrap();
        let a = std::fs::read(dir_a.path().join(artifacts::REPORT)).unwrap();
        let b = std::fs::read(dir_b.path().join(artifacts::REPORT)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stage_streams_are_independent() {
        // Changing a training stage's inputs must not perturb the synthesized
        // dataset: streams are scoped by stage label.
        let config_a = tiny_setting1(ExperimentKind::Setting1Strong);
        let mut config_b = config_a.clone();
        config_b.overrides.target_train = Some(TrainConfig::default().with_epochs(2));
        let ds_a = synth_scenario(&config_a.scenario(), config_a.seed).unwrap();
        let ds_b = synth_scenario(&config_b.scenario(), config_b.seed).unwrap();
        assert_eq!(ds_a, ds_b);
        // And the stage seeds themselves are stable and distinct.
        assert_eq!(config_a.stage_seed("mia-train"), config_b.stage_seed("mia-train"));
        assert_ne!(config_a.stage_seed("mia-train"), config_a.stage_seed("target-train"));
    }

    #[test]
    fn missing_artifacts_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            super::report(dir.path()),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn experiment_names_round_trip() {
        for kind in ExperimentKind::ALL {
            let parsed: ExperimentKind = kind.name().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("bogus".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn multi_seed_reports_mean_and_std() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_setting1(ExperimentKind::Setting1Strong);
        let multi = run_multi(&config, dir.path(), 2).unwrap();
        assert_eq!(multi.seeds, vec![1, 2]);
        let stat = &multi.stats["target_accuracy"];
        assert_eq!(stat.values.len(), 2);
        assert!(dir.path().join("seed-1").join(artifacts::REPORT).exists());
        assert!(dir.path().join("seed-2").join(artifacts::REPORT).exists());
        assert!(dir.path().join("multi_report.json").exists());
    }
}
