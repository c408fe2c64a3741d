//! Provider-side score perturbation against membership inference.
//!
//! The defender trains a shadow inference model on its own data, then, for
//! every score vector it is about to emit, searches for a perturbation that
//! drags the shadow's membership score toward 0.5 while keeping the argmax
//! class unchanged. The search runs in log-score space: with
//! `z_c = log(s_c + n_c)` the softmax of `z` is always a valid score vector,
//! so the simplex constraints cannot be violated, and the argmax constraint
//! becomes a hinge penalty on `z`. Deliberately, the objective is the
//! *distance* of the shadow score from 0.5 rather than a push to the opposite
//! side: flipping scores across the boundary would let an attacker recover
//! the truth by inverting decisions.

use crate::classifiers::TargetClassifier;
use crate::error::{Error, Result};
use crate::mia::{train_mia, MembershipSets, MiaMode, MiaModel};
use crate::nn::{softmax, ScoreVector, TrainConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Floor for scores entering the logarithm at solver initialization.
const LOG_FLOOR: f64 = 1e-12;

/// The defender's in-house score-based inference model.
#[derive(Debug, Clone)]
pub struct ShadowMia {
    pub mia: MiaModel,
}

impl ShadowMia {
    pub fn new(mia: MiaModel) -> Result<ShadowMia> {
        match mia.mode {
            MiaMode::ScoreBased { .. } => {}
            MiaMode::LabelBased { .. } => {
                return Err(Error::Config(
                    "shadow inference models operate on sorted score vectors".into(),
                ));
            }
        }
        if !mia.model.is_trained() {
            return Err(Error::Untrained("shadow inference model".into()));
        }
        Ok(ShadowMia { mia })
    }

    pub fn classes(&self) -> usize {
        match self.mia.mode {
            MiaMode::ScoreBased { classes } => classes,
            MiaMode::LabelBased { .. } => unreachable!("checked at construction"),
        }
    }

    /// Membership score of a raw (unsorted) score vector.
    pub fn score(&self, scores: &ScoreVector) -> Result<f64> {
        let encoded = self.mia.encode_scores(scores)?;
        self.mia.membership_score(&encoded)
    }
}

/// Trains the shadow model from the defender's member and non-member scores.
pub fn train_shadow(
    member_scores: &[ScoreVector],
    nonmember_scores: &[ScoreVector],
    cfg: &TrainConfig,
) -> Result<ShadowMia> {
    if member_scores.is_empty() || nonmember_scores.is_empty() {
        return Err(Error::EmptySampleSet("shadow training scores".into()));
    }
    let classes = member_scores[0].len();
    let mode = MiaMode::ScoreBased { classes };
    let encode = |pool: &[ScoreVector]| -> Result<Vec<Vec<f64>>> {
        pool.iter()
            .map(|s| {
                if s.len() != classes {
                    return Err(Error::DimMismatch {
                        expected: classes,
                        actual: s.len(),
                    });
                }
                Ok(s.sorted_desc().0)
            })
            .collect()
    };
    let sets = MembershipSets {
        members: encode(member_scores)?,
        nonmembers: encode(nonmember_scores)?,
    };
    ShadowMia::new(train_mia(&sets, mode, cfg)?)
}

/// Log-score parameterization of a perturbed score vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogScoreVector {
    pub values: Vec<f64>,
    /// The class whose position must stay maximal.
    pub origin_argmax: usize,
}

impl LogScoreVector {
    /// Initializes at `z_c = log s_c` (floored at 1e-12), the identity point:
    /// `softmax(log s) = s`.
    pub fn from_scores(scores: &ScoreVector) -> LogScoreVector {
        LogScoreVector {
            values: scores
                .probabilities()
                .iter()
                .map(|&s| s.max(LOG_FLOOR).ln())
                .collect(),
            origin_argmax: scores.argmax(),
        }
    }

    /// The score vector this parameterization represents; on the simplex by
    /// construction.
    pub fn to_scores(&self) -> ScoreVector {
        ScoreVector::new(softmax(&self.values)).expect("softmax output is on the simplex")
    }
}

/// Argmax-preservation penalty: `max(max_{c != c*} z_c - z_{c*}, 0)`.
/// Zero exactly when the original argmax position is (weakly) maximal.
pub fn hinge_loss(z: &LogScoreVector) -> f64 {
    let c_star = z.origin_argmax;
    let mut worst = f64::NEG_INFINITY;
    for (c, &v) in z.values.iter().enumerate() {
        if c != c_star && v > worst {
            worst = v;
        }
    }
    if worst == f64::NEG_INFINITY {
        return 0.0;
    }
    (worst - z.values[c_star]).max(0.0)
}

/// Index of the largest non-`c_star` entry (first on ties).
fn hinge_competitor(z: &LogScoreVector) -> Option<usize> {
    let c_star = z.origin_argmax;
    let mut best: Option<usize> = None;
    for (c, &v) in z.values.iter().enumerate() {
        if c == c_star {
            continue;
        }
        match best {
            Some(b) if z.values[b] >= v => {}
            _ => best = Some(c),
        }
    }
    best
}

/// Gradient-search configuration. `lambda_sweep` is tried in order until a
/// sample converges; `lambda` is the first candidate by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub step_size: f64,
    pub max_iters: usize,
    /// Convergence tolerance on `|m_hat - 0.5|`.
    pub stop_tol: f64,
    pub lambda_sweep: Vec<f64>,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            lambda: 10.0,
            step_size: 0.05,
            max_iters: 500,
            stop_tol: 0.01,
            lambda_sweep: vec![10.0, 1.0, 100.0],
            max_backtracks: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 || self.lambda_sweep.iter().any(|&l| l <= 0.0) {
            return Err(Error::Config("lambda must be > 0".into()));
        }
        if self.step_size <= 0.0 || self.stop_tol <= 0.0 {
            return Err(Error::Config("step_size and stop_tol must be > 0".into()));
        }
        Ok(())
    }

    fn candidates(&self) -> Vec<f64> {
        if self.lambda_sweep.is_empty() {
            vec![self.lambda]
        } else {
            self.lambda_sweep.clone()
        }
    }
}

/// Outcome of one score perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseResult {
    pub defended_scores: ScoreVector,
    /// Implied perturbation `n = defended - original`.
    pub perturbation: Vec<f64>,
    /// Shadow membership score at the returned iterate.
    pub shadow_score: f64,
    pub loss_l: f64,
    /// Accepted gradient steps across the whole lambda sweep.
    pub iterations: usize,
    pub converged: bool,
    /// Objective values of the run that produced the returned iterate,
    /// starting at the initial point; non-increasing by construction.
    pub objective_trace: Vec<f64>,
}

/// Shadow score, hinge loss, and the full objective at `z`.
fn evaluate_point(
    shadow: &ShadowMia,
    z: &LogScoreVector,
    lambda: f64,
) -> Result<(f64, f64, f64)> {
    let scores = z.to_scores();
    let mhat = shadow.score(&scores)?;
    let loss = hinge_loss(z);
    Ok((mhat, loss, (mhat - 0.5).abs() + lambda * loss))
}

/// Gradient of the objective with respect to `z`, differentiating through the
/// descending sort (by tracking its permutation), the shadow's log-score
/// input map, and the softmax.
///
/// With `u_k = log(softmax(z)_{perm[k]})` the chain collapses to
/// `d mhat / d z_i = G_i - s_i * sum_k g_k`, where `g` is the shadow's
/// gradient with respect to `u` and `G` is `g` permuted back to class
/// positions; the `1/s` of the log cancels the `s` of the softmax exactly.
fn objective_gradient(
    shadow: &ShadowMia,
    z: &LogScoreVector,
    lambda: f64,
    loss: f64,
) -> Result<Vec<f64>> {
    let scores = z.to_scores();
    let probs = scores.probabilities();
    let (sorted, perm) = scores.sorted_desc();
    let (mhat, grad_u) = shadow.mia.log_score_gradient(&sorted)?;
    // Sign subgradient of |mhat - 0.5|; zero exactly at the kink.
    let sign = match mhat.partial_cmp(&0.5).unwrap() {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Less => -1.0,
        std::cmp::Ordering::Equal => 0.0,
    };
    let total: f64 = grad_u.iter().sum();
    let mut grad = vec![0.0; probs.len()];
    for (k, &i) in perm.iter().enumerate() {
        grad[i] = sign * (grad_u[k] - probs[i] * total);
    }
    // Hinge term: gradient flows to the maximal competitor only.
    if loss > 0.0 {
        if let Some(competitor) = hinge_competitor(z) {
            grad[competitor] += lambda;
            grad[z.origin_argmax] -= lambda;
        }
    }
    Ok(grad)
}

/// Searches for a perturbation of `s` that brings the shadow score within
/// `stop_tol` of 0.5 while preserving the argmax class.
///
/// Steps are taken along the normalized gradient with backtracking halving;
/// a step is accepted only if it strictly decreases the objective. Lambda
/// candidates are swept in order until convergence; otherwise the best
/// iterate seen (argmax-preserving ones preferred) is returned unconverged.
pub fn perturb_scores(
    s: &ScoreVector,
    shadow: &ShadowMia,
    cfg: &SolverConfig,
) -> Result<DefenseResult> {
    cfg.validate()?;
    if s.len() != shadow.classes() {
        return Err(Error::DimMismatch {
            expected: shadow.classes(),
            actual: s.len(),
        });
    }
    let original = s.probabilities().to_vec();
    let mhat0 = shadow.score(s)?;
    if (mhat0 - 0.5).abs() <= cfg.stop_tol {
        return Ok(DefenseResult {
            defended_scores: s.clone(),
            perturbation: vec![0.0; original.len()],
            shadow_score: mhat0,
            loss_l: 0.0,
            iterations: 0,
            converged: true,
            objective_trace: vec![(mhat0 - 0.5).abs()],
        });
    }

    struct Candidate {
        z: LogScoreVector,
        mhat: f64,
        loss: f64,
        objective: f64,
        trace: Vec<f64>,
    }
    let mut best: Option<Candidate> = None;
    let mut total_iterations = 0usize;

    for lambda in cfg.candidates() {
        let mut z = LogScoreVector::from_scores(s);
        let (mut mhat, mut loss, mut objective) = evaluate_point(shadow, &z, lambda)?;
        let mut trace = vec![objective];
        let mut converged = false;
        // Warm-started backtracking: the accepted step length carries over
        // (doubled) into the next line search, so the walk from a saturated
        // one-hot corner to the 0.5 surface does not need thousands of
        // fixed-size steps.
        let mut step = cfg.step_size;
        const STEP_CAP: f64 = 4.0;

        for _ in 0..cfg.max_iters {
            let grad = objective_gradient(shadow, &z, lambda, loss)?;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            // A saturated shadow output has an exactly zero gradient. On such
            // plateaus, contract toward the uniform vector: the ordering of z
            // (hence the argmax) is preserved while the score vector flattens
            // until the shadow's output desaturates and the gradient revives.
            let plateau = norm < 1e-15;
            let direction: Vec<f64> = if plateau {
                let mean = z.values.iter().sum::<f64>() / z.values.len() as f64;
                let dev: Vec<f64> = z.values.iter().map(|v| v - mean).collect();
                let dev_norm = dev.iter().map(|d| d * d).sum::<f64>().sqrt();
                if dev_norm < 1e-12 {
                    break; // already uniform and still flat; nothing to do
                }
                dev.into_iter().map(|d| d / dev_norm).collect()
            } else {
                grad.iter().map(|g| g / norm).collect()
            };

            step = (step * 2.0).min(STEP_CAP);
            let mut accepted = false;
            for _ in 0..=cfg.max_backtracks {
                let candidate = LogScoreVector {
                    values: z
                        .values
                        .iter()
                        .zip(&direction)
                        .map(|(v, d)| v - step * d)
                        .collect(),
                    origin_argmax: z.origin_argmax,
                };
                let (c_mhat, c_loss, c_obj) = evaluate_point(shadow, &candidate, lambda)?;
                let improves = if plateau {
                    c_obj <= objective
                } else {
                    c_obj < objective
                };
                if improves {
                    z = candidate;
                    mhat = c_mhat;
                    loss = c_loss;
                    objective = c_obj;
                    accepted = true;
                    break;
                }
                step /= 2.0;
            }
            if !accepted {
                break; // line search stalled
            }
            total_iterations += 1;
            trace.push(objective);
            if (mhat - 0.5).abs() <= cfg.stop_tol && loss == 0.0 {
                converged = true;
                break;
            }
        }

        let candidate = Candidate {
            z,
            mhat,
            loss,
            objective,
            trace,
        };
        if converged {
            let defended = candidate.z.to_scores();
            let perturbation = defended
                .probabilities()
                .iter()
                .zip(&original)
                .map(|(d, o)| d - o)
                .collect();
            return Ok(DefenseResult {
                defended_scores: defended,
                perturbation,
                shadow_score: candidate.mhat,
                loss_l: candidate.loss,
                iterations: total_iterations,
                converged: true,
                objective_trace: candidate.trace,
            });
        }
        let better = match &best {
            None => true,
            Some(b) => {
                // Argmax-preserving iterates outrank violating ones.
                let cand_ok = candidate.loss == 0.0;
                let best_ok = b.loss == 0.0;
                (cand_ok && !best_ok) || (cand_ok == best_ok && candidate.objective < b.objective)
            }
        };
        if better {
            best = Some(candidate);
        }
    }

    let best = best.expect("at least one lambda candidate runs");
    let defended = best.z.to_scores();
    let perturbation = defended
        .probabilities()
        .iter()
        .zip(&original)
        .map(|(d, o)| d - o)
        .collect();
    Ok(DefenseResult {
        defended_scores: defended,
        perturbation,
        shadow_score: best.mhat,
        loss_l: best.loss,
        iterations: total_iterations,
        converged: false,
        objective_trace: best.trace,
    })
}

/// Permutes the non-argmax positions of a score vector, leaving position
/// `c_star` fixed. The value multiset is unchanged, so any sorted-score
/// inference model sees exactly the same input.
pub fn shuffle_nonmax(
    scores: &ScoreVector,
    c_star: usize,
    rng: &mut impl Rng,
) -> Result<ScoreVector> {
    if c_star >= scores.len() {
        return Err(Error::InvalidInput(format!(
            "argmax position {c_star} out of range for {} classes",
            scores.len()
        )));
    }
    let mut positions: Vec<usize> = (0..scores.len()).filter(|&i| i != c_star).collect();
    // Fisher-Yates over the non-argmax positions.
    for i in (1..positions.len()).rev() {
        let j = rng.gen_range(0..=i);
        positions.swap(i, j);
    }
    let probs = scores.probabilities();
    let mut out = vec![0.0; probs.len()];
    out[c_star] = probs[c_star];
    let source: Vec<usize> = (0..probs.len()).filter(|&i| i != c_star).collect();
    for (k, &dest) in positions.iter().enumerate() {
        out[dest] = probs[source[k]];
    }
    ScoreVector::new(out)
}

/// One defended emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefendedSample {
    pub original_scores: ScoreVector,
    /// Perturbed and shuffled; equals the original when the solver failed.
    pub defended_scores: ScoreVector,
    pub original_argmax: usize,
    pub defended_argmax: usize,
    pub mhat_before: f64,
    pub mhat_after: f64,
    pub loss_l: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Aggregate integrity check over a defended batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub total: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    /// Converged samples whose argmax changed; must be zero.
    pub argmax_violations: usize,
}

/// Defends every score the classifier emits for `features`.
///
/// Samples whose solver run fails to converge are emitted with their original
/// scores and flagged, so classification quality is never degraded by an
/// unconverged perturbation.
pub fn defend_pipeline(
    target: &TargetClassifier,
    features: &[Vec<f64>],
    shadow: &ShadowMia,
    cfg: &SolverConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<DefendedSample>, IntegrityReport)> {
    let mut samples = Vec::with_capacity(features.len());
    let mut converged_count = 0usize;
    let mut violations = 0usize;
    for x in features {
        let original = target.scores(x)?;
        let original_argmax = original.argmax();
        let mhat_before = shadow.score(&original)?;
        let result = perturb_scores(&original, shadow, cfg)?;
        let (defended, mhat_after) = if result.converged {
            let shuffled = shuffle_nonmax(&result.defended_scores, original_argmax, rng)?;
            (shuffled, result.shadow_score)
        } else {
            (original.clone(), mhat_before)
        };
        let defended_argmax = defended.argmax();
        if result.converged {
            converged_count += 1;
            if defended_argmax != original_argmax {
                violations += 1;
            }
        }
        samples.push(DefendedSample {
            original_scores: original,
            defended_scores: defended,
            original_argmax,
            defended_argmax,
            mhat_before,
            mhat_after,
            loss_l: result.loss_l,
            iterations: result.iterations,
            converged: result.converged,
        });
    }
    let total = samples.len();
    let report = IntegrityReport {
        total,
        converged: converged_count,
        convergence_rate: if total == 0 {
            0.0
        } else {
            converged_count as f64 / total as f64
        },
        argmax_violations: violations,
    };
    Ok((samples, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mia::mia_spec;
    use crate::nn::MlpModel;
    use crate::rng::stream;
    use rand::Rng;

    fn shadow_with_constant_half(classes: usize) -> ShadowMia {
        let mut model = MlpModel::zeroed(mia_spec(classes)).unwrap();
        model.mark_trained();
        ShadowMia::new(
            MiaModel::from_parts(MiaMode::ScoreBased { classes }, model).unwrap(),
        )
        .unwrap()
    }

    /// A shadow trained to separate confident (member-like) from flat
    /// (non-member-like) sorted score vectors.
    fn trained_toy_shadow(classes: usize, seed: u64) -> ShadowMia {
        let mut rng = stream(seed, "toy-shadow");
        let mut members = Vec::new();
        let mut nonmembers = Vec::new();
        for _ in 0..200 {
            let top: f64 = rng.gen_range(0.93..0.999);
            let mut rest: Vec<f64> = (0..classes - 1).map(|_| rng.gen_range(0.0..1.0)).collect();
            let rest_sum: f64 = rest.iter().sum();
            rest.iter_mut().for_each(|v| *v *= (1.0 - top) / rest_sum);
            let mut v = vec![top];
            v.extend(rest);
            members.push(ScoreVector::new(v).unwrap());

            let mut flat: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.5..1.0)).collect();
            let s: f64 = flat.iter().sum();
            flat.iter_mut().for_each(|v| *v /= s);
            nonmembers.push(ScoreVector::new(flat).unwrap());
        }
        let cfg = TrainConfig {
            epochs: 60,
            seed,
            ..TrainConfig::default()
        };
        train_shadow(&members, &nonmembers, &cfg).unwrap()
    }

    #[test]
    fn hinge_loss_reference_points() {
        let z = |values: Vec<f64>, c: usize| LogScoreVector {
            values,
            origin_argmax: c,
        };
        assert_eq!(hinge_loss(&z(vec![2.0, 1.0, 0.0], 0)), 0.0);
        assert_eq!(hinge_loss(&z(vec![1.0, 2.0, 0.0], 0)), 1.0);
        // A tie counts as preserved.
        assert_eq!(hinge_loss(&z(vec![1.0, 1.0], 0)), 0.0);
    }

    #[test]
    fn hinge_zero_iff_argmax_preserved() {
        let mut rng = stream(11, "hinge");
        for _ in 0..10_000 {
            let len = rng.gen_range(2..8);
            let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let c_star = rng.gen_range(0..len);
            let z = LogScoreVector {
                values: values.clone(),
                origin_argmax: c_star,
            };
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let preserved = values[c_star] == max;
            assert_eq!(hinge_loss(&z) == 0.0, preserved);
        }
    }

    #[test]
    fn already_ambiguous_score_needs_zero_iterations() {
        let shadow = shadow_with_constant_half(4);
        let s = ScoreVector::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let result = perturb_scores(&s, &shadow, &SolverConfig::default()).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
        assert_eq!(result.defended_scores, s);
        assert_eq!(result.shadow_score, 0.5);
    }

    #[test]
    fn converged_results_preserve_argmax_and_hit_tolerance() {
        let shadow = trained_toy_shadow(5, 3);
        let cfg = SolverConfig::default();
        let mut rng = stream(4, "inputs");
        let mut converged_seen = 0;
        for _ in 0..30 {
            let top: f64 = rng.gen_range(0.9..0.999);
            let mut rest: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let rest_sum: f64 = rest.iter().sum();
            rest.iter_mut().for_each(|v| *v *= (1.0 - top) / rest_sum);
            let mut v = vec![top];
            v.extend(rest);
            let s = ScoreVector::new(v).unwrap();
            let result = perturb_scores(&s, &shadow, &cfg).unwrap();
            if result.converged {
                converged_seen += 1;
                // Anti-flip contract: a converged result is always inside the
                // tolerance band, never pushed to the far side of 0.5.
                assert!((result.shadow_score - 0.5).abs() <= cfg.stop_tol);
                assert_eq!(result.loss_l, 0.0);
                assert_eq!(result.defended_scores.argmax(), s.argmax());
                let sum: f64 = result.defended_scores.probabilities().iter().sum();
                assert!((sum - 1.0).abs() <= 1e-9);
            }
        }
        assert!(converged_seen >= 25, "only {converged_seen}/30 converged");
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let shadow = trained_toy_shadow(4, 7);
        let s = ScoreVector::new(vec![0.97, 0.01, 0.01, 0.01]).unwrap();
        let result = perturb_scores(&s, &shadow, &SolverConfig::default()).unwrap();
        for pair in result.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0], "objective increased: {pair:?}");
        }
        assert!(result.objective_trace.len() >= 2);
    }

    #[test]
    fn shuffle_preserves_multiset_and_argmax_position() {
        let mut rng = stream(5, "shuffle");
        for _ in 0..10_000 {
            let len = rng.gen_range(2..9);
            let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= sum);
            let s = ScoreVector::new(v).unwrap();
            let c_star = s.argmax();
            let shuffled = shuffle_nonmax(&s, c_star, &mut rng).unwrap();
            assert_eq!(shuffled.probabilities()[c_star], s.probabilities()[c_star]);
            let mut a = s.probabilities().to_vec();
            let mut b = shuffled.probabilities().to_vec();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn two_class_shuffle_is_identity() {
        let s = ScoreVector::new(vec![0.7, 0.3]).unwrap();
        let mut rng = stream(6, "shuffle");
        let shuffled = shuffle_nonmax(&s, 0, &mut rng).unwrap();
        assert_eq!(shuffled, s);
    }

    #[test]
    fn shuffle_does_not_move_sorted_view() {
        let s = ScoreVector::new(vec![0.1, 0.6, 0.2, 0.1]).unwrap();
        let mut rng = stream(7, "shuffle");
        let shuffled = shuffle_nonmax(&s, 1, &mut rng).unwrap();
        assert_eq!(shuffled.sorted_desc().0, s.sorted_desc().0);
    }

    #[test]
    fn untrained_shadow_is_rejected() {
        let model = MlpModel::zeroed(mia_spec(3)).unwrap();
        let mia = MiaModel::from_parts(MiaMode::ScoreBased { classes: 3 }, model).unwrap();
        assert!(matches!(ShadowMia::new(mia), Err(Error::Untrained(_))));
    }

    #[test]
    fn label_based_shadow_is_rejected() {
        let mut model = MlpModel::zeroed(mia_spec(5)).unwrap();
        model.mark_trained();
        let mia = MiaModel::from_parts(
            MiaMode::LabelBased {
                feature_dim: 3,
                classes: 2,
            },
            model,
        )
        .unwrap();
        assert!(matches!(ShadowMia::new(mia), Err(Error::Config(_))));
    }
}
