//! Scratch probe: defense solver failure modes (not part of the deliverable).
use airmia_core::classifiers::train_target;
use airmia_core::defense::{perturb_scores, train_shadow, SolverConfig};
use airmia_core::experiment::{ExperimentConfig, ExperimentKind};
use airmia_core::signal::{splits, synth_scenario};

fn main() {
    let seed: u64 = 3;
    let config = ExperimentConfig::new(ExperimentKind::Setting2Defense, seed);
    let ds = synth_scenario(&config.scenario(), seed).unwrap();
    let target = train_target(&ds, 20, &config.target_cfg()).unwrap();
    let a = ds.split(splits::SET_A).unwrap();
    let c = ds.split(splits::SET_C).unwrap();
    let scores_of = |ids: &[usize]| -> Vec<airmia_core::nn::ScoreVector> {
        ids.iter().map(|&id| target.scores(&ds.observation(id).unwrap().provider_features.flatten()).unwrap()).collect()
    };
    let shadow = train_shadow(&scores_of(a), &scores_of(c), &config.shadow_cfg()).unwrap();

    let cfg = SolverConfig::default();
    let mut fail_m = 0;
    let mut fail_n = 0;
    let mut printed = 0;
    for (pool, ids) in [("member", &a[..600]), ("nonmember", &ds.split(splits::SET_D).unwrap()[..600])] {
        for &id in ids {
            let s = target.scores(&ds.observation(id).unwrap().provider_features.flatten()).unwrap();
            let r = perturb_scores(&s, &shadow, &cfg).unwrap();
            if !r.converged {
                if pool == "member" { fail_m += 1 } else { fail_n += 1 }
                if printed < 8 {
                    printed += 1;
                    let m0 = shadow.score(&s).unwrap();
                    let top = s.probabilities().iter().cloned().fold(f64::MIN, f64::max);
                    println!(
                        "{pool} unconverged: m0 {m0:.4} -> best m {:.4} L {:.3e} iters {} obj_end {:.4} top {top:.6}",
                        r.shadow_score, r.loss_l, r.iterations,
                        r.objective_trace.last().unwrap(),
                    );
                }
            }
        }
    }
    println!("failures: member {fail_m}/600 nonmember {fail_n}/600");
}
