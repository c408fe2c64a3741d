//! Scratch probe: per-level stubborn-member counts (not part of the deliverable).
use airmia_core::classifiers::{train_surrogate, train_target};
use airmia_core::experiment::{ExperimentConfig, ExperimentKind};
use airmia_core::mia::{build_label_sets, noisy_variation_eval, train_mia, Aggregate};
use airmia_core::signal::{feature_ranges, splits, synth_scenario};

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let batch: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let lr: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let mut config = ExperimentConfig::new(ExperimentKind::Setting1Noisy, seed);
    let mut mia_cfg = airmia_core::nn::TrainConfig::default().with_epochs(epochs);
    mia_cfg.batch_size = batch;
    mia_cfg.learning_rate = lr;
    config.overrides.mia_train = Some(mia_cfg);
    let ds = synth_scenario(&config.scenario(), seed).unwrap();
    let target = train_target(&ds, 2, &config.target_cfg()).unwrap();
    let surrogate = train_surrogate(&ds, &target, &config.surrogate_cfg()).unwrap();
    let member_ids = ds.split(splits::MIA_MEMBER).unwrap();
    let nonmember_ids = ds.split(splits::MIA_NONMEMBER).unwrap();
    let (mode, sets) = build_label_sets(&ds, &surrogate, member_ids, nonmember_ids).unwrap();
    let mia = train_mia(&sets, mode, &config.mia_cfg()).unwrap();
    let members: Vec<_> = member_ids.iter().map(|&id| ds.observation(id).unwrap().adversary_features.clone()).collect();
    let nonmembers: Vec<_> = nonmember_ids.iter().map(|&id| ds.observation(id).unwrap().adversary_features.clone()).collect();
    let ranges = feature_ranges(members.iter().chain(nonmembers.iter())).unwrap();
    let base = airmia_core::rng::stream(seed, "noisy-eval");
    let levels: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let rows = noisy_variation_eval(&mia, &surrogate, &members, &nonmembers, &levels, 10, &ranges, &base).unwrap();
    let fails: Vec<String> = rows.iter()
        .filter(|r| r.aggregate == Aggregate::Maximum && r.level > 0.0 && r.member_acc < 1.0)
        .map(|r| format!("L{:.1}:{}", r.level, ((1.0 - r.member_acc) * members.len() as f64).round() as usize))
        .collect();
    let l0 = rows.iter().find(|r| r.level == 0.0).unwrap();
    println!(
        "ep {epochs} b {batch} lr {lr} seed {seed}: level0 m {:.3} | member-max failures: [{}]",
        l0.member_acc,
        if fails.is_empty() { "NONE - PASS".to_string() } else { fails.join(" ") }
    );
}
