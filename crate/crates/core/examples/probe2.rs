//! Scratch probe: noisy-variation trend checks (not part of the deliverable).
use airmia_core::classifiers::{train_surrogate, train_target};
use airmia_core::experiment::{ExperimentConfig, ExperimentKind};
use airmia_core::mia::{build_label_sets, noisy_variation_eval, train_mia, Aggregate};
use airmia_core::signal::{feature_ranges, splits, synth_scenario};

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let batch: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let mut config = ExperimentConfig::new(ExperimentKind::Setting1Noisy, seed);
    let mut mia_cfg = airmia_core::nn::TrainConfig::default().with_epochs(epochs);
    mia_cfg.batch_size = batch;
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

    let l0 = rows.iter().find(|r| r.level == 0.0 && r.aggregate == Aggregate::Average).unwrap();
    let max_rows: Vec<_> = rows.iter().filter(|r| r.aggregate == Aggregate::Maximum && r.level > 0.0).collect();
    let min_member = max_rows.iter().map(|r| r.member_acc).fold(f64::INFINITY, f64::min);
    let nm01 = max_rows.iter().find(|r| (r.level - 0.1).abs() < 1e-9).unwrap().nonmember_acc;
    let nm09 = max_rows.iter().find(|r| (r.level - 0.9).abs() < 1e-9).unwrap().nonmember_acc;
    let avg_drop_ok = rows.iter()
        .filter(|r| r.aggregate == Aggregate::Average && r.level >= 0.3 - 1e-9 && r.level > 0.0)
        .all(|r| r.member_acc < l0.member_acc);
    println!(
        "ep {epochs:3} b {batch:3} seed {seed}: level0 (nm {:.3}, m {:.3}) | 4a min-member-max {:.4} {} | 4b {:.3}->{:.3} {} | 4c {}",
        l0.nonmember_acc, l0.member_acc, min_member,
        if min_member == 1.0 { "PASS" } else { "fail" },
        nm01, nm09, if nm09 < nm01 { "PASS" } else { "fail" },
        if avg_drop_ok { "PASS" } else { "fail" },
    );
}
