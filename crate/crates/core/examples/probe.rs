//! Scratch calibration probe (not part of the deliverable).
use airmia_core::classifiers::{train_surrogate, train_target};
use airmia_core::experiment::{ExperimentConfig, ExperimentKind};
use airmia_core::mia::{build_label_sets, evaluate_mia, train_mia};
use airmia_core::signal::{splits, synth_scenario};

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let batch: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let lr: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    for kind in [ExperimentKind::Setting1Strong, ExperimentKind::Setting1Weak] {
        let mut config = ExperimentConfig::new(kind, seed);
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
        let cm = evaluate_mia(&mia, &sets).unwrap();
        let half = nonmember_ids.len() / 2;
        let acc_of = |ids: &[usize]| -> f64 {
            let hits = ids.iter().filter(|&&id| {
                let obs = ds.observation(id).unwrap();
                let feats = obs.adversary_features.flatten();
                let label = surrogate.decide(&feats).unwrap();
                let input = mia.encode_labeled(&feats, label).unwrap();
                !mia.infer(&input).unwrap().is_member
            }).count();
            hits as f64 / ids.len() as f64
        };
        println!(
            "{:18} ep {:3} b {:4} lr {:.4} seed {}: acc {:.4} member {:.4} | nm same {:.4} other {:.4}",
            kind.name(), epochs, batch, lr, seed, cm.accuracy, cm.rate(1, 1),
            acc_of(&nonmember_ids[..half]), acc_of(&nonmember_ids[half..])
        );
    }
}
