//! Scratch probe: setting-2 sweep (not part of the deliverable).
use airmia_core::classifiers::{evaluate, train_target};
use airmia_core::experiment::{ExperimentConfig, ExperimentKind};
use airmia_core::mia::{build_score_sets, evaluate_mia, train_mia};
use airmia_core::signal::{splits, synth_scenario, Observer, SettingConfig};

fn main() {
    let fading: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut config = ExperimentConfig::new(ExperimentKind::Setting2Mia, seed);
    let mut scenario = config.scenario();
    scenario.per_transmission_fading = fading;
    if let Some(snr) = std::env::args().nth(5).and_then(|s| s.parse::<f64>().ok()) {
        if let SettingConfig::Setting2(ref mut s) = scenario.setting {
            s.extra_device_snr_db = snr;
        }
    }
    if let SettingConfig::Setting2(_) = scenario.setting {}
    config.overrides.scenario = Some(scenario);
    config.overrides.target_train = Some({
        let mut c = airmia_core::nn::TrainConfig::default().with_epochs(epochs);
        c.seed = 0;
        c
    });
    let mia_ep: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(150);
    config.overrides.mia_train = Some(airmia_core::nn::TrainConfig::default().with_epochs(mia_ep));
    let ds = synth_scenario(&config.scenario(), seed).unwrap();
    let target = train_target(&ds, 20, &config.target_cfg()).unwrap();
    let test = ds.labeled_features(splits::SET_B, Observer::Provider).unwrap();
    let target_acc = evaluate(&target.model, &test, 20).unwrap().accuracy;

    let a = ds.split(splits::SET_A).unwrap();
    let a1 = ds.split(splits::A1).unwrap();
    let d = ds.split(splits::SET_D).unwrap();
    let d1 = ds.split(splits::D1).unwrap();
    let (mode, train_sets) = build_score_sets(&ds, &target, a1, d1).unwrap();
    let mia = train_mia(&train_sets, mode, &config.mia_cfg()).unwrap();
    let hold_m: Vec<usize> = a.iter().copied().filter(|id| !a1.contains(id)).collect();
    let hold_n: Vec<usize> = d.iter().copied().filter(|id| !d1.contains(id)).collect();
    let (_, eval_sets) = build_score_sets(&ds, &target, &hold_m, &hold_n).unwrap();
    let cm = evaluate_mia(&mia, &eval_sets).unwrap();
    println!(
        "fading {fading} target-ep {epochs} mia-ep {mia_ep} seed {seed}: target {target_acc:.4} | mia {:.4} (nm {:.4} m {:.4})",
        cm.accuracy, cm.rate(0, 0), cm.rate(1, 1)
    );
}
