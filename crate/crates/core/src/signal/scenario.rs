//! Scenario synthesis: draws a radio population once, then generates every
//! sample set an experiment needs as paired provider/adversary observations.

use super::{
    observe, snr_to_received_power, ChannelLink, Dataset, DeviceProfile, Membership, Modulation,
    NoiseSpec, Observer, PairedObservation, Role, TWO_PI,
};
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Names of the sample partitions produced by [`synth_scenario`].
pub mod splits {
    /// Training set of the target classifier; its samples are the members.
    pub const TARGET_TRAIN: &str = "target_train";
    /// Held-out test set for the target classifier.
    pub const TARGET_TEST: &str = "target_test";
    /// Fresh transmissions the adversary labels by overheard access decisions.
    pub const SURROGATE_TRAIN: &str = "surrogate_train";
    pub const SURROGATE_TEST: &str = "surrogate_test";
    /// Member samples available to the inference attack.
    pub const MIA_MEMBER: &str = "mia_member";
    /// Non-member samples available to the inference attack.
    pub const MIA_NONMEMBER: &str = "mia_nonmember";
    /// Training members of the multi-device target classifier.
    pub const SET_A: &str = "set_a";
    /// Held-out test set of the multi-device target classifier.
    pub const SET_B: &str = "set_b";
    /// Non-members the defender uses to train its shadow model.
    pub const SET_C: &str = "set_c";
    /// Non-members used to evaluate inference attacks.
    pub const SET_D: &str = "set_d";
    /// Member subset whose scores the adversary overhears.
    pub const A1: &str = "a1";
    /// Non-member subset whose scores the adversary overhears.
    pub const D1: &str = "d1";
}

/// Single-provider scenario where non-members can come from the same radios
/// that produced the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting1Config {
    pub authorized_devices: usize,
    pub other_devices: usize,
    pub authorized_snr_db: f64,
    pub other_snr_db: f64,
    pub target_train: usize,
    pub target_test: usize,
    pub surrogate_train: usize,
    pub surrogate_test: usize,
    pub mia_members: usize,
    pub mia_nonmembers: usize,
}

/// Multi-device scenario: each device is its own class and non-members come
/// from an extra device at a different location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting2Config {
    pub authorized_devices: usize,
    pub other_devices: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub extra_device_snr_db: f64,
    pub train_members: usize,
    pub heldout_test: usize,
    pub shadow_nonmembers: usize,
    pub eval_nonmembers: usize,
    pub mia_member_subset: usize,
    pub mia_nonmember_subset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SettingConfig {
    Setting1(Setting1Config),
    Setting2(Setting2Config),
}

/// What every transmission carries as payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BitSource {
    /// One pilot sequence drawn per scenario and transmitted by everyone,
    /// the usual shape of a PHY authentication preamble. Features then carry
    /// only fingerprint and noise.
    FixedPilot,
    /// A per-scenario codebook of `size` random messages; every transmission
    /// carries one of them, the small-vocabulary shape of access-request
    /// handshakes.
    Codebook { size: usize },
    /// Fresh random bits for every transmission.
    RandomPerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub bits_per_sample: usize,
    /// Measurement noise bounds. When `phase_noise_ref_snr_db` is set, the
    /// phase bound applies at that SNR exactly and grows as 1/sqrt(SNR) for
    /// weaker links; the power bound is the receiver noise floor and is
    /// never scaled.
    pub noise: NoiseSpec,
    #[serde(default)]
    pub phase_noise_ref_snr_db: Option<f64>,
    #[serde(default = "default_bit_source")]
    pub bit_source: BitSource,
    /// Per-transmission channel realization spread: each link's gain varies
    /// multiplicatively by Uniform[-f, +f] around its static mean for every
    /// transmission, independently per receiver.
    #[serde(default = "default_fading")]
    pub per_transmission_fading: f64,
    pub setting: SettingConfig,
}

fn default_fading() -> f64 {
    0.25
}

fn default_bit_source() -> BitSource {
    BitSource::Codebook { size: 64 }
}

impl ScenarioConfig {
    /// Authorized users at 10 dB, other users at 3 dB.
    pub fn setting1_strong() -> ScenarioConfig {
        ScenarioConfig {
            name: "setting1-strong".into(),
            bits_per_sample: 16,
            noise: NoiseSpec {
                phase_bound: 0.1,
                power_bound: 0.1,
            },
            phase_noise_ref_snr_db: None,
            bit_source: default_bit_source(),
            per_transmission_fading: default_fading(),
            setting: SettingConfig::Setting1(Setting1Config {
                authorized_devices: 3,
                other_devices: 3,
                authorized_snr_db: 10.0,
                other_snr_db: 3.0,
                target_train: 8000,
                target_test: 10_000,
                surrogate_train: 1000,
                surrogate_test: 1000,
                mia_members: 1000,
                mia_nonmembers: 1000,
            }),
        }
    }

    /// Authorized users at 3 dB, other users at 10 dB.
    pub fn setting1_weak() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::setting1_strong();
        cfg.name = "setting1-weak".into();
        if let SettingConfig::Setting1(ref mut s) = cfg.setting {
            s.authorized_snr_db = 3.0;
            s.other_snr_db = 10.0;
        }
        cfg
    }

    /// Twenty device classes spanning 3..10 dB plus one extra non-member device.
    pub fn setting2() -> ScenarioConfig {
        ScenarioConfig {
            name: "setting2".into(),
            bits_per_sample: 16,
            noise: NoiseSpec {
                phase_bound: 0.1,
                power_bound: 0.1,
            },
            phase_noise_ref_snr_db: None,
            bit_source: default_bit_source(),
            per_transmission_fading: 0.0,
            setting: SettingConfig::Setting2(Setting2Config {
                authorized_devices: 10,
                other_devices: 10,
                snr_min_db: 3.0,
                snr_max_db: 10.0,
                extra_device_snr_db: 6.5,
                train_members: 2000,
                heldout_test: 2000,
                shadow_nonmembers: 2000,
                eval_nonmembers: 2000,
                mia_member_subset: 1000,
                mia_nonmember_subset: 1000,
            }),
        }
    }

    /// Number of classes the target classifier distinguishes.
    pub fn class_count(&self) -> usize {
        match &self.setting {
            SettingConfig::Setting1(_) => 2,
            SettingConfig::Setting2(s) => s.authorized_devices + s.other_devices,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.per_transmission_fading) {
            return Err(Error::Config(format!(
                "per_transmission_fading must be in [0, 1), got {}",
                self.per_transmission_fading
            )));
        }
        if self.bits_per_sample == 0 || self.bits_per_sample % 2 != 0 {
            return Err(Error::Config(format!(
                "bits_per_sample must be a positive even number, got {}",
                self.bits_per_sample
            )));
        }
        self.noise.validate()?;
        match &self.setting {
            SettingConfig::Setting1(s) => {
                if s.authorized_devices == 0 || s.other_devices == 0 {
                    return Err(Error::Config(
                        "setting1 needs at least one device per class".into(),
                    ));
                }
                for (name, v) in [
                    ("target_train", s.target_train),
                    ("target_test", s.target_test),
                    ("surrogate_train", s.surrogate_train),
                    ("surrogate_test", s.surrogate_test),
                    ("mia_nonmembers", s.mia_nonmembers),
                ] {
                    if v == 0 || v % 2 != 0 {
                        return Err(Error::Config(format!(
                            "{name} must be a positive even count for class balance, got {v}"
                        )));
                    }
                }
                if s.mia_members == 0 || s.mia_members > s.target_train / 2 {
                    return Err(Error::Config(format!(
                        "mia_members must be in 1..={} (the class-1 half of the training set)",
                        s.target_train / 2
                    )));
                }
            }
            SettingConfig::Setting2(s) => {
                let classes = s.authorized_devices + s.other_devices;
                if classes < 2 {
                    return Err(Error::Config("setting2 needs at least two devices".into()));
                }
                if s.train_members < classes || s.heldout_test < classes {
                    return Err(Error::Config(format!(
                        "fewer samples than classes: {} classes need at least that many \
                         train/test samples",
                        classes
                    )));
                }
                if s.mia_member_subset > s.train_members {
                    return Err(Error::Config(
                        "mia_member_subset exceeds the member set".into(),
                    ));
                }
                if s.mia_nonmember_subset > s.eval_nonmembers {
                    return Err(Error::Config(
                        "mia_nonmember_subset exceeds the non-member evaluation set".into(),
                    ));
                }
                if s.shadow_nonmembers == 0 || s.eval_nonmembers == 0 {
                    return Err(Error::Config("non-member sets must be non-empty".into()));
                }
                if s.snr_max_db < s.snr_min_db {
                    return Err(Error::Config("snr_max_db below snr_min_db".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Evenly spaced values over `[min, max]`; the midpoint when `n == 1`.
fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(min + max) / 2.0];
    }
    (0..n)
        .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
        .collect()
}

struct RadioPopulation {
    devices: Vec<DeviceProfile>,
    links: Vec<ChannelLink>,
    /// Effective measurement noise per device, with the phase bound scaled
    /// to the device's SNR target.
    noise_by_device: Vec<NoiseSpec>,
}

/// Draws device phase shifts and per-link gains/offsets once for the scenario.
fn draw_radios(
    specs: &[(Modulation, Role, f64)],
    config: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> RadioPopulation {
    let noise = &config.noise;
    let mut devices = Vec::with_capacity(specs.len());
    let mut links = Vec::with_capacity(2 * specs.len());
    let mut noise_by_device = Vec::with_capacity(specs.len());
    for (id, &(modulation, role, snr_db)) in specs.iter().enumerate() {
        devices.push(DeviceProfile {
            device_id: id,
            phase_shift: rng.gen_range(0.0..TWO_PI),
            transmit_power: 1.0,
            modulation,
            role,
        });
        let target = snr_to_received_power(snr_db, noise);
        for rx in [Observer::Provider, Observer::Adversary] {
            links.push(ChannelLink {
                tx_device_id: id,
                rx,
                gain: target * rng.gen_range(0.9..1.1),
                phase_offset: rng.gen_range(0.0..TWO_PI),
            });
        }
        // Phase jitter scales as 1/sqrt(SNR) relative to the reference SNR
        // when a reference is configured.
        let phase_scale = match config.phase_noise_ref_snr_db {
            Some(reference) => 10f64.powf((reference - snr_db) / 20.0),
            None => 1.0,
        };
        noise_by_device.push(NoiseSpec {
            phase_bound: noise.phase_bound * phase_scale,
            power_bound: noise.power_bound,
        });
    }
    RadioPopulation {
        devices,
        links,
        noise_by_device,
    }
}

struct SetBuilder<'a> {
    config: &'a ScenarioConfig,
    radios: &'a RadioPopulation,
    seed: u64,
    /// The scenario-wide message vocabulary, unless bits are fully random.
    codebook: Option<Vec<Vec<u8>>>,
    observations: Vec<PairedObservation>,
    splits: BTreeMap<String, Vec<usize>>,
}

impl<'a> SetBuilder<'a> {
    fn new(config: &'a ScenarioConfig, radios: &'a RadioPopulation, seed: u64) -> SetBuilder<'a> {
        let mut rng = rng::stream(seed, "scenario/codebook");
        let mut draw_message =
            |rng: &mut ChaCha8Rng| (0..config.bits_per_sample).map(|_| rng.gen_range(0..=1u8)).collect();
        let codebook = match config.bit_source {
            BitSource::FixedPilot => Some(vec![draw_message(&mut rng)]),
            BitSource::Codebook { size } => {
                Some((0..size.max(1)).map(|_| draw_message(&mut rng)).collect())
            }
            BitSource::RandomPerSample => None,
        };
        SetBuilder {
            config,
            radios,
            seed,
            codebook,
            observations: Vec::new(),
            splits: BTreeMap::new(),
        }
    }

    fn link(&self, device_id: usize, rx: Observer) -> &ChannelLink {
        self.radios
            .links
            .iter()
            .find(|l| l.tx_device_id == device_id && l.rx == rx)
            .expect("links drawn for every device")
    }

    /// Generates one sample set. `pick` maps a sample index to the transmitting
    /// device, the modulation used for that session, and the class label.
    fn generate(
        &mut self,
        split_name: &str,
        count: usize,
        membership: Membership,
        mut pick: impl FnMut(usize) -> (usize, Modulation, usize),
    ) -> Result<()> {
        let base = rng::stream(self.seed, &format!("scenario/set/{split_name}"));
        let mut ids = Vec::with_capacity(count);
        for i in 0..count {
            let (device_id, modulation, class_label) = pick(i);
            let device = self.radios.devices[device_id].with_modulation(modulation);
            let mut sample_rng = rng::substream(&base, i as u64);
            let bits: Vec<u8> = match &self.codebook {
                Some(codebook) => codebook[sample_rng.gen_range(0..codebook.len())].clone(),
                None => (0..self.config.bits_per_sample)
                    .map(|_| sample_rng.gen_range(0..=1u8))
                    .collect(),
            };
            let noise = &self.radios.noise_by_device[device_id];
            let fading = self.config.per_transmission_fading;
            let mut realize = |link: &ChannelLink, rng: &mut ChaCha8Rng| -> ChannelLink {
                let factor = if fading == 0.0 {
                    1.0
                } else {
                    1.0 + rng.gen_range(-fading..=fading)
                };
                ChannelLink {
                    gain: link.gain * factor,
                    ..link.clone()
                }
            };
            let provider_link =
                realize(self.link(device_id, Observer::Provider), &mut sample_rng);
            let provider_features =
                observe(&device, &provider_link, &bits, noise, &mut sample_rng)?;
            let adversary_link =
                realize(self.link(device_id, Observer::Adversary), &mut sample_rng);
            let adversary_features =
                observe(&device, &adversary_link, &bits, noise, &mut sample_rng)?;
            let observation_id = self.observations.len();
            ids.push(observation_id);
            self.observations.push(PairedObservation {
                observation_id,
                bits,
                provider_features,
                adversary_features,
                class_label,
                membership,
                device_id,
            });
        }
        self.splits.insert(split_name.to_string(), ids);
        Ok(())
    }
}

/// Synthesizes the full dataset for a scenario. Identical `(config, seed)`
/// inputs produce bitwise-identical datasets.
pub fn synth_scenario(config: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut radio_rng = rng::stream(seed, "scenario/radio");

    match &config.setting {
        SettingConfig::Setting1(s) => {
            let mut specs = Vec::new();
            for _ in 0..s.authorized_devices {
                specs.push((Modulation::Qpsk, Role::Authorized, s.authorized_snr_db));
            }
            for _ in 0..s.other_devices {
                specs.push((Modulation::Bpsk, Role::Other, s.other_snr_db));
            }
            let radios = draw_radios(&specs, config, &mut radio_rng);
            let auth = |i: usize| i % s.authorized_devices;
            let other = |i: usize| s.authorized_devices + i % s.other_devices;

            let mut b = SetBuilder::new(config, &radios, seed);
            // Class-1 half first so the member subset is all authorized QPSK.
            let half_train = s.target_train / 2;
            b.generate(splits::TARGET_TRAIN, s.target_train, Membership::Member, |i| {
                if i < half_train {
                    (auth(i), Modulation::Qpsk, 1)
                } else {
                    (other(i - half_train), Modulation::Bpsk, 0)
                }
            })?;
            let half_test = s.target_test / 2;
            b.generate(splits::TARGET_TEST, s.target_test, Membership::Unused, |i| {
                if i < half_test {
                    (auth(i), Modulation::Qpsk, 1)
                } else {
                    (other(i - half_test), Modulation::Bpsk, 0)
                }
            })?;
            for (name, count) in [
                (splits::SURROGATE_TRAIN, s.surrogate_train),
                (splits::SURROGATE_TEST, s.surrogate_test),
            ] {
                let half = count / 2;
                b.generate(name, count, Membership::Unused, |i| {
                    if i < half {
                        (auth(i), Modulation::Qpsk, 1)
                    } else {
                        (other(i - half), Modulation::Bpsk, 0)
                    }
                })?;
            }
            // Non-members are all QPSK: half from the authorized radios
            // themselves, half from the other radios switching modulation.
            let half_nm = s.mia_nonmembers / 2;
            b.generate(
                splits::MIA_NONMEMBER,
                s.mia_nonmembers,
                Membership::Nonmember,
                |i| {
                    if i < half_nm {
                        (auth(i), Modulation::Qpsk, 1)
                    } else {
                        (other(i - half_nm), Modulation::Qpsk, 0)
                    }
                },
            )?;
            let member_ids: Vec<usize> = b.splits[splits::TARGET_TRAIN][..s.mia_members].to_vec();
            b.splits.insert(splits::MIA_MEMBER.to_string(), member_ids);
            let SetBuilder {
                observations,
                splits: split_map,
                ..
            } = b;

            let mut snr_map = BTreeMap::new();
            snr_map.insert("authorized".to_string(), s.authorized_snr_db);
            snr_map.insert("other".to_string(), s.other_snr_db);
            Ok(Dataset {
                seed,
                snr_map,
                devices: radios.devices,
                links: radios.links,
                observations,
                splits: split_map,
            })
        }
        SettingConfig::Setting2(s) => {
            let classes = s.authorized_devices + s.other_devices;
            let auth_snrs = linspace(s.snr_min_db, s.snr_max_db, s.authorized_devices);
            let other_snrs = linspace(s.snr_min_db, s.snr_max_db, s.other_devices);
            let mut specs = Vec::new();
            for &snr in &auth_snrs {
                specs.push((Modulation::Qpsk, Role::Authorized, snr));
            }
            for &snr in &other_snrs {
                specs.push((Modulation::Bpsk, Role::Other, snr));
            }
            specs.push((
                Modulation::Qpsk,
                Role::NonmemberGenerator,
                s.extra_device_snr_db,
            ));
            let radios = draw_radios(&specs, config, &mut radio_rng);
            let extra_id = classes;

            let mut b = SetBuilder::new(config, &radios, seed);
            let by_class = |i: usize| {
                let device = i % classes;
                let modulation = if device < s.authorized_devices {
                    Modulation::Qpsk
                } else {
                    Modulation::Bpsk
                };
                (device, modulation, device)
            };
            b.generate(splits::SET_A, s.train_members, Membership::Member, by_class)?;
            b.generate(splits::SET_B, s.heldout_test, Membership::Unused, by_class)?;
            // The extra device alternates modulations; its labels are
            // placeholders in the 20-class space and never train anything.
            let extra_pick = move |i: usize| {
                if i % 2 == 0 {
                    (extra_id, Modulation::Qpsk, (i / 2) % s.authorized_devices)
                } else {
                    (
                        extra_id,
                        Modulation::Bpsk,
                        s.authorized_devices + (i / 2) % s.other_devices,
                    )
                }
            };
            b.generate(
                splits::SET_C,
                s.shadow_nonmembers,
                Membership::Nonmember,
                extra_pick,
            )?;
            b.generate(
                splits::SET_D,
                s.eval_nonmembers,
                Membership::Nonmember,
                extra_pick,
            )?;
            let a1: Vec<usize> = b.splits[splits::SET_A][..s.mia_member_subset].to_vec();
            let d1: Vec<usize> = b.splits[splits::SET_D][..s.mia_nonmember_subset].to_vec();
            b.splits.insert(splits::A1.to_string(), a1);
            b.splits.insert(splits::D1.to_string(), d1);
            let SetBuilder {
                observations,
                splits: split_map,
                ..
            } = b;

            let mut snr_map = BTreeMap::new();
            snr_map.insert("authorized-min".to_string(), s.snr_min_db);
            snr_map.insert("authorized-max".to_string(), s.snr_max_db);
            snr_map.insert("other-min".to_string(), s.snr_min_db);
            snr_map.insert("other-max".to_string(), s.snr_max_db);
            snr_map.insert("nonmember-generator".to_string(), s.extra_device_snr_db);
            Ok(Dataset {
                seed,
                snr_map,
                devices: radios.devices,
                links: radios.links,
                observations,
                splits: split_map,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::wrap_phase;

    #[test]
    fn setting1_counts_and_balance() {
        let config = ScenarioConfig::setting1_strong();
        let ds = synth_scenario(&config, 42).unwrap();
        let train = ds.split(splits::TARGET_TRAIN).unwrap();
        assert_eq!(train.len(), 8000);
        let class1 = train
            .iter()
            .filter(|&&id| ds.observations[id].class_label == 1)
            .count();
        assert_eq!(class1, 4000);
        assert_eq!(ds.split(splits::MIA_MEMBER).unwrap().len(), 1000);
        assert_eq!(ds.split(splits::MIA_NONMEMBER).unwrap().len(), 1000);
        // Member subset is entirely class-1 training data.
        for &id in ds.split(splits::MIA_MEMBER).unwrap() {
            let obs = &ds.observations[id];
            assert_eq!(obs.class_label, 1);
            assert_eq!(obs.membership, Membership::Member);
        }
        // Non-members are all QPSK sessions.
        for &id in ds.split(splits::MIA_NONMEMBER).unwrap() {
            assert_eq!(ds.observations[id].membership, Membership::Nonmember);
        }
    }

    #[test]
    fn setting2_has_twenty_classes() {
        let config = ScenarioConfig::setting2();
        let ds = synth_scenario(&config, 7).unwrap();
        let labels: std::collections::BTreeSet<usize> = ds
            .split(splits::SET_A)
            .unwrap()
            .iter()
            .map(|&id| ds.observations[id].class_label)
            .collect();
        assert_eq!(labels.len(), 20);
        assert_eq!(config.class_count(), 20);
        assert_eq!(ds.split(splits::A1).unwrap().len(), 1000);
        assert_eq!(ds.split(splits::D1).unwrap().len(), 1000);
        // The extra device never appears in the training set.
        let extra_id = 20;
        assert!(ds
            .split(splits::SET_A)
            .unwrap()
            .iter()
            .all(|&id| ds.observations[id].device_id != extra_id));
        assert!(ds
            .split(splits::SET_C)
            .unwrap()
            .iter()
            .all(|&id| ds.observations[id].device_id == extra_id));
    }

    #[test]
    fn same_seed_gives_identical_datasets() {
        let config = ScenarioConfig::setting1_strong();
        let a = synth_scenario(&config, 11).unwrap();
        let b = synth_scenario(&config, 11).unwrap();
        assert_eq!(a, b);
        let c = synth_scenario(&config, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_noise_pairing_offset_is_constant() {
        let mut config = ScenarioConfig::setting1_strong();
        // Zero phase noise; the power bound stays positive because it sizes
        // the link gains.
        config.noise = NoiseSpec {
            phase_bound: 0.0,
            power_bound: 0.1,
        };
        if let SettingConfig::Setting1(ref mut s) = config.setting {
            s.target_train = 40;
            s.target_test = 10;
            s.surrogate_train = 10;
            s.surrogate_test = 10;
            s.mia_members = 10;
            s.mia_nonmembers = 10;
        }
        let ds = synth_scenario(&config, 3).unwrap();
        for obs in &ds.observations {
            let link_p = ds.link(obs.device_id, Observer::Provider).unwrap();
            let link_a = ds.link(obs.device_id, Observer::Adversary).unwrap();
            let expected = wrap_phase(link_p.phase_offset - link_a.phase_offset);
            for (pp, pa) in obs
                .provider_features
                .phases()
                .iter()
                .zip(obs.adversary_features.phases())
            {
                let delta = wrap_phase(pp - pa);
                assert!(
                    (delta - expected).abs() < 1e-9
                        || (delta - expected).abs() > TWO_PI - 1e-9,
                    "delta {delta} vs expected {expected}"
                );
            }
        }
    }

    #[test]
    fn mean_power_increases_with_snr() {
        let noise = NoiseSpec::new(0.1, 0.1).unwrap();
        let mut last = f64::NEG_INFINITY;
        for snr in [3.0, 5.0, 7.0, 10.0] {
            let mut rng = crate::rng::stream(5, "snr-mono");
            let mut total = 0.0;
            // Average over many link draws so the +-10% gain factor washes out.
            for _ in 0..200 {
                total += snr_to_received_power(snr, &noise) * rng.gen_range(0.9..1.1);
            }
            let mean = total / 200.0;
            assert!(mean > last);
            last = mean;
        }
    }

    #[test]
    fn inconsistent_config_is_rejected() {
        let mut config = ScenarioConfig::setting1_strong();
        if let SettingConfig::Setting1(ref mut s) = config.setting {
            s.mia_members = 5000; // exceeds the class-1 half
        }
        assert!(matches!(synth_scenario(&config, 0), Err(Error::Config(_))));

        let mut config = ScenarioConfig::setting2();
        if let SettingConfig::Setting2(ref mut s) = config.setting {
            s.train_members = 10; // fewer samples than classes
        }
        assert!(matches!(synth_scenario(&config, 0), Err(Error::Config(_))));
    }

    #[test]
    fn all_phases_are_wrapped() {
        let ds = synth_scenario(&ScenarioConfig::setting2(), 9).unwrap();
        for obs in ds.observations.iter().take(200) {
            for fv in [&obs.provider_features, &obs.adversary_features] {
                for &p in fv.phases() {
                    assert!((0.0..TWO_PI).contains(&p));
                }
            }
        }
    }

    #[test]
    fn config_json_round_trip() {
        let config = ScenarioConfig::setting2();
        let json = config.to_json().unwrap();
        let back = ScenarioConfig::from_json(&json).unwrap();
        assert_eq!(config, back);
    }
}
