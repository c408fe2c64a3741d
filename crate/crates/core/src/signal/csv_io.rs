//! Dataset exchange format: a CSV of per-observer feature rows plus a JSON
//! sidecar for the radio population and split bookkeeping.
//!
//! Feature values are written with Rust's shortest round-trip float formatting,
//! so loading a dataset reproduces the exact bits. Transmitted bit sequences
//! are not persisted; loaded observations carry empty bit vectors.

use super::{
    ChannelLink, Dataset, DeviceProfile, FeatureVector, Membership, Observer, PairedObservation,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const DATASET_CSV: &str = "dataset.csv";
pub const DATASET_META: &str = "dataset_meta.json";

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    seed: u64,
    snr_map: BTreeMap<String, f64>,
    devices: Vec<DeviceProfile>,
    links: Vec<ChannelLink>,
    splits: BTreeMap<String, Vec<usize>>,
}

fn membership_str(m: Membership) -> &'static str {
    match m {
        Membership::Member => "member",
        Membership::Nonmember => "nonmember",
        Membership::Unused => "unused",
    }
}

fn parse_membership(s: &str) -> Result<Membership> {
    match s {
        "member" => Ok(Membership::Member),
        "nonmember" => Ok(Membership::Nonmember),
        "unused" => Ok(Membership::Unused),
        other => Err(Error::InvalidInput(format!("unknown membership {other:?}"))),
    }
}

fn observer_str(o: Observer) -> &'static str {
    match o {
        Observer::Provider => "provider",
        Observer::Adversary => "adversary",
    }
}

impl Dataset {
    /// Writes `dataset.csv` and `dataset_meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let feature_count = self
            .observations
            .first()
            .map(|o| 2 * o.provider_features.len())
            .unwrap_or(0);

        let mut writer = csv::Writer::from_path(dir.join(DATASET_CSV))?;
        let mut header = vec!["observation_id".to_string(), "observer".to_string()];
        header.extend((0..feature_count).map(|k| format!("feature_{k}")));
        header.extend(["class_label".into(), "membership".into(), "device_id".into()]);
        writer.write_record(&header)?;

        for obs in &self.observations {
            for observer in [Observer::Provider, Observer::Adversary] {
                let mut record = vec![obs.observation_id.to_string(), observer_str(observer).into()];
                record.extend(obs.features(observer).flatten().iter().map(|v| format!("{v}")));
                record.push(obs.class_label.to_string());
                record.push(membership_str(obs.membership).into());
                record.push(obs.device_id.to_string());
                writer.write_record(&record)?;
            }
        }
        writer.flush()?;

        let meta = DatasetMeta {
            seed: self.seed,
            snr_map: self.snr_map.clone(),
            devices: self.devices.clone(),
            links: self.links.clone(),
            splits: self.splits.clone(),
        };
        std::fs::write(
            dir.join(DATASET_META),
            serde_json::to_string_pretty(&meta)?,
        )?;
        Ok(())
    }

    /// Loads a dataset previously written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Dataset> {
        let csv_path = dir.join(DATASET_CSV);
        let meta_path = dir.join(DATASET_META);
        for p in [&csv_path, &meta_path] {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.clone()));
            }
        }
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;

        let mut reader = csv::Reader::from_path(&csv_path)?;
        let header = reader.headers()?.clone();
        let feature_count = header.len().checked_sub(5).ok_or_else(|| {
            Error::InvalidInput("dataset CSV has too few columns".into())
        })?;

        struct Half {
            features: FeatureVector,
            class_label: usize,
            membership: Membership,
            device_id: usize,
        }
        let mut provider_rows: BTreeMap<usize, Half> = BTreeMap::new();
        let mut adversary_rows: BTreeMap<usize, Half> = BTreeMap::new();

        for record in reader.records() {
            let record = record?;
            let parse = |idx: usize| -> Result<&str> {
                record
                    .get(idx)
                    .ok_or_else(|| Error::InvalidInput("short CSV record".into()))
            };
            let id: usize = parse(0)?
                .parse()
                .map_err(|_| Error::InvalidInput("bad observation_id".into()))?;
            let observer = parse(1)?;
            let mut flat = Vec::with_capacity(feature_count);
            for k in 0..feature_count {
                let v: f64 = parse(2 + k)?
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad feature_{k}")))?;
                flat.push(v);
            }
            let class_label: usize = parse(2 + feature_count)?
                .parse()
                .map_err(|_| Error::InvalidInput("bad class_label".into()))?;
            let membership = parse_membership(parse(3 + feature_count)?)?;
            let device_id: usize = parse(4 + feature_count)?
                .parse()
                .map_err(|_| Error::InvalidInput("bad device_id".into()))?;
            let half = Half {
                features: FeatureVector::from_flat(&flat)?,
                class_label,
                membership,
                device_id,
            };
            match observer {
                "provider" => provider_rows.insert(id, half),
                "adversary" => adversary_rows.insert(id, half),
                other => {
                    return Err(Error::InvalidInput(format!("unknown observer {other:?}")));
                }
            };
        }

        let mut observations = Vec::with_capacity(provider_rows.len());
        for (id, provider) in provider_rows {
            let adversary = adversary_rows.remove(&id).ok_or_else(|| {
                Error::InvalidInput(format!("observation {id} missing adversary row"))
            })?;
            observations.push(PairedObservation {
                observation_id: id,
                bits: Vec::new(),
                provider_features: provider.features,
                adversary_features: adversary.features,
                class_label: provider.class_label,
                membership: provider.membership,
                device_id: provider.device_id,
            });
        }
        if let Some(id) = adversary_rows.keys().next() {
            return Err(Error::InvalidInput(format!(
                "observation {id} missing provider row"
            )));
        }

        Ok(Dataset {
            seed: meta.seed,
            snr_map: meta.snr_map,
            devices: meta.devices,
            links: meta.links,
            observations,
            splits: meta.splits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_scenario, ScenarioConfig, SettingConfig};

    fn small_config() -> ScenarioConfig {
        let mut config = ScenarioConfig::setting1_strong();
        if let SettingConfig::Setting1(ref mut s) = config.setting {
            s.target_train = 40;
            s.target_test = 10;
            s.surrogate_train = 10;
            s.surrogate_test = 10;
            s.mia_members = 10;
            s.mia_nonmembers = 10;
        }
        config
    }

    #[test]
    fn save_load_round_trips_features_exactly() {
        let ds = synth_scenario(&small_config(), 19).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let loaded = Dataset::load(dir.path()).unwrap();

        assert_eq!(loaded.observations.len(), ds.observations.len());
        assert_eq!(loaded.splits, ds.splits);
        assert_eq!(loaded.devices, ds.devices);
        assert_eq!(loaded.links, ds.links);
        for (a, b) in ds.observations.iter().zip(&loaded.observations) {
            assert_eq!(a.provider_features, b.provider_features);
            assert_eq!(a.adversary_features, b.adversary_features);
            assert_eq!(a.class_label, b.class_label);
            assert_eq!(a.membership, b.membership);
            assert_eq!(a.device_id, b.device_id);
            assert!(b.bits.is_empty());
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        synth_scenario(&small_config(), 23).unwrap().save(dir_a.path()).unwrap();
        synth_scenario(&small_config(), 23).unwrap().save(dir_b.path()).unwrap();
        let csv_a = std::fs::read(dir_a.path().join(DATASET_CSV)).unwrap();
        let csv_b = std::fs::read(dir_b.path().join(DATASET_CSV)).unwrap();
        assert_eq!(csv_a, csv_b);
        let meta_a = std::fs::read(dir_a.path().join(DATASET_META)).unwrap();
        let meta_b = std::fs::read(dir_b.path().join(DATASET_META)).unwrap();
        assert_eq!(meta_a, meta_b);
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Dataset::load(dir.path()),
            Err(Error::MissingArtifact(_))
        ));
    }
}
