//! Radio-link simulation: devices, channels, and per-transmission features.
//!
//! Every transmission is observed twice, once through the service provider's
//! channel and once through the adversary's, so the two parties never see the
//! same feature vector for the same signal. Features are per-bit phase shifts
//! followed by per-bit received powers; all randomness flows through explicit
//! generator streams.

mod csv_io;
mod scenario;

pub use scenario::{
    splits, synth_scenario, ScenarioConfig, Setting1Config, Setting2Config, SettingConfig,
};

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut r = x.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        r -= TWO_PI;
    }
    if r < 0.0 {
        r = 0.0;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modulation {
    Bpsk,
    Qpsk,
}

impl Modulation {
    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
        }
    }
}

/// Which party a sample is transmitted toward in the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Authorized,
    Other,
    NonmemberGenerator,
}

/// Which receiver observed a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observer {
    Provider,
    Adversary,
}

/// Static radio parameters of one transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: usize,
    /// Hardware-specific phase shift, radians in `[0, 2π)`.
    pub phase_shift: f64,
    /// Linear transmit power, > 0.
    pub transmit_power: f64,
    pub modulation: Modulation,
    pub role: Role,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..TWO_PI).contains(&self.phase_shift) {
            return Err(Error::InvalidInput(format!(
                "device {} phase_shift {} outside [0, 2pi)",
                self.device_id, self.phase_shift
            )));
        }
        if self.transmit_power <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "device {} transmit_power must be > 0",
                self.device_id
            )));
        }
        Ok(())
    }

    /// The same radio transmitting with a different modulation for one session.
    pub fn with_modulation(&self, modulation: Modulation) -> DeviceProfile {
        DeviceProfile {
            modulation,
            ..self.clone()
        }
    }
}

/// Static propagation parameters of one transmitter-receiver link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLink {
    pub tx_device_id: usize,
    pub rx: Observer,
    /// Linear channel gain, > 0.
    pub gain: f64,
    /// Channel phase offset, radians in `[0, 2π)`.
    pub phase_offset: f64,
}

impl ChannelLink {
    pub fn validate(&self) -> Result<()> {
        if self.gain <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "link {}->{:?} gain must be > 0",
                self.tx_device_id, self.rx
            )));
        }
        if !(0.0..TWO_PI).contains(&self.phase_offset) {
            return Err(Error::InvalidInput(format!(
                "link {}->{:?} phase_offset outside [0, 2pi)",
                self.tx_device_id, self.rx
            )));
        }
        Ok(())
    }
}

/// Bounded measurement noise, uniform on `[-bound, +bound]` per feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub phase_bound: f64,
    pub power_bound: f64,
}

impl NoiseSpec {
    pub fn new(phase_bound: f64, power_bound: f64) -> Result<NoiseSpec> {
        let spec = NoiseSpec {
            phase_bound,
            power_bound,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phase_bound < 0.0 || self.power_bound < 0.0 {
            return Err(Error::InvalidInput("noise bounds must be >= 0".into()));
        }
        Ok(())
    }

    pub fn zero() -> NoiseSpec {
        NoiseSpec {
            phase_bound: 0.0,
            power_bound: 0.0,
        }
    }

    fn draw(bound: f64, rng: &mut impl Rng) -> f64 {
        if bound == 0.0 {
            0.0
        } else {
            rng.gen_range(-bound..=bound)
        }
    }
}

/// Per-bit phases and powers of one received transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    phases: Vec<f64>,
    powers: Vec<f64>,
}

impl FeatureVector {
    /// Wraps all phases into `[0, 2π)`; phase and power counts must match.
    pub fn new(phases: Vec<f64>, powers: Vec<f64>) -> Result<FeatureVector> {
        if phases.len() != powers.len() {
            return Err(Error::InvalidInput(format!(
                "{} phases vs {} powers",
                phases.len(),
                powers.len()
            )));
        }
        Ok(FeatureVector {
            phases: phases.into_iter().map(wrap_phase).collect(),
            powers,
        })
    }

    /// Number of bit positions (half the flattened feature count).
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Phases followed by powers, the classifier input layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.phases.len());
        out.extend_from_slice(&self.phases);
        out.extend_from_slice(&self.powers);
        out
    }

    pub fn from_flat(values: &[f64]) -> Result<FeatureVector> {
        if values.len() % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "flattened feature vector has odd length {}",
                values.len()
            )));
        }
        let n = values.len() / 2;
        FeatureVector::new(values[..n].to_vec(), values[n..].to_vec())
    }
}

/// Whether a sample sits inside the target classifier's training data and the
/// role it plays in the membership-inference protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Member,
    Nonmember,
    Unused,
}

/// One transmission observed through both channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedObservation {
    pub observation_id: usize,
    /// Transmitted bits; empty when the observation was loaded from CSV,
    /// which does not persist them.
    pub bits: Vec<u8>,
    pub provider_features: FeatureVector,
    pub adversary_features: FeatureVector,
    pub class_label: usize,
    pub membership: Membership,
    pub device_id: usize,
}

impl PairedObservation {
    pub fn features(&self, observer: Observer) -> &FeatureVector {
        match observer {
            Observer::Provider => &self.provider_features,
            Observer::Adversary => &self.adversary_features,
        }
    }
}

/// A full synthesized scenario: radio population, channels, observations, and
/// the named sample partitions the experiments consume. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    /// Informational per-role SNR targets in dB.
    pub snr_map: BTreeMap<String, f64>,
    pub devices: Vec<DeviceProfile>,
    pub links: Vec<ChannelLink>,
    pub observations: Vec<PairedObservation>,
    /// Named partitions, each a list of observation ids.
    pub splits: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Result<&[usize]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("dataset has no split named {name:?}")))
    }

    pub fn observation(&self, id: usize) -> Result<&PairedObservation> {
        self.observations
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("observation id {id} out of range")))
    }

    /// `(flattened features, class_label)` pairs for a split, as one observer sees them.
    pub fn labeled_features(
        &self,
        split: &str,
        observer: Observer,
    ) -> Result<Vec<(Vec<f64>, usize)>> {
        self.split(split)?
            .iter()
            .map(|&id| {
                let obs = self.observation(id)?;
                Ok((obs.features(observer).flatten(), obs.class_label))
            })
            .collect()
    }

    pub fn link(&self, device_id: usize, rx: Observer) -> Result<&ChannelLink> {
        self.links
            .iter()
            .find(|l| l.tx_device_id == device_id && l.rx == rx)
            .ok_or_else(|| Error::InvalidInput(format!("no link {device_id}->{rx:?}")))
    }
}

/// Maps bits to constellation phases, one phase per symbol.
///
/// BPSK: `0 -> 0`, `1 -> π`. QPSK (Gray map): `00 -> π/4`, `01 -> 3π/4`,
/// `11 -> 5π/4`, `10 -> 7π/4`.
pub fn modulate(bits: &[u8], modulation: Modulation) -> Result<Vec<f64>> {
    if bits.is_empty() {
        return Err(Error::InvalidInput("empty bit array".into()));
    }
    if let Some(&b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidInput(format!("bit value {b} is not 0 or 1")));
    }
    match modulation {
        Modulation::Bpsk => Ok(bits.iter().map(|&b| if b == 0 { 0.0 } else { PI }).collect()),
        Modulation::Qpsk => {
            if bits.len() % 2 != 0 {
                return Err(Error::InvalidInput(format!(
                    "QPSK requires an even number of bits, got {}",
                    bits.len()
                )));
            }
            Ok(bits
                .chunks_exact(2)
                .map(|pair| match (pair[0], pair[1]) {
                    (0, 0) => PI / 4.0,
                    (0, 1) => 3.0 * PI / 4.0,
                    (1, 1) => 5.0 * PI / 4.0,
                    _ => 7.0 * PI / 4.0,
                })
                .collect())
        }
    }
}

/// Received features for one transmission over one link.
///
/// Each symbol's phase and power are emitted once per bit (so twice per QPSK
/// symbol), with noise drawn independently per feature: first all phase noise
/// draws, then all power noise draws.
pub fn observe(
    device: &DeviceProfile,
    link: &ChannelLink,
    bits: &[u8],
    noise: &NoiseSpec,
    rng: &mut impl Rng,
) -> Result<FeatureVector> {
    if link.tx_device_id != device.device_id {
        return Err(Error::InvalidInput(format!(
            "link transmitter {} does not match device {}",
            link.tx_device_id, device.device_id
        )));
    }
    device.validate()?;
    link.validate()?;
    noise.validate()?;
    let symbols = modulate(bits, device.modulation)?;
    let per_symbol = device.modulation.bits_per_symbol();
    let n = bits.len();

    let mut phases = Vec::with_capacity(n);
    for k in 0..n {
        let base = symbols[k / per_symbol] + device.phase_shift + link.phase_offset;
        phases.push(wrap_phase(base + NoiseSpec::draw(noise.phase_bound, rng)));
    }
    let received = link.gain * device.transmit_power;
    let mut powers = Vec::with_capacity(n);
    for _ in 0..n {
        powers.push(received + NoiseSpec::draw(noise.power_bound, rng));
    }
    FeatureVector::new(phases, powers)
}

/// Received power implied by an SNR target over bounded noise:
/// `P_rx = power_bound * 10^(snr_db / 10)`.
pub fn snr_to_received_power(snr_db: f64, noise: &NoiseSpec) -> f64 {
    debug_assert!(noise.power_bound > 0.0);
    noise.power_bound * 10f64.powf(snr_db / 10.0)
}

/// Per-feature `max - min` over a pool of feature vectors, in flattened order.
pub fn feature_ranges<'a>(pool: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Vec<f64>> {
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    let mut seen = false;
    for fv in pool {
        let flat = fv.flatten();
        if !seen {
            lo = flat.clone();
            hi = flat;
            seen = true;
            continue;
        }
        if flat.len() != lo.len() {
            return Err(Error::DimMismatch {
                expected: lo.len(),
                actual: flat.len(),
            });
        }
        for (k, v) in flat.iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    if !seen {
        return Err(Error::EmptySampleSet("feature range pool".into()));
    }
    Ok(lo.iter().zip(&hi).map(|(l, h)| h - l).collect())
}

/// Draws one perturbation in per-feature-level space: a uniform random
/// direction on the unit sphere scaled to `total_level`.
fn draw_levels(dim: usize, total_level: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        // Box-Muller pairs give an isotropic Gaussian, hence a uniform direction.
        let mut u = Vec::with_capacity(dim);
        while u.len() < dim {
            let a: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let b: f64 = rng.gen_range(0.0..TWO_PI);
            let r = (-2.0 * a.ln()).sqrt();
            u.push(r * b.cos());
            if u.len() < dim {
                u.push(r * b.sin());
            }
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return u.into_iter().map(|v| v * total_level / norm).collect();
        }
    }
}

fn perturb_one(
    original: &FeatureVector,
    total_level: f64,
    feature_ranges: &[f64],
    rng: &mut impl Rng,
) -> Result<(FeatureVector, Vec<f64>)> {
    let n = original.len();
    let levels = draw_levels(2 * n, total_level, rng);
    let mut phases = Vec::with_capacity(n);
    let mut powers = Vec::with_capacity(n);
    for k in 0..n {
        phases.push(wrap_phase(original.phases[k] + levels[k] * feature_ranges[k]));
    }
    for k in 0..n {
        powers.push(original.powers[k] + levels[n + k] * feature_ranges[n + k]);
    }
    Ok((FeatureVector { phases, powers }, levels))
}

/// `count` noisy variants of `original` whose per-feature level vector
/// (`|change_k| / range_k`) has Euclidean norm exactly `total_level`.
pub fn perturb_features(
    original: &FeatureVector,
    total_level: f64,
    feature_ranges: &[f64],
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<FeatureVector>> {
    if !(total_level > 0.0) || !total_level.is_finite() {
        return Err(Error::InvalidInput(format!(
            "total_level must be in (0, 1], got {total_level}; level 0 means the original sample"
        )));
    }
    if feature_ranges.len() != 2 * original.len() {
        return Err(Error::DimMismatch {
            expected: 2 * original.len(),
            actual: feature_ranges.len(),
        });
    }
    if let Some(k) = feature_ranges.iter().position(|&r| r <= 0.0) {
        return Err(Error::DegenerateRange(k));
    }
    (0..count)
        .map(|_| perturb_one(original, total_level, feature_ranges, rng).map(|(fv, _)| fv))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn qpsk_gray_map() {
        assert_eq!(modulate(&[0, 0], Modulation::Qpsk).unwrap(), vec![FRAC_PI_4]);
        assert_eq!(
            modulate(&[1, 1], Modulation::Qpsk).unwrap(),
            vec![5.0 * PI / 4.0]
        );
        assert_eq!(
            modulate(&[0, 1], Modulation::Qpsk).unwrap(),
            vec![3.0 * PI / 4.0]
        );
        assert_eq!(
            modulate(&[1, 0], Modulation::Qpsk).unwrap(),
            vec![7.0 * PI / 4.0]
        );
    }

    #[test]
    fn bpsk_is_antipodal() {
        assert_eq!(modulate(&[0], Modulation::Bpsk).unwrap(), vec![0.0]);
        assert_eq!(modulate(&[1], Modulation::Bpsk).unwrap(), vec![PI]);
    }

    #[test]
    fn qpsk_rejects_odd_bit_count() {
        assert!(matches!(
            modulate(&[0, 1, 1], Modulation::Qpsk),
            Err(Error::InvalidInput(_))
        ));
        assert!(modulate(&[], Modulation::Bpsk).is_err());
        assert!(modulate(&[2], Modulation::Bpsk).is_err());
    }

    fn test_device() -> DeviceProfile {
        DeviceProfile {
            device_id: 0,
            phase_shift: 0.3,
            transmit_power: 1.0,
            modulation: Modulation::Qpsk,
            role: Role::Authorized,
        }
    }

    fn test_link() -> ChannelLink {
        ChannelLink {
            tx_device_id: 0,
            rx: Observer::Provider,
            gain: 0.9,
            phase_offset: 0.1,
        }
    }

    #[test]
    fn observe_zero_noise_matches_formula() {
        let mut rng = stream(1, "t");
        let fv = observe(&test_device(), &test_link(), &[0, 0], &NoiseSpec::zero(), &mut rng)
            .unwrap();
        let expected = FRAC_PI_4 + 0.3 + 0.1;
        for &p in fv.phases() {
            assert!((p - expected).abs() < 1e-12);
        }
        assert_eq!(fv.phases().len(), 2);
        assert_eq!(fv.powers(), &[0.9, 0.9]);
    }

    #[test]
    fn observe_noise_stays_within_bounds() {
        let noise = NoiseSpec::new(0.1, 0.0).unwrap();
        let mut rng = stream(2, "t");
        for _ in 0..200 {
            let fv = observe(&test_device(), &test_link(), &[0, 0], &noise, &mut rng).unwrap();
            for &p in fv.phases() {
                assert!(p >= FRAC_PI_4 + 0.3 && p <= FRAC_PI_4 + 0.5);
            }
        }
    }

    #[test]
    fn observe_mean_power_tracks_snr_target() {
        // Monte-Carlo oracle: mean observed power over many draws approaches
        // gain * transmit_power, which sits within the +-10% link factor of
        // the SNR-implied received power.
        let noise = NoiseSpec::new(0.1, 0.1).unwrap();
        let target = snr_to_received_power(10.0, &noise);
        let mut radio = stream(3, "radio");
        let gain = target * radio.gen_range(0.9..1.1);
        let device = test_device();
        let link = ChannelLink {
            gain,
            ..test_link()
        };
        let mut rng = stream(3, "obs");
        let mut sum = 0.0;
        let mut count = 0usize;
        let bits: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        for _ in 0..10_000 / 16 * 16 {
            let fv = observe(&device, &link, &bits, &noise, &mut rng).unwrap();
            sum += fv.powers().iter().sum::<f64>();
            count += fv.len();
        }
        let mean = sum / count as f64;
        assert!((mean - gain).abs() < 5e-3, "mean {mean} vs gain {gain}");
        assert!((mean - target).abs() <= noise.power_bound + 5e-3);
    }

    #[test]
    fn observe_rejects_mismatched_link() {
        let link = ChannelLink {
            tx_device_id: 7,
            ..test_link()
        };
        let mut rng = stream(0, "t");
        assert!(observe(&test_device(), &link, &[0, 0], &NoiseSpec::zero(), &mut rng).is_err());
    }

    #[test]
    fn snr_power_reference_points() {
        let noise = NoiseSpec::new(0.1, 0.1).unwrap();
        assert!((snr_to_received_power(10.0, &noise) - 1.0).abs() < 1e-12);
        assert!((snr_to_received_power(0.0, &noise) - 0.1).abs() < 1e-12);
        let p3 = snr_to_received_power(3.0, &noise);
        assert!((p3 - 0.1 * 10f64.powf(0.3)).abs() < 1e-12);
        assert!((p3 - 0.1995).abs() < 1e-3);
    }

    #[test]
    fn snr_power_is_strictly_increasing() {
        let noise = NoiseSpec::new(0.1, 0.1).unwrap();
        let mut last = f64::NEG_INFINITY;
        for tenths in 0..=120 {
            let p = snr_to_received_power(tenths as f64 / 10.0, &noise);
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn wrap_phase_stays_in_range() {
        for &x in &[-1e-17, -0.1, 0.0, 1.0, TWO_PI, TWO_PI + 0.5, -7.0, 123.456] {
            let w = wrap_phase(x);
            assert!((0.0..TWO_PI).contains(&w), "wrap({x}) = {w}");
        }
    }

    #[test]
    fn perturb_levels_have_exact_norm() {
        let original = FeatureVector::new(vec![0.5, 1.0, 2.0], vec![0.9, 0.8, 1.1]).unwrap();
        let ranges = vec![6.0, 6.0, 6.0, 1.0, 1.0, 1.0];
        let mut rng = stream(4, "perturb");
        for &level in &[0.1, 0.5, 0.9] {
            for _ in 0..50 {
                let (_, levels) = perturb_one(&original, level, &ranges, &mut rng).unwrap();
                let norm = levels.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - level).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn perturb_rejects_level_zero_and_degenerate_ranges() {
        let original = FeatureVector::new(vec![0.5], vec![0.9]).unwrap();
        let mut rng = stream(5, "perturb");
        assert!(matches!(
            perturb_features(&original, 0.0, &[1.0, 1.0], 3, &mut rng),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            perturb_features(&original, 0.5, &[1.0, 0.0], 3, &mut rng),
            Err(Error::DegenerateRange(1))
        ));
    }

    #[test]
    fn perturb_variants_are_distinct() {
        let original =
            FeatureVector::new(vec![0.5, 1.0, 2.0, 3.0], vec![0.9, 0.8, 1.1, 1.0]).unwrap();
        let ranges = vec![1.0; 8];
        let mut rng = stream(6, "perturb");
        let variants = perturb_features(&original, 0.5, &ranges, 10, &mut rng).unwrap();
        assert_eq!(variants.len(), 10);
        for i in 0..variants.len() {
            for j in (i + 1)..variants.len() {
                assert_ne!(variants[i], variants[j]);
            }
        }
    }

    #[test]
    fn perturbed_phases_are_wrapped() {
        let original = FeatureVector::new(vec![6.0, 0.1], vec![1.0, 1.0]).unwrap();
        let ranges = vec![6.28, 6.28, 2.0, 2.0];
        let mut rng = stream(7, "perturb");
        for fv in perturb_features(&original, 0.9, &ranges, 20, &mut rng).unwrap() {
            for &p in fv.phases() {
                assert!((0.0..TWO_PI).contains(&p));
            }
        }
    }

    #[test]
    fn feature_ranges_cover_pool() {
        let a = FeatureVector::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let b = FeatureVector::new(vec![1.0, 3.0], vec![0.25, 1.5]).unwrap();
        let ranges = feature_ranges([&a, &b]).unwrap();
        assert_eq!(ranges, vec![1.0, 2.0, 0.25, 1.0]);
        assert!(feature_ranges(std::iter::empty()).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let fv = FeatureVector::new(vec![0.1, 0.2], vec![0.9, 1.1]).unwrap();
        let back = FeatureVector::from_flat(&fv.flatten()).unwrap();
        assert_eq!(fv, back);
    }
}
