//! Attacker behaviors and the false-accept / false-reject metrics.
//!
//! Adversaries see only what goes over the air. During ongoing access an
//! active adversary takes over the claimed device's slots; when its switch is
//! off it stays silent and the legitimate device transmits. Every slot
//! consumes the same random draws whether or not the adversary is active, so
//! switching an adversary off leaves the rest of the simulation untouched.

use serde::{Deserialize, Serialize};

use crate::channel::AttributeVector;
use crate::error::{ConfigError, MetricsError};
use crate::protocol::Outcome;
use crate::rng::RngStream;

/// Forgery noise added to replayed enrollment means.
pub const FORGERY_RSSI_SIGMA_DB: f64 = 0.5;
pub const FORGERY_CFO_SIGMA_HZ: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    /// Passive listener that later answers the verification challenge with
    /// bits quantized from its own measurements.
    Eavesdropper,
    /// Presents the victim's allowlisted IP and transmits from its own radio.
    IpSpoofImpersonator,
    /// Transmits with the victim's enrolled mean attributes plus noise.
    AttributeForger,
    /// Re-emits a captured slot transmission.
    Replayer,
}

impl AdversaryKind {
    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::Eavesdropper => "eavesdropper",
            AdversaryKind::IpSpoofImpersonator => "ip_spoof_impersonator",
            AdversaryKind::AttributeForger => "attribute_forger",
            AdversaryKind::Replayer => "replayer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchPoint {
    pub start_slot: u64,
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    /// Per-slot probability that attacking behavior is visible.
    #[serde(default = "default_attack_probability")]
    pub attack_probability: f64,
    /// Eavesdropper's mixing weight against the shared channel.
    #[serde(default)]
    pub rho_eve: f64,
    /// On/off switch; the adversary is off before the first entry.
    #[serde(default = "always_on")]
    pub switch_schedule: Vec<SwitchPoint>,
}

fn default_attack_probability() -> f64 {
    0.5
}

fn always_on() -> Vec<SwitchPoint> {
    vec![SwitchPoint {
        start_slot: 0,
        on: true,
    }]
}

impl AdversaryConfig {
    pub fn new(kind: AdversaryKind) -> Self {
        Self {
            kind,
            attack_probability: default_attack_probability(),
            rho_eve: 0.0,
            switch_schedule: always_on(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.attack_probability) {
            return Err(ConfigError::new("attack_probability", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.rho_eve) {
            return Err(ConfigError::new("rho_eve", "must lie in [0, 1)"));
        }
        if self
            .switch_schedule
            .windows(2)
            .any(|w| w[0].start_slot >= w[1].start_slot)
        {
            return Err(ConfigError::new(
                "switch_schedule",
                "start slots must be strictly ascending",
            ));
        }
        Ok(())
    }

    pub fn is_on(&self, slot: u64) -> bool {
        self.switch_schedule
            .iter()
            .take_while(|p| p.start_slot <= slot)
            .last()
            .is_some_and(|p| p.on)
    }

    /// Whether the switch is on for any slot below `n_slots`.
    pub fn ever_on(&self, n_slots: u64) -> bool {
        (0..n_slots).any(|s| self.is_on(s))
    }
}

/// A slot transmission as the gateway receives it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub channel: u32,
    pub round: u64,
    /// Attributes the gateway measures on this transmission.
    pub measured: AttributeVector,
    /// Attacking behavior visible in this slot.
    pub attacked: bool,
}

/// What an adversary can see or reuse in one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotView {
    pub slot: u64,
    pub round: u64,
    pub n_channels: u32,
    /// The gateway's measurement of a transmission from the adversary's radio.
    pub own_measurement: AttributeVector,
    /// Enrollment means of the victim, learned by long-term observation.
    pub victim_mean_rssi: f64,
    pub victim_mean_cfo: f64,
}

#[derive(Debug, Clone)]
pub struct Adversary {
    pub config: AdversaryConfig,
    captured: Option<Transmission>,
    overheard: usize,
}

impl Adversary {
    pub fn new(config: AdversaryConfig) -> Self {
        Self {
            config,
            captured: None,
            overheard: 0,
        }
    }

    pub fn kind(&self) -> AdversaryKind {
        self.config.kind
    }

    /// Number of legitimate transmissions overheard so far.
    pub fn overheard(&self) -> usize {
        self.overheard
    }

    /// Records a legitimate transmission sent in the clear.
    pub fn observe(&mut self, tx: &Transmission) {
        self.overheard += 1;
        if self.config.kind == AdversaryKind::Replayer {
            self.captured = Some(*tx);
        }
    }

    /// The adversary's transmission for this slot, or `None` to stay silent.
    pub fn act(&mut self, view: &SlotView, rng: &mut RngStream) -> Option<Transmission> {
        let u = rng.uniform();
        let guess = rng.below(u64::from(view.n_channels.max(1))) as u32;
        let noise_rssi = rng.normal();
        let noise_cfo = rng.normal();

        if !self.config.is_on(view.slot) {
            return None;
        }
        let attacked = u < self.config.attack_probability;
        match self.config.kind {
            AdversaryKind::Eavesdropper => None,
            AdversaryKind::IpSpoofImpersonator => Some(Transmission {
                channel: guess,
                round: view.round,
                measured: view.own_measurement,
                attacked,
            }),
            AdversaryKind::AttributeForger => Some(Transmission {
                channel: guess,
                round: view.round,
                measured: AttributeVector {
                    rssi: view.victim_mean_rssi + FORGERY_RSSI_SIGMA_DB * noise_rssi,
                    cfo: view.victim_mean_cfo + FORGERY_CFO_SIGMA_HZ * noise_cfo,
                    round_index: view.round,
                },
                attacked,
            }),
            AdversaryKind::Replayer => self.captured.map(|old| Transmission {
                measured: view.own_measurement,
                attacked,
                ..old
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Legitimate,
    Adversarial,
}

/// Final state of one session, as used by the error-rate metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledOutcome {
    pub population: Population,
    pub outcome: Outcome,
    pub ever_terminated: bool,
}

fn count(results: &[LabeledOutcome], pop: Population) -> usize {
    results.iter().filter(|r| r.population == pop).count()
}

/// Adversarial sessions that ended authenticated and were never terminated.
pub fn false_accept_rate(results: &[LabeledOutcome]) -> Result<f64, MetricsError> {
    let n = count(results, Population::Adversarial);
    if n == 0 {
        return Err(MetricsError::EmptyPopulation("adversarial"));
    }
    let accepted = results
        .iter()
        .filter(|r| {
            r.population == Population::Adversarial
                && r.outcome.is_authenticated()
                && !r.ever_terminated
        })
        .count();
    Ok(accepted as f64 / n as f64)
}

/// Legitimate sessions that ended rejected or terminated.
pub fn false_reject_rate(results: &[LabeledOutcome]) -> Result<f64, MetricsError> {
    let n = count(results, Population::Legitimate);
    if n == 0 {
        return Err(MetricsError::EmptyPopulation("legitimate"));
    }
    let rejected = results
        .iter()
        .filter(|r| {
            r.population == Population::Legitimate
                && (!r.outcome.is_authenticated() || r.ever_terminated)
        })
        .count();
    Ok(rejected as f64 / n as f64)
}

pub fn far_frr(results: &[LabeledOutcome]) -> Result<(f64, f64), MetricsError> {
    Ok((false_accept_rate(results)?, false_reject_rate(results)?))
}
