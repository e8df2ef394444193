use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{CostModel, MessageBody, Outcome, RejectReason, SessionTranscript};
use crate::adversary::{Adversary, SlotView, Transmission};
use crate::channel::{probe_round, probe_sequence, AttributeVector, ChannelConfig};
use crate::error::{ConfigError, ProtocolError, SvmError};
use crate::prbs::{self, LfsrState, PrbsWidth, Seed};
use crate::quantizer::{fit_quantizer, quantize, QuantizerModel};
use crate::rng::RngStream;
use crate::svm::{KernelSpec, SvmParams};
use crate::trust::{
    attribute_set_label, authorize, init_trust, update, AttributeDetector, AttributeKind,
    AttributeSet, Authorization, DetectorBank, PrimaryAttribute, TrustPolicy, TrustState,
};

const GATEWAY: &str = "gateway";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    pub n_rounds: usize,
    /// Guard band on the quantizer decision magnitude.
    pub guard: f64,
    pub prbs_width: PrbsWidth,
    pub n_channels: u32,
    /// PRBS bits consumed per slot.
    pub bits_per_slot: u32,
    pub quantizer_svm: SvmParams,
    pub detector_svm: SvmParams,
    /// One-class outlier fraction of the attribute detectors.
    pub nu: f64,
    pub enrollment_rounds: usize,
    /// Probing attempts per session before rejecting.
    pub max_attempts: u32,
    /// Deliver an explicit session key after verification, as a
    /// key-generation scheme would.
    pub key_transmission: bool,
    pub primary: PrimaryAttribute,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            n_rounds: 256,
            guard: 0.3,
            prbs_width: PrbsWidth::Prbs31,
            n_channels: 8,
            bits_per_slot: 3,
            quantizer_svm: SvmParams {
                kernel: KernelSpec::Rbf { gamma: Some(0.2) },
                c: 0.01,
                ..SvmParams::default()
            },
            detector_svm: SvmParams {
                kernel: KernelSpec::Rbf { gamma: Some(0.05) },
                ..SvmParams::default()
            },
            nu: 0.01,
            enrollment_rounds: 200,
            max_attempts: 2,
            key_transmission: false,
            primary: PrimaryAttribute::KnownIp,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_rounds < crate::quantizer::MIN_CALIBRATION_ROUNDS {
            return Err(ConfigError::new(
                "n_rounds",
                format!(
                    "must be at least {}",
                    crate::quantizer::MIN_CALIBRATION_ROUNDS
                ),
            ));
        }
        if !(self.guard >= 0.0 && self.guard.is_finite()) {
            return Err(ConfigError::new("guard", "must be finite and non-negative"));
        }
        if self.n_channels == 0 {
            return Err(ConfigError::new("n_channels", "must be positive"));
        }
        if self.bits_per_slot == 0
            || self.bits_per_slot > 32
            || (self.bits_per_slot < 32
                && (1u64 << self.bits_per_slot) < u64::from(self.n_channels))
        {
            return Err(ConfigError::new(
                "bits_per_slot",
                "must lie in 1..=32 and address every channel",
            ));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(ConfigError::new("nu", "must lie in (0, 1]"));
        }
        if self.enrollment_rounds < 2 {
            return Err(ConfigError::new("enrollment_rounds", "must be at least 2"));
        }
        if self.max_attempts == 0 {
            return Err(ConfigError::new("max_attempts", "must be at least 1"));
        }
        self.quantizer_svm
            .validate()
            .map_err(|e| ConfigError::new("quantizer_svm", e.to_string()))?;
        self.detector_svm
            .validate()
            .map_err(|e| ConfigError::new("detector_svm", e.to_string()))
    }
}

/// Gateway-side record of an enrolled sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrolledDevice {
    pub id: String,
    pub channel: ChannelConfig,
    pub detectors: Vec<AttributeDetector>,
    pub mean_rssi: f64,
    pub mean_cfo: f64,
}

/// Who answers the gateway's probes and challenge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Responder {
    Device,
    /// An eavesdropper answering with bits from its own measurements.
    Eavesdropper {
        rho_eve: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayPhase {
    Granted,
    Rejected,
    Terminated,
}

/// Endpoint secrets, kept for inspection in tests. Never serialized.
#[derive(Debug, Clone)]
pub struct SessionKeys {
    pub gateway_seed: Seed,
    pub device_seed: Seed,
    pub gateway_prbs: LfsrState,
    pub device_prbs: LfsrState,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub transcript: SessionTranscript,
    pub phase: GatewayPhase,
    pub trust: TrustState,
    /// Present once both endpoints derived a seed in the last attempt.
    pub keys: Option<SessionKeys>,
    /// Fraction of agreeing bits in the last attempt that got that far.
    pub bit_agreement: Option<f64>,
    next_round: u64,
    latent: Option<f64>,
}

impl Session {
    fn rejected(
        mut transcript: SessionTranscript,
        reason: RejectReason,
        trust: TrustState,
    ) -> Self {
        transcript.outcome = Outcome::Rejected { reason };
        Self {
            transcript,
            phase: GatewayPhase::Rejected,
            trust,
            keys: None,
            bit_agreement: None,
            next_round: 0,
            latent: None,
        }
    }

    pub fn next_round(&self) -> u64 {
        self.next_round
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustPoint {
    pub value: f64,
    /// Authorization level, 0 once terminated.
    pub level: u8,
}

impl TrustPoint {
    fn new(state: &TrustState, policy: &TrustPolicy) -> Self {
        let level = match authorize(state, policy) {
            Authorization::Level(l) => l.0,
            Authorization::Terminated => 0,
        };
        Self {
            value: state.value,
            level,
        }
    }
}

/// Trust evolution of one session under one attribute set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetTrajectory {
    pub attribute_set: String,
    pub points: Vec<TrustPoint>,
    /// Zero-based slot in which termination happened.
    pub terminated_at: Option<usize>,
}

/// What the gateway received in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotEvidence {
    pub expected_channel: u32,
    pub channel: u32,
    pub round: u64,
    pub channel_ok: bool,
    pub attacked: bool,
    pub from_adversary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessReport {
    pub trajectories: Vec<SetTrajectory>,
    pub evidence: Vec<SlotEvidence>,
}

impl AccessReport {
    /// Trajectory of the operational (last) attribute set.
    pub fn operational(&self) -> Option<&SetTrajectory> {
        self.trajectories.last()
    }
}

/// Gateway state for one scenario: parameters and enrolled devices.
#[derive(Debug, Clone)]
pub struct Engine {
    pub params: ProtocolParams,
    pub policy: TrustPolicy,
    pub cost: CostModel,
    devices: BTreeMap<String, EnrolledDevice>,
}

impl Engine {
    pub fn new(params: ProtocolParams, policy: TrustPolicy, cost: CostModel) -> Self {
        Self {
            params,
            policy,
            cost,
            devices: BTreeMap::new(),
        }
    }

    pub fn device(&self, id: &str) -> Result<&EnrolledDevice, ProtocolError> {
        self.devices
            .get(id)
            .ok_or_else(|| ProtocolError::NotEnrolled(id.to_string()))
    }

    pub fn device_ids(&self) -> impl Iterator<Item = &str> {
        self.devices.keys().map(String::as_str)
    }

    /// Trains RSSI and CFO detectors on gateway-side enrollment rounds.
    pub fn enroll(
        &mut self,
        id: &str,
        channel: ChannelConfig,
        rng: &mut RngStream,
    ) -> Result<&EnrolledDevice, SvmError> {
        let seq = probe_sequence(&channel, 0, self.params.enrollment_rounds, None, rng);
        let samples = &seq.gateway;
        let detectors = [AttributeKind::Rssi, AttributeKind::Cfo]
            .into_iter()
            .map(|k| {
                AttributeDetector::enroll(k, samples, self.params.nu, &self.params.detector_svm)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rssi: Vec<f64> = samples.iter().map(|s| s.rssi).collect();
        let cfo: Vec<f64> = samples.iter().map(|s| s.cfo).collect();
        let device = EnrolledDevice {
            id: id.to_string(),
            channel,
            detectors,
            mean_rssi: crate::stats::mean(&rssi),
            mean_cfo: crate::stats::mean(&cfo),
        };
        self.devices.insert(id.to_string(), device);
        Ok(&self.devices[id])
    }

    fn eval_cost(&self, model: &QuantizerModel, evaluations: usize) -> u64 {
        (evaluations * model.svm.n_support()) as u64 * self.cost.svm_eval_per_sv
    }

    /// Probing, quantization, seed verification and the initial grant.
    pub fn run_session(&self, device_id: &str, responder: Responder, rng: &RngStream) -> Session {
        let started = Instant::now();
        let p = &self.params;
        let mut t = SessionTranscript::new(device_id);
        let trust = init_trust(p.primary, &self.policy);
        let Ok(dev) = self.device(device_id) else {
            return Session::rejected(t, RejectReason::NotEnrolled, trust);
        };
        let mut channel = dev.channel.clone();
        if let Responder::Eavesdropper { rho_eve } = responder {
            channel.rho_eve = rho_eve;
        }
        let mut channel_rng = rng.child("probe");
        let mut gateway_rng = rng.child("gateway");

        let mut next_round = 0u64;
        let mut latent = None;
        let mut reason = RejectReason::SeedMismatch;
        let mut keys = None;
        let mut agreement = None;
        let mut granted = false;

        for attempt in 1..=p.max_attempts {
            t.attempts = attempt;
            let seq = probe_sequence(&channel, next_round, p.n_rounds, latent, &mut channel_rng);
            let probe = self.cost.message * p.n_rounds as u64;
            t.send(
                GATEWAY,
                device_id,
                probe,
                MessageBody::ProbeRequest {
                    first_round: next_round,
                    rounds: p.n_rounds as u64,
                },
            );
            t.send(
                device_id,
                GATEWAY,
                probe,
                MessageBody::ProbeReply {
                    first_round: next_round,
                    rounds: p.n_rounds as u64,
                },
            );
            next_round += p.n_rounds as u64;
            latent = seq.last_latent;

            t.compute(self.cost.svm_train_per_sample * p.n_rounds as u64);
            let model = match fit_quantizer(&seq.gateway, p.guard, &p.quantizer_svm) {
                Ok(m) => m,
                Err(e) => {
                    reason = RejectReason::QuantizerFailure(e.to_string());
                    continue;
                }
            };
            t.compute(self.eval_cost(&model, p.n_rounds));
            let gateway_bits = quantize(&model, &seq.gateway);
            t.send(
                GATEWAY,
                device_id,
                self.cost.message,
                MessageBody::ModelTransfer {
                    model: model.clone(),
                },
            );

            let responder_samples: &[AttributeVector] = match responder {
                Responder::Device => &seq.device,
                Responder::Eavesdropper { .. } => &seq.eve,
            };
            t.compute(self.eval_cost(&model, model.retained_rounds.len()));
            let device_bits = quantize(&model, responder_samples);
            let (gateway_bits, device_bits) = match (gateway_bits, device_bits) {
                (Ok(g), Ok(d)) => {
                    agreement = crate::quantizer::bit_agreement(&g, &d).ok();
                    (g, d)
                }
                (Err(e), _) | (_, Err(e)) => {
                    reason = RejectReason::QuantizerFailure(e.to_string());
                    continue;
                }
            };

            let seed_bytes = gateway_bits.len().div_ceil(8) + 8 + 20;
            t.compute(2 * self.cost.hash(seed_bytes));
            let (gateway_seed, device_seed) = match (
                prbs::derive_seed(&gateway_bits),
                prbs::derive_seed(&device_bits),
            ) {
                (Ok(g), Ok(d)) => (g, d),
                _ => {
                    reason = RejectReason::InsufficientEntropy;
                    continue;
                }
            };

            let nonce: [u8; 16] = gateway_rng.bytes();
            t.send(
                GATEWAY,
                device_id,
                self.cost.message,
                MessageBody::VerifyChallenge { nonce },
            );
            let tag = prbs::make_tag(&device_seed, nonce);
            t.compute(self.cost.hash(64));
            t.send(
                device_id,
                GATEWAY,
                self.cost.message,
                MessageBody::VerifyTag { tag: tag.clone() },
            );
            t.compute(self.cost.hash(64));
            let ok = prbs::check_tag(&gateway_seed, &tag);

            t.compute(2 * self.cost.hash(32));
            keys = Some(SessionKeys {
                gateway_prbs: prbs::lfsr_init(&gateway_seed, p.prbs_width),
                device_prbs: prbs::lfsr_init(&device_seed, p.prbs_width),
                gateway_seed,
                device_seed,
            });
            if ok {
                granted = true;
                break;
            }
            reason = RejectReason::SeedMismatch;
        }

        let mut session = if granted {
            if p.key_transmission {
                let key: [u8; 32] = gateway_rng.bytes();
                t.send(
                    GATEWAY,
                    device_id,
                    self.cost.message,
                    MessageBody::KeyDelivery { key },
                );
            }
            let level = match authorize(&trust, &self.policy) {
                Authorization::Level(l) => l,
                Authorization::Terminated => crate::trust::AuthLevel(1),
            };
            t.send(
                GATEWAY,
                device_id,
                self.cost.message,
                MessageBody::AccessGrant { level },
            );
            t.outcome = Outcome::Authenticated { level };
            Session {
                transcript: t,
                phase: GatewayPhase::Granted,
                trust,
                keys,
                bit_agreement: agreement,
                next_round,
                latent,
            }
        } else {
            let mut s = Session::rejected(t, reason, trust);
            s.keys = keys;
            s.bit_agreement = agreement;
            s
        };
        session.next_round = next_round;
        session.latent = latent;
        session.transcript.wall_time = started.elapsed().as_secs_f64();
        session
    }

    /// Runs `n_slots` of PRBS-scheduled access after authentication.
    ///
    /// Every attribute set sees the same slot evidence; the last set is the
    /// operational one that drives the transcript. With an adversary, the
    /// adversary transmits in place of the device whenever it chooses to.
    pub fn ongoing_access(
        &self,
        session: &mut Session,
        n_slots: usize,
        sets: &[AttributeSet],
        mut adversary: Option<&mut Adversary>,
        rng: &RngStream,
    ) -> Result<AccessReport, ProtocolError> {
        if session.phase != GatewayPhase::Granted {
            return Err(ProtocolError::NotAuthenticated);
        }
        let device_id = session.transcript.device_id.clone();
        let dev = self.device(&device_id)?;
        let keys = session
            .keys
            .as_mut()
            .ok_or(ProtocolError::NotAuthenticated)?;
        let p = &self.params;
        let full: AttributeSet = [
            AttributeKind::Rssi,
            AttributeKind::Cfo,
            AttributeKind::Attack,
        ]
        .into_iter()
        .collect();
        let sets: Vec<AttributeSet> = if sets.is_empty() {
            vec![full]
        } else {
            sets.to_vec()
        };
        let op = sets.len() - 1;
        let banks: Vec<DetectorBank> = sets
            .iter()
            .map(|s| DetectorBank::select(s, &dev.detectors))
            .collect();
        let mut states = vec![session.trust; sets.len()];
        let mut trajectories: Vec<SetTrajectory> = sets
            .iter()
            .map(|s| SetTrajectory {
                attribute_set: attribute_set_label(s),
                points: Vec::with_capacity(n_slots),
                terminated_at: None,
            })
            .collect();
        let mut evidence = Vec::with_capacity(n_slots);
        let mut level = match authorize(&session.trust, &self.policy) {
            Authorization::Level(l) => l,
            Authorization::Terminated => crate::trust::AuthLevel(0),
        };

        let mut channel = dev.channel.clone();
        if let Some(a) = adversary.as_deref() {
            channel.rho_eve = a.config.rho_eve;
        }
        let mut channel_rng = rng.child("slots/channel");
        let mut adversary_rng = rng.child("slots/adversary");
        let t = &mut session.transcript;

        for slot in 0..n_slots {
            let round = session.next_round;
            let probe = probe_round(&channel, round, session.latent, &mut channel_rng);
            session.latent = Some(probe.latent);
            session.next_round += 1;

            let lfsr_cost = u64::from(p.bits_per_slot) * self.cost.lfsr_per_bit;
            let expected = prbs::slot(&mut keys.gateway_prbs, p.n_channels, p.bits_per_slot)
                .expect("validated slot parameters");
            let device_channel = prbs::slot(&mut keys.device_prbs, p.n_channels, p.bits_per_slot)
                .expect("validated slot parameters");
            t.compute(2 * lfsr_cost);

            let legit = Transmission {
                channel: device_channel,
                round,
                measured: probe.gateway,
                attacked: false,
            };
            let injected = adversary.as_deref_mut().and_then(|a| {
                let view = SlotView {
                    slot: slot as u64,
                    round,
                    n_channels: p.n_channels,
                    own_measurement: probe.eve,
                    victim_mean_rssi: dev.mean_rssi,
                    victim_mean_cfo: dev.mean_cfo,
                };
                let tx = a.act(&view, &mut adversary_rng);
                if tx.is_none() {
                    a.observe(&legit);
                }
                tx
            });
            let tx = injected.unwrap_or(legit);
            let channel_ok = tx.channel == expected && tx.round == round;
            evidence.push(SlotEvidence {
                expected_channel: expected,
                channel: tx.channel,
                round: tx.round,
                channel_ok,
                attacked: tx.attacked,
                from_adversary: injected.is_some(),
            });

            if !states[op].terminated {
                t.send(
                    &device_id,
                    GATEWAY,
                    self.cost.message,
                    MessageBody::SlotTransmission {
                        channel: tx.channel,
                        round: tx.round,
                    },
                );
            }

            for (k, bank) in banks.iter().enumerate() {
                if !states[k].terminated {
                    let obs = if channel_ok {
                        let n_sv: usize = dev
                            .detectors
                            .iter()
                            .filter(|d| bank.set.contains(&d.kind))
                            .map(|d| d.model.boundary.n_support())
                            .sum();
                        if k == op {
                            t.compute(n_sv as u64 * self.cost.svm_eval_per_sv);
                        }
                        bank.observe(&tx.measured, tx.attacked)
                            .expect("detectors match measurement dimension")
                    } else {
                        crate::trust::Observation::Outlier
                    };
                    states[k] =
                        update(&states[k], obs, &self.policy).expect("terminated sets are skipped");
                    if states[k].terminated {
                        trajectories[k].terminated_at = Some(slot);
                    }
                    if k == op {
                        match authorize(&states[k], &self.policy) {
                            Authorization::Terminated => {
                                t.send(
                                    GATEWAY,
                                    &device_id,
                                    self.cost.message,
                                    MessageBody::Terminate,
                                );
                                t.outcome = Outcome::Terminated;
                                session.phase = GatewayPhase::Terminated;
                            }
                            Authorization::Level(l) if l != level => {
                                level = l;
                                t.send(
                                    GATEWAY,
                                    &device_id,
                                    self.cost.message,
                                    MessageBody::AccessGrant { level: l },
                                );
                                t.outcome = Outcome::Authenticated { level: l };
                            }
                            Authorization::Level(_) => {}
                        }
                    }
                }
                trajectories[k]
                    .points
                    .push(TrustPoint::new(&states[k], &self.policy));
            }
        }

        session.trust = states[op];
        Ok(AccessReport {
            trajectories,
            evidence,
        })
    }
}
