//! Stored challenge-response baseline and the fleet cost comparison.

use serde::{Deserialize, Serialize};

use super::{
    CostModel, Engine, MessageBody, Outcome, RejectReason, Responder, Session, SessionTranscript,
};
use crate::channel::ChannelConfig;
use crate::error::{ConfigError, ProtocolError, SvmError};
use crate::prbs::sha256;
use crate::rng::RngStream;
use crate::trust::AuthLevel;

const PUF_DOMAIN: &[u8] = b"iomt-authsim/puf/v1";
pub const RESPONSE_BITS: u32 = 256;
const GATEWAY: &str = "gateway";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PufParams {
    /// Enrolled challenge-response pairs per device.
    pub crp_table_size: usize,
    /// Response bits flipped by measurement noise.
    pub noise_bits: u32,
    /// Largest accepted Hamming distance.
    pub threshold_bits: u32,
}

impl Default for PufParams {
    fn default() -> Self {
        Self {
            crp_table_size: 4096,
            noise_bits: 8,
            threshold_bits: RESPONSE_BITS / 10,
        }
    }
}

impl PufParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.noise_bits > RESPONSE_BITS {
            return Err(ConfigError::new(
                "noise_bits",
                format!("cannot exceed {RESPONSE_BITS}"),
            ));
        }
        if self.threshold_bits > RESPONSE_BITS {
            return Err(ConfigError::new(
                "threshold_bits",
                format!("cannot exceed {RESPONSE_BITS}"),
            ));
        }
        Ok(())
    }
}

fn puf_response(secret: &[u8; 32], challenge: &[u8; 16]) -> [u8; 32] {
    let mut buf = Vec::with_capacity(PUF_DOMAIN.len() + 48);
    buf.extend_from_slice(PUF_DOMAIN);
    buf.extend_from_slice(secret);
    buf.extend_from_slice(challenge);
    sha256(&buf)
}

fn table_challenge(secret: &[u8; 32], index: u64) -> [u8; 16] {
    let mut buf = Vec::with_capacity(PUF_DOMAIN.len() + 41);
    buf.extend_from_slice(PUF_DOMAIN);
    buf.push(b'c');
    buf.extend_from_slice(secret);
    buf.extend_from_slice(&index.to_be_bytes());
    let d = sha256(&buf);
    d[..16].try_into().expect("16-byte prefix")
}

/// One challenge-response authentication against a gateway that stores
/// `crp_table_size` pairs for each of `n_devices` devices.
pub fn run_puf_baseline(
    device_id: &str,
    n_devices: usize,
    params: &PufParams,
    cost: &CostModel,
    rng: &RngStream,
) -> Result<SessionTranscript, ProtocolError> {
    if params.crp_table_size == 0 {
        return Err(ProtocolError::ChallengeExhausted);
    }
    let started = std::time::Instant::now();
    let mut rng = rng.child("puf");
    let secret: [u8; 32] = rng.bytes();
    let mut t = SessionTranscript::new(device_id);
    t.attempts = 1;

    let index = rng.below(params.crp_table_size as u64);
    let challenge = table_challenge(&secret, index);
    let expected = puf_response(&secret, &challenge);
    t.compute(cost.puf_crp_lookup_per_entry * (n_devices.max(1) * params.crp_table_size) as u64);
    t.send(
        GATEWAY,
        device_id,
        cost.message,
        MessageBody::PufChallenge { challenge },
    );

    let mut response = puf_response(&secret, &challenge);
    t.compute(cost.hash(PUF_DOMAIN.len() + 48));
    let mut positions: Vec<u32> = (0..RESPONSE_BITS).collect();
    for i in 0..params.noise_bits as usize {
        let j = i + rng.below((positions.len() - i) as u64) as usize;
        positions.swap(i, j);
        let bit = positions[i];
        response[(bit / 8) as usize] ^= 0x80 >> (bit % 8);
    }
    t.send(
        device_id,
        GATEWAY,
        cost.message,
        MessageBody::PufResponse { response },
    );

    let distance: u32 = expected
        .iter()
        .zip(&response)
        .map(|(a, b)| (a ^ b).count_ones())
        .sum();
    if distance <= params.threshold_bits {
        // The baseline has a single access tier.
        let level = AuthLevel(1);
        t.send(
            GATEWAY,
            device_id,
            cost.message,
            MessageBody::AccessGrant { level },
        );
        t.outcome = Outcome::Authenticated { level };
    } else {
        t.outcome = Outcome::Rejected {
            reason: RejectReason::PufMismatch,
        };
    }
    t.wall_time = started.elapsed().as_secs_f64();
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    PufBaseline,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::PufBaseline => "puf_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetCost {
    pub scheme: Scheme,
    pub n_devices: usize,
    pub total_cost: u64,
    /// `total_cost` converted with the cost model's seconds per unit.
    pub wall_time_s: f64,
}

/// Authenticates every device of fleets of each size once under both
/// schemes and sums the abstract costs.
pub fn fleet_cost(
    template: &Engine,
    channel: &ChannelConfig,
    puf: &PufParams,
    sizes: &[usize],
    rng: &RngStream,
) -> Result<Vec<FleetCost>, SvmError> {
    fleet_cost_inspect(template, channel, puf, sizes, rng, &mut |_| {})
}

/// [`fleet_cost`], handing every proposed-scheme session to `inspect`.
pub fn fleet_cost_inspect(
    template: &Engine,
    channel: &ChannelConfig,
    puf: &PufParams,
    sizes: &[usize],
    rng: &RngStream,
    inspect: &mut dyn FnMut(&Session),
) -> Result<Vec<FleetCost>, SvmError> {
    let cost = &template.cost;
    let mut rows = Vec::with_capacity(sizes.len() * 2);
    for &n in sizes {
        let fleet_rng = rng.child(format!("fleet/{n}"));
        let mut engine = Engine::new(
            template.params.clone(),
            template.policy.clone(),
            cost.clone(),
        );
        let mut proposed = 0u64;
        let mut baseline = 0u64;
        for i in 0..n {
            let id = format!("dev-{i}");
            let dev_rng = fleet_rng.child(&id);
            engine.enroll(&id, channel.clone(), &mut dev_rng.child("enroll"))?;
            let session = engine.run_session(&id, Responder::Device, &dev_rng.child("session"));
            inspect(&session);
            proposed += session.transcript.total_cost;
            baseline += match run_puf_baseline(&id, n, puf, cost, &dev_rng) {
                Ok(t) => t.total_cost,
                Err(_) => 0,
            };
        }
        for (scheme, total) in [
            (Scheme::Proposed, proposed),
            (Scheme::PufBaseline, baseline),
        ] {
            rows.push(FleetCost {
                scheme,
                n_devices: n,
                total_cost: total,
                wall_time_s: total as f64 * cost.seconds_per_unit,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(params: &PufParams) -> SessionTranscript {
        run_puf_baseline(
            "d",
            10,
            params,
            &CostModel::default(),
            &RngStream::new(5, "p"),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_response_is_accepted() {
        let t = run(&PufParams {
            noise_bits: 0,
            ..PufParams::default()
        });
        assert!(t.outcome.is_authenticated());
    }

    #[test]
    fn noise_at_threshold_is_accepted_and_above_rejected() {
        let at = PufParams {
            noise_bits: 25,
            threshold_bits: 25,
            ..PufParams::default()
        };
        assert!(run(&at).outcome.is_authenticated());
        let above = PufParams {
            noise_bits: 26,
            ..at
        };
        assert_eq!(
            run(&above).outcome,
            Outcome::Rejected {
                reason: RejectReason::PufMismatch
            }
        );
    }

    #[test]
    fn empty_table() {
        let p = PufParams {
            crp_table_size: 0,
            ..PufParams::default()
        };
        assert_eq!(
            run_puf_baseline("d", 1, &p, &CostModel::default(), &RngStream::new(1, "p")),
            Err(ProtocolError::ChallengeExhausted)
        );
    }

    #[test]
    fn cost_grows_with_table_size() {
        let costs: Vec<u64> = [1, 16, 256, 4096]
            .iter()
            .map(|&n| {
                run(&PufParams {
                    crp_table_size: n,
                    ..PufParams::default()
                })
                .total_cost
            })
            .collect();
        assert!(costs.windows(2).all(|w| w[0] < w[1]), "{costs:?}");
    }
}
