//! Authentication sessions between a gateway and its sensors.
//!
//! The message vocabulary below is the only thing that crosses the simulated
//! air interface. No variant can hold a [`Seed`](crate::prbs::Seed) or
//! [`BitMaterial`](crate::quantizer::BitMaterial); neither type implements
//! `Serialize`.

mod engine;
mod puf;

use serde::{Deserialize, Serialize};

pub use engine::{
    AccessReport, Engine, EnrolledDevice, GatewayPhase, ProtocolParams, Responder, Session,
    SessionKeys, SetTrajectory, SlotEvidence, TrustPoint,
};
pub use puf::{fleet_cost, fleet_cost_inspect, run_puf_baseline, FleetCost, PufParams, Scheme};

use crate::prbs::VerificationTag;
use crate::quantizer::QuantizerModel;
use crate::trust::AuthLevel;

/// Abstract per-operation costs. Totals are deterministic and stand in for
/// computation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    /// One transmitted protocol message (each probe exchange counts).
    pub message: u64,
    pub svm_train_per_sample: u64,
    /// One kernel term of a decision evaluation.
    pub svm_eval_per_sv: u64,
    /// One 64-byte SHA-256 compression.
    pub hash_per_block: u64,
    pub lfsr_per_bit: u64,
    pub puf_crp_lookup_per_entry: u64,
    /// Conversion used for the modeled `wall_time_s` column.
    pub seconds_per_unit: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            message: 10,
            svm_train_per_sample: 20,
            svm_eval_per_sv: 1,
            hash_per_block: 50,
            lfsr_per_bit: 1,
            puf_crp_lookup_per_entry: 4,
            seconds_per_unit: 1e-6,
        }
    }
}

impl CostModel {
    /// Cost of hashing `bytes` bytes with SHA-256 padding.
    pub fn hash(&self, bytes: usize) -> u64 {
        let blocks = (bytes + 9).div_ceil(64) as u64;
        blocks * self.hash_per_block
    }

    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        if !(self.seconds_per_unit >= 0.0 && self.seconds_per_unit.is_finite()) {
            return Err(crate::error::ConfigError::new(
                "seconds_per_unit",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageBody {
    ProbeRequest {
        first_round: u64,
        rounds: u64,
    },
    ProbeReply {
        first_round: u64,
        rounds: u64,
    },
    ModelTransfer {
        model: QuantizerModel,
    },
    VerifyChallenge {
        #[serde(with = "hex::serde")]
        nonce: [u8; 16],
    },
    VerifyTag {
        tag: VerificationTag,
    },
    AccessGrant {
        level: AuthLevel,
    },
    SlotTransmission {
        channel: u32,
        round: u64,
    },
    PufChallenge {
        #[serde(with = "hex::serde")]
        challenge: [u8; 16],
    },
    PufResponse {
        #[serde(with = "hex::serde")]
        response: [u8; 32],
    },
    /// Explicit session-key delivery, emitted only in the key-generation
    /// comparison mode.
    KeyDelivery {
        #[serde(with = "hex::serde")]
        key: [u8; 32],
    },
    Terminate,
}

impl MessageBody {
    pub fn is_key_transmission(&self) -> bool {
        matches!(self, MessageBody::KeyDelivery { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: String,
    pub receiver: String,
    pub abstract_cost: u64,
    #[serde(flatten)]
    pub body: MessageBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    SeedMismatch,
    InsufficientEntropy,
    QuantizerFailure(String),
    PufMismatch,
    NotEnrolled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Authenticated { level: AuthLevel },
    Rejected { reason: RejectReason },
    Terminated,
}

impl Outcome {
    pub fn is_authenticated(&self) -> bool {
        matches!(self, Outcome::Authenticated { .. })
    }
}

/// Every message and decision of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub device_id: String,
    pub messages: Vec<Message>,
    pub outcome: Outcome,
    /// Message costs plus `compute_cost`.
    pub total_cost: u64,
    pub compute_cost: u64,
    pub attempts: u32,
    /// Measured elapsed time; excluded from serialized output.
    #[serde(skip)]
    pub wall_time: f64,
}

impl SessionTranscript {
    pub(crate) fn new(device_id: &str) -> Self {
        Self {
            device_id: device_id.to_string(),
            messages: Vec::new(),
            outcome: Outcome::Rejected {
                reason: RejectReason::NotEnrolled,
            },
            total_cost: 0,
            compute_cost: 0,
            attempts: 0,
            wall_time: 0.0,
        }
    }

    pub(crate) fn send(&mut self, sender: &str, receiver: &str, cost: u64, body: MessageBody) {
        self.total_cost += cost;
        self.messages.push(Message {
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            abstract_cost: cost,
            body,
        });
    }

    pub(crate) fn compute(&mut self, cost: u64) {
        self.compute_cost += cost;
        self.total_cost += cost;
    }

    /// One canonical JSON object per message, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        self.messages
            .iter()
            .map(|m| crate::canonical::to_string(m) + "\n")
            .collect()
    }

    /// Whether `secret` appears in any serialized message, raw or as hex.
    pub fn leaks(&self, secret: &[u8]) -> bool {
        let hex_lower = hex::encode(secret);
        let hex_upper = hex_lower.to_uppercase();
        self.messages.iter().any(|m| {
            let line = crate::canonical::to_string(m);
            line.contains(&hex_lower)
                || line.contains(&hex_upper)
                || line.as_bytes().windows(secret.len()).any(|w| w == secret)
        })
    }

    pub fn key_transmissions(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.body.is_key_transmission())
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_json_shape() {
        let m = Message {
            sender: "gateway".into(),
            receiver: "dev-0".into(),
            abstract_cost: 10,
            body: MessageBody::VerifyChallenge { nonce: [1; 16] },
        };
        assert_eq!(
            crate::canonical::to_string(&m),
            r#"{"abstract_cost":10,"kind":"verify_challenge","nonce":"01010101010101010101010101010101","receiver":"dev-0","sender":"gateway"}"#
        );
        let back: Message = serde_json::from_str(&crate::canonical::to_string(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn hash_cost_counts_padded_blocks() {
        let c = CostModel::default();
        assert_eq!(c.hash(0), 50);
        assert_eq!(c.hash(55), 50);
        assert_eq!(c.hash(56), 100);
    }

    #[test]
    fn leak_scan_finds_hex_and_raw() {
        let mut t = SessionTranscript::new("d");
        t.send("a", "b", 1, MessageBody::KeyDelivery { key: [0xab; 32] });
        assert!(t.leaks(&[0xab; 32]));
        assert!(!t.leaks(&[0xcd; 32]));
        assert_eq!(t.key_transmissions(), 1);
    }
}
