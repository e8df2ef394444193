//! Trust values, tiered authorization and multi-attribute outlier detection.
//!
//! A transmitter starts from a trust value chosen by its primary attribute
//! (allowlisted IP or not). Every later observation is classified inlier or
//! outlier by the enabled attribute detectors; outliers cost `delta_down`,
//! inliers earn `delta_up`. The value maps onto `len(thresholds) + 1`
//! authorization levels, and falling below `terminate_below` ends the
//! connection for good.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::channel::AttributeVector;
use crate::error::{ConfigError, SvmError, TrustError};
use crate::svm::{self, OneClassModel, SvmParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustPolicy {
    pub init_known: f64,
    pub init_unknown: f64,
    pub delta_up: f64,
    pub delta_down: f64,
    pub level_thresholds: Vec<f64>,
    pub terminate_below: f64,
}

impl Default for TrustPolicy {
    fn default() -> Self {
        Self {
            init_known: 0.9,
            init_unknown: 0.5,
            delta_up: 0.05,
            delta_down: 0.2,
            level_thresholds: vec![0.5, 0.8],
            terminate_below: 0.2,
        }
    }
}

impl TrustPolicy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.init_known) {
            return Err(ConfigError::new("init_known", "must lie in [0, 1]"));
        }
        if !unit(self.init_unknown) {
            return Err(ConfigError::new("init_unknown", "must lie in [0, 1]"));
        }
        if !(self.delta_up > 0.0 && self.delta_up.is_finite()) {
            return Err(ConfigError::new("delta_up", "must be positive"));
        }
        if !(self.delta_down > 0.0 && self.delta_down.is_finite()) {
            return Err(ConfigError::new("delta_down", "must be positive"));
        }
        if self
            .level_thresholds
            .iter()
            .any(|t| !(*t > 0.0 && *t < 1.0))
        {
            return Err(ConfigError::new(
                "level_thresholds",
                "thresholds must lie in (0, 1)",
            ));
        }
        if self.level_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::new(
                "level_thresholds",
                "thresholds must be strictly ascending",
            ));
        }
        let lowest = self.level_thresholds.first().copied().unwrap_or(1.0);
        if !(self.terminate_below >= 0.0 && self.terminate_below < lowest) {
            return Err(ConfigError::new(
                "terminate_below",
                "must be non-negative and below the lowest level threshold",
            ));
        }
        Ok(())
    }

    /// Number of authorization levels.
    pub fn levels(&self) -> u8 {
        self.level_thresholds.len() as u8 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryAttribute {
    KnownIp,
    UnknownIp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    Inlier,
    Outlier,
}

/// Resource tier, 1 (null resources) up to the policy's level count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthLevel(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Authorization {
    Level(AuthLevel),
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    pub value: f64,
    pub observations: u64,
    pub terminated: bool,
}

pub fn init_trust(primary: PrimaryAttribute, policy: &TrustPolicy) -> TrustState {
    let value = match primary {
        PrimaryAttribute::KnownIp => policy.init_known,
        PrimaryAttribute::UnknownIp => policy.init_unknown,
    };
    TrustState {
        value,
        observations: 0,
        terminated: false,
    }
}

/// Applies one observation. Termination zeroes the value and is absorbing.
pub fn update(
    state: &TrustState,
    observation: Observation,
    policy: &TrustPolicy,
) -> Result<TrustState, TrustError> {
    if state.terminated {
        return Err(TrustError::AlreadyTerminated);
    }
    let value = match observation {
        Observation::Outlier => (state.value - policy.delta_down).max(0.0),
        Observation::Inlier => (state.value + policy.delta_up).min(1.0),
    };
    let terminated = value < policy.terminate_below;
    Ok(TrustState {
        value: if terminated { 0.0 } else { value },
        observations: state.observations + 1,
        terminated,
    })
}

/// Level = 1 + number of thresholds at or below the value.
pub fn authorize(state: &TrustState, policy: &TrustPolicy) -> Authorization {
    if state.terminated {
        return Authorization::Terminated;
    }
    let passed = policy
        .level_thresholds
        .iter()
        .filter(|t| **t <= state.value)
        .count();
    Authorization::Level(AuthLevel(1 + passed as u8))
}

/// Attributes the gateway can watch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Rssi,
    Cfo,
    /// Directly observed attacking behavior (the on/off switch).
    Attack,
}

impl AttributeKind {
    pub fn name(self) -> &'static str {
        match self {
            AttributeKind::Rssi => "rssi",
            AttributeKind::Cfo => "cfo",
            AttributeKind::Attack => "attack",
        }
    }
}

pub type AttributeSet = BTreeSet<AttributeKind>;

/// `rssi+cfo+attack` style label for an attribute set.
pub fn attribute_set_label(set: &AttributeSet) -> String {
    set.iter().map(|k| k.name()).collect::<Vec<_>>().join("+")
}

/// One-class detector over a single measured attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDetector {
    pub kind: AttributeKind,
    pub model: OneClassModel,
}

impl AttributeDetector {
    fn feature(kind: AttributeKind, m: &AttributeVector) -> Vec<f64> {
        match kind {
            AttributeKind::Rssi => vec![m.rssi],
            AttributeKind::Cfo => vec![m.cfo],
            AttributeKind::Attack => Vec::new(),
        }
    }

    /// Trains a detector on enrollment measurements of one device.
    pub fn enroll(
        kind: AttributeKind,
        enrollment: &[AttributeVector],
        nu: f64,
        params: &SvmParams,
    ) -> Result<Self, SvmError> {
        if kind == AttributeKind::Attack {
            return Err(SvmError::ParameterDomain(
                "attacking behavior is observed directly, not learned".into(),
            ));
        }
        let xs: Vec<Vec<f64>> = enrollment.iter().map(|m| Self::feature(kind, m)).collect();
        Ok(Self {
            kind,
            model: svm::train_one_class(&xs, nu, params)?,
        })
    }

    pub fn flags(&self, m: &AttributeVector) -> Result<bool, SvmError> {
        self.model.is_outlier(&Self::feature(self.kind, m))
    }
}

/// Outlier if any detector flags the measurement or the attack flag is set.
pub fn multi_attribute_observe(
    detectors: &[AttributeDetector],
    measurement: &AttributeVector,
    attack_flag: bool,
) -> Result<Observation, SvmError> {
    if attack_flag {
        return Ok(Observation::Outlier);
    }
    for d in detectors {
        if d.flags(measurement)? {
            return Ok(Observation::Outlier);
        }
    }
    Ok(Observation::Inlier)
}

/// The detectors enabled for one attribute set.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBank {
    pub set: AttributeSet,
    detectors: Vec<AttributeDetector>,
}

impl DetectorBank {
    /// Selects the enrolled detectors named by `set`.
    pub fn select(set: &AttributeSet, enrolled: &[AttributeDetector]) -> Self {
        Self {
            set: set.clone(),
            detectors: enrolled
                .iter()
                .filter(|d| set.contains(&d.kind))
                .cloned()
                .collect(),
        }
    }

    /// `attacked` counts only when the set watches attacking behavior.
    pub fn observe(
        &self,
        measurement: &AttributeVector,
        attacked: bool,
    ) -> Result<Observation, SvmError> {
        let flag = attacked && self.set.contains(&AttributeKind::Attack);
        multi_attribute_observe(&self.detectors, measurement, flag)
    }
}
