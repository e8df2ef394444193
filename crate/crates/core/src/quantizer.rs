//! SVM quantization of reciprocal channel measurements into shared bits.
//!
//! The gateway labels its calibration rounds by a median split of RSSI,
//! trains a binary SVM on `(rssi, cfo)`, and keeps only rounds whose decision
//! magnitude clears the guard band. The trained boundary plus the retained
//! round indices form the [`QuantizerModel`] sent to the device, which then
//! quantizes its own measurements of the same rounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::AttributeVector;
use crate::error::{QuantizerError, SvmError};
use crate::svm::{self, SvmModel, SvmParams};

pub const MIN_CALIBRATION_ROUNDS: usize = 16;

/// The boundary message body: SVM, guard band and the kept rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerModel {
    pub svm: SvmModel,
    pub guard: f64,
    pub retained_rounds: Vec<u64>,
}

/// Quantized bits and the round each bit came from. Deliberately not
/// serializable: bit material never leaves an endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMaterial {
    bits: Vec<bool>,
    source_rounds: Vec<u64>,
}

impl BitMaterial {
    pub fn new(bits: Vec<bool>, source_rounds: Vec<u64>) -> Result<Self, QuantizerError> {
        if bits.len() != source_rounds.len() {
            return Err(QuantizerError::RoundMismatch);
        }
        Ok(Self {
            bits,
            source_rounds,
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn source_rounds(&self) -> &[u64] {
        &self.source_rounds
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Trains the quantizer on the gateway's calibration rounds.
pub fn fit_quantizer(
    gateway_samples: &[AttributeVector],
    guard: f64,
    params: &SvmParams,
) -> Result<QuantizerModel, QuantizerError> {
    if !(guard >= 0.0 && guard.is_finite()) {
        return Err(QuantizerError::InvalidGuard);
    }
    if gateway_samples.len() < MIN_CALIBRATION_ROUNDS {
        return Err(QuantizerError::InsufficientData {
            needed: MIN_CALIBRATION_ROUNDS,
            got: gateway_samples.len(),
        });
    }

    let mut ordered = gateway_samples.to_vec();
    ordered.sort_by_key(|s| s.round_index);

    let rssi: Vec<f64> = ordered.iter().map(|s| s.rssi).collect();
    let median = crate::stats::median(&rssi);
    let labels: Vec<i8> = rssi
        .iter()
        .map(|&r| if r > median { 1 } else { -1 })
        .collect();

    let features: Vec<Vec<f64>> = ordered.iter().map(|s| s.features().to_vec()).collect();
    let svm = svm::train_binary(&features, &labels, params).map_err(|e| match e {
        SvmError::SingleClass => QuantizerError::DegenerateLabels,
        other => QuantizerError::Svm(other),
    })?;

    let mut retained_rounds = Vec::new();
    for (sample, x) in ordered.iter().zip(&features) {
        if svm.decision(x)?.abs() > guard {
            retained_rounds.push(sample.round_index);
        }
    }
    retained_rounds.dedup();
    if retained_rounds.is_empty() {
        return Err(QuantizerError::EmptyRetention);
    }

    Ok(QuantizerModel {
        svm,
        guard,
        retained_rounds,
    })
}

/// Quantizes one endpoint's measurements of the retained rounds.
pub fn quantize(
    model: &QuantizerModel,
    samples: &[AttributeVector],
) -> Result<BitMaterial, QuantizerError> {
    let by_round: BTreeMap<u64, &AttributeVector> =
        samples.iter().map(|s| (s.round_index, s)).collect();
    let mut bits = Vec::with_capacity(model.retained_rounds.len());
    for &round in &model.retained_rounds {
        let sample = by_round
            .get(&round)
            .ok_or(QuantizerError::MissingRound(round))?;
        bits.push(model.svm.decision(&sample.features())? > 0.0);
    }
    Ok(BitMaterial {
        bits,
        source_rounds: model.retained_rounds.clone(),
    })
}

/// Fraction of positions where two bit strings agree.
pub fn bit_agreement(a: &BitMaterial, b: &BitMaterial) -> Result<f64, QuantizerError> {
    if a.source_rounds != b.source_rounds || a.is_empty() {
        return Err(QuantizerError::RoundMismatch);
    }
    let same = a.bits.iter().zip(&b.bits).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}
