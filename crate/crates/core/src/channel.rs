//! Correlated physical-layer measurements at the device, gateway and
//! eavesdropper.
//!
//! A shared latent channel state follows a stationary AR(1) process. Each
//! endpoint observes RSSI as a mix of that latent and private noise:
//!
//! ```text
//! rssi = mu + sigma * (sqrt(rho) * latent + sqrt(1 - rho) * noise)
//! ```
//!
//! so device and gateway RSSI correlate with coefficient `rho`, while the
//! eavesdropper (mixing weight `rho_eve`) correlates with the gateway at
//! `sqrt(rho * rho_eve)`. CFO is a per-radio constant plus linear drift and
//! observation noise; it identifies hardware and is not reciprocal.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rng::RngStream;

/// One probing round's measurements at one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    /// Received signal strength, dBm.
    pub rssi: f64,
    /// Carrier frequency offset, Hz.
    pub cfo: f64,
    pub round_index: u64,
}

impl AttributeVector {
    pub fn features(&self) -> [f64; 2] {
        [self.rssi, self.cfo]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Device/gateway RSSI correlation.
    pub rho: f64,
    /// Eavesdropper mixing weight against the shared latent.
    pub rho_eve: f64,
    /// Temporal AR(1) coefficient of the latent.
    pub phi: f64,
    pub mu_rssi: f64,
    pub sigma_rssi: f64,
    /// Hardware offset of the legitimate device, Hz.
    pub cfo_device: f64,
    /// Hardware offset of the eavesdropper's radio, Hz.
    pub cfo_eve: f64,
    /// Hz per round.
    pub cfo_drift: f64,
    pub sigma_cfo: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            rho: 0.99,
            rho_eve: 0.0,
            phi: 0.5,
            mu_rssi: -65.0,
            sigma_rssi: 6.0,
            cfo_device: 8_500.0,
            cfo_eve: -3_200.0,
            cfo_drift: 0.0,
            sigma_cfo: 40.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, field: &str, msg: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new(field, msg))
            }
        }
        let finite = [
            self.rho,
            self.rho_eve,
            self.phi,
            self.mu_rssi,
            self.sigma_rssi,
            self.cfo_device,
            self.cfo_eve,
            self.cfo_drift,
            self.sigma_cfo,
        ]
        .iter()
        .all(|v| v.is_finite());
        check(finite, "channel", "all values must be finite")?;
        check((0.0..=1.0).contains(&self.rho), "rho", "must lie in [0, 1]")?;
        check(
            (0.0..1.0).contains(&self.rho_eve),
            "rho_eve",
            "must lie in [0, 1)",
        )?;
        check((0.0..1.0).contains(&self.phi), "phi", "must lie in [0, 1)")?;
        check(self.sigma_rssi >= 0.0, "sigma_rssi", "must be >= 0")?;
        check(self.sigma_cfo >= 0.0, "sigma_cfo", "must be >= 0")
    }
}

/// Measurements of one probing round at all three endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRound {
    pub device: AttributeVector,
    pub gateway: AttributeVector,
    pub eve: AttributeVector,
    pub latent: f64,
}

/// Draws one probing round.
///
/// `prev_latent = None` starts the AR(1) chain from its stationary law.
pub fn probe_round(
    cfg: &ChannelConfig,
    round_index: u64,
    prev_latent: Option<f64>,
    rng: &mut RngStream,
) -> ProbeRound {
    let innovation = rng.normal();
    let latent = match prev_latent {
        Some(prev) => cfg.phi * prev + (1.0 - cfg.phi * cfg.phi).sqrt() * innovation,
        None => innovation,
    };

    // Fixed draw order keeps streams aligned regardless of parameter values.
    let noise_device = rng.normal();
    let noise_gateway = rng.normal();
    let noise_eve = rng.normal();
    let cfo_noise_device = rng.normal();
    let cfo_noise_gateway = rng.normal();
    let cfo_noise_eve = rng.normal();

    let rssi = |mix: f64, noise: f64| {
        cfg.mu_rssi + cfg.sigma_rssi * (mix.sqrt() * latent + (1.0 - mix).sqrt() * noise)
    };
    let drift = cfg.cfo_drift * round_index as f64;

    ProbeRound {
        device: AttributeVector {
            rssi: rssi(cfg.rho, noise_device),
            cfo: cfg.cfo_device + drift + cfg.sigma_cfo * cfo_noise_device,
            round_index,
        },
        gateway: AttributeVector {
            rssi: rssi(cfg.rho, noise_gateway),
            cfo: cfg.cfo_device + drift + cfg.sigma_cfo * cfo_noise_gateway,
            round_index,
        },
        eve: AttributeVector {
            rssi: rssi(cfg.rho_eve, noise_eve),
            cfo: cfg.cfo_eve + drift + cfg.sigma_cfo * cfo_noise_eve,
            round_index,
        },
        latent,
    }
}

/// Aligned measurement lists from one probing sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeSequence {
    pub device: Vec<AttributeVector>,
    pub gateway: Vec<AttributeVector>,
    pub eve: Vec<AttributeVector>,
    pub last_latent: Option<f64>,
}

/// Runs `n_rounds` consecutive probing rounds with indices
/// `first_round..first_round + n_rounds`.
pub fn probe_sequence(
    cfg: &ChannelConfig,
    first_round: u64,
    n_rounds: usize,
    prev_latent: Option<f64>,
    rng: &mut RngStream,
) -> ProbeSequence {
    let mut seq = ProbeSequence {
        device: Vec::with_capacity(n_rounds),
        gateway: Vec::with_capacity(n_rounds),
        eve: Vec::with_capacity(n_rounds),
        last_latent: prev_latent,
    };
    for i in 0..n_rounds as u64 {
        let round = probe_round(cfg, first_round + i, seq.last_latent, rng);
        seq.device.push(round.device);
        seq.gateway.push(round.gateway);
        seq.eve.push(round.eve);
        seq.last_latent = Some(round.latent);
    }
    seq
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_reciprocity_gives_equal_rssi() {
        let cfg = ChannelConfig {
            rho: 1.0,
            ..ChannelConfig::default()
        };
        let mut rng = RngStream::new(1, "t");
        let seq = probe_sequence(&cfg, 0, 100, None, &mut rng);
        for (d, g) in seq.device.iter().zip(&seq.gateway) {
            assert_eq!(d.rssi, g.rssi);
        }
    }

    #[test]
    fn zero_variance_pins_rssi_to_mean() {
        let cfg = ChannelConfig {
            sigma_rssi: 0.0,
            mu_rssi: -60.0,
            ..ChannelConfig::default()
        };
        let mut rng = RngStream::new(1, "t");
        let seq = probe_sequence(&cfg, 0, 50, None, &mut rng);
        assert!(seq
            .device
            .iter()
            .chain(&seq.gateway)
            .chain(&seq.eve)
            .all(|v| v.rssi == -60.0));
    }

    #[test]
    fn single_round_sequence() {
        let mut rng = RngStream::new(3, "t");
        let seq = probe_sequence(&ChannelConfig::default(), 0, 1, None, &mut rng);
        assert_eq!(seq.device.len(), 1);
        assert_eq!(seq.gateway.len(), 1);
        assert_eq!(seq.eve.len(), 1);
    }

    #[test]
    fn round_indices_increase() {
        let mut rng = RngStream::new(3, "t");
        let seq = probe_sequence(&ChannelConfig::default(), 10, 5, None, &mut rng);
        let idx: Vec<u64> = seq.gateway.iter().map(|v| v.round_index).collect();
        assert_eq!(idx, vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn cfo_tracks_device_and_eve_offsets() {
        let cfg = ChannelConfig {
            sigma_cfo: 0.0,
            cfo_drift: 2.0,
            ..ChannelConfig::default()
        };
        let mut rng = RngStream::new(3, "t");
        let seq = probe_sequence(&cfg, 0, 4, None, &mut rng);
        assert_eq!(seq.gateway[3].cfo, cfg.cfo_device + 6.0);
        assert_eq!(seq.eve[3].cfo, cfg.cfo_eve + 6.0);
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let bad = ChannelConfig {
            rho_eve: 1.0,
            ..ChannelConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "rho_eve");
        let bad = ChannelConfig {
            sigma_rssi: -1.0,
            ..ChannelConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(ChannelConfig::default().validate().is_ok());
    }
}
