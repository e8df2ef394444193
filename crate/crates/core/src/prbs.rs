//! Seed derivation, ITU-T O.150 PRBS generation, slot scheduling and
//! hash-based seed verification.
//!
//! Both endpoints hash their quantized bits into a [`Seed`], seed an LFSR from
//! it, and derive the same pseudo-random channel schedule. Agreement is
//! checked with a nonce-bound tag so the seed itself is never transmitted.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

use crate::error::CryptoError;
use crate::quantizer::BitMaterial;

const SEED_DOMAIN: &[u8] = b"iomt-authsim/seed/v1";
const LFSR_DOMAIN: &[u8] = b"iomt-authsim/lfsr/v1";
const TAG_DOMAIN: &[u8] = b"iomt-authsim/tag/v1";

pub const MIN_SEED_BITS: usize = 64;

/// A shared secret derived from quantized channel bits.
///
/// Has no serde impls and a redacting `Debug`, so it cannot end up in a
/// protocol message or log line by accident.
#[derive(Clone, PartialEq, Eq)]
pub struct Seed([u8; 32]);

impl Seed {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Wraps raw bytes, e.g. a guessed or perturbed seed.
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Seed(bytes)
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Seed(<redacted>)")
    }
}

/// Packs bits MSB-first, zero-padding the trailing byte.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

pub fn derive_seed(bits: &BitMaterial) -> Result<Seed, CryptoError> {
    derive_seed_from_bits(bits.bits())
}

pub(crate) fn derive_seed_from_bits(bits: &[bool]) -> Result<Seed, CryptoError> {
    if bits.len() < MIN_SEED_BITS {
        return Err(CryptoError::InsufficientEntropy(bits.len()));
    }
    let mut h = Sha256::new();
    h.update(SEED_DOMAIN);
    h.update(pack_bits(bits));
    h.update((bits.len() as u64).to_be_bytes());
    Ok(Seed(h.finalize().into()))
}

/// Supported register lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum PrbsWidth {
    /// x¹⁵ + x¹⁴ + 1
    Prbs15,
    /// x³¹ + x²⁸ + 1
    Prbs31,
}

impl PrbsWidth {
    pub fn bits(self) -> u32 {
        match self {
            PrbsWidth::Prbs15 => 15,
            PrbsWidth::Prbs31 => 31,
        }
    }

    /// Second feedback tap (1-indexed); the first is the register width.
    fn tap(self) -> u32 {
        match self {
            PrbsWidth::Prbs15 => 14,
            PrbsWidth::Prbs31 => 28,
        }
    }

    fn mask(self) -> u32 {
        (1u32 << self.bits()) - 1
    }

    pub fn period(self) -> u64 {
        (1u64 << self.bits()) - 1
    }
}

impl TryFrom<u32> for PrbsWidth {
    type Error = CryptoError;

    fn try_from(w: u32) -> Result<Self, Self::Error> {
        match w {
            15 => Ok(PrbsWidth::Prbs15),
            31 => Ok(PrbsWidth::Prbs31),
            other => Err(CryptoError::UnsupportedWidth(other)),
        }
    }
}

impl From<PrbsWidth> for u32 {
    fn from(w: PrbsWidth) -> u32 {
        w.bits()
    }
}

/// Fibonacci LFSR over one of the O.150 polynomials. The register is never
/// zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LfsrState {
    register: u32,
    width: PrbsWidth,
}

impl LfsrState {
    /// Starts from an explicit register value; zero is replaced by 1.
    pub fn from_register(register: u32, width: PrbsWidth) -> Self {
        let register = register & width.mask();
        Self {
            register: if register == 0 { 1 } else { register },
            width,
        }
    }

    pub fn register(&self) -> u32 {
        self.register
    }

    pub fn width(&self) -> PrbsWidth {
        self.width
    }

    /// Advances one step and returns the output bit.
    pub fn next_bit(&mut self) -> bool {
        let w = self.width;
        let fb = ((self.register >> (w.bits() - 1)) ^ (self.register >> (w.tap() - 1))) & 1;
        self.register = ((self.register << 1) | fb) & w.mask();
        fb == 1
    }
}

/// Takes the first `width` bits of a digest, big-endian.
fn register_from_digest(digest: &[u8; 32], width: PrbsWidth) -> u32 {
    let head = u32::from_be_bytes([digest[0], digest[1], digest[2], digest[3]]);
    head >> (32 - width.bits())
}

pub fn lfsr_init(seed: &Seed, width: PrbsWidth) -> LfsrState {
    let mut h = Sha256::new();
    h.update(LFSR_DOMAIN);
    h.update(seed.0);
    let digest: [u8; 32] = h.finalize().into();
    LfsrState::from_register(register_from_digest(&digest, width), width)
}

/// One PRBS step in value style.
pub fn prbs_next(state: LfsrState) -> (bool, LfsrState) {
    let mut s = state;
    let bit = s.next_bit();
    (bit, s)
}

/// Draws the next channel index from `m` PRBS bits (MSB first), reduced
/// modulo `n_channels`.
pub fn slot(
    state: &mut LfsrState,
    n_channels: u32,
    bits_per_slot: u32,
) -> Result<u32, CryptoError> {
    if n_channels == 0 {
        return Err(CryptoError::ParameterDomain(
            "n_channels must be positive".into(),
        ));
    }
    if bits_per_slot > 32 || (bits_per_slot < 32 && (1u64 << bits_per_slot) < u64::from(n_channels))
    {
        return Err(CryptoError::ParameterDomain(format!(
            "{bits_per_slot} bits cannot address {n_channels} channels"
        )));
    }
    let mut v: u64 = 0;
    for _ in 0..bits_per_slot {
        v = (v << 1) | u64::from(state.next_bit());
    }
    Ok((v % u64::from(n_channels)) as u32)
}

/// Hash commitment to a seed under a fresh nonce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationTag {
    #[serde(with = "hex::serde")]
    pub nonce: [u8; 16],
    #[serde(with = "hex::serde")]
    pub digest: [u8; 32],
}

fn tag_digest(seed: &Seed, nonce: &[u8; 16]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(TAG_DOMAIN);
    h.update(nonce);
    h.update(seed.0);
    h.finalize().into()
}

pub fn make_tag(seed: &Seed, nonce: [u8; 16]) -> VerificationTag {
    VerificationTag {
        nonce,
        digest: tag_digest(seed, &nonce),
    }
}

/// Constant-time comparison of the expected and presented digests.
pub fn check_tag(seed: &Seed, tag: &VerificationTag) -> bool {
    let expected = tag_digest(seed, &tag.nonce);
    expected.ct_eq(&tag.digest).into()
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn material(bits: &[bool]) -> BitMaterial {
        BitMaterial::new(bits.to_vec(), (0..bits.len() as u64).collect()).unwrap()
    }

    fn pattern(n: usize) -> Vec<bool> {
        (0..n).map(|i| (i * 7 + i / 3) % 5 < 2).collect()
    }

    #[test]
    fn packing_is_msb_first_with_zero_padding() {
        assert_eq!(pack_bits(&[true, false, true]), vec![0b1010_0000]);
        assert_eq!(pack_bits(&[true; 9]), vec![0xff, 0x80],);
    }

    #[test]
    fn seeds_need_64_bits() {
        assert_eq!(
            derive_seed(&material(&pattern(63))),
            Err(CryptoError::InsufficientEntropy(63))
        );
        assert!(derive_seed(&material(&pattern(64))).is_ok());
    }

    #[test]
    fn equal_bits_equal_seeds() {
        let a = derive_seed(&material(&pattern(100))).unwrap();
        let b = derive_seed(&material(&pattern(100))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_bit_changes_seed() {
        let bits = pattern(100);
        let mut flipped = bits.clone();
        flipped[37] = !flipped[37];
        assert_ne!(
            derive_seed(&material(&bits)).unwrap(),
            derive_seed(&material(&flipped)).unwrap()
        );
    }

    #[test]
    fn trailing_zero_bits_change_seed_through_length() {
        let bits = pattern(64);
        let mut longer = bits.clone();
        longer.push(false);
        assert_eq!(pack_bits(&bits).len(), pack_bits(&longer).len() - 1);
        assert_ne!(
            derive_seed(&material(&bits)).unwrap(),
            derive_seed(&material(&longer)).unwrap()
        );
    }

    #[test]
    fn seed_debug_is_redacted() {
        let s = Seed::from_bytes([0xab; 32]);
        assert_eq!(format!("{s:?}"), "Seed(<redacted>)");
    }

    #[test]
    fn width_domain() {
        assert_eq!(PrbsWidth::try_from(15), Ok(PrbsWidth::Prbs15));
        assert_eq!(PrbsWidth::try_from(31), Ok(PrbsWidth::Prbs31));
        assert_eq!(
            PrbsWidth::try_from(16),
            Err(CryptoError::UnsupportedWidth(16))
        );
        assert!(serde_json::from_str::<PrbsWidth>("16").is_err());
    }

    #[test]
    fn zero_register_falls_back_to_one() {
        let zeros = [0u8; 32];
        let r = register_from_digest(&zeros, PrbsWidth::Prbs15);
        assert_eq!(r, 0);
        assert_eq!(LfsrState::from_register(r, PrbsWidth::Prbs15).register(), 1);
    }

    #[test]
    fn register_takes_leading_digest_bits() {
        let mut d = [0u8; 32];
        d[0] = 0b1100_0000;
        d[1] = 0x01;
        // first 15 bits: 1100_0000 0000_000
        assert_eq!(
            register_from_digest(&d, PrbsWidth::Prbs15),
            0b110_0000_0000_0000
        );
    }

    #[test]
    fn equal_seeds_give_equal_lfsr() {
        let s = Seed::from_bytes([7; 32]);
        assert_eq!(
            lfsr_init(&s, PrbsWidth::Prbs31),
            lfsr_init(&s, PrbsWidth::Prbs31)
        );
    }

    #[test]
    fn prbs15_first_steps_from_one() {
        // From 0x0001 the feedback is zero until the set bit reaches tap 14.
        let mut s = LfsrState::from_register(1, PrbsWidth::Prbs15);
        let out: Vec<bool> = (0..14).map(|_| s.next_bit()).collect();
        assert!(out[..13].iter().all(|b| !b));
        assert!(out[13]);
    }

    #[test]
    fn slot_reads_bits_big_endian() {
        // Find a state whose next three outputs are 1, 0, 1.
        let mut probe = LfsrState::from_register(1, PrbsWidth::Prbs15);
        let state = loop {
            let start = probe;
            let (a, s1) = prbs_next(start);
            let (b, s2) = prbs_next(s1);
            let (c, _) = prbs_next(s2);
            if (a, b, c) == (true, false, true) {
                break start;
            }
            probe.next_bit();
        };
        let mut s = state;
        assert_eq!(slot(&mut s, 8, 3).unwrap(), 5);
    }

    #[test]
    fn single_channel_is_always_zero() {
        let mut s = LfsrState::from_register(0x1234, PrbsWidth::Prbs31);
        for _ in 0..100 {
            assert_eq!(slot(&mut s, 1, 0).unwrap(), 0);
        }
    }

    #[test]
    fn slot_rejects_too_few_bits() {
        let mut s = LfsrState::from_register(1, PrbsWidth::Prbs15);
        assert!(matches!(
            slot(&mut s, 9, 3),
            Err(CryptoError::ParameterDomain(_))
        ));
        assert!(slot(&mut s, 8, 3).is_ok());
    }

    #[test]
    fn tag_round_trip_and_mismatch() {
        let s = Seed::from_bytes([3; 32]);
        let mut other = [3; 32];
        other[0] ^= 0x01;
        let t = make_tag(&s, [9; 16]);
        assert!(check_tag(&s, &t));
        assert!(!check_tag(&Seed::from_bytes(other), &t));
    }

    #[test]
    fn tag_serializes_as_hex() {
        let t = make_tag(&Seed::from_bytes([0; 32]), [0xa5; 16]);
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["nonce"], "a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5");
        assert_eq!(v["digest"].as_str().unwrap().len(), 64);
    }
}
