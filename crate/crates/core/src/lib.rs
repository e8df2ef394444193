pub mod adversary;
pub mod canonical;
pub mod channel;
pub mod error;
pub mod harness;
pub mod prbs;
pub mod protocol;
pub mod quantizer;
pub mod rng;
pub mod stats;
pub mod svm;
pub mod trust;
