//! Partial domain adaptation with a reinforced data selector.
//!
//! The crate couples a CORAL-style domain adaptation model (shared feature
//! extractor + classifier, covariance alignment, target entropy minimization)
//! with an actor-critic agent that keeps or drops individual source samples.
//! The agent is rewarded with `exp(-mean reconstruction error)` of the kept
//! samples through a target-domain generator, so source classes absent from
//! the target label space are filtered out over training.
//!
//! Everything is built on a small dense-network engine ([`network`],
//! [`adam`], [`gradcheck`]) that works in `no_std` environments with an
//! allocator. IO, file formats, and the CLI live in the companion
//! `rtnet-cli` crate.
//!
//! Determinism contract: every randomized routine takes a seed or an
//! explicit RNG, and one seed yields one bit-exact trajectory.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adam;
pub mod da;
pub mod data;
pub mod error;
pub mod generators;
pub mod gradcheck;
pub mod network;
pub mod selector;
pub mod tensor;
pub mod train;

pub use adam::AdamState;
pub use da::{DaHyperparams, DaLosses, DaModel};
pub use data::{BatchPair, Dataset, Domain, PdaTask, PdaTaskSpec};
pub use error::{CoreError, Result};
pub use generators::GeneratorPair;
pub use network::{Activation, DenseNetwork, GradientSet, Layer};
pub use selector::{EpisodeHistory, RlHyperparams, Selector, StepRecord};
pub use tensor::Tensor;
pub use train::{RtNet, TrainConfig, TrainObserver, TrainOutcome, Variant};

/// Derives an independent substream seed from a master seed and a stream tag.
///
/// Separate streams keep RNG consumption in one component (e.g. the
/// selector's exploration draws) from shifting the draws of another (batch
/// shuffling), which is what makes the `coral` and `rtnet_noselect`
/// variants produce identical model trajectories.
pub fn substream_seed(master: u64, tag: u64) -> u64 {
    // splitmix64 finalizer over the combined value.
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
