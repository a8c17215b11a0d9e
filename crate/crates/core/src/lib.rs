//! Game-theoretic model of a blockchain-based order book (BBOB).
//!
//! Buyers and sellers post orders as fee-carrying transactions; selfish
//! miners pick which pairs to match and include in each block. This crate
//! provides:
//!
//! * [`market`]: participants, market instances, payoffs and the matching
//!   feasibility test.
//! * [`miner`]: fee-maximising and protocol-following block construction and
//!   the multi-block pending-pool dynamics.
//! * [`equilibrium`]: the block-size threshold, threshold fees, the pure
//!   equilibrium and the mixed equilibrium fee distributions, plus numerical
//!   equilibrium verification.
//! * [`mechanism`]: block-size selection under complete and distributional
//!   information.
//! * [`welfare`]: social welfare accounting, the exact social optimum and
//!   price-of-anarchy style ratios.
//!
//! All randomness is driven by explicit seeds through the [`random::Chooser`]
//! abstraction, so every simulation is reproducible.

pub mod equilibrium;
pub mod error;
pub mod market;
pub mod matching;
pub mod mechanism;
pub mod miner;
pub mod random;
pub mod welfare;

pub use error::{Error, Result};
pub use market::{Buyer, FeeProfile, MarketInstance, MatchTrace, Miner, MinerPolicy, Seller};
