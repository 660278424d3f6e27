//! Superposed multicast/unicast transmission over Rayleigh MIMO OFDMA with
//! statistical channel knowledge at the transmitter.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: per-subchannel user SNRs, orderings and stronger-user sets.
//! - [`rates`]: ergodic rate functions `Φ(x)`, `φ(x)` by Monte-Carlo or lookup.
//! - [`surrogate`]: the `(1 + αx)⁻¹` surrogate for `φ` and its fitted table.
//! - [`alloc`]: surrogate water-filling allocators and the UO/MO/OM baselines.
//! - [`oracle`]: brute-force and direct covariance solvers, DoF slopes.
//! - [`sysim`]: rural-macro system-level drops producing channel statistics.
//! - [`experiment`]: multi-drop sweeps, CDFs, percentiles and mode fractions.

pub mod alloc;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod oracle;
pub mod rates;
pub mod rng;
pub mod surrogate;
pub mod sysim;

pub use alloc::{Allocation, AllocatorOptions, Mode, Scheme};
pub use channel::{ChannelStats, MimoShape};
pub use error::{Error, Result};
pub use rates::{RateEstimator, RateResult};
pub use surrogate::SurrogateTable;
