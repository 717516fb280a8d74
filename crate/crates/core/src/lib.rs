//! Sequential false-discovery control with generalized alpha investing.
//!
//! The crate is organised bottom-up:
//!
//! - [`distributions`]: normal, central and noncentral t functions, test power,
//!   required sample sizes and level-sample functions.
//! - [`tradeoff`]: the level/reward constraint of generalized alpha investing and
//!   the expected-reward-optimal (ERO) level solver.
//! - [`procedures`]: alpha spending, alpha investing, generalized alpha investing,
//!   alpha spending with rewards and ERO alpha investing as state machines over a
//!   wealth ledger.
//! - [`qpd`]: the quality preserving database manager (cost quotes, level
//!   allocation and pool accounting).
//! - [`sim`]: seeded Monte-Carlo experiments with paired streams.

pub mod distributions;
pub mod error;
pub mod procedures;
pub mod qpd;
pub mod sim;
pub mod stats;
pub mod tradeoff;

pub use distributions::{Alternative, Family, LevelSampleFn, TestRequest, TestSpec};
pub use error::{Error, Result};
pub use procedures::{AllocationRule, AllocationScheme, ProcedureConfig, ProcedureKind, ProcedureState};
pub use qpd::{CostQuote, QpdConfig, QpdState, QpdVariant};
pub use tradeoff::Allocation;
