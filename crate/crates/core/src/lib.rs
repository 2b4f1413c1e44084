//! Deterministic simulator for a zero-trust validator staking arrangement:
//! an NFT mint, a treasury and per-validator smart-contract wallets running
//! on a simulated proof-of-stake chain.
//!
//! All amounts are integers. Every run is a pure function of its scenario.

pub mod arrangement;
pub mod beacon;
pub mod golden;
pub mod ledger;
pub mod mint;
pub mod scenario;
pub mod treasury;
pub mod types;
pub mod wallet;

pub use ledger::{Ledger, LedgerError};
pub use scenario::{run, RunOutput, RunReport, Scenario};
