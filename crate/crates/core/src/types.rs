//! Primitive domain types shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Integer amount in the chain's base unit. Accounting never uses floats.
pub type Amount = u64;

/// Simulation time. Contracts observe the current epoch as their only clock.
pub type Epoch = u64;

/// Denominator for basis-point ratios.
pub const BPS_DENOMINATOR: u64 = 10_000;

/// Opaque account identifier, unique within one ledger.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub u32);

impl Address {
    /// The chain itself: emitter of epoch bookkeeping events.
    pub const SYSTEM: Address = Address(0);
    /// Consensus-layer deposit account holding every validator balance.
    pub const BEACON: Address = Address(1);
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Whether an address runs code. Fixed when the address is created.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountKind {
    ExternallyOwned,
    Contract,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u64);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token {}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorId(pub u64);

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "validator {}", self.0)
    }
}

/// A ratio in basis points, `0..=10_000`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct BasisPoints(u16);

impl BasisPoints {
    pub const ZERO: BasisPoints = BasisPoints(0);
    pub const FULL: BasisPoints = BasisPoints(10_000);

    pub fn new(bps: u64) -> Option<Self> {
        (bps <= BPS_DENOMINATOR).then_some(BasisPoints(bps as u16))
    }

    pub fn get(self) -> u64 {
        u64::from(self.0)
    }

    /// `floor(amount * self / 10_000)`.
    pub fn apply_floor(self, amount: Amount) -> Amount {
        mul_div_floor(amount, self.get(), BPS_DENOMINATOR)
    }
}

impl TryFrom<u64> for BasisPoints {
    type Error = String;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        BasisPoints::new(value).ok_or_else(|| format!("{value} exceeds 10000 basis points"))
    }
}

impl From<BasisPoints> for u64 {
    fn from(value: BasisPoints) -> Self {
        value.get()
    }
}

/// `floor(a * b / d)` with a 128-bit intermediate.
///
/// Panics if `d == 0` or the quotient does not fit in 64 bits.
pub fn mul_div_floor(a: u64, b: u64, d: u64) -> u64 {
    let q = u128::from(a) * u128::from(b) / u128::from(d);
    u64::try_from(q).expect("mul_div_floor overflow")
}
