//! Scenario files: arrangement parameters plus a schedule of user actions,
//! operator behaviour and slashings.

mod engine;
mod report;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::beacon::{BeaconParams, PerformanceFactor};
use crate::types::{Amount, Epoch};

pub use engine::{run, RunOutput};
pub use report::{
    ConservationReport, ExitReport, HolderReport, OperatorReport, RunReport, ValidatorReport,
};

/// Holder names the engine reserves for its own accounts.
pub const RESERVED_NAMES: [&str; 2] = ["operator", "keeper"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreasurySection {
    pub fee_bps: u64,
    pub expected_reward_per_epoch: Amount,
    pub grace_epochs: u64,
    pub escrow_required: Amount,
    #[serde(default)]
    pub exit_penalty: Amount,
    /// Number of validators `m`.
    pub validators: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MintSection {
    pub min_contribution: Amount,
    pub open_epoch: Epoch,
    pub close_epoch: Epoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepositSpec {
    pub holder: String,
    pub amount: Amount,
    pub epoch: Epoch,
}

/// Performance factor for duty epochs in `[start, end)`. Without `validator`
/// the entry covers every validator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub start: Epoch,
    pub end: Epoch,
    pub factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validator: Option<usize>,
}

impl ScheduleEntry {
    fn covers(&self, validator: usize) -> bool {
        self.validator.is_none_or(|v| v == validator)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlashSpec {
    pub epoch: Epoch,
    pub validator: usize,
    pub fraction_bps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    pub token_id: u64,
    pub from: String,
    pub to: String,
    pub epoch: Epoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSpec {
    pub holder: String,
    pub epoch: Epoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub treasury: TreasurySection,
    pub mint: MintSection,
    pub beacon: BeaconParams,
    #[serde(default)]
    pub deposits: Vec<DepositSpec>,
    #[serde(default)]
    pub operator_schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub slashes: Vec<SlashSpec>,
    #[serde(default)]
    pub transfers: Vec<TransferSpec>,
    #[serde(default)]
    pub claims: Vec<ClaimSpec>,
    /// Epochs `0..horizon` are executed.
    pub horizon: Epoch,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parses and validates.
    pub fn load(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario = Self::from_json(text)?;
        let violations = scenario.validate();
        if violations.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(violations))
        }
    }

    pub fn target_total(&self) -> Amount {
        self.beacon.stake_requirement * self.treasury.validators as Amount
    }

    /// Factor for validator `index` during duty epoch `epoch`.
    pub fn factor(&self, index: usize, epoch: Epoch) -> PerformanceFactor {
        self.operator_schedule
            .iter()
            .find(|s| s.covers(index) && s.start <= epoch && epoch < s.end)
            .and_then(|s| PerformanceFactor::from_f64(s.factor).ok())
            .unwrap_or(PerformanceFactor::FULL)
    }

    /// Every holder name mentioned anywhere, sorted.
    pub fn holder_names(&self) -> BTreeSet<&str> {
        let mut names = BTreeSet::new();
        names.extend(self.deposits.iter().map(|d| d.holder.as_str()));
        for t in &self.transfers {
            names.insert(t.from.as_str());
            names.insert(t.to.as_str());
        }
        names.extend(self.claims.iter().map(|c| c.holder.as_str()));
        names
    }

    /// Every constraint violation, in a stable order.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let m = self.treasury.validators;
        let horizon = self.horizon;

        if horizon == 0 {
            out.push("horizon must be positive".to_owned());
        }
        if self.treasury.fee_bps > 10_000 {
            out.push(format!(
                "treasury.fee_bps {} exceeds 10000",
                self.treasury.fee_bps
            ));
        }
        if self.treasury.grace_epochs == 0 {
            out.push("treasury.grace_epochs must be positive".to_owned());
        }
        if m == 0 {
            out.push("treasury.validators must be positive".to_owned());
        }
        for field in self.beacon.non_positive_fields() {
            out.push(format!("beacon.{field} must be positive"));
        }
        if self.mint.min_contribution == 0 {
            out.push("mint.min_contribution must be positive".to_owned());
        }
        if self.mint.open_epoch >= self.mint.close_epoch {
            out.push(format!(
                "mint.open_epoch {} must precede close_epoch {}",
                self.mint.open_epoch, self.mint.close_epoch
            ));
        }

        for name in self.holder_names() {
            if name.is_empty() {
                out.push("holder names must be non-empty".to_owned());
            } else if RESERVED_NAMES.contains(&name) {
                out.push(format!("holder name {name:?} is reserved"));
            }
        }
        for (i, d) in self.deposits.iter().enumerate() {
            if d.amount == 0 {
                out.push(format!("deposits[{i}]: amount must be positive"));
            }
            if d.epoch >= horizon {
                out.push(format!(
                    "deposits[{i}]: epoch {} not before horizon {horizon}",
                    d.epoch
                ));
            }
        }

        for (i, s) in self.operator_schedule.iter().enumerate() {
            if s.start >= s.end {
                out.push(format!(
                    "operator_schedule[{i}]: empty range [{}, {})",
                    s.start, s.end
                ));
            }
            if s.end > horizon {
                out.push(format!(
                    "operator_schedule[{i}]: end {} beyond horizon {horizon}",
                    s.end
                ));
            }
            if PerformanceFactor::from_f64(s.factor).is_err() || !s.factor.is_finite() {
                out.push(format!(
                    "operator_schedule[{i}]: factor {} outside [0, 1]",
                    s.factor
                ));
            }
            if let Some(v) = s.validator {
                if v >= m {
                    out.push(format!("operator_schedule[{i}]: validator {v} >= m {m}"));
                }
            }
        }
        for (i, a) in self.operator_schedule.iter().enumerate() {
            for (j, b) in self.operator_schedule.iter().enumerate().skip(i + 1) {
                let same_validator = match (a.validator, b.validator) {
                    (Some(x), Some(y)) => x == y,
                    _ => true,
                };
                let lo = a.start.max(b.start);
                let hi = a.end.min(b.end);
                if same_validator && lo < hi {
                    out.push(format!(
                        "operator_schedule[{i}] and [{j}] overlap on epochs [{lo}, {hi})"
                    ));
                }
            }
        }

        for (i, s) in self.slashes.iter().enumerate() {
            if s.validator >= m {
                out.push(format!("slashes[{i}]: validator {} >= m {m}", s.validator));
            }
            if s.epoch >= horizon {
                out.push(format!(
                    "slashes[{i}]: epoch {} not before horizon {horizon}",
                    s.epoch
                ));
            }
            if s.fraction_bps == 0 || s.fraction_bps > 10_000 {
                out.push(format!(
                    "slashes[{i}]: fraction_bps {} outside (0, 10000]",
                    s.fraction_bps
                ));
            }
        }
        for (i, t) in self.transfers.iter().enumerate() {
            if t.epoch >= horizon {
                out.push(format!(
                    "transfers[{i}]: epoch {} not before horizon {horizon}",
                    t.epoch
                ));
            }
        }
        for (i, c) in self.claims.iter().enumerate() {
            if c.epoch >= horizon {
                out.push(format!(
                    "claims[{i}]: epoch {} not before horizon {horizon}",
                    c.epoch
                ));
            }
        }
        out
    }
}
