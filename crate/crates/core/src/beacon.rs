//! Minimal proof-of-stake consensus layer.
//!
//! The beacon keeps validator records and decides how balances move; it does
//! not hold ledger balances itself. [`crate::ledger::Ledger`] mirrors every
//! decision onto the [`Address::BEACON`] account (issuance for accrual, burn for
//! slashing, transfers for deposits and sweeps), so that account always equals
//! the sum of validator balances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{mul_div_floor, Address, Amount, BasisPoints, Epoch, ValidatorId};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum BeaconError {
    #[error("deposit of {got} does not match stake requirement {required}")]
    WrongAmount { got: Amount, required: Amount },
    #[error("performance factor {0} is outside [0, 1]")]
    InvalidFactor(String),
    #[error("{0} is not active")]
    NotActive(ValidatorId),
    #[error("{0} is not registered")]
    UnknownValidator(ValidatorId),
    #[error("{caller} may not request exit for {id}")]
    Unauthorized { id: ValidatorId, caller: Address },
    #[error("{id} is {status:?}")]
    WrongStatus {
        id: ValidatorId,
        status: ValidatorStatus,
    },
    #[error("slash fraction must be in (0, 10000] bps")]
    InvalidSlashFraction,
    #[error("withdrawal address of {0} is immutable")]
    WithdrawalAddressImmutable(ValidatorId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconParams {
    pub stake_requirement: Amount,
    pub reward_per_epoch: Amount,
    pub activation_delay: u64,
    pub exit_delay: u64,
    pub sweep_period: u64,
}

impl BeaconParams {
    /// Names of parameters that are not strictly positive.
    pub fn non_positive_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, value) in [
            ("stake_requirement", self.stake_requirement),
            ("reward_per_epoch", self.reward_per_epoch),
            ("activation_delay", self.activation_delay),
            ("exit_delay", self.exit_delay),
            ("sweep_period", self.sweep_period),
        ] {
            if value == 0 {
                out.push(name);
            }
        }
        out
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidatorStatus {
    PendingActivation,
    Active,
    Exiting,
    Withdrawable,
    Withdrawn,
}

/// Fraction of the base reward a validator earned, stored in parts per million
/// so accrual stays integer.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PerformanceFactor(u32);

impl PerformanceFactor {
    pub const SCALE: u32 = 1_000_000;
    pub const FULL: PerformanceFactor = PerformanceFactor(Self::SCALE);
    pub const OFFLINE: PerformanceFactor = PerformanceFactor(0);

    pub fn from_f64(factor: f64) -> Result<Self, BeaconError> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(BeaconError::InvalidFactor(factor.to_string()));
        }
        Ok(PerformanceFactor(
            (factor * f64::from(Self::SCALE)).round() as u32
        ))
    }

    pub fn from_ppm(ppm: u32) -> Result<Self, BeaconError> {
        if ppm > Self::SCALE {
            return Err(BeaconError::InvalidFactor(format!("{ppm}ppm")));
        }
        Ok(PerformanceFactor(ppm))
    }

    pub fn ppm(self) -> u32 {
        self.0
    }

    pub fn apply(self, reward: Amount) -> Amount {
        mul_div_floor(reward, u64::from(self.0), u64::from(Self::SCALE))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BeaconValidator {
    pub id: ValidatorId,
    withdrawal_address: Address,
    /// Holder of the validator's signing capability (the operator).
    pub signer: Address,
    pub balance: Amount,
    pub status: ValidatorStatus,
    pub deposit_epoch: Epoch,
    pub activation_epoch: Epoch,
    pub exit_epoch: Option<Epoch>,
    pub withdrawable_epoch: Option<Epoch>,
    pub slashed: bool,
    pub rewards_accrued: Amount,
    pub burned: Amount,
}

impl BeaconValidator {
    /// Set once at deposit; there is no setter.
    pub fn withdrawal_address(&self) -> Address {
        self.withdrawal_address
    }
}

/// One balance movement produced by [`BeaconChain::sweep`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepItem {
    pub id: ValidatorId,
    pub to: Address,
    pub amount: Amount,
    /// Full-balance withdrawal (validator is now `Withdrawn`).
    pub full: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeaconChain {
    params: BeaconParams,
    validators: Vec<BeaconValidator>,
}

impl BeaconChain {
    pub fn new(params: BeaconParams) -> Self {
        Self {
            params,
            validators: Vec::new(),
        }
    }

    pub fn params(&self) -> &BeaconParams {
        &self.params
    }

    pub fn validators(&self) -> &[BeaconValidator] {
        &self.validators
    }

    pub fn validator(&self, id: ValidatorId) -> Option<&BeaconValidator> {
        self.validators.get(id.0 as usize)
    }

    /// Identifier the next accepted deposit will receive.
    pub fn next_id(&self) -> ValidatorId {
        ValidatorId(self.validators.len() as u64)
    }

    pub fn total_balance(&self) -> Amount {
        self.validators.iter().map(|v| v.balance).sum()
    }

    fn get_mut(&mut self, id: ValidatorId) -> Result<&mut BeaconValidator, BeaconError> {
        self.validators
            .get_mut(id.0 as usize)
            .ok_or(BeaconError::UnknownValidator(id))
    }

    pub fn submit_deposit(
        &mut self,
        epoch: Epoch,
        stake: Amount,
        withdrawal_address: Address,
        signer: Address,
    ) -> Result<ValidatorId, BeaconError> {
        if stake != self.params.stake_requirement {
            return Err(BeaconError::WrongAmount {
                got: stake,
                required: self.params.stake_requirement,
            });
        }
        let id = self.next_id();
        self.validators.push(BeaconValidator {
            id,
            withdrawal_address,
            signer,
            balance: stake,
            status: ValidatorStatus::PendingActivation,
            deposit_epoch: epoch,
            activation_epoch: epoch + self.params.activation_delay,
            exit_epoch: None,
            withdrawable_epoch: None,
            slashed: false,
            rewards_accrued: 0,
            burned: 0,
        });
        Ok(id)
    }

    /// Credits every `Active` validator with `floor(reward_per_epoch * factor)`.
    ///
    /// Validators missing from `performance` perform fully. Factors are checked
    /// before any balance changes.
    pub fn accrue(
        &mut self,
        performance: &BTreeMap<ValidatorId, PerformanceFactor>,
    ) -> Result<Vec<(ValidatorId, Amount)>, BeaconError> {
        if let Some(id) = performance.keys().find(|id| self.validator(**id).is_none()) {
            return Err(BeaconError::UnknownValidator(*id));
        }
        let reward = self.params.reward_per_epoch;
        let mut credited = Vec::new();
        for v in self.validators.iter_mut() {
            if v.status != ValidatorStatus::Active {
                continue;
            }
            let factor = performance
                .get(&v.id)
                .copied()
                .unwrap_or(PerformanceFactor::FULL);
            let amount = factor.apply(reward);
            v.balance += amount;
            v.rewards_accrued += amount;
            credited.push((v.id, amount));
        }
        Ok(credited)
    }

    /// Burns `floor(balance * fraction / 10_000)` and forces the validator out.
    pub fn slash(
        &mut self,
        epoch: Epoch,
        id: ValidatorId,
        fraction: BasisPoints,
    ) -> Result<Amount, BeaconError> {
        if fraction == BasisPoints::ZERO {
            return Err(BeaconError::InvalidSlashFraction);
        }
        let exit_delay = self.params.exit_delay;
        let v = self.get_mut(id)?;
        if v.status != ValidatorStatus::Active {
            return Err(BeaconError::NotActive(id));
        }
        let burned = fraction.apply_floor(v.balance);
        v.balance -= burned;
        v.burned += burned;
        v.slashed = true;
        v.status = ValidatorStatus::Exiting;
        v.exit_epoch = Some(epoch);
        v.withdrawable_epoch = Some(epoch + exit_delay);
        Ok(burned)
    }

    /// Accepted from the withdrawal address or the signing-capability holder.
    pub fn request_exit(
        &mut self,
        epoch: Epoch,
        id: ValidatorId,
        caller: Address,
    ) -> Result<(), BeaconError> {
        let exit_delay = self.params.exit_delay;
        let v = self.get_mut(id)?;
        if caller != v.withdrawal_address && caller != v.signer {
            return Err(BeaconError::Unauthorized { id, caller });
        }
        if v.status != ValidatorStatus::Active {
            return Err(BeaconError::WrongStatus {
                id,
                status: v.status,
            });
        }
        v.status = ValidatorStatus::Exiting;
        v.exit_epoch = Some(epoch);
        v.withdrawable_epoch = Some(epoch + exit_delay);
        Ok(())
    }

    /// Always rejected: withdrawal addresses are write-once.
    pub fn set_withdrawal_address(
        &mut self,
        id: ValidatorId,
        _new: Address,
    ) -> Result<(), BeaconError> {
        self.get_mut(id)?;
        Err(BeaconError::WithdrawalAddressImmutable(id))
    }

    /// Activations and exit-queue progress due at `epoch`.
    pub fn process_transitions(&mut self, epoch: Epoch) -> Vec<(ValidatorId, ValidatorStatus)> {
        let mut changed = Vec::new();
        for v in self.validators.iter_mut() {
            let next = match v.status {
                ValidatorStatus::PendingActivation if v.activation_epoch <= epoch => {
                    ValidatorStatus::Active
                }
                ValidatorStatus::Exiting if v.withdrawable_epoch.is_some_and(|w| w <= epoch) => {
                    ValidatorStatus::Withdrawable
                }
                _ => continue,
            };
            v.status = next;
            changed.push((v.id, next));
        }
        changed
    }

    /// On sweep epochs: excess over stake for active validators, full balance
    /// for withdrawable ones.
    pub fn sweep(&mut self, epoch: Epoch) -> Vec<SweepItem> {
        if !epoch.is_multiple_of(self.params.sweep_period) {
            return Vec::new();
        }
        let stake = self.params.stake_requirement;
        let mut items = Vec::new();
        for v in self.validators.iter_mut() {
            match v.status {
                ValidatorStatus::Active if v.balance > stake => {
                    let excess = v.balance - stake;
                    v.balance = stake;
                    items.push(SweepItem {
                        id: v.id,
                        to: v.withdrawal_address,
                        amount: excess,
                        full: false,
                    });
                }
                ValidatorStatus::Withdrawable => {
                    let amount = std::mem::take(&mut v.balance);
                    v.status = ValidatorStatus::Withdrawn;
                    items.push(SweepItem {
                        id: v.id,
                        to: v.withdrawal_address,
                        amount,
                        full: true,
                    });
                }
                _ => {}
            }
        }
        items
    }
}
