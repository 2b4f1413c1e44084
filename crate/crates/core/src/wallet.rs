//! Validator smart-contract wallet. Holds one validator's stake, hands the
//! signing capability to the operator and exits on its own when rewards dry up.

use std::any::Any;
use std::collections::VecDeque;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::beacon::ValidatorStatus;
use crate::ledger::{BeaconRequest, CallContext, Contract, ContractError, Message, Outcome, Reply};
use crate::types::{Address, Amount, Epoch, ValidatorId};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum WalletError {
    #[error("caller {0} not permitted")]
    WrongCaller(Address),
    #[error("got {got}, stake requirement is {required}")]
    WrongAmount { got: Amount, required: Amount },
    #[error("not allowed in status {0:?}")]
    WrongStatus(WalletStatus),
    #[error("beacon has not swept the exited validator")]
    BeaconNotSwept,
    #[error("already checked at epoch {last}")]
    AlreadyChecked { last: Epoch },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum WalletStatus {
    Idle,
    Deposited,
    Active,
    ExitRequested,
    Withdrawn,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum WatchdogDecision {
    Ok,
    TriggerExit,
    /// The validator left the active set for a protocol reason (slashing or
    /// an exit signed by the operator key); the wallet follows it out.
    ExitObserved,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ExitCause {
    Watchdog,
    Protocol,
}

/// Signing authority over the validator. Knowing who holds it is all the
/// simulation needs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OperatorKey {
    pub holder: Address,
    pub validator: ValidatorId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WalletConfig {
    pub treasury: Address,
    pub operator: Address,
    /// Position among the treasury's wallets.
    pub index: usize,
    pub stake_requirement: Amount,
    pub expected_reward_per_epoch: Amount,
    pub grace_epochs: u64,
}

impl WalletConfig {
    pub fn threshold(&self) -> Amount {
        self.expected_reward_per_epoch * self.grace_epochs
    }
}

/// Per-epoch receipts over the trailing `len` epochs. Epochs without a
/// recording count as zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RewardWindow {
    len: u64,
    start: Epoch,
    entries: VecDeque<(Epoch, Amount)>,
}

impl RewardWindow {
    /// Counting begins at `start`.
    pub fn new(len: u64, start: Epoch) -> Self {
        assert!(len > 0, "window length must be positive");
        Self {
            len,
            start,
            entries: VecDeque::new(),
        }
    }

    pub fn start(&self) -> Epoch {
        self.start
    }

    pub fn record(&mut self, epoch: Epoch, amount: Amount) {
        if epoch < self.start {
            return;
        }
        match self.entries.back_mut() {
            Some((last, total)) if *last == epoch => *total += amount,
            _ => self.entries.push_back((epoch, amount)),
        }
        while self
            .entries
            .front()
            .is_some_and(|(e, _)| e + self.len <= epoch)
        {
            self.entries.pop_front();
        }
    }

    /// Sum over `[now - len + 1, now]`.
    pub fn sum(&self, now: Epoch) -> Amount {
        self.entries
            .iter()
            .filter(|(e, _)| *e <= now && e + self.len > now)
            .map(|(_, a)| a)
            .sum()
    }

    /// At least `len` epochs of history have elapsed.
    pub fn is_full(&self, now: Epoch) -> bool {
        now + 1 >= self.start + self.len
    }

    /// Oldest first, zero-filled, `len` entries ending at `now`.
    pub fn values(&self, now: Epoch) -> Vec<Amount> {
        (0..self.len)
            .rev()
            .map(|back| {
                let epoch = now.checked_sub(back);
                epoch.filter(|e| *e >= self.start).map_or(0, |e| {
                    self.entries
                        .iter()
                        .find(|(x, _)| *x == e)
                        .map_or(0, |(_, a)| *a)
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ValidatorWallet {
    config: WalletConfig,
    status: WalletStatus,
    validator_id: Option<ValidatorId>,
    operator_key: Option<OperatorKey>,
    window: Option<RewardWindow>,
    last_check: Option<Epoch>,
    forwarded_total: Amount,
    exit: Option<(Epoch, ExitCause)>,
}

impl ValidatorWallet {
    pub fn new(config: WalletConfig) -> Self {
        Self {
            config,
            status: WalletStatus::Idle,
            validator_id: None,
            operator_key: None,
            window: None,
            last_check: None,
            forwarded_total: 0,
            exit: None,
        }
    }

    pub fn config(&self) -> &WalletConfig {
        &self.config
    }

    pub fn status(&self) -> WalletStatus {
        self.status
    }

    pub fn validator_id(&self) -> Option<ValidatorId> {
        self.validator_id
    }

    pub fn operator_key(&self) -> Option<OperatorKey> {
        self.operator_key
    }

    pub fn window(&self) -> Option<&RewardWindow> {
        self.window.as_ref()
    }

    pub fn forwarded_total(&self) -> Amount {
        self.forwarded_total
    }

    /// Epoch and cause of the exit, once requested.
    pub fn exit(&self) -> Option<(Epoch, ExitCause)> {
        self.exit
    }

    fn deposit(&self, ctx: &CallContext<'_>) -> Result<Outcome, WalletError> {
        if ctx.caller != self.config.treasury {
            return Err(WalletError::WrongCaller(ctx.caller));
        }
        if self.status != WalletStatus::Idle {
            return Err(WalletError::WrongStatus(self.status));
        }
        if ctx.value != self.config.stake_requirement {
            return Err(WalletError::WrongAmount {
                got: ctx.value,
                required: self.config.stake_requirement,
            });
        }
        let id = ctx.beacon().next_id();
        let key = OperatorKey {
            holder: self.config.operator,
            validator: id,
        };
        let mut next = self.clone();
        next.status = WalletStatus::Deposited;
        next.validator_id = Some(id);
        next.operator_key = Some(key);
        Ok(Outcome::new(Reply::Validator(id))
            .with_state(next)
            .beacon(BeaconRequest::Deposit {
                stake: ctx.value,
                withdrawal_address: ctx.this,
                signer: key.holder,
            })
            .emit(
                "Deposited",
                json!({"validator": id, "stake": ctx.value, "operator_key": key.holder}),
            ))
    }

    fn beacon_status(&self, ctx: &CallContext<'_>) -> Option<(ValidatorStatus, Epoch)> {
        self.validator_id
            .and_then(|id| ctx.beacon().validator(id))
            .map(|v| (v.status, v.activation_epoch))
    }

    fn forward(&self, ctx: &CallContext<'_>) -> Result<Outcome, WalletError> {
        let mut next = self.clone();
        match self.status {
            WalletStatus::Deposited => match self.beacon_status(ctx) {
                Some((status, activated))
                    if status != ValidatorStatus::PendingActivation && activated < ctx.epoch =>
                {
                    next.status = WalletStatus::Active;
                    next.window = Some(RewardWindow::new(self.config.grace_epochs, activated + 1));
                }
                _ => return Ok(Outcome::new(Reply::Amount(0))),
            },
            WalletStatus::Active => {}
            WalletStatus::ExitRequested => {
                if matches!(
                    self.beacon_status(ctx),
                    Some((ValidatorStatus::Withdrawn, _))
                ) {
                    return Ok(Outcome::new(Reply::Amount(0)));
                }
            }
            other => return Err(WalletError::WrongStatus(other)),
        }
        let amount = ctx.balance();
        if let Some(window) = next.window.as_mut() {
            if next.status == WalletStatus::Active {
                window.record(ctx.epoch, amount);
            }
        }
        next.forwarded_total += amount;
        let mut outcome = Outcome::new(Reply::Amount(amount)).emit(
            "RewardsForwarded",
            json!({"validator_index": self.config.index, "amount": amount}),
        );
        if amount > 0 {
            outcome = outcome.call(self.config.treasury, amount, Message::ReceiveRewards);
        }
        Ok(outcome.with_state(next))
    }

    fn watchdog(&self, ctx: &CallContext<'_>) -> Result<Outcome, WalletError> {
        if self.status != WalletStatus::Active {
            return Err(WalletError::WrongStatus(self.status));
        }
        if let Some(last) = self.last_check {
            if ctx.epoch <= last {
                return Err(WalletError::AlreadyChecked { last });
            }
        }
        let mut next = self.clone();
        next.last_check = Some(ctx.epoch);
        let id = self.validator_id.expect("active wallet has a validator");
        let notify = Message::NotifyExit {
            validator_index: self.config.index,
        };

        if !matches!(self.beacon_status(ctx), Some((ValidatorStatus::Active, _))) {
            next.status = WalletStatus::ExitRequested;
            next.exit = Some((ctx.epoch, ExitCause::Protocol));
            return Ok(
                Outcome::new(Reply::Watchdog(WatchdogDecision::ExitObserved))
                    .with_state(next)
                    .emit("ExitObserved", json!({"validator": id}))
                    .call(self.config.treasury, 0, notify),
            );
        }

        let window = self.window.as_ref().expect("active wallet has a window");
        let sum = window.sum(ctx.epoch);
        let threshold = self.config.threshold();
        if !window.is_full(ctx.epoch) || sum >= threshold {
            return Ok(Outcome::new(Reply::Watchdog(WatchdogDecision::Ok)).with_state(next));
        }
        next.status = WalletStatus::ExitRequested;
        next.exit = Some((ctx.epoch, ExitCause::Watchdog));
        Ok(Outcome::new(Reply::Watchdog(WatchdogDecision::TriggerExit))
            .with_state(next)
            .emit(
                "ExitTriggered",
                json!({
                    "validator": id,
                    "window": window.values(ctx.epoch),
                    "window_sum": sum,
                    "threshold": threshold,
                }),
            )
            .beacon(BeaconRequest::RequestExit { id })
            .call(self.config.treasury, 0, notify))
    }

    /// Splits the swept balance: up to the stake is principal, anything above
    /// it is late reward and goes through the normal fee path.
    fn finalize(&self, ctx: &CallContext<'_>) -> Result<Outcome, WalletError> {
        if self.status != WalletStatus::ExitRequested {
            return Err(WalletError::WrongStatus(self.status));
        }
        if !matches!(
            self.beacon_status(ctx),
            Some((ValidatorStatus::Withdrawn, _))
        ) {
            return Err(WalletError::BeaconNotSwept);
        }
        let stake = self.config.stake_requirement;
        let balance = ctx.balance();
        let principal = balance.min(stake);
        let excess = balance - principal;
        let shortfall = stake - principal;
        let penalize = matches!(self.exit, Some((_, ExitCause::Watchdog)));

        let mut next = self.clone();
        next.status = WalletStatus::Withdrawn;
        let mut outcome = Outcome::new(Reply::Withdrawal {
            returned: principal,
            shortfall,
        });
        if excess > 0 {
            next.forwarded_total += excess;
            outcome = outcome.call(self.config.treasury, excess, Message::ReceiveRewards);
        }
        Ok(outcome
            .with_state(next)
            .emit(
                "WithdrawalFinalized",
                json!({
                    "validator_index": self.config.index,
                    "returned": principal,
                    "excess": excess,
                    "shortfall": shortfall,
                }),
            )
            .call(
                self.config.treasury,
                principal,
                Message::SettleExit {
                    validator_index: self.config.index,
                    shortfall,
                    penalize,
                },
            ))
    }
}

impl Contract for ValidatorWallet {
    fn handle(&self, ctx: &CallContext<'_>, msg: &Message) -> Result<Outcome, ContractError> {
        let outcome = match msg {
            Message::Deposit => self.deposit(ctx)?,
            Message::ForwardRewards => self.forward(ctx)?,
            Message::WatchdogCheck => self.watchdog(ctx)?,
            Message::FinalizeWithdrawal => self.finalize(ctx)?,
            other => return Err(ContractError::UnsupportedMethod(other.method().to_owned())),
        };
        Ok(outcome)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
