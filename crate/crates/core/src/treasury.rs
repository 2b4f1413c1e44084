//! Treasury: NFT registry, reward accounting, operator escrow, and the
//! stake/unstake entry points.
//!
//! Every inbound reward is split immediately. With fee ratio `F` (basis
//! points), a receipt of `R` yields an operator fee of `floor(R * F / 10000)`;
//! the remainder goes to tokens pro rata by capital, credited to each token's
//! current owner. Each token is credited up to the floor of its cumulative
//! entitlement, so the fraction one split cuts off stays with that token and
//! is paid in a later split. The uncredited total is the dust, always fewer
//! units than there are tokens. Over many receipts the operator's take converges on
//! `sum(R_j) * F` and each holder's credit on `C_i / sum(C) * sum(R_j) * (1 - F)`,
//! with error bounded by the number of receipts.
//!
//! Balance identity, checked after every operation:
//! `principal + reward_pool + sum(claimable) + dust + escrow + fees_accrued`
//! equals the treasury's ledger balance.

use std::any::Any;
use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::ledger::{CallContext, Contract, ContractError, Message, Outcome, Reply};
use crate::mint::NftRecord;
use crate::types::{Address, Amount, BasisPoints, TokenId};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum TreasuryError {
    #[error("{0} is not a registered validator wallet")]
    UnknownValidator(Address),
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(Phase),
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("nothing to claim")]
    NothingToClaim,
    #[error("{0} is not the operator")]
    NotOperator(Address),
    #[error("{0} is not the mint")]
    NotMint(Address),
    #[error("capital {capital} does not match target {target}")]
    Underfunded { capital: Amount, target: Amount },
    #[error("escrow {posted} below required {required}")]
    EscrowMissing { posted: Amount, required: Amount },
    #[error("validator {0} already settled")]
    AlreadySettled(usize),
    #[error("treasury configuration is immutable")]
    ConfigImmutable,
    #[error("{0} is not registered")]
    UnknownToken(TokenId),
    #[error("call carried {got}, expected {expected}")]
    ValueMismatch { expected: Amount, got: Amount },
    #[error("no capital registered")]
    NoCapital,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Phase {
    Fundraising,
    Staked,
    Exiting,
    Settled,
    /// Terminal state of a mint that closed under-filled.
    Aborted,
}

impl Phase {
    /// Legal single-step transitions.
    pub fn can_become(self, next: Phase) -> bool {
        matches!(
            (self, next),
            (Phase::Fundraising, Phase::Staked)
                | (Phase::Staked, Phase::Exiting)
                | (Phase::Exiting, Phase::Settled)
                | (Phase::Fundraising, Phase::Aborted)
        )
    }
}

/// Fixed at construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TreasuryConfig {
    pub fee_bps: BasisPoints,
    pub expected_reward_per_epoch: Amount,
    pub grace_epochs: u64,
    pub operator: Address,
    pub escrow_required: Amount,
    /// Paid from escrow to holders when a wallet exits for non-payment.
    pub exit_penalty: Amount,
}

/// Running pro-rata position of one token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShareLine {
    pub token: TokenId,
    pub capital: Amount,
    /// Sum over past split pools of `pool * capital`. The token is owed this
    /// divided by total capital.
    pub scaled_entitlement: u128,
    pub credited: Amount,
}

impl ShareLine {
    pub fn new(token: TokenId, capital: Amount) -> Self {
        Self {
            token,
            capital,
            scaled_entitlement: 0,
            credited: 0,
        }
    }
}

/// Outcome of one pro-rata split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub fee: Amount,
    /// `(token, credit)` in token order.
    pub credits: Vec<(TokenId, Amount)>,
    pub dust: Amount,
}

impl Split {
    pub fn credited(&self) -> Amount {
        self.credits.iter().map(|c| c.1).sum()
    }
}

/// Splits `amount` between the operator fee and the tokens in `lines`.
///
/// Each token is brought up to `floor(sum of pools * capital / total capital)`,
/// so the fraction a floor cuts off stays attached to the token it came from
/// and is paid once it adds up to a whole unit. `carried_dust` is what earlier
/// splits over the same lines left uncredited.
///
/// Conservation: `fee + credited + dust == amount + carried_dust`, and the
/// dust never reaches the number of tokens.
pub fn split_pro_rata(
    amount: Amount,
    fee: BasisPoints,
    carried_dust: Amount,
    lines: &mut [ShareLine],
) -> Split {
    let total_capital: u128 = lines.iter().map(|l| u128::from(l.capital)).sum();
    assert!(total_capital > 0, "pro-rata split over zero capital");
    let fee_amount = fee.apply_floor(amount);
    let net = amount - fee_amount;
    let mut credits = Vec::with_capacity(lines.len());
    let mut handed: Amount = 0;
    for line in lines.iter_mut() {
        line.scaled_entitlement += u128::from(net) * u128::from(line.capital);
        let owed = (line.scaled_entitlement / total_capital) as Amount;
        let credit = owed - line.credited;
        line.credited = owed;
        handed += credit;
        credits.push((line.token, credit));
    }
    Split {
        fee: fee_amount,
        credits,
        dust: (carried_dust + net)
            .checked_sub(handed)
            .expect("carried dust belongs to these lines"),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TreasuryState {
    pub registry: BTreeMap<TokenId, NftRecord>,
    /// Pro-rata positions, one per token in token order.
    pub shares: Vec<ShareLine>,
    pub phase: Option<Phase>,
    /// Capital held by the treasury itself.
    pub principal: Amount,
    /// Capital currently staked through validator wallets.
    pub principal_deployed: Amount,
    pub reward_pool: Amount,
    pub operator_fees_accrued: Amount,
    pub operator_fees_paid: Amount,
    pub claimable: BTreeMap<Address, Amount>,
    pub dust: Amount,
    pub escrow_balance: Amount,
    pub escrow_used: Amount,
    pub escrow_returned: Amount,
    /// Cumulative rewards received per validator index.
    pub rewards_by_validator: Vec<Amount>,
    pub receipts_by_validator: Vec<u64>,
    pub exit_notified: Vec<bool>,
    pub settled: Vec<bool>,
    pub reward_credits: BTreeMap<Address, Amount>,
    pub settlement_credits: BTreeMap<Address, Amount>,
    pub claimed: BTreeMap<Address, Amount>,
}

impl TreasuryState {
    pub fn phase(&self) -> Phase {
        self.phase.unwrap_or(Phase::Fundraising)
    }

    pub fn total_capital(&self) -> Amount {
        self.registry.values().map(|r| r.capital).sum()
    }

    pub fn receipt_count(&self) -> u64 {
        self.receipts_by_validator.iter().sum()
    }

    /// Left-hand side of the balance identity.
    pub fn accounted_balance(&self) -> Amount {
        self.principal
            + self.reward_pool
            + self.claimable.values().sum::<Amount>()
            + self.dust
            + self.escrow_balance
            + self.operator_fees_accrued
    }

    fn owner(&self, token: TokenId) -> Address {
        self.registry[&token].owner
    }

    /// Books `split` to current owners.
    fn credit(&mut self, split: &Split, settlement: bool) {
        for &(token, amount) in &split.credits {
            if amount == 0 {
                continue;
            }
            let owner = self.owner(token);
            *self.claimable.entry(owner).or_default() += amount;
            let ledger = if settlement {
                &mut self.settlement_credits
            } else {
                &mut self.reward_credits
            };
            *ledger.entry(owner).or_default() += amount;
        }
        self.operator_fees_accrued += split.fee;
        self.dust = split.dust;
    }
}

fn distributed_payload(
    kind: &str,
    amount: Amount,
    dust_before: Amount,
    split: &Split,
    owners: impl Fn(TokenId) -> Address,
) -> Value {
    let credits: Vec<_> = split
        .credits
        .iter()
        .map(|(token, credit)| json!([token, owners(*token), credit]))
        .collect();
    json!({
        "kind": kind,
        "amount": amount,
        "fee": split.fee,
        "credited": split.credited(),
        "dust_before": dust_before,
        "dust_after": split.dust,
        "credits": credits,
    })
}

#[derive(Clone, Debug)]
pub struct TreasuryContract {
    config: TreasuryConfig,
    mint: Address,
    validators: Vec<Address>,
    stake_requirement: Amount,
    state: TreasuryState,
}

impl TreasuryContract {
    pub fn new(
        config: TreasuryConfig,
        mint: Address,
        validators: Vec<Address>,
        stake_requirement: Amount,
    ) -> Self {
        let m = validators.len();
        Self {
            config,
            mint,
            validators,
            stake_requirement,
            state: TreasuryState {
                phase: Some(Phase::Fundraising),
                rewards_by_validator: vec![0; m],
                receipts_by_validator: vec![0; m],
                exit_notified: vec![false; m],
                settled: vec![false; m],
                ..TreasuryState::default()
            },
        }
    }

    pub fn config(&self) -> &TreasuryConfig {
        &self.config
    }

    pub fn state(&self) -> &TreasuryState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase()
    }

    pub fn validators(&self) -> &[Address] {
        &self.validators
    }

    pub fn mint_address(&self) -> Address {
        self.mint
    }

    pub fn target_total(&self) -> Amount {
        self.stake_requirement * self.validators.len() as Amount
    }

    pub fn claimable(&self, holder: Address) -> Amount {
        self.state.claimable.get(&holder).copied().unwrap_or(0)
    }

    fn validator_index(&self, caller: Address) -> Result<usize, TreasuryError> {
        self.validators
            .iter()
            .position(|w| *w == caller)
            .ok_or(TreasuryError::UnknownValidator(caller))
    }

    fn require_phase(&self, allowed: &[Phase]) -> Result<(), TreasuryError> {
        let phase = self.phase();
        if allowed.contains(&phase) {
            Ok(())
        } else {
            Err(TreasuryError::WrongPhase(phase))
        }
    }

    fn require_operator(&self, caller: Address) -> Result<(), TreasuryError> {
        if caller == self.config.operator {
            Ok(())
        } else {
            Err(TreasuryError::NotOperator(caller))
        }
    }

    fn set_phase(&mut self, next: Phase) -> Value {
        let from = self.phase();
        debug_assert!(from.can_become(next), "{from:?} -> {next:?}");
        self.state.phase = Some(next);
        tracing::debug!(?from, to = ?next, "treasury phase");
        json!({"from": format!("{from:?}"), "to": format!("{next:?}")})
    }

    fn register(
        &self,
        ctx: &CallContext<'_>,
        record: &NftRecord,
    ) -> Result<Outcome, TreasuryError> {
        if ctx.caller != self.mint {
            return Err(TreasuryError::NotMint(ctx.caller));
        }
        self.require_phase(&[Phase::Fundraising])?;
        if ctx.value != record.capital {
            return Err(TreasuryError::ValueMismatch {
                expected: record.capital,
                got: ctx.value,
            });
        }
        let mut next = self.clone();
        next.state.registry.insert(record.token_id, record.clone());
        next.state
            .shares
            .push(ShareLine::new(record.token_id, record.capital));
        next.state.principal += ctx.value;
        Ok(Outcome::new(Reply::None).with_state(next))
    }

    fn set_owner(
        &self,
        ctx: &CallContext<'_>,
        token_id: TokenId,
        owner: Address,
    ) -> Result<Outcome, TreasuryError> {
        if ctx.caller != self.mint {
            return Err(TreasuryError::NotMint(ctx.caller));
        }
        let mut next = self.clone();
        next.state
            .registry
            .get_mut(&token_id)
            .ok_or(TreasuryError::UnknownToken(token_id))?
            .owner = owner;
        Ok(Outcome::new(Reply::None).with_state(next))
    }

    fn abort(&self, ctx: &CallContext<'_>) -> Result<Outcome, TreasuryError> {
        if ctx.caller != self.mint {
            return Err(TreasuryError::NotMint(ctx.caller));
        }
        self.require_phase(&[Phase::Fundraising])?;
        let mut next = self.clone();
        let refund = Split {
            fee: 0,
            credits: self
                .state
                .shares
                .iter()
                .map(|l| (l.token, l.capital))
                .collect(),
            dust: self.state.dust,
        };
        next.state.credit(&refund, true);
        next.state.principal = 0;
        let payload =
            distributed_payload("refund", refund.credited(), self.state.dust, &refund, |t| {
                next.state.owner(t)
            });
        let phase = next.set_phase(Phase::Aborted);
        Ok(Outcome::new(Reply::None)
            .with_state(next)
            .emit("Distributed", payload)
            .emit("PhaseChanged", phase))
    }

    fn post_escrow(&self, ctx: &CallContext<'_>) -> Result<Outcome, TreasuryError> {
        self.require_operator(ctx.caller)?;
        self.require_phase(&[Phase::Fundraising, Phase::Staked, Phase::Exiting])?;
        if ctx.value == 0 {
            return Err(TreasuryError::ZeroAmount);
        }
        let mut next = self.clone();
        next.state.escrow_balance += ctx.value;
        let balance = next.state.escrow_balance;
        Ok(Outcome::new(Reply::Amount(balance)).with_state(next).emit(
            "EscrowPosted",
            json!({"amount": ctx.value, "balance": balance}),
        ))
    }

    fn withdraw_escrow(&self, ctx: &CallContext<'_>) -> Result<Outcome, TreasuryError> {
        self.require_operator(ctx.caller)?;
        self.require_phase(&[Phase::Settled, Phase::Aborted])?;
        let amount = self.state.escrow_balance;
        if amount == 0 {
            return Err(TreasuryError::NothingToClaim);
        }
        let mut next = self.clone();
        next.state.escrow_balance = 0;
        next.state.escrow_returned += amount;
        Ok(Outcome::new(Reply::Amount(amount))
            .with_state(next)
            .emit("EscrowWithdrawn", json!({"amount": amount}))
            .transfer(ctx.caller, amount))
    }

    fn stake_all(&self) -> Result<Outcome, TreasuryError> {
        self.require_phase(&[Phase::Fundraising])?;
        let capital = self.state.total_capital();
        let target = self.target_total();
        if capital != target {
            return Err(TreasuryError::Underfunded { capital, target });
        }
        if self.state.escrow_balance < self.config.escrow_required {
            return Err(TreasuryError::EscrowMissing {
                posted: self.state.escrow_balance,
                required: self.config.escrow_required,
            });
        }
        let mut next = self.clone();
        next.state.principal -= target;
        next.state.principal_deployed += target;
        let phase = next.set_phase(Phase::Staked);
        let mut outcome = Outcome::new(Reply::None)
            .with_state(next)
            .emit("PhaseChanged", phase)
            .emit(
                "Staked",
                json!({"validators": self.validators.len(), "principal": target}),
            );
        for wallet in &self.validators {
            outcome = outcome.call(*wallet, self.stake_requirement, Message::Deposit);
        }
        Ok(outcome)
    }

    fn receive_rewards(&self, ctx: &CallContext<'_>) -> Result<Outcome, TreasuryError> {
        let index = self.validator_index(ctx.caller)?;
        if ctx.value == 0 {
            return Err(TreasuryError::ZeroAmount);
        }
        self.require_phase(&[Phase::Staked, Phase::Exiting])?;
        let amount = ctx.value;
        let mut next = self.clone();
        next.state.rewards_by_validator[index] += amount;
        next.state.receipts_by_validator[index] += 1;
        next.state.reward_pool += amount;

        let dust_before = next.state.dust;
        let split = split_pro_rata(
            amount,
            self.config.fee_bps,
            dust_before,
            &mut next.state.shares,
        );
        next.state.reward_pool -= amount;
        next.state.credit(&split, false);
        let payload = distributed_payload("reward", amount, dust_before, &split, |t| {
            next.state.owner(t)
        });
        Ok(Outcome::new(Reply::Amount(split.credited()))
            .with_state(next)
            .emit(
                "RewardReceived",
                json!({"validator": index, "amount": amount}),
            )
            .emit("Distributed", payload))
    }

    fn notify_exit(
        &self,
        ctx: &CallContext<'_>,
        validator_index: usize,
    ) -> Result<Outcome, TreasuryError> {
        if self.validators.get(validator_index) != Some(&ctx.caller) {
            return Err(TreasuryError::UnknownValidator(ctx.caller));
        }
        self.require_phase(&[Phase::Staked, Phase::Exiting])?;
        let mut next = self.clone();
        next.state.exit_notified[validator_index] = true;
        let mut outcome = Outcome::new(Reply::None);
        if self.phase() == Phase::Staked {
            let phase = next.set_phase(Phase::Exiting);
            outcome = outcome.emit("PhaseChanged", phase);
        }
        Ok(outcome
            .with_state(next)
            .emit("ExitNotified", json!({"validator": validator_index})))
    }

    /// Principal from an exited validator, topped up from escrow, shared
    /// pro-rata with no operator fee.
    fn settle_exit(
        &self,
        ctx: &CallContext<'_>,
        validator_index: usize,
        shortfall: Amount,
        penalize: bool,
    ) -> Result<Outcome, TreasuryError> {
        if self.validators.get(validator_index) != Some(&ctx.caller) {
            return Err(TreasuryError::UnknownValidator(ctx.caller));
        }
        self.require_phase(&[Phase::Exiting])?;
        if self.state.settled[validator_index] {
            return Err(TreasuryError::AlreadySettled(validator_index));
        }
        let returned = ctx.value;
        let mut next = self.clone();
        let cover = shortfall.min(next.state.escrow_balance);
        next.state.escrow_balance -= cover;
        let penalty = if penalize {
            self.config.exit_penalty.min(next.state.escrow_balance)
        } else {
            0
        };
        next.state.escrow_balance -= penalty;
        next.state.escrow_used += cover + penalty;
        next.state.principal_deployed -= self.stake_requirement;
        next.state.settled[validator_index] = true;

        let amount = returned + cover + penalty;
        let dust_before = next.state.dust;
        let split = split_pro_rata(
            amount,
            BasisPoints::ZERO,
            dust_before,
            &mut next.state.shares,
        );
        next.state.credit(&split, true);
        let payload = distributed_payload("settlement", amount, dust_before, &split, |t| {
            next.state.owner(t)
        });

        let mut outcome = Outcome::new(Reply::Amount(split.credited()));
        outcome = outcome
            .emit(
                "ExitSettled",
                json!({
                    "validator": validator_index,
                    "returned": returned,
                    "shortfall": shortfall,
                    "escrow_cover": cover,
                    "penalty": penalty,
                    "residual_loss": shortfall - cover,
                }),
            )
            .emit("Distributed", payload);
        if next.state.settled.iter().all(|s| *s) {
            let phase = next.set_phase(Phase::Settled);
            outcome = outcome.emit("PhaseChanged", phase);
        }
        Ok(outcome.with_state(next))
    }

    fn claim(&self, ctx: &CallContext<'_>) -> Result<Outcome, TreasuryError> {
        let amount = self.claimable(ctx.caller);
        if amount == 0 {
            return Err(TreasuryError::NothingToClaim);
        }
        let mut next = self.clone();
        next.state.claimable.remove(&ctx.caller);
        *next.state.claimed.entry(ctx.caller).or_default() += amount;
        Ok(Outcome::new(Reply::Amount(amount))
            .with_state(next)
            .emit("Claimed", json!({"holder": ctx.caller, "amount": amount}))
            .transfer(ctx.caller, amount))
    }

    fn claim_operator_fees(&self, ctx: &CallContext<'_>) -> Result<Outcome, TreasuryError> {
        self.require_operator(ctx.caller)?;
        let amount = self.state.operator_fees_accrued;
        if amount == 0 {
            return Err(TreasuryError::NothingToClaim);
        }
        let mut next = self.clone();
        next.state.operator_fees_accrued = 0;
        next.state.operator_fees_paid += amount;
        let total = next.state.operator_fees_paid;
        Ok(Outcome::new(Reply::Amount(amount))
            .with_state(next)
            .emit(
                "OperatorFeesClaimed",
                json!({"amount": amount, "total_paid": total}),
            )
            .transfer(ctx.caller, amount))
    }
}

impl Contract for TreasuryContract {
    fn handle(&self, ctx: &CallContext<'_>, msg: &Message) -> Result<Outcome, ContractError> {
        let outcome = match msg {
            Message::RegisterNft { record } => self.register(ctx, record)?,
            Message::SetOwner { token_id, owner } => self.set_owner(ctx, *token_id, *owner)?,
            Message::AbortArrangement => self.abort(ctx)?,
            Message::PostEscrow => self.post_escrow(ctx)?,
            Message::WithdrawEscrow => self.withdraw_escrow(ctx)?,
            Message::StakeAll => self.stake_all()?,
            Message::ReceiveRewards => self.receive_rewards(ctx)?,
            Message::NotifyExit { validator_index } => self.notify_exit(ctx, *validator_index)?,
            Message::SettleExit {
                validator_index,
                shortfall,
                penalize,
            } => self.settle_exit(ctx, *validator_index, *shortfall, *penalize)?,
            Message::Claim => self.claim(ctx)?,
            Message::ClaimOperatorFees => self.claim_operator_fees(ctx)?,
            Message::UpdateConfig { .. } => return Err(TreasuryError::ConfigImmutable.into()),
            other => return Err(ContractError::UnsupportedMethod(other.method().to_owned())),
        };
        Ok(outcome)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
