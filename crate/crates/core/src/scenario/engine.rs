//! Drives a scenario epoch by epoch.
//!
//! Sub-step order within an epoch:
//! 1. beacon: scheduled slashes, accrual for the previous epoch's duties,
//!    activation and exit-queue transitions
//! 2. beacon sweep
//! 3. wallets forward rewards, in index order (the treasury distributes each
//!    receipt as it arrives)
//! 4. watchdog checks
//! 5. withdrawal finalization and settlement
//! 6. scheduled user actions
//! 7. treasury balance identity check
//!
//! Permissionless wallet and treasury entry points are invoked by a `keeper`
//! account that holds no funds and no capabilities.

use std::collections::BTreeMap;
use std::sync::Arc;

use tracing::debug;

use super::{report, RunReport, Scenario};
use crate::arrangement::{Arrangement, ArrangementConfig};
use crate::beacon::ValidatorStatus;
use crate::ledger::{EpochHook, Event, Ledger, Message};
use crate::treasury::{Phase, TreasuryConfig};
use crate::types::{Address, BasisPoints, TokenId};
use crate::wallet::WalletStatus;

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub events: Vec<Event>,
}

impl RunOutput {
    pub fn events_jsonl(&self) -> String {
        crate::ledger::to_jsonl(&self.events)
    }

    pub fn report_json(&self) -> String {
        self.report.to_json()
    }

    pub fn report_csv(&self) -> String {
        self.report.to_csv()
    }
}

/// Addresses and schedule shared by the hooks.
#[derive(Debug)]
pub(super) struct Plan {
    pub scenario: Scenario,
    pub arrangement: Arrangement,
    pub keeper: Address,
    pub holders: BTreeMap<String, Address>,
}

impl Plan {
    fn holder(&self, name: &str) -> Address {
        self.holders[name]
    }
}

/// Runs `scenario` to its horizon. The scenario should already be validated.
pub fn run(scenario: &Scenario) -> RunOutput {
    let (ledger, plan) = build(scenario);
    finish(ledger, &plan)
}

pub(super) fn build(scenario: &Scenario) -> (Ledger, Arc<Plan>) {
    let mut ledger = Ledger::new(scenario.beacon.clone());
    let operator = ledger.create_account("operator");
    let keeper = ledger.create_account("keeper");
    let holders: BTreeMap<String, Address> = scenario
        .holder_names()
        .into_iter()
        .map(|name| (name.to_owned(), ledger.create_account(name)))
        .collect();

    let config = ArrangementConfig {
        treasury: TreasuryConfig {
            fee_bps: BasisPoints::new(scenario.treasury.fee_bps).expect("validated fee"),
            expected_reward_per_epoch: scenario.treasury.expected_reward_per_epoch,
            grace_epochs: scenario.treasury.grace_epochs,
            operator,
            escrow_required: scenario.treasury.escrow_required,
            exit_penalty: scenario.treasury.exit_penalty,
        },
        validators: scenario.treasury.validators,
        min_contribution: scenario.mint.min_contribution,
        open_epoch: scenario.mint.open_epoch,
        close_epoch: scenario.mint.close_epoch,
    };
    let arrangement = Arrangement::deploy(&mut ledger, &config);

    let mut funding: BTreeMap<Address, u64> = BTreeMap::new();
    for d in &scenario.deposits {
        *funding.entry(holders[&d.holder]).or_default() += d.amount;
    }
    if scenario.treasury.escrow_required > 0 {
        funding.insert(operator, scenario.treasury.escrow_required);
    }
    for (address, amount) in funding {
        ledger.genesis(address, amount).expect("positive genesis");
    }

    let plan = Arc::new(Plan {
        scenario: scenario.clone(),
        arrangement,
        keeper,
        holders,
    });
    ledger.register_hook(Box::new(BeaconStep(plan.clone())));
    ledger.register_hook(Box::new(SweepStep));
    ledger.register_hook(Box::new(ForwardStep(plan.clone())));
    ledger.register_hook(Box::new(WatchdogStep(plan.clone())));
    ledger.register_hook(Box::new(FinalizeStep(plan.clone())));
    ledger.register_hook(Box::new(UserStep(plan.clone())));
    ledger.register_hook(Box::new(IdentityCheck(plan.clone())));
    (ledger, plan)
}

pub(super) fn finish(mut ledger: Ledger, plan: &Plan) -> RunOutput {
    let horizon = plan.scenario.horizon;
    if horizon > 0 {
        ledger.run_epoch();
        while ledger.epoch() + 1 < horizon {
            ledger.advance_epoch();
        }
    }
    debug!(
        epochs = horizon,
        events = ledger.events().len(),
        "run complete"
    );
    RunOutput {
        report: report::build(&ledger, plan),
        events: ledger.events().to_vec(),
    }
}

fn attempt(
    ledger: &mut Ledger,
    actor: &str,
    caller: Address,
    target: Address,
    value: u64,
    msg: Message,
) {
    let action = msg.method().to_owned();
    if let Err(err) = ledger.call(caller, target, value, msg) {
        debug!(epoch = ledger.epoch(), actor, action, %err, "rejected");
        ledger.note_rejection(actor, &action, &err);
    }
}

struct BeaconStep(Arc<Plan>);

impl EpochHook for BeaconStep {
    fn name(&self) -> &str {
        "beacon"
    }

    fn on_epoch(&mut self, ledger: &mut Ledger) {
        let plan = &self.0;
        let epoch = ledger.epoch();
        for slash in plan.scenario.slashes.iter().filter(|s| s.epoch == epoch) {
            let id = plan
                .arrangement
                .wallet(ledger, slash.validator)
                .validator_id();
            let fraction = BasisPoints::new(slash.fraction_bps).expect("validated fraction");
            let result = match id {
                Some(id) => ledger.beacon_slash(id, fraction).map(|_| ()),
                None => Err(crate::ledger::LedgerError::Revert(
                    crate::ledger::ContractError::Custom(format!(
                        "validator {} has no beacon record",
                        slash.validator
                    )),
                )),
            };
            if let Err(err) = result {
                ledger.note_rejection("scenario", "slash", &err);
            }
        }
        // Rewards paid in epoch E are for duties performed in E - 1.
        if epoch > 0 {
            let performance = (0..plan.arrangement.wallets.len())
                .filter_map(|j| {
                    plan.arrangement
                        .wallet(ledger, j)
                        .validator_id()
                        .map(|id| (id, plan.scenario.factor(j, epoch - 1)))
                })
                .collect();
            if let Err(err) = ledger.beacon_accrue(&performance) {
                ledger.note_rejection("scenario", "accrue", &err);
            }
        }
        ledger.beacon_process_transitions();
    }
}

struct SweepStep;

impl EpochHook for SweepStep {
    fn name(&self) -> &str {
        "sweep"
    }

    fn on_epoch(&mut self, ledger: &mut Ledger) {
        ledger.beacon_sweep();
    }
}

struct ForwardStep(Arc<Plan>);

impl EpochHook for ForwardStep {
    fn name(&self) -> &str {
        "forward"
    }

    fn on_epoch(&mut self, ledger: &mut Ledger) {
        let plan = &self.0;
        for (j, wallet) in plan.arrangement.wallets.iter().enumerate() {
            let status = plan.arrangement.wallet(ledger, j).status();
            if matches!(
                status,
                WalletStatus::Deposited | WalletStatus::Active | WalletStatus::ExitRequested
            ) {
                attempt(
                    ledger,
                    "keeper",
                    plan.keeper,
                    *wallet,
                    0,
                    Message::ForwardRewards,
                );
            }
        }
    }
}

struct WatchdogStep(Arc<Plan>);

impl EpochHook for WatchdogStep {
    fn name(&self) -> &str {
        "watchdog"
    }

    fn on_epoch(&mut self, ledger: &mut Ledger) {
        let plan = &self.0;
        for (j, wallet) in plan.arrangement.wallets.iter().enumerate() {
            if plan.arrangement.wallet(ledger, j).status() == WalletStatus::Active {
                attempt(
                    ledger,
                    "keeper",
                    plan.keeper,
                    *wallet,
                    0,
                    Message::WatchdogCheck,
                );
            }
        }
    }
}

struct FinalizeStep(Arc<Plan>);

impl EpochHook for FinalizeStep {
    fn name(&self) -> &str {
        "finalize"
    }

    fn on_epoch(&mut self, ledger: &mut Ledger) {
        let plan = &self.0;
        for (j, address) in plan.arrangement.wallets.iter().enumerate() {
            let wallet = plan.arrangement.wallet(ledger, j);
            let swept = wallet
                .validator_id()
                .and_then(|id| ledger.beacon().validator(id))
                .is_some_and(|v| v.status == ValidatorStatus::Withdrawn);
            if wallet.status() == WalletStatus::ExitRequested && swept {
                attempt(
                    ledger,
                    "keeper",
                    plan.keeper,
                    *address,
                    0,
                    Message::FinalizeWithdrawal,
                );
            }
        }
    }
}

struct UserStep(Arc<Plan>);

impl EpochHook for UserStep {
    fn name(&self) -> &str {
        "user"
    }

    fn on_epoch(&mut self, ledger: &mut Ledger) {
        let plan = &self.0;
        let scenario = &plan.scenario;
        let arr = &plan.arrangement;
        let epoch = ledger.epoch();

        if epoch == 0 && scenario.treasury.escrow_required > 0 {
            let amount = scenario.treasury.escrow_required;
            attempt(
                ledger,
                "operator",
                arr.operator,
                arr.treasury,
                amount,
                Message::PostEscrow,
            );
        }
        for d in scenario.deposits.iter().filter(|d| d.epoch == epoch) {
            attempt(
                ledger,
                &d.holder,
                plan.holder(&d.holder),
                arr.mint,
                d.amount,
                Message::Mint,
            );
        }
        for t in scenario.transfers.iter().filter(|t| t.epoch == epoch) {
            let msg = Message::TransferNft {
                token_id: TokenId(t.token_id),
                to: plan.holder(&t.to),
            };
            attempt(ledger, &t.from, plan.holder(&t.from), arr.mint, 0, msg);
        }

        let phase = arr.treasury(ledger).phase();
        let mint = arr.mint(ledger);
        if phase == Phase::Fundraising && mint.is_full() {
            attempt(
                ledger,
                "keeper",
                plan.keeper,
                arr.treasury,
                0,
                Message::StakeAll,
            );
        } else if phase == Phase::Fundraising
            && !mint.is_aborted()
            && epoch >= mint.config().close_epoch
        {
            attempt(
                ledger,
                "keeper",
                plan.keeper,
                arr.mint,
                0,
                Message::CloseMint,
            );
        }

        for c in scenario.claims.iter().filter(|c| c.epoch == epoch) {
            attempt(
                ledger,
                &c.holder,
                plan.holder(&c.holder),
                arr.treasury,
                0,
                Message::Claim,
            );
        }
        let treasury = arr.treasury(ledger);
        if treasury.state().operator_fees_accrued > 0 {
            attempt(
                ledger,
                "operator",
                arr.operator,
                arr.treasury,
                0,
                Message::ClaimOperatorFees,
            );
        }
        let treasury = arr.treasury(ledger);
        if matches!(treasury.phase(), Phase::Settled | Phase::Aborted)
            && treasury.state().escrow_balance > 0
        {
            attempt(
                ledger,
                "operator",
                arr.operator,
                arr.treasury,
                0,
                Message::WithdrawEscrow,
            );
        }
    }
}

struct IdentityCheck(Arc<Plan>);

impl EpochHook for IdentityCheck {
    fn name(&self) -> &str {
        "identity"
    }

    fn on_epoch(&mut self, ledger: &mut Ledger) {
        let arr = &self.0.arrangement;
        let accounted = arr.treasury(ledger).state().accounted_balance();
        let actual = ledger.balance(arr.treasury);
        if accounted != actual {
            ledger.note_violation(
                "treasury_identity",
                format!("accounted {accounted} != ledger balance {actual}"),
            );
        }
    }
}
