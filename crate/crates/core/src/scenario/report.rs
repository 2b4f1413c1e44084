//! Run summary and its JSON / CSV renderings.

use serde::Serialize;

use super::engine::Plan;
use crate::ledger::audit::replay_conservation;
use crate::ledger::{digest, InvariantViolation, Ledger, Rejection};
use crate::treasury::Phase;
use crate::types::{Address, Amount, Epoch, ValidatorId};
use crate::wallet::ExitCause;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HolderReport {
    pub holder: String,
    pub address: Address,
    /// Capital of the tokens the holder owns at the end of the run.
    pub capital: Amount,
    pub reward_credit: Amount,
    pub settlement_credit: Amount,
    pub claimed_total: Amount,
    /// Credited but not yet claimed.
    pub final_credit: Amount,
    /// Capital not returned. Zero until the arrangement has settled.
    pub realized_loss: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OperatorReport {
    pub address: Address,
    pub fees_paid: Amount,
    pub fees_unclaimed: Amount,
    pub escrow_held: Amount,
    pub escrow_used: Amount,
    pub escrow_returned: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExitReport {
    pub epoch: Epoch,
    pub cause: ExitCause,
    /// Set once the exit has been settled.
    pub shortfall: Option<Amount>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidatorReport {
    pub index: usize,
    pub wallet: Address,
    pub validator_id: Option<ValidatorId>,
    /// Cumulative rewards received by the treasury from this validator.
    pub rewards_received: Amount,
    pub receipts: u64,
    pub exit: Option<ExitReport>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConservationReport {
    /// No violation was recorded while the run was live.
    pub live: bool,
    /// The event-log replay agrees with every checkpoint and final balance.
    pub replay: bool,
    pub epochs_checked: u64,
    pub total_minted: Amount,
    pub total_burned: Amount,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub horizon: Epoch,
    pub phase: Phase,
    pub holders: Vec<HolderReport>,
    pub operator: OperatorReport,
    pub validators: Vec<ValidatorReport>,
    pub receipts_total: Amount,
    pub receipt_count: u64,
    pub dust: Amount,
    pub conservation: ConservationReport,
    pub rejections: Vec<Rejection>,
    pub violations: Vec<InvariantViolation>,
    pub event_count: u64,
    pub event_digest: String,
}

impl RunReport {
    /// True when nothing went wrong that the run should fail on.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.conservation.live && self.conservation.replay
    }

    pub fn holder(&self, name: &str) -> Option<&HolderReport> {
        self.holders.iter().find(|h| h.holder == name)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "holder_id",
                "capital",
                "claimed_total",
                "final_credit",
                "realized_loss",
            ])
            .expect("in-memory write");
        for h in &self.holders {
            writer
                .write_record([
                    h.holder.clone(),
                    h.capital.to_string(),
                    h.claimed_total.to_string(),
                    h.final_credit.to_string(),
                    h.realized_loss.to_string(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }
}

pub(super) fn build(ledger: &Ledger, plan: &Plan) -> RunReport {
    let arr = &plan.arrangement;
    let treasury = arr.treasury(ledger);
    let state = treasury.state();
    let phase = treasury.phase();
    let settled = matches!(phase, Phase::Settled | Phase::Aborted);
    let get = |map: &std::collections::BTreeMap<Address, Amount>, a: Address| {
        map.get(&a).copied().unwrap_or(0)
    };

    let holders = plan
        .holders
        .iter()
        .map(|(name, &address)| {
            let capital: Amount = arr
                .mint(ledger)
                .tokens()
                .filter(|t| t.owner == address)
                .map(|t| t.capital)
                .sum();
            let settlement_credit = get(&state.settlement_credits, address);
            HolderReport {
                holder: name.clone(),
                address,
                capital,
                reward_credit: get(&state.reward_credits, address),
                settlement_credit,
                claimed_total: get(&state.claimed, address),
                final_credit: get(&state.claimable, address),
                realized_loss: if settled {
                    capital.saturating_sub(settlement_credit)
                } else {
                    0
                },
            }
        })
        .collect();

    let shortfalls: Vec<(u64, Amount)> = ledger
        .events()
        .iter()
        .filter(|e| e.tag == "ExitSettled" && e.emitter == arr.treasury)
        .filter_map(|e| Some((e.get_u64("validator")?, e.get_u64("shortfall")?)))
        .collect();
    let validators = arr
        .wallets
        .iter()
        .enumerate()
        .map(|(j, &address)| {
            let wallet = arr.wallet(ledger, j);
            ValidatorReport {
                index: j,
                wallet: address,
                validator_id: wallet.validator_id(),
                rewards_received: state.rewards_by_validator[j],
                receipts: state.receipts_by_validator[j],
                exit: wallet.exit().map(|(epoch, cause)| ExitReport {
                    epoch,
                    cause,
                    shortfall: shortfalls
                        .iter()
                        .find(|(v, _)| *v == j as u64)
                        .map(|(_, s)| *s),
                }),
            }
        })
        .collect();

    let audit = replay_conservation(ledger.events());
    let mut failures = audit.failures.clone();
    for address in ledger.addresses() {
        let replayed = audit.balances.get(&address).copied().unwrap_or(0);
        if replayed != ledger.balance(address) {
            failures.push(format!(
                "{address}: replayed balance {replayed} != ledger {}",
                ledger.balance(address)
            ));
        }
    }
    let live = !ledger
        .violations()
        .iter()
        .any(|v| v.invariant == "conservation" || v.invariant == "beacon_mirror");

    RunReport {
        seed: plan.scenario.seed,
        horizon: plan.scenario.horizon,
        phase,
        holders,
        operator: OperatorReport {
            address: arr.operator,
            fees_paid: state.operator_fees_paid,
            fees_unclaimed: state.operator_fees_accrued,
            escrow_held: state.escrow_balance,
            escrow_used: state.escrow_used,
            escrow_returned: state.escrow_returned,
        },
        validators,
        receipts_total: state.rewards_by_validator.iter().sum(),
        receipt_count: state.receipt_count(),
        dust: state.dust,
        conservation: ConservationReport {
            live,
            replay: failures.is_empty(),
            epochs_checked: audit.epochs_checked,
            total_minted: audit.total_minted,
            total_burned: audit.total_burned,
            failures,
        },
        rejections: ledger.rejections().to_vec(),
        violations: ledger.violations().to_vec(),
        event_count: ledger.events().len() as u64,
        event_digest: digest(ledger.events()),
    }
}
