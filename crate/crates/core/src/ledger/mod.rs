//! Simulated smart-contract chain.
//!
//! The ledger owns balances, deployed contract states, the beacon chain and the
//! event log. Contract calls are dispatched through [`Ledger::call`]; a call
//! tree either commits entirely or is rolled back to the state it started from,
//! including the event log.

pub mod audit;
mod contract;
mod event;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::trace;

pub use contract::{
    BeaconRequest, CallContext, Contract, ContractError, Effect, Message, Outcome, Reply,
};
pub use event::{digest, from_jsonl, payload, to_jsonl, Event, Payload};

use crate::beacon::{BeaconChain, BeaconError, BeaconParams, PerformanceFactor, ValidatorStatus};
use crate::types::{AccountKind, Address, Amount, BasisPoints, Epoch, ValidatorId};

/// Deepest permitted call nesting; the top-level call is depth 1.
pub const MAX_CALL_DEPTH: usize = 8;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("transfer amount must be positive")]
    ZeroAmount,
    #[error("{account} holds {available}, needs {needed}")]
    InsufficientBalance {
        account: Address,
        needed: Amount,
        available: Amount,
    },
    #[error("unknown address {0}")]
    UnknownAddress(Address),
    #[error("no contract at {0}")]
    UnknownContract(Address),
    #[error("{0} is not reserved for a contract")]
    NotAContractAddress(Address),
    #[error("reverted: {0}")]
    Revert(ContractError),
    #[error("call depth {depth} exceeds limit {MAX_CALL_DEPTH}")]
    ReentrancyLimitExceeded { depth: usize },
    #[error("beacon: {0}")]
    Beacon(#[from] BeaconError),
}

impl LedgerError {
    /// The contract-level reason, when this is a revert.
    pub fn revert_reason(&self) -> Option<&ContractError> {
        match self {
            LedgerError::Revert(reason) => Some(reason),
            _ => None,
        }
    }
}

/// An action the ledger refused during an epoch hook. Diagnostic only; not
/// part of chain state.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Rejection {
    pub epoch: Epoch,
    pub actor: String,
    pub action: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct InvariantViolation {
    pub epoch: Epoch,
    pub invariant: String,
    pub detail: String,
}

/// Work run once per epoch, in registration order.
pub trait EpochHook: Send {
    fn name(&self) -> &str;
    fn on_epoch(&mut self, ledger: &mut Ledger);
}

#[derive(Clone, Debug)]
struct Account {
    kind: AccountKind,
    label: String,
    balance: Amount,
}

#[derive(Clone, Debug)]
struct World {
    accounts: BTreeMap<Address, Account>,
    contracts: BTreeMap<Address, Arc<dyn Contract>>,
    beacon: BeaconChain,
    supply: Amount,
    epoch_minted: Amount,
    epoch_burned: Amount,
    supply_at_epoch_start: Amount,
}

pub struct Ledger {
    world: World,
    epoch: Epoch,
    events: Vec<Event>,
    hooks: Vec<Box<dyn EpochHook>>,
    rejections: Vec<Rejection>,
    violations: Vec<InvariantViolation>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("epoch", &self.epoch)
            .field("accounts", &self.world.accounts.len())
            .field("events", &self.events.len())
            .finish()
    }
}

impl Ledger {
    pub fn new(params: BeaconParams) -> Self {
        let mut accounts = BTreeMap::new();
        for (address, label) in [(Address::SYSTEM, "system"), (Address::BEACON, "beacon")] {
            accounts.insert(
                address,
                Account {
                    kind: AccountKind::Contract,
                    label: label.into(),
                    balance: 0,
                },
            );
        }
        Self {
            world: World {
                accounts,
                contracts: BTreeMap::new(),
                beacon: BeaconChain::new(params),
                supply: 0,
                epoch_minted: 0,
                epoch_burned: 0,
                supply_at_epoch_start: 0,
            },
            epoch: 0,
            events: Vec::new(),
            hooks: Vec::new(),
            rejections: Vec::new(),
            violations: Vec::new(),
        }
    }

    /// Copy of all chain state without the registered hooks.
    pub fn fork(&self) -> Ledger {
        Ledger {
            world: self.world.clone(),
            epoch: self.epoch,
            events: self.events.clone(),
            hooks: Vec::new(),
            rejections: self.rejections.clone(),
            violations: self.violations.clone(),
        }
    }

    // ----- accounts -------------------------------------------------------

    fn new_address(&mut self, label: &str, kind: AccountKind) -> Address {
        let next = self
            .world
            .accounts
            .keys()
            .next_back()
            .map_or(0, |a| a.0 + 1);
        let address = Address(next);
        self.world.accounts.insert(
            address,
            Account {
                kind,
                label: label.to_owned(),
                balance: 0,
            },
        );
        address
    }

    pub fn create_account(&mut self, label: &str) -> Address {
        self.new_address(label, AccountKind::ExternallyOwned)
    }

    /// Reserves a contract address so contracts can reference each other
    /// before installation.
    pub fn reserve_contract(&mut self, label: &str) -> Address {
        self.new_address(label, AccountKind::Contract)
    }

    pub fn install(
        &mut self,
        address: Address,
        contract: impl Contract,
    ) -> Result<(), LedgerError> {
        match self.kind(address) {
            Some(AccountKind::Contract)
                if address != Address::SYSTEM && address != Address::BEACON =>
            {
                self.world.contracts.insert(address, Arc::new(contract));
                Ok(())
            }
            Some(_) => Err(LedgerError::NotAContractAddress(address)),
            None => Err(LedgerError::UnknownAddress(address)),
        }
    }

    pub fn deploy(&mut self, label: &str, contract: impl Contract) -> Address {
        let address = self.reserve_contract(label);
        self.install(address, contract)
            .expect("fresh contract address");
        address
    }

    pub fn balance(&self, address: Address) -> Amount {
        self.world.accounts.get(&address).map_or(0, |a| a.balance)
    }

    pub fn kind(&self, address: Address) -> Option<AccountKind> {
        self.world.accounts.get(&address).map(|a| a.kind)
    }

    pub fn label(&self, address: Address) -> Option<&str> {
        self.world.accounts.get(&address).map(|a| a.label.as_str())
    }

    pub fn addresses(&self) -> impl Iterator<Item = Address> + '_ {
        self.world.accounts.keys().copied()
    }

    pub fn contract<T: Contract>(&self, address: Address) -> Option<&T> {
        self.world
            .contracts
            .get(&address)
            .and_then(|c| c.as_any().downcast_ref::<T>())
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn beacon(&self) -> &BeaconChain {
        &self.world.beacon
    }

    /// Units in existence: everything issued minus everything burned.
    pub fn total_supply(&self) -> Amount {
        self.world.supply
    }

    pub fn sum_of_balances(&self) -> Amount {
        self.world.accounts.values().map(|a| a.balance).sum()
    }

    pub fn rejections(&self) -> &[Rejection] {
        &self.rejections
    }

    pub fn violations(&self) -> &[InvariantViolation] {
        &self.violations
    }

    pub fn note_rejection(&mut self, actor: &str, action: &str, error: &LedgerError) {
        self.rejections.push(Rejection {
            epoch: self.epoch,
            actor: actor.to_owned(),
            action: action.to_owned(),
            error: error.to_string(),
        });
    }

    pub fn note_violation(&mut self, invariant: &str, detail: String) {
        self.violations.push(InvariantViolation {
            epoch: self.epoch,
            invariant: invariant.to_owned(),
            detail,
        });
    }

    /// Hex SHA-256 over every piece of chain state, for bit-identity checks.
    pub fn state_fingerprint(&self) -> String {
        let rendered = format!("{:?}|{}|{:?}", self.world, self.epoch, self.events);
        hex::encode(Sha256::digest(rendered.as_bytes()))
    }

    // ----- events and balances -------------------------------------------

    pub fn emit(&mut self, emitter: Address, tag: &str, payload: Payload) {
        let seq = self.events.len() as u64;
        self.events.push(Event {
            epoch: self.epoch,
            seq,
            emitter,
            tag: tag.to_owned(),
            payload,
        });
    }

    fn emit_json(&mut self, emitter: Address, tag: &str, value: serde_json::Value) {
        self.emit(emitter, tag, payload(value));
    }

    fn account_mut(&mut self, address: Address) -> Result<&mut Account, LedgerError> {
        self.world
            .accounts
            .get_mut(&address)
            .ok_or(LedgerError::UnknownAddress(address))
    }

    fn move_funds(
        &mut self,
        from: Address,
        to: Address,
        amount: Amount,
    ) -> Result<(), LedgerError> {
        if amount == 0 {
            return Ok(());
        }
        if !self.world.accounts.contains_key(&to) {
            return Err(LedgerError::UnknownAddress(to));
        }
        let source = self.account_mut(from)?;
        if source.balance < amount {
            return Err(LedgerError::InsufficientBalance {
                account: from,
                needed: amount,
                available: source.balance,
            });
        }
        source.balance -= amount;
        self.account_mut(to)?.balance += amount;
        self.emit_json(
            from,
            "Transfer",
            json!({"from": from, "to": to, "amount": amount}),
        );
        Ok(())
    }

    fn issue(&mut self, to: Address, amount: Amount, tag: &str) -> Result<(), LedgerError> {
        self.account_mut(to)?.balance += amount;
        self.world.supply += amount;
        self.world.epoch_minted += amount;
        self.emit_json(Address::SYSTEM, tag, json!({"to": to, "amount": amount}));
        Ok(())
    }

    fn burn(&mut self, from: Address, amount: Amount) -> Result<(), LedgerError> {
        let account = self.account_mut(from)?;
        if account.balance < amount {
            return Err(LedgerError::InsufficientBalance {
                account: from,
                needed: amount,
                available: account.balance,
            });
        }
        account.balance -= amount;
        self.world.supply -= amount;
        self.world.epoch_burned += amount;
        self.emit_json(
            Address::SYSTEM,
            "Burned",
            json!({"from": from, "amount": amount}),
        );
        Ok(())
    }

    /// Initial allocation. Counted as issuance in the current epoch.
    pub fn genesis(&mut self, to: Address, amount: Amount) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        self.issue(to, amount, "Genesis")
    }

    pub fn transfer(
        &mut self,
        from: Address,
        to: Address,
        amount: Amount,
    ) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        self.move_funds(from, to, amount)
    }

    // ----- contract dispatch ----------------------------------------------

    /// Executes `msg` on `target`, carrying `value` from `caller`. The whole
    /// call tree is rolled back on any error.
    pub fn call(
        &mut self,
        caller: Address,
        target: Address,
        value: Amount,
        msg: Message,
    ) -> Result<Reply, LedgerError> {
        let world = self.world.clone();
        let event_count = self.events.len();
        let result = self.dispatch(caller, target, value, msg, 1);
        if result.is_err() {
            self.world = world;
            self.events.truncate(event_count);
        }
        result
    }

    fn dispatch(
        &mut self,
        caller: Address,
        target: Address,
        value: Amount,
        msg: Message,
        depth: usize,
    ) -> Result<Reply, LedgerError> {
        if depth > MAX_CALL_DEPTH {
            return Err(LedgerError::ReentrancyLimitExceeded { depth });
        }
        if !self.world.accounts.contains_key(&caller) {
            return Err(LedgerError::UnknownAddress(caller));
        }
        let contract = self
            .world
            .contracts
            .get(&target)
            .cloned()
            .ok_or(LedgerError::UnknownContract(target))?;
        trace!(%caller, %target, method = msg.method(), value, depth, "call");
        self.emit_json(
            caller,
            "Call",
            json!({"target": target, "method": msg.method(), "value": value, "depth": depth}),
        );
        self.move_funds(caller, target, value)?;

        let ctx = CallContext {
            caller,
            this: target,
            value,
            epoch: self.epoch,
            depth,
            ledger: self,
        };
        let outcome = contract.handle(&ctx, &msg).map_err(LedgerError::Revert)?;
        if let Some(state) = outcome.state {
            self.world.contracts.insert(target, state);
        }
        for effect in outcome.effects {
            self.apply(target, effect, depth)?;
        }
        Ok(outcome.reply)
    }

    fn apply(&mut self, this: Address, effect: Effect, depth: usize) -> Result<(), LedgerError> {
        match effect {
            Effect::Transfer { to, amount } => self.move_funds(this, to, amount),
            Effect::Call { target, value, msg } => self
                .dispatch(this, target, value, msg, depth + 1)
                .map(|_| ()),
            Effect::Emit { tag, payload } => {
                self.emit(this, tag, payload);
                Ok(())
            }
            Effect::Beacon(request) => self
                .beacon_request(this, request)
                .map_err(|e| LedgerError::Revert(ContractError::Beacon(e))),
        }
    }

    fn beacon_request(&mut self, from: Address, request: BeaconRequest) -> Result<(), BeaconError> {
        match request {
            BeaconRequest::Deposit {
                stake,
                withdrawal_address,
                signer,
            } => {
                if self.balance(from) < stake {
                    return Err(BeaconError::WrongAmount {
                        got: self.balance(from),
                        required: stake,
                    });
                }
                let id = self.world.beacon.submit_deposit(
                    self.epoch,
                    stake,
                    withdrawal_address,
                    signer,
                )?;
                self.move_funds(from, Address::BEACON, stake)
                    .expect("balance checked above");
                let activation = self.world.beacon.validator(id).map(|v| v.activation_epoch);
                self.emit_json(
                    Address::BEACON,
                    "DepositAccepted",
                    json!({
                        "validator": id,
                        "from": from,
                        "withdrawal_address": withdrawal_address,
                        "stake": stake,
                        "activation_epoch": activation,
                    }),
                );
                Ok(())
            }
            BeaconRequest::RequestExit { id } => self.beacon_request_exit(from, id),
            BeaconRequest::SetWithdrawalAddress { id, new } => {
                self.world.beacon.set_withdrawal_address(id, new)
            }
        }
    }

    // ----- consensus layer ------------------------------------------------

    /// Issues epoch rewards to active validators. The only issuance path after
    /// genesis.
    pub fn beacon_accrue(
        &mut self,
        performance: &BTreeMap<ValidatorId, PerformanceFactor>,
    ) -> Result<Amount, LedgerError> {
        let credited = self.world.beacon.accrue(performance)?;
        let total: Amount = credited.iter().map(|(_, a)| a).sum();
        let credits: Vec<_> = credited.iter().map(|(id, a)| json!([id, a])).collect();
        self.emit_json(
            Address::BEACON,
            "EpochAccrual",
            json!({"total": total, "credits": credits}),
        );
        if total > 0 {
            self.issue(Address::BEACON, total, "Issued")?;
        }
        Ok(total)
    }

    pub fn beacon_slash(
        &mut self,
        id: ValidatorId,
        fraction: BasisPoints,
    ) -> Result<Amount, LedgerError> {
        let burned = self.world.beacon.slash(self.epoch, id, fraction)?;
        let balance = self.world.beacon.validator(id).map_or(0, |v| v.balance);
        self.emit_json(
            Address::BEACON,
            "Slashed",
            json!({"validator": id, "fraction_bps": fraction.get(), "burned": burned, "balance": balance}),
        );
        if burned > 0 {
            self.burn(Address::BEACON, burned)?;
        }
        Ok(burned)
    }

    pub fn beacon_process_transitions(&mut self) -> Vec<(ValidatorId, ValidatorStatus)> {
        let changed = self.world.beacon.process_transitions(self.epoch);
        for (id, status) in &changed {
            let tag = match status {
                ValidatorStatus::Active => "Activated",
                _ => "Withdrawable",
            };
            self.emit_json(Address::BEACON, tag, json!({"validator": id}));
        }
        changed
    }

    /// Pays reward excess and exited balances to withdrawal addresses.
    pub fn beacon_sweep(&mut self) -> Amount {
        let items = self.world.beacon.sweep(self.epoch);
        let mut total = 0;
        for item in items {
            self.move_funds(Address::BEACON, item.to, item.amount)
                .expect("beacon account mirrors validator balances");
            total += item.amount;
            self.emit_json(
                Address::BEACON,
                "Swept",
                json!({"validator": item.id, "to": item.to, "amount": item.amount, "full": item.full}),
            );
            if item.full {
                self.emit_json(
                    Address::BEACON,
                    "Withdrawn",
                    json!({"validator": item.id, "amount": item.amount}),
                );
            }
        }
        total
    }

    /// Protocol-level exit request, from the withdrawal address or the holder
    /// of the signing capability.
    pub fn beacon_request_exit(
        &mut self,
        caller: Address,
        id: ValidatorId,
    ) -> Result<(), BeaconError> {
        self.world.beacon.request_exit(self.epoch, id, caller)?;
        self.emit_json(
            Address::BEACON,
            "ExitRequested",
            json!({"validator": id, "by": caller}),
        );
        Ok(())
    }

    /// Always fails; exposed so the immutability guarantee is testable.
    pub fn beacon_set_withdrawal_address(
        &mut self,
        _caller: Address,
        id: ValidatorId,
        new: Address,
    ) -> Result<(), BeaconError> {
        self.world.beacon.set_withdrawal_address(id, new)
    }

    // ----- time -----------------------------------------------------------

    pub fn register_hook(&mut self, hook: Box<dyn EpochHook>) {
        self.hooks.push(hook);
    }

    /// Runs the hooks for the current epoch and closes it.
    pub fn run_epoch(&mut self) {
        let mut hooks = std::mem::take(&mut self.hooks);
        for hook in hooks.iter_mut() {
            trace!(epoch = self.epoch, hook = hook.name(), "hook");
            hook.on_epoch(self);
        }
        hooks.append(&mut self.hooks);
        self.hooks = hooks;
        self.close_epoch();
    }

    pub fn advance_epoch(&mut self) -> Epoch {
        self.epoch += 1;
        self.run_epoch();
        self.epoch
    }

    /// Records the supply checkpoint for the epoch and verifies it against
    /// the actual balances.
    fn close_epoch(&mut self) {
        let observed = self.sum_of_balances();
        let expected =
            self.world.supply_at_epoch_start + self.world.epoch_minted - self.world.epoch_burned;
        let (minted, burned) = (self.world.epoch_minted, self.world.epoch_burned);
        self.emit_json(
            Address::SYSTEM,
            "EpochClosed",
            json!({"supply": observed, "minted": minted, "burned": burned}),
        );
        if observed != expected || observed != self.world.supply {
            self.note_violation(
                "conservation",
                format!("balances sum to {observed}, expected {expected}"),
            );
        }
        let beacon_account = self.balance(Address::BEACON);
        let beacon_total = self.world.beacon.total_balance();
        if beacon_account != beacon_total {
            self.note_violation(
                "beacon_mirror",
                format!("beacon account {beacon_account} != validator balances {beacon_total}"),
            );
        }
        self.world.supply_at_epoch_start = observed;
        self.world.epoch_minted = 0;
        self.world.epoch_burned = 0;
    }
}
