//! Contract interface: handlers are pure functions of (state, message, epoch)
//! that return a replacement state plus effects for the ledger to apply.

use std::any::Any;
use std::fmt::Debug;
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use super::event::Payload;
use super::Ledger;
use crate::beacon::{BeaconChain, BeaconError};
use crate::mint::{MintError, NftRecord};
use crate::treasury::TreasuryError;
use crate::types::{AccountKind, Address, Amount, Epoch, TokenId, ValidatorId};
use crate::wallet::{WalletError, WatchdogDecision};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("mint: {0}")]
    Mint(#[from] MintError),
    #[error("treasury: {0}")]
    Treasury(#[from] TreasuryError),
    #[error("wallet: {0}")]
    Wallet(#[from] WalletError),
    #[error("beacon: {0}")]
    Beacon(#[from] BeaconError),
    #[error("method {0} not supported")]
    UnsupportedMethod(String),
    #[error("{0}")]
    Custom(String),
}

/// Every message understood by the bundled contracts. Value travels alongside
/// the message, never inside it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    // mint
    Mint,
    TransferNft {
        token_id: TokenId,
        to: Address,
    },
    CloseMint,
    // treasury
    RegisterNft {
        record: NftRecord,
    },
    SetOwner {
        token_id: TokenId,
        owner: Address,
    },
    AbortArrangement,
    PostEscrow,
    WithdrawEscrow,
    StakeAll,
    ReceiveRewards,
    NotifyExit {
        validator_index: usize,
    },
    SettleExit {
        validator_index: usize,
        shortfall: Amount,
        penalize: bool,
    },
    Claim,
    ClaimOperatorFees,
    UpdateConfig {
        field: String,
        value: Amount,
    },
    // wallet
    Deposit,
    ForwardRewards,
    WatchdogCheck,
    FinalizeWithdrawal,
    /// Free-form message for contracts outside this crate.
    Raw {
        method: String,
        args: Vec<u64>,
    },
}

impl Message {
    pub fn method(&self) -> &str {
        match self {
            Message::Mint => "mint",
            Message::TransferNft { .. } => "transfer_nft",
            Message::CloseMint => "close_mint",
            Message::RegisterNft { .. } => "register_nft",
            Message::SetOwner { .. } => "set_owner",
            Message::AbortArrangement => "abort",
            Message::PostEscrow => "post_escrow",
            Message::WithdrawEscrow => "withdraw_escrow",
            Message::StakeAll => "stake_all",
            Message::ReceiveRewards => "receive_rewards",
            Message::NotifyExit { .. } => "notify_exit",
            Message::SettleExit { .. } => "settle_exit",
            Message::Claim => "claim",
            Message::ClaimOperatorFees => "claim_operator_fees",
            Message::UpdateConfig { .. } => "update_config",
            Message::Deposit => "deposit",
            Message::ForwardRewards => "forward_rewards",
            Message::WatchdogCheck => "watchdog_check",
            Message::FinalizeWithdrawal => "finalize_withdrawal",
            Message::Raw { method, .. } => method,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reply {
    None,
    Amount(Amount),
    Token(NftRecord),
    Validator(ValidatorId),
    Watchdog(WatchdogDecision),
    Withdrawal { returned: Amount, shortfall: Amount },
}

/// Requests a contract may make of the consensus layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BeaconRequest {
    /// Moves `stake` from the calling contract into a new validator.
    Deposit {
        stake: Amount,
        withdrawal_address: Address,
        signer: Address,
    },
    RequestExit {
        id: ValidatorId,
    },
    SetWithdrawalAddress {
        id: ValidatorId,
        new: Address,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Effect {
    /// Value from the executing contract's balance.
    Transfer {
        to: Address,
        amount: Amount,
    },
    Call {
        target: Address,
        value: Amount,
        msg: Message,
    },
    Emit {
        tag: &'static str,
        payload: Payload,
    },
    Beacon(BeaconRequest),
}

/// Result of a handler. Effects are applied in order after `state` is
/// installed, so re-entrant calls observe the new state.
#[derive(Debug)]
pub struct Outcome {
    pub state: Option<Arc<dyn Contract>>,
    pub effects: Vec<Effect>,
    pub reply: Reply,
}

impl Outcome {
    pub fn new(reply: Reply) -> Self {
        Self {
            state: None,
            effects: Vec::new(),
            reply,
        }
    }

    pub fn with_state(mut self, state: impl Contract) -> Self {
        self.state = Some(Arc::new(state));
        self
    }

    pub fn transfer(mut self, to: Address, amount: Amount) -> Self {
        self.effects.push(Effect::Transfer { to, amount });
        self
    }

    pub fn call(mut self, target: Address, value: Amount, msg: Message) -> Self {
        self.effects.push(Effect::Call { target, value, msg });
        self
    }

    pub fn emit(mut self, tag: &'static str, payload: Value) -> Self {
        self.effects.push(Effect::Emit {
            tag,
            payload: super::event::payload(payload),
        });
        self
    }

    pub fn beacon(mut self, request: BeaconRequest) -> Self {
        self.effects.push(Effect::Beacon(request));
        self
    }
}

/// Read-only view handed to a handler.
pub struct CallContext<'a> {
    pub caller: Address,
    pub this: Address,
    pub value: Amount,
    pub epoch: Epoch,
    pub depth: usize,
    pub(super) ledger: &'a Ledger,
}

impl CallContext<'_> {
    /// Balance of the executing contract, including `value`.
    pub fn balance(&self) -> Amount {
        self.ledger.balance(self.this)
    }

    pub fn balance_of(&self, address: Address) -> Amount {
        self.ledger.balance(address)
    }

    pub fn kind_of(&self, address: Address) -> Option<AccountKind> {
        self.ledger.kind(address)
    }

    pub fn beacon(&self) -> &BeaconChain {
        self.ledger.beacon()
    }
}

pub trait Contract: Any + Debug + Send + Sync {
    fn handle(&self, ctx: &CallContext<'_>, msg: &Message) -> Result<Outcome, ContractError>;

    fn as_any(&self) -> &dyn Any;
}
