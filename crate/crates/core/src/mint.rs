//! NFT mint: collects depositor capital, forwards it to the treasury and issues
//! one token per contribution.

use std::any::Any;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ledger::{CallContext, Contract, ContractError, Message, Outcome, Reply};
use crate::types::{Address, Amount, Epoch, TokenId};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum MintError {
    #[error("mint is closed")]
    MintClosed,
    #[error("contribution {amount} below minimum {minimum}")]
    BelowMinimum { amount: Amount, minimum: Amount },
    #[error("contribution {amount} exceeds remaining capacity {remaining}")]
    ExceedsCapacity { amount: Amount, remaining: Amount },
    #[error("{caller} does not own {token_id}")]
    NotOwner { token_id: TokenId, caller: Address },
    #[error("{0} does not exist")]
    UnknownToken(TokenId),
    #[error("mint is still open until epoch {0}")]
    StillOpen(Epoch),
    #[error("mint filled its target; nothing to abort")]
    NotUnderfilled,
}

/// Immutable after deployment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MintConfig {
    pub treasury: Address,
    pub min_contribution: Amount,
    pub target_total: Amount,
    pub open_epoch: Epoch,
    pub close_epoch: Epoch,
}

impl MintConfig {
    pub fn violations(&self, stake_requirement: Amount) -> Vec<String> {
        let mut out = Vec::new();
        if self.min_contribution == 0 {
            out.push("mint.min_contribution must be positive".to_owned());
        }
        if self.open_epoch >= self.close_epoch {
            out.push(format!(
                "mint.open_epoch {} must precede close_epoch {}",
                self.open_epoch, self.close_epoch
            ));
        }
        if stake_requirement == 0
            || !self.target_total.is_multiple_of(stake_requirement)
            || self.target_total == 0
        {
            out.push(format!(
                "mint target {} is not a positive multiple of stake requirement {stake_requirement}",
                self.target_total
            ));
        }
        out
    }
}

/// One minted share. `capital` is the holder's contribution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NftRecord {
    pub token_id: TokenId,
    pub owner: Address,
    pub capital: Amount,
    pub minted_at: Epoch,
}

#[derive(Clone, Debug)]
pub struct MintContract {
    config: MintConfig,
    tokens: BTreeMap<TokenId, NftRecord>,
    minted_total: Amount,
    aborted: bool,
}

impl MintContract {
    pub fn new(config: MintConfig) -> Self {
        Self {
            config,
            tokens: BTreeMap::new(),
            minted_total: 0,
            aborted: false,
        }
    }

    pub fn config(&self) -> &MintConfig {
        &self.config
    }

    pub fn tokens(&self) -> impl Iterator<Item = &NftRecord> {
        self.tokens.values()
    }

    pub fn token(&self, id: TokenId) -> Option<&NftRecord> {
        self.tokens.get(&id)
    }

    pub fn minted_total(&self) -> Amount {
        self.minted_total
    }

    pub fn is_full(&self) -> bool {
        self.minted_total == self.config.target_total
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    fn mint(&self, ctx: &CallContext<'_>) -> Result<Outcome, MintError> {
        let amount = ctx.value;
        let open = self.config.open_epoch <= ctx.epoch && ctx.epoch < self.config.close_epoch;
        if self.aborted || !open {
            return Err(MintError::MintClosed);
        }
        if amount < self.config.min_contribution {
            return Err(MintError::BelowMinimum {
                amount,
                minimum: self.config.min_contribution,
            });
        }
        let remaining = self.config.target_total - self.minted_total;
        if amount > remaining {
            return Err(MintError::ExceedsCapacity { amount, remaining });
        }
        let record = NftRecord {
            token_id: TokenId(self.tokens.len() as u64),
            owner: ctx.caller,
            capital: amount,
            minted_at: ctx.epoch,
        };
        let mut next = self.clone();
        next.minted_total += amount;
        next.tokens.insert(record.token_id, record.clone());
        Ok(Outcome::new(Reply::Token(record.clone()))
            .with_state(next)
            .emit(
                "Mint",
                json!({"token_id": record.token_id, "owner": record.owner, "capital": amount}),
            )
            .call(
                self.config.treasury,
                amount,
                Message::RegisterNft { record },
            ))
    }

    fn transfer(
        &self,
        ctx: &CallContext<'_>,
        token_id: TokenId,
        to: Address,
    ) -> Result<Outcome, MintError> {
        let record = self
            .tokens
            .get(&token_id)
            .ok_or(MintError::UnknownToken(token_id))?;
        if record.owner != ctx.caller {
            return Err(MintError::NotOwner {
                token_id,
                caller: ctx.caller,
            });
        }
        if to == ctx.caller {
            return Ok(Outcome::new(Reply::None));
        }
        let mut next = self.clone();
        next.tokens.get_mut(&token_id).expect("checked").owner = to;
        Ok(Outcome::new(Reply::None)
            .with_state(next)
            .emit(
                "TransferNft",
                json!({"token_id": token_id, "from": ctx.caller, "to": to}),
            )
            .call(
                self.config.treasury,
                0,
                Message::SetOwner {
                    token_id,
                    owner: to,
                },
            ))
    }

    fn close(&self, ctx: &CallContext<'_>) -> Result<Outcome, MintError> {
        if self.aborted {
            return Err(MintError::MintClosed);
        }
        if ctx.epoch < self.config.close_epoch {
            return Err(MintError::StillOpen(self.config.close_epoch));
        }
        if self.is_full() {
            return Err(MintError::NotUnderfilled);
        }
        let mut next = self.clone();
        next.aborted = true;
        Ok(Outcome::new(Reply::None)
            .with_state(next)
            .emit(
                "MintAborted",
                json!({"minted_total": self.minted_total, "target_total": self.config.target_total}),
            )
            .call(self.config.treasury, 0, Message::AbortArrangement))
    }
}

impl Contract for MintContract {
    fn handle(&self, ctx: &CallContext<'_>, msg: &Message) -> Result<Outcome, ContractError> {
        let outcome = match msg {
            Message::Mint => self.mint(ctx)?,
            Message::TransferNft { token_id, to } => self.transfer(ctx, *token_id, *to)?,
            Message::CloseMint => self.close(ctx)?,
            other => return Err(ContractError::UnsupportedMethod(other.method().to_owned())),
        };
        Ok(outcome)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
