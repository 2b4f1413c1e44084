//! Contract behaviour driven message by message against a bare ledger, with
//! no epoch hooks installed.

use stakeclaim_core::arrangement::{Arrangement, ArrangementConfig};
use stakeclaim_core::beacon::{BeaconParams, ValidatorStatus};
use stakeclaim_core::ledger::{ContractError, Ledger, LedgerError, Message};
use stakeclaim_core::mint::MintError;
use stakeclaim_core::treasury::{Phase, TreasuryConfig, TreasuryError};
use stakeclaim_core::types::{Address, Amount, BasisPoints, TokenId, ValidatorId};
use stakeclaim_core::wallet::{WalletError, WalletStatus};

struct Setup {
    ledger: Ledger,
    arr: Arrangement,
    keeper: Address,
    alice: Address,
    bob: Address,
}

fn setup(fee_bps: u64, escrow: Amount) -> Setup {
    let mut ledger = Ledger::new(BeaconParams {
        stake_requirement: 64,
        reward_per_epoch: 10,
        activation_delay: 2,
        exit_delay: 2,
        sweep_period: 1,
    });
    let operator = ledger.create_account("operator");
    let keeper = ledger.create_account("keeper");
    let alice = ledger.create_account("alice");
    let bob = ledger.create_account("bob");
    let arr = Arrangement::deploy(
        &mut ledger,
        &ArrangementConfig {
            treasury: TreasuryConfig {
                fee_bps: BasisPoints::new(fee_bps).unwrap(),
                expected_reward_per_epoch: 2,
                grace_epochs: 5,
                operator,
                escrow_required: escrow,
                exit_penalty: 20,
            },
            validators: 1,
            min_contribution: 4,
            open_epoch: 0,
            close_epoch: 5,
        },
    );
    ledger.genesis(operator, 100).unwrap();
    ledger.genesis(alice, 100).unwrap();
    ledger.genesis(bob, 100).unwrap();
    Setup {
        ledger,
        arr,
        keeper,
        alice,
        bob,
    }
}

fn reason(err: LedgerError) -> ContractError {
    err.revert_reason()
        .cloned()
        .unwrap_or_else(|| panic!("not a revert: {err}"))
}

fn treasury_err(err: LedgerError) -> TreasuryError {
    match reason(err) {
        ContractError::Treasury(e) => e,
        other => panic!("expected a treasury error, got {other}"),
    }
}

impl Setup {
    fn fund(&mut self) {
        let mint = self.arr.mint;
        self.ledger
            .call(self.alice, mint, 40, Message::Mint)
            .unwrap();
        self.ledger.call(self.bob, mint, 24, Message::Mint).unwrap();
    }

    fn stake(&mut self) {
        self.fund();
        let escrow = self.arr.treasury(&self.ledger).config().escrow_required;
        if escrow > 0 {
            self.ledger
                .call(
                    self.arr.operator,
                    self.arr.treasury,
                    escrow,
                    Message::PostEscrow,
                )
                .unwrap();
        }
        self.ledger
            .call(self.keeper, self.arr.treasury, 0, Message::StakeAll)
            .unwrap();
    }

    /// Pays `amount` into the treasury from the wallet, as a forward would.
    fn reward(&mut self, amount: Amount) -> Result<(), LedgerError> {
        let wallet = self.arr.wallets[0];
        self.ledger.genesis(wallet, amount).unwrap();
        self.ledger
            .call(wallet, self.arr.treasury, amount, Message::ReceiveRewards)
            .map(drop)
    }

    fn claimable(&self, who: Address) -> Amount {
        self.arr.treasury(&self.ledger).claimable(who)
    }

    fn identity_holds(&self) -> bool {
        let t = self.arr.treasury(&self.ledger);
        t.state().accounted_balance() == self.ledger.balance(self.arr.treasury)
    }

    /// Runs the beacon forward to `epoch`, processing transitions each step.
    fn beacon_to(&mut self, epoch: u64) {
        while self.ledger.epoch() < epoch {
            self.ledger.advance_epoch();
            self.ledger.beacon_process_transitions();
        }
    }
}

#[test]
fn mint_enforces_minimum_and_capacity() {
    let mut s = setup(1_000, 50);
    let mint = s.arr.mint;
    let err = s.ledger.call(s.alice, mint, 3, Message::Mint).unwrap_err();
    assert_eq!(
        reason(err),
        MintError::BelowMinimum {
            amount: 3,
            minimum: 4
        }
        .into()
    );
    s.ledger.call(s.alice, mint, 40, Message::Mint).unwrap();
    let err = s.ledger.call(s.bob, mint, 25, Message::Mint).unwrap_err();
    assert_eq!(
        reason(err),
        MintError::ExceedsCapacity {
            amount: 25,
            remaining: 24
        }
        .into()
    );
    assert_eq!(s.ledger.balance(s.bob), 100);
}

#[test]
fn mint_closes_at_close_epoch() {
    let mut s = setup(1_000, 50);
    for _ in 0..5 {
        s.ledger.advance_epoch();
    }
    let err = s
        .ledger
        .call(s.alice, s.arr.mint, 40, Message::Mint)
        .unwrap_err();
    assert_eq!(reason(err), MintError::MintClosed.into());
}

#[test]
fn only_the_owner_moves_a_token() {
    let mut s = setup(1_000, 50);
    s.fund();
    let mint = s.arr.mint;
    let msg = Message::TransferNft {
        token_id: TokenId(0),
        to: s.bob,
    };
    let err = s.ledger.call(s.bob, mint, 0, msg.clone()).unwrap_err();
    assert_eq!(
        reason(err),
        MintError::NotOwner {
            token_id: TokenId(0),
            caller: s.bob
        }
        .into()
    );
    s.ledger.call(s.alice, mint, 0, msg).unwrap();
    assert_eq!(
        s.arr.mint(&s.ledger).token(TokenId(0)).unwrap().owner,
        s.bob
    );
}

#[test]
fn stake_all_needs_full_capital_and_escrow() {
    let mut s = setup(1_000, 50);
    let (mint, treasury) = (s.arr.mint, s.arr.treasury);
    s.ledger.call(s.alice, mint, 40, Message::Mint).unwrap();
    let err = s
        .ledger
        .call(s.keeper, treasury, 0, Message::StakeAll)
        .unwrap_err();
    assert_eq!(
        treasury_err(err),
        TreasuryError::Underfunded {
            capital: 40,
            target: 64
        }
    );

    s.ledger.call(s.bob, mint, 24, Message::Mint).unwrap();
    let err = s
        .ledger
        .call(s.keeper, treasury, 0, Message::StakeAll)
        .unwrap_err();
    assert_eq!(
        treasury_err(err),
        TreasuryError::EscrowMissing {
            posted: 0,
            required: 50
        }
    );

    s.ledger
        .call(s.arr.operator, treasury, 50, Message::PostEscrow)
        .unwrap();
    s.ledger
        .call(s.keeper, treasury, 0, Message::StakeAll)
        .unwrap();
    assert_eq!(s.arr.treasury(&s.ledger).phase(), Phase::Staked);
    assert_eq!(s.arr.wallet(&s.ledger, 0).status(), WalletStatus::Deposited);
    assert_eq!(s.ledger.balance(Address::BEACON), 64);

    let err = s
        .ledger
        .call(s.keeper, treasury, 0, Message::StakeAll)
        .unwrap_err();
    assert_eq!(treasury_err(err), TreasuryError::WrongPhase(Phase::Staked));
}

#[test]
fn reward_is_split_fee_first_then_pro_rata() {
    let mut s = setup(1_000, 50);
    s.stake();
    s.reward(1_000).unwrap();
    let state = s.arr.treasury(&s.ledger).state();
    assert_eq!(state.operator_fees_accrued, 100);
    assert_eq!(s.claimable(s.alice), 562);
    assert_eq!(s.claimable(s.bob), 337);
    assert_eq!(state.dust, 1);
    assert!(s.identity_holds());
}

#[test]
fn rewards_from_strangers_or_of_zero_are_refused() {
    let mut s = setup(1_000, 50);
    s.stake();
    let treasury = s.arr.treasury;
    let err = s
        .ledger
        .call(s.alice, treasury, 10, Message::ReceiveRewards)
        .unwrap_err();
    assert_eq!(treasury_err(err), TreasuryError::UnknownValidator(s.alice));
    let err = s
        .ledger
        .call(s.arr.wallets[0], treasury, 0, Message::ReceiveRewards)
        .unwrap_err();
    assert_eq!(treasury_err(err), TreasuryError::ZeroAmount);
    assert_eq!(s.ledger.balance(s.alice), 60);
}

#[test]
fn claim_pays_once() {
    let mut s = setup(1_000, 50);
    s.stake();
    s.reward(1_000).unwrap();
    let treasury = s.arr.treasury;
    s.ledger.call(s.alice, treasury, 0, Message::Claim).unwrap();
    assert_eq!(s.ledger.balance(s.alice), 60 + 562);
    let err = s
        .ledger
        .call(s.alice, treasury, 0, Message::Claim)
        .unwrap_err();
    assert_eq!(treasury_err(err), TreasuryError::NothingToClaim);
    assert_eq!(s.ledger.balance(s.alice), 60 + 562);
    assert!(s.identity_holds());
}

#[test]
fn operator_fees_go_to_the_operator_only() {
    let mut s = setup(1_000, 50);
    s.stake();
    s.reward(1_000).unwrap();
    let treasury = s.arr.treasury;
    let err = s
        .ledger
        .call(s.alice, treasury, 0, Message::ClaimOperatorFees)
        .unwrap_err();
    assert_eq!(treasury_err(err), TreasuryError::NotOperator(s.alice));
    s.ledger
        .call(s.arr.operator, treasury, 0, Message::ClaimOperatorFees)
        .unwrap();
    assert_eq!(s.ledger.balance(s.arr.operator), 100 - 50 + 100);
}

#[test]
fn zero_fee_leaves_nothing_for_the_operator() {
    let mut s = setup(0, 0);
    s.stake();
    s.reward(640).unwrap();
    assert_eq!(s.claimable(s.alice) + s.claimable(s.bob), 640);
    let err = s
        .ledger
        .call(
            s.arr.operator,
            s.arr.treasury,
            0,
            Message::ClaimOperatorFees,
        )
        .unwrap_err();
    assert_eq!(treasury_err(err), TreasuryError::NothingToClaim);
}

#[test]
fn config_cannot_be_updated() {
    let mut s = setup(1_000, 50);
    let err = s
        .ledger
        .call(
            s.arr.operator,
            s.arr.treasury,
            0,
            Message::UpdateConfig {
                field: "fee_bps".into(),
                value: 0,
            },
        )
        .unwrap_err();
    assert_eq!(treasury_err(err), TreasuryError::ConfigImmutable);
}

#[test]
fn wallet_deposit_only_from_treasury() {
    let mut s = setup(1_000, 50);
    let err = s
        .ledger
        .call(s.alice, s.arr.wallets[0], 64, Message::Deposit)
        .unwrap_err();
    assert_eq!(reason(err), WalletError::WrongCaller(s.alice).into());
}

/// Stakes, activates, and has the operator request an exit on the beacon.
fn exit_observed(escrow: Amount, slash_bps: u64) -> Setup {
    let mut s = setup(1_000, escrow);
    s.stake();
    let wallet = s.arr.wallets[0];
    let id = ValidatorId(0);
    s.beacon_to(3);
    s.ledger
        .call(s.keeper, wallet, 0, Message::ForwardRewards)
        .unwrap();
    assert_eq!(s.arr.wallet(&s.ledger, 0).status(), WalletStatus::Active);
    if slash_bps > 0 {
        s.ledger
            .beacon_slash(id, BasisPoints::new(slash_bps).unwrap())
            .unwrap();
    } else {
        s.ledger.beacon_request_exit(s.arr.operator, id).unwrap();
    }
    s.ledger
        .call(s.keeper, wallet, 0, Message::WatchdogCheck)
        .unwrap();
    assert_eq!(
        s.arr.wallet(&s.ledger, 0).status(),
        WalletStatus::ExitRequested
    );
    s
}

fn sweep_and_finalize(s: &mut Setup) {
    let wallet = s.arr.wallets[0];
    let err = s
        .ledger
        .call(s.keeper, wallet, 0, Message::FinalizeWithdrawal)
        .unwrap_err();
    assert_eq!(reason(err), WalletError::BeaconNotSwept.into());
    s.beacon_to(s.ledger.epoch() + 2);
    s.ledger.beacon_sweep();
    assert_eq!(
        s.ledger.beacon().validator(ValidatorId(0)).unwrap().status,
        ValidatorStatus::Withdrawn
    );
    s.ledger
        .call(s.keeper, wallet, 0, Message::FinalizeWithdrawal)
        .unwrap();
    assert_eq!(s.arr.treasury(&s.ledger).phase(), Phase::Settled);
    assert!(s.identity_holds());
}

#[test]
fn voluntary_exit_returns_principal_without_penalty() {
    let mut s = exit_observed(50, 0);
    sweep_and_finalize(&mut s);
    let state = s.arr.treasury(&s.ledger).state();
    assert_eq!(s.claimable(s.alice), 40);
    assert_eq!(s.claimable(s.bob), 24);
    assert_eq!(state.escrow_used, 0);
    assert_eq!(state.escrow_balance, 50);
}

#[test]
fn slash_covered_by_escrow() {
    let mut s = exit_observed(50, 5_000);
    sweep_and_finalize(&mut s);
    let state = s.arr.treasury(&s.ledger).state();
    assert_eq!(state.escrow_used, 32);
    assert_eq!(s.claimable(s.alice), 40);
    assert_eq!(s.claimable(s.bob), 24);
}

#[test]
fn slash_beyond_escrow_is_a_holder_loss() {
    let mut s = exit_observed(20, 5_000);
    sweep_and_finalize(&mut s);
    // 32 returned + 20 cover = 52 shared 40:24.
    assert_eq!(s.claimable(s.alice), 32);
    assert_eq!(s.claimable(s.bob), 19);
    assert_eq!(s.arr.treasury(&s.ledger).state().dust, 1);
    assert_eq!(s.arr.treasury(&s.ledger).state().escrow_balance, 0);
}
