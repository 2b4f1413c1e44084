//! Wiring: deploys one mint, one treasury and `m` wallets that reference
//! each other.

use crate::ledger::Ledger;
use crate::mint::{MintConfig, MintContract};
use crate::treasury::{TreasuryConfig, TreasuryContract};
use crate::types::{Address, Amount, Epoch};
use crate::wallet::{ValidatorWallet, WalletConfig};

#[derive(Clone, Debug)]
pub struct ArrangementConfig {
    pub treasury: TreasuryConfig,
    pub validators: usize,
    pub min_contribution: Amount,
    pub open_epoch: Epoch,
    pub close_epoch: Epoch,
}

/// Addresses of a deployed arrangement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arrangement {
    pub mint: Address,
    pub treasury: Address,
    pub wallets: Vec<Address>,
    pub operator: Address,
}

impl Arrangement {
    pub fn deploy(ledger: &mut Ledger, config: &ArrangementConfig) -> Arrangement {
        let stake = ledger.beacon().params().stake_requirement;
        let mint = ledger.reserve_contract("mint");
        let treasury = ledger.reserve_contract("treasury");
        let wallets: Vec<_> = (0..config.validators)
            .map(|i| ledger.reserve_contract(&format!("wallet-{i}")))
            .collect();
        let operator = config.treasury.operator;

        let mint_config = MintConfig {
            treasury,
            min_contribution: config.min_contribution,
            target_total: stake * config.validators as Amount,
            open_epoch: config.open_epoch,
            close_epoch: config.close_epoch,
        };
        ledger
            .install(mint, MintContract::new(mint_config))
            .expect("reserved");
        ledger
            .install(
                treasury,
                TreasuryContract::new(config.treasury.clone(), mint, wallets.clone(), stake),
            )
            .expect("reserved");
        for (index, wallet) in wallets.iter().enumerate() {
            let wallet_config = WalletConfig {
                treasury,
                operator,
                index,
                stake_requirement: stake,
                expected_reward_per_epoch: config.treasury.expected_reward_per_epoch,
                grace_epochs: config.treasury.grace_epochs,
            };
            ledger
                .install(*wallet, ValidatorWallet::new(wallet_config))
                .expect("reserved");
        }
        Arrangement {
            mint,
            treasury,
            wallets,
            operator,
        }
    }

    pub fn mint<'l>(&self, ledger: &'l Ledger) -> &'l MintContract {
        ledger.contract(self.mint).expect("mint deployed")
    }

    pub fn treasury<'l>(&self, ledger: &'l Ledger) -> &'l TreasuryContract {
        ledger.contract(self.treasury).expect("treasury deployed")
    }

    pub fn wallet<'l>(&self, ledger: &'l Ledger, index: usize) -> &'l ValidatorWallet {
        ledger
            .contract(self.wallets[index])
            .expect("wallet deployed")
    }
}
