//! Independent oracles and scenario generators shared by the integration
//! tests. Nothing here calls into the treasury's accounting code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num::{BigInt, BigRational, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stakeclaim_core::beacon::BeaconParams;
use stakeclaim_core::ledger::Event;
use stakeclaim_core::scenario::{
    ClaimSpec, DepositSpec, MintSection, Scenario, ScheduleEntry, SlashSpec, TransferSpec,
    TreasurySection,
};
use stakeclaim_core::types::Address;

/// Accounting-relevant facts pulled from an event log, in log order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Flow {
    Minted {
        token: u64,
        owner: Address,
        capital: u64,
    },
    Moved {
        token: u64,
        to: Address,
    },
    Receipt {
        amount: u64,
    },
    Settlement {
        amount: u64,
    },
    Refund,
}

pub fn flows(events: &[Event]) -> Vec<Flow> {
    events
        .iter()
        .filter_map(|e| {
            let u = |k: &str| {
                e.get_u64(k)
                    .unwrap_or_else(|| panic!("{} lacks {k}", e.tag))
            };
            match e.tag.as_str() {
                "Mint" => Some(Flow::Minted {
                    token: u("token_id"),
                    owner: Address(u("owner") as u32),
                    capital: u("capital"),
                }),
                "TransferNft" => Some(Flow::Moved {
                    token: u("token_id"),
                    to: Address(u("to") as u32),
                }),
                "RewardReceived" => Some(Flow::Receipt {
                    amount: u("amount"),
                }),
                "ExitSettled" => Some(Flow::Settlement {
                    amount: u("returned") + u("escrow_cover") + u("penalty"),
                }),
                "MintAborted" => Some(Flow::Refund),
                _ => None,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IntegerBooks {
    pub reward: BTreeMap<Address, u64>,
    pub settlement: BTreeMap<Address, u64>,
    pub fees: u64,
    pub dust: u64,
    pub receipts: u64,
    pub receipt_total: u64,
    pub inflow_total: u64,
}

impl IntegerBooks {
    pub fn total(&self, holder: Address) -> u64 {
        self.reward.get(&holder).copied().unwrap_or(0)
            + self.settlement.get(&holder).copied().unwrap_or(0)
    }
}

/// Integer replay of the books: fee on receipts only, and each token holds
/// `floor(total pooled * C_i / sum(C))` across all splits so far. Dust is
/// whatever the splits have taken in but not yet handed out.
pub fn integer_books(flows: &[Flow], fee_bps: u64) -> IntegerBooks {
    // token -> (owner, capital, handed out so far)
    let mut tokens: BTreeMap<u64, (Address, u64, u64)> = BTreeMap::new();
    let mut books = IntegerBooks::default();
    let mut pooled: u128 = 0;
    let mut split = |books: &mut IntegerBooks,
                     tokens: &mut BTreeMap<u64, (Address, u64, u64)>,
                     net: u64,
                     settlement: bool| {
        pooled += u128::from(net);
        let total: u128 = tokens.values().map(|t| u128::from(t.1)).sum();
        let mut handed_total = 0;
        for (owner, capital, handed) in tokens.values_mut() {
            let owed = (pooled * u128::from(*capital) / total) as u64;
            let book = if settlement {
                &mut books.settlement
            } else {
                &mut books.reward
            };
            *book.entry(*owner).or_default() += owed - *handed;
            *handed = owed;
            handed_total += owed;
        }
        books.dust = (pooled - u128::from(handed_total)) as u64;
    };
    for flow in flows {
        match flow {
            Flow::Minted {
                token,
                owner,
                capital,
            } => {
                assert_eq!(
                    books.inflow_total, 0,
                    "tokens are fixed before money flows in"
                );
                tokens.insert(*token, (*owner, *capital, 0));
            }
            Flow::Moved { token, to } => tokens.get_mut(token).expect("minted").0 = *to,
            Flow::Receipt { amount } => {
                let fee = amount * fee_bps / 10_000;
                books.fees += fee;
                books.receipts += 1;
                books.receipt_total += amount;
                books.inflow_total += amount;
                split(&mut books, &mut tokens, amount - fee, false);
            }
            Flow::Settlement { amount } => {
                books.inflow_total += amount;
                split(&mut books, &mut tokens, *amount, true);
            }
            Flow::Refund => {
                for (owner, capital, _) in tokens.values() {
                    books.inflow_total += capital;
                    *books.settlement.entry(*owner).or_default() += capital;
                }
            }
        }
    }
    books
}

/// Exact holder shares of rewards: each receipt `R` contributes
/// `C_i / sum(C) * R * (1 - F)` to the token's owner at that moment.
pub fn exact_reward_shares(
    flows: &[Flow],
    fee_bps: u64,
) -> (BTreeMap<Address, BigRational>, BigRational) {
    let mut tokens: BTreeMap<u64, (Address, u64)> = BTreeMap::new();
    let mut shares: BTreeMap<Address, BigRational> = BTreeMap::new();
    let mut fee_total = BigRational::from_integer(BigInt::from(0));
    let one = BigRational::from_integer(BigInt::from(1));
    let f = BigRational::new(BigInt::from(fee_bps), BigInt::from(10_000));
    for flow in flows {
        match flow {
            Flow::Minted {
                token,
                owner,
                capital,
            } => {
                tokens.insert(*token, (*owner, *capital));
            }
            Flow::Moved { token, to } => tokens.get_mut(token).expect("minted").0 = *to,
            Flow::Receipt { amount } => {
                let r = BigRational::from_integer(BigInt::from(*amount));
                fee_total += &r * &f;
                let net = &r * (&one - &f);
                let total: u64 = tokens.values().map(|t| t.1).sum();
                for (owner, capital) in tokens.values() {
                    let share = BigRational::new(BigInt::from(*capital), BigInt::from(total));
                    *shares
                        .entry(*owner)
                        .or_insert_with(|| BigRational::from_integer(BigInt::from(0))) +=
                        &net * share;
                }
            }
            Flow::Settlement { .. } | Flow::Refund => {}
        }
    }
    (shares, fee_total)
}

pub fn abs_diff(integer: u64, exact: &BigRational) -> f64 {
    let i = BigRational::from_integer(BigInt::from(integer));
    let d = if &i > exact { i - exact } else { exact - i };
    d.to_f64().expect("finite")
}

/// Closed-form run of a one-validator arrangement with `sweep_period == 1`,
/// derived from the scenario alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SingleValidatorOracle {
    pub activation: u64,
    /// `(epoch, amount)` for every epoch the wallet forwards while active.
    pub receipts: Vec<(u64, u64)>,
    pub trigger: Option<u64>,
    pub slash: Option<(u64, u64)>,
    pub settlement: Option<u64>,
    pub shortfall: u64,
    pub escrow_cover: u64,
}

impl SingleValidatorOracle {
    pub fn derive(s: &Scenario) -> Self {
        assert_eq!(s.treasury.validators, 1);
        assert_eq!(s.beacon.sweep_period, 1);
        let stake = s.beacon.stake_requirement;
        let staked_at = s.deposits.iter().map(|d| d.epoch).max().expect("deposits");
        let activation = staked_at + s.beacon.activation_delay;
        let g = s.treasury.grace_epochs;
        let threshold = s.treasury.expected_reward_per_epoch * g;
        let factor = |epoch: u64| {
            s.operator_schedule
                .iter()
                .find(|e| e.start <= epoch && epoch < e.end)
                .map_or(1.0, |e| e.factor)
        };
        let reward = |duty: u64| {
            let ppm = (factor(duty) * 1e6).round() as u64;
            s.beacon.reward_per_epoch * ppm / 1_000_000
        };

        let mut receipts = Vec::new();
        let mut trigger = None;
        let mut slash = None;
        let mut exit_at = None;
        for epoch in activation + 1..s.horizon {
            if let Some(sl) = s.slashes.iter().find(|x| x.epoch == epoch) {
                let burned = stake * sl.fraction_bps / 10_000;
                slash = Some((epoch, burned));
                exit_at = Some(epoch);
                receipts.push((epoch, 0));
                break;
            }
            receipts.push((epoch, reward(epoch - 1)));
            if epoch + 1 >= activation + 1 + g {
                let sum: u64 = receipts.iter().rev().take(g as usize).map(|r| r.1).sum();
                if sum < threshold {
                    trigger = Some(epoch);
                    exit_at = Some(epoch);
                    break;
                }
            }
        }
        let mut oracle = SingleValidatorOracle {
            activation,
            receipts: receipts.into_iter().filter(|r| r.1 > 0).collect(),
            trigger,
            slash,
            settlement: None,
            shortfall: 0,
            escrow_cover: 0,
        };
        if let Some(exit) = exit_at {
            if exit + s.beacon.exit_delay < s.horizon {
                let burned = slash.map_or(0, |x| x.1);
                let escrow = s.treasury.escrow_required;
                let cover = burned.min(escrow);
                let penalty = if trigger.is_some() {
                    s.treasury.exit_penalty.min(escrow - cover)
                } else {
                    0
                };
                oracle.shortfall = burned;
                oracle.escrow_cover = cover;
                oracle.settlement = Some(stake - burned + cover + penalty);
            }
        }
        oracle
    }

    /// The same flows the treasury should have seen, for the integer replay.
    pub fn flows(&self, s: &Scenario, holders: &BTreeMap<String, Address>) -> Vec<Flow> {
        let mut out: Vec<Flow> = s
            .deposits
            .iter()
            .enumerate()
            .map(|(i, d)| Flow::Minted {
                token: i as u64,
                owner: holders[&d.holder],
                capital: d.amount,
            })
            .collect();
        out.extend(
            self.receipts
                .iter()
                .map(|(_, a)| Flow::Receipt { amount: *a }),
        );
        if let Some(amount) = self.settlement {
            out.push(Flow::Settlement { amount });
        }
        out
    }
}

pub struct Generator {
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Random valid scenario: `m <= 4`, horizon `<= max_horizon`.
    pub fn scenario(&mut self, max_horizon: u64) -> Scenario {
        let r = &mut self.rng;
        let m = r.gen_range(1..=4usize);
        let stake = [32u64, 64, 100, 250][r.gen_range(0..4)];
        let reward = r.gen_range(1..=60u64);
        let horizon = r.gen_range(30..=max_horizon.max(30));
        let grace = r.gen_range(1..=8u64);
        let escrow = r.gen_range(0..=stake);
        let target = stake * m as u64;

        let holders = r.gen_range(1..=6usize);
        let mut cuts: Vec<u64> = (0..holders - 1).map(|_| r.gen_range(1..target)).collect();
        cuts.push(0);
        cuts.push(target);
        cuts.sort_unstable();
        cuts.dedup();
        let names = ["ann", "ben", "cat", "dov", "eve", "fay", "gus"];
        let mut deposits: Vec<_> = cuts
            .windows(2)
            .enumerate()
            .map(|(i, w)| DepositSpec {
                holder: names[i % names.len()].to_owned(),
                amount: w[1] - w[0],
                epoch: r.gen_range(0..3),
            })
            .collect();
        // Token ids follow mint order.
        deposits.sort_by_key(|d| d.epoch);

        let mut operator_schedule = Vec::new();
        for v in 0..m {
            let mut at = r.gen_range(0..horizon / 2);
            while at + 2 < horizon && r.gen_bool(0.6) {
                let end = r.gen_range(at + 1..horizon);
                let factor = [0.0, 0.25, 0.5, 0.9, 1.0][r.gen_range(0..5)];
                operator_schedule.push(ScheduleEntry {
                    start: at,
                    end,
                    factor,
                    validator: Some(v),
                });
                at = end;
            }
        }
        let mut slashes = Vec::new();
        for v in 0..m {
            if r.gen_bool(0.25) {
                slashes.push(SlashSpec {
                    epoch: r.gen_range(4..horizon),
                    validator: v,
                    fraction_bps: r.gen_range(1..=10_000),
                });
            }
        }
        let transfers = if deposits.len() > 1 && r.gen_bool(0.5) {
            let token = r.gen_range(0..deposits.len());
            vec![TransferSpec {
                token_id: token as u64,
                from: deposits[token].holder.clone(),
                to: names[names.len() - 1].to_owned(),
                epoch: r.gen_range(3..horizon),
            }]
        } else {
            Vec::new()
        };
        let mut claims = Vec::new();
        for d in &deposits {
            if r.gen_bool(0.4) {
                claims.push(ClaimSpec {
                    holder: d.holder.clone(),
                    epoch: r.gen_range(0..horizon),
                });
            }
        }

        Scenario {
            treasury: TreasurySection {
                fee_bps: r.gen_range(0..=10_000),
                expected_reward_per_epoch: r.gen_range(0..=reward),
                grace_epochs: grace,
                escrow_required: escrow,
                exit_penalty: r.gen_range(0..=escrow),
                validators: m,
            },
            mint: MintSection {
                min_contribution: 1,
                open_epoch: 0,
                close_epoch: 5,
            },
            beacon: BeaconParams {
                stake_requirement: stake,
                reward_per_epoch: reward,
                activation_delay: r.gen_range(1..=4),
                exit_delay: r.gen_range(1..=6),
                sweep_period: r.gen_range(1..=4),
            },
            deposits,
            operator_schedule,
            slashes,
            transfers,
            claims,
            horizon,
            seed: r.gen(),
        }
    }
}
