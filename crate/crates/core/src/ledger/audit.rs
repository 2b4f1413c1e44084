//! Post-hoc conservation audit driven by the event log alone.

use std::collections::BTreeMap;

use serde::Serialize;

use super::Event;
use crate::types::{Address, Amount, Epoch};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConservationAudit {
    pub epochs_checked: u64,
    pub total_minted: Amount,
    pub total_burned: Amount,
    #[serde(skip)]
    pub balances: BTreeMap<Address, Amount>,
    pub failures: Vec<String>,
}

impl ConservationAudit {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Rebuilds every balance from `Genesis`, `Issued`, `Burned` and `Transfer`
/// events and checks each `EpochClosed` checkpoint:
/// `supply(E) = supply(E-1) + minted(E) - burned(E)`.
pub fn replay_conservation(events: &[Event]) -> ConservationAudit {
    let mut audit = ConservationAudit::default();
    let mut balances: BTreeMap<Address, i128> = BTreeMap::new();
    let mut previous_supply: i128 = 0;
    let (mut minted, mut burned): (i128, i128) = (0, 0);
    let mut last_epoch: Epoch = 0;

    for (index, e) in events.iter().enumerate() {
        if e.seq != index as u64 {
            audit
                .failures
                .push(format!("seq {} at position {index}", e.seq));
        }
        if e.epoch < last_epoch {
            audit
                .failures
                .push(format!("seq {}: epoch went backwards", e.seq));
        }
        last_epoch = e.epoch;
        let amount = i128::from(e.get_u64("amount").unwrap_or(0));
        match e.tag.as_str() {
            "Genesis" | "Issued" => {
                let to = e.get_address("to").unwrap_or(Address::SYSTEM);
                *balances.entry(to).or_default() += amount;
                minted += amount;
            }
            "Burned" => {
                let from = e.get_address("from").unwrap_or(Address::SYSTEM);
                *balances.entry(from).or_default() -= amount;
                burned += amount;
                if balances[&from] < 0 {
                    audit
                        .failures
                        .push(format!("seq {}: {from} negative after burn", e.seq));
                }
            }
            "Transfer" => {
                let from = e.get_address("from").unwrap_or(Address::SYSTEM);
                let to = e.get_address("to").unwrap_or(Address::SYSTEM);
                *balances.entry(from).or_default() -= amount;
                *balances.entry(to).or_default() += amount;
                if balances[&from] < 0 {
                    audit
                        .failures
                        .push(format!("seq {}: {from} negative after transfer", e.seq));
                }
            }
            "EpochClosed" => {
                let supply: i128 = balances.values().sum();
                let reported = i128::from(e.get_u64("supply").unwrap_or(0));
                if supply != reported {
                    audit.failures.push(format!(
                        "epoch {}: replayed supply {supply} != checkpoint {reported}",
                        e.epoch
                    ));
                }
                if supply != previous_supply + minted - burned {
                    audit.failures.push(format!(
                        "epoch {}: supply {supply} != {previous_supply} + {minted} - {burned}",
                        e.epoch
                    ));
                }
                if i128::from(e.get_u64("minted").unwrap_or(0)) != minted
                    || i128::from(e.get_u64("burned").unwrap_or(0)) != burned
                {
                    audit.failures.push(format!(
                        "epoch {}: checkpoint issuance does not match logged issuance",
                        e.epoch
                    ));
                }
                audit.total_minted += minted as Amount;
                audit.total_burned += burned as Amount;
                audit.epochs_checked += 1;
                previous_supply = supply;
                minted = 0;
                burned = 0;
            }
            _ => {}
        }
    }
    audit.balances = balances
        .into_iter()
        .map(|(a, b)| (a, b.max(0) as Amount))
        .collect();
    audit
}
