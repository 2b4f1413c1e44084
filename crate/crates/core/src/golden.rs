//! Scenarios bundled with the crate, used for regression and determinism
//! checks.

use crate::scenario::{Scenario, ScenarioError};

const BUNDLED: [(&str, &str); 8] = [
    ("honest", include_str!("../scenarios/honest.json")),
    ("non_paying", include_str!("../scenarios/non_paying.json")),
    (
        "slashed_covered",
        include_str!("../scenarios/slashed_covered.json"),
    ),
    (
        "slashed_uncovered",
        include_str!("../scenarios/slashed_uncovered.json"),
    ),
    ("underfilled", include_str!("../scenarios/underfilled.json")),
    ("transfer", include_str!("../scenarios/transfer.json")),
    ("empty", include_str!("../scenarios/empty.json")),
    ("pool", include_str!("../scenarios/pool.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Parsed and validated.
pub fn scenario(name: &str) -> Result<Scenario, ScenarioError> {
    let text = source(name)
        .ok_or_else(|| ScenarioError::Invalid(vec![format!("no bundled scenario {name:?}")]))?;
    Scenario::load(text)
}
