//! Token pricing.

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::semantics::Usd;

/// Dollar rates per million tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PricingTable {
    pub usd_per_million_input_tokens: Usd,
    pub usd_per_million_output_tokens: Usd,
}

impl PricingTable {
    pub fn new(input_rate: Usd, output_rate: Usd) -> Self {
        PricingTable { usd_per_million_input_tokens: input_rate, usd_per_million_output_tokens: output_rate }
    }

    /// Parses two decimal rates, e.g. `("3.00", "15.00")`.
    pub fn from_strs(input_rate: &str, output_rate: &str) -> Result<Self, String> {
        Ok(PricingTable::new(input_rate.parse()?, output_rate.parse()?))
    }

    pub fn free() -> Self {
        PricingTable::default()
    }
}

/// Exact price of a call: `(in × in_rate + out × out_rate) / 10^6`.
pub fn price(input_tokens: u64, output_tokens: u64, table: &PricingTable) -> Usd {
    let million = Decimal::from(1_000_000u32);
    let total = Decimal::from(input_tokens) * table.usd_per_million_input_tokens.decimal()
        + Decimal::from(output_tokens) * table.usd_per_million_output_tokens.decimal();
    Usd::new(total / million)
}
