//! Exact monetary amounts and cost ledgers.

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::trace::TraceEvent;

/// A non-negative amount of US dollars held as an exact decimal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Usd(#[serde(with = "rust_decimal::serde::str")] Decimal);

impl Usd {
    pub const ZERO: Usd = Usd(Decimal::ZERO);

    /// Wraps `d`, clamping negatives to zero.
    pub fn new(d: Decimal) -> Self {
        Usd(d.max(Decimal::ZERO).normalize())
    }

    pub fn decimal(self) -> Decimal {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(self) -> f64 {
        use rust_decimal::prelude::ToPrimitive;
        self.0.to_f64().unwrap_or(f64::MAX)
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.normalize())
    }
}

impl FromStr for Usd {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let d = Decimal::from_str_exact(s.trim()).map_err(|e| format!("invalid amount `{s}`: {e}"))?;
        if d.is_sign_negative() && !d.is_zero() {
            return Err(format!("amount `{s}` is negative"));
        }
        Ok(Usd::new(d))
    }
}

impl Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd((self.0 + rhs.0).normalize())
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        *self = *self + rhs;
    }
}

impl Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, Add::add)
    }
}

/// Token counts and spend, in total and broken down by process name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostLedger {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub usd: Usd,
    pub per_process: BTreeMap<String, Usd>,
}

impl CostLedger {
    pub fn zero() -> Self {
        CostLedger::default()
    }

    /// A ledger holding a single charge.
    pub fn charge(process: &str, input_tokens: u64, output_tokens: u64, usd: Usd) -> Self {
        let mut l = CostLedger::default();
        l.record(process, input_tokens, output_tokens, usd);
        l
    }

    pub fn record(&mut self, process: &str, input_tokens: u64, output_tokens: u64, usd: Usd) {
        self.input_tokens += input_tokens;
        self.output_tokens += output_tokens;
        self.usd += usd;
        *self.per_process.entry(process.to_owned()).or_default() += usd;
    }

    pub fn absorb(&mut self, other: &CostLedger) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.usd += other.usd;
        for (name, usd) in &other.per_process {
            *self.per_process.entry(name.clone()).or_default() += *usd;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.input_tokens == 0 && self.output_tokens == 0 && self.usd.is_zero()
    }

    /// True when the total equals the sum of the per-process amounts.
    pub fn is_consistent(&self) -> bool {
        self.per_process.values().copied().sum::<Usd>() == self.usd
    }
}

impl Add for CostLedger {
    type Output = CostLedger;
    fn add(mut self, rhs: CostLedger) -> CostLedger {
        self.absorb(&rhs);
        self
    }
}

/// Total cost of a trace. Par events already carry the sum of their
/// children, so only top-level deltas are added.
pub fn cost_of_trace(trace: &[TraceEvent]) -> CostLedger {
    let mut total = CostLedger::zero();
    for ev in trace {
        total.absorb(&ev.cost);
    }
    total
}
