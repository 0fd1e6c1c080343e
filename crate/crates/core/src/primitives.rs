//! Aggregation and transform primitive functions.
//!
//! Aggregations map a multiset of values to a scalar and skip nulls;
//! transforms are pure row-wise functions on a single value. Empty-set
//! results: SUM, COUNT and NUM_UNIQUE fall back to 0, everything else
//! to null. MODE breaks frequency ties toward the lexicographically
//! smallest value so repeated runs agree.

use std::collections::HashMap;
use std::hash::Hash;

use chrono::{DateTime, Datelike, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plain left-to-right sum over non-null values. Empty input sums to 0.
pub fn sum(values: &[Option<f64>]) -> f64 {
    values.iter().flatten().sum()
}

/// Arithmetic mean of non-null values, or `None` when there are none.
pub fn mean(values: &[Option<f64>]) -> Option<f64> {
    let mut n = 0u64;
    let mut total = 0.0;
    for v in values.iter().flatten() {
        n += 1;
        total += v;
    }
    (n > 0).then(|| total / n as f64)
}

/// Sample standard deviation (n-1 denominator) of non-null values via
/// Welford's recurrence; `None` with fewer than two non-null values.
pub fn std_dev(values: &[Option<f64>]) -> Option<f64> {
    let mut n = 0u64;
    let mut m = 0.0;
    let mut m2 = 0.0;
    for &v in values.iter().flatten() {
        n += 1;
        let delta = v - m;
        m += delta / n as f64;
        m2 += delta * (v - m);
    }
    // m2 can drift a hair below zero on constant inputs; clamp so the
    // square root stays a number.
    (n >= 2).then(|| (m2.max(0.0) / (n - 1) as f64).sqrt())
}

/// Number of non-null values.
pub fn count<T>(values: &[Option<T>]) -> u64 {
    values.iter().filter(|v| v.is_some()).count() as u64
}

/// Cardinality of the set of distinct non-null values. Empty input is 0.
pub fn num_unique<T: Eq + Hash>(values: &[Option<T>]) -> u64 {
    let mut seen = std::collections::HashSet::new();
    for v in values.iter().flatten() {
        seen.insert(v);
    }
    seen.len() as u64
}

/// Most frequent non-null value; ties broken toward the
/// lexicographically smallest. Empty input is `None`.
pub fn mode<'a>(values: &[Option<&'a str>]) -> Option<&'a str> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for v in values.iter().flatten() {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|(a_val, a_n), (b_val, b_n)| a_n.cmp(b_n).then_with(|| b_val.cmp(a_val)))
        .map(|(v, _)| v)
}

/// Average spacing in seconds between the extremes of the non-null
/// timestamps: (max - min) / (n - 1). Needs at least two values.
///
/// Equal by algebra to the mean of consecutive gaps of the sorted
/// inputs, which the tests verify on random data.
pub fn avg_time_between(timestamps: &[Option<i64>]) -> Option<f64> {
    let mut n = 0u64;
    let mut min = i64::MAX;
    let mut max = i64::MIN;
    for &t in timestamps.iter().flatten() {
        n += 1;
        min = min.min(t);
        max = max.max(t);
    }
    (n >= 2).then(|| (max - min) as f64 / (n - 1) as f64)
}

fn utc(ts: i64) -> DateTime<chrono::Utc> {
    DateTime::from_timestamp(ts, 0).expect("timestamp within chrono range")
}

/// True iff the UTC day of week is Saturday or Sunday.
pub fn weekend(ts: i64) -> bool {
    matches!(utc(ts).weekday(), Weekday::Sat | Weekday::Sun)
}

/// UTC day of month, 1-31.
pub fn day(ts: i64) -> u32 {
    utc(ts).day()
}

/// UTC hour of day, 0-23.
pub fn hour(ts: i64) -> u32 {
    utc(ts).hour()
}

/// Value classes used to decide which primitives apply to which columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueClass {
    Identifier,
    ForeignKey,
    Timestamp,
    /// Numeric with a non-count unit (euro, hours, dimensionless).
    Numeric,
    /// Numeric tagged as a count (also the output of DAY and HOUR).
    NumericCount,
    Categorical,
    Boolean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggPrimitive {
    Sum,
    Mean,
    Std,
    Count,
    NumUnique,
    Mode,
    AvgTimeBetween,
}

impl AggPrimitive {
    pub const ALL: [AggPrimitive; 7] = [
        AggPrimitive::Sum,
        AggPrimitive::Mean,
        AggPrimitive::Std,
        AggPrimitive::Count,
        AggPrimitive::NumUnique,
        AggPrimitive::Mode,
        AggPrimitive::AvgTimeBetween,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggPrimitive::Sum => "SUM",
            AggPrimitive::Mean => "MEAN",
            AggPrimitive::Std => "STD",
            AggPrimitive::Count => "COUNT",
            AggPrimitive::NumUnique => "NUM_UNIQUE",
            AggPrimitive::Mode => "MODE",
            AggPrimitive::AvgTimeBetween => "AVG_TIME_BETWEEN",
        }
    }

    /// Whether the primitive applies to a column of the given class.
    /// COUNT binds to the child key column only (one row-count feature
    /// per relationship); SUM also takes booleans (number of trues).
    pub fn accepts(self, class: ValueClass) -> bool {
        use ValueClass::*;
        match self {
            AggPrimitive::Sum => matches!(class, Numeric | NumericCount | Boolean),
            AggPrimitive::Mean | AggPrimitive::Std => matches!(class, Numeric | NumericCount),
            AggPrimitive::Count => matches!(class, Identifier),
            AggPrimitive::NumUnique => matches!(class, Categorical | Boolean | NumericCount),
            AggPrimitive::Mode => matches!(class, Categorical),
            AggPrimitive::AvgTimeBetween => matches!(class, Timestamp),
        }
    }

    /// Class of the aggregate value. Everything is numeric except MODE,
    /// which echoes a category and is one-hot encoded downstream.
    pub fn output_class(self) -> ValueClass {
        match self {
            AggPrimitive::Count | AggPrimitive::NumUnique => ValueClass::NumericCount,
            AggPrimitive::Mode => ValueClass::Categorical,
            _ => ValueClass::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformPrimitive {
    Weekend,
    Day,
    Hour,
}

impl TransformPrimitive {
    pub const ALL: [TransformPrimitive; 3] = [
        TransformPrimitive::Weekend,
        TransformPrimitive::Day,
        TransformPrimitive::Hour,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformPrimitive::Weekend => "WEEKEND",
            TransformPrimitive::Day => "DAY",
            TransformPrimitive::Hour => "HOUR",
        }
    }

    pub fn accepts(self, class: ValueClass) -> bool {
        matches!(class, ValueClass::Timestamp)
    }

    pub fn output_class(self) -> ValueClass {
        match self {
            TransformPrimitive::Weekend => ValueClass::Boolean,
            TransformPrimitive::Day | TransformPrimitive::Hour => ValueClass::NumericCount,
        }
    }

    /// Apply the transform to a timestamp, yielding the numeric value
    /// that lands in the feature matrix (WEEKEND as 0/1).
    pub fn apply(self, ts: i64) -> f64 {
        match self {
            TransformPrimitive::Weekend => {
                if weekend(ts) {
                    1.0
                } else {
                    0.0
                }
            }
            TransformPrimitive::Day => day(ts) as f64,
            TransformPrimitive::Hour => hour(ts) as f64,
        }
    }
}

/// The enumerable primitive registry. Order is fixed and canonical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub aggregations: Vec<AggPrimitive>,
    pub transforms: Vec<TransformPrimitive>,
}

impl Registry {
    /// The full fixed set: seven aggregations plus WEEKEND, DAY, HOUR.
    pub fn full() -> Self {
        Registry {
            aggregations: AggPrimitive::ALL.to_vec(),
            transforms: TransformPrimitive::ALL.to_vec(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.aggregations.is_empty() && self.transforms.is_empty()
    }

    /// Parse a comma-separated list of canonical names (the
    /// `--primitives` flag). Unknown names are an error.
    pub fn from_names(names: &str) -> Result<Self> {
        let mut reg = Registry {
            aggregations: Vec::new(),
            transforms: Vec::new(),
        };
        for raw in names.split(',') {
            let name = raw.trim().to_ascii_uppercase();
            if name.is_empty() {
                continue;
            }
            if let Some(agg) = AggPrimitive::ALL.iter().find(|p| p.name() == name) {
                if !reg.aggregations.contains(agg) {
                    reg.aggregations.push(*agg);
                }
            } else if let Some(tr) = TransformPrimitive::ALL.iter().find(|p| p.name() == name) {
                if !reg.transforms.contains(tr) {
                    reg.transforms.push(*tr);
                }
            } else {
                return Err(Error::InvalidArgument(format!(
                    "unknown primitive '{}'",
                    raw.trim()
                )));
            }
        }
        Ok(reg)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.aggregations
            .iter()
            .map(|p| p.name())
            .chain(self.transforms.iter().map(|p| p.name()))
            .collect()
    }
}
