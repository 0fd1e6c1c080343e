//! Cutoff policies: exact per-row cutoffs or a fixed refresh grid.
//!
//! Every target row's cutoff is its own timestamp. In exact mode the
//! effective cutoff is that timestamp; in approximate mode it is
//! floored onto a grid of `interval` days anchored at a fixed midnight
//! UTC, so many rows share one effective cutoff and their aggregates
//! can be batched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DAY_SECONDS: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    /// Refresh cadence in days; 0 means exact per-row cutoffs.
    pub approximate_days: u32,
    /// Grid origin, seconds since epoch; must be a midnight UTC.
    pub anchor: i64,
}

impl CutoffPolicy {
    pub fn exact() -> Self {
        CutoffPolicy {
            approximate_days: 0,
            anchor: 0,
        }
    }

    pub fn approximate(days: u32, anchor: i64) -> Result<Self> {
        if anchor.rem_euclid(DAY_SECONDS) != 0 {
            return Err(Error::InvalidArgument(format!(
                "cutoff anchor {anchor} is not a midnight UTC"
            )));
        }
        Ok(CutoffPolicy {
            approximate_days: days,
            anchor,
        })
    }

    /// The cutoff actually used for a row stamped `t`: `t` itself in
    /// exact mode, otherwise the latest grid point at or before `t`.
    /// Times before the anchor clamp to the anchor.
    pub fn effective_cutoff(&self, t: i64) -> i64 {
        if self.approximate_days == 0 {
            return t;
        }
        if t < self.anchor {
            return self.anchor;
        }
        let step = self.approximate_days as i64 * DAY_SECONDS;
        self.anchor + (t - self.anchor) / step * step
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> i64 {
        chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
            .unwrap()
            .and_utc()
            .timestamp()
    }

    #[test]
    fn one_day_interval_floors_to_midnight() {
        let policy = CutoffPolicy::approximate(1, ts("2017-01-01 00:00:00")).unwrap();
        assert_eq!(
            policy.effective_cutoff(ts("2017-08-24 13:00:00")),
            ts("2017-08-24 00:00:00")
        );
    }

    #[test]
    fn exact_mode_is_identity() {
        let policy = CutoffPolicy::exact();
        assert_eq!(policy.effective_cutoff(1234567), 1234567);
    }

    #[test]
    fn grid_point_maps_to_itself() {
        let anchor = ts("2017-01-01 00:00:00");
        let policy = CutoffPolicy::approximate(7, anchor).unwrap();
        let on_grid = anchor + 3 * 7 * 86_400;
        assert_eq!(policy.effective_cutoff(on_grid), on_grid);
    }

    #[test]
    fn times_before_anchor_clamp_to_anchor() {
        let anchor = ts("2017-01-01 00:00:00");
        let policy = CutoffPolicy::approximate(7, anchor).unwrap();
        assert_eq!(policy.effective_cutoff(anchor - 5), anchor);
    }

    #[test]
    fn anchor_must_be_midnight() {
        assert!(CutoffPolicy::approximate(1, 3600).is_err());
        assert!(CutoffPolicy::approximate(1, 0).is_ok());
        assert!(CutoffPolicy::approximate(1, -86_400).is_ok());
    }

    proptest! {
        // Staleness bounds: the effective cutoff never exceeds t and
        // lags it by less than the interval.
        #[test]
        fn staleness_is_bounded(
            days in prop_oneof![Just(1u32), Just(7), Just(21), Just(35)],
            offset in 0i64..(400 * 86_400),
        ) {
            let anchor = 1_483_228_800; // a midnight
            let policy = CutoffPolicy::approximate(days, anchor).unwrap();
            let t = anchor + offset;
            let eff = policy.effective_cutoff(t);
            prop_assert!(eff <= t);
            prop_assert!(t - eff < days as i64 * 86_400);
            // Flooring is idempotent.
            prop_assert_eq!(policy.effective_cutoff(eff), eff);
        }
    }
}
