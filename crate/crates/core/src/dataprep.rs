//! Data preparation: turning fraud reports into transaction labels,
//! subsampling cards, and splitting for train/tune/test.
//!
//! Reports carry no transaction ids, only (card, operation date,
//! amount), so labeling is a matching problem. The rules: card equal,
//! amount equal to the cent, report date equal to the UTC calendar day
//! of either the transaction's timestamp or its original timestamp,
//! currency equal when the report carries one. Among several unmatched
//! candidates the earliest timestamp wins, and a transaction matches
//! at most one report. Reports are processed in a canonical sort
//! order, so the outcome is independent of input order.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entityset::{Entity, EntitySet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FraudReport {
    pub card: String,
    pub date: NaiveDate,
    pub amount: f64,
    pub currency: Option<String>,
}

impl FraudReport {
    pub fn amount_cents(&self) -> i64 {
        (self.amount * 100.0).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchStats {
    pub reported: usize,
    pub matched: usize,
    pub unmatched: usize,
}

/// Per-row fraud labels for the target entity plus match accounting.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub labels: Vec<bool>,
    pub stats: MatchStats,
}

/// Column bindings used by the matcher.
#[derive(Debug, Clone)]
pub struct MatchColumns {
    pub card: String,
    pub timestamp: String,
    /// Timestamp of the original operation when it differs from the
    /// recorded one (settlement lag); reports are dated by operation.
    pub original_timestamp: Option<String>,
    pub amount: String,
    pub currency: Option<String>,
}

impl Default for MatchColumns {
    fn default() -> Self {
        MatchColumns {
            card: "card_id".into(),
            timestamp: "date".into(),
            original_timestamp: Some("original_date".into()),
            amount: "amount".into(),
            currency: Some("currency".into()),
        }
    }
}

fn day_of_ts(ts: i64) -> i64 {
    ts.div_euclid(86_400)
}

fn day_of_date(d: NaiveDate) -> i64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    d.signed_duration_since(epoch).num_days()
}

/// Match fraud reports to transactions, producing per-row labels.
/// Unmatched reports are counted, never fatal.
pub fn match_reports(
    es: &EntitySet,
    target: &str,
    reports: &[FraudReport],
    cols: &MatchColumns,
) -> Result<LabeledDataset> {
    let entity = es.entity(target)?;
    let n = entity.n_rows();
    let card_col = entity.column_index(&cols.card)?;
    let ts_col = entity.column_index(&cols.timestamp)?;
    let orig_col = cols
        .original_timestamp
        .as_deref()
        .map(|c| entity.column_index(c))
        .transpose()?;
    let amount_col = entity.column_index(&cols.amount)?;
    let currency_col = cols
        .currency
        .as_deref()
        .map(|c| entity.column_index(c))
        .transpose()?;

    // Candidate buckets keyed by (card, calendar day); a transaction
    // appears under both its recorded and original days.
    let mut buckets: HashMap<(&str, i64), Vec<u32>> = HashMap::new();
    for row in 0..n {
        let Some(card) = entity.str_at(card_col, row) else {
            continue;
        };
        let Some(ts) = entity.ts_at(ts_col, row) else {
            continue;
        };
        let day = day_of_ts(ts);
        buckets.entry((card, day)).or_default().push(row as u32);
        if let Some(oc) = orig_col {
            if let Some(orig) = entity.ts_at(oc, row) {
                let orig_day = day_of_ts(orig);
                if orig_day != day {
                    buckets.entry((card, orig_day)).or_default().push(row as u32);
                }
            }
        }
    }

    // Canonical processing order makes matching independent of the
    // order reports arrive in.
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&reports[a], &reports[b]);
        (&ra.card, ra.date, ra.amount_cents(), &ra.currency).cmp(&(
            &rb.card,
            rb.date,
            rb.amount_cents(),
            &rb.currency,
        ))
    });

    let mut labels = vec![false; n];
    let mut used: HashSet<u32> = HashSet::new();
    let mut matched = 0usize;
    for &ri in &order {
        let report = &reports[ri];
        let cents = report.amount_cents();
        let key = (report.card.as_str(), day_of_date(report.date));
        let winner = buckets
            .get(&key)
            .into_iter()
            .flatten()
            .filter(|&&row| {
                let row = row as usize;
                if used.contains(&(row as u32)) {
                    return false;
                }
                let amount_ok = entity
                    .float_at(amount_col, row)
                    .map(|a| (a * 100.0).round() as i64 == cents)
                    .unwrap_or(false);
                if !amount_ok {
                    return false;
                }
                match (&report.currency, currency_col) {
                    (Some(want), Some(cc)) => entity.str_at(cc, row) == Some(want.as_str()),
                    _ => true,
                }
            })
            .min_by_key(|&&row| {
                (
                    entity.ts_at(ts_col, row as usize).unwrap_or(i64::MAX),
                    row,
                )
            });
        if let Some(&&row) = winner.as_ref() {
            used.insert(row);
            labels[row as usize] = true;
            matched += 1;
        }
    }

    Ok(LabeledDataset {
        labels,
        stats: MatchStats {
            reported: reports.len(),
            matched,
            unmatched: reports.len() - matched,
        },
    })
}

/// Parse a fraud report CSV: `card_number,operation_date,amount` with
/// an optional `currency` column.
pub fn read_reports(path: &Path) -> Result<Vec<FraudReport>> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.display().to_string())
        } else {
            Error::io(path.display().to_string(), e)
        }
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let card_pos = find("card_number").ok_or_else(|| {
        Error::SchemaMismatch(format!("{}: missing column 'card_number'", path.display()))
    })?;
    let date_pos = find("operation_date").ok_or_else(|| {
        Error::SchemaMismatch(format!(
            "{}: missing column 'operation_date'",
            path.display()
        ))
    })?;
    let amount_pos = find("amount").ok_or_else(|| {
        Error::SchemaMismatch(format!("{}: missing column 'amount'", path.display()))
    })?;
    let currency_pos = find("currency");

    let mut reports = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let fatal = |message: String| Error::ParseFatal {
            entity: "fraud_reports".into(),
            row: i + 1,
            message,
        };
        let record = record.map_err(|e| fatal(e.to_string()))?;
        let card = record.get(card_pos).unwrap_or("").trim().to_string();
        if card.is_empty() {
            return Err(fatal("empty card_number".into()));
        }
        let date_text = record.get(date_pos).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d")
            .map_err(|e| fatal(format!("bad operation_date '{date_text}': {e}")))?;
        let amount_text = record.get(amount_pos).unwrap_or("").trim();
        let amount: f64 = amount_text
            .parse()
            .map_err(|e| fatal(format!("bad amount '{amount_text}': {e}")))?;
        if !(amount > 0.0) {
            return Err(fatal(format!("amount must be positive, got {amount}")));
        }
        let currency = currency_pos
            .and_then(|p| record.get(p))
            .map(|c| c.trim())
            .filter(|c| !c.is_empty())
            .map(|c| c.to_string());
        reports.push(FraudReport {
            card,
            date,
            amount,
            currency,
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStats {
    pub fraud_cards: usize,
    pub clean_requested: usize,
    pub clean_taken: usize,
}

/// Keep every card with at least one fraudulent transaction plus
/// `ratio` fraud-free cards per fraud card, sampled uniformly.
/// Histories are never truncated: a kept card keeps all its rows.
pub fn sample_cards(
    es: &EntitySet,
    parent: &str,
    child: &str,
    labels: &[bool],
    ratio: f64,
    seed: u64,
) -> Result<(EntitySet, SampleStats)> {
    if !(0.0..=f64::MAX).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("bad sampling ratio {ratio}")));
    }
    let rel = es
        .relationship_index(parent, child)
        .ok_or_else(|| Error::InvalidArgument(format!("no relationship {parent}<-{child}")))?;
    let index = es.child_index(rel);
    if labels.len() != es.entity(child)?.n_rows() {
        return Err(Error::InvalidArgument(
            "labels are not aligned with the child entity".into(),
        ));
    }

    let n_parents = es.entity(parent)?.n_rows();
    let mut is_fraud_card = vec![false; n_parents];
    for (row, &label) in labels.iter().enumerate() {
        if label {
            if let Some(p) = index.parent_of[row] {
                is_fraud_card[p as usize] = true;
            }
        }
    }
    let fraud_cards: Vec<usize> = (0..n_parents).filter(|&p| is_fraud_card[p]).collect();
    let clean_cards: Vec<usize> = (0..n_parents).filter(|&p| !is_fraud_card[p]).collect();

    let requested = (ratio * fraud_cards.len() as f64).round() as usize;
    let taken = requested.min(clean_cards.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, clean_cards.len(), taken);

    let mut keep = vec![false; n_parents];
    for &p in &fraud_cards {
        keep[p] = true;
    }
    for i in chosen {
        keep[clean_cards[i]] = true;
    }

    let filtered = es.filter_rows(parent, &|row| keep[row])?;
    Ok((
        filtered,
        SampleStats {
            fraud_cards: fraud_cards.len(),
            clean_requested: requested,
            clean_taken: taken,
        },
    ))
}

/// Re-derive a label vector for an entity (typically after
/// subsampling) from a key-to-label map.
pub fn relabel(entity: &Entity, by_id: &HashMap<String, bool>) -> Vec<bool> {
    (0..entity.n_rows())
        .map(|r| by_id.get(entity.row_key(r)).copied().unwrap_or(false))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub tune: Vec<usize>,
    pub test: Vec<usize>,
}

fn check_fractions(fractions: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = fractions;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    Ok(())
}

fn partition_stratum(
    mut rows: Vec<usize>,
    fractions: (f64, f64, f64),
    rng: &mut ChaCha8Rng,
    stratum_name: &str,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    rows.shuffle(rng);
    let n = rows.len();
    let n_train = (fractions.0 * n as f64).floor() as usize;
    let n_tune = (fractions.1 * n as f64).floor() as usize;
    let n_test = n - n_train - n_tune;
    if n_train == 0 || n_tune == 0 || n_test == 0 {
        return Err(Error::StratumTooSmall(stratum_name.to_string()));
    }
    let test = rows.split_off(n_train + n_tune);
    let tune = rows.split_off(n_train);
    Ok((rows, tune, test))
}

/// Label-stratified split: positives and negatives are shuffled and
/// partitioned separately, so each part mirrors the global fraud rate.
pub fn split(labels: &[bool], fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    check_fractions(fractions)?;
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p_train, p_tune, p_test) = partition_stratum(positives, fractions, &mut rng, "label=1")?;
    let (n_train, n_tune, n_test) = partition_stratum(negatives, fractions, &mut rng, "label=0")?;

    let join = |mut a: Vec<usize>, b: Vec<usize>| {
        a.extend(b);
        a.sort_unstable();
        a
    };
    Ok(Split {
        train: join(p_train, n_train),
        tune: join(p_tune, n_tune),
        test: join(p_test, n_test),
    })
}

/// Card-grouped variant: whole cards are assigned to one part, so no
/// card's history straddles the split. Cards are stratified by
/// whether they carry any fraud. Rows without a parent are dropped.
pub fn split_grouped(
    group_of: &[Option<u32>],
    labels: &[bool],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<Split> {
    check_fractions(fractions)?;
    let mut group_fraud: HashMap<u32, bool> = HashMap::new();
    for (row, group) in group_of.iter().enumerate() {
        if let Some(g) = group {
            *group_fraud.entry(*g).or_insert(false) |= labels[row];
        }
    }
    let mut fraud_groups: Vec<u32> = group_fraud
        .iter()
        .filter_map(|(&g, &f)| f.then_some(g))
        .collect();
    let mut clean_groups: Vec<u32> = group_fraud
        .iter()
        .filter_map(|(&g, &f)| (!f).then_some(g))
        .collect();
    fraud_groups.sort_unstable();
    clean_groups.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fraud_usize: Vec<usize> = fraud_groups.iter().map(|&g| g as usize).collect();
    let clean_usize: Vec<usize> = clean_groups.iter().map(|&g| g as usize).collect();
    let (ftr, ftu, fte) = partition_stratum(fraud_usize, fractions, &mut rng, "fraud cards")?;
    let (ctr, ctu, cte) = partition_stratum(clean_usize, fractions, &mut rng, "clean cards")?;

    let part_of = |groups: &[usize], part: u8, assign: &mut HashMap<u32, u8>| {
        for &g in groups {
            assign.insert(g as u32, part);
        }
    };
    let mut assign: HashMap<u32, u8> = HashMap::new();
    part_of(&ftr, 0, &mut assign);
    part_of(&ctr, 0, &mut assign);
    part_of(&ftu, 1, &mut assign);
    part_of(&ctu, 1, &mut assign);
    part_of(&fte, 2, &mut assign);
    part_of(&cte, 2, &mut assign);

    let mut split = Split {
        train: vec![],
        tune: vec![],
        test: vec![],
    };
    for (row, group) in group_of.iter().enumerate() {
        if let Some(g) = group {
            match assign[g] {
                0 => split.train.push(row),
                1 => split.tune.push(row),
                _ => split.test.push(row),
            }
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entityset::{Column, EntitySet, NumericUnit, Relationship};

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn ts(s: &str) -> i64 {
        chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
            .unwrap()
            .and_utc()
            .timestamp()
    }

    struct TxnSpec {
        card: &'static str,
        date: i64,
        original: Option<i64>,
        amount: f64,
        currency: &'static str,
    }

    fn build(target_txns: &[TxnSpec]) -> EntitySet {
        let mut card_ids: Vec<String> = target_txns
            .iter()
            .map(|t| t.card.to_string())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if card_ids.is_empty() {
            card_ids.push("c0".into());
        }
        let cards = Entity::new(
            "cards",
            "id",
            None,
            vec![Column::identifier("id", card_ids)],
        )
        .unwrap();
        let txns = Entity::new(
            "transactions",
            "id",
            Some("date"),
            vec![
                Column::identifier(
                    "id",
                    (0..target_txns.len()).map(|i| format!("t{i}")).collect(),
                ),
                Column::foreign_key(
                    "card_id",
                    "cards",
                    target_txns.iter().map(|t| Some(t.card.to_string())).collect(),
                ),
                Column::timestamp("date", target_txns.iter().map(|t| Some(t.date)).collect()),
                Column::timestamp(
                    "original_date",
                    target_txns
                        .iter()
                        .map(|t| Some(t.original.unwrap_or(t.date)))
                        .collect(),
                ),
                Column::numeric(
                    "amount",
                    NumericUnit::Euro,
                    target_txns.iter().map(|t| Some(t.amount)).collect(),
                ),
                Column::categorical(
                    "currency",
                    target_txns
                        .iter()
                        .map(|t| Some(t.currency.to_string()))
                        .collect(),
                ),
            ],
        )
        .unwrap();
        let mut es = EntitySet::new();
        es.add_entity(cards).unwrap();
        es.add_entity(txns).unwrap();
        es.add_relationship(Relationship {
            parent: "cards".into(),
            parent_key: "id".into(),
            child: "transactions".into(),
            child_fk: "card_id".into(),
        })
        .unwrap();
        es
    }

    fn report(card: &str, d: &str, amount: f64) -> FraudReport {
        FraudReport {
            card: card.into(),
            date: date(d),
            amount,
            currency: None,
        }
    }

    #[test]
    fn single_candidate_matches() {
        let es = build(&[TxnSpec {
            card: "c1",
            date: ts("2017-08-24 10:00:00"),
            original: None,
            amount: 50.0,
            currency: "EUR",
        }]);
        let labeled =
            match_reports(&es, "transactions", &[report("c1", "2017-08-24", 50.0)], &MatchColumns::default())
                .unwrap();
        assert_eq!(labeled.labels, vec![true]);
        assert_eq!(
            labeled.stats,
            MatchStats {
                reported: 1,
                matched: 1,
                unmatched: 0
            }
        );
    }

    #[test]
    fn zero_candidates_counts_unmatched() {
        let es = build(&[TxnSpec {
            card: "c1",
            date: ts("2017-08-24 10:00:00"),
            original: None,
            amount: 50.0,
            currency: "EUR",
        }]);
        let labeled = match_reports(
            &es,
            "transactions",
            &[report("c1", "2017-08-24", 50.01)],
            &MatchColumns::default(),
        )
        .unwrap();
        assert_eq!(labeled.labels, vec![false]);
        assert_eq!(labeled.stats.unmatched, 1);
    }

    #[test]
    fn earliest_candidate_wins() {
        let es = build(&[
            TxnSpec {
                card: "c1",
                date: ts("2017-08-24 17:00:00"),
                original: None,
                amount: 50.0,
                currency: "EUR",
            },
            TxnSpec {
                card: "c1",
                date: ts("2017-08-24 09:00:00"),
                original: None,
                amount: 50.0,
                currency: "EUR",
            },
        ]);
        let labeled = match_reports(
            &es,
            "transactions",
            &[report("c1", "2017-08-24", 50.0)],
            &MatchColumns::default(),
        )
        .unwrap();
        assert_eq!(labeled.labels, vec![false, true]);
    }

    #[test]
    fn original_date_also_matches() {
        // Recorded two days after the operation; the report carries
        // the operation date.
        let es = build(&[TxnSpec {
            card: "c1",
            date: ts("2017-08-26 03:00:00"),
            original: Some(ts("2017-08-24 15:00:00")),
            amount: 20.0,
            currency: "EUR",
        }]);
        let labeled = match_reports(
            &es,
            "transactions",
            &[report("c1", "2017-08-24", 20.0)],
            &MatchColumns::default(),
        )
        .unwrap();
        assert_eq!(labeled.labels, vec![true]);
    }

    #[test]
    fn currency_must_agree_when_reported() {
        let es = build(&[TxnSpec {
            card: "c1",
            date: ts("2017-08-24 10:00:00"),
            original: None,
            amount: 50.0,
            currency: "EUR",
        }]);
        let mut with_currency = report("c1", "2017-08-24", 50.0);
        with_currency.currency = Some("USD".into());
        let labeled = match_reports(
            &es,
            "transactions",
            &[with_currency],
            &MatchColumns::default(),
        )
        .unwrap();
        assert_eq!(labeled.stats.unmatched, 1);
    }

    #[test]
    fn each_transaction_matches_at_most_once() {
        let es = build(&[TxnSpec {
            card: "c1",
            date: ts("2017-08-24 10:00:00"),
            original: None,
            amount: 50.0,
            currency: "EUR",
        }]);
        let reports = vec![
            report("c1", "2017-08-24", 50.0),
            report("c1", "2017-08-24", 50.0),
        ];
        let labeled =
            match_reports(&es, "transactions", &reports, &MatchColumns::default()).unwrap();
        assert_eq!(labeled.stats.matched, 1);
        assert_eq!(labeled.stats.unmatched, 1);
    }

    #[test]
    fn matching_is_order_insensitive() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for round in 0..30 {
            // Small random instance with deliberate collisions.
            let cards = ["c1", "c2"];
            let amounts = [10.0, 20.0];
            let txns: Vec<TxnSpec> = (0..8)
                .map(|_| TxnSpec {
                    card: cards[rng.random_range(0..2)],
                    date: ts("2017-08-24 00:00:00") + rng.random_range(0..2 * 86_400),
                    original: None,
                    amount: amounts[rng.random_range(0..2)],
                    currency: "EUR",
                })
                .collect();
            let es = build(&txns);
            let mut reports: Vec<FraudReport> = (0..6)
                .map(|_| {
                    report(
                        cards[rng.random_range(0..2)],
                        if rng.random_bool(0.5) {
                            "2017-08-24"
                        } else {
                            "2017-08-25"
                        },
                        amounts[rng.random_range(0..2)],
                    )
                })
                .collect();
            let a = match_reports(&es, "transactions", &reports, &MatchColumns::default())
                .unwrap();
            reports.shuffle(&mut rng);
            let b = match_reports(&es, "transactions", &reports, &MatchColumns::default())
                .unwrap();
            assert_eq!(a.labels, b.labels, "round {round}");
            assert_eq!(a.stats, b.stats, "round {round}");
        }
    }

    #[test]
    fn matcher_agrees_with_naive_reimplementation() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        // Independent matcher: no buckets, straight scans following
        // the declared rules.
        fn naive(es: &EntitySet, reports: &[FraudReport]) -> Vec<bool> {
            let entity = es.entity("transactions").unwrap();
            let n = entity.n_rows();
            let card_c = entity.column_index("card_id").unwrap();
            let ts_c = entity.column_index("date").unwrap();
            let orig_c = entity.column_index("original_date").unwrap();
            let amt_c = entity.column_index("amount").unwrap();

            let mut order: Vec<usize> = (0..reports.len()).collect();
            order.sort_by(|&a, &b| {
                let (ra, rb) = (&reports[a], &reports[b]);
                (&ra.card, ra.date, ra.amount_cents()).cmp(&(&rb.card, rb.date, rb.amount_cents()))
            });
            let mut labels = vec![false; n];
            for &ri in &order {
                let rep = &reports[ri];
                let day = day_of_date(rep.date);
                let mut best: Option<(i64, usize)> = None;
                for row in 0..n {
                    if labels[row] {
                        continue;
                    }
                    if entity.str_at(card_c, row) != Some(rep.card.as_str()) {
                        continue;
                    }
                    let t = entity.ts_at(ts_c, row).unwrap();
                    let o = entity.ts_at(orig_c, row).unwrap();
                    if day_of_ts(t) != day && day_of_ts(o) != day {
                        continue;
                    }
                    let a = entity.float_at(amt_c, row).unwrap();
                    if (a * 100.0).round() as i64 != rep.amount_cents() {
                        continue;
                    }
                    if best.map(|(bt, br)| (t, row) < (bt, br)).unwrap_or(true) {
                        best = Some((t, row));
                    }
                }
                if let Some((_, row)) = best {
                    labels[row] = true;
                }
            }
            labels
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        for round in 0..40 {
            let cards = ["c1", "c2", "c3"];
            let txns: Vec<TxnSpec> = (0..10)
                .map(|_| TxnSpec {
                    card: cards[rng.random_range(0..3)],
                    date: ts("2017-08-20 00:00:00") + rng.random_range(0..5 * 86_400),
                    original: rng
                        .random_bool(0.3)
                        .then(|| ts("2017-08-20 00:00:00") + rng.random_range(0..5 * 86_400)),
                    amount: [5.0, 9.99, 12.5][rng.random_range(0..3)],
                    currency: "EUR",
                })
                .collect();
            let es = build(&txns);
            let reports: Vec<FraudReport> = (0..7)
                .map(|_| {
                    report(
                        cards[rng.random_range(0..3)],
                        ["2017-08-20", "2017-08-21", "2017-08-22", "2017-08-23"]
                            [rng.random_range(0..4)],
                        [5.0, 9.99, 12.5][rng.random_range(0..3)],
                    )
                })
                .collect();
            let fast = match_reports(&es, "transactions", &reports, &MatchColumns::default())
                .unwrap();
            assert_eq!(fast.labels, naive(&es, &reports), "round {round}");
        }
    }

    fn labeled_set(n_cards: usize, txns_per_card: usize, fraud_cards: &[usize]) -> (EntitySet, Vec<bool>) {
        let mut specs = Vec::new();
        let mut labels = Vec::new();
        let card_names: Vec<String> = (0..n_cards).map(|c| format!("c{c}")).collect();
        for c in 0..n_cards {
            for k in 0..txns_per_card {
                specs.push((card_names[c].clone(), (c * txns_per_card + k) as i64 * 100));
                labels.push(fraud_cards.contains(&c) && k == 0);
            }
        }
        let cards = Entity::new(
            "cards",
            "id",
            None,
            vec![Column::identifier("id", card_names)],
        )
        .unwrap();
        let txns = Entity::new(
            "transactions",
            "id",
            Some("date"),
            vec![
                Column::identifier("id", (0..specs.len()).map(|i| format!("t{i}")).collect()),
                Column::foreign_key(
                    "card_id",
                    "cards",
                    specs.iter().map(|(c, _)| Some(c.clone())).collect(),
                ),
                Column::timestamp("date", specs.iter().map(|&(_, t)| Some(t)).collect()),
            ],
        )
        .unwrap();
        let mut es = EntitySet::new();
        es.add_entity(cards).unwrap();
        es.add_entity(txns).unwrap();
        es.add_relationship(Relationship {
            parent: "cards".into(),
            parent_key: "id".into(),
            child: "transactions".into(),
            child_fk: "card_id".into(),
        })
        .unwrap();
        (es, labels)
    }

    #[test]
    fn sampling_keeps_fraud_cards_and_ratio_clean_cards() {
        let (es, labels) = labeled_set(10, 4, &[0, 5]);
        let (sampled, stats) = sample_cards(&es, "cards", "transactions", &labels, 1.0, 7).unwrap();
        assert_eq!(stats.fraud_cards, 2);
        assert_eq!(stats.clean_taken, 2);
        assert_eq!(sampled.entity("cards").unwrap().n_rows(), 4);
        // Full histories: every kept card still has 4 transactions.
        assert_eq!(sampled.entity("transactions").unwrap().n_rows(), 16);
    }

    #[test]
    fn ratio_zero_keeps_only_fraud_cards() {
        let (es, labels) = labeled_set(10, 4, &[3]);
        let (sampled, _) = sample_cards(&es, "cards", "transactions", &labels, 0.0, 7).unwrap();
        assert_eq!(sampled.entity("cards").unwrap().n_rows(), 1);
        assert_eq!(sampled.entity("transactions").unwrap().n_rows(), 4);
    }

    #[test]
    fn oversized_ratio_takes_all_clean_cards() {
        let (es, labels) = labeled_set(5, 2, &[0]);
        let (sampled, stats) =
            sample_cards(&es, "cards", "transactions", &labels, 100.0, 7).unwrap();
        assert_eq!(stats.clean_requested, 100);
        assert_eq!(stats.clean_taken, 4);
        assert_eq!(sampled.entity("cards").unwrap().n_rows(), 5);
    }

    #[test]
    fn split_stratification_is_exact_on_round_numbers() {
        let mut labels = vec![true; 100];
        labels.extend(vec![false; 9900]);
        let s = split(&labels, (0.55, 0.07, 0.38), 1).unwrap();
        let count = |part: &[usize], want: bool| {
            part.iter().filter(|&&i| labels[i] == want).count()
        };
        assert_eq!(count(&s.train, true), 55);
        assert_eq!(count(&s.train, false), 5445);
        assert_eq!(count(&s.tune, true), 7);
        assert_eq!(count(&s.tune, false), 693);
        assert_eq!(count(&s.test, true), 38);
        assert_eq!(count(&s.test, false), 3762);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let labels: Vec<bool> = (0..500).map(|i| i % 17 == 0).collect();
        let a = split(&labels, (0.55, 0.07, 0.38), 42).unwrap();
        let b = split(&labels, (0.55, 0.07, 0.38), 42).unwrap();
        assert_eq!(a, b);

        let mut all: Vec<usize> = a.train.iter().chain(&a.tune).chain(&a.test).copied().collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..500).collect();
        assert_eq!(all, expected);
    }

    #[test]
    fn fraud_fraction_is_preserved_within_rounding() {
        let labels: Vec<bool> = (0..4000).map(|i| i % 20 == 0).collect(); // 5%
        let s = split(&labels, (0.55, 0.07, 0.38), 3).unwrap();
        for part in [&s.train, &s.tune, &s.test] {
            let frac =
                part.iter().filter(|&&i| labels[i]).count() as f64 / part.len() as f64;
            assert!((frac - 0.05).abs() < 0.005, "{frac}");
        }
    }

    #[test]
    fn tiny_stratum_errors_with_name() {
        let mut labels = vec![false; 100];
        labels[0] = true; // one positive cannot reach all three parts
        let err = split(&labels, (0.55, 0.07, 0.38), 1).unwrap_err();
        assert!(matches!(err, Error::StratumTooSmall(_)), "{err}");
        assert!(err.to_string().contains("label=1"));
    }

    #[test]
    fn grouped_split_keeps_cards_whole() {
        let group_of: Vec<Option<u32>> = (0..300).map(|i| Some(i as u32 / 3)).collect();
        let labels: Vec<bool> = (0..300).map(|i| i % 30 == 0).collect();
        let s = split_grouped(&group_of, &labels, (0.6, 0.2, 0.2), 9).unwrap();
        let part_of = |row: usize| -> u8 {
            if s.train.contains(&row) {
                0
            } else if s.tune.contains(&row) {
                1
            } else {
                2
            }
        };
        for g in 0..100u32 {
            let rows: Vec<usize> = (0..300)
                .filter(|&r| group_of[r] == Some(g))
                .collect();
            let parts: std::collections::HashSet<u8> =
                rows.iter().map(|&r| part_of(r)).collect();
            assert_eq!(parts.len(), 1, "card {g} straddles parts");
        }
    }
}
