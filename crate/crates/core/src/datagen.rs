//! Seeded synthetic transaction-stream generator.
//!
//! Each card gets a fixed behavioral profile (typical amount, active
//! hours, home country, preferred merchants, shopping intensity).
//! Legitimate traffic is sampled from the card's own profile. Fraud
//! on a compromised card is sampled from a *donor* profile chosen to
//! be population-typical but far from the victim's habits. The
//! marginal distribution of fraudulent amounts therefore overlaps the
//! legitimate population, while the distance to the victim card's own
//! history stays large: a single transaction looks ordinary, the
//! card's history makes it stand out. Generation is single-threaded
//! on one seeded RNG, so a seed fully determines every byte written.

use std::path::Path;

use chrono::DateTime;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataprep::FraudReport;
use crate::entityset::{
    write_schema, Column, ColumnKind, ColumnSpec, Entity, EntitySchema, EntitySet, NumericUnit,
    Relationship,
};
use crate::error::{Error, Result};

/// Country code paired with its settlement currency; the first entry
/// is the most common home country.
const COUNTRIES: &[(&str, &str)] = &[
    ("ES", "EUR"),
    ("FR", "EUR"),
    ("DE", "EUR"),
    ("PT", "EUR"),
    ("IT", "EUR"),
    ("NL", "EUR"),
    ("BE", "EUR"),
    ("GB", "GBP"),
    ("US", "USD"),
    ("MA", "MAD"),
];
const HOME_WEIGHTS: &[f64] = &[0.55, 0.12, 0.08, 0.07, 0.05, 0.04, 0.04, 0.03, 0.01, 0.01];
const TERMINALS: &[&str] = &["chip", "contactless", "magstripe", "ecom"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_cards: usize,
    pub days: u32,
    pub seed: u64,
    /// Epoch seconds of the first generated day (midnight UTC).
    pub start: i64,
    /// Fraction of cards that get compromised.
    pub fraud_card_rate: f64,
    /// Target fraction of all transactions that are fraudulent.
    pub fraud_txn_rate: f64,
    /// Mean legitimate transactions per card per day.
    pub mean_txns_per_day: f64,
    /// Fraction of fraud reports deliberately off by one cent, so they
    /// can never match a transaction.
    pub unmatched_report_rate: f64,
    pub n_merchants: usize,
    pub n_merchant_categories: usize,
    pub n_acquirers: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_cards: 4000,
            days: 180,
            seed: 7,
            // 2017-02-01 00:00:00 UTC
            start: 1_485_907_200,
            fraud_card_rate: 0.05,
            fraud_txn_rate: 0.02,
            mean_txns_per_day: 0.16,
            unmatched_report_rate: 0.02,
            n_merchants: 40,
            n_merchant_categories: 12,
            n_acquirers: 8,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cards == 0 || self.days == 0 {
            return Err(Error::InvalidArgument(
                "need at least one card and one day".into(),
            ));
        }
        for (name, rate) in [
            ("fraud_card_rate", self.fraud_card_rate),
            ("fraud_txn_rate", self.fraud_txn_rate),
            ("unmatched_report_rate", self.unmatched_report_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1), got {rate}"
                )));
            }
        }
        if !(self.mean_txns_per_day > 0.0) {
            return Err(Error::InvalidArgument(
                "mean_txns_per_day must be positive".into(),
            ));
        }
        if self.start % 86_400 != 0 {
            return Err(Error::InvalidArgument(
                "start must be midnight UTC".into(),
            ));
        }
        if self.n_merchants == 0 || self.n_merchant_categories == 0 || self.n_acquirers == 0 {
            return Err(Error::InvalidArgument(
                "categorical domains must be nonempty".into(),
            ));
        }
        Ok(())
    }
}

struct CardProfile {
    mean_amount: f64,
    amount_sigma: f64,
    hour_center: f64,
    hour_spread: f64,
    home_country: usize,
    preferred_merchants: Vec<usize>,
    cnp_rate: f64,
    intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Txn {
    pub card: usize,
    pub date: i64,
    pub original_date: i64,
    pub amount: f64,
    pub currency: String,
    pub country: String,
    pub merchant_id: String,
    pub merchant_category: String,
    pub acquirer_id: String,
    pub customer_present: bool,
    pub terminal_type: String,
}

/// Generated stream plus ground truth (which rows are fraud) that the
/// pipeline itself never sees; labels must come from report matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub card_ids: Vec<String>,
    pub card_home_country: Vec<String>,
    pub txn_ids: Vec<String>,
    pub txns: Vec<Txn>,
    pub reports: Vec<FraudReport>,
    pub fraud_truth: Vec<bool>,
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

// Every merchant has one fixed category and one fixed acquirer.
fn merchant_category(m: usize, cfg: &GenConfig) -> usize {
    m % cfg.n_merchant_categories
}

fn merchant_acquirer(m: usize, cfg: &GenConfig) -> usize {
    (m / 3 + m) % cfg.n_acquirers
}

fn sample_profile(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> CardProfile {
    let log_mean: f64 = Normal::new(3.3, 0.55).unwrap().sample(rng);
    let n_pref = rng.random_range(3..=8).min(cfg.n_merchants);
    let preferred_merchants =
        rand::seq::index::sample(rng, cfg.n_merchants, n_pref).into_vec();
    let home = {
        let x: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = 0;
        for (i, w) in HOME_WEIGHTS.iter().enumerate() {
            acc += w;
            if x < acc {
                pick = i;
                break;
            }
            pick = i;
        }
        pick
    };
    CardProfile {
        mean_amount: log_mean.exp(),
        amount_sigma: rng.random_range(0.3..0.6),
        hour_center: rng.random_range(9.0..21.0),
        hour_spread: rng.random_range(1.5..3.5),
        home_country: home,
        preferred_merchants,
        cnp_rate: rng.random_range(0.05..0.45),
        intensity: (cfg.mean_txns_per_day * rng.random_range(0.4..1.6)).max(0.01),
    }
}

fn sample_hour(rng: &mut ChaCha8Rng, center: f64, spread: f64) -> f64 {
    let dist = Normal::new(center, spread).unwrap();
    for _ in 0..64 {
        let h = dist.sample(rng);
        if (0.0..24.0).contains(&h) {
            return h;
        }
    }
    center.clamp(0.0, 23.9)
}

fn settlement_lag_days(rng: &mut ChaCha8Rng) -> i64 {
    let x: f64 = rng.random();
    if x < 0.65 {
        0
    } else if x < 0.90 {
        1
    } else {
        2
    }
}

fn legit_txn(rng: &mut ChaCha8Rng, cfg: &GenConfig, p: &CardProfile, card: usize, original: i64) -> Txn {
    let amount = round_cents(
        LogNormal::new(p.mean_amount.ln(), p.amount_sigma)
            .unwrap()
            .sample(rng)
            .max(0.5),
    );
    let merchant = if rng.random_bool(0.8) {
        p.preferred_merchants[rng.random_range(0..p.preferred_merchants.len())]
    } else {
        rng.random_range(0..cfg.n_merchants)
    };
    let country = if rng.random_bool(0.97) {
        p.home_country
    } else {
        rng.random_range(0..COUNTRIES.len())
    };
    let customer_present = !rng.random_bool(p.cnp_rate);
    let terminal = if customer_present {
        TERMINALS[rng.random_range(0..3)]
    } else {
        "ecom"
    };
    let lag = settlement_lag_days(rng) * 86_400;
    Txn {
        card,
        date: original + lag,
        original_date: original,
        amount,
        currency: COUNTRIES[country].1.to_string(),
        country: COUNTRIES[country].0.to_string(),
        merchant_id: format!("m{merchant:02}"),
        merchant_category: format!("mc{:02}", merchant_category(merchant, cfg)),
        acquirer_id: format!("a{:02}", merchant_acquirer(merchant, cfg)),
        customer_present,
        terminal_type: terminal.to_string(),
    }
}

fn fraud_txn(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    victim: &CardProfile,
    donor: &CardProfile,
    card: usize,
    original: i64,
) -> Txn {
    let amount = round_cents(
        LogNormal::new(donor.mean_amount.ln(), donor.amount_sigma)
            .unwrap()
            .sample(rng)
            .max(0.5),
    );
    // A merchant the victim never shops at.
    let merchant = loop {
        let m = rng.random_range(0..cfg.n_merchants);
        if !victim.preferred_merchants.contains(&m) || cfg.n_merchants <= 8 {
            break m;
        }
    };
    let country = if rng.random_bool(0.7) {
        // Somewhere that is not the victim's home country.
        let mut c = rng.random_range(0..COUNTRIES.len());
        if c == victim.home_country {
            c = (c + 1) % COUNTRIES.len();
        }
        c
    } else {
        donor.home_country
    };
    let customer_present = rng.random_bool(0.15);
    let lag = settlement_lag_days(rng) * 86_400;
    Txn {
        card,
        date: original + lag,
        original_date: original,
        amount,
        currency: COUNTRIES[country].1.to_string(),
        country: COUNTRIES[country].0.to_string(),
        merchant_id: format!("m{merchant:02}"),
        merchant_category: format!("mc{:02}", merchant_category(merchant, cfg)),
        acquirer_id: format!("a{:02}", merchant_acquirer(merchant, cfg)),
        customer_present,
        terminal_type: if customer_present {
            TERMINALS[rng.random_range(0..3)].to_string()
        } else {
            "ecom".to_string()
        },
    }
}

pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Phase 1: fixed per-card profiles.
    let profiles: Vec<CardProfile> =
        (0..cfg.n_cards).map(|_| sample_profile(&mut rng, cfg)).collect();

    // Phase 2: legitimate traffic, card by card.
    let mut per_card: Vec<Vec<(Txn, bool)>> = Vec::with_capacity(cfg.n_cards);
    for (card, profile) in profiles.iter().enumerate() {
        let poisson = Poisson::new(profile.intensity).unwrap();
        let mut txns = Vec::new();
        for day in 0..cfg.days as i64 {
            let k = poisson.sample(&mut rng) as usize;
            for _ in 0..k {
                let hour = sample_hour(&mut rng, profile.hour_center, profile.hour_spread);
                let original =
                    cfg.start + day * 86_400 + (hour * 3600.0) as i64 + rng.random_range(0..60);
                txns.push((legit_txn(&mut rng, cfg, profile, card, original), false));
            }
        }
        per_card.push(txns);
    }

    // Phase 3: compromise cards and plant fraud bursts sized to hit
    // the configured share of total volume.
    let n_fraud_cards = (cfg.n_cards as f64 * cfg.fraud_card_rate).round() as usize;
    let fraud_cards = rand::seq::index::sample(&mut rng, cfg.n_cards, n_fraud_cards).into_vec();
    let expected_legit = cfg.n_cards as f64 * cfg.days as f64 * cfg.mean_txns_per_day;
    let fraud_total = if n_fraud_cards == 0 {
        0
    } else {
        (cfg.fraud_txn_rate / (1.0 - cfg.fraud_txn_rate) * expected_legit).round() as usize
    };
    for (i, &card) in fraud_cards.iter().enumerate() {
        // Spread the target count as evenly as integer arithmetic allows.
        let burst = fraud_total / n_fraud_cards
            + usize::from(i < fraud_total % n_fraud_cards);
        if burst == 0 {
            continue;
        }
        let victim = &profiles[card];
        // Donor habits must be far from the victim's typical amount,
        // while remaining a perfectly ordinary population profile.
        let mut donor_idx = card;
        for _ in 0..256 {
            let cand = rng.random_range(0..cfg.n_cards);
            if cand == card {
                continue;
            }
            let ratio = profiles[cand].mean_amount / victim.mean_amount;
            donor_idx = cand;
            if ratio >= 2.0 || ratio <= 0.5 {
                break;
            }
        }
        let donor = &profiles[donor_idx];

        // Fraud starts only after enough history has accumulated. The
        // abuse runs its course within hours: the signal the model can
        // rely on is the mismatch with the card's standing profile,
        // not a lasting change in the card's own traffic.
        let first_second = (cfg.days as i64 * 2 / 5).max(1) * 86_400;
        let window_end = cfg.days as i64 * 86_400;
        let available = (window_end - first_second).max(2);
        let gap_cap = 21_600.min(available / (burst as i64 + 1)).max(1200);
        let gap_floor = (gap_cap / 12).max(600);
        let gaps: Vec<i64> = (0..burst)
            .map(|_| rng.random_range(gap_floor..=gap_cap))
            .collect();
        let span: i64 = gaps.iter().sum();
        let latest = (window_end - span).max(first_second + 1);
        let mut t = cfg.start + rng.random_range(first_second..latest);
        for gap in gaps {
            per_card[card].push((fraud_txn(&mut rng, cfg, victim, donor, card, t), true));
            t += gap;
        }
        // The bank blocks the card shortly after the abuse, so the
        // victim's own spending stops instead of trailing on with a
        // fraud-tainted history.
        let blocked = t + rng.random_range(43_200..2 * 86_400);
        per_card[card].retain(|(txn, is_fraud)| *is_fraud || txn.original_date < blocked);
    }

    // Phase 4: per-card recorded times made strictly increasing, then
    // a global chronological ordering.
    let mut all: Vec<(Txn, bool)> = Vec::new();
    for txns in &mut per_card {
        txns.sort_by_key(|(t, _)| (t.date, t.original_date));
        let mut last = i64::MIN;
        for (t, _) in txns.iter_mut() {
            if t.date <= last {
                t.date = last + 1;
            }
            last = t.date;
        }
        all.append(txns);
    }
    all.sort_by(|(a, _), (b, _)| (a.date, a.card, a.original_date).cmp(&(b.date, b.card, b.original_date)));

    // Phase 5: fraud reports, dated by the operation day.
    let mut reports = Vec::new();
    for (txn, is_fraud) in &all {
        if !is_fraud {
            continue;
        }
        let mut amount = txn.amount;
        if rng.random_bool(cfg.unmatched_report_rate) {
            amount = round_cents(amount + 0.01);
        }
        let date = DateTime::from_timestamp(txn.original_date, 0)
            .expect("generated timestamps are valid")
            .date_naive();
        reports.push(FraudReport {
            card: format!("c{:05}", txn.card),
            date,
            amount,
            currency: Some(txn.currency.clone()),
        });
    }

    let card_ids = (0..cfg.n_cards).map(|c| format!("c{c:05}")).collect();
    let card_home_country = profiles
        .iter()
        .map(|p| COUNTRIES[p.home_country].0.to_string())
        .collect();
    let txn_ids = (0..all.len()).map(|i| format!("t{i:07}")).collect();
    let (txns, fraud_truth): (Vec<Txn>, Vec<bool>) = all.into_iter().unzip();
    Ok(Dataset {
        card_ids,
        card_home_country,
        txn_ids,
        txns,
        reports,
        fraud_truth,
    })
}

fn cards_schema() -> EntitySchema {
    EntitySchema {
        entity: "cards".into(),
        key: "id".into(),
        time_index: None,
        columns: vec![
            ColumnSpec {
                name: "id".into(),
                kind: ColumnKind::Identifier,
            },
            ColumnSpec {
                name: "home_country".into(),
                kind: ColumnKind::Categorical,
            },
        ],
    }
}

fn transactions_schema() -> EntitySchema {
    let cat = |name: &str| ColumnSpec {
        name: name.into(),
        kind: ColumnKind::Categorical,
    };
    EntitySchema {
        entity: "transactions".into(),
        key: "id".into(),
        time_index: Some("date".into()),
        columns: vec![
            ColumnSpec {
                name: "id".into(),
                kind: ColumnKind::Identifier,
            },
            ColumnSpec {
                name: "card_id".into(),
                kind: ColumnKind::ForeignKey {
                    target: "cards".into(),
                },
            },
            ColumnSpec {
                name: "date".into(),
                kind: ColumnKind::Timestamp,
            },
            ColumnSpec {
                name: "original_date".into(),
                kind: ColumnKind::Timestamp,
            },
            ColumnSpec {
                name: "amount".into(),
                kind: ColumnKind::Numeric {
                    unit: NumericUnit::Euro,
                },
            },
            cat("currency"),
            cat("country"),
            cat("merchant_id"),
            cat("merchant_category"),
            cat("acquirer_id"),
            ColumnSpec {
                name: "customer_present".into(),
                kind: ColumnKind::Boolean,
            },
            cat("terminal_type"),
        ],
    }
}

fn format_ts(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .expect("generated timestamps are valid")
        .format("%Y-%m-%d %H:%M:%S")
        .to_string()
}

/// Write cards.csv, transactions.csv, fraud_reports.csv and the two
/// schema sidecars into `dir`. When a config hash is given, each CSV
/// starts with a `# config_hash=` comment the loaders skip.
pub fn write_dataset(dir: &Path, data: &Dataset, config_hash: Option<&str>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let io_err = |p: &Path| {
        let p = p.display().to_string();
        move |e: csv::Error| Error::io(p.clone(), std::io::Error::other(e))
    };
    let open = |p: &Path| -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
        let file =
            std::fs::File::create(p).map_err(|e| Error::io(p.display().to_string(), e))?;
        let mut out = std::io::BufWriter::new(file);
        if let Some(hash) = config_hash {
            use std::io::Write;
            writeln!(out, "# config_hash={hash}")
                .map_err(|e| Error::io(p.display().to_string(), e))?;
        }
        Ok(csv::Writer::from_writer(out))
    };

    let cards_path = dir.join("cards.csv");
    let mut w = open(&cards_path)?;
    w.write_record(["id", "home_country"]).map_err(io_err(&cards_path))?;
    for (id, country) in data.card_ids.iter().zip(&data.card_home_country) {
        w.write_record([id, country]).map_err(io_err(&cards_path))?;
    }
    w.flush().map_err(|e| Error::io(cards_path.display().to_string(), e))?;

    let txn_path = dir.join("transactions.csv");
    let mut w = open(&txn_path)?;
    w.write_record([
        "id",
        "card_id",
        "date",
        "original_date",
        "amount",
        "currency",
        "country",
        "merchant_id",
        "merchant_category",
        "acquirer_id",
        "customer_present",
        "terminal_type",
    ])
    .map_err(io_err(&txn_path))?;
    for (id, t) in data.txn_ids.iter().zip(&data.txns) {
        w.write_record([
            id.as_str(),
            &data.card_ids[t.card],
            &format_ts(t.date),
            &format_ts(t.original_date),
            &format!("{:.2}", t.amount),
            &t.currency,
            &t.country,
            &t.merchant_id,
            &t.merchant_category,
            &t.acquirer_id,
            if t.customer_present { "true" } else { "false" },
            &t.terminal_type,
        ])
        .map_err(io_err(&txn_path))?;
    }
    w.flush().map_err(|e| Error::io(txn_path.display().to_string(), e))?;

    let report_path = dir.join("fraud_reports.csv");
    let mut w = open(&report_path)?;
    w.write_record(["card_number", "operation_date", "amount", "currency"])
        .map_err(io_err(&report_path))?;
    for r in &data.reports {
        w.write_record([
            r.card.as_str(),
            &r.date.format("%Y-%m-%d").to_string(),
            &format!("{:.2}", r.amount),
            r.currency.as_deref().unwrap_or(""),
        ])
        .map_err(io_err(&report_path))?;
    }
    w.flush().map_err(|e| Error::io(report_path.display().to_string(), e))?;

    write_schema(&dir.join("cards.schema.json"), &cards_schema())?;
    write_schema(&dir.join("transactions.schema.json"), &transactions_schema())?;
    Ok(())
}

/// Build the in-memory entity set directly, bypassing the CSV round
/// trip. Produces the same entities `load_entity` would.
pub fn to_entityset(data: &Dataset) -> Result<EntitySet> {
    let cards = Entity::new(
        "cards",
        "id",
        None,
        vec![
            Column::identifier("id", data.card_ids.clone()),
            Column::categorical(
                "home_country",
                data.card_home_country.iter().map(|c| Some(c.clone())).collect(),
            ),
        ],
    )?;
    let t = &data.txns;
    let some = |f: fn(&Txn) -> String| -> Vec<Option<String>> {
        t.iter().map(|x| Some(f(x))).collect()
    };
    let txns = Entity::new(
        "transactions",
        "id",
        Some("date"),
        vec![
            Column::identifier("id", data.txn_ids.clone()),
            Column::foreign_key(
                "card_id",
                "cards",
                t.iter().map(|x| Some(data.card_ids[x.card].clone())).collect(),
            ),
            Column::timestamp("date", t.iter().map(|x| Some(x.date)).collect()),
            Column::timestamp(
                "original_date",
                t.iter().map(|x| Some(x.original_date)).collect(),
            ),
            Column::numeric(
                "amount",
                NumericUnit::Euro,
                t.iter().map(|x| Some(x.amount)).collect(),
            ),
            Column::categorical("currency", some(|x| x.currency.clone())),
            Column::categorical("country", some(|x| x.country.clone())),
            Column::categorical("merchant_id", some(|x| x.merchant_id.clone())),
            Column::categorical("merchant_category", some(|x| x.merchant_category.clone())),
            Column::categorical("acquirer_id", some(|x| x.acquirer_id.clone())),
            Column::boolean(
                "customer_present",
                t.iter().map(|x| Some(x.customer_present)).collect(),
            ),
            Column::categorical("terminal_type", some(|x| x.terminal_type.clone())),
        ],
    )?;
    let mut es = EntitySet::new();
    es.add_entity(cards)?;
    es.add_entity(txns)?;
    es.add_relationship(Relationship {
        parent: "cards".into(),
        parent_key: "id".into(),
        child: "transactions".into(),
        child_fk: "card_id".into(),
    })?;
    Ok(es)
}

/// Wide two-entity set for throughput measurements: 12 numeric, 8
/// categorical, 3 boolean, and 3 timestamp child columns, which the
/// full primitive registry turns into just over a hundred features.
pub fn bench_entityset(n_parents: usize, rows_per_parent: usize, seed: u64) -> Result<EntitySet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_parents * rows_per_parent;
    let parent_ids: Vec<String> = (0..n_parents).map(|p| format!("p{p:06}")).collect();

    let mut fks = Vec::with_capacity(n);
    let mut dates = Vec::with_capacity(n);
    for p in 0..n_parents {
        let mut t = 1_500_000_000_i64 + rng.random_range(0..86_400);
        for _ in 0..rows_per_parent {
            t += rng.random_range(1_800..90_000);
            fks.push(Some(parent_ids[p].clone()));
            dates.push(Some(t));
        }
    }

    let mut columns = vec![
        Column::identifier("id", (0..n).map(|i| format!("r{i:07}")).collect()),
        Column::foreign_key("parent_id", "parents", fks),
        Column::timestamp("date", dates.clone()),
    ];
    for k in 0..2 {
        let name = format!("ts{k}");
        let vals: Vec<Option<i64>> = dates
            .iter()
            .map(|d| {
                if rng.random_bool(0.03) {
                    None
                } else {
                    d.map(|t| t - rng.random_range(0..259_200))
                }
            })
            .collect();
        columns.push(Column::timestamp(&name, vals));
    }
    for k in 0..12 {
        let vals: Vec<Option<f64>> = (0..n)
            .map(|_| {
                if rng.random_bool(0.05) {
                    None
                } else {
                    Some(round_cents(rng.random_range(0.5..500.0)))
                }
            })
            .collect();
        columns.push(Column::numeric(
            &format!("num{k}"),
            NumericUnit::Dimensionless,
            vals,
        ));
    }
    for k in 0..8 {
        let vocab = 6 + 2 * k;
        let vals: Vec<Option<String>> = (0..n)
            .map(|_| {
                if rng.random_bool(0.04) {
                    None
                } else {
                    Some(format!("v{}", rng.random_range(0..vocab)))
                }
            })
            .collect();
        columns.push(Column::categorical(&format!("cat{k}"), vals));
    }
    for k in 0..3 {
        let vals: Vec<Option<bool>> = (0..n)
            .map(|_| {
                if rng.random_bool(0.05) {
                    None
                } else {
                    Some(rng.random_bool(0.5))
                }
            })
            .collect();
        columns.push(Column::boolean(&format!("flag{k}"), vals));
    }

    let parents = Entity::new(
        "parents",
        "id",
        None,
        vec![Column::identifier("id", parent_ids)],
    )?;
    let child = Entity::new("events", "id", Some("date"), columns)?;
    let mut es = EntitySet::new();
    es.add_entity(parents)?;
    es.add_entity(child)?;
    es.add_relationship(Relationship {
        parent: "parents".into(),
        parent_key: "id".into(),
        child: "events".into(),
        child_fk: "parent_id".into(),
    })?;
    Ok(es)
}
