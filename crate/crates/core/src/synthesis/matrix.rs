//! Feature matrix computation at per-row cutoff times.
//!
//! For each relationship the engine sorts target rows by (parent,
//! effective cutoff), then sweeps each parent's time-sorted children
//! once, ingesting rows into running accumulators and snapshotting
//! whenever the cutoff advances. Rows sharing (parent, effective
//! cutoff) reuse the same snapshot, which is what makes coarse
//! approximation grids cheap. Parents are processed in parallel;
//! output slots are disjoint, so results are independent of thread
//! count and schedule.
//!
//! Null cells are NaN in numeric columns (always the same bit
//! pattern), letting tests compare rows for bit identity.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;

use crate::entityset::{ChildIndex, ColumnData, Entity, EntitySet};
use crate::error::{Error, Result};
use crate::primitives::{AggPrimitive, TransformPrimitive, ValueClass};

use super::{CutoffPolicy, FeatureDefinition, FeatureExpr};

/// Column payload of a computed matrix. Categorical columns come from
/// MODE features and carry the source column's dictionary.
#[derive(Debug, Clone)]
pub enum FeatureValues {
    Numeric(Vec<f64>),
    Categorical {
        codes: Vec<Option<u32>>,
        dict: Vec<String>,
    },
}

#[derive(Debug, Clone)]
pub struct FeatureColumn {
    pub name: String,
    pub class: ValueClass,
    pub values: FeatureValues,
}

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    /// Target entity keys, aligned with every column.
    pub row_ids: Vec<String>,
    pub columns: Vec<FeatureColumn>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn numeric(&self, col: usize) -> &[f64] {
        match &self.columns[col].values {
            FeatureValues::Numeric(v) => v,
            _ => panic!("column {col} is categorical"),
        }
    }

    pub fn categorical(&self, col: usize, row: usize) -> Option<&str> {
        match &self.columns[col].values {
            FeatureValues::Categorical { codes, dict } => {
                codes[row].map(|c| dict[c as usize].as_str())
            }
            _ => panic!("column {col} is numeric"),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// An aggregation bound to its source column (possibly transformed).
struct AggPlan {
    feature: usize,
    agg: AggPrimitive,
    col: usize,
    transform: Option<TransformPrimitive>,
}

/// Running state of one aggregation over a growing history prefix.
enum Acc {
    Sum(f64),
    Mean { total: f64, n: u64 },
    Std { n: u64, m: f64, m2: f64 },
    Count(u64),
    Unique(HashSet<u64>),
    Mode {
        counts: HashMap<u32, u32>,
        best: Option<u32>,
    },
    Atb { n: u64, min: i64, max: i64 },
}

fn make_acc(agg: AggPrimitive) -> Acc {
    match agg {
        AggPrimitive::Sum => Acc::Sum(0.0),
        AggPrimitive::Mean => Acc::Mean { total: 0.0, n: 0 },
        AggPrimitive::Std => Acc::Std {
            n: 0,
            m: 0.0,
            m2: 0.0,
        },
        AggPrimitive::Count => Acc::Count(0),
        AggPrimitive::NumUnique => Acc::Unique(HashSet::new()),
        AggPrimitive::Mode => Acc::Mode {
            counts: HashMap::new(),
            best: None,
        },
        AggPrimitive::AvgTimeBetween => Acc::Atb {
            n: 0,
            min: i64::MAX,
            max: i64::MIN,
        },
    }
}

/// Numeric view of the plan's source cell: raw numeric or boolean
/// column, or a transform of a timestamp column.
fn numeric_value(entity: &Entity, plan: &AggPlan, row: usize) -> Option<f64> {
    match plan.transform {
        Some(t) => entity.ts_at(plan.col, row).map(|ts| t.apply(ts)),
        None => entity.float_at(plan.col, row),
    }
}

/// Equality key for NUM_UNIQUE: dictionary codes for strings, 0/1 for
/// booleans, bit patterns for numerics, transform outputs as integers.
fn unique_key(entity: &Entity, plan: &AggPlan, row: usize) -> Option<u64> {
    if let Some(t) = plan.transform {
        return entity.ts_at(plan.col, row).map(|ts| t.apply(ts) as u64);
    }
    match &entity.columns[plan.col].data {
        ColumnData::Str(c) => c.codes[row].map(|code| code as u64),
        ColumnData::Bool(v) => v[row].map(|b| b as u64),
        ColumnData::Float(v) => v[row].map(|f| f.to_bits()),
        ColumnData::Timestamp(v) => v[row].map(|t| t as u64),
    }
}

fn is_present(entity: &Entity, col: usize, row: usize) -> bool {
    match &entity.columns[col].data {
        ColumnData::Str(c) => c.codes[row].is_some(),
        ColumnData::Bool(v) => v[row].is_some(),
        ColumnData::Float(v) => v[row].is_some(),
        ColumnData::Timestamp(v) => v[row].is_some(),
    }
}

fn update(acc: &mut Acc, entity: &Entity, plan: &AggPlan, row: usize) {
    match acc {
        Acc::Sum(total) => {
            if let Some(v) = numeric_value(entity, plan, row) {
                *total += v;
            }
        }
        Acc::Mean { total, n } => {
            if let Some(v) = numeric_value(entity, plan, row) {
                *total += v;
                *n += 1;
            }
        }
        Acc::Std { n, m, m2 } => {
            if let Some(v) = numeric_value(entity, plan, row) {
                *n += 1;
                let delta = v - *m;
                *m += delta / *n as f64;
                *m2 += delta * (v - *m);
            }
        }
        Acc::Count(n) => {
            if is_present(entity, plan.col, row) {
                *n += 1;
            }
        }
        Acc::Unique(seen) => {
            if let Some(k) = unique_key(entity, plan, row) {
                seen.insert(k);
            }
        }
        Acc::Mode { counts, best } => {
            let ColumnData::Str(source) = &entity.columns[plan.col].data else {
                return;
            };
            if let Some(code) = source.codes[row] {
                let c = counts.entry(code).or_insert(0);
                *c += 1;
                let c = *c;
                // Only `code`'s count changed, so comparing it against
                // the stored best keeps the argmax exact. Ties go to
                // the lexicographically smaller value.
                match *best {
                    None => *best = Some(code),
                    Some(b) if b == code => {}
                    Some(b) => {
                        let b_count = counts[&b];
                        if c > b_count
                            || (c == b_count
                                && source.dict[code as usize] < source.dict[b as usize])
                        {
                            *best = Some(code);
                        }
                    }
                }
            }
        }
        Acc::Atb { n, min, max } => {
            if let Some(ts) = entity.ts_at(plan.col, row) {
                *n += 1;
                *min = (*min).min(ts);
                *max = (*max).max(ts);
            }
        }
    }
}

fn finish_numeric(acc: &Acc) -> f64 {
    match acc {
        Acc::Sum(total) => *total,
        Acc::Mean { total, n } => {
            if *n > 0 {
                total / *n as f64
            } else {
                f64::NAN
            }
        }
        Acc::Std { n, m2, .. } => {
            if *n >= 2 {
                (m2.max(0.0) / (*n - 1) as f64).sqrt()
            } else {
                f64::NAN
            }
        }
        Acc::Count(n) => *n as f64,
        Acc::Unique(seen) => seen.len() as f64,
        Acc::Atb { n, min, max } => {
            if *n >= 2 {
                (*max - *min) as f64 / (*n - 1) as f64
            } else {
                f64::NAN
            }
        }
        Acc::Mode { .. } => unreachable!("MODE snapshots through finish_code"),
    }
}

fn finish_code(acc: &Acc) -> Option<u32> {
    match acc {
        Acc::Mode { best, .. } => *best,
        _ => unreachable!("numeric accumulators snapshot through finish_numeric"),
    }
}

/// One contiguous run of permuted target rows sharing a parent.
struct Group {
    parent: Option<u32>,
    start: usize,
    end: usize,
}

/// Sweep one parent's history once, writing feature values for each of
/// its target rows (sorted by effective cutoff) into row-major slabs.
#[allow(clippy::too_many_arguments)]
fn fill_group(
    entity: &Entity,
    index: &ChildIndex,
    parent: Option<u32>,
    rows: &[u32],
    eff: &[i64],
    num_plans: &[AggPlan],
    mode_plans: &[AggPlan],
    num_out: &mut [f64],
    mode_out: &mut [Option<u32>],
) {
    let mut num_accs: Vec<Acc> = num_plans.iter().map(|p| make_acc(p.agg)).collect();
    let mut mode_accs: Vec<Acc> = mode_plans.iter().map(|p| make_acc(p.agg)).collect();
    let mut num_snap = vec![f64::NAN; num_plans.len()];
    let mut mode_snap = vec![None; mode_plans.len()];

    let (child_rows, child_times) = match parent {
        Some(p) => index.sorted_children(p as usize),
        None => (&[][..], &[][..]),
    };

    let mut ptr = 0usize;
    let mut last_cutoff: Option<i64> = None;
    for (i, &target_row) in rows.iter().enumerate() {
        let cutoff = eff[target_row as usize];
        if last_cutoff != Some(cutoff) {
            while ptr < child_times.len() && child_times[ptr] < cutoff {
                let child = child_rows[ptr] as usize;
                for (acc, plan) in num_accs.iter_mut().zip(num_plans) {
                    update(acc, entity, plan, child);
                }
                for (acc, plan) in mode_accs.iter_mut().zip(mode_plans) {
                    update(acc, entity, plan, child);
                }
                ptr += 1;
            }
            for (slot, acc) in num_snap.iter_mut().zip(&num_accs) {
                *slot = finish_numeric(acc);
            }
            for (slot, acc) in mode_snap.iter_mut().zip(&mode_accs) {
                *slot = finish_code(acc);
            }
            last_cutoff = Some(cutoff);
        }
        num_out[i * num_plans.len()..(i + 1) * num_plans.len()].copy_from_slice(&num_snap);
        mode_out[i * mode_plans.len()..(i + 1) * mode_plans.len()].copy_from_slice(&mode_snap);
    }
}

/// Compute every feature for every target row at its effective cutoff.
pub fn compute_matrix(
    es: &EntitySet,
    target: &str,
    features: &[FeatureDefinition],
    policy: &CutoffPolicy,
) -> Result<FeatureMatrix> {
    let entity = es.entity(target)?;
    let n = entity.n_rows();
    let time_col = entity.time_col.ok_or_else(|| {
        Error::SchemaMismatch(format!("target entity '{target}' has no time index"))
    })?;

    let eff: Vec<i64> = (0..n)
        .map(|r| {
            let ts = entity.ts_at(time_col, r).expect("time index is non-null");
            policy.effective_cutoff(ts)
        })
        .collect();

    // Resolve features against the schema and allocate output columns.
    let mut columns: Vec<FeatureColumn> = Vec::with_capacity(features.len());
    let mut transforms: Vec<(usize, TransformPrimitive, usize)> = Vec::new();
    let mut rel_plans: BTreeMap<usize, Vec<AggPlan>> = BTreeMap::new();

    for (fi, feature) in features.iter().enumerate() {
        let (rel, agg, col_name, transform) = match &feature.expr {
            FeatureExpr::TargetTransform { transform, column } => {
                let col = entity.column_index(column)?;
                transforms.push((fi, *transform, col));
                columns.push(FeatureColumn {
                    name: feature.canonical_name.clone(),
                    class: feature.output_class,
                    values: FeatureValues::Numeric(vec![f64::NAN; n]),
                });
                continue;
            }
            FeatureExpr::Aggregate {
                relationship,
                agg,
                column,
            } => (*relationship, *agg, column, None),
            FeatureExpr::AggregateTransform {
                relationship,
                agg,
                transform,
                column,
            } => (*relationship, *agg, column, Some(*transform)),
        };

        if rel >= es.relationships().len() || es.relationships()[rel].child != target {
            return Err(Error::InvalidArgument(format!(
                "feature '{}' references relationship {rel}, which does not have '{target}' as child",
                feature.canonical_name
            )));
        }
        let col = entity.column_index(col_name)?;
        let values = if agg == AggPrimitive::Mode {
            let ColumnData::Str(source) = &entity.columns[col].data else {
                return Err(Error::InvalidArgument(format!(
                    "feature '{}' applies MODE to a non-categorical column",
                    feature.canonical_name
                )));
            };
            FeatureValues::Categorical {
                codes: vec![None; n],
                dict: source.dict.clone(),
            }
        } else {
            FeatureValues::Numeric(vec![f64::NAN; n])
        };
        columns.push(FeatureColumn {
            name: feature.canonical_name.clone(),
            class: feature.output_class,
            values,
        });
        rel_plans.entry(rel).or_default().push(AggPlan {
            feature: fi,
            agg,
            col,
            transform,
        });
    }

    // Transform features read only the row's own columns.
    for &(fi, transform, col) in &transforms {
        let FeatureValues::Numeric(buf) = &mut columns[fi].values else {
            unreachable!("transform outputs are numeric");
        };
        for (row, slot) in buf.iter_mut().enumerate() {
            if let Some(ts) = entity.ts_at(col, row) {
                *slot = transform.apply(ts);
            }
        }
    }

    // Aggregation features, one parallel pass per relationship.
    for (rel, plans) in rel_plans {
        let index = es.child_index(rel);
        let (num_plans, mode_plans): (Vec<AggPlan>, Vec<AggPlan>) = plans
            .into_iter()
            .partition(|p| p.agg != AggPrimitive::Mode);

        // Permutation grouping rows by parent, then effective cutoff.
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_unstable_by_key(|&r| {
            (
                index.parent_of[r as usize].unwrap_or(u32::MAX),
                eff[r as usize],
                r,
            )
        });
        let mut groups: Vec<Group> = Vec::new();
        let mut start = 0;
        while start < n {
            let parent = index.parent_of[order[start] as usize];
            let mut end = start + 1;
            while end < n && index.parent_of[order[end] as usize] == parent {
                end += 1;
            }
            groups.push(Group { parent, start, end });
            start = end;
        }

        // Row-major slabs in permuted order; each group owns one
        // contiguous chunk, so groups can be filled in parallel.
        let nf = num_plans.len();
        let mf = mode_plans.len();
        let mut num_flat = vec![f64::NAN; n * nf];
        let mut mode_flat: Vec<Option<u32>> = vec![None; n * mf];

        let mut num_chunks: Vec<&mut [f64]> = Vec::with_capacity(groups.len());
        let mut mode_chunks: Vec<&mut [Option<u32>]> = Vec::with_capacity(groups.len());
        let (mut num_rest, mut mode_rest) = (&mut num_flat[..], &mut mode_flat[..]);
        for g in &groups {
            let (a, b) = num_rest.split_at_mut((g.end - g.start) * nf);
            num_chunks.push(a);
            num_rest = b;
            let (a, b) = mode_rest.split_at_mut((g.end - g.start) * mf);
            mode_chunks.push(a);
            mode_rest = b;
        }

        groups
            .par_iter()
            .zip(num_chunks)
            .zip(mode_chunks)
            .for_each(|((g, num_out), mode_out)| {
                fill_group(
                    entity,
                    index,
                    g.parent,
                    &order[g.start..g.end],
                    &eff,
                    &num_plans,
                    &mode_plans,
                    num_out,
                    mode_out,
                );
            });

        // Scatter permuted slabs back to original row order.
        for (j, plan) in num_plans.iter().enumerate() {
            let FeatureValues::Numeric(buf) = &mut columns[plan.feature].values else {
                unreachable!();
            };
            for (i, &row) in order.iter().enumerate() {
                buf[row as usize] = num_flat[i * nf + j];
            }
        }
        for (j, plan) in mode_plans.iter().enumerate() {
            let FeatureValues::Categorical { codes, .. } = &mut columns[plan.feature].values
            else {
                unreachable!();
            };
            for (i, &row) in order.iter().enumerate() {
                codes[row as usize] = mode_flat[i * mf + j];
            }
        }
    }

    let row_ids = (0..n).map(|r| entity.row_key(r).to_string()).collect();
    Ok(FeatureMatrix { row_ids, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entityset::{Column, Entity, NumericUnit, Relationship};
    use crate::primitives::{self, Registry};
    use crate::synthesis::synthesize;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Cards with interleaved histories; amounts are index-valued so
    /// expected aggregates are easy to state.
    fn build_set(
        fks: &[Option<&str>],
        stamps: &[i64],
        amounts: &[Option<f64>],
        countries: &[Option<&str>],
    ) -> EntitySet {
        let n = fks.len();
        let mut card_ids: Vec<String> = fks
            .iter()
            .flatten()
            .map(|s| s.to_string())
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
                Column::identifier("id", (0..n).map(|i| format!("t{i}")).collect()),
                Column::foreign_key(
                    "card_id",
                    "cards",
                    fks.iter().map(|f| f.map(|s| s.to_string())).collect(),
                ),
                Column::timestamp("date", stamps.iter().map(|&t| Some(t)).collect()),
                Column::numeric("amount", NumericUnit::Euro, amounts.to_vec()),
                Column::categorical(
                    "country",
                    countries.iter().map(|c| c.map(|s| s.to_string())).collect(),
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

    fn col<'m>(m: &'m FeatureMatrix, name: &str) -> &'m FeatureColumn {
        &m.columns[m.column_index(name).unwrap()]
    }

    #[test]
    fn mean_of_prior_amounts() {
        let es = build_set(
            &[Some("c1"), Some("c1"), Some("c1")],
            &[100, 200, 300],
            &[Some(10.0), Some(20.0), Some(99.0)],
            &[Some("ES"), Some("ES"), Some("ES")],
        );
        let features = synthesize(&es, "transactions", 2, &Registry::from_names("MEAN").unwrap())
            .unwrap();
        let m = compute_matrix(&es, "transactions", &features, &CutoffPolicy::exact()).unwrap();
        let mean = col(&m, "cards.MEAN(transactions.amount)");
        let FeatureValues::Numeric(v) = &mean.values else {
            panic!()
        };
        assert!(v[0].is_nan(), "no history before the first row");
        assert_eq!(v[1], 10.0);
        assert_eq!(v[2], 15.0);
    }

    #[test]
    fn first_transaction_gets_empty_set_values() {
        let es = build_set(
            &[Some("c1")],
            &[100],
            &[Some(42.0)],
            &[Some("ES")],
        );
        let features =
            synthesize(&es, "transactions", 2, &Registry::full()).unwrap();
        let m = compute_matrix(&es, "transactions", &features, &CutoffPolicy::exact()).unwrap();

        let FeatureValues::Numeric(count) =
            &col(&m, "cards.COUNT(transactions.id)").values
        else {
            panic!()
        };
        assert_eq!(count[0], 0.0);
        let FeatureValues::Numeric(sum) = &col(&m, "cards.SUM(transactions.amount)").values
        else {
            panic!()
        };
        assert_eq!(sum[0], 0.0);
        let FeatureValues::Numeric(mean) = &col(&m, "cards.MEAN(transactions.amount)").values
        else {
            panic!()
        };
        assert!(mean[0].is_nan());
        assert_eq!(m.categorical(m.column_index("cards.MODE(transactions.country)").unwrap(), 0), None);
    }

    #[test]
    fn null_foreign_key_rows_have_no_history() {
        let es = build_set(
            &[Some("c1"), None],
            &[100, 200],
            &[Some(10.0), Some(20.0)],
            &[Some("ES"), Some("FR")],
        );
        let features =
            synthesize(&es, "transactions", 1, &Registry::from_names("COUNT,MEAN").unwrap())
                .unwrap();
        let m = compute_matrix(&es, "transactions", &features, &CutoffPolicy::exact()).unwrap();
        let FeatureValues::Numeric(count) = &col(&m, "cards.COUNT(transactions.id)").values
        else {
            panic!()
        };
        assert_eq!(count[1], 0.0);
    }

    #[test]
    fn mode_tracks_most_frequent_prior_category() {
        let es = build_set(
            &[Some("c1"), Some("c1"), Some("c1"), Some("c1")],
            &[1, 2, 3, 4],
            &[Some(1.0); 4],
            &[Some("FR"), Some("ES"), Some("ES"), Some("FR")],
        );
        let features =
            synthesize(&es, "transactions", 1, &Registry::from_names("MODE").unwrap()).unwrap();
        let m = compute_matrix(&es, "transactions", &features, &CutoffPolicy::exact()).unwrap();
        let ci = m.column_index("cards.MODE(transactions.country)").unwrap();
        assert_eq!(m.categorical(ci, 0), None);
        assert_eq!(m.categorical(ci, 1), Some("FR"));
        // One FR, one ES: tie broken lexicographically.
        assert_eq!(m.categorical(ci, 2), Some("ES"));
        assert_eq!(m.categorical(ci, 3), Some("ES"));
    }

    /// Brute-force recomputation of one feature for one row, using the
    /// pure primitive functions over `children_before`.
    fn brute_force(
        es: &EntitySet,
        feature: &FeatureDefinition,
        row: usize,
        policy: &CutoffPolicy,
    ) -> (Option<f64>, Option<String>) {
        let txns = es.entity("transactions").unwrap();
        let cutoff = policy.effective_cutoff(txns.time_of(row).unwrap());
        match &feature.expr {
            FeatureExpr::TargetTransform { transform, column } => {
                let c = txns.column_index(column).unwrap();
                (txns.ts_at(c, row).map(|ts| transform.apply(ts)), None)
            }
            FeatureExpr::Aggregate {
                relationship,
                agg,
                column,
            }
            | FeatureExpr::AggregateTransform {
                relationship,
                agg,
                column,
                ..
            } => {
                let index = es.child_index(*relationship);
                let children: Vec<usize> = match index.parent_of[row] {
                    Some(p) => index
                        .children_before(p as usize, cutoff)
                        .iter()
                        .map(|&r| r as usize)
                        .collect(),
                    None => vec![],
                };
                let c = txns.column_index(column).unwrap();
                let transform = match &feature.expr {
                    FeatureExpr::AggregateTransform { transform, .. } => Some(*transform),
                    _ => None,
                };
                let nums: Vec<Option<f64>> = children
                    .iter()
                    .map(|&r| match transform {
                        Some(t) => txns.ts_at(c, r).map(|ts| t.apply(ts)),
                        None => txns.float_at(c, r),
                    })
                    .collect();
                match agg {
                    AggPrimitive::Sum => (Some(primitives::sum(&nums)), None),
                    AggPrimitive::Mean => (primitives::mean(&nums), None),
                    AggPrimitive::Std => (primitives::std_dev(&nums), None),
                    AggPrimitive::Count => {
                        let present: Vec<Option<&str>> =
                            children.iter().map(|&r| txns.str_at(c, r)).collect();
                        (Some(primitives::count(&present) as f64), None)
                    }
                    AggPrimitive::NumUnique => {
                        // Canonical string key per value so every
                        // eligible column kind goes through one path.
                        let keys: Vec<Option<String>> = children
                            .iter()
                            .map(|&r| match transform {
                                Some(t) => {
                                    txns.ts_at(c, r).map(|ts| format!("{}", t.apply(ts)))
                                }
                                None => match &txns.columns[c].data {
                                    ColumnData::Str(s) => s.get(r).map(|v| v.to_string()),
                                    ColumnData::Bool(v) => v[r].map(|b| format!("{b}")),
                                    ColumnData::Float(v) => {
                                        v[r].map(|f| format!("{:x}", f.to_bits()))
                                    }
                                    ColumnData::Timestamp(v) => v[r].map(|t| format!("{t}")),
                                },
                            })
                            .collect();
                        (Some(primitives::num_unique(&keys) as f64), None)
                    }
                    AggPrimitive::Mode => {
                        let cats: Vec<Option<&str>> =
                            children.iter().map(|&r| txns.str_at(c, r)).collect();
                        (None, primitives::mode(&cats).map(|s| s.to_string()))
                    }
                    AggPrimitive::AvgTimeBetween => {
                        let stamps: Vec<Option<i64>> =
                            children.iter().map(|&r| txns.ts_at(c, r)).collect();
                        (primitives::avg_time_between(&stamps), None)
                    }
                }
            }
        }
    }

    fn assert_matches_brute_force(es: &EntitySet, policy: &CutoffPolicy) {
        let features = synthesize(es, "transactions", 2, &Registry::full()).unwrap();
        let m = compute_matrix(es, "transactions", &features, policy).unwrap();
        for (fi, feature) in features.iter().enumerate() {
            for row in 0..m.n_rows() {
                let (want_num, want_cat) = brute_force(es, feature, row, policy);
                match &m.columns[fi].values {
                    FeatureValues::Numeric(v) => {
                        let got = v[row];
                        match want_num {
                            None => assert!(
                                got.is_nan(),
                                "{}[{row}]: expected null, got {got}",
                                feature.canonical_name
                            ),
                            Some(w) => assert!(
                                (got - w).abs() <= 1e-9 * w.abs().max(1.0),
                                "{}[{row}]: {got} vs {w}",
                                feature.canonical_name
                            ),
                        }
                    }
                    FeatureValues::Categorical { .. } => {
                        assert_eq!(
                            m.categorical(fi, row).map(|s| s.to_string()),
                            want_cat,
                            "{}[{row}]",
                            feature.canonical_name
                        );
                    }
                }
            }
        }
    }

    fn random_set(seed: u64, n: usize) -> EntitySet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cards = ["c0", "c1", "c2", "c3", "c4"];
        let countries = ["ES", "FR", "DE", "GB"];
        let fks: Vec<Option<&str>> = (0..n)
            .map(|_| {
                if rng.random_bool(0.05) {
                    None
                } else {
                    Some(cards[rng.random_range(0..cards.len())])
                }
            })
            .collect();
        let stamps: Vec<i64> = (0..n)
            .map(|_| rng.random_range(0..30 * 86_400))
            .collect();
        let amounts: Vec<Option<f64>> = (0..n)
            .map(|_| {
                rng.random_bool(0.9)
                    .then(|| (rng.random_range(50..100_000) as f64) / 100.0)
            })
            .collect();
        let cats: Vec<Option<&str>> = (0..n)
            .map(|_| {
                rng.random_bool(0.92)
                    .then(|| countries[rng.random_range(0..countries.len())])
            })
            .collect();
        build_set(&fks, &stamps, &amounts, &cats)
    }

    #[test]
    fn matches_brute_force_exact_mode() {
        assert_matches_brute_force(&random_set(7, 250), &CutoffPolicy::exact());
    }

    #[test]
    fn matches_brute_force_on_approximation_grid() {
        let policy = CutoffPolicy::approximate(7, 0).unwrap();
        assert_matches_brute_force(&random_set(8, 250), &policy);
    }

    #[test]
    fn grid_aligned_rows_equal_exact_computation() {
        // One transaction lands exactly on a grid point; its interval
        // features must equal the exact ones at the same instant.
        let es = build_set(
            &[Some("c1"), Some("c1"), Some("c1")],
            &[3 * 86_400, 6 * 86_400, 7 * 86_400],
            &[Some(10.0), Some(30.0), Some(50.0)],
            &[Some("ES"), Some("FR"), Some("ES")],
        );
        let features = synthesize(&es, "transactions", 2, &Registry::full()).unwrap();
        let exact = compute_matrix(&es, "transactions", &features, &CutoffPolicy::exact()).unwrap();
        let approx = compute_matrix(
            &es,
            "transactions",
            &features,
            &CutoffPolicy::approximate(7, 0).unwrap(),
        )
        .unwrap();
        for (ce, ca) in exact.columns.iter().zip(&approx.columns) {
            match (&ce.values, &ca.values) {
                (FeatureValues::Numeric(ve), FeatureValues::Numeric(va)) => {
                    assert_eq!(ve[2].to_bits(), va[2].to_bits(), "{}", ce.name);
                }
                (
                    FeatureValues::Categorical { codes: e, .. },
                    FeatureValues::Categorical { codes: a, .. },
                ) => {
                    assert_eq!(e[2], a[2], "{}", ce.name);
                }
                _ => panic!("column kind mismatch"),
            }
        }
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let es = random_set(9, 300);
        let features = synthesize(&es, "transactions", 2, &Registry::full()).unwrap();
        let policy = CutoffPolicy::approximate(1, 0).unwrap();
        let a = compute_matrix(&es, "transactions", &features, &policy).unwrap();
        let b = compute_matrix(&es, "transactions", &features, &policy).unwrap();
        for (ca, cb) in a.columns.iter().zip(&b.columns) {
            match (&ca.values, &cb.values) {
                (FeatureValues::Numeric(va), FeatureValues::Numeric(vb)) => {
                    for (x, y) in va.iter().zip(vb) {
                        assert_eq!(x.to_bits(), y.to_bits(), "{}", ca.name);
                    }
                }
                (
                    FeatureValues::Categorical { codes: xa, .. },
                    FeatureValues::Categorical { codes: xb, .. },
                ) => assert_eq!(xa, xb, "{}", ca.name),
                _ => panic!("column kind mismatch"),
            }
        }
    }

    #[test]
    fn future_rows_do_not_leak_into_features() {
        // Modify a row that is at/after another row's cutoff; the
        // earlier row's features must stay bit-identical.
        let fks = [Some("c1"), Some("c1"), Some("c1")];
        let stamps = [100, 200, 300];
        let amounts = [Some(10.0), Some(20.0), Some(30.0)];
        let countries = [Some("ES"), Some("ES"), Some("FR")];
        let es = build_set(&fks, &stamps, &amounts, &countries);
        let features = synthesize(&es, "transactions", 2, &Registry::full()).unwrap();
        let before = compute_matrix(&es, "transactions", &features, &CutoffPolicy::exact()).unwrap();

        // Perturb the last row (timestamp 300 >= cutoff 200 of row 1).
        let perturbed = build_set(&fks, &[100, 200, 9999], &[Some(10.0), Some(20.0), Some(-5.0)], &[Some("ES"), Some("ES"), Some("XX")]);
        let after = compute_matrix(&perturbed, "transactions", &features, &CutoffPolicy::exact()).unwrap();

        for (fi, (cb, ca)) in before.columns.iter().zip(&after.columns).enumerate() {
            for row in 0..2 {
                match (&cb.values, &ca.values) {
                    (FeatureValues::Numeric(vb), FeatureValues::Numeric(va)) => {
                        assert_eq!(vb[row].to_bits(), va[row].to_bits(), "{} row {row}", cb.name);
                    }
                    // The perturbed set re-interns categories, so
                    // compare resolved strings, not raw codes.
                    (FeatureValues::Categorical { .. }, FeatureValues::Categorical { .. }) => {
                        assert_eq!(
                            before.categorical(fi, row),
                            after.categorical(fi, row),
                            "{} row {row}",
                            cb.name
                        );
                    }
                    _ => panic!("column kind mismatch"),
                }
            }
        }
    }
}
