//! Relational data model: typed entities, parent-child relationships,
//! and per-parent child indexes sorted by time.
//!
//! An [`EntitySet`] is immutable once relationships are added; readers
//! can share it across threads freely. The child index is what makes
//! cutoff-bounded aggregation cheap: children of each parent are kept
//! sorted by (timestamp, row id), so "all children strictly before t"
//! is a binary search plus a slice.

mod csv_load;

pub use csv_load::{
    load_entity, parse_timestamp, read_schema, write_schema, ColumnSpec, EntitySchema, LoadReport,
};

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::ValueClass;

/// Unit tag on numeric columns. `Count` feeds the count-like value
/// class (eligible for NUM_UNIQUE); the rest behave identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericUnit {
    Euro,
    Count,
    Hours,
    Dimensionless,
}

/// Declared type of a column. Every column has exactly one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnKind {
    Identifier,
    ForeignKey { target: String },
    Timestamp,
    Numeric { unit: NumericUnit },
    Categorical,
    Boolean,
}

impl ColumnKind {
    pub fn value_class(&self) -> ValueClass {
        match self {
            ColumnKind::Identifier => ValueClass::Identifier,
            ColumnKind::ForeignKey { .. } => ValueClass::ForeignKey,
            ColumnKind::Timestamp => ValueClass::Timestamp,
            ColumnKind::Numeric {
                unit: NumericUnit::Count,
            } => ValueClass::NumericCount,
            ColumnKind::Numeric { .. } => ValueClass::Numeric,
            ColumnKind::Categorical => ValueClass::Categorical,
            ColumnKind::Boolean => ValueClass::Boolean,
        }
    }
}

/// Interned string storage shared by identifier, foreign-key and
/// categorical columns: per-row dictionary codes plus the dictionary
/// in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct StrColumn {
    pub codes: Vec<Option<u32>>,
    pub dict: Vec<String>,
}

impl StrColumn {
    pub fn from_values<S: AsRef<str>>(values: &[Option<S>]) -> Self {
        let mut builder = StrColumnBuilder::default();
        for v in values {
            builder.push(v.as_ref().map(|s| s.as_ref()));
        }
        builder.finish()
    }

    pub fn get(&self, row: usize) -> Option<&str> {
        self.codes[row].map(|c| self.dict[c as usize].as_str())
    }
}

/// Incremental interner used while parsing.
#[derive(Debug, Default)]
pub struct StrColumnBuilder {
    map: HashMap<String, u32>,
    col: StrColumn,
}

impl StrColumnBuilder {
    pub fn push(&mut self, value: Option<&str>) {
        let code = value.map(|s| {
            if let Some(&c) = self.map.get(s) {
                c
            } else {
                let c = self.col.dict.len() as u32;
                self.col.dict.push(s.to_string());
                self.map.insert(s.to_string(), c);
                c
            }
        });
        self.col.codes.push(code);
    }

    pub fn finish(self) -> StrColumn {
        self.col
    }
}

/// Column payload. Strings are dictionary-encoded; timestamps are
/// integer seconds since the epoch, UTC.
#[derive(Debug, Clone)]
pub enum ColumnData {
    Str(StrColumn),
    Timestamp(Vec<Option<i64>>),
    Float(Vec<Option<f64>>),
    Bool(Vec<Option<bool>>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Str(c) => c.codes.len(),
            ColumnData::Timestamp(v) => v.len(),
            ColumnData::Float(v) => v.len(),
            ColumnData::Bool(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub data: ColumnData,
}

impl Column {
    pub fn identifier(name: &str, values: Vec<String>) -> Column {
        let wrapped: Vec<Option<String>> = values.into_iter().map(Some).collect();
        Column {
            name: name.to_string(),
            kind: ColumnKind::Identifier,
            data: ColumnData::Str(StrColumn::from_values(&wrapped)),
        }
    }

    pub fn foreign_key(name: &str, target: &str, values: Vec<Option<String>>) -> Column {
        Column {
            name: name.to_string(),
            kind: ColumnKind::ForeignKey {
                target: target.to_string(),
            },
            data: ColumnData::Str(StrColumn::from_values(&values)),
        }
    }

    pub fn timestamp(name: &str, values: Vec<Option<i64>>) -> Column {
        Column {
            name: name.to_string(),
            kind: ColumnKind::Timestamp,
            data: ColumnData::Timestamp(values),
        }
    }

    pub fn numeric(name: &str, unit: NumericUnit, values: Vec<Option<f64>>) -> Column {
        Column {
            name: name.to_string(),
            kind: ColumnKind::Numeric { unit },
            data: ColumnData::Float(values),
        }
    }

    pub fn categorical(name: &str, values: Vec<Option<String>>) -> Column {
        Column {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
            data: ColumnData::Str(StrColumn::from_values(&values)),
        }
    }

    pub fn boolean(name: &str, values: Vec<Option<bool>>) -> Column {
        Column {
            name: name.to_string(),
            kind: ColumnKind::Boolean,
            data: ColumnData::Bool(values),
        }
    }
}

/// A typed table with a unique key column and an optional time index.
#[derive(Debug, Clone)]
pub struct Entity {
    pub name: String,
    pub key_col: usize,
    pub time_col: Option<usize>,
    pub columns: Vec<Column>,
    n_rows: usize,
    key_rows: HashMap<String, u32>,
}

impl Entity {
    pub fn new(
        name: &str,
        key: &str,
        time_index: Option<&str>,
        columns: Vec<Column>,
    ) -> Result<Entity> {
        let n_rows = columns.first().map(|c| c.data.len()).unwrap_or(0);
        for c in &columns {
            if c.data.len() != n_rows {
                return Err(Error::SchemaMismatch(format!(
                    "entity '{name}': column '{}' has {} rows, expected {n_rows}",
                    c.name,
                    c.data.len()
                )));
            }
        }

        let find = |col: &str| -> Result<usize> {
            columns
                .iter()
                .position(|c| c.name == col)
                .ok_or_else(|| Error::UnknownColumn {
                    entity: name.to_string(),
                    column: col.to_string(),
                })
        };

        let key_col = find(key)?;
        if !matches!(columns[key_col].kind, ColumnKind::Identifier) {
            return Err(Error::SchemaMismatch(format!(
                "entity '{name}': key column '{key}' must be an identifier"
            )));
        }

        let time_col = match time_index {
            Some(t) => {
                let idx = find(t)?;
                if !matches!(columns[idx].kind, ColumnKind::Timestamp) {
                    return Err(Error::SchemaMismatch(format!(
                        "entity '{name}': time index '{t}' must be a timestamp"
                    )));
                }
                Some(idx)
            }
            None => None,
        };

        let mut key_rows = HashMap::with_capacity(n_rows);
        {
            let ColumnData::Str(keys) = &columns[key_col].data else {
                unreachable!("identifier columns are string-backed");
            };
            for row in 0..n_rows {
                let Some(k) = keys.get(row) else {
                    return Err(Error::ParseFatal {
                        entity: name.to_string(),
                        row: row + 1,
                        message: format!("null key in column '{key}'"),
                    });
                };
                if key_rows.insert(k.to_string(), row as u32).is_some() {
                    return Err(Error::DuplicateKey {
                        entity: name.to_string(),
                        key: k.to_string(),
                    });
                }
            }
        }

        if let Some(tc) = time_col {
            let ColumnData::Timestamp(ts) = &columns[tc].data else {
                unreachable!("timestamp columns are i64-backed");
            };
            if let Some(row) = ts.iter().position(|t| t.is_none()) {
                return Err(Error::ParseFatal {
                    entity: name.to_string(),
                    row: row + 1,
                    message: format!("null timestamp in time index '{}'", columns[tc].name),
                });
            }
        }

        Ok(Entity {
            name: name.to_string(),
            key_col,
            time_col,
            columns,
            n_rows,
            key_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn key_name(&self) -> &str {
        &self.columns[self.key_col].name
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn {
                entity: self.name.clone(),
                column: name.to_string(),
            })
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.column_index(name)?])
    }

    /// Numeric view of a cell: numeric columns as-is, booleans as 0/1.
    pub fn float_at(&self, col: usize, row: usize) -> Option<f64> {
        match &self.columns[col].data {
            ColumnData::Float(v) => v[row],
            ColumnData::Bool(v) => v[row].map(|b| if b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn ts_at(&self, col: usize, row: usize) -> Option<i64> {
        match &self.columns[col].data {
            ColumnData::Timestamp(v) => v[row],
            _ => None,
        }
    }

    pub fn str_at(&self, col: usize, row: usize) -> Option<&str> {
        match &self.columns[col].data {
            ColumnData::Str(c) => c.get(row),
            _ => None,
        }
    }

    /// Timestamp of a row on the entity's time index.
    pub fn time_of(&self, row: usize) -> Option<i64> {
        self.time_col.and_then(|c| self.ts_at(c, row))
    }

    pub fn key_row(&self, key: &str) -> Option<usize> {
        self.key_rows.get(key).map(|&r| r as usize)
    }

    pub fn row_key(&self, row: usize) -> &str {
        self.str_at(self.key_col, row)
            .expect("key columns are non-null")
    }

    /// Copy of this entity restricted to `rows`, in the given order.
    fn subset(&self, rows: &[usize]) -> Result<Entity> {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let data = match &c.data {
                    ColumnData::Str(s) => {
                        let mut b = StrColumnBuilder::default();
                        for &r in rows {
                            b.push(s.get(r));
                        }
                        ColumnData::Str(b.finish())
                    }
                    ColumnData::Timestamp(v) => {
                        ColumnData::Timestamp(rows.iter().map(|&r| v[r]).collect())
                    }
                    ColumnData::Float(v) => {
                        ColumnData::Float(rows.iter().map(|&r| v[r]).collect())
                    }
                    ColumnData::Bool(v) => ColumnData::Bool(rows.iter().map(|&r| v[r]).collect()),
                };
                Column {
                    name: c.name.clone(),
                    kind: c.kind.clone(),
                    data,
                }
            })
            .collect();
        Entity::new(
            &self.name,
            self.key_name(),
            self.time_col.map(|c| self.columns[c].name.as_str()),
            columns,
        )
    }
}

/// Directed parent-child link: each parent row owns the child rows
/// whose foreign key equals its key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relationship {
    pub parent: String,
    pub parent_key: String,
    pub child: String,
    pub child_fk: String,
}

/// Per-relationship index: children of each parent sorted ascending by
/// (time-index value, row id), plus the reverse child-to-parent map.
#[derive(Debug, Clone)]
pub struct ChildIndex {
    pub parent_of: Vec<Option<u32>>,
    rows: Vec<Vec<u32>>,
    times: Vec<Vec<i64>>,
}

impl ChildIndex {
    /// Sorted (child rows, timestamps) of one parent.
    pub fn sorted_children(&self, parent_row: usize) -> (&[u32], &[i64]) {
        (&self.rows[parent_row], &self.times[parent_row])
    }

    /// Child rows with timestamp strictly less than `cutoff`.
    pub fn children_before(&self, parent_row: usize, cutoff: i64) -> &[u32] {
        let times = &self.times[parent_row];
        let end = times.partition_point(|&t| t < cutoff);
        &self.rows[parent_row][..end]
    }
}

/// The validated collection of entities plus relationships.
#[derive(Debug, Clone, Default)]
pub struct EntitySet {
    entities: IndexMap<String, Entity>,
    relationships: Vec<Relationship>,
    indexes: Vec<ChildIndex>,
}

impl EntitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, entity: Entity) -> Result<()> {
        if self.entities.contains_key(&entity.name) {
            return Err(Error::InvalidArgument(format!(
                "entity '{}' already present",
                entity.name
            )));
        }
        self.entities.insert(entity.name.clone(), entity);
        Ok(())
    }

    pub fn entity(&self, name: &str) -> Result<&Entity> {
        self.entities
            .get(name)
            .ok_or_else(|| Error::UnknownEntity(name.to_string()))
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.relationships
    }

    pub fn relationship_index(&self, parent: &str, child: &str) -> Option<usize> {
        self.relationships
            .iter()
            .position(|r| r.parent == parent && r.child == child)
    }

    pub fn child_index(&self, rel: usize) -> &ChildIndex {
        &self.indexes[rel]
    }

    /// Validates and appends a relationship, then builds its sorted
    /// child index. Children with a null foreign key belong to no
    /// parent and never appear in any aggregation window.
    pub fn add_relationship(&mut self, rel: Relationship) -> Result<()> {
        let parent = self.entity(&rel.parent)?;
        let child = self.entity(&rel.child)?;
        // Graph shape first: a cycle is wrong no matter what columns exist.
        self.check_acyclic(&rel)?;

        if parent.key_name() != rel.parent_key {
            return Err(Error::SchemaMismatch(format!(
                "relationship {}<-{}: parent_key '{}' is not the key of '{}'",
                rel.parent, rel.child, rel.parent_key, rel.parent
            )));
        }
        let fk_col = child.column_index(&rel.child_fk)?;
        match &child.columns[fk_col].kind {
            ColumnKind::ForeignKey { target } if *target == rel.parent => {}
            other => {
                return Err(Error::SchemaMismatch(format!(
                    "relationship {}<-{}: column '{}' is {:?}, expected a foreign key into '{}'",
                    rel.parent, rel.child, rel.child_fk, other, rel.parent
                )));
            }
        }
        if child.time_col.is_none() {
            return Err(Error::SchemaMismatch(format!(
                "relationship {}<-{}: child entity '{}' has no time index",
                rel.parent, rel.child, rel.child
            )));
        }

        let mut parent_of: Vec<Option<u32>> = vec![None; child.n_rows()];
        let mut buckets: Vec<Vec<(i64, u32)>> = vec![Vec::new(); parent.n_rows()];
        for row in 0..child.n_rows() {
            let Some(fk) = child.str_at(fk_col, row) else {
                continue;
            };
            let Some(parent_row) = parent.key_row(fk) else {
                return Err(Error::DanglingKey {
                    value: fk.to_string(),
                    child: rel.child.clone(),
                    column: rel.child_fk.clone(),
                    parent: rel.parent.clone(),
                    parent_key: rel.parent_key.clone(),
                });
            };
            parent_of[row] = Some(parent_row as u32);
            if let Some(ts) = child.time_of(row) {
                buckets[parent_row].push((ts, row as u32));
            }
        }

        let mut rows = Vec::with_capacity(buckets.len());
        let mut times = Vec::with_capacity(buckets.len());
        for mut bucket in buckets {
            bucket.sort_unstable();
            times.push(bucket.iter().map(|&(t, _)| t).collect());
            rows.push(bucket.into_iter().map(|(_, r)| r).collect());
        }

        self.relationships.push(rel);
        self.indexes.push(ChildIndex {
            parent_of,
            rows,
            times,
        });
        Ok(())
    }

    fn check_acyclic(&self, new_rel: &Relationship) -> Result<()> {
        if new_rel.parent == new_rel.child {
            return Err(Error::RelationshipCycle {
                parent: new_rel.parent.clone(),
                child: new_rel.child.clone(),
            });
        }
        // Walk parent->child edges from the new child; reaching the new
        // parent again means the addition closes a loop.
        let mut stack = vec![new_rel.child.as_str()];
        let mut seen = HashSet::new();
        while let Some(node) = stack.pop() {
            if !seen.insert(node) {
                continue;
            }
            for r in &self.relationships {
                if r.parent == node {
                    if r.child == new_rel.parent {
                        return Err(Error::RelationshipCycle {
                            parent: new_rel.parent.clone(),
                            child: new_rel.child.clone(),
                        });
                    }
                    stack.push(&r.child);
                }
            }
        }
        Ok(())
    }

    /// Child rows of `parent_key` with timestamp strictly before
    /// `cutoff`. Unknown keys yield an empty slice.
    pub fn children_before(&self, rel: usize, parent_key: &str, cutoff: i64) -> &[u32] {
        let relationship = &self.relationships[rel];
        let parent = &self.entities[&relationship.parent];
        match parent.key_row(parent_key) {
            Some(row) => self.indexes[rel].children_before(row, cutoff),
            None => &[],
        }
    }

    /// New EntitySet keeping only the rows of `entity` accepted by
    /// `keep` (by row index), cascading removal to descendant rows
    /// whose ancestry was dropped. Relationships are rebuilt.
    pub fn filter_rows(&self, entity: &str, keep: &dyn Fn(usize) -> bool) -> Result<EntitySet> {
        self.entity(entity)?;

        let mut kept: IndexMap<&str, Vec<bool>> = self
            .entities
            .values()
            .map(|e| (e.name.as_str(), vec![true; e.n_rows()]))
            .collect();
        let target = kept.get_mut(entity).unwrap();
        for (row, flag) in target.iter_mut().enumerate() {
            *flag = keep(row);
        }

        // Propagate drops downward. Relationships are acyclic, so one
        // pass per relationship repeated |relationships| times reaches
        // the fixpoint; sets are small enough not to bother with a
        // topological order.
        for _ in 0..self.relationships.len() {
            for (rel, index) in self.relationships.iter().zip(&self.indexes) {
                let parent_kept = kept[rel.parent.as_str()].clone();
                let child_kept = kept.get_mut(rel.child.as_str()).unwrap();
                for (row, parent_row) in index.parent_of.iter().enumerate() {
                    if let Some(p) = parent_row {
                        if !parent_kept[*p as usize] {
                            child_kept[row] = false;
                        }
                    }
                }
            }
        }

        let mut out = EntitySet::new();
        for e in self.entities.values() {
            let rows: Vec<usize> = kept[e.name.as_str()]
                .iter()
                .enumerate()
                .filter_map(|(row, &k)| k.then_some(row))
                .collect();
            out.add_entity(e.subset(&rows)?)?;
        }
        for rel in &self.relationships {
            out.add_relationship(rel.clone())?;
        }
        Ok(out)
    }
}
