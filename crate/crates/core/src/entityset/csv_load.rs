//! CSV entity loading with a JSON schema sidecar.
//!
//! The sidecar declares the entity name, key column, optional time
//! index, and one typed declaration per CSV column:
//!
//! ```json
//! {
//!   "entity": "transactions",
//!   "key": "id",
//!   "time_index": "date",
//!   "columns": [
//!     {"name": "id", "type": "identifier"},
//!     {"name": "card_id", "type": "foreign_key", "target": "cards"},
//!     {"name": "date", "type": "timestamp"},
//!     {"name": "amount", "type": "numeric", "unit": "euro"}
//!   ]
//! }
//! ```
//!
//! Key and timestamp cells must parse (fatal otherwise, with the row
//! number); malformed or empty cells in every other column become
//! explicit nulls and are tallied per column in the [`LoadReport`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{Column, ColumnData, ColumnKind, Entity, NumericUnit, StrColumnBuilder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySchema {
    pub entity: String,
    pub key: String,
    pub time_index: Option<String>,
    pub columns: Vec<ColumnSpec>,
}

/// Row count and per-column tally of cells that became null during
/// parsing (malformed numerics/booleans and empty optional cells).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    pub nulls_by_column: BTreeMap<String, u64>,
}

#[derive(Deserialize)]
struct RawSchema {
    entity: String,
    key: String,
    #[serde(default)]
    time_index: Option<String>,
    columns: Vec<RawColumn>,
}

#[derive(Deserialize)]
struct RawColumn {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    unit: Option<NumericUnit>,
}

/// Parse a schema sidecar JSON file.
pub fn read_schema(path: &Path) -> Result<EntitySchema> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.display().to_string())
        } else {
            Error::io(path.display().to_string(), e)
        }
    })?;
    let raw: RawSchema = serde_json::from_str(&text).map_err(|e| Error::MalformedArtifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;

    let mut columns = Vec::with_capacity(raw.columns.len());
    for c in raw.columns {
        let kind = match c.kind.as_str() {
            "identifier" => ColumnKind::Identifier,
            "foreign_key" => {
                let target = c.target.ok_or_else(|| {
                    Error::SchemaMismatch(format!(
                        "column '{}': foreign_key needs a 'target' entity",
                        c.name
                    ))
                })?;
                ColumnKind::ForeignKey { target }
            }
            "timestamp" => ColumnKind::Timestamp,
            "numeric" => ColumnKind::Numeric {
                unit: c.unit.unwrap_or(NumericUnit::Dimensionless),
            },
            "categorical" => ColumnKind::Categorical,
            "boolean" => ColumnKind::Boolean,
            other => {
                return Err(Error::SchemaMismatch(format!(
                    "column '{}': unknown type '{other}'",
                    c.name
                )))
            }
        };
        columns.push(ColumnSpec { name: c.name, kind });
    }
    Ok(EntitySchema {
        entity: raw.entity,
        key: raw.key,
        time_index: raw.time_index,
        columns,
    })
}

/// Write a schema sidecar in the same JSON dialect `read_schema`
/// accepts.
pub fn write_schema(path: &Path, schema: &EntitySchema) -> Result<()> {
    let columns: Vec<serde_json::Value> = schema
        .columns
        .iter()
        .map(|c| {
            let mut obj = serde_json::Map::new();
            obj.insert("name".into(), c.name.clone().into());
            let kind = match &c.kind {
                ColumnKind::Identifier => "identifier",
                ColumnKind::ForeignKey { target } => {
                    obj.insert("target".into(), target.clone().into());
                    "foreign_key"
                }
                ColumnKind::Timestamp => "timestamp",
                ColumnKind::Numeric { unit } => {
                    obj.insert(
                        "unit".into(),
                        serde_json::to_value(unit).expect("unit serializes"),
                    );
                    "numeric"
                }
                ColumnKind::Categorical => "categorical",
                ColumnKind::Boolean => "boolean",
            };
            obj.insert("type".into(), kind.into());
            serde_json::Value::Object(obj)
        })
        .collect();
    let doc = serde_json::json!({
        "entity": schema.entity,
        "key": schema.key,
        "time_index": schema.time_index,
        "columns": columns,
    });
    let text = serde_json::to_string_pretty(&doc).expect("schema serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Accepts epoch seconds, RFC 3339, `YYYY-MM-DD HH:MM:SS`, or a bare
/// `YYYY-MM-DD` (midnight); all interpreted as UTC.
pub fn parse_timestamp(text: &str) -> Option<i64> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Ok(secs) = t.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(t) {
        return Some(dt.timestamp());
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(t, "%Y-%m-%d %H:%M:%S") {
        return Some(dt.and_utc().timestamp());
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp());
    }
    None
}

fn parse_bool(text: &str) -> Option<bool> {
    match text.trim().to_ascii_lowercase().as_str() {
        "true" | "t" | "1" | "yes" => Some(true),
        "false" | "f" | "0" | "no" => Some(false),
        _ => None,
    }
}

enum Parsed {
    Str(StrColumnBuilder),
    Timestamp(Vec<Option<i64>>),
    Float(Vec<Option<f64>>),
    Bool(Vec<Option<bool>>),
}

/// Load a CSV file against a schema. The header must contain exactly
/// the schema's columns (any order). Lines starting with `#` are
/// treated as comments so artifacts can carry provenance headers.
pub fn load_entity(csv_path: &Path, schema: &EntitySchema) -> Result<(Entity, LoadReport)> {
    let file = std::fs::File::open(csv_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(csv_path.display().to_string())
        } else {
            Error::io(csv_path.display().to_string(), e)
        }
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", csv_path.display())))?
        .clone();
    if headers.len() != schema.columns.len() {
        return Err(Error::SchemaMismatch(format!(
            "{}: header has {} columns, schema declares {}",
            csv_path.display(),
            headers.len(),
            schema.columns.len()
        )));
    }
    // Position of each schema column within the CSV header.
    let mut positions = Vec::with_capacity(schema.columns.len());
    for spec in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h == spec.name)
            .ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "{}: header is missing column '{}'",
                    csv_path.display(),
                    spec.name
                ))
            })?;
        positions.push(pos);
    }

    let mut parsed: Vec<Parsed> = schema
        .columns
        .iter()
        .map(|spec| match spec.kind {
            ColumnKind::Identifier | ColumnKind::ForeignKey { .. } | ColumnKind::Categorical => {
                Parsed::Str(StrColumnBuilder::default())
            }
            ColumnKind::Timestamp => Parsed::Timestamp(Vec::new()),
            ColumnKind::Numeric { .. } => Parsed::Float(Vec::new()),
            ColumnKind::Boolean => Parsed::Bool(Vec::new()),
        })
        .collect();
    let mut report = LoadReport::default();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::ParseFatal {
            entity: schema.entity.clone(),
            row: row_idx + 1,
            message: e.to_string(),
        })?;
        for ((spec, &pos), target) in schema.columns.iter().zip(&positions).zip(&mut parsed) {
            let cell = record.get(pos).unwrap_or("").trim();
            let mut null_added = false;
            match target {
                Parsed::Str(builder) => {
                    if cell.is_empty() {
                        if matches!(spec.kind, ColumnKind::Identifier) {
                            return Err(Error::ParseFatal {
                                entity: schema.entity.clone(),
                                row: row_idx + 1,
                                message: format!("empty key cell in column '{}'", spec.name),
                            });
                        }
                        builder.push(None);
                        null_added = true;
                    } else {
                        builder.push(Some(cell));
                    }
                }
                Parsed::Timestamp(values) => match parse_timestamp(cell) {
                    Some(ts) => values.push(Some(ts)),
                    None => {
                        return Err(Error::ParseFatal {
                            entity: schema.entity.clone(),
                            row: row_idx + 1,
                            message: format!(
                                "unparseable timestamp '{cell}' in column '{}'",
                                spec.name
                            ),
                        })
                    }
                },
                Parsed::Float(values) => match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(Some(v)),
                    _ => {
                        values.push(None);
                        null_added = true;
                    }
                },
                Parsed::Bool(values) => match parse_bool(cell) {
                    Some(b) => values.push(Some(b)),
                    None => {
                        values.push(None);
                        null_added = true;
                    }
                },
            }
            if null_added {
                *report.nulls_by_column.entry(spec.name.clone()).or_insert(0) += 1;
            }
        }
        report.rows += 1;
    }

    let columns: Vec<Column> = schema
        .columns
        .iter()
        .zip(parsed)
        .map(|(spec, data)| Column {
            name: spec.name.clone(),
            kind: spec.kind.clone(),
            data: match data {
                Parsed::Str(b) => ColumnData::Str(b.finish()),
                Parsed::Timestamp(v) => ColumnData::Timestamp(v),
                Parsed::Float(v) => ColumnData::Float(v),
                Parsed::Bool(v) => ColumnData::Bool(v),
            },
        })
        .collect();

    let entity = Entity::new(
        &schema.entity,
        &schema.key,
        schema.time_index.as_deref(),
        columns,
    )?;
    Ok((entity, report))
}
