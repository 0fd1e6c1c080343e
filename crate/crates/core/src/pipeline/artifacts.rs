//! File formats shared between pipeline stages: entity CSVs, label
//! files, and split manifests. Every artifact records the hash of the
//! configuration that produced it so stale mixes are detectable.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entityset::{
    write_schema, ColumnData, ColumnSpec, Entity, EntitySchema, EntitySet,
    Relationship,
};
use crate::error::{Error, Result};

pub const HASH_PREFIX: &str = "# config_hash=";

fn open_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.display().to_string())
        } else {
            Error::io(path.display().to_string(), e)
        }
    }
}

fn format_ts(ts: i64) -> String {
    chrono::DateTime::from_timestamp(ts, 0)
        .map(|dt| dt.format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Write one entity as a CSV with a config-hash comment line, plus its
/// schema sidecar next to it (`<stem>.schema.json`).
pub fn write_entity_csv(path: &Path, entity: &Entity, config_hash: &str) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "{HASH_PREFIX}{config_hash}").map_err(werr)?;

    let names: Vec<&str> = entity.columns.iter().map(|c| c.name.as_str()).collect();
    let mut w = csv::Writer::from_writer(out);
    let cerr = |e: csv::Error| Error::io(path.display().to_string(), std::io::Error::other(e));
    w.write_record(&names).map_err(cerr)?;
    for row in 0..entity.n_rows() {
        let mut record = Vec::with_capacity(names.len());
        for col in &entity.columns {
            let cell = match &col.data {
                ColumnData::Str(s) => s.get(row).map(|v| v.to_string()).unwrap_or_default(),
                ColumnData::Timestamp(v) => v[row].map(format_ts).unwrap_or_default(),
                ColumnData::Float(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
                ColumnData::Bool(v) => v[row]
                    .map(|b| if b { "true".into() } else { "false".into() })
                    .unwrap_or_default(),
            };
            record.push(cell);
        }
        w.write_record(&record).map_err(cerr)?;
    }
    w.flush().map_err(werr)?;

    let schema = EntitySchema {
        entity: entity.name.clone(),
        key: entity.key_name().to_string(),
        time_index: entity.time_col.map(|i| entity.columns[i].name.clone()),
        columns: entity
            .columns
            .iter()
            .map(|c| ColumnSpec {
                name: c.name.clone(),
                kind: c.kind.clone(),
            })
            .collect(),
    };
    write_schema(&schema_path(path), &schema)
}

pub fn schema_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("schema.json")
}

/// Load a cards/transactions directory written by `write_entity_csv`
/// or the generator: both entities, plus the card→transaction link.
pub fn load_card_transaction_set(dir: &Path) -> Result<EntitySet> {
    let mut es = EntitySet::new();
    for name in ["cards", "transactions"] {
        let csv_path = dir.join(format!("{name}.csv"));
        let schema = crate::entityset::read_schema(&schema_path(&csv_path))?;
        let (entity, _report) = crate::entityset::load_entity(&csv_path, &schema)?;
        es.add_entity(entity)?;
    }
    es.add_relationship(Relationship {
        parent: "cards".into(),
        parent_key: "id".into(),
        child: "transactions".into(),
        child_fk: "card_id".into(),
    })?;
    Ok(es)
}

/// Per-transaction labels and amounts, aligned with entity row order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFile {
    pub ids: Vec<String>,
    pub labels: Vec<bool>,
    pub amounts: Vec<f64>,
    pub config_hash: Option<String>,
}

pub fn write_labels(
    path: &Path,
    ids: &[String],
    labels: &[bool],
    amounts: &[f64],
    config_hash: &str,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "{HASH_PREFIX}{config_hash}").map_err(werr)?;
    writeln!(out, "transaction_id,label,amount").map_err(werr)?;
    for i in 0..ids.len() {
        writeln!(
            out,
            "{},{},{}",
            ids[i],
            u8::from(labels[i]),
            amounts[i]
        )
        .map_err(werr)?;
    }
    out.flush().map_err(werr)
}

pub fn read_labels(path: &Path) -> Result<LabelFile> {
    let file = std::fs::File::open(path).map_err(open_err(path))?;
    let reader = BufReader::new(file);
    let mut out = LabelFile {
        ids: vec![],
        labels: vec![],
        amounts: vec![],
        config_hash: None,
    };
    let malformed = |message: String| Error::MalformedArtifact {
        path: path.display().to_string(),
        message,
    };
    let mut saw_header = false;
    for (ln, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if let Some(hash) = line.strip_prefix(HASH_PREFIX) {
            out.config_hash = Some(hash.trim().to_string());
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != "transaction_id,label,amount" {
                return Err(malformed(format!("unexpected header '{line}'")));
            }
            saw_header = true;
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(malformed(format!("line {}: expected 3 fields", ln + 1)));
        }
        out.ids.push(parts[0].to_string());
        out.labels.push(match parts[1] {
            "0" => false,
            "1" => true,
            other => return Err(malformed(format!("line {}: bad label '{other}'", ln + 1))),
        });
        out.amounts.push(
            parts[2]
                .parse()
                .map_err(|e| malformed(format!("line {}: bad amount: {e}", ln + 1)))?,
        );
    }
    if !saw_header {
        return Err(malformed("missing header".into()));
    }
    Ok(out)
}

/// Train/tune/test membership stored by transaction id, so it stays
/// meaningful if row order changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub config_hash: String,
    pub train: Vec<String>,
    pub tune: Vec<String>,
    pub test: Vec<String>,
}

pub fn write_split(path: &Path, split: &SplitFile) -> Result<()> {
    let text = serde_json::to_string_pretty(split).expect("split serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_split(path: &Path) -> Result<SplitFile> {
    let text = std::fs::read_to_string(path).map_err(open_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedArtifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Resolve id lists back to row indexes against the artifact's own id
/// order, failing loudly on ids that do not exist.
pub fn resolve_rows(ids: &[String], wanted: &[String], what: &str) -> Result<Vec<usize>> {
    let index: std::collections::HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    wanted
        .iter()
        .map(|id| {
            index.get(id.as_str()).copied().ok_or_else(|| {
                Error::MalformedArtifact {
                    path: what.to_string(),
                    message: format!("unknown transaction id '{id}'"),
                }
            })
        })
        .collect()
}

/// Write a small JSON report with a config hash injected as a field.
pub fn write_json_report<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::MalformedArtifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
