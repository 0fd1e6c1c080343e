//! One-hot encoding and the model-ready numeric matrix.
//!
//! Dictionaries are built from training rows only and persisted, so
//! test-time encoding is identical run to run: one indicator column
//! per training category, categories unseen in training encode to all
//! zeros, numeric columns pass through unchanged (booleans as 0/1),
//! nulls stay NaN for the model stage to impute.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entityset::{ColumnKind, EntitySet};
use crate::error::{Error, Result};

use super::{FeatureMatrix, FeatureValues};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalDict {
    pub column: String,
    /// Sorted distinct categories observed in training rows.
    pub categories: Vec<String>,
}

/// Persistable encoding recipe: which columns pass through and which
/// expand to indicators, with their training dictionaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub numeric: Vec<String>,
    pub categorical: Vec<CategoricalDict>,
}

impl EncoderSpec {
    /// Total encoded column count: numerics plus one per category.
    pub fn width(&self) -> usize {
        self.numeric.len() + self.categorical.iter().map(|c| c.categories.len()).sum::<usize>()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = self.numeric.clone();
        for dict in &self.categorical {
            for cat in &dict.categories {
                names.push(format!("{}={cat}", dict.column));
            }
        }
        names
    }
}

/// Fully numeric, column-major matrix with named columns and row ids.
#[derive(Debug, Clone)]
pub struct EncodedMatrix {
    pub row_ids: Vec<String>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl EncodedMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Row subset in the given order, preserving column layout.
    pub fn select_rows(&self, rows: &[usize]) -> EncodedMatrix {
        EncodedMatrix {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|col| rows.iter().map(|&r| col[r]).collect())
                .collect(),
        }
    }
}

fn sorted_categories<'a>(values: impl Iterator<Item = Option<&'a str>>) -> Vec<String> {
    let mut cats: Vec<String> = values
        .flatten()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|s| s.to_string())
        .collect();
    cats.sort();
    cats
}

/// Encoding recipe for the target entity's own attribute columns:
/// numerics and booleans pass through, categoricals get dictionaries
/// from `training_rows`. Keys, foreign keys and timestamps are not
/// model inputs.
pub fn transactional_encoder(
    es: &EntitySet,
    target: &str,
    training_rows: &[usize],
) -> Result<EncoderSpec> {
    let entity = es.entity(target)?;
    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    for (ci, col) in entity.columns.iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric { .. } | ColumnKind::Boolean => numeric.push(col.name.clone()),
            ColumnKind::Categorical => {
                let cats = sorted_categories(
                    training_rows.iter().map(|&r| entity.str_at(ci, r)),
                );
                categorical.push(CategoricalDict {
                    column: col.name.clone(),
                    categories: cats,
                });
            }
            ColumnKind::Identifier | ColumnKind::ForeignKey { .. } | ColumnKind::Timestamp => {}
        }
    }
    Ok(EncoderSpec {
        numeric,
        categorical,
    })
}

/// Apply a transactional recipe to every row of the target entity.
pub fn encode_transactional(
    es: &EntitySet,
    target: &str,
    spec: &EncoderSpec,
) -> Result<EncodedMatrix> {
    let entity = es.entity(target)?;
    let n = entity.n_rows();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(spec.width());

    for name in &spec.numeric {
        let ci = entity.column_index(name)?;
        columns.push(
            (0..n)
                .map(|r| entity.float_at(ci, r).unwrap_or(f64::NAN))
                .collect(),
        );
    }
    for dict in &spec.categorical {
        let ci = entity.column_index(&dict.column)?;
        for cat in &dict.categories {
            columns.push(
                (0..n)
                    .map(|r| match entity.str_at(ci, r) {
                        Some(v) if v == cat => 1.0,
                        _ => 0.0,
                    })
                    .collect(),
            );
        }
    }

    Ok(EncodedMatrix {
        row_ids: (0..n).map(|r| entity.row_key(r).to_string()).collect(),
        names: spec.column_names(),
        columns,
    })
}

/// Encoding recipe for a synthesized feature matrix: numeric features
/// pass through, categorical (MODE) features get training
/// dictionaries.
pub fn matrix_encoder(matrix: &FeatureMatrix, training_rows: &[usize]) -> EncoderSpec {
    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    for (ci, col) in matrix.columns.iter().enumerate() {
        match &col.values {
            FeatureValues::Numeric(_) => numeric.push(col.name.clone()),
            FeatureValues::Categorical { .. } => {
                let cats = sorted_categories(
                    training_rows.iter().map(|&r| matrix.categorical(ci, r)),
                );
                categorical.push(CategoricalDict {
                    column: col.name.clone(),
                    categories: cats,
                });
            }
        }
    }
    EncoderSpec {
        numeric,
        categorical,
    }
}

/// Apply a matrix recipe to every row of a feature matrix.
pub fn encode_matrix(matrix: &FeatureMatrix, spec: &EncoderSpec) -> Result<EncodedMatrix> {
    let n = matrix.n_rows();
    let lookup = |name: &str| {
        matrix
            .column_index(name)
            .ok_or_else(|| Error::ColumnMismatch(format!("matrix has no column '{name}'")))
    };

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(spec.width());
    for name in &spec.numeric {
        let ci = lookup(name)?;
        match &matrix.columns[ci].values {
            FeatureValues::Numeric(v) => columns.push(v.clone()),
            _ => {
                return Err(Error::ColumnMismatch(format!(
                    "column '{name}' is categorical, expected numeric"
                )))
            }
        }
    }
    for dict in &spec.categorical {
        let ci = lookup(&dict.column)?;
        for cat in &dict.categories {
            columns.push(
                (0..n)
                    .map(|r| match matrix.categorical(ci, r) {
                        Some(v) if v == cat => 1.0,
                        _ => 0.0,
                    })
                    .collect(),
            );
        }
    }

    Ok(EncodedMatrix {
        row_ids: matrix.row_ids.clone(),
        names: spec.column_names(),
        columns,
    })
}

/// Column-wise concatenation of two encoded matrices over the same
/// rows.
pub fn concat(a: &EncodedMatrix, b: &EncodedMatrix) -> Result<EncodedMatrix> {
    if a.row_ids != b.row_ids {
        return Err(Error::ColumnMismatch(
            "cannot concatenate matrices over different rows".into(),
        ));
    }
    let mut names = a.names.clone();
    names.extend(b.names.iter().cloned());
    let mut columns = a.columns.clone();
    columns.extend(b.columns.iter().cloned());
    Ok(EncodedMatrix {
        row_ids: a.row_ids.clone(),
        names,
        columns,
    })
}

/// Persist an encoded matrix as CSV: a `# config_hash=` comment line,
/// a header, then one row per target row. Nulls are empty cells;
/// numbers print in shortest round-trip form, so reading back is
/// bit-exact.
pub fn write_encoded_csv(path: &Path, matrix: &EncodedMatrix, config_hash: &str) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);

    writeln!(w, "# config_hash={config_hash}").map_err(io_err)?;
    let mut header = String::from("row_id");
    for name in &matrix.names {
        header.push(',');
        // Feature names contain no commas or quotes by construction.
        header.push_str(name);
    }
    writeln!(w, "{header}").map_err(io_err)?;

    let mut line = String::new();
    for r in 0..matrix.n_rows() {
        line.clear();
        line.push_str(&matrix.row_ids[r]);
        for col in &matrix.columns {
            line.push(',');
            let v = col[r];
            if !v.is_nan() {
                line.push_str(&format!("{v}"));
            }
        }
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Read back a matrix written by [`write_encoded_csv`], returning the
/// embedded config hash as well.
pub fn read_encoded_csv(path: &Path) -> Result<(EncodedMatrix, Option<String>)> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.display().to_string())
        } else {
            Error::io(path.display().to_string(), e)
        }
    })?;
    let mut first_line = String::new();
    let mut buf = std::io::BufReader::new(file);
    buf.read_line(&mut first_line)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let hash = first_line
        .trim()
        .strip_prefix("# config_hash=")
        .map(|h| h.to_string());

    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedArtifact {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    if headers.get(0) != Some("row_id") {
        return Err(Error::MalformedArtifact {
            path: path.display().to_string(),
            message: "first column must be row_id".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.to_string()).collect();

    let mut row_ids = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedArtifact {
            path: path.display().to_string(),
            message: format!("row {}: {e}", i + 1),
        })?;
        row_ids.push(record.get(0).unwrap_or("").to_string());
        for (c, col) in columns.iter_mut().enumerate() {
            let cell = record.get(c + 1).unwrap_or("");
            if cell.is_empty() {
                col.push(f64::NAN);
            } else {
                col.push(cell.parse::<f64>().map_err(|e| Error::MalformedArtifact {
                    path: path.display().to_string(),
                    message: format!("row {}, column '{}': {e}", i + 1, names[c]),
                })?);
            }
        }
    }

    Ok((
        EncodedMatrix {
            row_ids,
            names,
            columns,
        },
        hash,
    ))
}
