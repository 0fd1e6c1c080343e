//! Random forest classifier, built from scratch.
//!
//! Binary classification with balanced class weights (each class
//! contributes equal total weight regardless of prevalence), weighted
//! Gini splits, bootstrap sampling, and median imputation of nulls
//! computed on the training set only. Trees are grown in parallel but
//! each tree's RNG is seeded as `seed + tree_index`, so the forest is
//! identical no matter how work is scheduled.

mod tree;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::EncodedMatrix;
use tree::{FitContext, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    /// Features examined per split; `None` means ⌊√d⌋.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` grows each tree to purity.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            n_trees: 100,
            max_features: None,
            min_samples_leaf: 1,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Which importance definition to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceKind {
    /// Weighted count of training examples reaching each node that
    /// splits on the feature. This is the default.
    SeparatedExamples,
    /// Classic weighted Gini decrease.
    ImpurityDecrease,
}

/// Per-class weights: n_samples / (n_classes * count(class)).
pub fn balanced_weights(labels: &[bool]) -> Result<[f64; 2]> {
    let n1 = labels.iter().filter(|&&y| y).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Model(
            "training labels contain a single class".into(),
        ));
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomForest {
    version: u32,
    feature_names: Vec<String>,
    impute_values: Vec<f64>,
    class_weights: [f64; 2],
    hyperparams: Hyperparams,
    max_features_used: usize,
    trees: Vec<Tree>,
    importances_separated: Vec<f64>,
    importances_impurity: Vec<f64>,
}

const MODEL_VERSION: u32 = 1;

fn median(sorted_finite: &mut Vec<f64>) -> Option<f64> {
    if sorted_finite.is_empty() {
        return None;
    }
    sorted_finite.sort_unstable_by(f64::total_cmp);
    let n = sorted_finite.len();
    Some(if n % 2 == 1 {
        sorted_finite[n / 2]
    } else {
        (sorted_finite[n / 2 - 1] + sorted_finite[n / 2]) / 2.0
    })
}

impl RandomForest {
    pub fn fit(matrix: &EncodedMatrix, labels: &[bool], hp: &Hyperparams) -> Result<Self> {
        let n = matrix.n_rows();
        let d = matrix.n_cols();
        if n == 0 || d == 0 {
            return Err(Error::Model("empty training matrix".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} rows",
                labels.len(),
                n
            )));
        }
        if hp.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        let max_features = match hp.max_features {
            None => ((d as f64).sqrt().floor() as usize).max(1),
            Some(k) if (1..=d).contains(&k) => k,
            Some(k) => {
                return Err(Error::InvalidArgument(format!(
                    "max_features {k} outside [1, {d}]"
                )))
            }
        };
        let class_weights = balanced_weights(labels)?;

        let mut impute_values = Vec::with_capacity(d);
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
        for (j, col) in matrix.columns.iter().enumerate() {
            let mut finite: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
            let med = median(&mut finite).ok_or_else(|| {
                Error::Model(format!(
                    "column '{}' is entirely null",
                    matrix.names[j]
                ))
            })?;
            impute_values.push(med);
            columns.push(
                col.iter()
                    .map(|&v| if v.is_nan() { med } else { v })
                    .collect(),
            );
        }

        let ctx = FitContext {
            columns: &columns,
            labels,
            class_weight: class_weights,
            max_features,
            min_samples_leaf: hp.min_samples_leaf.max(1),
            max_depth: hp.max_depth.unwrap_or(usize::MAX),
            bootstrap: hp.bootstrap,
        };
        let grown: Vec<_> = (0..hp.n_trees)
            .into_par_iter()
            .map(|t| tree::grow(&ctx, hp.seed.wrapping_add(t as u64)))
            .collect();

        let mut sep = vec![0.0; d];
        let mut imp = vec![0.0; d];
        let mut trees = Vec::with_capacity(hp.n_trees);
        for (tree, tallies) in grown {
            for j in 0..d {
                sep[j] += tallies.separated[j];
                imp[j] += tallies.impurity[j];
            }
            trees.push(tree);
        }
        let normalize = |mut v: Vec<f64>| {
            let total: f64 = v.iter().sum();
            if total > 0.0 {
                for x in &mut v {
                    *x /= total;
                }
            }
            v
        };

        Ok(RandomForest {
            version: MODEL_VERSION,
            feature_names: matrix.names.clone(),
            impute_values,
            class_weights,
            hyperparams: hp.clone(),
            max_features_used: max_features,
            trees,
            importances_separated: normalize(sep),
            importances_impurity: normalize(imp),
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn importances(&self, kind: ImportanceKind) -> &[f64] {
        match kind {
            ImportanceKind::SeparatedExamples => &self.importances_separated,
            ImportanceKind::ImpurityDecrease => &self.importances_impurity,
        }
    }

    fn check_columns(&self, matrix: &EncodedMatrix) -> Result<()> {
        if matrix.names == self.feature_names {
            return Ok(());
        }
        for (i, want) in self.feature_names.iter().enumerate() {
            match matrix.names.get(i) {
                Some(got) if got == want => {}
                Some(got) => {
                    return Err(Error::ColumnMismatch(format!(
                        "expected column {i} to be '{want}', found '{got}'"
                    )))
                }
                None => {
                    return Err(Error::ColumnMismatch(format!(
                        "missing column '{want}'"
                    )))
                }
            }
        }
        Err(Error::ColumnMismatch(format!(
            "{} extra columns beyond the {} the model was trained on",
            matrix.names.len() - self.feature_names.len(),
            self.feature_names.len()
        )))
    }

    /// Mean over trees of each leaf's weighted class-1 fraction.
    pub fn predict_proba(&self, matrix: &EncodedMatrix) -> Result<Vec<f64>> {
        self.check_columns(matrix)?;
        let n = matrix.n_rows();
        let mut probs = vec![0.0; n];
        for (row, p) in probs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for tree in &self.trees {
                let (w0, w1) = tree.leaf_masses(|f| {
                    let v = matrix.columns[f][row];
                    if v.is_nan() {
                        self.impute_values[f]
                    } else {
                        v
                    }
                });
                acc += w1 / (w0 + w1);
            }
            *p = acc / self.trees.len() as f64;
        }
        Ok(probs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::io(path.display().to_string(), e.into()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingInput(path.display().to_string())
            } else {
                Error::io(path.display().to_string(), e)
            }
        })?;
        let forest: RandomForest = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::MalformedArtifact {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        if forest.version != MODEL_VERSION {
            return Err(Error::MalformedArtifact {
                path: path.display().to_string(),
                message: format!(
                    "model version {} is not supported (expected {MODEL_VERSION})",
                    forest.version
                ),
            });
        }
        Ok(forest)
    }
}
