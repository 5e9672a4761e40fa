//! Feature matrices and representational dissimilarity matrices.

use std::collections::HashSet;
use std::fmt;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::stats::{spearman, RankVector};

/// Symmetry tolerance for RDM validation.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdmError {
    #[error("duplicate stimulus id {0:?}")]
    DuplicateId(String),
    #[error("{ids} stimulus ids but {rows} rows")]
    RowCountMismatch { ids: usize, rows: usize },
    #[error("non-finite value in row for stimulus {0:?}")]
    NonFinite(String),
    #[error("need at least {min} features, got {got}")]
    TooFewFeatures { got: usize, min: usize },
    #[error("need at least {min} stimuli, got {got}")]
    TooFewStimuli { got: usize, min: usize },
    #[error("stimulus {0:?} has a constant response row; correlation distance undefined")]
    ConstantRow(String),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("asymmetric at ({i}, {j}): |difference| = {diff:e}")]
    Asymmetric { i: usize, j: usize, diff: f64 },
    #[error("nonzero diagonal at {0}")]
    NonzeroDiagonal(usize),
    #[error("entry ({i}, {j}) = {value} outside [0, 2] for correlation distance")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("stimulus count differs: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("stimulus ids diverge at position {index}: {left:?} vs {right:?}")]
    IdMismatch {
        index: usize,
        left: String,
        right: String,
    },
}

impl RdmError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, RdmError::ConstantRow(_))
    }
}

/// Where a feature matrix came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Model condition (learning rule, pretrained model) or neural source.
    pub condition: String,
    pub seed: Option<u64>,
    /// Layer label, or region for neural data.
    pub layer: String,
}

/// Stimuli x features activation table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    stimulus_ids: Vec<String>,
    features: Array2<f64>,
    provenance: Provenance,
}

fn check_unique(ids: &[String]) -> Result<(), RdmError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(RdmError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

impl FeatureMatrix {
    pub fn new(
        stimulus_ids: Vec<String>,
        features: Array2<f64>,
        provenance: Provenance,
    ) -> Result<Self, RdmError> {
        if stimulus_ids.len() != features.nrows() {
            return Err(RdmError::RowCountMismatch {
                ids: stimulus_ids.len(),
                rows: features.nrows(),
            });
        }
        check_unique(&stimulus_ids)?;
        if features.ncols() < 2 {
            return Err(RdmError::TooFewFeatures {
                got: features.ncols(),
                min: 2,
            });
        }
        for (id, row) in stimulus_ids.iter().zip(features.rows()) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(RdmError::NonFinite(id.clone()));
            }
        }
        Ok(FeatureMatrix {
            stimulus_ids,
            features,
            provenance,
        })
    }

    pub fn stimulus_ids(&self) -> &[String] {
        &self.stimulus_ids
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n_stimuli(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Keeps only the given feature columns.
    pub fn select_features(&self, columns: &[usize]) -> Result<FeatureMatrix, RdmError> {
        FeatureMatrix::new(
            self.stimulus_ids.clone(),
            self.features.select(Axis(1), columns),
            self.provenance.clone(),
        )
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    /// `1 - Pearson(row_i, row_j)`.
    #[default]
    Correlation,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceMetric::Correlation => f.write_str("correlation"),
        }
    }
}

/// Symmetric stimulus x stimulus dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    stimulus_ids: Vec<String>,
    matrix: Array2<f64>,
    metric: DistanceMetric,
}

impl Rdm {
    pub fn new(
        stimulus_ids: Vec<String>,
        matrix: Array2<f64>,
        metric: DistanceMetric,
    ) -> Result<Self, RdmError> {
        let (rows, cols) = matrix.dim();
        if rows != cols {
            return Err(RdmError::NotSquare { rows, cols });
        }
        if stimulus_ids.len() != rows {
            return Err(RdmError::RowCountMismatch {
                ids: stimulus_ids.len(),
                rows,
            });
        }
        check_unique(&stimulus_ids)?;
        for i in 0..rows {
            if matrix[[i, i]].abs() > SYMMETRY_TOL {
                return Err(RdmError::NonzeroDiagonal(i));
            }
            for j in 0..rows {
                let v = matrix[[i, j]];
                if !v.is_finite() {
                    return Err(RdmError::NonFinite(stimulus_ids[i].clone()));
                }
                let diff = (v - matrix[[j, i]]).abs();
                if diff > SYMMETRY_TOL {
                    return Err(RdmError::Asymmetric { i, j, diff });
                }
                if metric == DistanceMetric::Correlation
                    && !(-SYMMETRY_TOL..=2.0 + SYMMETRY_TOL).contains(&v)
                {
                    return Err(RdmError::OutOfRange { i, j, value: v });
                }
            }
        }
        Ok(Rdm {
            stimulus_ids,
            matrix,
            metric,
        })
    }

    pub fn stimulus_ids(&self) -> &[String] {
        &self.stimulus_ids
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.stimulus_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimulus_ids.is_empty()
    }

    /// Reorders stimuli (rows and columns together) by `order`.
    pub fn permuted(&self, order: &[usize]) -> Rdm {
        let ids = order.iter().map(|&i| self.stimulus_ids[i].clone()).collect();
        let matrix = self.matrix.select(Axis(0), order).select(Axis(1), order);
        Rdm {
            stimulus_ids: ids,
            matrix,
            metric: self.metric,
        }
    }
}

/// Correlation-distance RDM of a feature matrix.
pub fn compute_rdm(fm: &FeatureMatrix) -> Result<Rdm, RdmError> {
    compute_rdm_with(fm, DistanceMetric::Correlation)
}

pub fn compute_rdm_with(fm: &FeatureMatrix, metric: DistanceMetric) -> Result<Rdm, RdmError> {
    let m = fm.n_stimuli();
    if m < 3 {
        return Err(RdmError::TooFewStimuli { got: m, min: 3 });
    }
    match metric {
        DistanceMetric::Correlation => {}
    }
    // two-pass: center each row, then scale to unit norm
    let mut z = fm.features().to_owned();
    for (id, mut row) in fm.stimulus_ids().iter().zip(z.rows_mut()) {
        let scale = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
        let norm = row.dot(&row).sqrt();
        if norm <= 1e-12 * scale * (row.len() as f64).sqrt() {
            return Err(RdmError::ConstantRow(id.clone()));
        }
        row.mapv_inplace(|v| v / norm);
    }
    let gram = z.dot(&z.t());
    let mut d = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let v = (1.0 - gram[[i, j]]).clamp(0.0, 2.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(Rdm {
        stimulus_ids: fm.stimulus_ids().to_vec(),
        matrix: d,
        metric,
    })
}

/// Strictly-upper entries in row-major order; length `m(m-1)/2`.
pub fn upper_triangle(rdm: &Rdm) -> RankVector {
    let m = rdm.len();
    let mut v = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            v.push(rdm.matrix[[i, j]]);
        }
    }
    RankVector::new(v).expect("validated RDM entries are finite")
}

/// Errors unless both RDMs list the same stimuli in the same order.
pub fn check_aligned(a: &Rdm, b: &Rdm) -> Result<(), RdmError> {
    if a.len() != b.len() {
        return Err(RdmError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if let Some((index, (l, r))) = a
        .stimulus_ids
        .iter()
        .zip(&b.stimulus_ids)
        .enumerate()
        .find(|(_, (l, r))| l != r)
    {
        return Err(RdmError::IdMismatch {
            index,
            left: l.clone(),
            right: r.clone(),
        });
    }
    Ok(())
}

/// Spearman rho between the upper triangles of two aligned RDMs.
pub fn rsa_score(model: &Rdm, neural: &Rdm) -> Result<f64> {
    check_aligned(model, neural)?;
    Ok(spearman(&upper_triangle(model), &upper_triangle(neural))?)
}
