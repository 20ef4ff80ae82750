//! Structural similarity between a target representation and source
//! representations: modal assurance criterion over modeshapes and the
//! Jaccard index over connectivity graphs.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::Representation;
use crate::error::{EvitError, Result};

/// Which similarity measure drives the quality meta-model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureId {
    Mac,
    Jaccard,
}

impl std::fmt::Display for MeasureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeasureId::Mac => write!(f, "mac"),
            MeasureId::Jaccard => write!(f, "jaccard"),
        }
    }
}

/// Summary of pairwise target-vs-source scores over a source set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityVector {
    pub measure: MeasureId,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Modal assurance criterion between two modeshape vectors:
/// |a'b|^2 / ((a'a)(b'b)), in [0,1] by Cauchy-Schwarz.
pub fn mac(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EvitError::Validation(format!(
            "mac: vector lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(EvitError::Validation("mac: empty vectors".into()));
    }
    let aa: f64 = a.iter().map(|v| v * v).sum();
    let bb: f64 = b.iter().map(|v| v * v).sum();
    if aa == 0.0 || bb == 0.0 {
        return Err(EvitError::Validation("mac: zero modeshape vector".into()));
    }
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((ab * ab) / (aa * bb))
}

/// Mean MAC over index-paired modes (column i with column i, i < n_modes).
pub fn mac_summary(modes_a: &DMatrix<f64>, modes_b: &DMatrix<f64>, n_modes: usize) -> Result<f64> {
    if n_modes == 0 {
        return Err(EvitError::Validation("mac_summary: n_modes must be positive".into()));
    }
    if modes_a.ncols() < n_modes || modes_b.ncols() < n_modes {
        return Err(EvitError::Validation(format!(
            "mac_summary: {n_modes} modes requested, only {} and {} available",
            modes_a.ncols(),
            modes_b.ncols()
        )));
    }
    if modes_a.nrows() != modes_b.nrows() {
        return Err(EvitError::Validation(format!(
            "mac_summary: modeshape lengths differ ({} vs {})",
            modes_a.nrows(),
            modes_b.nrows()
        )));
    }
    let mut total = 0.0;
    for i in 0..n_modes {
        let a: Vec<f64> = modes_a.column(i).iter().copied().collect();
        let b: Vec<f64> = modes_b.column(i).iter().copied().collect();
        total += mac(&a, &b)?;
    }
    Ok(total / n_modes as f64)
}

/// Intersection over union of two undirected edge sets; 1 when both empty.
pub fn jaccard(a: &BTreeSet<(usize, usize)>, b: &BTreeSet<(usize, usize)>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

fn pairwise_score(
    target: &Representation,
    source: &Representation,
    measure: MeasureId,
    n_modes: usize,
) -> Result<f64> {
    match measure {
        MeasureId::Mac => mac_summary(&target.modeshapes, &source.modeshapes, n_modes),
        MeasureId::Jaccard => Ok(jaccard(&target.graph_edges, &source.graph_edges)),
    }
}

/// Score the target against each source and summarise as (mean, min, max).
///
/// Scores are sorted before aggregation, so the result is exactly invariant
/// to the order of the source list.
pub fn similarity_features(
    target: &Representation,
    sources: &[&Representation],
    measure: MeasureId,
    n_modes: usize,
) -> Result<SimilarityVector> {
    if sources.is_empty() {
        return Err(EvitError::Validation(
            "similarity_features: source list must be non-empty".into(),
        ));
    }
    let mut scores = sources
        .iter()
        .map(|s| pairwise_score(target, s, measure, n_modes))
        .collect::<Result<Vec<f64>>>()?;
    scores.sort_by(f64::total_cmp);
    let min = scores[0];
    let max = *scores.last().expect("non-empty");
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(SimilarityVector { measure, mean, min, max })
}
