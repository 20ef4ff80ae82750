//! Candidate transfer algorithms, the downstream classifier, and quality
//! evaluation of post-transfer predictions.
//!
//! Algorithms: `null` (identity), `stat_align` (independent per-domain
//! feature standardisation), and `tca` (kernel embedding that minimises
//! the maximum mean discrepancy between source and target while retaining
//! variance). The classifier is k-nearest-neighbour.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::Domain;
use crate::error::{EvitError, Result};

/// Identifier of a transfer algorithm. `Null` is the identity and is
/// always part of a candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    Null,
    StatAlign,
    Tca,
}

impl std::fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlgorithmId::Null => write!(f, "null"),
            AlgorithmId::StatAlign => write!(f, "stat_align"),
            AlgorithmId::Tca => write!(f, "tca"),
        }
    }
}

impl std::str::FromStr for AlgorithmId {
    type Err = EvitError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(AlgorithmId::Null),
            "stat_align" => Ok(AlgorithmId::StatAlign),
            "tca" => Ok(AlgorithmId::Tca),
            other => Err(EvitError::Validation(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// RBF kernel bandwidth: a fixed value, or the median pairwise distance
/// of the stacked samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Median,
    Fixed(f64),
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Median => serializer.serialize_str("median"),
            Bandwidth::Fixed(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(deserializer)?;
        match raw {
            serde_json::Value::String(s) if s == "median" => Ok(Bandwidth::Median),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Bandwidth::Fixed)
                .ok_or_else(|| D::Error::custom("bandwidth must be a finite number")),
            other => Err(D::Error::custom(format!(
                "bandwidth must be a number or \"median\", got {other}"
            ))),
        }
    }
}

/// Hyper-parameters shared by the transfer algorithms and the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmParams {
    /// Latent dimensionality m of the TCA embedding.
    pub tca_components: usize,
    /// TCA regularisation weight.
    pub tca_mu: f64,
    pub tca_kernel_bandwidth: Bandwidth,
    /// Neighbours used by the downstream classifier (odd).
    pub knn_k: usize,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            tca_components: 2,
            tca_mu: 1.0,
            tca_kernel_bandwidth: Bandwidth::Median,
            knn_k: 1,
        }
    }
}

impl AlgorithmParams {
    pub fn validate(&self) -> Result<()> {
        if self.tca_components == 0 {
            return Err(EvitError::Validation("tca_components must be positive".into()));
        }
        if !(self.tca_mu > 0.0) {
            return Err(EvitError::Validation("tca_mu must be positive".into()));
        }
        if let Bandwidth::Fixed(v) = self.tca_kernel_bandwidth {
            if !(v > 0.0) {
                return Err(EvitError::Validation("kernel bandwidth must be positive".into()));
            }
        }
        if self.knn_k == 0 || self.knn_k % 2 == 0 {
            return Err(EvitError::Validation("knn_k must be a positive odd integer".into()));
        }
        Ok(())
    }
}

/// Post-transfer prediction quality. Conditional rates with an empty
/// denominator are reported as 0 with the matching degenerate flag set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMeasures {
    pub accuracy: f64,
    pub type1_rate: f64,
    pub type2_rate: f64,
    #[serde(default)]
    pub degenerate_type1: bool,
    #[serde(default)]
    pub degenerate_type2: bool,
}

/// Adapted data produced by a transfer algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutput {
    pub source_features: DMatrix<f64>,
    pub source_labels: Vec<usize>,
    pub target_features: DMatrix<f64>,
}

/// Run one transfer algorithm on a labelled source and unlabelled target
/// features. All current algorithms are deterministic; the seed is part
/// of the contract for stochastic additions.
pub fn apply_transfer(
    algorithm: AlgorithmId,
    source: &Domain,
    target_features: &DMatrix<f64>,
    params: &AlgorithmParams,
    seed: u64,
) -> Result<TransferOutput> {
    let _ = seed;
    params.validate()?;
    let labels = source
        .labels
        .clone()
        .ok_or_else(|| EvitError::Precondition(format!("source domain {} is unlabelled", source.id)))?;
    if source.n_features() != target_features.ncols() {
        return Err(EvitError::Validation(format!(
            "source has {} features, target has {}",
            source.n_features(),
            target_features.ncols()
        )));
    }
    match algorithm {
        AlgorithmId::Null => Ok(TransferOutput {
            source_features: source.features.clone(),
            source_labels: labels,
            target_features: target_features.clone(),
        }),
        AlgorithmId::StatAlign => Ok(TransferOutput {
            source_features: statistic_align(&source.features)?,
            source_labels: labels,
            target_features: statistic_align(target_features)?,
        }),
        AlgorithmId::Tca => {
            let (zs, zt) = tca(&source.features, target_features, params)?;
            Ok(TransferOutput { source_features: zs, source_labels: labels, target_features: zt })
        }
    }
}

/// Per-column standardisation with the population (biased) standard
/// deviation; columns with std below 1e-12 are centred only.
pub fn statistic_align(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(EvitError::Validation(
            "statistic alignment needs at least 2 rows".into(),
        ));
    }
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let mean = x.column(j).iter().sum::<f64>() / n as f64;
        let var = x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std < 1e-12 {
            for i in 0..n {
                out[(i, j)] = x[(i, j)] - mean;
            }
        } else {
            for i in 0..n {
                out[(i, j)] = (x[(i, j)] - mean) / std;
            }
        }
    }
    Ok(out)
}

fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows() + b.nrows(), a.ncols(), |i, j| {
        if i < a.nrows() {
            a[(i, j)]
        } else {
            b[(i - a.nrows(), j)]
        }
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Transfer component analysis.
///
/// Builds the RBF kernel over the stacked samples, the block MMD
/// coefficient matrix L and the centring matrix H, then solves the
/// regularised trace problem: maximise tr(W'KHKW) subject to
/// W'(KLK + mu I)W = I. The embeddings are Z = KW, split back into the
/// source and target blocks. Eigenvectors are ordered by descending
/// eigenvalue with the largest-magnitude entry of each made positive, so
/// the result is deterministic.
pub fn tca(
    xs: &DMatrix<f64>,
    xt: &DMatrix<f64>,
    params: &AlgorithmParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    params.validate()?;
    if xs.ncols() != xt.ncols() {
        return Err(EvitError::Validation(format!(
            "tca: dimensionality mismatch ({} vs {})",
            xs.ncols(),
            xt.ncols()
        )));
    }
    let ns = xs.nrows();
    let nt = xt.nrows();
    if ns == 0 || nt == 0 {
        return Err(EvitError::Validation("tca: both domains need samples".into()));
    }
    let n = ns + nt;
    let m = params.tca_components;
    if n < m + 1 {
        return Err(EvitError::Validation(format!(
            "tca: {m} components need at least {} combined samples, got {n}",
            m + 1
        )));
    }

    let stacked = vstack(xs, xt);
    let mut sq_dists = DMatrix::<f64>::zeros(n, n);
    let mut pair_dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for c in 0..stacked.ncols() {
                let diff = stacked[(i, c)] - stacked[(j, c)];
                d2 += diff * diff;
            }
            sq_dists[(i, j)] = d2;
            sq_dists[(j, i)] = d2;
            pair_dists.push(d2.sqrt());
        }
    }
    let sigma = match params.tca_kernel_bandwidth {
        Bandwidth::Fixed(v) => v,
        Bandwidth::Median => {
            pair_dists.sort_by(f64::total_cmp);
            let med = median(&pair_dists);
            if med > 0.0 {
                med
            } else {
                1.0
            }
        }
    };

    let kernel = DMatrix::from_fn(n, n, |i, j| (-sq_dists[(i, j)] / (2.0 * sigma * sigma)).exp());

    // L = v v' with v_i = 1/ns on the source block, -1/nt on the target block
    let coeff = |i: usize| if i < ns { 1.0 / ns as f64 } else { -1.0 / nt as f64 };
    let l_mat = DMatrix::from_fn(n, n, |i, j| coeff(i) * coeff(j));
    let h_mat = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - 1.0 / n as f64
    });

    let klk = &kernel * &l_mat * &kernel;
    let khk = &kernel * &h_mat * &kernel;
    let mut b = klk + DMatrix::<f64>::identity(n, n) * params.tca_mu;
    b = (&b + b.transpose()) * 0.5;
    let a = (&khk + khk.transpose()) * 0.5;

    let chol = b.cholesky().ok_or_else(|| {
        EvitError::Numerical(
            "tca: regularised constraint matrix is not positive definite; increase tca_mu".into(),
        )
    })?;
    let lb = chol.l();
    let x = lb
        .solve_lower_triangular(&a)
        .ok_or_else(|| EvitError::Numerical("tca: singular triangular factor".into()))?;
    let c = lb
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| EvitError::Numerical("tca: singular triangular factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;

    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut w = DMatrix::<f64>::zeros(n, m);
    for (col, &idx) in order.iter().take(m).enumerate() {
        let v = eig.eigenvectors.column(idx).clone_owned();
        let mut wi = lb
            .transpose()
            .solve_upper_triangular(&v)
            .ok_or_else(|| EvitError::Numerical("tca: singular triangular factor".into()))?;
        let mut max_idx = 0;
        for i in 1..n {
            if wi[i].abs() > wi[max_idx].abs() {
                max_idx = i;
            }
        }
        if wi[max_idx] < 0.0 {
            wi = -wi;
        }
        w.set_column(col, &wi);
    }

    let z = &kernel * &w;
    let zs = z.rows(0, ns).clone_owned();
    let zt = z.rows(ns, nt).clone_owned();
    Ok((zs, zt))
}

/// k-nearest-neighbour classification with Euclidean distance.
///
/// Neighbour candidates are ordered by (distance, class label, row index),
/// so distance ties resolve toward the smaller class; vote ties also break
/// toward the smallest class index.
pub fn train_classify(
    source_features: &DMatrix<f64>,
    source_labels: &[usize],
    target_features: &DMatrix<f64>,
    params: &AlgorithmParams,
) -> Result<Vec<usize>> {
    params.validate()?;
    let n = source_features.nrows();
    if n == 0 {
        return Err(EvitError::Precondition("classifier needs a non-empty source".into()));
    }
    if source_labels.len() != n {
        return Err(EvitError::Validation(format!(
            "{} labels for {} source rows",
            source_labels.len(),
            n
        )));
    }
    if source_features.ncols() != target_features.ncols() {
        return Err(EvitError::Validation(format!(
            "source has {} features, target has {}",
            source_features.ncols(),
            target_features.ncols()
        )));
    }
    let k = params.knn_k.min(n);
    let mut predictions = Vec::with_capacity(target_features.nrows());
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for t in 0..target_features.nrows() {
        candidates.clear();
        for s in 0..n {
            let mut d2 = 0.0;
            for c in 0..source_features.ncols() {
                let diff = source_features[(s, c)] - target_features[(t, c)];
                d2 += diff * diff;
            }
            candidates.push((d2, source_labels[s], s));
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut votes: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
        for &(_, label, _) in candidates.iter().take(k) {
            *votes.entry(label).or_insert(0) += 1;
        }
        // BTreeMap iterates ascending by class, so the first maximum is the
        // smallest class index
        let mut best_label = 0;
        let mut best_count = 0;
        for (&label, &count) in &votes {
            if count > best_count {
                best_label = label;
                best_count = count;
            }
        }
        predictions.push(best_label);
    }
    Ok(predictions)
}

/// Accuracy plus type-I / type-II rates with class 0 as "undamaged".
pub fn evaluate_quality(y_pred: &[usize], y_true: &[usize]) -> Result<QualityMeasures> {
    if y_pred.len() != y_true.len() {
        return Err(EvitError::Validation(format!(
            "prediction/truth length mismatch ({} vs {})",
            y_pred.len(),
            y_true.len()
        )));
    }
    if y_true.is_empty() {
        return Err(EvitError::Validation("cannot score an empty prediction".into()));
    }
    let n = y_true.len();
    let correct = y_pred.iter().zip(y_true).filter(|(p, t)| p == t).count();
    let n_undamaged = y_true.iter().filter(|&&y| y == 0).count();
    let n_damaged = n - n_undamaged;
    let false_alarms = y_pred
        .iter()
        .zip(y_true)
        .filter(|(p, t)| **t == 0 && **p != 0)
        .count();
    let misses = y_pred
        .iter()
        .zip(y_true)
        .filter(|(p, t)| **t != 0 && **p == 0)
        .count();
    let (type1_rate, degenerate_type1) = if n_undamaged == 0 {
        (0.0, true)
    } else {
        (false_alarms as f64 / n_undamaged as f64, false)
    };
    let (type2_rate, degenerate_type2) = if n_damaged == 0 {
        (0.0, true)
    } else {
        (misses as f64 / n_damaged as f64, false)
    };
    Ok(QualityMeasures {
        accuracy: correct as f64 / n as f64,
        type1_rate,
        type2_rate,
        degenerate_type1,
        degenerate_type2,
    })
}
