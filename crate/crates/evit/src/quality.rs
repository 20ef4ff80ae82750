//! Similarity-to-quality meta-model.
//!
//! Pseudo-target transfers over the source population generate training
//! records pairing structural similarity with realised prediction quality;
//! per-algorithm regressors then give a probability distribution over the
//! quality a candidate transfer strategy would achieve on the real target.
//!
//! Quality values are clamped into [1e-3, 1-1e-3] and logit-transformed;
//! the regressor works in logit space and Monte Carlo samples are pushed
//! back through the inverse logit, so predictive samples stay in (0,1).

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{EnumerationConstraints, EnumerationMode};
use crate::domain::{format_f64, hide_labels, merge_sources, Domain};
use crate::error::{EvitError, Result};
use crate::gp::{GpHyper, GpRegressor};
use crate::rng::{derive_seed, sample_indices_without_replacement, seeded_rng};
use crate::similarity::{similarity_features, MeasureId, SimilarityVector};
use crate::transfer::{apply_transfer, evaluate_quality, train_classify, AlgorithmId, AlgorithmParams, QualityMeasures};

pub const QUALITY_CLAMP: (f64, f64) = (1e-3, 1.0 - 1e-3);

pub fn clamp_quality(q: f64) -> f64 {
    q.clamp(QUALITY_CLAMP.0, QUALITY_CLAMP.1)
}

pub fn logit(q: f64) -> f64 {
    (q / (1.0 - q)).ln()
}

/// Inverse logit, saturated so finite inputs never round to 0 or 1.
pub fn inv_logit(z: f64) -> f64 {
    let z = z.clamp(-36.0, 36.0);
    1.0 / (1.0 + (-z).exp())
}

/// One scalar quality component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityComponent {
    Accuracy,
    Type1,
    Type2,
}

impl std::fmt::Display for QualityComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QualityComponent::Accuracy => write!(f, "accuracy"),
            QualityComponent::Type1 => write!(f, "type1"),
            QualityComponent::Type2 => write!(f, "type2"),
        }
    }
}

/// One pseudo-transfer outcome: which algorithm moved which sources onto
/// which pseudo-target, at what similarity, with what quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub algorithm: AlgorithmId,
    pub pseudo_target_id: String,
    pub source_ids: Vec<String>,
    pub similarity: SimilarityVector,
    pub quality: QualityMeasures,
}

/// A (pseudo-target, source subset) pair, as indices into the source list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoPair {
    pub target_index: usize,
    pub source_indices: Vec<usize>,
}

/// Enumerate (pseudo-target, source subset) pairs.
///
/// Full mode walks the whole power set of the remaining sources (empty
/// subset included), n * 2^(n-1) pairs; single-source mode walks ordered
/// pairs, n * (n-1); random-cap mode keeps a seeded uniform sample without
/// replacement from the full list.
pub fn enumerate_pairs(n_sources: usize, constraints: &EnumerationConstraints) -> Result<Vec<PseudoPair>> {
    constraints.validate()?;
    if n_sources < 2 {
        return Err(EvitError::Precondition(format!(
            "similarity-to-quality training needs more than one candidate source domain (N_s > 1); got {n_sources}"
        )));
    }
    if n_sources > 20 {
        return Err(EvitError::Validation(format!(
            "pair enumeration over {n_sources} sources is intractable; use random_cap"
        )));
    }
    let full = |mode: EnumerationMode| -> Vec<PseudoPair> {
        let mut pairs = Vec::new();
        for t in 0..n_sources {
            let others: Vec<usize> = (0..n_sources).filter(|&i| i != t).collect();
            match mode {
                EnumerationMode::SingleSource => {
                    for &s in &others {
                        pairs.push(PseudoPair { target_index: t, source_indices: vec![s] });
                    }
                }
                _ => {
                    for mask in 0u32..(1u32 << others.len()) {
                        let subset: Vec<usize> = others
                            .iter()
                            .enumerate()
                            .filter(|(bit, _)| mask & (1 << bit) != 0)
                            .map(|(_, &i)| i)
                            .collect();
                        pairs.push(PseudoPair { target_index: t, source_indices: subset });
                    }
                }
            }
        }
        pairs
    };
    match constraints.mode {
        EnumerationMode::Full => Ok(full(EnumerationMode::Full)),
        EnumerationMode::SingleSource => Ok(full(EnumerationMode::SingleSource)),
        EnumerationMode::RandomCap => {
            let all = full(EnumerationMode::Full);
            let chosen = sample_indices_without_replacement(all.len(), constraints.cap, constraints.seed);
            Ok(chosen.into_iter().map(|i| all[i].clone()).collect())
        }
    }
}

/// Majority class of a label multiset; ties go to the smallest label.
pub fn majority_class(labels: &[usize]) -> Result<usize> {
    if labels.is_empty() {
        return Err(EvitError::Validation("majority of an empty label set".into()));
    }
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for &y in labels {
        *counts.entry(y).or_insert(0) += 1;
    }
    let mut best = (0usize, 0usize);
    for (&label, &count) in &counts {
        if count > best.1 {
            best = (label, count);
        }
    }
    Ok(best.0)
}

/// Quality of the population-majority baseline on one pseudo-target:
/// predict the majority class of the remaining sources everywhere.
fn baseline_quality(remaining: &[&Domain], hidden: &[usize]) -> Result<QualityMeasures> {
    let mut pool = Vec::new();
    for d in remaining {
        pool.extend_from_slice(d.labels.as_ref().ok_or_else(|| {
            EvitError::Validation(format!("source {} is unlabelled", d.id))
        })?);
    }
    let majority = majority_class(&pool)?;
    let y_pred = vec![majority; hidden.len()];
    evaluate_quality(&y_pred, hidden)
}

/// Run every (pseudo-target, subset) x algorithm task and emit one record
/// each. The empty subset realises the no-transfer case: majority-class
/// baseline quality at zero similarity. Deterministic given the seed;
/// tasks run in parallel and are reduced in enumeration order.
pub fn generate_training_records(
    sources: &[Domain],
    algorithms: &[AlgorithmId],
    constraints: &EnumerationConstraints,
    measure: MeasureId,
    params: &AlgorithmParams,
    n_modes: usize,
    seed: u64,
) -> Result<Vec<TrainingRecord>> {
    if algorithms.is_empty() {
        return Err(EvitError::Validation("no candidate algorithms given".into()));
    }
    params.validate()?;
    let pairs = enumerate_pairs(sources.len(), constraints)?;

    let per_pair: Vec<Result<Vec<TrainingRecord>>> = pairs
        .par_iter()
        .enumerate()
        .map(|(pair_idx, pair)| {
            let pseudo_target = &sources[pair.target_index];
            let (unlabelled, hidden) = hide_labels(pseudo_target)?;
            let subset: Vec<&Domain> = pair.source_indices.iter().map(|&i| &sources[i]).collect();
            let mut records = Vec::with_capacity(algorithms.len());
            if subset.is_empty() {
                let remaining: Vec<&Domain> = sources
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != pair.target_index)
                    .map(|(_, d)| d)
                    .collect();
                let quality = baseline_quality(&remaining, &hidden)?;
                let similarity = SimilarityVector { measure, mean: 0.0, min: 0.0, max: 0.0 };
                for &algorithm in algorithms {
                    records.push(TrainingRecord {
                        algorithm,
                        pseudo_target_id: pseudo_target.id.clone(),
                        source_ids: Vec::new(),
                        similarity,
                        quality,
                    });
                }
            } else {
                let merged = merge_sources(&subset)?;
                let source_reps: Vec<&crate::domain::Representation> =
                    subset.iter().flat_map(|d| d.representations.iter()).collect();
                let similarity = similarity_features(
                    &pseudo_target.representations[0],
                    &source_reps,
                    measure,
                    n_modes,
                )?;
                for (alg_idx, &algorithm) in algorithms.iter().enumerate() {
                    let task_seed = derive_seed(seed, &format!("record:{pair_idx}:{alg_idx}"));
                    let out = apply_transfer(algorithm, &merged, &unlabelled.features, params, task_seed)?;
                    let y_pred = train_classify(
                        &out.source_features,
                        &out.source_labels,
                        &out.target_features,
                        params,
                    )?;
                    let quality = evaluate_quality(&y_pred, &hidden)?;
                    records.push(TrainingRecord {
                        algorithm,
                        pseudo_target_id: pseudo_target.id.clone(),
                        source_ids: pair.source_indices.iter().map(|&i| sources[i].id.clone()).collect(),
                        similarity,
                        quality,
                    });
                }
            }
            Ok(records)
        })
        .collect();

    let mut records = Vec::new();
    for chunk in per_pair {
        records.extend(chunk?);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Records persistence
// ---------------------------------------------------------------------------

const RECORD_HEADER: [&str; 11] = [
    "algorithm",
    "pseudo_target_id",
    "source_ids",
    "measure",
    "sim_mean",
    "sim_min",
    "sim_max",
    "accuracy",
    "type1",
    "type2",
    "degenerate_flags",
];

pub fn save_records(path: &Path, records: &[TrainingRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(RECORD_HEADER)?;
    for r in records {
        let flags = u8::from(r.quality.degenerate_type1) | (u8::from(r.quality.degenerate_type2) << 1);
        wtr.write_record([
            r.algorithm.to_string(),
            r.pseudo_target_id.clone(),
            r.source_ids.join("|"),
            r.similarity.measure.to_string(),
            format_f64(r.similarity.mean),
            format_f64(r.similarity.min),
            format_f64(r.similarity.max),
            format_f64(r.quality.accuracy),
            format_f64(r.quality.type1_rate),
            format_f64(r.quality.type2_rate),
            flags.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<TrainingRecord>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| EvitError::Config(format!("cannot read records {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() != RECORD_HEADER.len() {
            return Err(EvitError::Validation(format!(
                "records row has {} fields, expected {}",
                row.len(),
                RECORD_HEADER.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| EvitError::Validation(format!("bad float {s:?}: {e}")))
        };
        let measure = match &row[3] {
            "mac" => MeasureId::Mac,
            "jaccard" => MeasureId::Jaccard,
            other => return Err(EvitError::Validation(format!("unknown measure {other:?}"))),
        };
        let flags: u8 = row[10]
            .parse()
            .map_err(|e| EvitError::Validation(format!("bad degenerate flags: {e}")))?;
        records.push(TrainingRecord {
            algorithm: row[0].parse()?,
            pseudo_target_id: row[1].to_string(),
            source_ids: if row[2].is_empty() {
                Vec::new()
            } else {
                row[2].split('|').map(str::to_string).collect()
            },
            similarity: SimilarityVector {
                measure,
                mean: parse(&row[4])?,
                min: parse(&row[5])?,
                max: parse(&row[6])?,
            },
            quality: QualityMeasures {
                accuracy: parse(&row[7])?,
                type1_rate: parse(&row[8])?,
                type2_rate: parse(&row[9])?,
                degenerate_type1: flags & 1 != 0,
                degenerate_type2: flags & 2 != 0,
            },
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Quality model
// ---------------------------------------------------------------------------

/// Per-algorithm probabilistic regressors from similarity to each quality
/// component, trained on logit-transformed values.
#[derive(Debug, Clone)]
pub struct QualityModel {
    pub algorithm: AlgorithmId,
    pub accuracy: GpRegressor,
    pub type1: GpRegressor,
    pub type2: GpRegressor,
}

/// Monte Carlo distribution over one quality component, values in (0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityDistribution {
    pub component: QualityComponent,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl QualityDistribution {
    fn from_samples(component: QualityComponent, samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self { component, samples, mean, variance }
    }
}

/// The three component distributions of one strategy, sample-paired by
/// Monte Carlo index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityDistributionSet {
    pub accuracy: QualityDistribution,
    pub type1: QualityDistribution,
    pub type2: QualityDistribution,
}

impl QualityDistributionSet {
    pub fn n_samples(&self) -> usize {
        self.accuracy.samples.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.accuracy.samples.len();
        if self.type1.samples.len() != n || self.type2.samples.len() != n {
            return Err(EvitError::Validation("component sample counts differ".into()));
        }
        Ok(())
    }
}

/// Fit the per-component regressors for one algorithm from its records.
/// Deterministic given the records; the seed is part of the contract for
/// stochastic fitting extensions.
pub fn fit_quality_model(records: &[TrainingRecord], algorithm: AlgorithmId, seed: u64) -> Result<QualityModel> {
    let _ = seed;
    let own: Vec<&TrainingRecord> = records.iter().filter(|r| r.algorithm == algorithm).collect();
    if own.len() < 3 {
        return Err(EvitError::Precondition(format!(
            "fitting the {algorithm} quality model needs at least 3 records, got {}",
            own.len()
        )));
    }
    let xs: Vec<f64> = own.iter().map(|r| r.similarity.mean).collect();
    let fit_component = |extract: fn(&QualityMeasures) -> f64| -> Result<GpRegressor> {
        let ys: Vec<f64> = own
            .iter()
            .map(|r| logit(clamp_quality(extract(&r.quality))))
            .collect();
        GpRegressor::fit(&xs, &ys)
    };
    Ok(QualityModel {
        algorithm,
        accuracy: fit_component(|q| q.accuracy)?,
        type1: fit_component(|q| q.type1_rate)?,
        type2: fit_component(|q| q.type2_rate)?,
    })
}

/// Push the latent Gaussian (mean, variance) through the inverse logit.
/// The normal stream depends only on (seed, component), so strategies
/// evaluated with the same seed share their random numbers.
fn push_forward_samples(
    mean: f64,
    variance: f64,
    component: QualityComponent,
    n_mc: usize,
    seed: u64,
) -> QualityDistribution {
    let std = variance.sqrt();
    let mut rng = seeded_rng(seed, &format!("mc:{component}"));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let samples: Vec<f64> = (0..n_mc)
        .map(|_| inv_logit(mean + std * normal.sample(&mut rng)))
        .collect();
    QualityDistribution::from_samples(component, samples)
}

fn component_samples(
    gp: &GpRegressor,
    component: QualityComponent,
    sim_mean: f64,
    n_mc: usize,
    seed: u64,
) -> QualityDistribution {
    let (mean, variance) = gp.predict(sim_mean);
    push_forward_samples(mean, variance, component, n_mc, seed)
}

/// Sample the latent predictive at the similarity mean and push through
/// the inverse logit. Deterministic given the seed.
pub fn predict_quality(
    model: &QualityModel,
    similarity: &SimilarityVector,
    n_mc: usize,
    seed: u64,
) -> Result<QualityDistributionSet> {
    if n_mc == 0 {
        return Err(EvitError::Validation("n_mc must be positive".into()));
    }
    Ok(QualityDistributionSet {
        accuracy: component_samples(&model.accuracy, QualityComponent::Accuracy, similarity.mean, n_mc, seed),
        type1: component_samples(&model.type1, QualityComponent::Type1, similarity.mean, n_mc, seed),
        type2: component_samples(&model.type2, QualityComponent::Type2, similarity.mean, n_mc, seed),
    })
}

/// Leave-one-out qualities of the majority-class baseline over the source
/// population, resampled to `n_mc` jointly-paired component draws. This is
/// the quality distribution of the null strategy.
pub fn null_quality_distribution(sources: &[Domain], n_mc: usize, seed: u64) -> Result<QualityDistributionSet> {
    if sources.len() < 2 {
        return Err(EvitError::Precondition(format!(
            "the null baseline needs more than one candidate source domain (N_s > 1); got {}",
            sources.len()
        )));
    }
    if n_mc == 0 {
        return Err(EvitError::Validation("n_mc must be positive".into()));
    }
    let mut loo = Vec::with_capacity(sources.len());
    for (t, pseudo_target) in sources.iter().enumerate() {
        let (_, hidden) = hide_labels(pseudo_target)?;
        let remaining: Vec<&Domain> = sources
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t)
            .map(|(_, d)| d)
            .collect();
        loo.push(baseline_quality(&remaining, &hidden)?);
    }

    let mut rng = seeded_rng(seed, "null:resample");
    let mut acc = Vec::with_capacity(n_mc);
    let mut t1 = Vec::with_capacity(n_mc);
    let mut t2 = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let q = &loo[rng.random_range(0..loo.len())];
        acc.push(clamp_quality(q.accuracy));
        t1.push(clamp_quality(q.type1_rate));
        t2.push(clamp_quality(q.type2_rate));
    }
    Ok(QualityDistributionSet {
        accuracy: QualityDistribution::from_samples(QualityComponent::Accuracy, acc),
        type1: QualityDistribution::from_samples(QualityComponent::Type1, t1),
        type2: QualityDistribution::from_samples(QualityComponent::Type2, t2),
    })
}

/// Leave-one-out baseline qualities without resampling (oracle use).
pub fn null_baseline_qualities(sources: &[Domain]) -> Result<Vec<QualityMeasures>> {
    if sources.len() < 2 {
        return Err(EvitError::Precondition(format!(
            "the null baseline needs more than one candidate source domain (N_s > 1); got {}",
            sources.len()
        )));
    }
    let mut loo = Vec::with_capacity(sources.len());
    for (t, pseudo_target) in sources.iter().enumerate() {
        let (_, hidden) = hide_labels(pseudo_target)?;
        let remaining: Vec<&Domain> = sources
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t)
            .map(|(_, d)| d)
            .collect();
        loo.push(baseline_quality(&remaining, &hidden)?);
    }
    Ok(loo)
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct GpComponentData {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    hyper: GpHyper,
}

#[derive(Debug, Serialize, Deserialize)]
struct QualityModelData {
    algorithm: AlgorithmId,
    accuracy: GpComponentData,
    type1: GpComponentData,
    type2: GpComponentData,
}

fn component_data(gp: &GpRegressor) -> GpComponentData {
    GpComponentData {
        inputs: gp.training_inputs().to_vec(),
        targets: gp.training_targets().to_vec(),
        hyper: gp.hyper(),
    }
}

pub fn save_model(path: &Path, model: &QualityModel) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let data = QualityModelData {
        algorithm: model.algorithm,
        accuracy: component_data(&model.accuracy),
        type1: component_data(&model.type1),
        type2: component_data(&model.type2),
    };
    fs::write(path, serde_json::to_string_pretty(&data)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<QualityModel> {
    let raw = fs::read_to_string(path)
        .map_err(|e| EvitError::Config(format!("cannot read model {}: {e}", path.display())))?;
    let data: QualityModelData = serde_json::from_str(&raw)?;
    let rebuild = |c: GpComponentData| GpRegressor::from_parts(c.inputs, c.targets, c.hyper);
    Ok(QualityModel {
        algorithm: data.algorithm,
        accuracy: rebuild(data.accuracy)?,
        type1: rebuild(data.type1)?,
        type2: rebuild(data.type2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Representation;
    use nalgebra::DMatrix;

    fn toy_domain(id: &str, shift: f64, n_classes: usize, n_per_class: usize) -> Domain {
        let d = 3;
        let n = n_classes * n_per_class;
        let mut features = DMatrix::<f64>::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        for c in 0..n_classes {
            for i in 0..n_per_class {
                let row = c * n_per_class + i;
                for j in 0..d {
                    features[(row, j)] = shift + c as f64 * 2.0 + (i as f64) * 0.01 + j as f64 * 0.1;
                }
                labels.push(c);
            }
        }
        let modes = DMatrix::from_fn(4, 4, |i, j| {
            ((i + 1) as f64 * (j + 1) as f64 * 0.7 + shift).sin()
        });
        Domain {
            id: id.into(),
            features,
            labels: Some(labels),
            representations: vec![Representation::new(modes, [(0, 1), (1, 2), (2, 3)]).unwrap()],
            n_classes,
        }
    }

    fn constraints(mode: EnumerationMode) -> EnumerationConstraints {
        EnumerationConstraints { mode, cap: 100, seed: 0 }
    }

    #[test]
    fn pair_counts_match_closed_forms() {
        // brute-force checked in the acceptance suite; spot values here
        let single = enumerate_pairs(3, &constraints(EnumerationMode::SingleSource)).unwrap();
        assert_eq!(single.len(), 6); // 3 * 2
        let full = enumerate_pairs(4, &constraints(EnumerationMode::Full)).unwrap();
        assert_eq!(full.len(), 32); // 4 * 2^3, empty subset included
        assert!(full.iter().any(|p| p.source_indices.is_empty()));
        assert!(matches!(
            enumerate_pairs(1, &constraints(EnumerationMode::Full)),
            Err(EvitError::Precondition(_))
        ));
    }

    #[test]
    fn random_cap_is_a_deterministic_subset() {
        let mut c = constraints(EnumerationMode::RandomCap);
        c.cap = 5;
        c.seed = 9;
        let a = enumerate_pairs(4, &c).unwrap();
        let b = enumerate_pairs(4, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        let full = enumerate_pairs(4, &constraints(EnumerationMode::Full)).unwrap();
        for p in &a {
            assert!(full.contains(p));
        }
        // saturated cap reproduces the full enumeration
        c.cap = 1000;
        assert_eq!(enumerate_pairs(4, &c).unwrap(), full);
    }

    fn toy_sources(n: usize) -> Vec<Domain> {
        (0..n).map(|i| toy_domain(&format!("s{i}"), i as f64 * 0.3, 2, 4)).collect()
    }

    #[test]
    fn records_satisfy_exclusion_and_count() {
        let sources = toy_sources(3);
        let algorithms = [AlgorithmId::Null, AlgorithmId::StatAlign];
        let records = generate_training_records(
            &sources,
            &algorithms,
            &constraints(EnumerationMode::Full),
            MeasureId::Mac,
            &AlgorithmParams::default(),
            2,
            11,
        )
        .unwrap();
        // 3 * 2^2 pairs per algorithm
        assert_eq!(records.len(), 12 * 2);
        for r in &records {
            assert!(!r.source_ids.contains(&r.pseudo_target_id));
            assert!(r.similarity.min <= r.similarity.mean && r.similarity.mean <= r.similarity.max);
        }
    }

    #[test]
    fn records_are_deterministic() {
        let sources = toy_sources(3);
        let algorithms = [AlgorithmId::StatAlign];
        let make = || {
            generate_training_records(
                &sources,
                &algorithms,
                &constraints(EnumerationMode::SingleSource),
                MeasureId::Mac,
                &AlgorithmParams::default(),
                2,
                21,
            )
            .unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn records_round_trip_csv() {
        let sources = toy_sources(3);
        let records = generate_training_records(
            &sources,
            &[AlgorithmId::Null, AlgorithmId::Tca],
            &constraints(EnumerationMode::Full),
            MeasureId::Jaccard,
            &AlgorithmParams::default(),
            2,
            5,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        save_records(&path, &records).unwrap();
        let loaded = load_records(&path).unwrap();
        assert_eq!(records, loaded);
    }

    fn constant_records(quality: f64, n: usize) -> Vec<TrainingRecord> {
        (0..n)
            .map(|i| {
                let sim = i as f64 / (n - 1) as f64;
                TrainingRecord {
                    algorithm: AlgorithmId::StatAlign,
                    pseudo_target_id: format!("p{i}"),
                    source_ids: vec![format!("s{i}")],
                    similarity: SimilarityVector {
                        measure: MeasureId::Mac,
                        mean: sim,
                        min: sim,
                        max: sim,
                    },
                    quality: QualityMeasures {
                        accuracy: quality,
                        type1_rate: 1.0 - quality,
                        type2_rate: 0.5,
                        degenerate_type1: false,
                        degenerate_type2: false,
                    },
                }
            })
            .collect()
    }

    #[test]
    fn constant_quality_recovers_constant_mean() {
        let records = constant_records(0.8, 12);
        let model = fit_quality_model(&records, AlgorithmId::StatAlign, 0).unwrap();
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            let (m, _) = model.accuracy.predict(x);
            assert!((inv_logit(m) - 0.8).abs() <= 0.02, "mean {} at {x}", inv_logit(m));
        }
    }

    #[test]
    fn fitting_ignores_other_algorithms_and_needs_three_records() {
        let mut records = constant_records(0.7, 6);
        records.push(TrainingRecord {
            algorithm: AlgorithmId::Tca,
            quality: QualityMeasures {
                accuracy: 0.001,
                type1_rate: 0.999,
                type2_rate: 0.999,
                degenerate_type1: false,
                degenerate_type2: false,
            },
            ..records[0].clone()
        });
        let model = fit_quality_model(&records, AlgorithmId::StatAlign, 0).unwrap();
        let (m, _) = model.accuracy.predict(0.5);
        assert!((inv_logit(m) - 0.7).abs() <= 0.02);
        assert!(matches!(
            fit_quality_model(&records, AlgorithmId::Tca, 0),
            Err(EvitError::Precondition(_))
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let records = constant_records(0.6, 8);
        let a = fit_quality_model(&records, AlgorithmId::StatAlign, 1).unwrap();
        let b = fit_quality_model(&records, AlgorithmId::StatAlign, 1).unwrap();
        assert_eq!(a.accuracy.hyper(), b.accuracy.hyper());
        assert_eq!(a.type2.hyper(), b.type2.hyper());
    }

    #[test]
    fn monotone_records_give_monotone_predictions() {
        let n = 12;
        let records: Vec<TrainingRecord> = (0..n)
            .map(|i| {
                let sim = i as f64 / (n - 1) as f64;
                TrainingRecord {
                    algorithm: AlgorithmId::StatAlign,
                    pseudo_target_id: format!("p{i}"),
                    source_ids: vec!["s".into()],
                    similarity: SimilarityVector {
                        measure: MeasureId::Mac,
                        mean: sim,
                        min: sim,
                        max: sim,
                    },
                    quality: QualityMeasures {
                        accuracy: 0.2 + 0.6 * sim,
                        type1_rate: 0.5,
                        type2_rate: 0.5,
                        degenerate_type1: false,
                        degenerate_type2: false,
                    },
                }
            })
            .collect();
        let model = fit_quality_model(&records, AlgorithmId::StatAlign, 0).unwrap();
        let means: Vec<f64> = (0..10)
            .map(|i| inv_logit(model.accuracy.predict(i as f64 / 9.0).0))
            .collect();
        for w in means.windows(2) {
            assert!(w[1] >= w[0] - 0.02, "not monotone within slack: {means:?}");
        }
    }

    #[test]
    fn predictive_samples_live_in_open_unit_interval() {
        let records = constant_records(0.95, 8);
        let model = fit_quality_model(&records, AlgorithmId::StatAlign, 0).unwrap();
        let sim = SimilarityVector { measure: MeasureId::Mac, mean: 0.4, min: 0.4, max: 0.4 };
        let dists = predict_quality(&model, &sim, 500, 7).unwrap();
        for d in [&dists.accuracy, &dists.type1, &dists.type2] {
            assert_eq!(d.samples.len(), 500);
            assert!(d.samples.iter().all(|&s| s > 0.0 && s < 1.0));
            let mean = d.samples.iter().sum::<f64>() / 500.0;
            assert!((mean - d.mean).abs() <= 1e-12);
        }
        // same seed, same draws
        let again = predict_quality(&model, &sim, 500, 7).unwrap();
        assert_eq!(dists, again);
    }

    #[test]
    fn zero_variance_collapses_samples() {
        let d = push_forward_samples(0.5, 0.0, QualityComponent::Accuracy, 50, 3);
        assert!(d.samples.iter().all(|&s| s == inv_logit(0.5)));
        assert!(d.variance < 1e-24);
    }

    #[test]
    fn null_distribution_balanced_classes() {
        // balanced 2-class pseudo-targets: majority ties resolve to class 0,
        // so the baseline accuracy is exactly 1/2 on every pseudo-target
        let sources = toy_sources(3);
        let dists = null_quality_distribution(&sources, 400, 13).unwrap();
        assert!((dists.accuracy.mean - 0.5).abs() < 1e-9);
        // majority class is undamaged, so no false alarms ever
        assert!(dists.type1.samples.iter().all(|&s| s <= QUALITY_CLAMP.0 + 1e-12));
        assert!(matches!(
            null_quality_distribution(&sources[..1], 10, 0),
            Err(EvitError::Precondition(_))
        ));
    }

    #[test]
    fn model_round_trips_through_json() {
        let records = constant_records(0.75, 10);
        let model = fit_quality_model(&records, AlgorithmId::StatAlign, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.algorithm, model.algorithm);
        let sim = SimilarityVector { measure: MeasureId::Mac, mean: 0.3, min: 0.3, max: 0.3 };
        let a = predict_quality(&model, &sim, 100, 5).unwrap();
        let b = predict_quality(&loaded, &sim, 100, 5).unwrap();
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn clamp_logit_round_trip(q in 1e-3f64..=0.999) {
            let z = logit(clamp_quality(q));
            let back = inv_logit(z);
            proptest::prop_assert!((back - clamp_quality(q)).abs() <= 1e-12);
        }
    }
}
