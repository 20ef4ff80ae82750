//! Strategy enumeration, expected utility, EVIT, and the recommendation.
//!
//! A transfer strategy pairs a subset of source domains with an algorithm;
//! the null strategy T0 (empty set, identity) is always a candidate and
//! anchors the scale: EVIT(T0) = 0 exactly. Each candidate strategy is
//! scored as EVIT + transfer cost and the argmax is recommended. Negative
//! EVIT flags expected negative transfer.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Population;
use crate::error::{EvitError, Result};
use crate::quality::{predict_quality, QualityDistributionSet, QualityModel};
use crate::rng::sample_indices_without_replacement;
use crate::similarity::{similarity_features, MeasureId};
use crate::transfer::{AlgorithmId, QualityMeasures};

/// A candidate transfer strategy: which sources feed the transfer and
/// which algorithm performs it. The empty source set with the null
/// algorithm is the null strategy T0.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransferStrategy {
    pub source_ids: BTreeSet<String>,
    pub algorithm: AlgorithmId,
}

impl TransferStrategy {
    pub fn null() -> Self {
        Self { source_ids: BTreeSet::new(), algorithm: AlgorithmId::Null }
    }

    pub fn is_null(&self) -> bool {
        self.source_ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let empty = self.source_ids.is_empty();
        let null_alg = self.algorithm == AlgorithmId::Null;
        if empty != null_alg {
            return Err(EvitError::Validation(format!(
                "strategy {self}: an empty source set and the null algorithm imply each other"
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for TransferStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_null() {
            write!(f, "T0")
        } else {
            let ids: Vec<&str> = self.source_ids.iter().map(String::as_str).collect();
            write!(f, "{}({})", self.algorithm, ids.join("+"))
        }
    }
}

/// How candidate strategies (and pseudo-transfer pairs) are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumerationMode {
    Full,
    SingleSource,
    RandomCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationConstraints {
    pub mode: EnumerationMode,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_cap() -> usize {
    100
}

impl EnumerationConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.cap == 0 {
            return Err(EvitError::Validation("enumeration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Utility parameters of the downstream operation-and-maintenance context.
///
/// U(Q) = accuracy_weight * accuracy
///        - (1 - prior_damage) * type1 * cost_inspection
///        - prior_damage * type2 * cost_failure
/// and the transfer cost is
/// U(T) = -(cost_per_algorithm[alg] + cost_per_source * |sources|), 0 for T0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub prior_damage: f64,
    pub cost_inspection: f64,
    pub cost_failure: f64,
    #[serde(default)]
    pub accuracy_weight: f64,
    #[serde(default)]
    pub cost_per_source: f64,
    #[serde(default)]
    pub cost_per_algorithm: BTreeMap<AlgorithmId, f64>,
    pub n_mc: usize,
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prior_damage) {
            return Err(EvitError::Validation("prior_damage must be in [0,1]".into()));
        }
        if self.cost_inspection < 0.0 || self.cost_failure < 0.0 || self.cost_per_source < 0.0 {
            return Err(EvitError::Validation("costs must be non-negative".into()));
        }
        if self.cost_per_algorithm.values().any(|&c| c < 0.0) {
            return Err(EvitError::Validation("algorithm costs must be non-negative".into()));
        }
        if self.n_mc == 0 {
            return Err(EvitError::Validation("n_mc must be positive".into()));
        }
        Ok(())
    }
}

/// One scored strategy in a recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedStrategy {
    pub strategy: TransferStrategy,
    pub evit: f64,
    pub expected_utility_quality: f64,
    pub transfer_cost: f64,
    pub objective: f64,
    pub negative_transfer_flag: bool,
}

/// Ranked strategies (descending objective) with the argmax first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub ranked: Vec<RankedStrategy>,
    pub best: TransferStrategy,
}

/// Enumerate candidate strategies. T0 always comes first; full mode covers
/// every non-empty source subset crossed with every non-null algorithm;
/// single-source mode restricts to singleton subsets; random-cap keeps T0
/// plus a seeded sample without replacement, `cap` strategies in total.
pub fn enumerate_strategies(
    source_ids: &[String],
    algorithms: &[AlgorithmId],
    constraints: &EnumerationConstraints,
) -> Result<Vec<TransferStrategy>> {
    constraints.validate()?;
    if source_ids.len() < 2 {
        return Err(EvitError::Precondition(format!(
            "strategy enumeration needs more than one candidate source domain (N_s > 1); got {}",
            source_ids.len()
        )));
    }
    if source_ids.len() > 20 {
        return Err(EvitError::Validation(format!(
            "strategy enumeration over {} sources is intractable; use random_cap",
            source_ids.len()
        )));
    }
    let non_null: Vec<AlgorithmId> = algorithms
        .iter()
        .copied()
        .filter(|a| *a != AlgorithmId::Null)
        .collect();
    if non_null.is_empty() {
        return Err(EvitError::Validation(
            "at least one non-null candidate algorithm is required".into(),
        ));
    }

    let mut non_null_strategies = Vec::new();
    match constraints.mode {
        EnumerationMode::SingleSource => {
            for id in source_ids {
                for &alg in &non_null {
                    non_null_strategies.push(TransferStrategy {
                        source_ids: BTreeSet::from([id.clone()]),
                        algorithm: alg,
                    });
                }
            }
        }
        EnumerationMode::Full | EnumerationMode::RandomCap => {
            let n = source_ids.len();
            for mask in 1u32..(1u32 << n) {
                let subset: BTreeSet<String> = source_ids
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| mask & (1 << bit) != 0)
                    .map(|(_, id)| id.clone())
                    .collect();
                for &alg in &non_null {
                    non_null_strategies.push(TransferStrategy {
                        source_ids: subset.clone(),
                        algorithm: alg,
                    });
                }
            }
        }
    }

    if constraints.mode == EnumerationMode::RandomCap {
        let keep = constraints.cap.saturating_sub(1);
        let chosen =
            sample_indices_without_replacement(non_null_strategies.len(), keep, constraints.seed);
        non_null_strategies = chosen.into_iter().map(|i| non_null_strategies[i].clone()).collect();
    }

    let mut strategies = vec![TransferStrategy::null()];
    strategies.extend(non_null_strategies);
    Ok(strategies)
}

/// Map quality measures to currency for the downstream decision context.
pub fn utility_of_quality(q: &QualityMeasures, spec: &UtilitySpec) -> f64 {
    spec.accuracy_weight * q.accuracy
        - (1.0 - spec.prior_damage) * q.type1_rate * spec.cost_inspection
        - spec.prior_damage * q.type2_rate * spec.cost_failure
}

/// Monte Carlo expectation of the utility over paired component samples.
pub fn expected_utility(dists: &QualityDistributionSet, spec: &UtilitySpec) -> Result<f64> {
    dists.validate()?;
    let n = dists.n_samples();
    if n == 0 {
        return Err(EvitError::Validation("empty quality distribution".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let q = QualityMeasures {
            accuracy: dists.accuracy.samples[i],
            type1_rate: dists.type1.samples[i],
            type2_rate: dists.type2.samples[i],
            degenerate_type1: false,
            degenerate_type2: false,
        };
        total += utility_of_quality(&q, spec);
    }
    Ok(total / n as f64)
}

/// Expected value of information transfer: the expected-utility gain over
/// the null strategy. Exactly zero for T0, no Monte Carlo noise.
pub fn evit(strategy: &TransferStrategy, eu_strategy: f64, eu_null: f64) -> f64 {
    if strategy.is_null() {
        0.0
    } else {
        eu_strategy - eu_null
    }
}

/// Cost of executing a strategy, as a (non-positive) utility. T0 is free.
pub fn transfer_cost(strategy: &TransferStrategy, spec: &UtilitySpec) -> Result<f64> {
    if strategy.is_null() {
        return Ok(0.0);
    }
    let alg_cost = spec.cost_per_algorithm.get(&strategy.algorithm).ok_or_else(|| {
        EvitError::Config(format!(
            "no cost entry for algorithm {} in cost_per_algorithm",
            strategy.algorithm
        ))
    })?;
    Ok(-(alg_cost + spec.cost_per_source * strategy.source_ids.len() as f64))
}

fn rank_order(a: &RankedStrategy, b: &RankedStrategy) -> std::cmp::Ordering {
    b.objective
        .total_cmp(&a.objective)
        .then_with(|| a.strategy.source_ids.len().cmp(&b.strategy.source_ids.len()))
        .then_with(|| a.strategy.algorithm.cmp(&b.strategy.algorithm))
        .then_with(|| a.strategy.source_ids.cmp(&b.strategy.source_ids))
}

/// Score every enumerated strategy and rank by EVIT + transfer cost.
///
/// All strategies share the Monte Carlo seed, so their predictive samples
/// use common random numbers and the ranking is deterministic.
pub fn recommend(
    population: &Population,
    models: &BTreeMap<AlgorithmId, QualityModel>,
    null_dist: &QualityDistributionSet,
    spec: &UtilitySpec,
    constraints: &EnumerationConstraints,
    measure: MeasureId,
    n_modes: usize,
    seed: u64,
) -> Result<Recommendation> {
    spec.validate()?;
    population.validate()?;
    let algorithms: Vec<AlgorithmId> = models
        .keys()
        .copied()
        .filter(|a| *a != AlgorithmId::Null)
        .collect();
    if algorithms.is_empty() {
        return Err(EvitError::Precondition(
            "no fitted quality models for any non-null algorithm".into(),
        ));
    }
    let source_ids = population.source_ids();
    let strategies = enumerate_strategies(&source_ids, &algorithms, constraints)?;
    let eu_null = expected_utility(null_dist, spec)?;
    let target_rep = &population.target_domain.representations[0];

    let mut ranked = strategies
        .par_iter()
        .map(|strategy| -> Result<RankedStrategy> {
            if strategy.is_null() {
                return Ok(RankedStrategy {
                    strategy: strategy.clone(),
                    evit: 0.0,
                    expected_utility_quality: eu_null,
                    transfer_cost: 0.0,
                    objective: 0.0,
                    negative_transfer_flag: false,
                });
            }
            let model = models.get(&strategy.algorithm).ok_or_else(|| {
                EvitError::Precondition(format!(
                    "no fitted quality model for algorithm {}",
                    strategy.algorithm
                ))
            })?;
            let source_reps: Vec<&crate::domain::Representation> = strategy
                .source_ids
                .iter()
                .map(|id| {
                    population.source_by_id(id).ok_or_else(|| {
                        EvitError::Validation(format!("strategy references unknown source {id}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flat_map(|d| d.representations.iter())
                .collect();
            let similarity = similarity_features(target_rep, &source_reps, measure, n_modes)?;
            let dists = predict_quality(model, &similarity, spec.n_mc, seed)?;
            let eu = expected_utility(&dists, spec)?;
            let evit_value = evit(strategy, eu, eu_null);
            let cost = transfer_cost(strategy, spec)?;
            Ok(RankedStrategy {
                strategy: strategy.clone(),
                evit: evit_value,
                expected_utility_quality: eu,
                transfer_cost: cost,
                objective: evit_value + cost,
                negative_transfer_flag: evit_value < 0.0,
            })
        })
        .collect::<Result<Vec<RankedStrategy>>>()?;

    ranked.sort_by(rank_order);
    let best = ranked[0].strategy.clone();
    Ok(Recommendation { ranked, best })
}

/// Plain-text table of a recommendation, aligned for terminals.
pub fn render_table(recommendation: &Recommendation) -> String {
    let mut rows: Vec<[String; 6]> = vec![[
        "strategy".into(),
        "evit".into(),
        "eu_quality".into(),
        "transfer_cost".into(),
        "objective".into(),
        "negative_transfer".into(),
    ]];
    for r in &recommendation.ranked {
        rows.push([
            r.strategy.to_string(),
            format!("{:.4}", r.evit),
            format!("{:.4}", r.expected_utility_quality),
            format!("{:.4}", r.transfer_cost),
            format!("{:.4}", r.objective),
            if r.negative_transfer_flag { "yes".into() } else { "no".into() },
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out.push_str(&format!("best: {}\n", recommendation.best));
    out
}

pub fn save_recommendation(path: &Path, recommendation: &Recommendation) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(recommendation)?)?;
    Ok(())
}

pub fn load_recommendation(path: &Path) -> Result<Recommendation> {
    let raw = fs::read_to_string(path).map_err(|e| {
        EvitError::Config(format!("cannot read recommendation {}: {e}", path.display()))
    })?;
    Ok(serde_json::from_str(&raw)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn constraints(mode: EnumerationMode) -> EnumerationConstraints {
        EnumerationConstraints { mode, cap: 100, seed: 0 }
    }

    fn spec() -> UtilitySpec {
        UtilitySpec {
            prior_damage: 0.01,
            cost_inspection: 1000.0,
            cost_failure: 1e6,
            accuracy_weight: 0.0,
            cost_per_source: 5.0,
            cost_per_algorithm: BTreeMap::from([
                (AlgorithmId::StatAlign, 10.0),
                (AlgorithmId::Tca, 10.0),
            ]),
            n_mc: 100,
        }
    }

    #[test]
    fn strategy_counts() {
        let algs = [AlgorithmId::Null, AlgorithmId::StatAlign, AlgorithmId::Tca];
        // 1 + (2^3 - 1) * 2
        let full = enumerate_strategies(&ids(&["a", "b", "c"]), &algs, &constraints(EnumerationMode::Full)).unwrap();
        assert_eq!(full.len(), 15);
        assert!(full[0].is_null());

        // 1 + 4 singleton strategies for one algorithm
        let single = enumerate_strategies(
            &ids(&["a", "b", "c", "d"]),
            &[AlgorithmId::StatAlign],
            &constraints(EnumerationMode::SingleSource),
        )
        .unwrap();
        assert_eq!(single.len(), 5);
        assert!(single.iter().skip(1).all(|s| s.source_ids.len() == 1));

        assert!(matches!(
            enumerate_strategies(&ids(&["a"]), &algs, &constraints(EnumerationMode::Full)),
            Err(EvitError::Precondition(_))
        ));
    }

    #[test]
    fn random_cap_saturates_to_full() {
        let algs = [AlgorithmId::StatAlign, AlgorithmId::Tca];
        let names = ids(&["a", "b", "c"]);
        let full = enumerate_strategies(&names, &algs, &constraints(EnumerationMode::Full)).unwrap();
        let mut capped = constraints(EnumerationMode::RandomCap);
        capped.cap = 1000;
        let sampled = enumerate_strategies(&names, &algs, &capped).unwrap();
        let full_set: BTreeSet<_> = full.iter().cloned().collect();
        let sample_set: BTreeSet<_> = sampled.iter().cloned().collect();
        assert_eq!(full_set, sample_set);

        capped.cap = 4;
        let sampled = enumerate_strategies(&names, &algs, &capped).unwrap();
        assert_eq!(sampled.len(), 4);
        assert!(sampled[0].is_null());
        assert!(sampled.iter().all(|s| full_set.contains(s)));
    }

    #[test]
    fn utility_hand_value() {
        let q = QualityMeasures {
            accuracy: 0.9,
            type1_rate: 0.05,
            type2_rate: 0.1,
            degenerate_type1: false,
            degenerate_type2: false,
        };
        let u = utility_of_quality(&q, &spec());
        assert!((u - (-1049.5)).abs() < 1e-9);

        // doubling all costs doubles the magnitude
        let mut doubled = spec();
        doubled.cost_inspection *= 2.0;
        doubled.cost_failure *= 2.0;
        assert!((utility_of_quality(&q, &doubled) - 2.0 * u).abs() < 1e-9);

        // perfect quality with zero accuracy weight is worth zero
        let perfect = QualityMeasures {
            accuracy: 1.0,
            type1_rate: 0.0,
            type2_rate: 0.0,
            degenerate_type1: false,
            degenerate_type2: false,
        };
        assert_eq!(utility_of_quality(&perfect, &spec()), 0.0);
    }

    #[test]
    fn evit_anchors_and_subtraction() {
        let t0 = TransferStrategy::null();
        assert_eq!(evit(&t0, 123.0, 45.0), 0.0);
        let t = TransferStrategy {
            source_ids: BTreeSet::from(["a".to_string()]),
            algorithm: AlgorithmId::StatAlign,
        };
        assert_eq!(evit(&t, 0.9, 0.5), 0.9 - 0.5);
        assert_eq!(evit(&t, 0.5, 0.5), 0.0);
    }

    #[test]
    fn transfer_cost_cases() {
        let s = spec();
        assert_eq!(transfer_cost(&TransferStrategy::null(), &s).unwrap(), 0.0);
        let two_sources = TransferStrategy {
            source_ids: BTreeSet::from(["a".to_string(), "b".to_string()]),
            algorithm: AlgorithmId::StatAlign,
        };
        assert_eq!(transfer_cost(&two_sources, &s).unwrap(), -20.0);

        let mut free = s.clone();
        free.cost_per_source = 0.0;
        free.cost_per_algorithm.insert(AlgorithmId::StatAlign, 0.0);
        assert_eq!(transfer_cost(&two_sources, &free).unwrap(), 0.0);

        let mut missing = s;
        missing.cost_per_algorithm.remove(&AlgorithmId::StatAlign);
        assert!(matches!(
            transfer_cost(&two_sources, &missing),
            Err(EvitError::Config(_))
        ));
    }

    #[test]
    fn tie_break_prefers_fewer_sources() {
        let one = RankedStrategy {
            strategy: TransferStrategy {
                source_ids: BTreeSet::from(["b".to_string()]),
                algorithm: AlgorithmId::Tca,
            },
            evit: 1.0,
            expected_utility_quality: 1.0,
            transfer_cost: 0.0,
            objective: 1.0,
            negative_transfer_flag: false,
        };
        let two = RankedStrategy {
            strategy: TransferStrategy {
                source_ids: BTreeSet::from(["a".to_string(), "c".to_string()]),
                algorithm: AlgorithmId::StatAlign,
            },
            objective: 1.0,
            ..one.clone()
        };
        let mut rows = vec![two.clone(), one.clone()];
        rows.sort_by(rank_order);
        assert_eq!(rows[0], one);
    }

    #[test]
    fn expected_utility_is_mean_of_utilities() {
        use crate::quality::{QualityComponent, QualityDistribution};
        let constant = |component, v: f64, n: usize| QualityDistribution {
            component,
            samples: vec![v; n],
            mean: v,
            variance: 0.0,
        };
        let dists = QualityDistributionSet {
            accuracy: constant(QualityComponent::Accuracy, 1.0, 50),
            type1: constant(QualityComponent::Type1, 0.0, 50),
            type2: constant(QualityComponent::Type2, 0.0, 50),
        };
        let s = spec();
        assert_eq!(expected_utility(&dists, &s).unwrap(), 0.0);

        let dists = QualityDistributionSet {
            accuracy: constant(QualityComponent::Accuracy, 0.9, 50),
            type1: constant(QualityComponent::Type1, 0.05, 50),
            type2: constant(QualityComponent::Type2, 0.1, 50),
        };
        assert!((expected_utility(&dists, &s).unwrap() - (-1049.5)).abs() < 1e-9);
    }
}
