//! Oracle-mode validation.
//!
//! In simulation the target's true labels are known (hidden, not absent),
//! so every strategy can be executed end-to-end and scored against ground
//! truth. This measures realised quality, regret against the oracle-best
//! strategy, and whether the recommendation avoided negative transfer.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decision::{utility_of_quality, Recommendation, TransferStrategy, UtilitySpec};
use crate::domain::{merge_sources, Domain, Population};
use crate::error::{EvitError, Result};
use crate::quality::majority_class;
use crate::transfer::{apply_transfer, evaluate_quality, train_classify, AlgorithmParams, QualityMeasures};

/// Realised post-transfer quality of one strategy on the true target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub strategy: TransferStrategy,
    pub realised: QualityMeasures,
    pub realised_utility: f64,
}

/// Gap between the recommendation and the oracle-best strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub recommended: TransferStrategy,
    pub oracle_best: TransferStrategy,
    pub regret: f64,
    pub avoided_negative_transfer: bool,
}

/// Execute one strategy end-to-end against the hidden target labels.
/// T0 is scored with the population-majority baseline. Reuses the exact
/// transfer/classify path of the record generator, with the given seed.
pub fn oracle_quality(
    strategy: &TransferStrategy,
    population: &Population,
    hidden_labels: &[usize],
    params: &AlgorithmParams,
    spec: &UtilitySpec,
    seed: u64,
) -> Result<OracleResult> {
    if hidden_labels.len() != population.target_domain.n_samples() {
        return Err(EvitError::Validation(format!(
            "{} hidden labels for {} target samples",
            hidden_labels.len(),
            population.target_domain.n_samples()
        )));
    }
    strategy.validate()?;
    let realised = if strategy.is_null() {
        let mut pool = Vec::new();
        for d in &population.source_domains {
            pool.extend_from_slice(d.labels.as_ref().ok_or_else(|| {
                EvitError::Validation(format!("source {} is unlabelled", d.id))
            })?);
        }
        let majority = majority_class(&pool)?;
        let y_pred = vec![majority; hidden_labels.len()];
        evaluate_quality(&y_pred, hidden_labels)?
    } else {
        let selected: Vec<&Domain> = strategy
            .source_ids
            .iter()
            .map(|id| {
                population.source_by_id(id).ok_or_else(|| {
                    EvitError::Validation(format!("strategy references unknown source {id}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let merged = merge_sources(&selected)?;
        let out = apply_transfer(
            strategy.algorithm,
            &merged,
            &population.target_domain.features,
            params,
            seed,
        )?;
        let y_pred = train_classify(
            &out.source_features,
            &out.source_labels,
            &out.target_features,
            params,
        )?;
        evaluate_quality(&y_pred, hidden_labels)?
    };
    Ok(OracleResult {
        strategy: strategy.clone(),
        realised,
        realised_utility: utility_of_quality(&realised, spec),
    })
}

/// Compare the recommendation against the oracle results of every ranked
/// strategy. Utilities are quality utilities on realised measures.
pub fn regret_report(
    recommendation: &Recommendation,
    oracle_results: &[OracleResult],
    spec: &UtilitySpec,
) -> Result<RegretReport> {
    let lookup = |strategy: &TransferStrategy| -> Result<f64> {
        oracle_results
            .iter()
            .find(|r| &r.strategy == strategy)
            .map(|r| utility_of_quality(&r.realised, spec))
            .ok_or_else(|| {
                EvitError::Validation(format!("no oracle result for strategy {strategy}"))
            })
    };

    for ranked in &recommendation.ranked {
        lookup(&ranked.strategy)?;
    }

    let recommended = recommendation.best.clone();
    let recommended_utility = lookup(&recommended)?;
    let t0_utility = lookup(&TransferStrategy::null())?;

    let mut oracle_best = recommended.clone();
    let mut best_utility = recommended_utility;
    for ranked in &recommendation.ranked {
        let u = lookup(&ranked.strategy)?;
        let better = u > best_utility
            || (u == best_utility
                && ranked.strategy.source_ids.len() < oracle_best.source_ids.len());
        if better {
            oracle_best = ranked.strategy.clone();
            best_utility = u;
        }
    }

    Ok(RegretReport {
        recommended: recommended.clone(),
        oracle_best,
        regret: best_utility - recommended_utility,
        avoided_negative_transfer: recommended_utility >= t0_utility,
    })
}

pub fn save_regret_report(path: &Path, report: &RegretReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Append one sweep row (seed, regret, avoided flag, recommended strategy)
/// to a CSV, creating it with a header when absent.
pub fn append_sweep_row(path: &Path, seed: u64, report: &RegretReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let new_file = !path.exists();
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if new_file {
        writeln!(file, "seed,regret,avoided_negative_transfer,recommended")?;
    }
    writeln!(
        file,
        "{},{},{},{}",
        seed,
        crate::domain::format_f64(report.regret),
        report.avoided_negative_transfer,
        report.recommended
    )?;
    Ok(())
}
