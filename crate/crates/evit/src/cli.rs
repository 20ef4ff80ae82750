//! Pipeline stages behind the command-line interface.
//!
//! Five stages with file handoffs under the output directory:
//! generate -> population/, simulate-records -> records.csv,
//! fit -> models/, recommend -> recommendation.json,
//! evaluate -> regret_report.json + sweep.csv. Each stage is idempotent
//! given identical inputs and seed, and artifacts carry no timestamps, so
//! reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ResolvedConfig;
use crate::decision::{load_recommendation, recommend, render_table, save_recommendation};
use crate::domain::{hide_labels, load_domain, save_domain, Population};
use crate::error::{EvitError, Result};
use crate::evaluation::{append_sweep_row, oracle_quality, regret_report, save_regret_report, OracleResult};
use crate::population::generate_population;
use crate::quality::{
    fit_quality_model, generate_training_records, load_model, load_records, null_quality_distribution,
    save_model, save_records, QualityModel,
};
use crate::rng::derive_seed;
use crate::transfer::AlgorithmId;

#[derive(Debug, Serialize, Deserialize)]
struct PopulationManifest {
    n_dof: usize,
    n_classes: usize,
    source_ids: Vec<String>,
    target_id: String,
}

/// Generate the population and write domains plus the manifest.
pub fn cmd_generate(config: &ResolvedConfig) -> Result<()> {
    let domains = generate_population(&config.population, config.run.seed)?;
    let dir = config.population_dir();
    fs::create_dir_all(&dir)?;
    for domain in &domains {
        save_domain(&dir, domain)?;
    }
    let manifest = PopulationManifest {
        n_dof: config.population.n_dof,
        n_classes: config.population.damage_states.len(),
        source_ids: domains
            .iter()
            .filter(|d| d.id != config.population.target_id)
            .map(|d| d.id.clone())
            .collect(),
        target_id: config.population.target_id.clone(),
    };
    fs::write(config.manifest_path(), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Load the generated population; the target's labels are hidden and
/// returned separately for oracle scoring.
pub fn load_population(config: &ResolvedConfig) -> Result<(Population, Vec<usize>)> {
    let raw = fs::read_to_string(config.manifest_path()).map_err(|e| {
        EvitError::Config(format!(
            "cannot read population manifest {}: {e}; run `evit generate` first",
            config.manifest_path().display()
        ))
    })?;
    let manifest: PopulationManifest = serde_json::from_str(&raw)?;
    let dir = config.population_dir();
    let source_domains = manifest
        .source_ids
        .iter()
        .map(|id| load_domain(&dir, id))
        .collect::<Result<Vec<_>>>()?;
    let labelled_target = load_domain(&dir, &manifest.target_id)?;
    let (target_domain, hidden) = hide_labels(&labelled_target)?;
    let population = Population { source_domains, target_domain };
    population.validate()?;
    Ok((population, hidden))
}

/// Run the pseudo-transfer campaign over the sources and write records.csv.
pub fn cmd_simulate_records(config: &ResolvedConfig) -> Result<()> {
    let (population, _) = load_population(config)?;
    let records = generate_training_records(
        &population.source_domains,
        &config.run.algorithms,
        &config.run.constraints,
        config.run.measure,
        &config.run.algorithm_params,
        config.n_modes(),
        derive_seed(config.run.seed, "records"),
    )?;
    save_records(&config.records_path(), &records)
}

/// Fit one quality model per non-null candidate algorithm.
pub fn cmd_fit(config: &ResolvedConfig) -> Result<()> {
    let records = load_records(&config.records_path()).map_err(|e| match e {
        EvitError::Config(msg) => {
            EvitError::Config(format!("{msg}; run `evit simulate-records` first"))
        }
        other => other,
    })?;
    for &algorithm in &config.run.algorithms {
        if algorithm == AlgorithmId::Null {
            continue;
        }
        let model = fit_quality_model(&records, algorithm, derive_seed(config.run.seed, &format!("fit:{algorithm}")))?;
        save_model(&config.model_path(algorithm), &model)?;
    }
    Ok(())
}

fn load_models(config: &ResolvedConfig) -> Result<BTreeMap<AlgorithmId, QualityModel>> {
    let mut models = BTreeMap::new();
    for &algorithm in &config.run.algorithms {
        if algorithm == AlgorithmId::Null {
            continue;
        }
        let path = config.model_path(algorithm);
        let model = load_model(&path).map_err(|e| match e {
            EvitError::Config(msg) => EvitError::Config(format!("{msg}; run `evit fit` first")),
            other => other,
        })?;
        models.insert(algorithm, model);
    }
    Ok(models)
}

/// Rank all candidate strategies and write recommendation.json; the table
/// is returned for printing.
pub fn cmd_recommend(config: &ResolvedConfig) -> Result<String> {
    let (population, _) = load_population(config)?;
    if population.n_sources() < 2 {
        return Err(EvitError::Precondition(format!(
            "strategy recommendation needs more than one candidate source domain (N_s > 1); got {}",
            population.n_sources()
        )));
    }
    let models = load_models(config)?;
    let null_dist = null_quality_distribution(
        &population.source_domains,
        config.run.utility.n_mc,
        derive_seed(config.run.seed, "null"),
    )?;
    let recommendation = recommend(
        &population,
        &models,
        &null_dist,
        &config.run.utility,
        &config.run.constraints,
        config.run.measure,
        config.n_modes(),
        derive_seed(config.run.seed, "recommend"),
    )?;
    save_recommendation(&config.recommendation_path(), &recommendation)?;
    Ok(render_table(&recommendation))
}

/// Score every ranked strategy against the hidden target labels and write
/// the regret report; a sweep row is appended for batch experiments.
pub fn cmd_evaluate(config: &ResolvedConfig) -> Result<()> {
    let (population, hidden) = load_population(config)?;
    let recommendation = load_recommendation(&config.recommendation_path()).map_err(|e| match e {
        EvitError::Config(msg) => EvitError::Config(format!("{msg}; run `evit recommend` first")),
        other => other,
    })?;
    let results: Vec<OracleResult> = recommendation
        .ranked
        .par_iter()
        .enumerate()
        .map(|(i, ranked)| {
            oracle_quality(
                &ranked.strategy,
                &population,
                &hidden,
                &config.run.algorithm_params,
                &config.run.utility,
                derive_seed(config.run.seed, &format!("oracle:{i}")),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let report = regret_report(&recommendation, &results, &config.run.utility)?;
    save_regret_report(&config.regret_report_path(), &report)?;
    append_sweep_row(&config.sweep_path(), config.run.seed, &report)?;
    Ok(())
}
