//! Run configuration: one JSON document driving the whole pipeline.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decision::{EnumerationConstraints, UtilitySpec};
use crate::error::{EvitError, Result};
use crate::population::PopulationConfig;
use crate::similarity::MeasureId;
use crate::transfer::{AlgorithmId, AlgorithmParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Path to the population configuration, relative to this file.
    pub population_config: PathBuf,
    /// Candidate algorithm set; must contain `null`.
    pub algorithms: Vec<AlgorithmId>,
    #[serde(default)]
    pub algorithm_params: AlgorithmParams,
    pub measure: MeasureId,
    /// Modes used by the MAC similarity; defaults to min(5, n_dof).
    #[serde(default)]
    pub n_modes: Option<usize>,
    pub constraints: EnumerationConstraints,
    pub utility: UtilitySpec,
    pub seed: u64,
    pub output_dir: PathBuf,
}

/// Run configuration with the population config loaded and paths resolved.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub population: PopulationConfig,
    pub out_dir: PathBuf,
}

impl ResolvedConfig {
    pub fn n_modes(&self) -> usize {
        self.run.n_modes.unwrap_or_else(|| self.population.n_dof.min(5))
    }

    pub fn population_dir(&self) -> PathBuf {
        self.out_dir.join("population")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.population_dir().join("manifest.json")
    }

    pub fn records_path(&self) -> PathBuf {
        self.out_dir.join("records.csv")
    }

    pub fn model_path(&self, algorithm: AlgorithmId) -> PathBuf {
        self.out_dir.join("models").join(format!("{algorithm}.json"))
    }

    pub fn recommendation_path(&self) -> PathBuf {
        self.out_dir.join("recommendation.json")
    }

    pub fn regret_report_path(&self) -> PathBuf {
        self.out_dir.join("regret_report.json")
    }

    pub fn sweep_path(&self) -> PathBuf {
        self.out_dir.join("sweep.csv")
    }
}

/// Load and validate a run configuration.
///
/// `seed_override` replaces the configured master seed; `out_override`
/// (the EVIT_OUT environment variable) replaces the output directory.
pub fn load_run_config(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<ResolvedConfig> {
    let raw = fs::read_to_string(path)
        .map_err(|e| EvitError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut run: RunConfig = serde_json::from_str(&raw)
        .map_err(|e| EvitError::Config(format!("invalid config {}: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        run.seed = seed;
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let population_path = if run.population_config.is_absolute() {
        run.population_config.clone()
    } else {
        base.join(&run.population_config)
    };
    let pop_raw = fs::read_to_string(&population_path).map_err(|e| {
        EvitError::Config(format!(
            "cannot read population config {}: {e}",
            population_path.display()
        ))
    })?;
    let population: PopulationConfig = serde_json::from_str(&pop_raw).map_err(|e| {
        EvitError::Config(format!(
            "invalid population config {}: {e}",
            population_path.display()
        ))
    })?;

    let out_dir = out_override.unwrap_or_else(|| run.output_dir.clone());

    let resolved = ResolvedConfig { run, population, out_dir };
    validate(&resolved)?;
    Ok(resolved)
}

fn validate(config: &ResolvedConfig) -> Result<()> {
    let run = &config.run;
    if run.algorithms.is_empty() {
        return Err(EvitError::Config("algorithms list must not be empty".into()));
    }
    if !run.algorithms.contains(&AlgorithmId::Null) {
        return Err(EvitError::Config(
            "the candidate algorithm set must contain \"null\"".into(),
        ));
    }
    let mut seen = run.algorithms.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != run.algorithms.len() {
        return Err(EvitError::Config("duplicate algorithm in candidate set".into()));
    }
    if !run.algorithms.iter().any(|a| *a != AlgorithmId::Null) {
        return Err(EvitError::Config(
            "at least one non-null candidate algorithm is required".into(),
        ));
    }
    run.algorithm_params
        .validate()
        .map_err(|e| EvitError::Config(e.to_string()))?;
    run.constraints
        .validate()
        .map_err(|e| EvitError::Config(e.to_string()))?;
    run.utility
        .validate()
        .map_err(|e| EvitError::Config(e.to_string()))?;
    config
        .population
        .validate()
        .map_err(|e| EvitError::Config(e.to_string()))?;
    if let Some(n_modes) = run.n_modes {
        if n_modes == 0 || n_modes > config.population.n_dof {
            return Err(EvitError::Config(format!(
                "n_modes must be in 1..={}",
                config.population.n_dof
            )));
        }
    }
    for alg in &run.algorithms {
        if *alg != AlgorithmId::Null && !run.utility.cost_per_algorithm.contains_key(alg) {
            return Err(EvitError::Config(format!(
                "utility.cost_per_algorithm is missing an entry for {alg}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    pub fn population_json() -> String {
        serde_json::json!({
            "n_structures": 3,
            "n_dof": 4,
            "nominal_masses": [1.0, 1.0, 1.0, 1.0],
            "nominal_stiffnesses": [1000.0, 1000.0, 1000.0, 1000.0],
            "stiffness_perturbation_std": 0.05,
            "structures": [
                {"id": "s0", "boundary": "fixed-free"},
                {"id": "s1", "boundary": "fixed-fixed"},
                {"id": "t", "boundary": "fixed-free"}
            ],
            "target_id": "t",
            "damage_states": [
                {"class_label": 0},
                {"class_label": 1, "spring_index": 1, "reduction": 0.25}
            ],
            "n_per_class": 5,
            "noise_std": 0.01
        })
        .to_string()
    }

    fn run_json(out_dir: &str) -> String {
        serde_json::json!({
            "population_config": "population.json",
            "algorithms": ["null", "stat_align"],
            "measure": "mac",
            "constraints": {"mode": "single_source"},
            "utility": {
                "prior_damage": 0.1,
                "cost_inspection": 10.0,
                "cost_failure": 100.0,
                "accuracy_weight": 1.0,
                "cost_per_algorithm": {"stat_align": 0.5},
                "n_mc": 50
            },
            "seed": 7,
            "output_dir": out_dir
        })
        .to_string()
    }

    #[test]
    fn loads_and_resolves() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "population.json", &population_json());
        let cfg_path = write_file(dir.path(), "run.json", &run_json("out"));
        let cfg = load_run_config(&cfg_path, None, None).unwrap();
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.n_modes(), 4);
        assert_eq!(cfg.population.n_structures, 3);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));

        let overridden = load_run_config(&cfg_path, Some(99), Some(PathBuf::from("elsewhere"))).unwrap();
        assert_eq!(overridden.run.seed, 99);
        assert_eq!(overridden.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn missing_files_are_config_errors() {
        let err = load_run_config(Path::new("/nonexistent/run.json"), None, None).unwrap_err();
        assert!(matches!(err, EvitError::Config(_)));

        let dir = tempfile::tempdir().unwrap();
        let cfg_path = write_file(dir.path(), "run.json", &run_json("out"));
        let err = load_run_config(&cfg_path, None, None).unwrap_err();
        assert!(matches!(err, EvitError::Config(_)));
    }

    #[test]
    fn rejects_candidate_set_without_null() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "population.json", &population_json());
        let bad = run_json("out").replace("[\"null\",\"stat_align\"]", "[\"stat_align\"]");
        let cfg_path = write_file(dir.path(), "run.json", &bad);
        let err = load_run_config(&cfg_path, None, None).unwrap_err();
        assert!(matches!(err, EvitError::Config(_)), "{err}");
    }

    #[test]
    fn rejects_missing_algorithm_cost() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "population.json", &population_json());
        let bad = run_json("out").replace("{\"stat_align\":0.5}", "{}");
        let cfg_path = write_file(dir.path(), "run.json", &bad);
        let err = load_run_config(&cfg_path, None, None).unwrap_err();
        assert!(matches!(err, EvitError::Config(_)), "{err}");
    }
}
