//! Core data model: domains, representations, populations, persistence.
//!
//! A `Domain` is one structure's dataset (feature matrix, optional class
//! labels) together with a representation of the structure itself
//! (modeshapes and a connectivity graph). Sources are labelled, the target
//! is not. Persistence is JSON for metadata/representations and CSV for
//! the feature/label table; CSV numerics carry 17 significant digits so a
//! round trip is bit-exact.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EvitError, Result};

/// Structure representation used by the similarity measures: undamaged
/// modeshapes (columns, mass-normalised) plus an undirected connectivity
/// graph over node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub modeshapes: DMatrix<f64>,
    pub graph_edges: BTreeSet<(usize, usize)>,
}

impl Representation {
    pub fn new(modeshapes: DMatrix<f64>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut graph_edges = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(EvitError::Validation(format!(
                    "graph edge ({a},{b}) is a self-loop"
                )));
            }
            graph_edges.insert((a.min(b), a.max(b)));
        }
        Ok(Self { modeshapes, graph_edges })
    }

    pub fn validate(&self) -> Result<()> {
        for &(a, b) in &self.graph_edges {
            if a >= b {
                return Err(EvitError::Validation(format!(
                    "graph edge ({a},{b}) is not a normalised undirected pair"
                )));
            }
        }
        Ok(())
    }
}

/// One structure's dataset. `labels`, when present, are class indices in
/// `0..n_classes`. `representations` holds one entry for a simulated
/// domain and the concatenated constituent list for a merged domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub id: String,
    pub features: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
    pub representations: Vec<Representation>,
    pub n_classes: usize,
}

impl Domain {
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_labelled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(EvitError::Validation(format!(
                "domain {}: n_classes must be positive",
                self.id
            )));
        }
        if self.representations.is_empty() {
            return Err(EvitError::Validation(format!(
                "domain {}: at least one representation required",
                self.id
            )));
        }
        for r in &self.representations {
            r.validate()?;
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.n_samples() {
                return Err(EvitError::Validation(format!(
                    "domain {}: {} labels for {} samples",
                    self.id,
                    labels.len(),
                    self.n_samples()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= self.n_classes) {
                return Err(EvitError::Validation(format!(
                    "domain {}: label {bad} outside 0..{}",
                    self.id, self.n_classes
                )));
            }
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(EvitError::Validation(format!(
                "domain {}: non-finite feature value",
                self.id
            )));
        }
        Ok(())
    }
}

/// A decision context: labelled source domains plus one unlabelled target.
#[derive(Debug, Clone)]
pub struct Population {
    pub source_domains: Vec<Domain>,
    pub target_domain: Domain,
}

impl Population {
    pub fn n_sources(&self) -> usize {
        self.source_domains.len()
    }

    pub fn source_ids(&self) -> Vec<String> {
        self.source_domains.iter().map(|d| d.id.clone()).collect()
    }

    pub fn source_by_id(&self, id: &str) -> Option<&Domain> {
        self.source_domains.iter().find(|d| d.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.source_domains {
            d.validate()?;
            if !d.is_labelled() {
                return Err(EvitError::Validation(format!(
                    "source domain {} must be labelled",
                    d.id
                )));
            }
        }
        self.target_domain.validate()?;
        if self.target_domain.is_labelled() {
            return Err(EvitError::Validation(
                "target domain must not carry labels".into(),
            ));
        }
        let d = self.target_domain.n_features();
        let c = self.target_domain.n_classes;
        for s in &self.source_domains {
            if s.n_features() != d {
                return Err(EvitError::Validation(format!(
                    "domain {} has {} features, expected {d}",
                    s.id,
                    s.n_features()
                )));
            }
            if s.n_classes != c {
                return Err(EvitError::Validation(format!(
                    "domain {} has {} classes, expected {c}",
                    s.id, s.n_classes
                )));
            }
        }
        Ok(())
    }
}

/// Strip the labels off a labelled domain, returning the unlabelled copy
/// and the hidden label vector for later oracle scoring.
pub fn hide_labels(domain: &Domain) -> Result<(Domain, Vec<usize>)> {
    let hidden = domain.labels.clone().ok_or_else(|| {
        EvitError::Precondition(format!("domain {} has no labels to hide", domain.id))
    })?;
    let mut unlabelled = domain.clone();
    unlabelled.labels = None;
    Ok((unlabelled, hidden))
}

/// Row-concatenate a non-empty list of labelled domains, in input order.
/// The merged representation keeps the list of constituent representations.
pub fn merge_sources(domains: &[&Domain]) -> Result<Domain> {
    if domains.is_empty() {
        return Err(EvitError::Validation("cannot merge an empty domain list".into()));
    }
    let d = domains[0].n_features();
    let c = domains[0].n_classes;
    for dom in domains {
        if !dom.is_labelled() {
            return Err(EvitError::Validation(format!(
                "domain {} is unlabelled; merge requires labels",
                dom.id
            )));
        }
        if dom.n_features() != d {
            return Err(EvitError::Validation(format!(
                "domain {} has {} features, expected {d}",
                dom.id,
                dom.n_features()
            )));
        }
        if dom.n_classes != c {
            return Err(EvitError::Validation(format!(
                "domain {} has {} classes, expected {c}",
                dom.id, dom.n_classes
            )));
        }
    }
    let n_total: usize = domains.iter().map(|dom| dom.n_samples()).sum();
    let mut features = DMatrix::<f64>::zeros(n_total, d);
    let mut labels = Vec::with_capacity(n_total);
    let mut representations = Vec::new();
    let mut row = 0;
    for dom in domains {
        for i in 0..dom.n_samples() {
            for j in 0..d {
                features[(row, j)] = dom.features[(i, j)];
            }
            row += 1;
        }
        labels.extend_from_slice(dom.labels.as_ref().expect("checked above"));
        representations.extend(dom.representations.iter().cloned());
    }
    let id = domains
        .iter()
        .map(|dom| dom.id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Ok(Domain {
        id,
        features,
        labels: Some(labels),
        representations,
        n_classes: c,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RepresentationData {
    n_dof: usize,
    n_modes: usize,
    /// Row-major modeshape matrix.
    modeshapes: Vec<Vec<f64>>,
    graph_edges: Vec<(usize, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DomainMeta {
    id: String,
    n_classes: usize,
    n_samples: usize,
    n_features: usize,
    labelled: bool,
    features_csv: String,
    representations: Vec<RepresentationData>,
}

/// 17 significant digits: enough for a bit-exact f64 round trip.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| EvitError::Validation(format!("bad float {s:?}: {e}")))
}

/// Write `<id>.json` (metadata + representation) and `<id>.csv`
/// (columns f1..fd, label) into `dir`.
pub fn save_domain(dir: &Path, domain: &Domain) -> Result<()> {
    domain.validate()?;
    fs::create_dir_all(dir)?;
    let csv_name = format!("{}.csv", domain.id);

    let meta = DomainMeta {
        id: domain.id.clone(),
        n_classes: domain.n_classes,
        n_samples: domain.n_samples(),
        n_features: domain.n_features(),
        labelled: domain.is_labelled(),
        features_csv: csv_name.clone(),
        representations: domain
            .representations
            .iter()
            .map(|r| RepresentationData {
                n_dof: r.modeshapes.nrows(),
                n_modes: r.modeshapes.ncols(),
                modeshapes: (0..r.modeshapes.nrows())
                    .map(|i| (0..r.modeshapes.ncols()).map(|j| r.modeshapes[(i, j)]).collect())
                    .collect(),
                graph_edges: r.graph_edges.iter().copied().collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(dir.join(format!("{}.json", domain.id)), json)?;

    let mut wtr = csv::Writer::from_path(dir.join(&csv_name))?;
    let mut header: Vec<String> = (1..=domain.n_features()).map(|j| format!("f{j}")).collect();
    if domain.is_labelled() {
        header.push("label".into());
    }
    wtr.write_record(&header)?;
    for i in 0..domain.n_samples() {
        let mut row: Vec<String> = (0..domain.n_features())
            .map(|j| format_f64(domain.features[(i, j)]))
            .collect();
        if let Some(labels) = &domain.labels {
            row.push(labels[i].to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Load a domain previously written by [`save_domain`].
pub fn load_domain(dir: &Path, id: &str) -> Result<Domain> {
    let meta_path = dir.join(format!("{id}.json"));
    let raw = fs::read_to_string(&meta_path).map_err(|e| {
        EvitError::Config(format!("cannot read domain metadata {}: {e}", meta_path.display()))
    })?;
    let meta: DomainMeta = serde_json::from_str(&raw)?;

    let mut representations = Vec::with_capacity(meta.representations.len());
    for r in &meta.representations {
        let mut m = DMatrix::<f64>::zeros(r.n_dof, r.n_modes);
        if r.modeshapes.len() != r.n_dof {
            return Err(EvitError::Validation(format!(
                "domain {id}: modeshape row count mismatch"
            )));
        }
        for (i, row) in r.modeshapes.iter().enumerate() {
            if row.len() != r.n_modes {
                return Err(EvitError::Validation(format!(
                    "domain {id}: modeshape column count mismatch"
                )));
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        representations.push(Representation::new(m, r.graph_edges.iter().copied())?);
    }

    let csv_path = dir.join(&meta.features_csv);
    let mut rdr = csv::Reader::from_path(&csv_path).map_err(|e| {
        EvitError::Config(format!("cannot read domain table {}: {e}", csv_path.display()))
    })?;
    let mut features = Vec::with_capacity(meta.n_samples * meta.n_features);
    let mut labels: Vec<usize> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let expected = meta.n_features + usize::from(meta.labelled);
        if record.len() != expected {
            return Err(EvitError::Validation(format!(
                "domain {id}: row has {} fields, expected {expected}",
                record.len()
            )));
        }
        for j in 0..meta.n_features {
            features.push(parse_f64(&record[j])?);
        }
        if meta.labelled {
            let y: usize = record[meta.n_features].trim().parse().map_err(|e| {
                EvitError::Validation(format!("domain {id}: bad label: {e}"))
            })?;
            labels.push(y);
        }
    }
    let n_rows = features.len() / meta.n_features.max(1);
    if n_rows != meta.n_samples {
        return Err(EvitError::Validation(format!(
            "domain {id}: {n_rows} rows in CSV, metadata says {}",
            meta.n_samples
        )));
    }
    let domain = Domain {
        id: meta.id,
        features: DMatrix::from_row_slice(meta.n_samples, meta.n_features, &features),
        labels: if meta.labelled { Some(labels) } else { None },
        representations,
        n_classes: meta.n_classes,
    };
    domain.validate()?;
    Ok(domain)
}
