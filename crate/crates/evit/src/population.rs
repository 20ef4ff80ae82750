//! Synthetic population of lumped-mass structures.
//!
//! Serial mass-spring chains with fixed-free or fixed-fixed boundaries.
//! Each structure is assembled into mass/stiffness matrices, solved with a
//! generalised symmetric eigensolver, and turned into a labelled feature
//! dataset of noisy natural frequencies, one class per damage state.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Representation};
use crate::error::{EvitError, Result};
use crate::rng::{derive_seed, seeded_rng};

/// Boundary condition of a chain: anchored at one end or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    #[serde(rename = "fixed-free")]
    FixedFree,
    #[serde(rename = "fixed-fixed")]
    FixedFixed,
}

impl Boundary {
    /// Springs in a chain with `n_dof` masses.
    pub fn n_springs(self, n_dof: usize) -> usize {
        match self {
            Boundary::FixedFree => n_dof,
            Boundary::FixedFixed => n_dof + 1,
        }
    }
}

/// One health state: class 0 is the undamaged baseline, damage classes
/// apply a fractional stiffness reduction to one spring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageState {
    pub class_label: usize,
    #[serde(default)]
    pub spring_index: Option<usize>,
    #[serde(default)]
    pub reduction: f64,
}

impl DamageState {
    pub fn undamaged() -> Self {
        Self { class_label: 0, spring_index: None, reduction: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.reduction) {
            return Err(EvitError::Validation(format!(
                "damage reduction {} outside [0,1)",
                self.reduction
            )));
        }
        let is_baseline = self.reduction == 0.0 && self.spring_index.is_none();
        if (self.class_label == 0) != is_baseline {
            return Err(EvitError::Validation(format!(
                "class {} must be the undamaged state exactly when label is 0",
                self.class_label
            )));
        }
        Ok(())
    }
}

/// Parametric description of one chain structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub id: String,
    pub n_dof: usize,
    /// One mass per degree of freedom, kg.
    pub masses: Vec<f64>,
    /// One stiffness per spring, N/m; `n_dof` springs for fixed-free,
    /// `n_dof + 1` for fixed-fixed.
    pub stiffnesses: Vec<f64>,
    pub boundary: Boundary,
    pub damage_states: Vec<DamageState>,
    /// Dimensionless multiplier applied to every spring.
    #[serde(default = "default_temperature")]
    pub temperature_factor: f64,
}

fn default_temperature() -> f64 {
    1.0
}

impl StructureSpec {
    pub fn n_springs(&self) -> usize {
        self.boundary.n_springs(self.n_dof)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dof == 0 {
            return Err(EvitError::Validation("n_dof must be positive".into()));
        }
        if self.masses.len() != self.n_dof {
            return Err(EvitError::Validation(format!(
                "structure {}: {} masses for {} degrees of freedom",
                self.id,
                self.masses.len(),
                self.n_dof
            )));
        }
        if self.stiffnesses.len() != self.n_springs() {
            return Err(EvitError::Validation(format!(
                "structure {}: {} stiffnesses, boundary {:?} needs {}",
                self.id,
                self.stiffnesses.len(),
                self.boundary,
                self.n_springs()
            )));
        }
        if self.masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(EvitError::Validation(format!(
                "structure {}: all masses must be positive",
                self.id
            )));
        }
        if self.stiffnesses.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
            return Err(EvitError::Validation(format!(
                "structure {}: all stiffnesses must be positive",
                self.id
            )));
        }
        if !(self.temperature_factor > 0.0) {
            return Err(EvitError::Validation(format!(
                "structure {}: temperature factor must be positive",
                self.id
            )));
        }
        validate_damage_states(&self.damage_states, self.n_dof)?;
        Ok(())
    }
}

/// Damage classes must be contiguous 0..C-1, listed in label order, and
/// reference springs that exist for every boundary (index < n_dof).
pub fn validate_damage_states(states: &[DamageState], n_dof: usize) -> Result<()> {
    if states.is_empty() {
        return Err(EvitError::Validation("at least one damage state required".into()));
    }
    for (i, s) in states.iter().enumerate() {
        s.validate()?;
        if s.class_label != i {
            return Err(EvitError::Validation(format!(
                "damage classes must be contiguous 0..C-1 in order; position {i} has label {}",
                s.class_label
            )));
        }
        if let Some(idx) = s.spring_index {
            if idx >= n_dof {
                return Err(EvitError::Validation(format!(
                    "damage state {i}: spring index {idx} out of range (must be < {n_dof})"
                )));
            }
        }
    }
    Ok(())
}

/// Assembled second-order model of one structure in one health state.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralModel {
    pub mass_matrix: DMatrix<f64>,
    pub stiffness_matrix: DMatrix<f64>,
}

/// Natural frequencies (rad/s, ascending) and mass-normalised modeshapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalData {
    pub natural_frequencies: DVector<f64>,
    pub modeshapes: DMatrix<f64>,
}

/// Assemble the chain. Spring 0 anchors mass 0 to ground, spring j joins
/// masses j-1 and j, and the extra spring of a fixed-fixed chain anchors
/// the last mass to ground. The damaged spring is scaled by
/// `1 - reduction`, every spring by the temperature factor.
pub fn build_structure(spec: &StructureSpec, damage: &DamageState) -> Result<StructuralModel> {
    spec.validate()?;
    damage.validate()?;
    let n = spec.n_dof;
    let n_springs = spec.n_springs();
    if let Some(idx) = damage.spring_index {
        if idx >= n_springs {
            return Err(EvitError::Validation(format!(
                "damage spring index {idx} out of range for {n_springs} springs"
            )));
        }
    }

    let mut k = spec.stiffnesses.clone();
    for kk in &mut k {
        *kk *= spec.temperature_factor;
    }
    if let Some(idx) = damage.spring_index {
        k[idx] *= 1.0 - damage.reduction;
    }

    let mut stiffness = DMatrix::<f64>::zeros(n, n);
    // ground spring
    stiffness[(0, 0)] += k[0];
    // inter-mass springs
    for j in 1..n {
        stiffness[(j - 1, j - 1)] += k[j];
        stiffness[(j, j)] += k[j];
        stiffness[(j - 1, j)] -= k[j];
        stiffness[(j, j - 1)] -= k[j];
    }
    // second anchor
    if spec.boundary == Boundary::FixedFixed {
        stiffness[(n - 1, n - 1)] += k[n];
    }

    let mass = DMatrix::<f64>::from_diagonal(&DVector::from_vec(spec.masses.clone()));
    Ok(StructuralModel { mass_matrix: mass, stiffness_matrix: stiffness })
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(EvitError::Numerical(format!(
                    "{name} matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Solve the generalised eigenproblem K phi = omega^2 M phi.
///
/// Returns all modes sorted ascending by frequency. Modeshape columns are
/// mass-normalised (phi' M phi = 1) and sign-fixed so the largest-magnitude
/// entry of each column is positive.
pub fn modal_analysis(model: &StructuralModel) -> Result<ModalData> {
    let n = model.mass_matrix.nrows();
    if model.mass_matrix.ncols() != n
        || model.stiffness_matrix.nrows() != n
        || model.stiffness_matrix.ncols() != n
    {
        return Err(EvitError::Validation("mass/stiffness matrices must be square and conformal".into()));
    }
    check_symmetric(&model.mass_matrix, "mass")?;
    check_symmetric(&model.stiffness_matrix, "stiffness")?;

    let chol = model
        .mass_matrix
        .clone()
        .cholesky()
        .ok_or_else(|| EvitError::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();

    // A = L^-1 K L^-T, symmetric by construction up to roundoff
    let x = l
        .solve_lower_triangular(&model.stiffness_matrix)
        .ok_or_else(|| EvitError::Numerical("singular mass factor".into()))?;
    let a = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| EvitError::Numerical("singular mass factor".into()))?;
    let a = (&a + a.transpose()) * 0.5;

    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut freqs = DVector::<f64>::zeros(n);
    let mut shapes = DMatrix::<f64>::zeros(n, n);
    for (col, &idx) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[idx];
        if lambda < 0.0 {
            if lambda < -1e-9 * lambda_max.max(1.0) {
                return Err(EvitError::Numerical(format!(
                    "negative eigenvalue {lambda} in the generalised eigenproblem"
                )));
            }
            lambda = 0.0;
        }
        freqs[col] = lambda.sqrt();

        let v = eig.eigenvectors.column(idx).clone_owned();
        let mut phi = l
            .transpose()
            .solve_upper_triangular(&v)
            .ok_or_else(|| EvitError::Numerical("singular mass factor".into()))?;
        // tighten the mass-normalisation against roundoff
        let m_phi = &model.mass_matrix * &phi;
        let norm = phi.dot(&m_phi).sqrt();
        if norm > 0.0 {
            phi /= norm;
        }
        let mut max_idx = 0;
        for i in 1..n {
            if phi[i].abs() > phi[max_idx].abs() {
                max_idx = i;
            }
        }
        if phi[max_idx] < 0.0 {
            phi = -phi;
        }
        shapes.set_column(col, &phi);
    }
    Ok(ModalData { natural_frequencies: freqs, modeshapes: shapes })
}

/// Connectivity graph of a chain. Masses are nodes 0..n_dof-1, ground is
/// node n_dof; a fixed-fixed chain carries the extra anchor edge.
pub fn chain_graph(n_dof: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    let ground = n_dof;
    let mut edges = vec![(0, ground)];
    for i in 0..n_dof.saturating_sub(1) {
        edges.push((i, i + 1));
    }
    if boundary == Boundary::FixedFixed {
        edges.push((n_dof - 1, ground));
    }
    edges
}

/// Build a labelled feature dataset for one structure.
///
/// For each damage state the damaged chain is solved and `n_per_class`
/// samples of its natural frequencies are drawn with relative Gaussian
/// noise (std = noise_std * frequency). The representation carries the
/// undamaged modeshapes and the chain graph. Deterministic given `seed`.
pub fn synthesize_domain(
    spec: &StructureSpec,
    n_per_class: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Domain> {
    spec.validate()?;
    if n_per_class == 0 {
        return Err(EvitError::Validation("n_per_class must be positive".into()));
    }
    if !(noise_std >= 0.0) {
        return Err(EvitError::Validation("noise_std must be non-negative".into()));
    }

    let undamaged = modal_analysis(&build_structure(spec, &DamageState::undamaged())?)?;
    let representation = Representation::new(
        undamaged.modeshapes.clone(),
        chain_graph(spec.n_dof, spec.boundary),
    )?;

    let n_classes = spec.damage_states.len();
    let n_samples = n_classes * n_per_class;
    let d = spec.n_dof;
    let mut features = DMatrix::<f64>::zeros(n_samples, d);
    let mut labels = Vec::with_capacity(n_samples);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    use rand::SeedableRng;
    let standard = Normal::new(0.0, 1.0).expect("unit normal");

    let mut row = 0;
    for state in &spec.damage_states {
        let modal = modal_analysis(&build_structure(spec, state)?)?;
        for _ in 0..n_per_class {
            for j in 0..d {
                let f = modal.natural_frequencies[j];
                let noise = if noise_std > 0.0 {
                    standard.sample(&mut rng) * noise_std * f
                } else {
                    0.0
                };
                features[(row, j)] = f + noise;
            }
            labels.push(state.class_label);
            row += 1;
        }
    }

    let domain = Domain {
        id: spec.id.clone(),
        features,
        labels: Some(labels),
        representations: vec![representation],
        n_classes,
    };
    domain.validate()?;
    Ok(domain)
}

/// Id plus boundary assignment for one member of the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureAssignment {
    pub id: String,
    pub boundary: Boundary,
}

/// Configuration of a synthetic population, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub n_structures: usize,
    pub n_dof: usize,
    pub nominal_masses: Vec<f64>,
    /// `n_dof` entries, or `n_dof + 1` to pin the fixed-fixed anchor spring;
    /// with `n_dof` entries the anchor spring reuses the last value.
    pub nominal_stiffnesses: Vec<f64>,
    /// Relative standard deviation of per-structure stiffness perturbations.
    pub stiffness_perturbation_std: f64,
    pub structures: Vec<StructureAssignment>,
    /// Which structure plays the target; the rest are sources.
    pub target_id: String,
    pub damage_states: Vec<DamageState>,
    pub n_per_class: usize,
    pub noise_std: f64,
    #[serde(default = "default_temperature")]
    pub temperature_factor: f64,
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.structures.is_empty() {
            return Err(EvitError::Validation("population needs at least one structure".into()));
        }
        if self.n_structures != self.structures.len() {
            return Err(EvitError::Validation(format!(
                "n_structures = {} but {} structures listed",
                self.n_structures,
                self.structures.len()
            )));
        }
        let mut ids: Vec<&str> = self.structures.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.structures.len() {
            return Err(EvitError::Validation("structure ids must be unique".into()));
        }
        if !self.structures.iter().any(|s| s.id == self.target_id) {
            return Err(EvitError::Validation(format!(
                "target id {:?} is not among the structures",
                self.target_id
            )));
        }
        if self.n_dof == 0 {
            return Err(EvitError::Validation("n_dof must be positive".into()));
        }
        if self.nominal_masses.len() != self.n_dof {
            return Err(EvitError::Validation(format!(
                "{} nominal masses for {} degrees of freedom",
                self.nominal_masses.len(),
                self.n_dof
            )));
        }
        if self.nominal_stiffnesses.len() != self.n_dof
            && self.nominal_stiffnesses.len() != self.n_dof + 1
        {
            return Err(EvitError::Validation(format!(
                "{} nominal stiffnesses; expected {} or {}",
                self.nominal_stiffnesses.len(),
                self.n_dof,
                self.n_dof + 1
            )));
        }
        if self.nominal_masses.iter().any(|&v| !(v > 0.0))
            || self.nominal_stiffnesses.iter().any(|&v| !(v > 0.0))
        {
            return Err(EvitError::Validation("nominal masses and stiffnesses must be positive".into()));
        }
        if !(self.stiffness_perturbation_std >= 0.0) {
            return Err(EvitError::Validation("stiffness perturbation std must be non-negative".into()));
        }
        if self.n_per_class == 0 {
            return Err(EvitError::Validation("n_per_class must be positive".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(EvitError::Validation("noise_std must be non-negative".into()));
        }
        if !(self.temperature_factor > 0.0) {
            return Err(EvitError::Validation("temperature factor must be positive".into()));
        }
        validate_damage_states(&self.damage_states, self.n_dof)?;
        Ok(())
    }

    fn nominal_stiffness(&self, spring: usize) -> f64 {
        *self
            .nominal_stiffnesses
            .get(spring)
            .unwrap_or_else(|| self.nominal_stiffnesses.last().expect("validated non-empty"))
    }
}

/// Sample one structure's spec from the population config. Per-structure
/// randomness is keyed on the structure id, so the result is independent
/// of the listing order.
fn sample_structure(config: &PopulationConfig, entry: &StructureAssignment, master_seed: u64) -> Result<StructureSpec> {
    let n_springs = entry.boundary.n_springs(config.n_dof);
    let mut rng = seeded_rng(master_seed, &format!("stiffness:{}", entry.id));
    let mut stiffnesses = Vec::with_capacity(n_springs);
    for j in 0..n_springs {
        let nominal = config.nominal_stiffness(j);
        if config.stiffness_perturbation_std == 0.0 {
            stiffnesses.push(nominal);
            continue;
        }
        let dist = Normal::new(nominal, config.stiffness_perturbation_std * nominal)
            .map_err(|e| EvitError::Validation(format!("bad perturbation parameters: {e}")))?;
        let mut drawn = None;
        for _ in 0..100 {
            let k = dist.sample(&mut rng);
            if k > 0.0 && k.is_finite() {
                drawn = Some(k);
                break;
            }
        }
        let k = drawn.ok_or_else(|| {
            EvitError::Numerical(format!(
                "structure {}: could not sample a positive stiffness for spring {j} in 100 attempts",
                entry.id
            ))
        })?;
        stiffnesses.push(k);
    }
    Ok(StructureSpec {
        id: entry.id.clone(),
        n_dof: config.n_dof,
        masses: config.nominal_masses.clone(),
        stiffnesses,
        boundary: entry.boundary,
        damage_states: config.damage_states.clone(),
        temperature_factor: config.temperature_factor,
    })
}

/// Generate every domain of the population (all labelled, config order).
pub fn generate_population(config: &PopulationConfig, seed: u64) -> Result<Vec<Domain>> {
    config.validate()?;
    config
        .structures
        .iter()
        .map(|entry| {
            let spec = sample_structure(config, entry, seed)?;
            synthesize_domain(
                &spec,
                config.n_per_class,
                config.noise_std,
                derive_seed(seed, &format!("domain:{}", entry.id)),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn spec_1dof() -> StructureSpec {
        StructureSpec {
            id: "one".into(),
            n_dof: 1,
            masses: vec![1.0],
            stiffnesses: vec![1.0],
            boundary: Boundary::FixedFree,
            damage_states: vec![DamageState::undamaged()],
            temperature_factor: 1.0,
        }
    }

    fn spec_2dof() -> StructureSpec {
        StructureSpec {
            id: "two".into(),
            n_dof: 2,
            masses: vec![1.0, 1.0],
            stiffnesses: vec![1.0, 1.0],
            boundary: Boundary::FixedFree,
            damage_states: vec![DamageState::undamaged()],
            temperature_factor: 1.0,
        }
    }

    #[test]
    fn one_dof_assembly() {
        let model = build_structure(&spec_1dof(), &DamageState::undamaged()).unwrap();
        assert_eq!(model.mass_matrix, DMatrix::from_row_slice(1, 1, &[1.0]));
        assert_eq!(model.stiffness_matrix, DMatrix::from_row_slice(1, 1, &[1.0]));
    }

    #[test]
    fn two_dof_chain_assembly() {
        // hand assembly: K = [[k1+k2, -k2], [-k2, k2]]
        let model = build_structure(&spec_2dof(), &DamageState::undamaged()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]);
        assert_eq!(model.stiffness_matrix, expected);
    }

    #[test]
    fn damage_scales_single_spring() {
        let damage = DamageState { class_label: 1, spring_index: Some(0), reduction: 0.5 };
        let model = build_structure(&spec_1dof(), &damage).unwrap();
        assert_eq!(model.stiffness_matrix[(0, 0)], 0.5);
    }

    #[test]
    fn damage_reduction_must_stay_below_one() {
        let damage = DamageState { class_label: 1, spring_index: Some(0), reduction: 1.0 };
        assert!(build_structure(&spec_1dof(), &damage).is_err());
    }

    #[test]
    fn one_dof_frequency() {
        let modal = modal_analysis(&build_structure(&spec_1dof(), &DamageState::undamaged()).unwrap()).unwrap();
        assert_relative_eq!(modal.natural_frequencies[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_dof_analytic_eigenvalues() {
        // roots of det(K - w^2 M) = 0 for the unit chain: (3 +- sqrt(5)) / 2
        let modal = modal_analysis(&build_structure(&spec_2dof(), &DamageState::undamaged()).unwrap()).unwrap();
        let lo = (3.0 - 5.0f64.sqrt()) / 2.0;
        let hi = (3.0 + 5.0f64.sqrt()) / 2.0;
        assert_relative_eq!(modal.natural_frequencies[0].powi(2), lo, epsilon = 1e-9);
        assert_relative_eq!(modal.natural_frequencies[1].powi(2), hi, epsilon = 1e-9);
    }

    #[test]
    fn stiffness_scaling_scales_frequencies() {
        let base = modal_analysis(&build_structure(&spec_2dof(), &DamageState::undamaged()).unwrap()).unwrap();
        let mut spec = spec_2dof();
        spec.stiffnesses = vec![2.0, 2.0];
        let scaled = modal_analysis(&build_structure(&spec, &DamageState::undamaged()).unwrap()).unwrap();
        for i in 0..2 {
            assert_relative_eq!(
                scaled.natural_frequencies[i],
                base.natural_frequencies[i] * 2.0f64.sqrt(),
                epsilon = 1e-9
            );
            for j in 0..2 {
                assert_relative_eq!(scaled.modeshapes[(j, i)], base.modeshapes[(j, i)], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn modes_are_mass_normalised_and_residual_small() {
        let mut rng = seeded_rng(7, "modal-prop");
        for _ in 0..25 {
            let n = 10;
            let spec = StructureSpec {
                id: "r".into(),
                n_dof: n,
                masses: (0..n).map(|_| 0.5 + rng.random::<f64>()).collect(),
                stiffnesses: (0..n).map(|_| 500.0 + 1000.0 * rng.random::<f64>()).collect(),
                boundary: Boundary::FixedFree,
                damage_states: vec![DamageState::undamaged()],
                temperature_factor: 1.0,
            };
            let model = build_structure(&spec, &DamageState::undamaged()).unwrap();
            let modal = modal_analysis(&model).unwrap();
            for c in 0..n {
                let phi = modal.modeshapes.column(c).clone_owned();
                let m_phi = &model.mass_matrix * &phi;
                assert_relative_eq!(phi.dot(&m_phi), 1.0, epsilon = 1e-9);
                let k_phi = &model.stiffness_matrix * &phi;
                let w2 = modal.natural_frequencies[c].powi(2);
                let residual = (&k_phi - &m_phi * w2).norm();
                assert!(residual <= 1e-8 * k_phi.norm().max(1e-30), "residual {residual}");
            }
            for c in 1..n {
                assert!(modal.natural_frequencies[c] >= modal.natural_frequencies[c - 1]);
            }
        }
    }

    #[test]
    fn rayleigh_monotonicity() {
        // reducing any spring stiffness never increases any natural frequency
        let mut rng = seeded_rng(11, "rayleigh");
        for trial in 0..20 {
            let n = 6;
            let boundary = if trial % 2 == 0 { Boundary::FixedFree } else { Boundary::FixedFixed };
            let spec = StructureSpec {
                id: "r".into(),
                n_dof: n,
                masses: (0..n).map(|_| 0.5 + rng.random::<f64>()).collect(),
                stiffnesses: (0..boundary.n_springs(n)).map(|_| 500.0 + 1000.0 * rng.random::<f64>()).collect(),
                boundary,
                damage_states: vec![DamageState::undamaged()],
                temperature_factor: 1.0,
            };
            let base = modal_analysis(&build_structure(&spec, &DamageState::undamaged()).unwrap()).unwrap();
            let spring = rng.random_range(0..spec.n_springs());
            let damage = DamageState { class_label: 1, spring_index: Some(spring), reduction: 0.4 };
            let reduced = modal_analysis(&build_structure(&spec, &damage).unwrap()).unwrap();
            for i in 0..n {
                assert!(
                    reduced.natural_frequencies[i] <= base.natural_frequencies[i] * (1.0 + 1e-9),
                    "frequency {i} increased after stiffness reduction"
                );
            }
        }
    }

    fn three_class_spec() -> StructureSpec {
        StructureSpec {
            id: "s".into(),
            n_dof: 4,
            masses: vec![1.0; 4],
            stiffnesses: vec![1000.0; 4],
            boundary: Boundary::FixedFree,
            damage_states: vec![
                DamageState::undamaged(),
                DamageState { class_label: 1, spring_index: Some(1), reduction: 0.2 },
                DamageState { class_label: 2, spring_index: Some(3), reduction: 0.2 },
            ],
            temperature_factor: 1.0,
        }
    }

    #[test]
    fn zero_noise_samples_equal_exact_frequencies() {
        let domain = synthesize_domain(&three_class_spec(), 5, 0.0, 99).unwrap();
        assert_eq!(domain.n_samples(), 15);
        assert_eq!(
            domain.labels.as_ref().unwrap(),
            &vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2]
        );
        for class_start in [0, 5, 10] {
            for i in 1..5 {
                for j in 0..4 {
                    assert_eq!(
                        domain.features[(class_start, j)],
                        domain.features[(class_start + i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let a = synthesize_domain(&three_class_spec(), 5, 0.05, 1234).unwrap();
        let b = synthesize_domain(&three_class_spec(), 5, 0.05, 1234).unwrap();
        assert_eq!(a, b);
        let c = synthesize_domain(&three_class_spec(), 5, 0.05, 1235).unwrap();
        assert_ne!(a.features, c.features);
    }

    fn small_config() -> PopulationConfig {
        PopulationConfig {
            n_structures: 3,
            n_dof: 4,
            nominal_masses: vec![1.0; 4],
            nominal_stiffnesses: vec![1000.0; 4],
            stiffness_perturbation_std: 0.05,
            structures: vec![
                StructureAssignment { id: "a".into(), boundary: Boundary::FixedFree },
                StructureAssignment { id: "b".into(), boundary: Boundary::FixedFixed },
                StructureAssignment { id: "c".into(), boundary: Boundary::FixedFree },
            ],
            target_id: "c".into(),
            damage_states: vec![
                DamageState::undamaged(),
                DamageState { class_label: 1, spring_index: Some(2), reduction: 0.25 },
            ],
            n_per_class: 4,
            noise_std: 0.01,
            temperature_factor: 1.0,
        }
    }

    #[test]
    fn population_counts_and_ids() {
        let domains = generate_population(&small_config(), 5).unwrap();
        assert_eq!(domains.len(), 3);
        let ids: Vec<&str> = domains.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn zero_perturbation_keeps_nominal() {
        let mut config = small_config();
        config.stiffness_perturbation_std = 0.0;
        config.noise_std = 0.0;
        let domains = generate_population(&config, 5).unwrap();
        // identical boundary gives identical data under nominal stiffness
        assert_eq!(domains[0].features, domains[2].features);
    }

    #[test]
    fn permuting_structure_order_keeps_per_id_data() {
        let config = small_config();
        let mut permuted = config.clone();
        permuted.structures = vec![
            config.structures[2].clone(),
            config.structures[0].clone(),
            config.structures[1].clone(),
        ];
        let original = generate_population(&config, 77).unwrap();
        let shuffled = generate_population(&permuted, 77).unwrap();
        for d in &original {
            let twin = shuffled.iter().find(|x| x.id == d.id).unwrap();
            assert_eq!(d, twin);
        }
    }
}
