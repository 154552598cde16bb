//! Scenario-based stochastic security-constrained unit commitment over a DC network,
//! with four network-reinforcement variants: none (`base`), an extra physical line (`pt`),
//! standalone batteries (`bess`), and battery pairs operated as virtual transmission
//! lines (`vtl`).
//!
//! Pipeline: [`case::apply_variant`] → [`model::build_model`] →
//! [`solver::solve_milp_with_duals`] → [`solver::extract_lmp`] → [`metrics::compute_metrics`].
//! [`run_variant`] chains these.

pub mod case;
pub mod metrics;
pub mod model;
pub mod scenario;
pub mod solver;

use sha2::{Digest, Sha256};

pub use case::{apply_variant, validate_case, CaseFile, EffectiveCase, ModelVariant};
pub use metrics::{compute_metrics, LmpConvention, MetricsReport};
pub use model::{build_model, check_solution_feasibility, evaluate_objective, MilpModel, Solution};
pub use scenario::{generate_scenarios, validate_scenario_set, ScenarioSet, SigmaSchedule};
pub use solver::{extract_lmp, solve_lp_fixed, solve_milp, LmpSurface, SolverOptions};

/// Hex SHA-256 of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything produced by solving one variant.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub effective: EffectiveCase,
    pub model: MilpModel,
    pub solution: Solution,
    pub lmp: LmpSurface,
    pub metrics: MetricsReport,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Case(#[from] case::CaseError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}

pub fn run_variant(
    case: &CaseFile,
    scen: &ScenarioSet,
    variant: ModelVariant,
    opts: &SolverOptions,
    congestion_eps: f64,
) -> Result<VariantRun, RunError> {
    let effective = apply_variant(case, variant)?;
    let model = build_model(&effective, scen)?;
    let (solution, duals) = solver::solve_milp_with_duals(&model, opts)?;
    let lmp = extract_lmp(&duals, &scen.probabilities, effective.options.interval_hours)?;
    let metrics = compute_metrics(variant.label(), &solution, &lmp, &effective, scen, congestion_eps)?;
    Ok(VariantRun {
        effective,
        model,
        solution,
        lmp,
        metrics,
    })
}
