//! Solver gateway: MILP solve, fixed-binary LP resolve for duals, LMP extraction,
//! and an exhaustive enumeration oracle for tiny instances.
//!
//! The backend contract is narrow: bounded variables, linear rows, a linear objective,
//! primal values, row duals for LPs, status and gap. HiGHS is the bundled backend.

use std::collections::BTreeSet;
use std::str::FromStr;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense};
use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::ConstraintFamily;
use crate::model::{MilpModel, ModelError, SolveStatus, Solution, VarId, VarKind};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver backend {0:?} is not available")]
    BackendUnavailable(String),
    #[error("numeric failure in solver: {0}")]
    NumericFailure(String),
    #[error("model is infeasible")]
    Infeasible,
    #[error("time limit reached without a feasible solution")]
    TimeLimitNoIncumbent,
    #[error("LP with fixed binaries is infeasible")]
    LpInfeasibleUnderFixing,
    #[error("binary assignment must cover every binary variable with 0/1 values: {0}")]
    BadAssignment(String),
    #[error("{count} binaries exceed the enumeration limit of {limit}")]
    TooManyBinaries { count: usize, limit: usize },
    #[error("scenario {0} has zero probability")]
    ZeroProbability(usize),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Highs,
}

impl FromStr for BackendKind {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "highs" => Ok(Self::Highs),
            other => Err(SolverError::BackendUnavailable(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub backend: BackendKind,
    pub relative_mip_gap: f64,
    pub time_limit_seconds: f64,
    pub threads: Option<u32>,
    pub deterministic: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            backend: BackendKind::Highs,
            relative_mip_gap: 1e-6,
            time_limit_seconds: 600.0,
            threads: None,
            deterministic: true,
        }
    }
}

impl SolverOptions {
    /// Settings for full-size runs.
    pub fn large() -> Self {
        Self {
            relative_mip_gap: 1e-4,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), SolverError> {
        if self.relative_mip_gap.is_nan() || self.relative_mip_gap < 0.0 {
            return Err(SolverError::InvalidOptions("relative_mip_gap >= 0".into()));
        }
        if self.time_limit_seconds.is_nan() || self.time_limit_seconds <= 0.0 {
            return Err(SolverError::InvalidOptions("time_limit_seconds > 0".into()));
        }
        Ok(())
    }
}

/// Raw backend output.
#[derive(Debug, Clone)]
pub struct RawResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// Row duals; present for pure LPs only.
    pub row_duals: Option<Vec<f64>>,
    pub mip_gap: f64,
}

pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, model: &MilpModel, opts: &SolverOptions) -> Result<RawResult, SolverError>;
}

pub fn backend_for(opts: &SolverOptions) -> Box<dyn MilpBackend> {
    match opts.backend {
        BackendKind::Highs => Box::new(HighsBackend),
    }
}

pub struct HighsBackend;

impl MilpBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, opts: &SolverOptions) -> Result<RawResult, SolverError> {
        opts.check()?;
        let (pb, _, is_mip) = highs_problem(model, false);
        let mut hm = pb.optimise(Sense::Minimise);
        configure(&mut hm, opts);
        let solved = hm
            .try_solve()
            .map_err(|e| SolverError::NumericFailure(format!("{e:?}")))?;

        let model_status = solved.status();
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        debug!("highs status {model_status:?}, primal {has_primal}");
        let status = match model_status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                return Err(SolverError::Infeasible)
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt => {
                if has_primal {
                    SolveStatus::Feasible
                } else {
                    return Err(SolverError::TimeLimitNoIncumbent);
                }
            }
            other => return Err(SolverError::NumericFailure(format!("status {other:?}"))),
        };
        let gap = if is_mip { solved.mip_gap() } else { 0.0 };
        let solution = solved.get_solution();
        Ok(RawResult {
            status,
            objective: solved.objective_value(),
            values: solution.columns().to_vec(),
            row_duals: (!is_mip).then(|| solution.dual_rows().to_vec()),
            mip_gap: if gap.is_finite() { gap } else { 0.0 },
        })
    }
}

fn highs_problem(model: &MilpModel, relax: bool) -> (RowProblem, Vec<highs::Col>, bool) {
    let mut pb = RowProblem::default();
    let mut is_mip = false;
    let cols: Vec<_> = model
        .variables
        .iter()
        .map(|v| {
            let integer = !relax && v.kind == VarKind::Binary;
            is_mip |= integer;
            pb.add_column_with_integrality(v.cost, v.lower..=v.upper, integer)
        })
        .collect();
    for c in &model.constraints {
        let row: Vec<_> = c.terms.iter().map(|(id, coef)| (cols[id.0], *coef)).collect();
        pb.add_row(c.lower..=c.upper, &row);
    }
    (pb, cols, is_mip)
}

fn configure(hm: &mut highs::Model, opts: &SolverOptions) {
    hm.make_quiet();
    hm.set_option("time_limit", opts.time_limit_seconds);
    hm.set_option("mip_rel_gap", opts.relative_mip_gap);
    hm.set_option("primal_feasibility_tolerance", 1e-9);
    hm.set_option("dual_feasibility_tolerance", 1e-9);
    if opts.deterministic {
        hm.set_option("random_seed", 0);
    }
    if let Some(threads) = opts.threads {
        hm.set_option("threads", threads as i32);
    }
}

/// One LP relaxation kept alive across many binary fixings, warm-started each time.
struct FixingSession {
    model: Option<highs::Model>,
    cols: Vec<highs::Col>,
}

impl FixingSession {
    fn new(model: &MilpModel, opts: &SolverOptions) -> Self {
        let (pb, cols, _) = highs_problem(model, true);
        let mut hm = pb.optimise(Sense::Minimise);
        configure(&mut hm, opts);
        Self { model: Some(hm), cols }
    }

    /// Objective with the given columns pinned, or `None` when infeasible.
    fn objective(&mut self, fixed: &[(VarId, f64)]) -> Result<Option<f64>, SolverError> {
        let mut hm = self.model.take().expect("session model present");
        for (id, value) in fixed {
            hm.change_column_bounds(self.cols[id.0], *value..=*value);
        }
        let solved = hm
            .try_solve()
            .map_err(|e| SolverError::NumericFailure(format!("{e:?}")))?;
        let result = match solved.status() {
            HighsModelStatus::Optimal => Some(solved.objective_value()),
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => None,
            other => return Err(SolverError::NumericFailure(format!("status {other:?}"))),
        };
        self.model = Some(solved.into());
        Ok(result)
    }
}

/// Balance-row duals as [scenario][bus][interval], $/MW per interval of objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSurface {
    pub buses: Vec<String>,
    pub duals: Vec<Vec<Vec<f64>>>,
}

/// Per-scenario locational marginal prices as [scenario][bus][interval], $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmpSurface {
    pub buses: Vec<String>,
    pub probabilities: Vec<f64>,
    pub lmp: Vec<Vec<Vec<f64>>>,
}

impl LmpSurface {
    /// Probability-weighted expectation per (bus, interval).
    pub fn expected(&self) -> Vec<Vec<f64>> {
        let n_bus = self.buses.len();
        let t_len = self.lmp.first().and_then(|s| s.first()).map_or(0, Vec::len);
        let mut out = vec![vec![0.0; t_len]; n_bus];
        for (p, surface) in self.probabilities.iter().zip(&self.lmp) {
            for (n, row) in surface.iter().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    out[n][t] += p * v;
                }
            }
        }
        out
    }
}

fn dual_surface(model: &MilpModel, row_duals: &[f64]) -> DualSurface {
    let n_bus = model.labels.buses.len();
    let duals = (0..model.scenarios())
        .map(|s| {
            (0..n_bus)
                .map(|n| {
                    (0..model.periods)
                        .map(|t| {
                            model
                                .balance_row(n, t, s)
                                .map_or(f64::NAN, |row| row_duals[row])
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    DualSurface {
        buses: model.labels.buses.clone(),
        duals,
    }
}

fn structured(model: &MilpModel, raw: &RawResult, status: SolveStatus, gap: f64) -> Solution {
    let mut sol = Solution::from_values(model, &raw.values, status, gap);
    sol.objective = raw.objective;
    sol.breakdown = crate::model::ObjectiveBreakdown::default();
    for (v, x) in model.variables.iter().zip(&raw.values) {
        let term = v.cost * x;
        match v.key {
            crate::model::VarKey::Commit { .. } => sol.breakdown.no_load += term,
            crate::model::VarKey::Startup { .. } => sol.breakdown.startup += term,
            crate::model::VarKey::Gen { .. } => sol.breakdown.weighted_energy += term,
            crate::model::VarKey::Curtail { .. } => sol.breakdown.curtailment_penalty += term,
            _ => {}
        }
    }
    sol
}

/// Solves the LP obtained by fixing every binary to the given 0/1 value.
pub fn solve_lp_fixed(
    model: &MilpModel,
    fixed: &[(VarId, f64)],
    opts: &SolverOptions,
) -> Result<(Solution, DualSurface), SolverError> {
    let binaries = model.binary_ids();
    if fixed.len() != binaries.len() {
        return Err(SolverError::BadAssignment(format!(
            "{} values for {} binaries",
            fixed.len(),
            binaries.len()
        )));
    }
    for (id, value) in fixed {
        if model.variables.get(id.0).map(|v| v.kind) != Some(VarKind::Binary) {
            return Err(SolverError::BadAssignment(format!("{id:?} is not binary")));
        }
        if *value != 0.0 && *value != 1.0 {
            return Err(SolverError::BadAssignment(format!("{id:?} = {value}")));
        }
    }
    let lp = model.with_fixed(fixed).relaxed();
    let raw = match backend_for(opts).solve(&lp, opts) {
        Err(SolverError::Infeasible) => return Err(SolverError::LpInfeasibleUnderFixing),
        other => other?,
    };
    let duals = dual_surface(model, raw.row_duals.as_deref().unwrap_or(&[]));
    Ok((structured(model, &raw, SolveStatus::Optimal, 0.0), duals))
}

/// MILP solve followed by a fixed-binary LP resolve that polishes the continuous values
/// and yields balance-row duals.
pub fn solve_milp_with_duals(
    model: &MilpModel,
    opts: &SolverOptions,
) -> Result<(Solution, DualSurface), SolverError> {
    let raw = backend_for(opts).solve(model, opts)?;
    let fixed: Vec<(VarId, f64)> = model
        .binary_ids()
        .into_iter()
        .map(|id| (id, raw.values[id.0].round().clamp(0.0, 1.0)))
        .collect();
    let (mut sol, duals) = match solve_lp_fixed(model, &fixed, opts) {
        Ok(r) => r,
        Err(SolverError::LpInfeasibleUnderFixing) => {
            return Err(SolverError::NumericFailure(
                "rounded MILP incumbent is infeasible as an LP".into(),
            ))
        }
        Err(e) => return Err(e),
    };
    sol.status = raw.status;
    sol.mip_gap = raw.mip_gap;
    Ok((sol, duals))
}

pub fn solve_milp(model: &MilpModel, opts: &SolverOptions) -> Result<Solution, SolverError> {
    solve_milp_with_duals(model, opts).map(|(s, _)| s)
}

/// Divides balance duals by scenario probability so each scenario carries $/MWh prices.
pub fn extract_lmp(
    duals: &DualSurface,
    probabilities: &[f64],
    interval_hours: f64,
) -> Result<LmpSurface, SolverError> {
    if let Some(s) = probabilities.iter().position(|p| *p == 0.0) {
        return Err(SolverError::ZeroProbability(s));
    }
    let lmp = duals
        .duals
        .iter()
        .zip(probabilities)
        .map(|(surface, p)| {
            surface
                .iter()
                .map(|row| row.iter().map(|d| d / (p * interval_hours)).collect())
                .collect()
        })
        .collect();
    Ok(LmpSurface {
        buses: duals.buses.clone(),
        probabilities: probabilities.to_vec(),
        lmp,
    })
}

pub const DEFAULT_ORACLE_LIMIT: usize = 20;

/// Adds constraint families in canonical order and returns the first one whose
/// addition makes the model infeasible. `None` when the full model is feasible.
pub fn first_infeasible_family(
    model: &MilpModel,
    opts: &SolverOptions,
) -> Result<Option<ConstraintFamily>, SolverError> {
    let backend = backend_for(opts);
    let mut active = BTreeSet::new();
    for family in model.families() {
        active.insert(family);
        let mut partial = model.clone();
        partial.constraints.retain(|c| active.contains(&c.family));
        match backend.solve(&partial, opts) {
            Ok(_) => {}
            Err(SolverError::Infeasible) => return Ok(Some(family)),
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Enumerates every binary assignment, solves the LP of each, and returns the cheapest.
/// Ties go to the lexicographically smallest assignment (model binary order).
pub fn brute_force_oracle(
    model: &MilpModel,
    limit: usize,
    opts: &SolverOptions,
) -> Result<Solution, SolverError> {
    let binaries = model.binary_ids();
    let n = binaries.len();
    if n > limit {
        return Err(SolverError::TooManyBinaries { count: n, limit });
    }
    let position: std::collections::HashMap<VarId, usize> =
        binaries.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    // Rows over binaries alone are checked before any LP is built.
    let pure_rows: Vec<_> = model
        .constraints
        .iter()
        .filter(|c| c.terms.iter().all(|(id, _)| position.contains_key(id)))
        .map(|c| {
            let terms: Vec<(usize, f64)> = c.terms.iter().map(|(id, coef)| (position[id], *coef)).collect();
            (terms, c.lower, c.upper)
        })
        .collect();

    opts.check()?;
    let mut session = FixingSession::new(model, opts);
    let mut best: Option<(f64, Vec<(VarId, f64)>)> = None;
    let mut assignment = vec![0.0; n];
    for mask in 0u64..(1u64 << n) {
        for (i, slot) in assignment.iter_mut().enumerate() {
            *slot = ((mask >> (n - 1 - i)) & 1) as f64;
        }
        let admissible = pure_rows.iter().all(|(terms, lower, upper)| {
            let lhs: f64 = terms.iter().map(|(i, coef)| coef * assignment[*i]).sum();
            lhs >= lower - 1e-9 && lhs <= upper + 1e-9
        });
        if !admissible {
            continue;
        }
        let fixed: Vec<(VarId, f64)> = binaries.iter().copied().zip(assignment.iter().copied()).collect();
        let Some(objective) = session.objective(&fixed)? else {
            continue;
        };
        let improves = match &best {
            None => true,
            Some((obj, _)) => objective < obj - 1e-9 * obj.abs().max(1.0),
        };
        if improves {
            best = Some((objective, fixed));
        }
    }
    let (_, fixed) = best.ok_or(SolverError::Infeasible)?;
    let (sol, _) = solve_lp_fixed(model, &fixed, opts)?;
    Ok(sol)
}
