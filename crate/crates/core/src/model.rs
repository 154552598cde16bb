//! Extensive-form stochastic unit-commitment MILP.
//!
//! Commitment and startup binaries are indexed by (unit, interval) only and are shared by
//! every scenario. Dispatch, angles, flows, curtailment and storage (including the storage
//! mode binaries) are indexed by scenario.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{ConstraintFamily, EffectiveCase, RenewableKind};
use crate::scenario::ScenarioSet;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("scenario set does not match case: {0}")]
    ScenarioCaseMismatch(String),
    #[error("internal indexing error: {0}")]
    IndexingError(String),
    #[error("solution dimensions do not match: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// Structured index of a decision variable. Positions refer to the effective case arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    Commit { g: usize, t: usize },
    Startup { g: usize, t: usize },
    Gen { g: usize, t: usize, s: usize },
    Angle { n: usize, t: usize, s: usize },
    Flow { k: usize, t: usize, s: usize },
    Curtail { r: usize, t: usize, s: usize },
    Charge { e: usize, t: usize, s: usize },
    Discharge { e: usize, t: usize, s: usize },
    Energy { e: usize, t: usize, s: usize },
    ChargeMode { e: usize, t: usize, s: usize },
    DischargeMode { e: usize, t: usize, s: usize },
}

impl VarKey {
    pub fn is_first_stage(&self) -> bool {
        matches!(self, Self::Commit { .. } | Self::Startup { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub key: VarKey,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKind {
    Startup,
    OutputMin,
    OutputMax,
    RampUp,
    RampDown,
    FlowDefinition,
    BranchLimit,
    Balance,
    CurtailMax,
    ChargeMax,
    DischargeMax,
    EnergyBounds,
    EnergyRecursion,
    ModeExclusive,
    TerminalEnergy,
    VtlCharge,
    VtlDischarge,
    ReferenceAngle,
}

/// `lower <= sum(coef * var) <= upper`
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub family: ConstraintFamily,
    pub kind: RowKind,
    /// Position of the owning entity (unit, bus, branch, storage or pair).
    pub entity: usize,
    pub t: usize,
    pub s: Option<usize>,
    pub terms: Vec<(VarId, f64)>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub gens: Vec<String>,
    pub buses: Vec<String>,
    pub branches: Vec<String>,
    pub renewables: Vec<String>,
    pub storages: Vec<String>,
    pub vtl_pairs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub periods: usize,
    pub probabilities: Vec<f64>,
    pub labels: Labels,
    pub base_mva: f64,
    /// Branch reactances (per unit), by branch position.
    pub reactance: Vec<f64>,
    index: HashMap<VarKey, VarId>,
    balance: HashMap<(usize, usize, usize), usize>,
}

impl MilpModel {
    fn new(periods: usize, probabilities: Vec<f64>, labels: Labels) -> Self {
        Self {
            variables: Vec::new(),
            constraints: Vec::new(),
            periods,
            probabilities,
            labels,
            base_mva: 100.0,
            reactance: Vec::new(),
            index: HashMap::new(),
            balance: HashMap::new(),
        }
    }

    pub fn scenarios(&self) -> usize {
        self.probabilities.len()
    }

    fn add_var(&mut self, key: VarKey, kind: VarKind, lower: f64, upper: f64, cost: f64) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            key,
            kind,
            lower,
            upper,
            cost,
        });
        let prev = self.index.insert(key, id);
        debug_assert!(prev.is_none(), "duplicate variable {key:?}");
        id
    }

    #[allow(clippy::too_many_arguments)]
    fn add_row(
        &mut self,
        family: ConstraintFamily,
        kind: RowKind,
        entity: usize,
        t: usize,
        s: Option<usize>,
        terms: Vec<(VarId, f64)>,
        lower: f64,
        upper: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            family,
            kind,
            entity,
            t,
            s,
            terms,
            lower,
            upper,
        });
        self.constraints.len() - 1
    }

    pub fn var(&self, key: &VarKey) -> Option<VarId> {
        self.index.get(key).copied()
    }

    /// Row position of the nodal balance constraint at (bus, interval, scenario).
    pub fn balance_row(&self, n: usize, t: usize, s: usize) -> Option<usize> {
        self.balance.get(&(n, t, s)).copied()
    }

    pub fn binary_ids(&self) -> Vec<VarId> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn count_vars(&self, pred: impl Fn(&VarKey) -> bool) -> usize {
        self.variables.iter().filter(|v| pred(&v.key)).count()
    }

    pub fn count_family(&self, family: ConstraintFamily) -> usize {
        self.constraints.iter().filter(|c| c.family == family).count()
    }

    pub fn families(&self) -> std::collections::BTreeSet<ConstraintFamily> {
        self.constraints.iter().map(|c| c.family).collect()
    }

    /// Copy with the given variables fixed (both bounds set to the value).
    pub fn with_fixed(&self, fixed: &[(VarId, f64)]) -> Self {
        let mut m = self.clone();
        for &(id, value) in fixed {
            let v = &mut m.variables[id.0];
            v.lower = value;
            v.upper = value;
        }
        m
    }

    /// Copy with every binary relaxed to a continuous variable on its current bounds.
    pub fn relaxed(&self) -> Self {
        let mut m = self.clone();
        for v in &mut m.variables {
            v.kind = VarKind::Continuous;
        }
        m
    }

    /// Copy with the right-hand side of one balance row shifted by `delta` MW.
    pub fn with_demand_shift(&self, n: usize, t: usize, s: usize, delta: f64) -> Option<Self> {
        let row = self.balance_row(n, t, s)?;
        let mut m = self.clone();
        m.constraints[row].lower += delta;
        m.constraints[row].upper += delta;
        Some(m)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(values)
            .map(|(v, x)| v.cost * x)
            .sum()
    }

    fn var_name(&self, key: &VarKey) -> String {
        let l = &self.labels;
        match *key {
            VarKey::Commit { g, t } => format!("u[{},{}]", l.gens[g], t + 1),
            VarKey::Startup { g, t } => format!("v[{},{}]", l.gens[g], t + 1),
            VarKey::Gen { g, t, s } => format!("p[{},{},{}]", l.gens[g], t + 1, s + 1),
            VarKey::Angle { n, t, s } => format!("theta[{},{},{}]", l.buses[n], t + 1, s + 1),
            VarKey::Flow { k, t, s } => format!("pf[{},{},{}]", l.branches[k], t + 1, s + 1),
            VarKey::Curtail { r, t, s } => format!("pc[{},{},{}]", l.renewables[r], t + 1, s + 1),
            VarKey::Charge { e, t, s } => format!("pch[{},{},{}]", l.storages[e], t + 1, s + 1),
            VarKey::Discharge { e, t, s } => format!("pdis[{},{},{}]", l.storages[e], t + 1, s + 1),
            VarKey::Energy { e, t, s } => format!("soc[{},{},{}]", l.storages[e], t + 1, s + 1),
            VarKey::ChargeMode { e, t, s } => format!("uch[{},{},{}]", l.storages[e], t + 1, s + 1),
            VarKey::DischargeMode { e, t, s } => {
                format!("udis[{},{},{}]", l.storages[e], t + 1, s + 1)
            }
        }
    }

    /// One line per constraint, tagged with its family and index. Intervals and scenarios
    /// are printed 1-based.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.constraints {
            let _ = write!(
                out,
                "[{}] {:?}(entity={}, t={}",
                c.family.tag(),
                c.kind,
                c.entity,
                c.t + 1
            );
            if let Some(s) = c.s {
                let _ = write!(out, ", s={}", s + 1);
            }
            out.push_str("):");
            for (id, coef) in &c.terms {
                let _ = write!(out, " {:+}*{}", coef, self.var_name(&self.variables[id.0].key));
            }
            let _ = writeln!(out, " in [{}, {}]", c.lower, c.upper);
        }
        out
    }
}

/// Renewable availability as [scenario][unit][interval], in effective-case unit order.
pub fn availability(eff: &EffectiveCase, scen: &ScenarioSet) -> Result<Vec<Vec<Vec<f64>>>, ModelError> {
    if scen.scenarios.len() != scen.probabilities.len() {
        return Err(ModelError::ScenarioCaseMismatch(
            "probability count differs from scenario count".into(),
        ));
    }
    if scen.scenarios.is_empty() {
        return Err(ModelError::ScenarioCaseMismatch("no scenarios".into()));
    }
    scen.scenarios
        .iter()
        .enumerate()
        .map(|(s, profiles)| {
            eff.renewables
                .iter()
                .map(|u| {
                    let p = profiles.get(&u.id).ok_or_else(|| {
                        ModelError::ScenarioCaseMismatch(format!(
                            "scenario {s} lacks unit {}",
                            u.id
                        ))
                    })?;
                    if p.len() != eff.periods {
                        return Err(ModelError::ScenarioCaseMismatch(format!(
                            "scenario {s} unit {} has {} intervals, case has {}",
                            u.id,
                            p.len(),
                            eff.periods
                        )));
                    }
                    Ok(p.clone())
                })
                .collect()
        })
        .collect()
}

/// Demand as [scenario][bus][interval]. A scenario entry keyed by a load profile id
/// replaces that profile's forecast in that scenario.
pub fn scenario_demand(eff: &EffectiveCase, scen: &ScenarioSet) -> Result<Vec<Vec<Vec<f64>>>, ModelError> {
    scen.scenarios
        .iter()
        .enumerate()
        .map(|(s, profiles)| {
            let mut demand = vec![vec![0.0; eff.periods]; eff.buses.len()];
            for (lp, &n) in eff.load_profiles.iter().zip(&eff.load_bus) {
                let series = profiles.get(&lp.id).unwrap_or(&lp.demand_mw);
                if series.len() != eff.periods {
                    return Err(ModelError::ScenarioCaseMismatch(format!(
                        "scenario {s} load {} has {} intervals, case has {}",
                        lp.id,
                        series.len(),
                        eff.periods
                    )));
                }
                for (acc, d) in demand[n].iter_mut().zip(series) {
                    *acc += d;
                }
            }
            Ok(demand)
        })
        .collect()
}

fn penalty(eff: &EffectiveCase, kind: RenewableKind) -> f64 {
    match kind {
        RenewableKind::Solar => eff.options.penalty_solar_per_mwh,
        RenewableKind::Wind => eff.options.penalty_wind_per_mwh,
    }
}

/// Builds the extensive-form MILP. Probabilities are used as given (no renormalization).
pub fn build_model(eff: &EffectiveCase, scen: &ScenarioSet) -> Result<MilpModel, ModelError> {
    use ConstraintFamily as F;
    use VarKey as K;
    let avail = availability(eff, scen)?;
    let demand = scenario_demand(eff, scen)?;
    let t_len = eff.periods;
    let n_s = scen.len();
    let dt = eff.options.interval_hours;
    let base = eff.options.base_mva;
    let inf = f64::INFINITY;

    let labels = Labels {
        gens: eff.thermal_gens.iter().map(|g| g.id.clone()).collect(),
        buses: eff.buses.iter().map(|b| b.id.clone()).collect(),
        branches: eff.branches.iter().map(|k| k.id.clone()).collect(),
        renewables: eff.renewables.iter().map(|u| u.id.clone()).collect(),
        storages: eff.storages.iter().map(|e| e.id.clone()).collect(),
        vtl_pairs: eff.vtl_pairs.iter().map(|v| v.id.clone()).collect(),
    };
    let mut m = MilpModel::new(t_len, scen.probabilities.clone(), labels);
    m.base_mva = base;
    m.reactance = eff.branches.iter().map(|k| k.reactance_pu).collect();

    // First stage.
    for (g, gen) in eff.thermal_gens.iter().enumerate() {
        for t in 0..t_len {
            m.add_var(K::Commit { g, t }, VarKind::Binary, 0.0, 1.0, gen.cost_no_load_per_interval);
            m.add_var(K::Startup { g, t }, VarKind::Binary, 0.0, 1.0, gen.cost_startup);
        }
    }

    // Second stage.
    for s in 0..n_s {
        let pi = scen.probabilities[s];
        for t in 0..t_len {
            for (g, gen) in eff.thermal_gens.iter().enumerate() {
                m.add_var(
                    K::Gen { g, t, s },
                    VarKind::Continuous,
                    0.0,
                    inf,
                    pi * gen.cost_linear_per_mwh * dt,
                );
            }
            for n in 0..eff.buses.len() {
                m.add_var(K::Angle { n, t, s }, VarKind::Continuous, -inf, inf, 0.0);
            }
            for k in 0..eff.branches.len() {
                m.add_var(K::Flow { k, t, s }, VarKind::Continuous, -inf, inf, 0.0);
            }
            for (r, unit) in eff.renewables.iter().enumerate() {
                m.add_var(
                    K::Curtail { r, t, s },
                    VarKind::Continuous,
                    0.0,
                    inf,
                    pi * penalty(eff, unit.kind) * dt,
                );
            }
            for e in 0..eff.storages.len() {
                m.add_var(K::Charge { e, t, s }, VarKind::Continuous, 0.0, inf, 0.0);
                m.add_var(K::Discharge { e, t, s }, VarKind::Continuous, 0.0, inf, 0.0);
                m.add_var(K::Energy { e, t, s }, VarKind::Continuous, -inf, inf, 0.0);
                m.add_var(K::ChargeMode { e, t, s }, VarKind::Binary, 0.0, 1.0, 0.0);
                m.add_var(K::DischargeMode { e, t, s }, VarKind::Binary, 0.0, 1.0, 0.0);
            }
        }
    }

    let id = |m: &MilpModel, key: VarKey| -> Result<VarId, ModelError> {
        m.var(&key)
            .ok_or_else(|| ModelError::IndexingError(format!("missing variable {key:?}")))
    };

    // Commitment logic: v[t] >= u[t] - u[t-1].
    for (g, gen) in eff.thermal_gens.iter().enumerate() {
        for t in 0..t_len {
            let u = id(&m, K::Commit { g, t })?;
            let v = id(&m, K::Startup { g, t })?;
            if t == 0 {
                let u0 = if gen.initially_committed() { 1.0 } else { 0.0 };
                m.add_row(F::Uc, RowKind::Startup, g, t, None, vec![(v, 1.0), (u, -1.0)], -u0, inf);
            } else {
                let up = id(&m, K::Commit { g, t: t - 1 })?;
                m.add_row(
                    F::Uc,
                    RowKind::Startup,
                    g,
                    t,
                    None,
                    vec![(v, 1.0), (u, -1.0), (up, 1.0)],
                    0.0,
                    inf,
                );
            }
        }
    }

    for s in 0..n_s {
        // Generator output bounds and ramping.
        for (g, gen) in eff.thermal_gens.iter().enumerate() {
            // Ramp rows are implied by the output bounds when the limit covers the full range.
            let ramp_binds = gen.ramp_mw_per_interval < gen.p_max_mw;
            for t in 0..t_len {
                let p = id(&m, K::Gen { g, t, s })?;
                let u = id(&m, K::Commit { g, t })?;
                m.add_row(F::Limit, RowKind::OutputMin, g, t, Some(s), vec![(p, 1.0), (u, -gen.p_min_mw)], 0.0, inf);
                m.add_row(F::Limit, RowKind::OutputMax, g, t, Some(s), vec![(p, 1.0), (u, -gen.p_max_mw)], -inf, 0.0);
                if !ramp_binds {
                    continue;
                }
                let r = gen.ramp_mw_per_interval;
                if t == 0 {
                    if gen.initially_committed() {
                        let p0 = gen.initial_output_mw;
                        m.add_row(F::Ramp, RowKind::RampUp, g, t, Some(s), vec![(p, 1.0)], -inf, r + p0);
                        m.add_row(F::Ramp, RowKind::RampDown, g, t, Some(s), vec![(p, -1.0)], -inf, r - p0);
                    }
                } else {
                    let pp = id(&m, K::Gen { g, t: t - 1, s })?;
                    m.add_row(F::Ramp, RowKind::RampUp, g, t, Some(s), vec![(p, 1.0), (pp, -1.0)], -inf, r);
                    m.add_row(F::Ramp, RowKind::RampDown, g, t, Some(s), vec![(pp, 1.0), (p, -1.0)], -inf, r);
                }
            }
        }

        for t in 0..t_len {
            // DC flow and thermal limits.
            for (k, branch) in eff.branches.iter().enumerate() {
                let (from, to) = eff.branch_ends[k];
                let f = id(&m, K::Flow { k, t, s })?;
                let af = id(&m, K::Angle { n: from, t, s })?;
                let at = id(&m, K::Angle { n: to, t, s })?;
                let b = base / branch.reactance_pu;
                m.add_row(
                    F::Flow,
                    RowKind::FlowDefinition,
                    k,
                    t,
                    Some(s),
                    vec![(f, 1.0), (af, -b), (at, b)],
                    0.0,
                    0.0,
                );
                m.add_row(
                    F::Limit,
                    RowKind::BranchLimit,
                    k,
                    t,
                    Some(s),
                    vec![(f, 1.0)],
                    -branch.flow_limit_mw,
                    branch.flow_limit_mw,
                );
            }

            for r in 0..eff.renewables.len() {
                let c = id(&m, K::Curtail { r, t, s })?;
                m.add_row(F::Curt, RowKind::CurtailMax, r, t, Some(s), vec![(c, 1.0)], -inf, avail[s][r][t]);
            }

            for (e, st) in eff.storages.iter().enumerate() {
                let pc = id(&m, K::Charge { e, t, s })?;
                let pd = id(&m, K::Discharge { e, t, s })?;
                let en = id(&m, K::Energy { e, t, s })?;
                let uc = id(&m, K::ChargeMode { e, t, s })?;
                let ud = id(&m, K::DischargeMode { e, t, s })?;
                m.add_row(F::Soc, RowKind::ModeExclusive, e, t, Some(s), vec![(uc, 1.0), (ud, 1.0)], -inf, 1.0);
                m.add_row(F::Soc, RowKind::ChargeMax, e, t, Some(s), vec![(pc, 1.0), (uc, -st.p_charge_max_mw)], -inf, 0.0);
                m.add_row(F::Soc, RowKind::DischargeMax, e, t, Some(s), vec![(pd, 1.0), (ud, -st.p_discharge_max_mw)], -inf, 0.0);
                m.add_row(F::Soc, RowKind::EnergyBounds, e, t, Some(s), vec![(en, 1.0)], st.e_min_mwh, st.e_max_mwh);
                let mut terms = vec![(en, 1.0), (pc, -st.eta_charge * dt), (pd, dt / st.eta_discharge)];
                let rhs = if t == 0 {
                    st.initial_energy_mwh
                } else {
                    terms.push((id(&m, K::Energy { e, t: t - 1, s })?, -1.0));
                    0.0
                };
                m.add_row(F::Soc, RowKind::EnergyRecursion, e, t, Some(s), terms, rhs, rhs);
                if t + 1 == t_len {
                    if let Some(floor) = st.terminal_energy_min_mwh {
                        m.add_row(F::Soc, RowKind::TerminalEnergy, e, t, Some(s), vec![(en, 1.0)], floor, inf);
                    }
                }
            }

            for (p, members) in eff.vtl_members.iter().enumerate() {
                let charge: Vec<_> = members
                    .iter()
                    .map(|&e| id(&m, K::ChargeMode { e, t, s }).map(|v| (v, 1.0)))
                    .collect::<Result<_, _>>()?;
                let discharge: Vec<_> = members
                    .iter()
                    .map(|&e| id(&m, K::DischargeMode { e, t, s }).map(|v| (v, 1.0)))
                    .collect::<Result<_, _>>()?;
                m.add_row(F::Vtl, RowKind::VtlCharge, p, t, Some(s), charge, -inf, 1.0);
                m.add_row(F::Vtl, RowKind::VtlDischarge, p, t, Some(s), discharge, -inf, 1.0);
            }

            // Nodal balance:
            // gen + inflow - outflow - curtailment - charge + discharge = demand - availability
            for n in 0..eff.buses.len() {
                let mut terms = Vec::new();
                for (g, &bus) in eff.gen_bus.iter().enumerate() {
                    if bus == n {
                        terms.push((id(&m, K::Gen { g, t, s })?, 1.0));
                    }
                }
                for (k, &(from, to)) in eff.branch_ends.iter().enumerate() {
                    if to == n {
                        terms.push((id(&m, K::Flow { k, t, s })?, 1.0));
                    }
                    if from == n {
                        terms.push((id(&m, K::Flow { k, t, s })?, -1.0));
                    }
                }
                let mut rhs = demand[s][n][t];
                for (r, &bus) in eff.renewable_bus.iter().enumerate() {
                    if bus == n {
                        terms.push((id(&m, K::Curtail { r, t, s })?, -1.0));
                        rhs -= avail[s][r][t];
                    }
                }
                for (e, &bus) in eff.storage_bus.iter().enumerate() {
                    if bus == n {
                        terms.push((id(&m, K::Charge { e, t, s })?, -1.0));
                        terms.push((id(&m, K::Discharge { e, t, s })?, 1.0));
                    }
                }
                let row = m.add_row(F::Balance, RowKind::Balance, n, t, Some(s), terms, rhs, rhs);
                m.balance.insert((n, t, s), row);
            }

            let theta = id(&m, K::Angle { n: eff.reference_bus, t, s })?;
            m.add_row(F::Ref, RowKind::ReferenceAngle, eff.reference_bus, t, Some(s), vec![(theta, 1.0)], 0.0, 0.0);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Incumbent found but optimality not proven within the requested gap.
    Feasible,
    Infeasible,
    TimeLimit,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, Self::Optimal | Self::Feasible)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub no_load: f64,
    pub startup: f64,
    pub weighted_energy: f64,
    pub curtailment_penalty: f64,
}

impl ObjectiveBreakdown {
    pub fn total(&self) -> f64 {
        self.no_load + self.startup + self.weighted_energy + self.curtailment_penalty
    }
}

/// Second-stage values of one scenario; matrices are [entity][interval].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDispatch {
    pub generation_mw: Vec<Vec<f64>>,
    pub angle_rad: Vec<Vec<f64>>,
    pub flow_mw: Vec<Vec<f64>>,
    pub curtailment_mw: Vec<Vec<f64>>,
    pub charge_mw: Vec<Vec<f64>>,
    pub discharge_mw: Vec<Vec<f64>>,
    pub energy_mwh: Vec<Vec<f64>>,
    pub charge_mode: Vec<Vec<u8>>,
    pub discharge_mode: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub mip_gap: f64,
    /// Objective reported by the solver for the returned point.
    pub objective: f64,
    pub breakdown: ObjectiveBreakdown,
    pub probabilities: Vec<f64>,
    pub labels: Labels,
    /// One schedule for all scenarios: [unit][interval].
    pub commitment: Vec<Vec<u8>>,
    pub startup: Vec<Vec<u8>>,
    pub scenarios: Vec<ScenarioDispatch>,
}

fn to_bit(x: f64) -> u8 {
    if x >= 0.5 {
        1
    } else {
        0
    }
}

impl Solution {
    /// Arranges a raw column vector into structured form. Binary columns are rounded.
    pub fn from_values(model: &MilpModel, values: &[f64], status: SolveStatus, mip_gap: f64) -> Self {
        let l = &model.labels;
        let t_len = model.periods;
        let mat = |rows: usize| vec![vec![0.0; t_len]; rows];
        let bits = |rows: usize| vec![vec![0u8; t_len]; rows];
        let mut sol = Solution {
            status,
            mip_gap,
            objective: model.objective_value(values),
            breakdown: ObjectiveBreakdown::default(),
            probabilities: model.probabilities.clone(),
            labels: l.clone(),
            commitment: bits(l.gens.len()),
            startup: bits(l.gens.len()),
            scenarios: (0..model.scenarios())
                .map(|_| ScenarioDispatch {
                    generation_mw: mat(l.gens.len()),
                    angle_rad: mat(l.buses.len()),
                    flow_mw: mat(l.branches.len()),
                    curtailment_mw: mat(l.renewables.len()),
                    charge_mw: mat(l.storages.len()),
                    discharge_mw: mat(l.storages.len()),
                    energy_mwh: mat(l.storages.len()),
                    charge_mode: bits(l.storages.len()),
                    discharge_mode: bits(l.storages.len()),
                })
                .collect(),
        };
        for (var, &x) in model.variables.iter().zip(values) {
            match var.key {
                VarKey::Commit { g, t } => sol.commitment[g][t] = to_bit(x),
                VarKey::Startup { g, t } => sol.startup[g][t] = to_bit(x),
                VarKey::Gen { g, t, s } => sol.scenarios[s].generation_mw[g][t] = x,
                VarKey::Angle { n, t, s } => sol.scenarios[s].angle_rad[n][t] = x,
                VarKey::Flow { k, t, s } => sol.scenarios[s].flow_mw[k][t] = x,
                VarKey::Curtail { r, t, s } => sol.scenarios[s].curtailment_mw[r][t] = x,
                VarKey::Charge { e, t, s } => sol.scenarios[s].charge_mw[e][t] = x,
                VarKey::Discharge { e, t, s } => sol.scenarios[s].discharge_mw[e][t] = x,
                VarKey::Energy { e, t, s } => sol.scenarios[s].energy_mwh[e][t] = x,
                VarKey::ChargeMode { e, t, s } => sol.scenarios[s].charge_mode[e][t] = to_bit(x),
                VarKey::DischargeMode { e, t, s } => {
                    sol.scenarios[s].discharge_mode[e][t] = to_bit(x)
                }
            }
        }
        sol
    }

    pub fn value(&self, key: &VarKey) -> Option<f64> {
        fn at<T: Copy>(m: &[Vec<T>], a: usize, t: usize) -> Option<T> {
            m.get(a)?.get(t).copied()
        }
        let sc = |s: usize| self.scenarios.get(s);
        match *key {
            VarKey::Commit { g, t } => at(&self.commitment, g, t).map(f64::from),
            VarKey::Startup { g, t } => at(&self.startup, g, t).map(f64::from),
            VarKey::Gen { g, t, s } => at(&sc(s)?.generation_mw, g, t),
            VarKey::Angle { n, t, s } => at(&sc(s)?.angle_rad, n, t),
            VarKey::Flow { k, t, s } => at(&sc(s)?.flow_mw, k, t),
            VarKey::Curtail { r, t, s } => at(&sc(s)?.curtailment_mw, r, t),
            VarKey::Charge { e, t, s } => at(&sc(s)?.charge_mw, e, t),
            VarKey::Discharge { e, t, s } => at(&sc(s)?.discharge_mw, e, t),
            VarKey::Energy { e, t, s } => at(&sc(s)?.energy_mwh, e, t),
            VarKey::ChargeMode { e, t, s } => at(&sc(s)?.charge_mode, e, t).map(f64::from),
            VarKey::DischargeMode { e, t, s } => at(&sc(s)?.discharge_mode, e, t).map(f64::from),
        }
    }

    /// Values of every binary variable of `model`, in model order.
    pub fn binary_assignment(&self, model: &MilpModel) -> Vec<(VarId, f64)> {
        model
            .binary_ids()
            .into_iter()
            .map(|id| (id, self.value(&model.variables[id.0].key).unwrap_or(0.0)))
            .collect()
    }

    pub fn first_stage_assignment(&self, model: &MilpModel) -> Vec<(VarId, f64)> {
        model
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.key.is_first_stage())
            .map(|(i, v)| (VarId(i), self.value(&v.key).unwrap_or(0.0)))
            .collect()
    }
}

/// Recomputes the objective terms from raw solution values and case data.
pub fn evaluate_objective(
    sol: &Solution,
    eff: &EffectiveCase,
    scen: &ScenarioSet,
) -> Result<ObjectiveBreakdown, ModelError> {
    let t_len = eff.periods;
    let shape_ok = |m: &Vec<Vec<f64>>, rows: usize| m.len() == rows && m.iter().all(|r| r.len() == t_len);
    if sol.commitment.len() != eff.thermal_gens.len()
        || sol.commitment.iter().any(|r| r.len() != t_len)
        || sol.startup.len() != eff.thermal_gens.len()
        || sol.scenarios.len() != scen.len()
    {
        return Err(ModelError::DimensionMismatch("commitment or scenario count".into()));
    }
    for d in &sol.scenarios {
        if !shape_ok(&d.generation_mw, eff.thermal_gens.len())
            || !shape_ok(&d.curtailment_mw, eff.renewables.len())
        {
            return Err(ModelError::DimensionMismatch("dispatch matrices".into()));
        }
    }
    let dt = eff.options.interval_hours;
    let mut b = ObjectiveBreakdown::default();
    for (g, gen) in eff.thermal_gens.iter().enumerate() {
        for t in 0..t_len {
            b.no_load += gen.cost_no_load_per_interval * f64::from(sol.commitment[g][t]);
            b.startup += gen.cost_startup * f64::from(sol.startup[g][t]);
        }
    }
    for (s, d) in sol.scenarios.iter().enumerate() {
        let pi = scen.probabilities[s];
        for (g, gen) in eff.thermal_gens.iter().enumerate() {
            let energy: f64 = d.generation_mw[g].iter().sum::<f64>() * dt;
            b.weighted_energy += pi * gen.cost_linear_per_mwh * energy;
        }
        for (r, unit) in eff.renewables.iter().enumerate() {
            let curtailed: f64 = d.curtailment_mw[r].iter().sum::<f64>() * dt;
            b.curtailment_penalty += pi * penalty(eff, unit.kind) * curtailed;
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub tol: f64,
    /// Largest violation per constraint family, including variable bounds owned by it.
    pub max_violation: BTreeMap<ConstraintFamily, f64>,
    /// Largest absolute residual of the state-of-charge recursion, MWh.
    pub soc_recursion_max: f64,
    /// Largest |flow * x - (theta_from - theta_to)| in per unit.
    pub flow_angle_max: f64,
    /// Largest distance of a binary from {0, 1}.
    pub integrality_max: f64,
    pub shape_mismatch: bool,
    pub passed: bool,
}

impl FeasibilityReport {
    pub fn violation(&self, family: ConstraintFamily) -> f64 {
        self.max_violation.get(&family).copied().unwrap_or(0.0)
    }

    pub fn worst_family(&self) -> Option<(ConstraintFamily, f64)> {
        self.max_violation
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(f, v)| (*f, *v))
    }
}

fn family_of(key: &VarKey) -> ConstraintFamily {
    match key {
        VarKey::Commit { .. } | VarKey::Startup { .. } => ConstraintFamily::Uc,
        VarKey::Gen { .. } | VarKey::Flow { .. } => ConstraintFamily::Limit,
        VarKey::Angle { .. } => ConstraintFamily::Ref,
        VarKey::Curtail { .. } => ConstraintFamily::Curt,
        VarKey::Charge { .. }
        | VarKey::Discharge { .. }
        | VarKey::Energy { .. }
        | VarKey::ChargeMode { .. }
        | VarKey::DischargeMode { .. } => ConstraintFamily::Soc,
    }
}

/// Re-checks every row and bound of `model` against the structured solution.
pub fn check_solution_feasibility(sol: &Solution, model: &MilpModel, tol: f64) -> FeasibilityReport {
    let mut report = FeasibilityReport {
        tol,
        max_violation: model.families().into_iter().map(|f| (f, 0.0)).collect(),
        soc_recursion_max: 0.0,
        flow_angle_max: 0.0,
        integrality_max: 0.0,
        shape_mismatch: false,
        passed: true,
    };
    let mut values = Vec::with_capacity(model.variables.len());
    for var in &model.variables {
        match sol.value(&var.key) {
            Some(x) => values.push(x),
            None => {
                report.shape_mismatch = true;
                report.passed = false;
                return report;
            }
        }
    }
    let bump = |report: &mut FeasibilityReport, f: ConstraintFamily, v: f64| {
        let slot = report.max_violation.entry(f).or_insert(0.0);
        if v > *slot || v.is_nan() {
            *slot = if v.is_nan() { f64::INFINITY } else { v };
        }
    };

    for (var, &x) in model.variables.iter().zip(&values) {
        let v = (var.lower - x).max(x - var.upper).max(0.0);
        bump(&mut report, family_of(&var.key), v);
        if var.kind == VarKind::Binary {
            let frac = (x - x.round()).abs();
            report.integrality_max = report.integrality_max.max(frac);
            bump(&mut report, family_of(&var.key), frac);
        }
    }

    for c in &model.constraints {
        let lhs: f64 = c.terms.iter().map(|(id, coef)| coef * values[id.0]).sum();
        let v = (c.lower - lhs).max(lhs - c.upper).max(0.0);
        bump(&mut report, c.family, v);
        match c.kind {
            RowKind::EnergyRecursion => {
                report.soc_recursion_max = report.soc_recursion_max.max(v);
            }
            RowKind::FlowDefinition => {
                // Same identity expressed in per unit: flow * x = theta_from - theta_to.
                let x = model.reactance[c.entity];
                report.flow_angle_max = report.flow_angle_max.max(v * x / model.base_mva);
            }
            _ => {}
        }
    }

    report.passed = report.max_violation.values().all(|&v| v <= tol);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::tests::one_bus_case;
    use crate::case::{apply_variant, Branch, Bus, ModelVariant, StorageUnit, VtlPair};

    fn two_period_case() -> crate::case::CaseFile {
        let mut c = one_bus_case();
        c.periods = 2;
        c.load_profiles[0].demand_mw = vec![100.0; 2];
        c
    }

    #[test]
    fn one_bus_variable_and_family_counts() {
        let case = two_period_case();
        let eff = apply_variant(&case, ModelVariant::Base).unwrap();
        let scen = ScenarioSet::deterministic(&case);
        let m = build_model(&eff, &scen).unwrap();
        assert_eq!(m.count_vars(|k| matches!(k, VarKey::Commit { .. })), 2);
        assert_eq!(m.count_vars(|k| matches!(k, VarKey::Startup { .. })), 2);
        assert_eq!(m.count_vars(|k| matches!(k, VarKey::Gen { .. })), 2);
        assert_eq!(m.count_vars(|k| matches!(k, VarKey::Angle { .. })), 2);
        assert_eq!(m.variables.len(), 8);
        let fams: Vec<_> = m.families().into_iter().collect();
        use ConstraintFamily as F;
        assert_eq!(fams, vec![F::Uc, F::Limit, F::Balance, F::Ref]);
    }

    fn vtl_case(periods: usize) -> crate::case::CaseFile {
        let mut c = one_bus_case();
        c.periods = periods;
        c.load_profiles[0].demand_mw = vec![100.0; periods];
        c.buses.push(Bus { id: "b2".into(), load_profile_ref: None });
        c.branches.push(Branch {
            id: "k1".into(),
            from_bus: "b1".into(),
            to_bus: "b2".into(),
            reactance_pu: 0.1,
            flow_limit_mw: 80.0,
            is_candidate_pt: false,
        });
        for (id, bus) in [("e1", "b1"), ("e2", "b2")] {
            c.storages.push(StorageUnit {
                id: id.into(),
                bus: bus.into(),
                e_min_mwh: 0.0,
                e_max_mwh: 40.0,
                p_charge_max_mw: 10.0,
                p_discharge_max_mw: 10.0,
                eta_charge: 0.9,
                eta_discharge: 0.9,
                initial_energy_mwh: 20.0,
                terminal_energy_min_mwh: None,
            });
        }
        c.vtl_pairs.push(VtlPair {
            id: "vt".into(),
            storage_ids: vec!["e1".into(), "e2".into()],
            spanned_branch: Some("k1".into()),
        });
        c
    }

    #[test]
    fn vtl_family_has_one_row_per_pair_interval_scenario_and_mode() {
        let case = vtl_case(24);
        let eff = apply_variant(&case, ModelVariant::Vtl).unwrap();
        let mut scen = ScenarioSet::deterministic(&case);
        scen.scenarios = vec![scen.scenarios[0].clone(); 3];
        scen.probabilities = vec![0.25, 0.35, 0.40];
        let m = build_model(&eff, &scen).unwrap();
        assert_eq!(m.count_family(ConstraintFamily::Vtl), 2 * 24 * 3);
        // Commitment is never multiplied by the scenario count.
        assert_eq!(m.count_vars(|k| matches!(k, VarKey::Commit { .. })), 24);
        assert_eq!(m.count_vars(|k| matches!(k, VarKey::Startup { .. })), 24);
    }

    #[test]
    fn base_and_bess_differ_only_by_storage() {
        let case = vtl_case(3);
        let scen = ScenarioSet::deterministic(&case);
        let base = build_model(&apply_variant(&case, ModelVariant::Base).unwrap(), &scen).unwrap();
        let bess = build_model(&apply_variant(&case, ModelVariant::Bess).unwrap(), &scen).unwrap();
        let storage_var = |k: &VarKey| {
            matches!(
                k,
                VarKey::Charge { .. }
                    | VarKey::Discharge { .. }
                    | VarKey::Energy { .. }
                    | VarKey::ChargeMode { .. }
                    | VarKey::DischargeMode { .. }
            )
        };
        assert_eq!(
            base.variables.len(),
            bess.variables.len() - bess.count_vars(storage_var)
        );
        for f in [
            ConstraintFamily::Uc,
            ConstraintFamily::Ramp,
            ConstraintFamily::Flow,
            ConstraintFamily::Limit,
            ConstraintFamily::Balance,
            ConstraintFamily::Curt,
            ConstraintFamily::Ref,
        ] {
            assert_eq!(base.count_family(f), bess.count_family(f), "{f}");
        }
        assert_eq!(base.count_family(ConstraintFamily::Soc), 0);
        assert_eq!(bess.count_family(ConstraintFamily::Soc), 2 * 3 * 5);
        assert_eq!(bess.count_family(ConstraintFamily::Vtl), 0);
        // Balance rows in the storage variant carry the charge and discharge terms.
        let terms = |m: &MilpModel| -> usize {
            m.constraints
                .iter()
                .filter(|c| c.family == ConstraintFamily::Balance)
                .map(|c| c.terms.len())
                .sum()
        };
        assert_eq!(terms(&bess), terms(&base) + 2 * 2 * 3);
    }

    #[test]
    fn scenario_missing_unit_is_rejected() {
        let mut case = two_period_case();
        case.renewables.push(crate::case::RenewableUnit {
            id: "w".into(),
            bus: "b1".into(),
            kind: RenewableKind::Wind,
            base_profile_mw: vec![1.0, 1.0],
        });
        let eff = apply_variant(&case, ModelVariant::Base).unwrap();
        let mut scen = ScenarioSet::deterministic(&case);
        scen.scenarios[0].clear();
        assert!(matches!(build_model(&eff, &scen), Err(ModelError::ScenarioCaseMismatch(_))));
    }

    fn flat_solution(case: &crate::case::CaseFile, scen: &ScenarioSet, commit_from: usize) -> (EffectiveCase, MilpModel, Solution) {
        let eff = apply_variant(case, ModelVariant::Base).unwrap();
        let m = build_model(&eff, scen).unwrap();
        let values: Vec<f64> = m
            .variables
            .iter()
            .map(|v| match v.key {
                VarKey::Commit { t, .. } => f64::from(u8::from(t >= commit_from)),
                VarKey::Startup { t, .. } => f64::from(u8::from(t == commit_from)),
                VarKey::Gen { .. } => 100.0,
                _ => 0.0,
            })
            .collect();
        let sol = Solution::from_values(&m, &values, SolveStatus::Optimal, 0.0);
        (eff, m, sol)
    }

    #[test]
    fn objective_of_flat_dispatch() {
        let case = one_bus_case();
        let scen = ScenarioSet::deterministic(&case);
        let (eff, m, sol) = flat_solution(&case, &scen, 0);
        let b = evaluate_objective(&sol, &eff, &scen).unwrap();
        assert_eq!(b.total(), 24_000.0);
        assert!(check_solution_feasibility(&sol, &m, 1e-9).passed);

        let mut case = one_bus_case();
        case.thermal_gens[0].cost_no_load_per_interval = 50.0;
        case.thermal_gens[0].cost_startup = 200.0;
        let (eff, _, sol) = flat_solution(&case, &scen, 0);
        let b = evaluate_objective(&sol, &eff, &scen).unwrap();
        assert_eq!(b.total(), 25_400.0);
        assert_eq!(b.no_load, 1_200.0);
        assert_eq!(b.startup, 200.0);
    }

    #[test]
    fn objective_weights_energy_by_probability() {
        let case = one_bus_case();
        let mut scen = ScenarioSet::deterministic(&case);
        scen.scenarios.push(scen.scenarios[0].clone());
        scen.probabilities = vec![0.5, 0.5];
        let (eff, _, mut sol) = flat_solution(&case, &scen, 0);
        // Energy cost 24,000 in scenario 1 and 48,000 in scenario 2 at 10 $/MWh.
        sol.scenarios[1].generation_mw[0] = vec![200.0; 24];
        let b = evaluate_objective(&sol, &eff, &scen).unwrap();
        assert_eq!(b.weighted_energy, 36_000.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let case = one_bus_case();
        let scen = ScenarioSet::deterministic(&case);
        let (eff, _, mut sol) = flat_solution(&case, &scen, 0);
        sol.commitment.push(vec![0; 24]);
        assert!(matches!(
            evaluate_objective(&sol, &eff, &scen),
            Err(ModelError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn verifier_flags_startup_logic() {
        let case = one_bus_case();
        let scen = ScenarioSet::deterministic(&case);
        let (_, m, mut sol) = flat_solution(&case, &scen, 0);
        sol.startup[0][0] = 0;
        let r = check_solution_feasibility(&sol, &m, 1e-6);
        assert!(!r.passed);
        assert!(r.violation(ConstraintFamily::Uc) >= 1.0);
    }

    #[test]
    fn dump_lists_every_constraint() {
        let case = two_period_case();
        let eff = apply_variant(&case, ModelVariant::Base).unwrap();
        let m = build_model(&eff, &ScenarioSet::deterministic(&case)).unwrap();
        let dump = m.dump();
        assert_eq!(dump.lines().count(), m.constraints.len());
        assert!(dump.lines().next().unwrap().starts_with("[UC] Startup(entity=0, t=1)"));
        assert!(dump.contains("[BALANCE] Balance(entity=0, t=2, s=1): +1*p[g1,2,1] in [100, 100]"));
    }
}
