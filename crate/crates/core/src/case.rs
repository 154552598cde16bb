//! Static power-system description, the model-variant matrix, and structural validation.
//!
//! A [`CaseFile`] is immutable once loaded. [`apply_variant`] projects it onto one of the
//! four formulations ([`ModelVariant`]) and yields an [`EffectiveCase`] that the model
//! builder consumes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CASE_SCHEMA: &str = "vtl-scuc/1";

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("reading case file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing case file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported case schema {found:?}, expected {CASE_SCHEMA:?}")]
    Schema { found: String },
    #[error("case failed validation with {} issue(s); first: {}", .0.issues.len(), .0.issues.first().map(|i| i.to_string()).unwrap_or_default())]
    Invalid(ValidationReport),
    #[error("variant {variant} requires at least one {missing}")]
    VariantPrerequisiteMissing {
        variant: ModelVariant,
        missing: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_profile_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub reactance_pu: f64,
    pub flow_limit_mw: f64,
    #[serde(default)]
    pub is_candidate_pt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialStatus {
    Committed,
    #[default]
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalGen {
    pub id: String,
    pub bus: String,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    /// Maximum change in output between consecutive intervals.
    pub ramp_mw_per_interval: f64,
    pub cost_linear_per_mwh: f64,
    #[serde(default)]
    pub cost_no_load_per_interval: f64,
    #[serde(default)]
    pub cost_startup: f64,
    #[serde(default)]
    pub initial_status: InitialStatus,
    #[serde(default)]
    pub initial_output_mw: f64,
}

impl ThermalGen {
    pub fn initially_committed(&self) -> bool {
        self.initial_status == InitialStatus::Committed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenewableKind {
    Solar,
    Wind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewableUnit {
    pub id: String,
    pub bus: String,
    pub kind: RenewableKind,
    /// Forecast output per interval, MW.
    pub base_profile_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageUnit {
    pub id: String,
    pub bus: String,
    pub e_min_mwh: f64,
    pub e_max_mwh: f64,
    pub p_charge_max_mw: f64,
    pub p_discharge_max_mw: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub initial_energy_mwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_energy_min_mwh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VtlPair {
    pub id: String,
    pub storage_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spanned_branch: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfile {
    pub id: String,
    pub bus: String,
    pub demand_mw: Vec<f64>,
}

fn default_interval() -> f64 {
    1.0
}
fn default_penalty() -> f64 {
    500.0
}
fn default_epsilon() -> f64 {
    1e-4
}
fn default_base_mva() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseOptions {
    #[serde(default = "default_interval")]
    pub interval_hours: f64,
    #[serde(default = "default_penalty")]
    pub penalty_solar_per_mwh: f64,
    #[serde(default = "default_penalty")]
    pub penalty_wind_per_mwh: f64,
    /// Bus whose angle is pinned to zero. Defaults to the lowest-numbered bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_bus: Option<String>,
    #[serde(default = "default_epsilon")]
    pub congestion_epsilon: f64,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
}

impl Default for CaseOptions {
    fn default() -> Self {
        Self {
            interval_hours: default_interval(),
            penalty_solar_per_mwh: default_penalty(),
            penalty_wind_per_mwh: default_penalty(),
            reference_bus: None,
            congestion_epsilon: default_epsilon(),
            base_mva: default_base_mva(),
        }
    }
}

fn default_schema() -> String {
    CASE_SCHEMA.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default = "default_schema")]
    pub schema: String,
    #[serde(default)]
    pub name: String,
    /// Number of scheduling intervals in the horizon.
    pub periods: usize,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub thermal_gens: Vec<ThermalGen>,
    #[serde(default)]
    pub renewables: Vec<RenewableUnit>,
    #[serde(default)]
    pub storages: Vec<StorageUnit>,
    #[serde(default)]
    pub vtl_pairs: Vec<VtlPair>,
    #[serde(default)]
    pub load_profiles: Vec<LoadProfile>,
    #[serde(default)]
    pub options: CaseOptions,
}

impl CaseFile {
    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let case: CaseFile = serde_json::from_str(text)?;
        if case.schema != CASE_SCHEMA {
            return Err(CaseError::Schema { found: case.schema });
        }
        Ok(case)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CaseError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    /// Reference bus: the explicit option, else the lowest-numbered bus id.
    pub fn reference_bus(&self) -> Option<&str> {
        if let Some(r) = &self.options.reference_bus {
            return Some(r.as_str());
        }
        let numeric: Option<Vec<(u64, &str)>> = self
            .buses
            .iter()
            .map(|b| b.id.parse::<u64>().ok().map(|n| (n, b.id.as_str())))
            .collect();
        match numeric {
            Some(mut ids) if !ids.is_empty() => {
                ids.sort();
                Some(ids[0].1)
            }
            _ => self.buses.iter().map(|b| b.id.as_str()).min(),
        }
    }

    /// Demand per bus (by position in `buses`) and interval, summing every profile at the bus.
    pub fn demand_matrix(&self) -> Vec<Vec<f64>> {
        let index: HashMap<&str, usize> = self
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect();
        let mut demand = vec![vec![0.0; self.periods]; self.buses.len()];
        for lp in &self.load_profiles {
            if let Some(&n) = index.get(lp.bus.as_str()) {
                for (t, d) in lp.demand_mw.iter().enumerate().take(self.periods) {
                    demand[n][t] += d;
                }
            }
        }
        demand
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "pt")]
    Pt,
    #[serde(rename = "bess")]
    Bess,
    #[serde(rename = "vtl")]
    Vtl,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [Self::Base, Self::Pt, Self::Bess, Self::Vtl];

    pub fn label(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::Pt => "pt",
            Self::Bess => "bess",
            Self::Vtl => "vtl",
        }
    }

    /// Constraint families the builder emits for this variant.
    pub fn families(self) -> BTreeSet<ConstraintFamily> {
        use ConstraintFamily::*;
        let mut f: BTreeSet<_> = [Uc, Ramp, Flow, Limit, Balance, Curt, Ref].into();
        if matches!(self, Self::Bess | Self::Vtl) {
            f.insert(Soc);
        }
        if self == Self::Vtl {
            f.insert(Vtl);
        }
        f
    }

    pub fn has_storage(self) -> bool {
        matches!(self, Self::Bess | Self::Vtl)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Self::Base),
            "pt" => Ok(Self::Pt),
            "bess" => Ok(Self::Bess),
            "vtl" => Ok(Self::Vtl),
            other => Err(format!("unknown variant {other:?} (expected base, pt, bess or vtl)")),
        }
    }
}

/// Tag carried by every linear constraint of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintFamily {
    /// Commitment/startup logic.
    Uc,
    Ramp,
    /// Branch flow as a function of bus angles.
    Flow,
    /// Generator output bounds and branch thermal limits.
    Limit,
    /// Nodal power balance.
    Balance,
    /// Renewable curtailment bounded by availability.
    Curt,
    /// Storage power, energy, mode and state-of-charge recursion.
    Soc,
    /// Virtual-transmission-line mode coupling.
    Vtl,
    /// Reference angle.
    Ref,
}

impl ConstraintFamily {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Uc => "UC",
            Self::Ramp => "RAMP",
            Self::Flow => "FLOW",
            Self::Limit => "LIMIT",
            Self::Balance => "BALANCE",
            Self::Curt => "CURT",
            Self::Soc => "SOC",
            Self::Vtl => "VTL",
            Self::Ref => "REF",
        }
    }
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    Case,
    Bus,
    Branch,
    ThermalGen,
    RenewableUnit,
    StorageUnit,
    VtlPair,
    LoadProfile,
    CaseOptions,
    Network,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub entity: EntityKind,
    pub id: String,
    pub rule: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {:?}: {}", self.entity, self.id, self.rule)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn push(&mut self, entity: EntityKind, id: impl Into<String>, rule: impl Into<String>) {
        self.issues.push(ValidationIssue {
            entity,
            id: id.into(),
            rule: rule.into(),
        });
    }

    pub fn has_rule(&self, entity: EntityKind, rule: &str) -> bool {
        self.issues
            .iter()
            .any(|i| i.entity == entity && i.rule == rule)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

fn check_unique<'a>(
    report: &mut ValidationReport,
    kind: EntityKind,
    ids: impl Iterator<Item = &'a str>,
) -> HashSet<&'a str> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            report.push(kind, id, "ids unique");
        }
    }
    seen
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Structural validation. The report is empty iff the case is well-formed and the network
/// (ignoring candidate physical-line branches) is connected.
pub fn validate_case(case: &CaseFile) -> ValidationReport {
    use EntityKind as E;
    let mut r = ValidationReport::default();
    let t_len = case.periods;

    if case.schema != CASE_SCHEMA {
        r.push(E::Case, &case.name, format!("schema = {CASE_SCHEMA}"));
    }
    if t_len == 0 {
        r.push(E::Case, &case.name, "periods >= 1");
    }
    if case.buses.is_empty() {
        r.push(E::Case, &case.name, "at least one bus");
    }

    let buses = check_unique(&mut r, E::Bus, case.buses.iter().map(|b| b.id.as_str()));
    let profiles: HashMap<&str, &LoadProfile> = case
        .load_profiles
        .iter()
        .map(|lp| (lp.id.as_str(), lp))
        .collect();
    check_unique(
        &mut r,
        E::LoadProfile,
        case.load_profiles.iter().map(|l| l.id.as_str()),
    );
    // Scenario files key renewable and load overrides by id, so the two must not collide.
    for lp in &case.load_profiles {
        if case.renewables.iter().any(|u| u.id == lp.id) {
            r.push(E::LoadProfile, &lp.id, "id distinct from renewable ids");
        }
    }

    for b in &case.buses {
        if let Some(reference) = &b.load_profile_ref {
            match profiles.get(reference.as_str()) {
                None => r.push(E::Bus, &b.id, "load_profile_ref resolves"),
                Some(lp) if lp.bus != b.id => {
                    r.push(E::Bus, &b.id, "load_profile_ref names a profile at this bus")
                }
                _ => {}
            }
        }
    }

    for lp in &case.load_profiles {
        if !buses.contains(lp.bus.as_str()) {
            r.push(E::LoadProfile, &lp.id, "bus exists");
        }
        if lp.demand_mw.len() != t_len {
            r.push(E::LoadProfile, &lp.id, "length = periods");
        }
        if !all_finite(&lp.demand_mw) || lp.demand_mw.iter().any(|&d| d < 0.0) {
            r.push(E::LoadProfile, &lp.id, "demand_mw >= 0");
        }
    }

    check_unique(&mut r, E::Branch, case.branches.iter().map(|b| b.id.as_str()));
    for k in &case.branches {
        if k.from_bus == k.to_bus {
            r.push(E::Branch, &k.id, "from_bus != to_bus");
        }
        if !buses.contains(k.from_bus.as_str()) || !buses.contains(k.to_bus.as_str()) {
            r.push(E::Branch, &k.id, "terminal buses exist");
        }
        if !(k.reactance_pu > 0.0 && k.reactance_pu.is_finite()) {
            r.push(E::Branch, &k.id, "reactance_pu > 0");
        }
        if !(k.flow_limit_mw > 0.0 && k.flow_limit_mw.is_finite()) {
            r.push(E::Branch, &k.id, "flow_limit_mw > 0");
        }
    }

    check_unique(
        &mut r,
        E::ThermalGen,
        case.thermal_gens.iter().map(|g| g.id.as_str()),
    );
    for g in &case.thermal_gens {
        if !buses.contains(g.bus.as_str()) {
            r.push(E::ThermalGen, &g.id, "bus exists");
        }
        let nums = [
            g.p_min_mw,
            g.p_max_mw,
            g.ramp_mw_per_interval,
            g.cost_linear_per_mwh,
            g.cost_no_load_per_interval,
            g.cost_startup,
            g.initial_output_mw,
        ];
        if !all_finite(&nums) {
            r.push(E::ThermalGen, &g.id, "values finite");
            continue;
        }
        if !(0.0 <= g.p_min_mw && g.p_min_mw <= g.p_max_mw) {
            r.push(E::ThermalGen, &g.id, "0 <= p_min <= p_max");
        }
        if g.ramp_mw_per_interval < 0.0 {
            r.push(E::ThermalGen, &g.id, "ramp >= 0");
        }
        if g.cost_linear_per_mwh < 0.0 || g.cost_no_load_per_interval < 0.0 || g.cost_startup < 0.0
        {
            r.push(E::ThermalGen, &g.id, "costs >= 0");
        }
        if !(0.0..=g.p_max_mw).contains(&g.initial_output_mw) {
            r.push(E::ThermalGen, &g.id, "initial_output in [0, p_max]");
        }
        if !g.initially_committed() && g.initial_output_mw != 0.0 {
            r.push(E::ThermalGen, &g.id, "initial_output = 0 when offline");
        }
    }

    check_unique(
        &mut r,
        E::RenewableUnit,
        case.renewables.iter().map(|u| u.id.as_str()),
    );
    for u in &case.renewables {
        if !buses.contains(u.bus.as_str()) {
            r.push(E::RenewableUnit, &u.id, "bus exists");
        }
        if u.base_profile_mw.len() != t_len {
            r.push(E::RenewableUnit, &u.id, "length = periods");
        }
        if !all_finite(&u.base_profile_mw) || u.base_profile_mw.iter().any(|&p| p < 0.0) {
            r.push(E::RenewableUnit, &u.id, "base_profile >= 0");
        }
    }

    let storage_ids = check_unique(
        &mut r,
        E::StorageUnit,
        case.storages.iter().map(|e| e.id.as_str()),
    );
    for e in &case.storages {
        if !buses.contains(e.bus.as_str()) {
            r.push(E::StorageUnit, &e.id, "bus exists");
        }
        let nums = [
            e.e_min_mwh,
            e.e_max_mwh,
            e.p_charge_max_mw,
            e.p_discharge_max_mw,
            e.eta_charge,
            e.eta_discharge,
            e.initial_energy_mwh,
        ];
        if !all_finite(&nums) {
            r.push(E::StorageUnit, &e.id, "values finite");
            continue;
        }
        if !(0.0 <= e.e_min_mwh
            && e.e_min_mwh <= e.initial_energy_mwh
            && e.initial_energy_mwh <= e.e_max_mwh)
        {
            r.push(E::StorageUnit, &e.id, "0 <= e_min <= initial_energy <= e_max");
        }
        if !(e.p_charge_max_mw > 0.0 && e.p_discharge_max_mw > 0.0) {
            r.push(E::StorageUnit, &e.id, "power limits > 0");
        }
        if !(e.eta_charge > 0.0
            && e.eta_charge <= 1.0
            && e.eta_discharge > 0.0
            && e.eta_discharge <= 1.0)
        {
            r.push(E::StorageUnit, &e.id, "efficiencies in (0, 1]");
        }
        if let Some(floor) = e.terminal_energy_min_mwh {
            if !(floor.is_finite() && floor <= e.e_max_mwh) {
                r.push(E::StorageUnit, &e.id, "terminal_energy_min <= e_max");
            }
        }
    }

    check_unique(&mut r, E::VtlPair, case.vtl_pairs.iter().map(|v| v.id.as_str()));
    let storage_bus: HashMap<&str, &str> = case
        .storages
        .iter()
        .map(|e| (e.id.as_str(), e.bus.as_str()))
        .collect();
    for vt in &case.vtl_pairs {
        let distinct: BTreeSet<&str> = vt.storage_ids.iter().map(String::as_str).collect();
        if vt.storage_ids.len() != 2 || distinct.len() != 2 {
            r.push(E::VtlPair, &vt.id, "exactly two distinct storage ids");
        }
        if vt
            .storage_ids
            .iter()
            .any(|s| !storage_ids.contains(s.as_str()))
        {
            r.push(E::VtlPair, &vt.id, "storage ids resolve");
        }
        if let Some(kid) = &vt.spanned_branch {
            match case.branches.iter().find(|k| &k.id == kid) {
                None => r.push(E::VtlPair, &vt.id, "spanned_branch exists"),
                Some(k) => {
                    let ends: BTreeSet<&str> = [k.from_bus.as_str(), k.to_bus.as_str()].into();
                    let sites: BTreeSet<&str> = vt
                        .storage_ids
                        .iter()
                        .filter_map(|s| storage_bus.get(s.as_str()).copied())
                        .collect();
                    if sites != ends {
                        r.push(E::VtlPair, &vt.id, "storages sit on spanned_branch terminals");
                    }
                }
            }
        }
    }

    let o = &case.options;
    if !(o.interval_hours > 0.0 && o.interval_hours.is_finite()) {
        r.push(E::CaseOptions, "options", "interval_hours > 0");
    }
    if !(o.penalty_solar_per_mwh >= 0.0 && o.penalty_wind_per_mwh >= 0.0) {
        r.push(E::CaseOptions, "options", "penalties >= 0");
    }
    if !(o.base_mva > 0.0 && o.base_mva.is_finite()) {
        r.push(E::CaseOptions, "options", "base_mva > 0");
    }
    if !(o.congestion_epsilon > 0.0 && o.congestion_epsilon < 1.0) {
        r.push(E::CaseOptions, "options", "congestion_epsilon in (0, 1)");
    }
    match case.reference_bus() {
        Some(rb) if buses.contains(rb) => {}
        _ => r.push(E::CaseOptions, "options", "reference_bus exists"),
    }

    if !case.buses.is_empty() && !is_connected(case, false) {
        r.push(E::Network, &case.name, "network connected");
    }
    r
}

/// Connectivity of the bus graph; candidate physical-line branches count only when asked.
fn is_connected(case: &CaseFile, with_candidates: bool) -> bool {
    let index: HashMap<&str, usize> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let mut adj = vec![Vec::new(); case.buses.len()];
    for k in &case.branches {
        if k.is_candidate_pt && !with_candidates {
            continue;
        }
        if let (Some(&a), Some(&b)) = (index.get(k.from_bus.as_str()), index.get(k.to_bus.as_str()))
        {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; case.buses.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(n) = queue.pop_front() {
        for &m in &adj[n] {
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// A case projected onto one variant: only the network elements and devices the variant
/// uses, resolved to positional indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCase {
    pub variant: ModelVariant,
    pub name: String,
    pub periods: usize,
    pub options: CaseOptions,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub thermal_gens: Vec<ThermalGen>,
    pub renewables: Vec<RenewableUnit>,
    pub storages: Vec<StorageUnit>,
    pub vtl_pairs: Vec<VtlPair>,
    /// Forecast demand per bus position and interval, MW.
    pub demand: Vec<Vec<f64>>,
    pub load_profiles: Vec<LoadProfile>,
    /// Bus position per load profile.
    pub load_bus: Vec<usize>,
    pub reference_bus: usize,
    pub families: BTreeSet<ConstraintFamily>,
    /// (from, to) bus positions per branch.
    pub branch_ends: Vec<(usize, usize)>,
    pub gen_bus: Vec<usize>,
    pub renewable_bus: Vec<usize>,
    pub storage_bus: Vec<usize>,
    /// Storage positions per VTL pair.
    pub vtl_members: Vec<[usize; 2]>,
    /// Content hash of the source case, shared by every variant of it.
    pub case_hash: String,
}

impl EffectiveCase {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }
}

/// Projects a validated case onto a variant.
pub fn apply_variant(case: &CaseFile, variant: ModelVariant) -> Result<EffectiveCase, CaseError> {
    let report = validate_case(case);
    if !report.is_empty() {
        return Err(CaseError::Invalid(report));
    }
    let missing = match variant {
        ModelVariant::Pt if !case.branches.iter().any(|k| k.is_candidate_pt) => {
            Some("candidate physical-line branch")
        }
        ModelVariant::Bess if case.storages.is_empty() => Some("storage unit"),
        ModelVariant::Vtl if case.storages.is_empty() => Some("storage unit"),
        ModelVariant::Vtl if case.vtl_pairs.is_empty() => Some("VTL pair"),
        _ => None,
    };
    if let Some(missing) = missing {
        return Err(CaseError::VariantPrerequisiteMissing { variant, missing });
    }

    let bus_pos: HashMap<&str, usize> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let branches: Vec<Branch> = case
        .branches
        .iter()
        .filter(|k| !k.is_candidate_pt || variant == ModelVariant::Pt)
        .cloned()
        .collect();
    let storages: Vec<StorageUnit> = if variant.has_storage() {
        case.storages.clone()
    } else {
        Vec::new()
    };
    let vtl_pairs: Vec<VtlPair> = if variant == ModelVariant::Vtl {
        case.vtl_pairs.clone()
    } else {
        Vec::new()
    };
    let storage_pos: BTreeMap<&str, usize> = storages
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();

    Ok(EffectiveCase {
        variant,
        name: case.name.clone(),
        periods: case.periods,
        options: case.options.clone(),
        buses: case.buses.clone(),
        branch_ends: branches
            .iter()
            .map(|k| (bus_pos[k.from_bus.as_str()], bus_pos[k.to_bus.as_str()]))
            .collect(),
        gen_bus: case
            .thermal_gens
            .iter()
            .map(|g| bus_pos[g.bus.as_str()])
            .collect(),
        renewable_bus: case
            .renewables
            .iter()
            .map(|u| bus_pos[u.bus.as_str()])
            .collect(),
        storage_bus: storages.iter().map(|e| bus_pos[e.bus.as_str()]).collect(),
        vtl_members: vtl_pairs
            .iter()
            .map(|vt| {
                [
                    storage_pos[vt.storage_ids[0].as_str()],
                    storage_pos[vt.storage_ids[1].as_str()],
                ]
            })
            .collect(),
        branches,
        thermal_gens: case.thermal_gens.clone(),
        renewables: case.renewables.clone(),
        storages,
        vtl_pairs,
        demand: case.demand_matrix(),
        load_profiles: case.load_profiles.clone(),
        load_bus: case
            .load_profiles
            .iter()
            .map(|lp| bus_pos[lp.bus.as_str()])
            .collect(),
        reference_bus: bus_pos[case.reference_bus().expect("validated")],
        families: variant.families(),
        case_hash: crate::content_hash(case.to_json().as_bytes()),
    })
}
