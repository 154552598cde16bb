//! Probability-weighted renewable scenarios: synthesis from forecast-error noise,
//! persistence, and validation against a case.
//!
//! Noise is multiplicative: `output = max(0, base * (1 + eps))` with
//! `eps ~ Normal(0, sigma(kind, hour))`. Uniform draws come from ChaCha20 (portable and
//! seedable); normal draws use the Box-Muller transform, consuming two uniforms per draw
//! and discarding the sine branch so every draw maps to a fixed stream position.
//! Draw order is scenario-major, then renewable unit in case order, then interval.
//! Every (scenario, unit, interval) consumes one draw, including zero-sigma hours.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseFile, RenewableKind, ValidationReport, EntityKind};

pub const SCENARIO_SCHEMA: &str = "vtl-scuc-scen/1";

/// Tolerance on the probability sum.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("bad probabilities: {0}")]
    BadProbabilities(String),
    #[error("scenario count must be positive")]
    ZeroCount,
    #[error("reading scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scenario schema {0:?}")]
    Schema(String),
}

/// Per-hour-of-day standard deviation of the relative forecast error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSchedule {
    pub solar: Vec<f64>,
    pub wind: Vec<f64>,
}

impl Default for SigmaSchedule {
    /// Solar: zero from 20:00 to 05:00, 0.05 from 09:00 to 16:00, 0.02 otherwise.
    /// Wind: 0.1 throughout. Entry `h` covers the hour starting at `h:00`.
    fn default() -> Self {
        let solar = (0..24)
            .map(|h| match h {
                20..=23 | 0..=4 => 0.0,
                9..=15 => 0.05,
                _ => 0.02,
            })
            .collect();
        Self {
            solar,
            wind: vec![0.1; 24],
        }
    }
}

impl SigmaSchedule {
    pub fn constant(sigma: f64) -> Self {
        Self {
            solar: vec![sigma; 24],
            wind: vec![sigma; 24],
        }
    }

    /// Sigma for a kind at interval `t`; schedules shorter than the horizon wrap around.
    pub fn sigma(&self, kind: RenewableKind, t: usize) -> f64 {
        let v = match kind {
            RenewableKind::Solar => &self.solar,
            RenewableKind::Wind => &self.wind,
        };
        if v.is_empty() {
            0.0
        } else {
            v[t % v.len()]
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.solar.is_empty()
            && !self.wind.is_empty()
            && self
                .solar
                .iter()
                .chain(&self.wind)
                .all(|s| s.is_finite() && *s >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub schedule: SigmaSchedule,
}

fn default_scen_schema() -> String {
    SCENARIO_SCHEMA.to_string()
}

/// Renewable availability per scenario, keyed by unit id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSet {
    #[serde(default = "default_scen_schema")]
    pub schema: String,
    pub probabilities: Vec<f64>,
    pub scenarios: Vec<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Single scenario equal to the case forecast, with probability one.
    pub fn deterministic(case: &CaseFile) -> Self {
        let profiles = case
            .renewables
            .iter()
            .map(|u| (u.id.clone(), u.base_profile_mw.clone()))
            .collect();
        Self {
            schema: SCENARIO_SCHEMA.into(),
            probabilities: vec![1.0],
            scenarios: vec![profiles],
            provenance: None,
        }
    }

    /// Scenario `s` alone, reweighted to probability one.
    pub fn single(&self, s: usize) -> Self {
        Self {
            schema: SCENARIO_SCHEMA.into(),
            probabilities: vec![1.0],
            scenarios: vec![self.scenarios[s].clone()],
            provenance: None,
        }
    }

    /// Probability-weighted mean profile as a one-scenario set.
    pub fn expected(&self) -> Self {
        let mut mean: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (p, scen) in self.probabilities.iter().zip(&self.scenarios) {
            for (id, profile) in scen {
                let acc = mean
                    .entry(id.clone())
                    .or_insert_with(|| vec![0.0; profile.len()]);
                for (a, v) in acc.iter_mut().zip(profile) {
                    *a += p * v;
                }
            }
        }
        Self {
            schema: SCENARIO_SCHEMA.into(),
            probabilities: vec![1.0],
            scenarios: vec![mean],
            provenance: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let set: ScenarioSet = serde_json::from_str(text)?;
        if set.schema != SCENARIO_SCHEMA {
            return Err(ScenarioError::Schema(set.schema));
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario set serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Gaussian stream over ChaCha20 via Box-Muller.
pub struct NoiseStream {
    rng: ChaCha20Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        // u1 in (0, 1] keeps ln finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn check_probabilities(p: &[f64], count: usize) -> Result<(), ScenarioError> {
    if p.len() != count {
        return Err(ScenarioError::BadProbabilities(format!(
            "{} probabilities for {count} scenarios",
            p.len()
        )));
    }
    if p.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(ScenarioError::BadProbabilities(
            "every probability must be positive".into(),
        ));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(ScenarioError::BadProbabilities(format!("sum is {sum}")));
    }
    Ok(())
}

/// Draws `count` scenarios of renewable availability around the case forecast.
pub fn generate_scenarios(
    case: &CaseFile,
    schedule: &SigmaSchedule,
    count: usize,
    seed: u64,
    probabilities: Option<&[f64]>,
) -> Result<ScenarioSet, ScenarioError> {
    if count == 0 {
        return Err(ScenarioError::ZeroCount);
    }
    let probabilities = match probabilities {
        Some(p) => {
            check_probabilities(p, count)?;
            p.to_vec()
        }
        None => vec![1.0 / count as f64; count],
    };

    let mut noise = NoiseStream::new(seed);
    let scenarios = (0..count)
        .map(|_| {
            case.renewables
                .iter()
                .map(|u| {
                    let profile = u
                        .base_profile_mw
                        .iter()
                        .enumerate()
                        .map(|(t, &base)| {
                            let z = noise.standard_normal();
                            let sigma = schedule.sigma(u.kind, t);
                            if sigma == 0.0 {
                                base
                            } else {
                                (base * (1.0 + sigma * z)).max(0.0)
                            }
                        })
                        .collect();
                    (u.id.clone(), profile)
                })
                .collect()
        })
        .collect();

    Ok(ScenarioSet {
        schema: SCENARIO_SCHEMA.into(),
        probabilities,
        scenarios,
        provenance: Some(Provenance {
            seed,
            schedule: schedule.clone(),
        }),
    })
}

pub fn validate_scenario_set(set: &ScenarioSet, case: &CaseFile) -> ValidationReport {
    use EntityKind as E;
    let mut r = ValidationReport::default();
    if set.schema != SCENARIO_SCHEMA {
        r.push(E::Case, "scenarios", format!("schema = {SCENARIO_SCHEMA}"));
    }
    if set.probabilities.is_empty() {
        r.push(E::Case, "scenarios", "at least one scenario");
    }
    if set.probabilities.len() != set.scenarios.len() {
        r.push(E::Case, "scenarios", "one probability per scenario");
    }
    if set.probabilities.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        r.push(E::Case, "scenarios", "probabilities > 0");
    }
    let sum: f64 = set.probabilities.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
        r.push(E::Case, "scenarios", "probabilities sum to 1");
    }
    let check_series = |r: &mut ValidationReport, kind: EntityKind, id: &str, p: &[f64], s: usize| {
        if p.len() != case.periods {
            r.push(kind, id, format!("length = periods in scenario {s}"));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            r.push(kind, id, format!("values >= 0 in scenario {s}"));
        }
    };
    for (s, scen) in set.scenarios.iter().enumerate() {
        for u in &case.renewables {
            match scen.get(&u.id) {
                None => r.push(E::RenewableUnit, &u.id, format!("profile present in scenario {s}")),
                Some(p) => check_series(&mut r, E::RenewableUnit, &u.id, p, s),
            }
        }
        for lp in &case.load_profiles {
            if let Some(p) = scen.get(&lp.id) {
                check_series(&mut r, E::LoadProfile, &lp.id, p, s);
            }
        }
        for id in scen.keys() {
            let known = case.renewables.iter().any(|u| &u.id == id) || case.load_profiles.iter().any(|l| &l.id == id);
            if !known {
                r.push(E::RenewableUnit, id, format!("unit or load profile exists in case (scenario {s})"));
            }
        }
    }
    // Mean-value problems average each key over scenarios, so overrides must be all-or-none.
    for lp in &case.load_profiles {
        let present = set.scenarios.iter().filter(|sc| sc.contains_key(&lp.id)).count();
        if present != 0 && present != set.scenarios.len() {
            r.push(E::LoadProfile, &lp.id, "load override present in every scenario or none");
        }
    }
    r
}
