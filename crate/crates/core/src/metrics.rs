//! Evaluation metrics over solved runs: operational cost, load payment, congestion,
//! curtailment, cross-variant comparison, and stochastic-value diagnostics.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{apply_variant, CaseError, CaseFile, EffectiveCase, ModelVariant, RenewableKind};
use crate::model::{build_model, ModelError, ObjectiveBreakdown, SolveStatus, Solution, VarKey};
use crate::scenario::ScenarioSet;
use crate::solver::{solve_milp, LmpSurface, SolverError, SolverOptions};

pub const REPORT_SCHEMA: &str = "vtl-scuc-report/1";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("baseline {0:?} is missing or has no results")]
    BaselineMissing(String),
    #[error("reports come from different cases or scenario sets")]
    MixedProvenance,
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmpConvention {
    /// Probability-weighted over scenarios.
    #[default]
    Expected,
    /// Plain sum over scenarios.
    Unweighted,
}

impl FromStr for LmpConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expected" => Ok(Self::Expected),
            "unweighted" => Ok(Self::Unweighted),
            other => Err(format!("unknown LMP convention {other:?}")),
        }
    }
}

/// Sum over scenarios, buses and intervals of demand times price.
pub fn load_payment(
    lmp: &LmpSurface,
    eff: &EffectiveCase,
    scen: &ScenarioSet,
    convention: LmpConvention,
) -> f64 {
    let dt = eff.options.interval_hours;
    let demand = crate::model::scenario_demand(eff, scen).unwrap_or_else(|_| vec![eff.demand.clone(); scen.len()]);
    let mut total = 0.0;
    for (s, surface) in lmp.lmp.iter().enumerate() {
        let weight = match convention {
            LmpConvention::Expected => scen.probabilities[s],
            LmpConvention::Unweighted => 1.0,
        };
        for (n, row) in surface.iter().enumerate() {
            for (t, price) in row.iter().enumerate() {
                total += weight * demand[s][n][t] * price * dt;
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CongestionCounts {
    /// Distinct branches congested at least once, per scenario.
    pub distinct: Vec<usize>,
    /// Congested branch-intervals, per scenario.
    pub line_hours: Vec<usize>,
}

pub fn is_congested(flow_mw: f64, limit_mw: f64, eps: f64) -> bool {
    flow_mw.abs() >= (1.0 - eps) * limit_mw
}

pub fn congestion_count(sol: &Solution, eff: &EffectiveCase, eps: f64) -> CongestionCounts {
    let mut counts = CongestionCounts {
        distinct: Vec::new(),
        line_hours: Vec::new(),
    };
    for d in &sol.scenarios {
        let mut distinct = 0;
        let mut hours = 0;
        for (k, branch) in eff.branches.iter().enumerate() {
            let n = d.flow_mw[k]
                .iter()
                .filter(|f| is_congested(**f, branch.flow_limit_mw, eps))
                .count();
            hours += n;
            distinct += usize::from(n > 0);
        }
        counts.distinct.push(distinct);
        counts.line_hours.push(hours);
    }
    counts
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CurtailmentTotals {
    pub solar_mwh: f64,
    pub wind_mwh: f64,
}

impl CurtailmentTotals {
    pub fn total(&self) -> f64 {
        self.solar_mwh + self.wind_mwh
    }
}

pub fn curtailment_totals(sol: &Solution, eff: &EffectiveCase) -> Vec<CurtailmentTotals> {
    let dt = eff.options.interval_hours;
    sol.scenarios
        .iter()
        .map(|d| {
            let mut c = CurtailmentTotals::default();
            for (r, unit) in eff.renewables.iter().enumerate() {
                let e: f64 = d.curtailment_mw[r].iter().sum::<f64>() * dt;
                match unit.kind {
                    RenewableKind::Solar => c.solar_mwh += e,
                    RenewableKind::Wind => c.wind_mwh += e,
                }
            }
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPayment {
    pub expected: f64,
    pub unweighted: f64,
}

impl LoadPayment {
    pub fn get(&self, convention: LmpConvention) -> f64 {
        match convention {
            LmpConvention::Expected => self.expected,
            LmpConvention::Unweighted => self.unweighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationalCost {
    pub breakdown: ObjectiveBreakdown,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub case_hash: String,
    pub scenario_hash: String,
    pub status: SolveStatus,
    pub mip_gap: f64,
    pub operational_cost: OperationalCost,
    pub load_payment: LoadPayment,
    pub congestion_counts: Vec<usize>,
    pub congestion_line_hours: Vec<usize>,
    pub curtailment: Vec<CurtailmentTotals>,
}

pub fn compute_metrics(
    label: &str,
    sol: &Solution,
    lmp: &LmpSurface,
    eff: &EffectiveCase,
    scen: &ScenarioSet,
    eps: f64,
) -> Result<MetricsReport, MetricsError> {
    let breakdown = crate::model::evaluate_objective(sol, eff, scen)?;
    let congestion = congestion_count(sol, eff, eps);
    Ok(MetricsReport {
        variant: label.to_string(),
        case_hash: eff.case_hash.clone(),
        scenario_hash: crate::content_hash(scen.to_json().as_bytes()),
        status: sol.status,
        mip_gap: sol.mip_gap,
        operational_cost: OperationalCost {
            total: breakdown.total(),
            breakdown,
        },
        load_payment: LoadPayment {
            expected: load_payment(lmp, eff, scen, LmpConvention::Expected),
            unweighted: load_payment(lmp, eff, scen, LmpConvention::Unweighted),
        },
        congestion_counts: congestion.distinct,
        congestion_line_hours: congestion.line_hours,
        curtailment: curtailment_totals(sol, eff),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Metric value; `None` when the variant has no result.
    pub value: Option<f64>,
    /// Percent of the baseline value; `None` when unavailable or the baseline is zero.
    pub percent: Option<f64>,
    /// Set when the baseline is zero and the value is shown as-is.
    pub absolute: bool,
}

impl Cell {
    fn new(value: Option<f64>, baseline: f64) -> Self {
        match value {
            None => Self {
                value: None,
                percent: None,
                absolute: false,
            },
            Some(v) if baseline == 0.0 => Self {
                value: Some(v),
                percent: None,
                absolute: true,
            },
            Some(v) => Self {
                value: Some(v),
                percent: Some(100.0 * v / baseline),
                absolute: false,
            },
        }
    }

    fn render_percent(&self) -> String {
        match (self.value, self.percent) {
            (None, _) => "NA".into(),
            (Some(_), Some(p)) => format!("{p:.2}%"),
            (Some(v), None) => format!("{}", round_display(v)),
        }
    }

    fn render_value(&self) -> String {
        match self.value {
            None => "NA".into(),
            Some(v) => format!("{}", round_display(v)),
        }
    }
}

/// Rounds to 6 decimals so solver noise does not leak into text output.
fn round_display(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub metric: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    fn csv(&self, render: impl Fn(&Cell) -> String) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "metric,{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.cells.iter().map(&render).collect();
            let _ = writeln!(out, "{},{}", row.metric, cells.join(","));
        }
        out
    }

    pub fn cell(&self, metric: &str, column: &str) -> Option<&Cell> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.metric == metric)?.cells.get(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedClaims {
    /// Percent-of-baseline cost of PT minus that of VTL, in points.
    pub cost_reduction_vtl_over_pt_points: Option<f64>,
    /// Per scenario: (count(BESS) - count(VTL)) / count(Base), in percent.
    pub congestion_relief_vtl_over_bess_percent: Vec<Option<f64>>,
    pub max_congestion_relief_vtl_over_bess_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub convention: LmpConvention,
    pub cost_payment: Table,
    pub congestion: Table,
    pub curtailment: Table,
    pub derived: DerivedClaims,
}

impl ComparisonTable {
    pub fn cost_payment_csv(&self) -> String {
        self.cost_payment.csv(Cell::render_percent)
    }

    pub fn congestion_csv(&self) -> String {
        self.congestion.csv(Cell::render_value)
    }

    pub fn curtailment_csv(&self) -> String {
        self.curtailment.csv(Cell::render_percent)
    }
}

/// A variant's label with its metrics, or `None` when the run failed.
pub type Entry<'a> = (&'a str, Option<&'a MetricsReport>);

/// Normalizes every metric against the baseline column.
pub fn compare_variants(
    entries: &[Entry<'_>],
    baseline: &str,
    convention: LmpConvention,
) -> Result<ComparisonTable, MetricsError> {
    let base = entries
        .iter()
        .find(|(l, _)| *l == baseline)
        .and_then(|(_, r)| *r)
        .ok_or_else(|| MetricsError::BaselineMissing(baseline.to_string()))?;
    let available: Vec<&MetricsReport> = entries.iter().filter_map(|(_, r)| *r).collect();
    if available
        .iter()
        .any(|r| r.case_hash != base.case_hash || r.scenario_hash != base.scenario_hash)
    {
        return Err(MetricsError::MixedProvenance);
    }
    let columns: Vec<String> = entries.iter().map(|(l, _)| l.to_string()).collect();
    let row = |metric: String, f: &dyn Fn(&MetricsReport) -> f64| Row {
        cells: entries
            .iter()
            .map(|(_, r)| Cell::new(r.map(f), f(base)))
            .collect(),
        metric,
    };

    let cost_payment = Table {
        columns: columns.clone(),
        rows: vec![
            row("operational_cost".into(), &|r| r.operational_cost.total),
            row("load_payment".into(), &|r| r.load_payment.get(convention)),
        ],
    };
    let n_s = base.congestion_counts.len();
    let congestion = Table {
        columns: columns.clone(),
        rows: (0..n_s)
            .map(|s| {
                row(format!("scenario_{}", s + 1), &move |r| {
                    r.congestion_counts.get(s).copied().unwrap_or(0) as f64
                })
            })
            .collect(),
    };
    let curtailment = Table {
        columns,
        rows: (0..n_s)
            .map(|s| {
                row(format!("scenario_{}", s + 1), &move |r| {
                    r.curtailment.get(s).map_or(0.0, CurtailmentTotals::total)
                })
            })
            .collect(),
    };

    let derived = derive_claims(&cost_payment, &congestion, baseline);
    Ok(ComparisonTable {
        baseline: baseline.to_string(),
        convention,
        cost_payment,
        congestion,
        curtailment,
        derived,
    })
}

/// Headline comparisons computed from the cost and congestion tables.
pub fn derive_claims(cost_payment: &Table, congestion: &Table, baseline: &str) -> DerivedClaims {
    let pct = |col: &str| cost_payment.cell("operational_cost", col).and_then(|c| c.percent);
    let cost_reduction_vtl_over_pt_points = match (pct("pt"), pct("vtl")) {
        (Some(pt), Some(vtl)) => Some(pt - vtl),
        _ => None,
    };
    let relief: Vec<Option<f64>> = congestion
        .rows
        .iter()
        .map(|row| {
            let v = |col: &str| congestion.cell(&row.metric, col).and_then(|c| c.value);
            match (v(baseline), v("bess"), v("vtl")) {
                (Some(b), Some(bess), Some(vtl)) if b > 0.0 => Some(100.0 * (bess - vtl) / b),
                _ => None,
            }
        })
        .collect();
    let max = relief.iter().flatten().copied().reduce(f64::max);
    DerivedClaims {
        cost_reduction_vtl_over_pt_points,
        congestion_relief_vtl_over_bess_percent: relief,
        max_congestion_relief_vtl_over_bess_percent: max,
    }
}

/// Long-format rows `variant,scenario,branch,hour,loading_fraction` (no header).
pub fn branch_loading_rows(label: &str, sol: &Solution, eff: &EffectiveCase) -> String {
    let mut out = String::new();
    for (s, d) in sol.scenarios.iter().enumerate() {
        for (k, branch) in eff.branches.iter().enumerate() {
            for (t, f) in d.flow_mw[k].iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{label},{},{},{},{:.6}",
                    s + 1,
                    branch.id,
                    t + 1,
                    f.abs() / branch.flow_limit_mw
                );
            }
        }
    }
    out
}

pub const BRANCH_LOADING_HEADER: &str = "variant,scenario,branch,hour,loading_fraction\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticDiagnostics {
    /// Wait-and-see: probability-weighted per-scenario deterministic optima.
    pub ws: f64,
    /// Recourse problem: the stochastic optimum.
    pub rp: f64,
    /// Expected result of using the expected-value commitment; `None` when infeasible.
    pub eev: Option<f64>,
    pub vss: Option<f64>,
    pub evpi: f64,
    pub eev_infeasible: bool,
    /// WS <= RP <= EEV held within `tolerance`.
    pub bounds_hold: bool,
    pub tolerance: f64,
}

/// Compares the stochastic commitment against per-scenario and expected-value ones.
pub fn stochastic_diagnostics(
    case: &CaseFile,
    scen: &ScenarioSet,
    variant: ModelVariant,
    opts: &SolverOptions,
) -> Result<StochasticDiagnostics, MetricsError> {
    let eff = apply_variant(case, variant)?;
    let rp_model = build_model(&eff, scen)?;
    let rp = solve_milp(&rp_model, opts)?.objective;

    let mut ws = 0.0;
    for (s, p) in scen.probabilities.iter().enumerate() {
        let m = build_model(&eff, &scen.single(s))?;
        ws += p * solve_milp(&m, opts)?.objective;
    }

    let ev_model = build_model(&eff, &scen.expected())?;
    let ev_sol = solve_milp(&ev_model, opts)?;
    let first_stage: Vec<_> = rp_model
        .variables
        .iter()
        .enumerate()
        .filter_map(|(i, v)| match v.key {
            VarKey::Commit { .. } | VarKey::Startup { .. } => {
                Some((crate::model::VarId(i), ev_sol.value(&v.key).unwrap_or(0.0)))
            }
            _ => None,
        })
        .collect();
    let eev = match solve_milp(&rp_model.with_fixed(&first_stage), opts) {
        Ok(sol) => Some(sol.objective),
        Err(SolverError::Infeasible) => None,
        Err(e) => return Err(e.into()),
    };

    let tolerance = 1e-6 + opts.relative_mip_gap * rp.abs().max(1.0);
    let vss = eev.map(|e| e - rp);
    let evpi = rp - ws;
    let bounds_hold = evpi >= -tolerance && vss.is_none_or(|v| v >= -tolerance);
    if !bounds_hold {
        log::warn!("stochastic bounds violated: ws={ws} rp={rp} eev={eev:?}");
    }
    Ok(StochasticDiagnostics {
        ws,
        rp,
        eev,
        vss,
        evpi,
        eev_infeasible: eev.is_none(),
        bounds_hold,
        tolerance,
    })
}

impl StochasticDiagnostics {
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{}", round_display(x)));
        format!(
            "metric,value\nws,{}\nrp,{}\neev,{}\nvss,{}\nevpi,{}\n",
            round_display(self.ws),
            round_display(self.rp),
            opt(self.eev),
            opt(self.vss),
            round_display(self.evpi)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTables {
    pub cost_payment: Table,
    pub congestion: Table,
    pub curtailment: Table,
    pub diagnostics: Option<StochasticDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema: String,
    pub baseline: String,
    pub convention: LmpConvention,
    pub tables: ReportTables,
    pub derived_claims: DerivedClaims,
}

impl ReportBundle {
    pub fn new(table: &ComparisonTable, diagnostics: Option<StochasticDiagnostics>) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            baseline: table.baseline.clone(),
            convention: table.convention,
            tables: ReportTables {
                cost_payment: table.cost_payment.clone(),
                congestion: table.congestion.clone(),
                curtailment: table.curtailment.clone(),
                diagnostics,
            },
            derived_claims: table.derived.clone(),
        }
    }
}
