//! Command implementations behind the `vtl-scuc` binary. Each `cmd_*` returns the
//! process exit code: 0 success, 1 error, 2 infeasible.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use vtl_scuc::metrics::{
    branch_loading_rows, compare_variants, stochastic_diagnostics, ComparisonTable, ReportBundle,
    BRANCH_LOADING_HEADER,
};
use vtl_scuc::solver::{first_infeasible_family, solve_milp_with_duals, SolverError};
use vtl_scuc::{
    apply_variant, build_model, compute_metrics, content_hash, extract_lmp, generate_scenarios,
    validate_case, validate_scenario_set, CaseFile, LmpConvention, LmpSurface, MetricsReport,
    ModelVariant, ScenarioSet, SigmaSchedule, Solution, SolverOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

pub const SOLUTION_SCHEMA: &str = "vtl-scuc-solution/1";
pub const MANIFEST_SCHEMA: &str = "vtl-scuc-manifest/1";

pub const SOLUTION_FILE: &str = "solution.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Where scenario data comes from. Exactly one per run.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    File(PathBuf),
    Generate {
        count: usize,
        seed: u64,
        probabilities: Option<Vec<f64>>,
    },
    /// The case's own renewable forecast as a single scenario.
    Forecast,
}

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub solver: SolverOptions,
    /// Overrides the case's congestion tolerance when set.
    pub congestion_eps: Option<f64>,
    pub lmp_convention: LmpConvention,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            congestion_eps: None,
            lmp_convention: LmpConvention::Expected,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: PathBuf,
    pub variant: ModelVariant,
    pub scenarios: ScenarioSource,
    pub out: PathBuf,
    pub settings: Settings,
    pub dump_model: bool,
}

/// Self-contained record of one solve: inputs, solution and prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionBundle {
    pub schema: String,
    pub variant: ModelVariant,
    pub case: CaseFile,
    pub scenarios: ScenarioSet,
    pub solution: Solution,
    pub lmp: LmpSurface,
}

impl SolutionBundle {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let bundle: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if bundle.schema != SOLUTION_SCHEMA {
            bail!("{}: unsupported schema {:?}", path.display(), bundle.schema);
        }
        Ok(bundle)
    }

    /// Recomputes the metrics report from the stored solution.
    pub fn metrics(&self, eps: Option<f64>) -> Result<MetricsReport> {
        let eff = apply_variant(&self.case, self.variant)?;
        let eps = eps.unwrap_or(self.case.options.congestion_epsilon);
        Ok(compute_metrics(
            self.variant.label(),
            &self.solution,
            &self.lmp,
            &eff,
            &self.scenarios,
            eps,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub variant: ModelVariant,
    pub case_hash: String,
    pub scenario_hash: String,
    pub seed: Option<u64>,
    pub solver: SolverOptions,
    pub status: vtl_scuc::model::SolveStatus,
    pub objective: f64,
    pub mip_gap: f64,
    pub wall_time_seconds: f64,
}

/// Writes through a sibling temporary file so readers never see partial output.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_case(path: &Path) -> Result<CaseFile> {
    CaseFile::load(path).with_context(|| format!("loading case {}", path.display()))
}

pub fn resolve_scenarios(case: &CaseFile, source: &ScenarioSource) -> Result<ScenarioSet> {
    let set = match source {
        ScenarioSource::File(path) => {
            ScenarioSet::load(path).with_context(|| format!("loading scenarios {}", path.display()))?
        }
        ScenarioSource::Generate {
            count,
            seed,
            probabilities,
        } => generate_scenarios(case, &SigmaSchedule::default(), *count, *seed, probabilities.as_deref())?,
        ScenarioSource::Forecast => ScenarioSet::deterministic(case),
    };
    let report = validate_scenario_set(&set, case);
    if !report.is_empty() {
        bail!("scenario set does not fit the case: {report}");
    }
    Ok(set)
}

/// Outcome of solving one variant.
pub enum VariantOutcome {
    Solved(Box<SolutionBundle>, Box<MetricsReport>),
    Infeasible(Option<vtl_scuc::case::ConstraintFamily>),
}

/// Solves one variant and writes solution, metrics and manifest into `out`.
pub fn solve_variant(
    case: &CaseFile,
    scen: &ScenarioSet,
    variant: ModelVariant,
    settings: &Settings,
    out: &Path,
    dump_model: bool,
) -> Result<VariantOutcome> {
    let started = Instant::now();
    let eff = apply_variant(case, variant)?;
    let model = build_model(&eff, scen)?;
    if dump_model {
        write_atomic(&out.join("model.txt"), model.dump().as_bytes())?;
    }
    info!(
        "{variant}: {} variables, {} rows",
        model.variables.len(),
        model.constraints.len()
    );
    let (solution, duals) = match solve_milp_with_duals(&model, &settings.solver) {
        Ok(r) => r,
        Err(SolverError::Infeasible) => {
            let family = first_infeasible_family(&model, &settings.solver)?;
            return Ok(VariantOutcome::Infeasible(family));
        }
        Err(e) => return Err(e.into()),
    };
    let lmp = extract_lmp(&duals, &scen.probabilities, eff.options.interval_hours)?;
    let wall = started.elapsed().as_secs_f64();

    let bundle = SolutionBundle {
        schema: SOLUTION_SCHEMA.into(),
        variant,
        case: case.clone(),
        scenarios: scen.clone(),
        solution,
        lmp,
    };
    let metrics = bundle.metrics(settings.congestion_eps)?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        variant,
        case_hash: metrics.case_hash.clone(),
        scenario_hash: metrics.scenario_hash.clone(),
        seed: scen.provenance.as_ref().map(|p| p.seed),
        solver: settings.solver.clone(),
        status: bundle.solution.status,
        objective: bundle.solution.objective,
        mip_gap: bundle.solution.mip_gap,
        wall_time_seconds: wall,
    };
    write_json(&out.join(SOLUTION_FILE), &bundle)?;
    write_json(&out.join(METRICS_FILE), &metrics)?;
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(VariantOutcome::Solved(Box::new(bundle), Box::new(metrics)))
}

fn report_error(e: &anyhow::Error) -> i32 {
    // Library errors often embed their source in their own message; print each text once.
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !parts.iter().any(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    eprintln!("error: {}", parts.join(": "));
    EXIT_ERROR
}

pub fn cmd_solve(cfg: &RunConfig) -> i32 {
    let run = || -> Result<i32> {
        let case = load_case(&cfg.case)?;
        let scen = resolve_scenarios(&case, &cfg.scenarios)?;
        match solve_variant(&case, &scen, cfg.variant, &cfg.settings, &cfg.out, cfg.dump_model)? {
            VariantOutcome::Solved(bundle, metrics) => {
                println!(
                    "{}: {:?}, objective {:.6}, cost {:.6}",
                    cfg.variant, bundle.solution.status, bundle.solution.objective, metrics.operational_cost.total
                );
                Ok(EXIT_OK)
            }
            VariantOutcome::Infeasible(family) => {
                eprintln!("{}", infeasible_message(cfg.variant, family));
                Ok(EXIT_INFEASIBLE)
            }
        }
    };
    run().unwrap_or_else(|e| report_error(&e))
}

fn infeasible_message(variant: ModelVariant, family: Option<vtl_scuc::case::ConstraintFamily>) -> String {
    match family {
        Some(f) => format!("{variant}: infeasible; first infeasible family: {}", f.tag()),
        None => format!("{variant}: infeasible; no single family isolated"),
    }
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub case: PathBuf,
    pub scenarios: ScenarioSource,
    pub variants: Vec<ModelVariant>,
    pub baseline: String,
    pub out: PathBuf,
    pub settings: Settings,
    /// Also compute WS/RP/EEV diagnostics for the baseline variant.
    pub diagnostics: bool,
}

/// Writes the three comparison tables, the branch loading file and `report.json`.
fn write_tables(
    out: &Path,
    table: &ComparisonTable,
    loading: &str,
    diagnostics: Option<vtl_scuc::metrics::StochasticDiagnostics>,
) -> Result<()> {
    write_atomic(&out.join("cost_payment.csv"), table.cost_payment_csv().as_bytes())?;
    write_atomic(&out.join("congestion.csv"), table.congestion_csv().as_bytes())?;
    write_atomic(&out.join("curtailment.csv"), table.curtailment_csv().as_bytes())?;
    write_atomic(&out.join("branch_loading.csv"), loading.as_bytes())?;
    if let Some(d) = &diagnostics {
        write_atomic(&out.join("stochastic.csv"), d.csv().as_bytes())?;
    }
    write_json(&out.join("report.json"), &ReportBundle::new(table, diagnostics))
}

fn run_dir(out: &Path, label: &str, used: &mut Vec<String>) -> PathBuf {
    let mut name = label.to_string();
    let mut i = 2;
    while used.contains(&name) {
        name = format!("{label}_{i}");
        i += 1;
    }
    used.push(name.clone());
    out.join("runs").join(name)
}

pub fn cmd_compare(cfg: &CompareConfig) -> i32 {
    let run = || -> Result<i32> {
        if cfg.variants.len() < 2 {
            bail!("compare needs at least two variants");
        }
        let case = load_case(&cfg.case)?;
        let report = validate_case(&case);
        if !report.is_empty() {
            bail!("invalid case: {report}");
        }
        let scen = resolve_scenarios(&case, &cfg.scenarios)?;

        let mut used = Vec::new();
        let mut results: Vec<(String, Option<MetricsReport>)> = Vec::new();
        let mut loading = String::from(BRANCH_LOADING_HEADER);
        for &variant in &cfg.variants {
            let dir = run_dir(&cfg.out, variant.label(), &mut used);
            let outcome = solve_variant(&case, &scen, variant, &cfg.settings, &dir, false);
            let metrics = match outcome {
                Ok(VariantOutcome::Solved(bundle, metrics)) => {
                    let eff = apply_variant(&case, variant)?;
                    loading.push_str(&branch_loading_rows(variant.label(), &bundle.solution, &eff));
                    println!(
                        "{variant}: {:?}, cost {:.6}",
                        bundle.solution.status, metrics.operational_cost.total
                    );
                    Some(*metrics)
                }
                Ok(VariantOutcome::Infeasible(family)) => {
                    eprintln!("{}", infeasible_message(variant, family));
                    None
                }
                Err(e) => {
                    eprintln!("{variant}: failed: {e:#}");
                    None
                }
            };
            results.push((variant.label().to_string(), metrics));
        }

        let entries: Vec<_> = results.iter().map(|(l, m)| (l.as_str(), m.as_ref())).collect();
        let table = compare_variants(&entries, &cfg.baseline, cfg.settings.lmp_convention)?;
        let diagnostics = if cfg.diagnostics {
            let variant: ModelVariant = cfg.baseline.parse().map_err(anyhow::Error::msg)?;
            match stochastic_diagnostics(&case, &scen, variant, &cfg.settings.solver) {
                Ok(d) => Some(d),
                Err(e) => {
                    warn!("stochastic diagnostics unavailable: {e}");
                    None
                }
            }
        } else {
            None
        };
        write_tables(&cfg.out, &table, &loading, diagnostics)?;
        print_claims(&table);
        Ok(EXIT_OK)
    };
    run().unwrap_or_else(|e| report_error(&e))
}

fn print_claims(table: &ComparisonTable) {
    let d = &table.derived;
    if let Some(p) = d.cost_reduction_vtl_over_pt_points {
        println!("cost reduction of vtl over pt: {p:.2} points");
    }
    if let Some(p) = d.max_congestion_relief_vtl_over_bess_percent {
        println!("congestion relief of vtl over bess: up to {p:.2}%");
    }
}

#[derive(Debug, Clone)]
pub struct ReportConfig {
    pub runs: Vec<PathBuf>,
    pub baseline: String,
    pub out: PathBuf,
    pub settings: Settings,
}

/// Rebuilds the comparison tables from solution files without solving.
pub fn cmd_report(cfg: &ReportConfig) -> i32 {
    let run = || -> Result<i32> {
        let mut results = Vec::new();
        let mut loading = String::from(BRANCH_LOADING_HEADER);
        for dir in &cfg.runs {
            let bundle = SolutionBundle::load(&dir.join(SOLUTION_FILE))?;
            let metrics = bundle.metrics(cfg.settings.congestion_eps)?;
            let eff = apply_variant(&bundle.case, bundle.variant)?;
            loading.push_str(&branch_loading_rows(bundle.variant.label(), &bundle.solution, &eff));
            results.push((bundle.variant.label().to_string(), Some(metrics)));
        }
        let entries: Vec<_> = results.iter().map(|(l, m)| (l.as_str(), m.as_ref())).collect();
        let table = compare_variants(&entries, &cfg.baseline, cfg.settings.lmp_convention)?;
        write_tables(&cfg.out, &table, &loading, None)?;
        print_claims(&table);
        Ok(EXIT_OK)
    };
    run().unwrap_or_else(|e| report_error(&e))
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub case: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub probabilities: Option<Vec<f64>>,
    pub solar_sigma: Option<f64>,
    pub wind_sigma: Option<f64>,
    pub out: PathBuf,
}

pub fn cmd_gen_scenarios(cfg: &GenConfig) -> i32 {
    let run = || -> Result<i32> {
        let case = load_case(&cfg.case)?;
        let mut schedule = SigmaSchedule::default();
        if let Some(s) = cfg.solar_sigma {
            schedule.solar = vec![s; schedule.solar.len()];
        }
        if let Some(w) = cfg.wind_sigma {
            schedule.wind = vec![w; schedule.wind.len()];
        }
        if !schedule.is_valid() {
            bail!("standard deviations must be finite and non-negative");
        }
        let set = generate_scenarios(&case, &schedule, cfg.count, cfg.seed, cfg.probabilities.as_deref())?;
        write_atomic(&cfg.out, set.to_json().as_bytes())?;
        println!(
            "{} scenarios, hash {}",
            set.len(),
            content_hash(set.to_json().as_bytes())
        );
        Ok(EXIT_OK)
    };
    run().unwrap_or_else(|e| report_error(&e))
}

/// Checks a case and, optionally, a scenario file against it.
pub fn cmd_validate(case: &Path, scenarios: Option<&Path>) -> i32 {
    let run = || -> Result<i32> {
        let case = load_case(case)?;
        let mut report = validate_case(&case);
        if let Some(path) = scenarios {
            let set = ScenarioSet::load(path).with_context(|| format!("loading scenarios {}", path.display()))?;
            report.issues.extend(validate_scenario_set(&set, &case).issues);
        }
        if report.is_empty() {
            println!("{}: ok", case.name);
            Ok(EXIT_OK)
        } else {
            for issue in &report.issues {
                eprintln!("{issue}");
            }
            Ok(EXIT_ERROR)
        }
    };
    run().unwrap_or_else(|e| report_error(&e))
}
