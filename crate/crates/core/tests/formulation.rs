mod common;

use common::{case, rel_diff, scenarios};
use vtl_scuc::case::{ConstraintFamily, ModelVariant};
use vtl_scuc::metrics::{curtailment_totals, stochastic_diagnostics};
use vtl_scuc::model::{Solution, VarKey};
use vtl_scuc::solver::{brute_force_oracle, DEFAULT_ORACLE_LIMIT};
use vtl_scuc::{apply_variant, build_model, check_solution_feasibility, solve_milp, MilpModel, SolverOptions};

const SMALL: &[(&str, &[ModelVariant])] = &[
    ("oracle_1bus", &[ModelVariant::Base]),
    ("oracle_2bus_congested", &[ModelVariant::Base, ModelVariant::Pt]),
    ("oracle_3bus_stoch", &[ModelVariant::Base]),
    ("oracle_storage", &ModelVariant::ALL),
    ("oracle_3bus_vtl", &ModelVariant::ALL),
];

fn solve(name: &str, v: ModelVariant) -> (MilpModel, Solution) {
    let c = case(name);
    let m = build_model(&apply_variant(&c, v).unwrap(), &scenarios(name)).unwrap();
    let sol = solve_milp(&m, &SolverOptions::default()).unwrap();
    (m, sol)
}

#[test]
fn small_cases_match_enumeration() {
    for (name, variants) in SMALL {
        for &v in *variants {
            let (m, sol) = solve(name, v);
            assert!(m.binary_ids().len() <= DEFAULT_ORACLE_LIMIT, "{name}/{v}");
            let oracle = brute_force_oracle(&m, DEFAULT_ORACLE_LIMIT, &SolverOptions::default()).unwrap();
            assert!(
                rel_diff(sol.objective, oracle.objective) <= 1e-6,
                "{name}/{v}: {} vs {}",
                sol.objective,
                oracle.objective
            );
        }
    }
}

#[test]
fn every_solution_passes_the_verifier() {
    for (name, variants) in SMALL {
        for &v in *variants {
            let (m, sol) = solve(name, v);
            let r = check_solution_feasibility(&sol, &m, 1e-6);
            assert!(r.passed, "{name}/{v}: {r:?}");
            assert!(r.soc_recursion_max <= 1e-9, "{name}/{v}: {}", r.soc_recursion_max);
            assert!(r.flow_angle_max <= 1e-8, "{name}/{v}: {}", r.flow_angle_max);
        }
    }
}

#[test]
fn storage_variants_are_cheaper() {
    for name in ["oracle_storage", "oracle_3bus_vtl"] {
        let obj = |v| solve(name, v).1.objective;
        let (base, bess, vtl) = (obj(ModelVariant::Base), obj(ModelVariant::Bess), obj(ModelVariant::Vtl));
        assert!(bess <= vtl + 1e-6, "{name}: bess {bess} vtl {vtl}");
        assert!(vtl <= base + 1e-6, "{name}: vtl {vtl} base {base}");
    }
}

#[test]
fn vtl_verifier_catches_simultaneous_charging() {
    let (m, mut sol) = solve("oracle_storage", ModelVariant::Vtl);
    for e in 0..2 {
        sol.scenarios[0].charge_mode[e][0] = 1;
        sol.scenarios[0].discharge_mode[e][0] = 0;
    }
    let r = check_solution_feasibility(&sol, &m, 1e-6);
    assert!(!r.passed);
    assert!(r.violation(ConstraintFamily::Vtl) >= 1.0 - 1e-9);
}

#[test]
fn verifier_catches_energy_tampering() {
    let (m, mut sol) = solve("oracle_storage", ModelVariant::Bess);
    sol.scenarios[0].energy_mwh[0][1] += 5.0;
    let r = check_solution_feasibility(&sol, &m, 1e-6);
    assert!(!r.passed);
    assert!(r.soc_recursion_max >= 5.0 - 1e-9);
    assert!(r.violation(ConstraintFamily::Soc) > 1.0);
}

#[test]
fn verifier_catches_missing_startup() {
    let (m, mut sol) = solve("oracle_1bus", ModelVariant::Base);
    let (g, t) = sol
        .startup
        .iter()
        .enumerate()
        .find_map(|(g, row)| row.iter().position(|&b| b == 1).map(|t| (g, t)))
        .expect("some unit starts");
    sol.startup[g][t] = 0;
    let r = check_solution_feasibility(&sol, &m, 1e-6);
    assert!(!r.passed);
    assert!(r.violation(ConstraintFamily::Uc) > 0.5);
}

#[test]
fn balance_and_angles_are_consistent() {
    let name = "oracle_3bus_vtl";
    let c = case(name);
    let eff = apply_variant(&c, ModelVariant::Vtl).unwrap();
    let (_, sol) = solve(name, ModelVariant::Vtl);
    let avail = vtl_scuc::model::availability(&eff, &scenarios(name)).unwrap();
    for (s, d) in sol.scenarios.iter().enumerate() {
        for t in 0..eff.periods {
            for n in 0..eff.buses.len() {
                let mut inj = 0.0;
                for (g, &b) in eff.gen_bus.iter().enumerate() {
                    if b == n {
                        inj += d.generation_mw[g][t];
                    }
                }
                for (r, &b) in eff.renewable_bus.iter().enumerate() {
                    if b == n {
                        inj += avail[s][r][t] - d.curtailment_mw[r][t];
                    }
                }
                for (e, &b) in eff.storage_bus.iter().enumerate() {
                    if b == n {
                        inj += d.discharge_mw[e][t] - d.charge_mw[e][t];
                    }
                }
                for (k, &(f, to)) in eff.branch_ends.iter().enumerate() {
                    if f == n {
                        inj -= d.flow_mw[k][t];
                    }
                    if to == n {
                        inj += d.flow_mw[k][t];
                    }
                }
                assert!((inj - eff.demand[n][t]).abs() <= 1e-6, "bus {n} t {t} s {s}");
            }
            for (k, &(f, to)) in eff.branch_ends.iter().enumerate() {
                let x = eff.branches[k].reactance_pu;
                let implied = eff.options.base_mva / x * (d.angle_rad[f][t] - d.angle_rad[to][t]);
                assert!((implied - d.flow_mw[k][t]).abs() <= 1e-6);
            }
            assert_eq!(d.angle_rad[eff.reference_bus][t], 0.0);
        }
    }
}

#[test]
fn one_commitment_schedule_across_scenarios() {
    let (m, sol) = solve("oracle_3bus_stoch", ModelVariant::Base);
    assert_eq!(m.scenarios(), 2);
    assert_eq!(sol.commitment.len(), 2);
    assert_eq!(m.count_vars(|k| matches!(k, VarKey::Commit { .. })), 2 * 2);
    let json = serde_json::to_value(&sol).unwrap();
    assert!(json["scenarios"][0].get("commitment").is_none());
}

#[test]
fn low_renewable_scenario_needs_no_curtailment() {
    let name = "oracle_storage";
    for v in ModelVariant::ALL {
        let c = case(name);
        let eff = apply_variant(&c, v).unwrap();
        let (_, sol) = solve(name, v);
        let curt = curtailment_totals(&sol, &eff);
        assert!(curt[1].total().abs() <= 1e-6, "{v}: {:?}", curt[1]);
    }
}

#[test]
fn stochastic_bounds_and_positive_vss() {
    let c = case("stochastic_value");
    let d = stochastic_diagnostics(&c, &scenarios("stochastic_value"), ModelVariant::Base, &SolverOptions::default()).unwrap();
    assert!(d.bounds_hold, "{d:?}");
    assert!(d.ws <= d.rp + 1e-6);
    assert!(d.rp <= d.eev.unwrap() + 1e-6);
    assert!(d.vss.unwrap() > 1e-3, "{d:?}");
}

#[test]
fn stochastic_diagnostics_collapse_for_identical_scenarios() {
    let c = case("stochastic_value");
    let mut scen = scenarios("stochastic_value");
    scen.scenarios[1] = scen.scenarios[0].clone();
    let d = stochastic_diagnostics(&c, &scen, ModelVariant::Base, &SolverOptions::default()).unwrap();
    assert!(d.vss.unwrap().abs() <= d.tolerance);
    assert!(d.evpi.abs() <= d.tolerance);

    let single = scenarios("stochastic_value").single(0);
    let d = stochastic_diagnostics(&c, &single, ModelVariant::Base, &SolverOptions::default()).unwrap();
    assert!((d.ws - d.rp).abs() <= d.tolerance);
    assert!((d.eev.unwrap() - d.rp).abs() <= d.tolerance);
}

#[test]
fn scenario_load_overrides_enter_balance_and_payment() {
    let c = case("toy1");
    let eff = apply_variant(&c, ModelVariant::Base).unwrap();
    let mut scen = vtl_scuc::ScenarioSet::deterministic(&c);
    let mut high = scen.scenarios[0].clone();
    high.insert("L1".into(), vec![120.0; 24]);
    scen.scenarios[0].insert("L1".into(), vec![100.0; 24]);
    scen.scenarios.push(high);
    scen.probabilities = vec![0.5, 0.5];
    assert!(vtl_scuc::validate_scenario_set(&scen, &c).is_empty());

    let m = build_model(&eff, &scen).unwrap();
    let (sol, duals) = vtl_scuc::solver::solve_milp_with_duals(&m, &SolverOptions::default()).unwrap();
    // 10 $/MWh over 24 h at 100 and 120 MW, equally weighted.
    assert!((sol.objective - (0.5 * 24_000.0 + 0.5 * 28_800.0)).abs() < 1e-6);
    let lmp = vtl_scuc::extract_lmp(&duals, &scen.probabilities, 1.0).unwrap();
    let paid = vtl_scuc::metrics::load_payment(&lmp, &eff, &scen, vtl_scuc::LmpConvention::Expected);
    assert!((paid - 26_400.0).abs() < 1e-6);

    let ev = build_model(&eff, &scen.expected()).unwrap();
    let ev_sol = solve_milp(&ev, &SolverOptions::default()).unwrap();
    assert!((ev_sol.objective - 26_400.0).abs() < 1e-6);

    scen.scenarios[0].remove("L1");
    let report = vtl_scuc::validate_scenario_set(&scen, &c);
    assert!(report.has_rule(vtl_scuc::case::EntityKind::LoadProfile, "load override present in every scenario or none"));
}

#[test]
fn load_and_renewable_ids_must_differ() {
    let mut c = case("oracle_3bus_stoch");
    c.load_profiles[0].id = c.renewables[0].id.clone();
    for b in &mut c.buses {
        if b.load_profile_ref.is_some() {
            b.load_profile_ref = Some(c.renewables[0].id.clone());
        }
    }
    assert!(vtl_scuc::validate_case(&c).has_rule(vtl_scuc::case::EntityKind::LoadProfile, "id distinct from renewable ids"));
}
