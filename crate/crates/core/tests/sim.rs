mod common;

use common::{choose, fixture, interim, profiles, TestRng};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use setpoint_core::fairness::{FairnessProblem, PriorSet};
use setpoint_core::mechanism::{
    ComfortType, MechanismParams, OccupantId, OutcomeKind, TypeDistribution, ValuationTable,
};
use setpoint_core::session::Phase;
use setpoint_core::sim::{
    audit_scenario, baseline_compare, baseline_csv, budget_audit, budget_audit_mechanism,
    corrupted_beta, efficiency_audit, ic_audit, occupants_csv, price_grid, price_sweep,
    price_sweep_csv, rounds_csv, run_scenario, sample_profile, Aggregates, AuditDepth, Policy,
    PriorGenerator, ScenarioSpec,
};
use setpoint_core::{AgvMechanism, CostVector, ExpectationMode};

fn t(id: u8) -> ComfortType {
    ComfortType::new(id).unwrap()
}

fn scenario(name: &str) -> ScenarioSpec {
    ScenarioSpec::load(fixture(&format!("scenarios/{name}"))).unwrap()
}

#[test]
fn point_mass_priors_give_a_fixed_profile() {
    let ids: Vec<OccupantId> = ["a", "b"].map(OccupantId::new).to_vec();
    let mut priors = PriorSet::new();
    priors.insert(ids[0].clone(), 24, TypeDistribution::point_mass(t(3)));
    priors.insert(ids[1].clone(), 24, TypeDistribution::point_mass(t(8)));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let p = sample_profile(&priors, &ids, 24, &mut rng).unwrap();
        assert_eq!(p.types(), vec![t(3), t(8)]);
    }
    assert!(sample_profile(&priors, &ids, 25, &mut rng).is_err());
}

#[test]
fn uniform_draws_are_uniform_and_reproducible() {
    let ids = vec![OccupantId::new("a")];
    let priors = PriorSet::filled(&ids, 24..=24, TypeDistribution::uniform());
    let draws = 100_000;
    let mut counts = [0usize; 9];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..draws {
        counts[sample_profile(&priors, &ids, 24, &mut rng).unwrap().types()[0].index()] += 1;
    }
    let p = 1.0 / 9.0;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!(
            (c as f64 - draws as f64 * p).abs() < 3.0 * sigma,
            "{counts:?}"
        );
    }
    let mut a = ChaCha8Rng::seed_from_u64(9);
    let mut b = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        assert_eq!(
            sample_profile(&priors, &ids, 24, &mut a).unwrap(),
            sample_profile(&priors, &ids, 24, &mut b).unwrap()
        );
    }
}

#[test]
fn fixed_setpoint_never_moves_or_charges() {
    let spec = scenario("skewed_warm.toml").with_policy(Policy::FixedSetpoint { setpoint_c: 22 });
    let r = run_scenario(&spec).unwrap();
    assert_eq!(r.rounds.len(), 50);
    for round in &r.rounds {
        assert_eq!(round.t0_c, 22);
        assert_eq!(round.outcome.setpoint_c, 22);
        assert!(round.payments.is_none());
    }
}

#[test]
fn all_prefer_current_stays_put() {
    let mut spec = scenario("symmetric_n3.toml");
    spec.session.phase = Phase::FairAllocation;
    spec.session.initial_temp = 24;
    spec.priors = PriorGenerator::Custom {
        priors: PriorSet::filled(
            &spec.session.occupancy,
            22..=26,
            TypeDistribution::point_mass(t(4)),
        ),
    };
    let r = run_scenario(&spec).unwrap();
    for round in &r.rounds {
        assert_eq!(round.outcome.kind, OutcomeKind::Stay);
        assert_eq!(round.t0_c, 24);
    }
}

#[test]
fn payment_rule_changes_payments_not_outcomes() {
    let spec = scenario("skewed_cool_n2.toml");
    let generalized = run_scenario(&spec).unwrap();
    let standard = run_scenario(&spec.with_policy(Policy::StandardAgv)).unwrap();
    let mut differ = false;
    for (g, s) in generalized.rounds.iter().zip(&standard.rounds) {
        assert_eq!(g.outcome, s.outcome);
        assert_eq!(g.types, s.types);
        if let (Some(pg), Some(ps)) = (&g.payments, &s.payments) {
            differ |= pg.0.iter().zip(&ps.0).any(|(a, b)| (a - b).abs() > 1e-9);
        }
    }
    assert!(differ);
}

#[test]
fn results_are_deterministic_and_aggregates_recompute() {
    let spec = scenario("symmetric_n3.toml");
    let a = run_scenario(&spec).unwrap();
    let b = run_scenario(&spec).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.config_hash.len(), 64);
    assert_eq!(
        Aggregates::from_rounds(&a.occupants, &a.rounds),
        a.aggregates
    );
    let c = run_scenario(&spec.with_seed(43)).unwrap();
    assert_ne!(a.config_hash, c.config_hash);
    assert_ne!(a.to_json(), c.to_json());
}

#[test]
fn shipped_scenarios_pass_their_audits() {
    for name in [
        "symmetric_n3.toml",
        "skewed_cool_n2.toml",
        "standard_n3.toml",
        "constant_costs_n3.toml",
    ] {
        let audit = audit_scenario(&scenario(name), 2_000).unwrap();
        assert!(audit.passed(), "{name}: {audit:?}");
        assert!(audit.budget.checked > 0, "{name}");
        assert!(audit.efficiency.checked > 0, "{name}");
        assert!(!audit.ic.is_empty(), "{name}");
    }
}

#[test]
fn pair_audit_matches_enumeration() {
    let table = ValuationTable::default();
    let priors = [TypeDistribution::uniform(); 2];
    let mut rng = TestRng::new(5);
    let costs = rng.costs(24);
    let params = MechanismParams::standard(2);
    let report = ic_audit(&priors, &params, &costs, &table, AuditDepth::Exhaustive).unwrap();
    assert!(report.passed());
    assert_eq!(report.deviations_checked, 2 * 9 * 8);
    let mut max_gain = f64::NEG_INFINITY;
    for i in 0..2 {
        for truth in ComfortType::ALL {
            let honest = interim(
                i,
                truth,
                truth,
                &priors,
                &params.alpha,
                &params.beta,
                &costs,
                &table,
            );
            for lie in ComfortType::ALL.into_iter().filter(|l| *l != truth) {
                max_gain = max_gain.max(
                    interim(
                        i,
                        truth,
                        lie,
                        &priors,
                        &params.alpha,
                        &params.beta,
                        &costs,
                        &table,
                    ) - honest,
                );
            }
        }
    }
    assert!(
        (report.max_gain - max_gain).abs() < 1e-12,
        "{} vs {max_gain}",
        report.max_gain
    );
}

#[test]
fn sampled_audit_is_within_noise_for_five() {
    let table = ValuationTable::default();
    let mut rng = TestRng::new(11);
    let priors: Vec<_> = (0..5).map(|_| rng.prior()).collect();
    let costs = rng.costs(24);
    let (alpha, beta) = rng.params(5);
    let params = MechanismParams::new(alpha, beta).unwrap();
    let report = ic_audit(
        &priors,
        &params,
        &costs,
        &table,
        AuditDepth::Sampled {
            samples: 4_000,
            seed: 3,
        },
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.worst.unwrap().standard_error > 0.0);
}

#[test]
fn corrupted_beta_breaks_the_budget_audit() {
    let table = ValuationTable::default();
    let priors = [TypeDistribution::uniform(); 3];
    let costs = CostVector::from_incremental(
        24,
        &[
            (OutcomeKind::Cooler, 0.03),
            (OutcomeKind::Stay, 0.0),
            (OutcomeKind::Warmer, -0.02),
        ],
    )
    .unwrap();
    let params = MechanismParams::standard(3);
    let all: Vec<Vec<ComfortType>> = profiles(&priors).into_iter().map(|(ty, _)| ty).collect();
    let good = AgvMechanism::new(
        &priors,
        &costs,
        &table,
        params.clone(),
        ExpectationMode::Exhaustive,
    )
    .unwrap();
    let report = budget_audit_mechanism(&good, all.iter().map(Vec::as_slice)).unwrap();
    assert!(report.passed() && report.checked == 729);

    let bad_params = corrupted_beta(&params);
    assert!(bad_params.validate().is_err());
    let bad = AgvMechanism::new_unchecked(
        &priors,
        &costs,
        &table,
        bad_params,
        ExpectationMode::Exhaustive,
    )
    .unwrap();
    let report = budget_audit_mechanism(&bad, all.iter().map(Vec::as_slice)).unwrap();
    assert!(!report.passed());
    assert!(report.max_imbalance > 1e-3);
}

#[test]
fn chosen_outcomes_are_efficient() {
    let table = ValuationTable::default();
    let r = run_scenario(&scenario("skewed_cool_n2.toml")).unwrap();
    let report = efficiency_audit(&r, &table).unwrap();
    assert!(report.passed() && report.checked == 20);
    for round in r.rounds.iter().filter(|r| r.phase == Phase::FairAllocation) {
        let costs = round.costs.as_ref().unwrap();
        assert_eq!(round.outcome.kind, choose(&round.types, costs, &table));
    }
    assert!(budget_audit(&r).passed());
}

#[test]
fn warm_group_saves_and_flat_costs_save_nothing() {
    let report = baseline_compare(&scenario("skewed_warm.toml"), &[42]).unwrap();
    assert!(report.groups[0].saving_pct > 0.0);
    assert_eq!(report.groups[0].rounds, 40);

    let report = baseline_compare(&scenario("constant_costs_n3.toml"), &[42, 43]).unwrap();
    for g in &report.groups {
        assert_eq!(g.saving_pct, 0.0);
        assert_eq!(g.generalized_cost, g.fixed_cost);
    }
}

#[test]
fn zero_price_benefit_is_the_comfort_optimum() {
    let problem = FairnessProblem::load(fixture("priors/price_sweep_n3.json")).unwrap();
    let sweep = price_sweep(&problem, &[0.0], 0).unwrap();
    let table = ValuationTable::default();
    let priors = problem
        .priors
        .for_occupants(&problem.occupants, problem.t0_c)
        .unwrap();
    let zero = CostVector::from_incremental(
        problem.t0_c,
        &[
            (OutcomeKind::Cooler, 0.0),
            (OutcomeKind::Stay, 0.0),
            (OutcomeKind::Warmer, 0.0),
        ],
    )
    .unwrap();
    let best: f64 = profiles(&priors)
        .into_iter()
        .map(|(types, p)| {
            let kind = choose(&types, &zero, &table);
            p * types.iter().map(|ty| table.value(*ty, kind)).sum::<f64>()
        })
        .sum();
    let common = sweep.points[0].common_benefit.unwrap();
    assert!(
        (common - best / 3.0).abs() < 1e-12,
        "{common} vs {}",
        best / 3.0
    );
}

#[test]
fn price_sweep_is_monotone_with_zero_spread() {
    let problem = FairnessProblem::load(fixture("priors/price_sweep_n3.json")).unwrap();
    let grid = price_grid(0.1, 1.0, 10);
    assert_eq!(grid.len(), 10);
    assert!((grid[9] - 1.0).abs() < 1e-15);
    let sweep = price_sweep(&problem, &grid, 0).unwrap();
    assert!(sweep.is_non_increasing(1e-12));
    for p in &sweep.points {
        assert!(p.spread <= 1e-6);
        assert!(p.standard_spread >= 0.0);
    }
    assert!(price_sweep(&problem, &[0.5, 0.2], 0).is_err());
}

#[test]
fn csv_exports_have_headers() {
    let r = run_scenario(&scenario("symmetric_n3.toml")).unwrap();
    let rounds = rounds_csv(&r).unwrap();
    assert!(rounds.starts_with("round,phase,t0_c,outcome,setpoint_c,"));
    assert_eq!(rounds.lines().count(), 31);
    let occ = occupants_csv(&r).unwrap();
    assert_eq!(occ.lines().next(), Some("occupant,mean_pi,var_pi"));
    assert_eq!(
        price_sweep_csv(None).unwrap(),
        "price_per_kwh,expected_net_benefit\n"
    );
    assert_eq!(
        baseline_csv(None).unwrap(),
        "seed,policy,energy_cost,mean_comfort\n"
    );
}

#[test]
fn scenario_errors_name_the_problem() {
    let err = ScenarioSpec::load(fixture("scenarios/missing.toml")).unwrap_err();
    assert!(err.to_string().contains("missing.toml"));
    let mut spec = scenario("symmetric_n3.toml");
    spec.policy = Policy::FixedSetpoint { setpoint_c: 30 };
    assert!(run_scenario(&spec).is_err());
    let bad: Result<ScenarioSpec, _> = toml::from_str(
        "rounds = 3\npolicy = { kind = \"generalized\" }\npriors = { generator = \"symmetric\" }",
    );
    assert!(bad.unwrap_err().to_string().contains("seed"));
}
