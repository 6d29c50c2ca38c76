use incentive_core::bandit::{read_survey_csv, simulate_survey, write_survey_csv};
use incentive_core::pipeline::{
    run_scenario, train_bandit, EquityMode, GroundTruth, Policy, Scenario, World,
};
use incentive_core::population::PopulationSpec;
use incentive_core::Cents;

fn small_world() -> World {
    World::synthetic(&PopulationSpec {
        count: 600,
        seed: 5,
        ..PopulationSpec::default()
    })
    .unwrap()
}

fn small_scenario(mode: EquityMode) -> Scenario {
    Scenario {
        budgets: vec![Cents::from_dollars(2e5), Cents::from_dollars(6e5)],
        survey_size: 300,
        equity_mode: mode,
        horizon_years: 4,
        ..Scenario::default()
    }
}

#[test]
fn every_mode_stays_within_budget() {
    let world = small_world();
    for mode in [
        EquityMode::Agnostic,
        EquityMode::Equity,
        EquityMode::OverTime,
        EquityMode::StrictEquityOverTime,
        EquityMode::RelaxedEquityOverTime,
    ] {
        let results = run_scenario(&world, &small_scenario(mode)).unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert_eq!(r.status_quo.spend, Cents::ZERO);
            for p in [Policy::Bandit, Policy::Optimal] {
                let o = r.policy(p);
                assert!(
                    o.spend <= r.budget,
                    "{mode} {p}: {} > {}",
                    o.spend,
                    r.budget
                );
                assert!(o.value >= r.status_quo.value, "{mode} {p}");
                assert_eq!(o.per_group_spend.values().copied().sum::<Cents>(), o.spend);
                assert_eq!(o.per_year.len(), if mode.is_multiyear() { 4 } else { 0 });
                assert!(o.adopters >= r.status_quo.adopters);
            }
        }
    }
}

#[test]
fn optimal_value_grows_with_budget() {
    let world = small_world();
    let results = run_scenario(&world, &small_scenario(EquityMode::Agnostic)).unwrap();
    assert!(results[1].optimal.value >= results[0].optimal.value);
    assert!(results[1].optimal.spend >= results[0].optimal.spend);
}

#[test]
fn survey_round_trips_through_csv() {
    let world = small_world();
    let s = small_scenario(EquityMode::Agnostic);
    let gt = GroundTruth::build(&world, &s).unwrap();
    let model = train_bandit(&world, &gt, &s).unwrap();
    let data = simulate_survey(
        &world.contexts,
        &model.arms,
        &gt.thresholds,
        &model.rewards,
        300,
        9,
        None,
    )
    .unwrap();
    assert_eq!(data.len(), 300);
    let mut buf = Vec::new();
    write_survey_csv(&data, &mut buf).unwrap();
    assert_eq!(read_survey_csv(buf.as_slice()).unwrap(), data);
}

#[test]
fn noise_changes_thresholds_but_not_determinism() {
    let world = small_world();
    let s = Scenario {
        threshold_noise: 0.2,
        ..small_scenario(EquityMode::Agnostic)
    };
    let a = run_scenario(&world, &s).unwrap();
    let b = run_scenario(&world, &s).unwrap();
    assert_eq!(a, b);
    let quiet = run_scenario(&world, &small_scenario(EquityMode::Agnostic)).unwrap();
    assert_ne!(a[1].optimal, quiet[1].optimal);
}
