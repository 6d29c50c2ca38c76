//! Exit-gate checks. Each test prints one verdict line; run with
//! `cargo test -p incentive-core --test acceptance -- --nocapture --test-threads 1`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{annuity_closed_form, best_subset_value, share_cap, verdict};
use incentive_core::acceptance::{acceptance_threshold, net_benefit, CostScenario, DiscountPreset};
use incentive_core::allocate::{
    solve_equity_knapsack, solve_knapsack, solve_multiyear_equity, AllocationPlan, EquitySpec,
    KnapsackItem, MultiYearEquityMode, MultiYearOptions,
};
use incentive_core::bandit::{
    best_arms, fit_lcb, lower_confidence_bound, required_samples, Arm, LcbAccumulator,
    SurveyResponse, DEFAULT_ALPHA, NUM_ARMS, TIERS,
};
use incentive_core::carbon::{EmissionsContext, GridTrace, BUNDLED_GRIDS};
use incentive_core::config::RunConfig;
use incentive_core::pipeline::{
    run_scenario, run_sweep, survey_size_sweep, EquityMode, RunResult, Scenario, World,
};
use incentive_core::population::{Context, Household, IncomeGroup, PopulationSpec, NUM_CONTEXTS};
use incentive_core::report::write_long_csv;
use incentive_core::retrofit::{Package, RetrofitOutcome};
use incentive_core::Cents;

const SHARES: [(IncomeGroup, f64); 3] = [
    (IncomeGroup::Low, 0.25),
    (IncomeGroup::Medium, 0.5),
    (IncomeGroup::High, 0.25),
];

fn shares() -> EquitySpec {
    EquitySpec::new(SHARES.into_iter().collect()).unwrap()
}

fn world() -> &'static World {
    static WORLD: OnceLock<World> = OnceLock::new();
    WORLD.get_or_init(|| World::synthetic(&PopulationSpec::default()).expect("default population"))
}

// ---------------------------------------------------------------- solvers

fn random_items(rng: &mut ChaCha8Rng, n: usize) -> Vec<KnapsackItem> {
    // fewer ids than items, so some items are alternative packages of one household
    let households = (n * 2 / 3).max(1);
    (0..n)
        .map(|_| {
            let h = rng.random_range(0..households);
            let value = if rng.random_bool(0.15) {
                rng.random_range(-3000..=0)
            } else {
                rng.random_range(1..=10_000)
            };
            let weight = if rng.random_bool(0.1) {
                0
            } else {
                rng.random_range(1..=5_000)
            };
            KnapsackItem::new(
                format!("h{h:02}"),
                Cents(value),
                Cents(weight),
                IncomeGroup::ALL[h % 3],
            )
        })
        .collect()
}

fn ids(items: &[KnapsackItem]) -> Vec<&str> {
    items.iter().map(|it| it.id.as_str()).collect()
}

fn plan_value(plan: &AllocationPlan, values: &[i64]) -> i64 {
    plan.chosen_items.iter().map(|&i| values[i]).sum()
}

fn distinct_ids(plan: &AllocationPlan, items: &[KnapsackItem]) -> bool {
    let s: BTreeSet<&str> = plan
        .chosen_items
        .iter()
        .map(|&i| items[i].id.as_str())
        .collect();
    s.len() == plan.chosen_items.len()
}

fn year_weight(year: usize, it: &KnapsackItem) -> Cents {
    Cents(it.weight.0 + year as i64 * it.value.0.rem_euclid(61))
}

/// Checks one multi-year schedule year by year against exhaustive search over
/// the households still open after the solver's earlier years.
fn check_multiyear(
    items: &[KnapsackItem],
    budget: i64,
    values_by_year: &[Vec<Cents>],
    rollover: bool,
    mode: MultiYearEquityMode,
    plans: &[AllocationPlan],
) -> Result<(), String> {
    let id = ids(items);
    let years = values_by_year.len() as i64;
    let yearly = budget / years;
    let mut adopted: BTreeSet<&str> = BTreeSet::new();
    let mut carry_total = 0i64;
    let mut carry_group = [0i64; 3];
    let mut remaining: Vec<i64> = SHARES.iter().map(|&(_, s)| share_cap(s, budget)).collect();
    for (y, plan) in plans.iter().enumerate() {
        let values: Vec<i64> = values_by_year[y].iter().map(|c| c.0).collect();
        let weights: Vec<i64> = items.iter().map(|it| year_weight(y, it).0).collect();
        let open: Vec<usize> = (0..items.len())
            .filter(|&i| !adopted.contains(id[i]))
            .collect();
        let group_sum = |set: &[usize], g: usize| -> i64 {
            set.iter()
                .filter(|&&i| items[i].group == SHARES[g].0)
                .map(|&i| weights[i])
                .sum()
        };
        let caps_group: Vec<i64> = (0..3)
            .map(|g| share_cap(SHARES[g].1, yearly) + carry_group[g])
            .collect();
        let cap_total = yearly + carry_total;
        let feasible = |set: &[usize]| -> bool {
            match mode {
                MultiYearEquityMode::Strict => (0..3).all(|g| group_sum(set, g) <= caps_group[g]),
                MultiYearEquityMode::Relaxed => {
                    set.iter().map(|&i| weights[i]).sum::<i64>() <= cap_total
                        && (0..3).all(|g| group_sum(set, g) <= remaining[g])
                }
            }
        };
        if plan.chosen_items.iter().any(|i| !open.contains(i)) || !distinct_ids(plan, items) {
            return Err(format!(
                "year {y}: plan reuses an adopted or duplicate household"
            ));
        }
        if !feasible(&plan.chosen_items) {
            return Err(format!("year {y}: plan violates its caps"));
        }
        let want = best_subset_value(&open, &id, &values, &feasible);
        let got = plan_value(plan, &values);
        if got != want || plan.total_value.0 != got {
            return Err(format!(
                "year {y}: solver {got} (reported {}), exhaustive {want}",
                plan.total_value.0
            ));
        }
        for g in 0..3 {
            let spent = group_sum(&plan.chosen_items, g);
            remaining[g] -= spent;
            if rollover {
                carry_group[g] = caps_group[g] - spent;
            }
        }
        if rollover {
            carry_total = cap_total - plan.chosen_items.iter().map(|&i| weights[i]).sum::<i64>();
        }
        adopted.extend(plan.chosen_items.iter().map(|&i| id[i]));
    }
    Ok(())
}

#[test]
fn c01_solver_matches_exhaustive_search() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let eq = shares();
    let mut failures = Vec::new();
    let mut checked = [0usize; 4];
    for instance in 0..200 {
        let n = rng.random_range(1..=15);
        let items = random_items(&mut rng, n);
        let id = ids(&items);
        let values: Vec<i64> = items.iter().map(|it| it.value.0).collect();
        let weights: Vec<i64> = items.iter().map(|it| it.weight.0).collect();
        let total_w: i64 = weights.iter().sum();
        let budget = rng.random_range(0..=total_w.max(1));
        let all: Vec<usize> = (0..n).collect();

        let plan = solve_knapsack(&items, Cents(budget)).unwrap();
        let want = best_subset_value(&all, &id, &values, |s| {
            s.iter().map(|&i| weights[i]).sum::<i64>() <= budget
        });
        let spend: i64 = plan.chosen_items.iter().map(|&i| weights[i]).sum();
        if plan_value(&plan, &values) != want || spend > budget || !distinct_ids(&plan, &items) {
            failures.push(format!(
                "single #{instance}: {} vs {want}",
                plan_value(&plan, &values)
            ));
        }
        checked[0] += 1;

        let plan = solve_equity_knapsack(&items, Cents(budget), &eq).unwrap();
        let caps: Vec<i64> = SHARES.iter().map(|&(_, s)| share_cap(s, budget)).collect();
        let group_ok = |s: &[usize]| {
            (0..3).all(|g| {
                s.iter()
                    .filter(|&&i| items[i].group == SHARES[g].0)
                    .map(|&i| weights[i])
                    .sum::<i64>()
                    <= caps[g]
            })
        };
        let want = best_subset_value(&all, &id, &values, group_ok);
        if plan_value(&plan, &values) != want
            || !group_ok(&plan.chosen_items)
            || !distinct_ids(&plan, &items)
        {
            failures.push(format!(
                "equity #{instance}: {} vs {want}",
                plan_value(&plan, &values)
            ));
        }
        checked[1] += 1;

        let years = rng.random_range(1..=3);
        let values_by_year: Vec<Vec<Cents>> = (0..years)
            .map(|_| {
                items
                    .iter()
                    .map(|it| Cents(it.value.0 + rng.random_range(-500..=500)))
                    .collect()
            })
            .collect();
        let rollover = rng.random_bool(0.5);
        for (k, mode) in [MultiYearEquityMode::Strict, MultiYearEquityMode::Relaxed]
            .into_iter()
            .enumerate()
        {
            let plans = solve_multiyear_equity(
                &items,
                Cents(budget),
                &eq,
                mode,
                &values_by_year,
                MultiYearOptions { rollover },
                year_weight,
            )
            .unwrap();
            if let Err(e) = check_multiyear(&items, budget, &values_by_year, rollover, mode, &plans)
            {
                failures.push(format!("{mode:?} #{instance}: {e}"));
            }
            checked[2 + k] += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 10.0;
    let detail = format!(
        "{} single, {} equity, {} strict multi-year, {} relaxed multi-year instances; {} mismatches; {secs:.2} s{}",
        checked[0],
        checked[1],
        checked[2],
        checked[3],
        failures.len(),
        failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
    );
    verdict(1, "knapsack oracle equivalence", pass, &detail);
}

// ---------------------------------------------------------------- LCB

#[test]
fn c02_lower_confidence_bound_arithmetic() {
    let alpha = DEFAULT_ALPHA;
    let c0 = Context::from_index(0).unwrap();
    let c1 = Context::from_index(1).unwrap();
    let c2 = Context::from_index(2).unwrap();
    // four responses averaging 0.5 in a 100-response survey
    let mut data: Vec<SurveyResponse> = [0.0, 1.0, 0.25, 0.75]
        .iter()
        .map(|&r| SurveyResponse {
            context: c0,
            arm: 0,
            reward: r,
        })
        .collect();
    data.extend((0..96).map(|_| SurveyResponse {
        context: c1,
        arm: 3,
        reward: 0.2,
    }));
    let est = fit_lcb(&data, NUM_ARMS, alpha).unwrap();

    let width = |n: f64, t: f64| alpha * (n.ln() / t).sqrt();
    let oracle = |m: f64, n: f64, t: f64| (m - width(n, t)).max(0.0);
    let mut errs = Vec::new();
    let mut check = |what: &str, got: f64, want: f64, tol: f64| {
        if (got - want).abs() > tol {
            errs.push(format!("{what}: {got} vs {want}"));
        }
    };
    check("example 1 mean", est.mean(0, c0), 0.5, 1e-12);
    check("example 1 width", width(100.0, 4.0), 0.7587, 1e-4);
    check("example 1 bound", est.lower(0, c0), 0.0, 1e-9);
    check(
        "example 1 oracle",
        est.lower(0, c0),
        oracle(0.5, 100.0, 4.0),
        1e-9,
    );
    let ex2 = lower_confidence_bound(0.5, 10_000, 100, alpha);
    check("example 2 bound", ex2, oracle(0.5, 100.0, 10_000.0), 1e-9);
    check("example 2 stated", ex2, 0.4848, 1e-4);
    check("example 3 mean", est.mean(5, c2), 0.0, 0.0);
    check("example 3 bound", est.lower(5, c2), 0.0, 0.0);
    check("example 3 count", est.count(5, c2) as f64, 0.0, 0.0);
    check(
        "filler cell",
        est.lower(3, c1),
        oracle(0.2, 100.0, 96.0),
        1e-9,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut violations = 0;
    for _ in 0..100_000 {
        let mean: f64 = rng.random_range(0.0..=1.0);
        let count: u64 = if rng.random_bool(0.05) {
            0
        } else {
            rng.random_range(1..=1_000_000)
        };
        let total = count + rng.random_range(0..=1_000_000);
        let total = total.max(1);
        let a: f64 = rng.random_range(0.01..=2.0);
        let lcb = lower_confidence_bound(mean, count, total, a);
        let want = if count == 0 {
            0.0
        } else {
            oracle_with(mean, total as f64, count as f64, a)
        };
        if !(lcb >= 0.0 && lcb <= mean) || (lcb - want).abs() > 1e-9 {
            violations += 1;
        }
    }
    let pass = errs.is_empty() && violations == 0;
    let detail = format!(
        "examples {}; 100000 fuzzed cells, {violations} outside [0, mean] or off the formula",
        if errs.is_empty() {
            "match".to_string()
        } else {
            errs.join(", ")
        }
    );
    verdict(2, "lower-confidence-bound arithmetic", pass, &detail);
}

fn oracle_with(mean: f64, n: f64, t: f64, alpha: f64) -> f64 {
    (mean - alpha * (n.ln() / t).sqrt()).max(0.0)
}

#[test]
fn c03_best_arm_identification() {
    let start = Instant::now();
    let epsilon = 0.1;
    let cells = (NUM_ARMS * NUM_CONTEXTS) as f64;
    let n = required_samples(cells, epsilon).unwrap();
    let arms: Vec<Arm> = (0..NUM_ARMS)
        .map(|k| Arm {
            index: k,
            package: Package::ALL[k / TIERS],
            tier: (k % TIERS) as u8 + 1,
            incentive: Cents(10_000 * (k % TIERS + 1) as i64),
        })
        .collect();
    let seeds = 20u64;
    let mut good = 0usize;
    let mut worst_seed = 1.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(0xbe57_a000 + seed);
        let means: Vec<f64> = (0..NUM_ARMS * NUM_CONTEXTS)
            .map(|_| rng.random_range(0.0..=1.0))
            .collect();
        let mut acc = LcbAccumulator::new(NUM_ARMS);
        // uniform logging over all (context, arm) cells: coverage constant = #cells
        for _ in 0..n {
            let c = rng.random_range(0..NUM_CONTEXTS);
            let k = rng.random_range(0..NUM_ARMS);
            let r = if rng.random::<f64>() < means[k * NUM_CONTEXTS + c] {
                1.0
            } else {
                0.0
            };
            acc.push(c, k, r);
        }
        let table = best_arms(&acc.finish(DEFAULT_ALPHA), &arms);
        let mut seed_good = 0usize;
        for c in 0..NUM_CONTEXTS {
            let best = (0..NUM_ARMS)
                .map(|k| means[k * NUM_CONTEXTS + c])
                .fold(f64::MIN, f64::max);
            if means[table.arms[c] * NUM_CONTEXTS + c] >= best - epsilon {
                seed_good += 1;
            }
        }
        good += seed_good;
        worst_seed = worst_seed.min(seed_good as f64 / NUM_CONTEXTS as f64);
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = good as f64 / (seeds as usize * NUM_CONTEXTS) as f64;
    let pass = frac >= 0.95 && secs < 30.0;
    let detail = format!(
        "N = {n} per seed, {seeds} seeds: {:.2}% of contexts within {epsilon} of optimal (worst seed {:.2}%); {secs:.1} s",
        100.0 * frac,
        100.0 * worst_seed
    );
    verdict(3, "best-arm identification", pass, &detail);
}

// ---------------------------------------------------------------- NPV

#[test]
fn c04_net_benefit_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let mut max_err = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut bad_npv = 0;
    let mut bad_slope = 0;
    let mut bad_threshold = 0;
    for i in 0..10_000 {
        let rate = match i % 10 {
            0 => 0.0,
            1 => rng.random_range(-0.2..0.0),
            _ => rng.random_range(0.0..=0.2),
        };
        let years = rng.random_range(1..=40u32);
        let saving: f64 = rng.random_range(-2_000.0..=8_000.0);
        let cost: f64 = rng.random_range(0.0..=60_000.0);
        let s = CostScenario::new(rate, years);
        let (h, o) = household_with_saving(saving, cost, &s);

        let want = saving * annuity_closed_form(rate, years) - cost;
        let got = net_benefit(&h, &o, &s, 0.0);
        // relative above one dollar
        let err = (got - want).abs();
        let rel = err / want.abs().max(1.0);
        max_err = max_err.max(err);
        max_rel = max_rel.max(rel);
        if rel > 1e-6 {
            bad_npv += 1;
        }

        let incentive: f64 = rng.random_range(0.0..=50_000.0);
        let lifted = net_benefit(&h, &o, &s, incentive);
        if (lifted - got - incentive).abs() > 1e-9 * (1.0 + got.abs() + incentive) {
            bad_slope += 1;
        }

        let t = acceptance_threshold(&h, &o, &s);
        let w = t.weight();
        let below = Cents(w.0 - 1);
        let exact_w = t.w == (-got).max(0.0);
        let boundary = t.accepts(w) && (w.0 == 0 || !t.accepts(below));
        let sign_ok = net_benefit(&h, &o, &s, w.dollars()) >= -1e-9 * (1.0 + got.abs())
            && (w.0 == 0 || net_benefit(&h, &o, &s, below.dollars()) < 0.0);
        if !(exact_w && boundary && sign_ok) {
            bad_threshold += 1;
        }
    }
    let pass = bad_npv == 0 && bad_slope == 0 && bad_threshold == 0;
    let detail = format!(
        "10000 tuples: {bad_npv} NPV mismatches (max error {max_rel:.1e} relative, {max_err:.1e} USD absolute), {bad_slope} slope errors, \
         {bad_threshold} threshold boundary errors"
    );
    verdict(
        4,
        "net benefit closed form and threshold linearity",
        pass,
        &detail,
    );
}

/// A household and retrofit whose annual bill saving is exactly `saving` USD.
fn household_with_saving(saving: f64, cost: f64, s: &CostScenario) -> (Household, RetrofitOutcome) {
    let gas = saving.max(0.0) / s.gas_price;
    let h = Household {
        id: "x".into(),
        annual_gas: gas,
        annual_electric: 0.0,
        summer_gas: 0.0,
        median_income: 50_000.0,
        income_group: IncomeGroup::Medium,
        roof_area: 20.0,
    };
    let o = RetrofitOutcome {
        household_id: "x".into(),
        package: Package::FullReplacement,
        g: gas,
        e_prime: (-saving).max(0.0) / s.electric_price,
        install_cost: cost,
        solar_kw: 0.0,
        battery_kwh: 0.0,
        heatpump_kwh: 0.0,
        appliance_kwh: 0.0,
        new_demand: 0.0,
        solar_generation: 0.0,
    };
    (h, o)
}

// ---------------------------------------------------------------- policies

const PAYBACKS: [u32; 3] = [5, 10, 15];
const PRESETS: [DiscountPreset; 2] = [DiscountPreset::Moderate, DiscountPreset::HighGrowth];

/// Default scenario results for every (preset, payback) pair.
fn policy_grid() -> &'static Vec<(DiscountPreset, u32, Vec<RunResult>)> {
    static GRID: OnceLock<Vec<(DiscountPreset, u32, Vec<RunResult>)>> = OnceLock::new();
    GRID.get_or_init(|| {
        let mut out = Vec::new();
        for preset in PRESETS {
            for t in PAYBACKS {
                let s = Scenario {
                    cost: CostScenario::preset(preset, t),
                    ..Scenario::default()
                };
                out.push((preset, t, run_scenario(world(), &s).expect("scenario runs")));
            }
        }
        out
    })
}

#[test]
fn c05_policy_ordering() {
    let mut violations = Vec::new();
    let mut points = 0;
    for (preset, t, results) in policy_grid() {
        for r in results {
            points += 1;
            let (sq, b, o) = (r.status_quo.value, r.bandit.value, r.optimal.value);
            if !(sq <= b && b <= o) {
                violations.push(format!("{preset:?} T={t} {}: {sq} / {b} / {o}", r.budget));
            }
        }
    }
    let detail = format!(
        "{points} (preset, payback, budget) points, {} violations{}",
        violations.len(),
        violations
            .first()
            .map(|v| format!("; first: {v}"))
            .unwrap_or_default()
    );
    verdict(
        5,
        "status quo <= bandit <= optimal",
        violations.is_empty(),
        &detail,
    );
}

#[test]
fn c06_gap_and_payback_trends() {
    let mut problems = Vec::new();
    for (preset, t, results) in policy_grid() {
        let gaps: Vec<i64> = results
            .iter()
            .map(|r| (r.optimal.value - r.bandit.value).0)
            .collect();
        if let Some(k) = gaps.windows(2).position(|w| w[1] < w[0]) {
            problems.push(format!(
                "{preset:?} T={t}: gap falls at budget index {}",
                k + 1
            ));
        }
    }
    let mut sq_series = Vec::new();
    for preset in PRESETS {
        let series: Vec<f64> = policy_grid()
            .iter()
            .filter(|(p, _, _)| *p == preset)
            .map(|(_, _, r)| r[0].status_quo.reduction_percent)
            .collect();
        if series.windows(2).any(|w| w[1] <= w[0]) {
            problems.push(format!(
                "{preset:?}: status quo reduction not increasing in payback: {series:?}"
            ));
        }
        sq_series.push(format!(
            "{preset:?} {}",
            series
                .iter()
                .map(|v| format!("{v:.2}%"))
                .collect::<Vec<_>>()
                .join(" -> ")
        ));
    }
    let detail = format!(
        "gap non-decreasing in budget for all 6 settings: {}; status quo over T=5/10/15: {}{}",
        !problems.iter().any(|p| p.contains("gap")),
        sq_series.join(", "),
        if problems.is_empty() {
            String::new()
        } else {
            format!("; {}", problems.join("; "))
        }
    );
    verdict(6, "gap and payback trends", problems.is_empty(), &detail);
}

// ---------------------------------------------------------------- equity

fn equity_violations(r: &RunResult, mode: EquityMode, horizon: u32) -> Vec<String> {
    let b = r.budget.0;
    let yearly = b / i64::from(horizon);
    let mut out = Vec::new();
    for o in [&r.bandit, &r.optimal] {
        let spent = |m: &BTreeMap<IncomeGroup, Cents>, g: IncomeGroup| {
            m.get(&g).copied().unwrap_or_default().0
        };
        let tag = format!("{:?} {} {}", mode, o.policy, r.budget);
        match mode {
            EquityMode::Equity => {
                for (g, s) in SHARES {
                    if spent(&o.per_group_spend, g) > share_cap(s, b) {
                        out.push(format!("{tag}: {g} over its share"));
                    }
                }
            }
            EquityMode::StrictEquityOverTime => {
                for y in &o.per_year {
                    for (g, s) in SHARES {
                        if spent(&y.per_group_spend, g) > share_cap(s, yearly) {
                            out.push(format!("{tag}: {g} over its yearly share in {}", y.year));
                        }
                    }
                }
            }
            EquityMode::RelaxedEquityOverTime => {
                for y in &o.per_year {
                    if y.spend.0 > yearly {
                        out.push(format!("{tag}: year {} over the yearly budget", y.year));
                    }
                }
                for (g, s) in SHARES {
                    if spent(&o.per_group_spend, g) > share_cap(s, b) {
                        out.push(format!("{tag}: {g} over its horizon share"));
                    }
                }
            }
            _ => unreachable!(),
        }
        if mode.is_multiyear() && o.per_year.len() != horizon as usize {
            out.push(format!("{tag}: {} yearly summaries", o.per_year.len()));
        }
    }
    out
}

#[test]
fn c07_equity_feasibility() {
    let horizon = 10;
    let mut violations = Vec::new();
    let mut plans = 0;
    for mode in [
        EquityMode::Equity,
        EquityMode::StrictEquityOverTime,
        EquityMode::RelaxedEquityOverTime,
    ] {
        let s = Scenario {
            equity_mode: mode,
            equity: shares(),
            horizon_years: horizon,
            ..Scenario::default()
        };
        for r in run_scenario(world(), &s).expect("equity scenario runs") {
            plans += 2;
            violations.extend(equity_violations(&r, mode, horizon));
        }
    }

    // One low-income household worth more than its group's yearly share can
    // only be funded when the share applies to the whole horizon.
    let items = vec![
        KnapsackItem::new("low", Cents(1_000), Cents(50), IncomeGroup::Low),
        KnapsackItem::new("mid", Cents(10), Cents(40), IncomeGroup::Medium),
    ];
    let values = vec![vec![Cents(1_000), Cents(10)]; 2];
    let run = |mode| {
        let plans = solve_multiyear_equity(
            &items,
            Cents(200),
            &shares(),
            mode,
            &values,
            MultiYearOptions::default(),
            |_, it: &KnapsackItem| it.weight,
        )
        .unwrap();
        plans.iter().map(|p| p.total_value.0).sum::<i64>()
    };
    let (strict, relaxed) = (
        run(MultiYearEquityMode::Strict),
        run(MultiYearEquityMode::Relaxed),
    );
    let pass = violations.is_empty() && relaxed >= strict && relaxed > strict;
    let detail = format!(
        "{plans} plans across equity / strict / relaxed modes, {} violations{}; constructed instance relaxed {relaxed} vs strict {strict}",
        violations.len(),
        violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
    );
    verdict(7, "equity feasibility", pass, &detail);
}

// ---------------------------------------------------------------- grids

#[test]
fn c08_reduction_monotone_in_grid_intensity() {
    let mut grids: Vec<(String, f64)> = BUNDLED_GRIDS
        .iter()
        .map(|&name| {
            let path = common::resources_dir()
                .join("grids")
                .join(format!("{name}.csv"));
            let trace = GridTrace::load(name, &path).expect("bundled trace");
            (name.to_string(), trace.mean_intensity())
        })
        .collect();
    grids.sort_by(|a, b| a.1.total_cmp(&b.1));
    let base = Scenario::default();
    let by_grid: Vec<Vec<RunResult>> = grids
        .iter()
        .map(|(name, mean)| {
            let s = Scenario {
                grid: name.clone(),
                emissions: EmissionsContext {
                    grid_intensity: *mean,
                    ..base.emissions
                },
                ..base.clone()
            };
            run_scenario(world(), &s).expect("grid scenario runs")
        })
        .collect();
    let mut breaks = Vec::new();
    for (k, budget) in base.budgets.iter().enumerate() {
        let series: Vec<f64> = by_grid
            .iter()
            .map(|rs| rs[k].optimal.reduction_percent)
            .collect();
        if series.windows(2).any(|w| w[1] < w[0]) {
            breaks.push(format!(
                "{}: {}",
                budget,
                series
                    .iter()
                    .map(|v| format!("{v:.2}"))
                    .collect::<Vec<_>>()
                    .join("/")
            ));
        }
    }
    let order: Vec<String> = grids.iter().map(|(n, m)| format!("{n} {m:.0}")).collect();
    let detail = format!(
        "grids by mean gCO2/kWh [{}]; optimal reduction non-monotone at {} of {} budgets{}",
        order.join(", "),
        breaks.len(),
        base.budgets.len(),
        if breaks.is_empty() {
            String::new()
        } else {
            format!(" ({})", breaks.join("; "))
        }
    );
    verdict(
        8,
        "optimal reduction monotone in grid intensity",
        breaks.is_empty(),
        &detail,
    );
}

// ---------------------------------------------------------------- determinism

fn config_run() -> (Vec<u8>, f64) {
    let start = Instant::now();
    let mut cfg = RunConfig::load(&common::defaults_toml()).expect("bundled defaults");
    cfg.resources.dir = Some(common::resources_dir());
    let res = cfg.load_resources().expect("bundled resources");
    let households = cfg.households().expect("population");
    let world = cfg.world(households, &res).expect("world");
    let results = run_sweep(&world, &cfg.scenarios(&res), cfg.workers).expect("sweep");
    let mut csv = Vec::new();
    write_long_csv(&results, &mut csv).expect("csv");
    (csv, start.elapsed().as_secs_f64())
}

#[test]
fn c09_determinism_and_runtime() {
    let (first, secs) = config_run();
    let (second, _) = config_run();
    let identical = first == second;
    let pass = identical && secs <= 60.0 && !first.is_empty();
    let detail = format!(
        "two runs of the default config: {} bytes each, byte-identical: {identical}; 10-budget sweep on 3000 homes in {secs:.2} s",
        first.len()
    );
    verdict(9, "determinism and runtime", pass, &detail);
}

// ---------------------------------------------------------------- survey size

#[test]
fn c10_bandit_value_non_decreasing_in_survey_size() {
    let sizes: Vec<usize> = (1..=10).map(|k| 100 * k).collect();
    let seeds: Vec<u64> = (0..10).collect();
    let s = Scenario::default();
    let rows = survey_size_sweep(world(), &s, Cents::from_dollars(5e6), &sizes, &seeds, 1)
        .expect("survey sweep");
    let means: Vec<f64> = rows.iter().map(|r| r.mean_bandit_value).collect();
    let pass = means.windows(2).all(|w| w[1] >= w[0]);
    let positive: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.coverage
                .iter()
                .map(|c| c.positive_lcb_cells as f64)
                .sum::<f64>()
                / r.coverage.len() as f64
        })
        .collect();
    let detail = format!(
        "{} seeds at $5M, mean bandit value by N=100..1000: {}; mean positive-LCB cells {}",
        seeds.len(),
        means
            .iter()
            .map(|v| format!("{v:.0}"))
            .collect::<Vec<_>>()
            .join(" "),
        positive
            .iter()
            .map(|v| format!("{v:.1}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    verdict(
        10,
        "bandit value non-decreasing in survey size",
        pass,
        &detail,
    );
}
