//! End-to-end scenario runs: ground truth for one cost/grid setting, the Status
//! Quo, Bandit and Optimal policies, budget sweeps and the survey-size study.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acceptance::{
    acceptance_threshold, perturb_thresholds, AcceptanceError, AcceptanceThreshold, CostScenario,
};
use crate::allocate::{
    solve_equity_knapsack, solve_knapsack, solve_multiyear, solve_multiyear_equity, AllocateError,
    AllocationPlan, EquitySpec, KnapsackItem, MultiYearEquityMode, MultiYearOptions,
};
use crate::bandit::{
    arm_index, best_arms, build_arms, fit_lcb, simulate_survey, Arm, ArmConfig, BanditError,
    BestArmTable, LcbEstimator, RewardModel, DEFAULT_ALPHA, NUM_ARMS, TIERS,
};
use crate::carbon::{
    annual_reduction, projected_value, synthetic_grid_trace, CarbonError, EmissionsContext,
    SccSchedule, DEFAULT_GAS_EMISSION_FACTOR,
};
use crate::money::Cents;
use crate::population::{
    discretize_contexts, generate_population, ContextAssignment, Household, IncomeGroup,
    PopulationError, PopulationSpec, NUM_CONTEXTS,
};
use crate::retrofit::{
    CopModel, DailyProfiles, EquipmentPrices, Package, RetrofitError, RetrofitModel,
    RetrofitOutcome, RetrofitParams, DEFAULT_ANNUAL_SOLAR_YIELD,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("population stage: {0}")]
    Population(#[from] PopulationError),
    #[error("retrofit stage: {0}")]
    Retrofit(#[from] RetrofitError),
    #[error("carbon stage: {0}")]
    Carbon(#[from] CarbonError),
    #[error("acceptance stage: {0}")]
    Acceptance(#[from] AcceptanceError),
    #[error("survey stage: {0}")]
    Bandit(#[from] BanditError),
    #[error("allocation stage ({policy}): {source}")]
    Allocate {
        policy: Policy,
        source: AllocateError,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    StatusQuo,
    Bandit,
    Optimal,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::StatusQuo, Policy::Bandit, Policy::Optimal];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::StatusQuo => "status_quo",
            Policy::Bandit => "bandit",
            Policy::Optimal => "optimal",
        })
    }
}

/// Which budget constraint family the incentivized policies use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquityMode {
    /// One budget, one year.
    #[default]
    Agnostic,
    /// Per-income-group budgets, one year.
    Equity,
    /// Equal yearly budgets over the horizon, no group constraint.
    OverTime,
    /// Every year split across groups.
    StrictEquityOverTime,
    /// Yearly totals plus horizon-level group budgets.
    RelaxedEquityOverTime,
}

impl EquityMode {
    pub fn is_multiyear(self) -> bool {
        matches!(
            self,
            EquityMode::OverTime
                | EquityMode::StrictEquityOverTime
                | EquityMode::RelaxedEquityOverTime
        )
    }
}

impl fmt::Display for EquityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquityMode::Agnostic => "agnostic",
            EquityMode::Equity => "equity",
            EquityMode::OverTime => "over_time",
            EquityMode::StrictEquityOverTime => "strict_equity_over_time",
            EquityMode::RelaxedEquityOverTime => "relaxed_equity_over_time",
        })
    }
}

/// The population and its physical retrofit outcomes, shared by every
/// scenario of a sweep.
#[derive(Debug, Clone)]
pub struct World {
    pub households: Vec<Household>,
    pub contexts: ContextAssignment,
    /// Indexed by household, then package.
    pub outcomes: Vec<[RetrofitOutcome; 2]>,
}

impl World {
    pub fn new(
        households: Vec<Household>,
        cop: CopModel,
        prices: EquipmentPrices,
        params: RetrofitParams,
        profiles: DailyProfiles,
    ) -> Result<Self, PipelineError> {
        let contexts = discretize_contexts(&households)?;
        let model = RetrofitModel::new(cop, prices, params, profiles, &households)?;
        let outcomes = households
            .iter()
            .map(|h| {
                Ok([
                    model.evaluate(h, Package::JustHeatPump)?,
                    model.evaluate(h, Package::FullReplacement)?,
                ])
            })
            .collect::<Result<Vec<_>, RetrofitError>>()?;
        Ok(World {
            households,
            contexts,
            outcomes,
        })
    }

    /// Synthetic population with default equipment, COP and profiles.
    pub fn synthetic(spec: &PopulationSpec) -> Result<Self, PipelineError> {
        World::new(
            generate_population(spec)?,
            CopModel::default(),
            EquipmentPrices::default(),
            RetrofitParams::default(),
            DailyProfiles::synthetic(DEFAULT_ANNUAL_SOLAR_YIELD),
        )
    }

    pub fn len(&self) -> usize {
        self.households.len()
    }

    pub fn is_empty(&self) -> bool {
        self.households.is_empty()
    }
}

/// One experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub cost: CostScenario,
    pub grid: String,
    pub emissions: EmissionsContext,
    pub scc: SccSchedule,
    /// Calendar year of the allocation (first year of a multi-year horizon).
    pub start_year: i32,
    pub budgets: Vec<Cents>,
    pub survey_size: usize,
    pub seed: u64,
    pub equity_mode: EquityMode,
    pub equity: EquitySpec,
    /// Years of the multi-year modes.
    pub horizon_years: u32,
    pub rollover: bool,
    /// Multiplicative uniform noise on thresholds; 0 keeps them exact.
    pub threshold_noise: f64,
    pub arms: ArmConfig,
    pub alpha: f64,
    pub extra_rounds: u32,
}

pub const DEFAULT_GRID: &str = "PJM";
pub const DEFAULT_START_YEAR: i32 = 2025;
pub const DEFAULT_SURVEY_SIZE: usize = 1000;

/// $1M, $2M, ..., $10M.
pub fn default_budgets() -> Vec<Cents> {
    (1..=10)
        .map(|m| Cents::from_dollars(m as f64 * 1e6))
        .collect()
}

impl Default for Scenario {
    fn default() -> Self {
        let trace = synthetic_grid_trace(DEFAULT_GRID, 8760).expect("bundled grid");
        Scenario {
            name: "default".into(),
            cost: CostScenario::new(0.05, 10),
            grid: DEFAULT_GRID.into(),
            emissions: EmissionsContext {
                grid_intensity: trace.mean_intensity(),
                gas_emission_factor: DEFAULT_GAS_EMISSION_FACTOR,
            },
            scc: SccSchedule::epa_2pct(),
            start_year: DEFAULT_START_YEAR,
            budgets: default_budgets(),
            survey_size: DEFAULT_SURVEY_SIZE,
            seed: 7,
            equity_mode: EquityMode::Agnostic,
            equity: EquitySpec::default(),
            horizon_years: 10,
            rollover: false,
            threshold_noise: 0.0,
            arms: ArmConfig::default(),
            alpha: DEFAULT_ALPHA,
            extra_rounds: 1,
        }
    }
}

impl Scenario {
    /// Years valued and allocated: the horizon for multi-year modes, else 1.
    pub fn years(&self) -> u32 {
        if self.equity_mode.is_multiyear() {
            self.horizon_years
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidScenario(m));
        self.cost.validate()?;
        if self.budgets.is_empty() {
            return bad("budgets: at least one budget is required".into());
        }
        if let Some(b) = self.budgets.iter().find(|b| !b.is_positive()) {
            return bad(format!("budgets: every budget must be positive, got {b}"));
        }
        if self.survey_size == 0 {
            return bad("survey_size must be positive".into());
        }
        if self.equity_mode.is_multiyear() && self.horizon_years == 0 {
            return bad("horizon_years must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.threshold_noise) {
            return bad(format!(
                "threshold_noise must lie in [0, 1), got {}",
                self.threshold_noise
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        self.equity
            .validate()
            .map_err(|e| PipelineError::InvalidScenario(format!("equity: {e}")))?;
        self.arms.validate()?;
        let last = self.start_year + self.years() as i32 - 1;
        for y in [self.start_year, last] {
            self.scc.get(y)?;
        }
        Ok(())
    }
}

/// Household behavior and valuation under one scenario.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub thresholds: Vec<[AcceptanceThreshold; 2]>,
    /// Annual tCO2 avoided, by household and package.
    pub tons: Vec<[f64; 2]>,
    /// No-intervention emissions of the whole population, tCO2/yr.
    pub baseline_tons: f64,
    /// Package adopted with no incentive, if any.
    pub free_choice: Vec<Option<Package>>,
    /// Value of adopting in year `y` through the horizon end: `values[y][h][p]`.
    pub values: Vec<Vec<[Cents; 2]>>,
}

impl GroundTruth {
    pub fn build(world: &World, s: &Scenario) -> Result<Self, PipelineError> {
        s.validate()?;
        let mut thresholds: Vec<[AcceptanceThreshold; 2]> = world
            .households
            .iter()
            .zip(&world.outcomes)
            .map(|(h, pair)| {
                [
                    acceptance_threshold(h, &pair[0], &s.cost),
                    acceptance_threshold(h, &pair[1], &s.cost),
                ]
            })
            .collect();
        perturb_thresholds(&mut thresholds, s.threshold_noise, s.seed);

        let tons: Vec<[f64; 2]> = world
            .households
            .iter()
            .zip(&world.outcomes)
            .map(|(h, pair)| {
                [
                    annual_reduction(&pair[0], h, &s.emissions),
                    annual_reduction(&pair[1], h, &s.emissions),
                ]
            })
            .collect();
        let baseline_tons = world
            .households
            .iter()
            .map(|h| s.emissions.baseline_tons(h))
            .sum();

        let years = s.years() as i32;
        let end = s.start_year + years - 1;
        let values = (0..years)
            .map(|y| {
                tons.iter()
                    .map(|t| {
                        let v = |p: usize| {
                            projected_value(t[p], s.start_year + y, end, &s.scc)
                                .map(Cents::from_dollars)
                        };
                        Ok([v(0)?, v(1)?])
                    })
                    .collect::<Result<Vec<_>, CarbonError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;

        let free_choice = thresholds
            .iter()
            .zip(&values[0])
            .map(|(th, v)| {
                Package::ALL
                    .into_iter()
                    .filter(|p| th[p.index()].accepts(Cents::ZERO))
                    // later packages win ties
                    .max_by_key(|p| (v[p.index()], p.index()))
            })
            .collect();
        Ok(GroundTruth {
            thresholds,
            tons,
            baseline_tons,
            free_choice,
            values,
        })
    }

    /// Value already secured by the no-incentive choice, counted from `year`.
    pub fn base_value(&self, year: usize, h: usize) -> Cents {
        self.free_choice[h].map_or(Cents::ZERO, |p| self.values[year][h][p.index()])
    }

    fn years(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSummary {
    pub year: i32,
    pub spend: Cents,
    pub per_group_spend: BTreeMap<IncomeGroup, Cents>,
    /// Annual tCO2 avoided by everyone adopted so far.
    pub annual_tons: f64,
    pub reduction_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub policy: Policy,
    pub adopters: usize,
    /// Households paid a non-zero incentive.
    pub incentivized: usize,
    /// tCO2/yr avoided once every adoption has happened.
    pub annual_tons: f64,
    /// Share of no-intervention emissions avoided, percent.
    pub reduction_percent: f64,
    /// Monetized reduction (over the horizon in multi-year modes).
    pub value: Cents,
    pub spend: Cents,
    pub per_group_spend: BTreeMap<IncomeGroup, Cents>,
    /// Empty outside multi-year modes.
    pub per_year: Vec<YearSummary>,
}

/// A paid adoption: household, package, year index, incentive.
#[derive(Debug, Clone, Copy)]
struct Paid {
    household: usize,
    package: Package,
    year: usize,
    incentive: Cents,
}

fn empty_groups() -> BTreeMap<IncomeGroup, Cents> {
    IncomeGroup::ALL
        .into_iter()
        .map(|g| (g, Cents::ZERO))
        .collect()
}

fn percent(tons: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        100.0 * tons / baseline
    } else {
        0.0
    }
}

fn summarize(
    policy: Policy,
    world: &World,
    gt: &GroundTruth,
    s: &Scenario,
    paid: &[Paid],
) -> PolicyOutcome {
    let n = world.len();
    let years = gt.years();
    // final package and the year it was adopted
    let mut chosen: Vec<Option<(Package, usize)>> =
        gt.free_choice.iter().map(|c| c.map(|p| (p, 0))).collect();
    let mut value: Cents = (0..n).map(|h| gt.base_value(0, h)).sum();
    let mut spend = Cents::ZERO;
    let mut per_group_spend = empty_groups();
    let mut year_spend = vec![Cents::ZERO; years];
    let mut year_group = vec![empty_groups(); years];
    let mut incentivized = 0;
    for p in paid {
        let group = world.households[p.household].income_group;
        spend += p.incentive;
        *per_group_spend.get_mut(&group).expect("all groups") += p.incentive;
        year_spend[p.year] += p.incentive;
        *year_group[p.year].get_mut(&group).expect("all groups") += p.incentive;
        if p.incentive.is_positive() {
            incentivized += 1;
        }
        let gain =
            gt.values[p.year][p.household][p.package.index()] - gt.base_value(p.year, p.household);
        if gain.is_positive() {
            value += gain;
            chosen[p.household] = Some((p.package, p.year));
        }
    }
    let tons_by_year: Vec<f64> = (0..years)
        .map(|y| {
            chosen
                .iter()
                .enumerate()
                .filter_map(|(h, c)| {
                    c.filter(|(_, year)| *year <= y)
                        .map(|(p, _)| gt.tons[h][p.index()])
                })
                .sum()
        })
        .collect();
    let annual_tons = tons_by_year[years - 1];
    let per_year = if s.equity_mode.is_multiyear() {
        (0..years)
            .map(|y| YearSummary {
                year: s.start_year + y as i32,
                spend: year_spend[y],
                per_group_spend: year_group[y].clone(),
                annual_tons: tons_by_year[y],
                reduction_percent: percent(tons_by_year[y], gt.baseline_tons),
            })
            .collect()
    } else {
        Vec::new()
    };
    PolicyOutcome {
        policy,
        adopters: chosen.iter().filter(|c| c.is_some()).count(),
        incentivized,
        annual_tons,
        reduction_percent: percent(annual_tons, gt.baseline_tons),
        value,
        spend,
        per_group_spend,
        per_year,
    }
}

/// Zero-incentive adopters only.
pub fn run_status_quo(world: &World, gt: &GroundTruth, s: &Scenario) -> PolicyOutcome {
    summarize(Policy::StatusQuo, world, gt, s, &[])
}

/// Dispatches to the allocate solver of the scenario's constraint family.
fn allocate(
    s: &Scenario,
    items: &[KnapsackItem],
    values_by_year: &[Vec<Cents>],
    budget: Cents,
) -> Result<Vec<AllocationPlan>, AllocateError> {
    let opts = MultiYearOptions {
        rollover: s.rollover,
    };
    let same = |_: usize, it: &KnapsackItem| it.weight;
    match s.equity_mode {
        EquityMode::Agnostic => Ok(vec![solve_knapsack(items, budget)?]),
        EquityMode::Equity => Ok(vec![solve_equity_knapsack(items, budget, &s.equity)?]),
        EquityMode::OverTime => solve_multiyear(items, budget, values_by_year, opts, same),
        EquityMode::StrictEquityOverTime => solve_multiyear_equity(
            items,
            budget,
            &s.equity,
            MultiYearEquityMode::Strict,
            values_by_year,
            opts,
            same,
        ),
        EquityMode::RelaxedEquityOverTime => solve_multiyear_equity(
            items,
            budget,
            &s.equity,
            MultiYearEquityMode::Relaxed,
            values_by_year,
            opts,
            same,
        ),
    }
}

/// Offers keyed by item: household, package, incentive and per-year values.
struct Offers {
    items: Vec<KnapsackItem>,
    source: Vec<(usize, Package)>,
    values_by_year: Vec<Vec<Cents>>,
}

impl Offers {
    fn new(years: usize) -> Self {
        Offers {
            items: Vec::new(),
            source: Vec::new(),
            values_by_year: vec![Vec::new(); years],
        }
    }

    fn push(
        &mut self,
        h: &Household,
        idx: usize,
        package: Package,
        weight: Cents,
        values: impl Fn(usize) -> Cents,
    ) {
        for (y, v) in self.values_by_year.iter_mut().enumerate() {
            v.push(values(y));
        }
        self.items.push(KnapsackItem::new(
            h.id.clone(),
            values(0),
            weight,
            h.income_group,
        ));
        self.source.push((idx, package));
    }

    fn solve(
        &self,
        s: &Scenario,
        budget: Cents,
        policy: Policy,
    ) -> Result<(Vec<Paid>, Cents), PipelineError> {
        let plans = allocate(s, &self.items, &self.values_by_year, budget)
            .map_err(|source| PipelineError::Allocate { policy, source })?;
        let mut paid = Vec::new();
        let mut spend = Cents::ZERO;
        for (year, plan) in plans.iter().enumerate() {
            spend += plan.total_spend;
            for &i in &plan.chosen_items {
                let (household, package) = self.source[i];
                paid.push(Paid {
                    household,
                    package,
                    year,
                    incentive: self.items[i].weight,
                });
            }
        }
        Ok((paid, spend))
    }
}

/// Full-knowledge allocation: every household's true threshold is known, so
/// each package upgrade over the free choice is an item at its exact price.
pub fn run_optimal(
    world: &World,
    gt: &GroundTruth,
    s: &Scenario,
    budget: Cents,
) -> Result<PolicyOutcome, PipelineError> {
    let mut offers = Offers::new(gt.years());
    for (h, household) in world.households.iter().enumerate() {
        for p in Package::ALL {
            let weight = gt.thresholds[h][p.index()].weight();
            if weight.is_positive() {
                offers.push(household, h, p, weight, |y| {
                    gt.values[y][h][p.index()] - gt.base_value(y, h)
                });
            }
        }
    }
    let (paid, _) = offers.solve(s, budget, Policy::Optimal)?;
    Ok(summarize(Policy::Optimal, world, gt, s, &paid))
}

/// Coverage and fit statistics of the survey behind a Bandit policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDiagnostics {
    pub responses: usize,
    pub acceptances: usize,
    pub reward_cap: f64,
    /// Responses per arm; sums to `responses`.
    pub arm_counts: Vec<u64>,
    /// (arm, context) cells with at least one response.
    pub observed_cells: usize,
    pub positive_lcb_cells: usize,
    /// Number of (arm, context) cells with 0, 1, ... responses; the last bucket
    /// collects everything at or above its index.
    pub cell_histogram: Vec<usize>,
    /// Contexts whose chosen arm is above the nominal tier.
    pub non_nominal_contexts: usize,
}

pub const CELL_HISTOGRAM_BUCKETS: usize = 6;

/// The learned offer policy.
#[derive(Debug, Clone)]
pub struct BanditModel {
    pub arms: Vec<Arm>,
    pub rewards: RewardModel,
    pub estimator: LcbEstimator,
    pub table: BestArmTable,
    pub diagnostics: SurveyDiagnostics,
}

/// Survey phase: arms from the threshold distribution, a simulated survey of
/// `survey_size` households, and the fitted lower confidence bounds.
pub fn train_bandit(
    world: &World,
    gt: &GroundTruth,
    s: &Scenario,
) -> Result<BanditModel, PipelineError> {
    let arms = build_arms(&gt.thresholds, &s.arms)?;
    let rewards = RewardModel::new(&world.contexts, &gt.tons, &arms)?;
    let data = simulate_survey(
        &world.contexts,
        &arms,
        &gt.thresholds,
        &rewards,
        s.survey_size,
        s.seed,
        None,
    )?;
    let estimator = fit_lcb(&data, arms.len(), s.alpha)?;
    let table = best_arms(&estimator, &arms);

    let mut arm_counts = vec![0u64; arms.len()];
    for r in &data {
        arm_counts[r.arm] += 1;
    }
    let mut cell_histogram = vec![0usize; CELL_HISTOGRAM_BUCKETS];
    for &t in &estimator.counts {
        cell_histogram[(t as usize).min(CELL_HISTOGRAM_BUCKETS - 1)] += 1;
    }
    let diagnostics = SurveyDiagnostics {
        responses: data.len(),
        acceptances: data.iter().filter(|r| r.reward > 0.0).count(),
        reward_cap: rewards.cap,
        arm_counts,
        observed_cells: estimator.counts.iter().filter(|t| **t > 0).count(),
        positive_lcb_cells: estimator.lcb.iter().filter(|v| **v > 0.0).count(),
        cell_histogram,
        non_nominal_contexts: table
            .arms
            .iter()
            .filter(|&&k| !arms[k].is_nominal())
            .count(),
    };
    Ok(BanditModel {
        arms,
        rewards,
        estimator,
        table,
        diagnostics,
    })
}

/// Package with the larger annual reduction; later packages win ties.
fn greenest(tons: &[f64; 2]) -> Package {
    if tons[0] > tons[1] {
        Package::JustHeatPump
    } else {
        Package::FullReplacement
    }
}

/// Offers each household its context's best arm (nominal-tier contexts get the
/// greenest package at the nominal incentive), keeps acceptors, and solves the
/// knapsack over them with designer-side values. While budget is left over,
/// extra rounds re-offer rejectors one tier higher.
pub fn run_bandit(
    world: &World,
    gt: &GroundTruth,
    s: &Scenario,
    model: &BanditModel,
    budget: Cents,
) -> Result<PolicyOutcome, PipelineError> {
    let n = world.len();
    let mut offer: Vec<(Package, u8)> = (0..n)
        .map(|h| {
            let arm = &model.arms[model.table.arm_for(world.contexts.contexts[h])];
            if arm.is_nominal() {
                (greenest(&gt.tons[h]), 1)
            } else {
                (arm.package, arm.tier)
            }
        })
        .collect();
    let incentive_of = |pkg: Package, tier: u8| model.arms[arm_index(pkg, tier)].incentive;
    let mut accepted = vec![false; n];
    let mut offers = Offers::new(gt.years());
    let mut round_new: Vec<usize> = (0..n).collect();
    let mut result = (Vec::new(), Cents::ZERO);
    for round in 0..=s.extra_rounds {
        if round > 0 {
            if result.1 >= budget {
                break;
            }
            round_new.clear();
            for h in 0..n {
                if !accepted[h] && (offer[h].1 as usize) < TIERS {
                    offer[h].1 += 1;
                    round_new.push(h);
                }
            }
            if round_new.is_empty() {
                break;
            }
        }
        let mut grew = false;
        for &h in &round_new {
            let (pkg, tier) = offer[h];
            let incentive = incentive_of(pkg, tier);
            if gt.thresholds[h][pkg.index()].accepts(incentive) {
                accepted[h] = true;
                grew = true;
                offers.push(&world.households[h], h, pkg, incentive, |y| {
                    gt.values[y][h][pkg.index()]
                });
            }
        }
        if round == 0 || grew {
            result = offers.solve(s, budget, Policy::Bandit)?;
        }
    }
    Ok(summarize(Policy::Bandit, world, gt, s, &result.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario: String,
    pub budget: Cents,
    pub equity_mode: EquityMode,
    pub grid: String,
    pub grid_intensity: f64,
    pub discount_rate: f64,
    pub payback_years: u32,
    pub survey_size: usize,
    pub seed: u64,
    pub baseline_tons: f64,
    pub status_quo: PolicyOutcome,
    pub bandit: PolicyOutcome,
    pub optimal: PolicyOutcome,
    pub survey: SurveyDiagnostics,
}

impl RunResult {
    pub fn policy(&self, p: Policy) -> &PolicyOutcome {
        match p {
            Policy::StatusQuo => &self.status_quo,
            Policy::Bandit => &self.bandit,
            Policy::Optimal => &self.optimal,
        }
    }
}

/// All three policies at every budget of the scenario. The survey is run once
/// and shared across budgets.
pub fn run_scenario(world: &World, s: &Scenario) -> Result<Vec<RunResult>, PipelineError> {
    let gt = GroundTruth::build(world, s)?;
    let model = train_bandit(world, &gt, s)?;
    let status_quo = run_status_quo(world, &gt, s);
    s.budgets
        .iter()
        .map(|&budget| {
            Ok(RunResult {
                scenario: s.name.clone(),
                budget,
                equity_mode: s.equity_mode,
                grid: s.grid.clone(),
                grid_intensity: s.emissions.grid_intensity,
                discount_rate: s.cost.discount_rate,
                payback_years: s.cost.payback_years,
                survey_size: s.survey_size,
                seed: s.seed,
                baseline_tons: gt.baseline_tons,
                status_quo: status_quo.clone(),
                bandit: run_bandit(world, &gt, s, &model, budget)?,
                optimal: run_optimal(world, &gt, s, budget)?,
                survey: model.diagnostics.clone(),
            })
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::InvalidScenario(format!("worker pool: {e}")))
}

/// Runs scenarios on `workers` threads; results keep the input order.
pub fn run_sweep(
    world: &World,
    scenarios: &[Scenario],
    workers: usize,
) -> Result<Vec<RunResult>, PipelineError> {
    let nested: Vec<Vec<RunResult>> = pool(workers)?.install(|| {
        scenarios
            .par_iter()
            .map(|s| run_scenario(world, s))
            .collect::<Result<_, _>>()
    })?;
    Ok(nested.into_iter().flatten().collect())
}

/// One survey size of the survey-size study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySizeRow {
    pub survey_size: usize,
    pub budget: Cents,
    pub seeds: Vec<u64>,
    pub bandit_values: Vec<Cents>,
    pub mean_bandit_value: f64,
    pub mean_reduction_percent: f64,
    pub optimal_value: Cents,
    pub status_quo_value: Cents,
    /// One entry per seed.
    pub coverage: Vec<SurveyDiagnostics>,
}

/// Bandit value at `budget` for each survey size, averaged over `seeds`.
pub fn survey_size_sweep(
    world: &World,
    s: &Scenario,
    budget: Cents,
    sizes: &[usize],
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<SurveySizeRow>, PipelineError> {
    if seeds.is_empty() {
        return Err(PipelineError::InvalidScenario(
            "survey sweep needs at least one seed".into(),
        ));
    }
    if let Some(&n) = sizes.iter().find(|&&n| n > world.len()) {
        return Err(BanditError::SurveyLargerThanPopulation {
            requested: n,
            population: world.len(),
        }
        .into());
    }
    let gt = GroundTruth::build(world, s)?;
    let status_quo = run_status_quo(world, &gt, s);
    let optimal = run_optimal(world, &gt, s, budget)?;
    let cells: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&seed| (n, seed)))
        .collect();
    let outcomes: Vec<(PolicyOutcome, SurveyDiagnostics)> = pool(workers)?.install(|| {
        cells
            .par_iter()
            .map(|&(n, seed)| {
                let sc = Scenario {
                    survey_size: n,
                    seed,
                    ..s.clone()
                };
                let model = train_bandit(world, &gt, &sc)?;
                Ok((
                    run_bandit(world, &gt, &sc, &model, budget)?,
                    model.diagnostics,
                ))
            })
            .collect::<Result<_, PipelineError>>()
    })?;
    Ok(sizes
        .iter()
        .zip(outcomes.chunks(seeds.len()))
        .map(|(&n, chunk)| {
            let k = chunk.len() as f64;
            SurveySizeRow {
                survey_size: n,
                budget,
                seeds: seeds.to_vec(),
                bandit_values: chunk.iter().map(|(o, _)| o.value).collect(),
                mean_bandit_value: chunk.iter().map(|(o, _)| o.value.dollars()).sum::<f64>() / k,
                mean_reduction_percent: chunk.iter().map(|(o, _)| o.reduction_percent).sum::<f64>()
                    / k,
                optimal_value: optimal.value,
                status_quo_value: status_quo.value,
                coverage: chunk.iter().map(|(_, d)| d.clone()).collect(),
            }
        })
        .collect())
}

/// Number of (arm, context) cells.
pub const NUM_CELLS: usize = NUM_ARMS * NUM_CONTEXTS;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acceptance::DiscountPreset;

    fn small_world() -> World {
        World::synthetic(&PopulationSpec {
            count: 300,
            ..PopulationSpec::default()
        })
        .unwrap()
    }

    fn scenario() -> Scenario {
        Scenario {
            budgets: vec![
                Cents::from_dollars(50_000.0),
                Cents::from_dollars(200_000.0),
            ],
            survey_size: 200,
            ..Scenario::default()
        }
    }

    #[test]
    fn status_quo_counts_only_free_adopters() {
        let world = small_world();
        let s = scenario();
        let gt = GroundTruth::build(&world, &s).unwrap();
        let sq = run_status_quo(&world, &gt, &s);
        assert_eq!(sq.spend, Cents::ZERO);
        assert_eq!(
            sq.adopters,
            gt.free_choice.iter().filter(|c| c.is_some()).count()
        );
        let expected: f64 = gt
            .free_choice
            .iter()
            .enumerate()
            .filter_map(|(h, c)| c.map(|p| gt.tons[h][p.index()]))
            .sum();
        assert!((sq.annual_tons - expected).abs() < 1e-9);
    }

    #[test]
    fn zero_budget_optimal_is_status_quo() {
        let world = small_world();
        let s = scenario();
        let gt = GroundTruth::build(&world, &s).unwrap();
        let opt = run_optimal(&world, &gt, &s, Cents::ZERO).unwrap();
        assert_eq!(opt.value, run_status_quo(&world, &gt, &s).value);
        assert_eq!(opt.spend, Cents::ZERO);
    }

    #[test]
    fn policies_are_ordered_and_feasible() {
        let world = small_world();
        for preset in [DiscountPreset::Moderate, DiscountPreset::HighGrowth] {
            let s = Scenario {
                cost: CostScenario::preset(preset, 10),
                ..scenario()
            };
            for r in run_scenario(&world, &s).unwrap() {
                assert!(r.status_quo.value <= r.bandit.value);
                assert!(r.bandit.value <= r.optimal.value);
                assert!(r.bandit.spend <= r.budget && r.optimal.spend <= r.budget);
                assert_eq!(r.survey.arm_counts.iter().sum::<u64>(), 200);
                assert_eq!(r.survey.cell_histogram.iter().sum::<usize>(), NUM_CELLS);
            }
        }
    }

    #[test]
    fn ample_budget_takes_every_upgrade() {
        let world = small_world();
        let s = scenario();
        let gt = GroundTruth::build(&world, &s).unwrap();
        let opt = run_optimal(&world, &gt, &s, Cents::from_dollars(1e10)).unwrap();
        let best: Cents = (0..world.len())
            .map(|h| {
                let base = gt.base_value(0, h);
                Package::ALL
                    .into_iter()
                    .map(|p| gt.values[0][h][p.index()])
                    .fold(base, Cents::max)
            })
            .sum();
        assert_eq!(opt.value, best);
    }

    #[test]
    fn multiyear_modes_respect_yearly_budgets() {
        let world = small_world();
        for mode in [
            EquityMode::OverTime,
            EquityMode::StrictEquityOverTime,
            EquityMode::RelaxedEquityOverTime,
        ] {
            let s = Scenario {
                equity_mode: mode,
                horizon_years: 4,
                ..scenario()
            };
            for r in run_scenario(&world, &s).unwrap() {
                for o in [&r.bandit, &r.optimal] {
                    assert_eq!(o.per_year.len(), 4);
                    let yearly = Cents(r.budget.0 / 4);
                    for y in &o.per_year {
                        assert!(y.spend <= yearly, "{mode}: {} > {}", y.spend, yearly);
                        if mode == EquityMode::StrictEquityOverTime {
                            for (g, spent) in &y.per_group_spend {
                                assert!(*spent <= s.equity.group_budget(*g, yearly));
                            }
                        }
                    }
                    for (g, spent) in &o.per_group_spend {
                        if mode != EquityMode::OverTime {
                            assert!(*spent <= s.equity.group_budget(*g, r.budget));
                        }
                    }
                    let reductions: Vec<f64> = o.per_year.iter().map(|y| y.annual_tons).collect();
                    assert!(reductions.windows(2).all(|w| w[0] <= w[1] + 1e-9));
                }
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let world = small_world();
        let s = Scenario {
            threshold_noise: 0.1,
            ..scenario()
        };
        assert_eq!(
            run_scenario(&world, &s).unwrap(),
            run_scenario(&world, &s).unwrap()
        );
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let world = small_world();
        let s = Scenario {
            budgets: vec![Cents(-5)],
            ..scenario()
        };
        assert!(matches!(
            run_scenario(&world, &s),
            Err(PipelineError::InvalidScenario(_))
        ));
        let s = Scenario {
            survey_size: 301,
            ..scenario()
        };
        assert!(matches!(
            run_scenario(&world, &s),
            Err(PipelineError::Bandit(
                BanditError::SurveyLargerThanPopulation { .. }
            ))
        ));
    }
}
