//! Budget-constrained incentive allocation: single budget, per-group equity,
//! myopic multi-year and strict/relaxed multi-year equity. All solvers are exact.
//!
//! Items sharing a household id are mutually exclusive options (for example two
//! retrofit packages for the same home); at most one of them is selected.

mod engine;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Cents;
use crate::population::IncomeGroup;
use engine::Item;

#[derive(Debug, Error, PartialEq)]
pub enum AllocateError {
    #[error("item `{id}` belongs to group {group}, which has no equity share")]
    UnknownGroup { id: String, group: IncomeGroup },
    #[error("options for household `{id}` span several groups")]
    MixedGroups { id: String },
    #[error("invalid equity shares: {0}")]
    InvalidShares(String),
    #[error("item `{id}` has negative weight")]
    NegativeWeight { id: String },
    #[error("budget must be non-negative")]
    NegativeBudget,
    #[error("multi-year allocation needs at least one year")]
    NoYears,
    #[error("year {year} has {got} values for {expected} items")]
    ValueCountMismatch {
        year: usize,
        got: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnapsackItem {
    pub id: String,
    /// Monetized carbon reduction.
    pub value: Cents,
    /// Minimum incentive the household accepts.
    pub weight: Cents,
    pub group: IncomeGroup,
}

impl KnapsackItem {
    pub fn new(id: impl Into<String>, value: Cents, weight: Cents, group: IncomeGroup) -> Self {
        KnapsackItem {
            id: id.into(),
            value,
            weight,
            group,
        }
    }
}

/// Budget fraction reserved for each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquitySpec {
    pub shares: BTreeMap<IncomeGroup, f64>,
}

impl Default for EquitySpec {
    fn default() -> Self {
        EquitySpec {
            shares: BTreeMap::from([
                (IncomeGroup::Low, 0.25),
                (IncomeGroup::Medium, 0.5),
                (IncomeGroup::High, 0.25),
            ]),
        }
    }
}

impl EquitySpec {
    pub fn new(shares: BTreeMap<IncomeGroup, f64>) -> Result<Self, AllocateError> {
        let spec = EquitySpec { shares };
        spec.validate()?;
        Ok(spec)
    }

    pub fn single(group: IncomeGroup) -> Self {
        EquitySpec {
            shares: BTreeMap::from([(group, 1.0)]),
        }
    }

    pub fn validate(&self) -> Result<(), AllocateError> {
        if self.shares.is_empty() {
            return Err(AllocateError::InvalidShares("no groups".into()));
        }
        for (g, s) in &self.shares {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(AllocateError::InvalidShares(format!("share of {g} is {s}")));
            }
        }
        let total: f64 = self.shares.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AllocateError::InvalidShares(format!(
                "shares sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// Per-group budget `share * budget`, rounded down to the cent.
    pub fn group_budget(&self, group: IncomeGroup, budget: Cents) -> Cents {
        self.shares
            .get(&group)
            .map_or(Cents::ZERO, |&s| budget.scale_floor(s))
    }

    fn check_items(&self, items: &[KnapsackItem]) -> Result<(), AllocateError> {
        self.validate()?;
        if let Some(it) = items.iter().find(|it| !self.shares.contains_key(&it.group)) {
            return Err(AllocateError::UnknownGroup {
                id: it.id.clone(),
                group: it.group,
            });
        }
        let mut group_of: BTreeMap<&str, IncomeGroup> = BTreeMap::new();
        for it in items {
            if *group_of.entry(it.id.as_str()).or_insert(it.group) != it.group {
                return Err(AllocateError::MixedGroups { id: it.id.clone() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub selected: BTreeSet<String>,
    /// Incentive paid per selected household.
    pub incentives: BTreeMap<String, Cents>,
    pub total_spend: Cents,
    pub total_value: Cents,
    pub per_group_spend: BTreeMap<IncomeGroup, Cents>,
    /// Positions of the chosen items in the solver input.
    #[serde(skip)]
    pub chosen_items: Vec<usize>,
}

impl AllocationPlan {
    fn from_choice(
        items: &[KnapsackItem],
        weights: &[Cents],
        values: &[Cents],
        mut chosen: Vec<usize>,
    ) -> Self {
        chosen.sort_unstable();
        let mut plan = AllocationPlan {
            per_group_spend: IncomeGroup::ALL.iter().map(|&g| (g, Cents::ZERO)).collect(),
            ..AllocationPlan::default()
        };
        for &i in &chosen {
            let it = &items[i];
            plan.selected.insert(it.id.clone());
            plan.incentives.insert(it.id.clone(), weights[i]);
            plan.total_spend += weights[i];
            plan.total_value += values[i];
            *plan.per_group_spend.entry(it.group).or_default() += weights[i];
        }
        plan.chosen_items = chosen;
        plan
    }

    pub fn group_spend(&self, group: IncomeGroup) -> Cents {
        self.per_group_spend
            .get(&group)
            .copied()
            .unwrap_or_default()
    }
}

/// Sums a multi-year schedule into one plan.
pub fn combine_years(years: &[AllocationPlan]) -> AllocationPlan {
    let mut total = AllocationPlan {
        per_group_spend: IncomeGroup::ALL.iter().map(|&g| (g, Cents::ZERO)).collect(),
        ..AllocationPlan::default()
    };
    for plan in years {
        total.selected.extend(plan.selected.iter().cloned());
        total
            .incentives
            .extend(plan.incentives.iter().map(|(k, v)| (k.clone(), *v)));
        total.total_spend += plan.total_spend;
        total.total_value += plan.total_value;
        for (g, s) in &plan.per_group_spend {
            *total.per_group_spend.entry(*g).or_default() += *s;
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiYearOptions {
    /// Carry unspent yearly budget into the following year.
    pub rollover: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiYearEquityMode {
    /// Every year each group may spend at most its share of that year's budget.
    Strict,
    /// Every year spend stays within the yearly budget; each group stays within
    /// its share of the whole horizon budget.
    Relaxed,
}

/// Stable class and tie-break ranks derived from household ids.
struct Ranks {
    class: Vec<u32>,
    key: Vec<u32>,
}

impl Ranks {
    fn new(items: &[KnapsackItem]) -> Self {
        let ids: BTreeSet<&str> = items.iter().map(|it| it.id.as_str()).collect();
        let class_of: BTreeMap<&str, u32> = ids.into_iter().zip(0u32..).collect();
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by(|&a, &b| items[a].id.cmp(&items[b].id).then(a.cmp(&b)));
        let mut key = vec![0u32; items.len()];
        for (rank, &i) in order.iter().enumerate() {
            key[i] = rank as u32;
        }
        Ranks {
            class: items.iter().map(|it| class_of[it.id.as_str()]).collect(),
            key,
        }
    }

    /// Engine items for the positions in `candidates` with positive value and
    /// weight within `cap`; returns them with their input positions.
    fn engine_items(
        &self,
        candidates: impl Iterator<Item = usize>,
        weights: &[Cents],
        values: &[Cents],
        cap: Cents,
    ) -> (Vec<Item>, Vec<usize>) {
        let mut out = Vec::new();
        let mut map = Vec::new();
        for i in candidates {
            if values[i].0 > 0 && weights[i] <= cap {
                out.push(Item {
                    class: self.class[i],
                    key: self.key[i],
                    weight: weights[i].0,
                    value: values[i].0,
                });
                map.push(i);
            }
        }
        (out, map)
    }
}

fn check_basic(
    items: &[KnapsackItem],
    weights: &[Cents],
    budget: Cents,
) -> Result<(), AllocateError> {
    if budget.0 < 0 {
        return Err(AllocateError::NegativeBudget);
    }
    match items.iter().zip(weights).find(|(_, w)| w.0 < 0) {
        Some((it, _)) => Err(AllocateError::NegativeWeight { id: it.id.clone() }),
        None => Ok(()),
    }
}

fn solve_subset(
    ranks: &Ranks,
    candidates: impl Iterator<Item = usize>,
    weights: &[Cents],
    values: &[Cents],
    cap: Cents,
) -> Vec<usize> {
    let (eng, map) = ranks.engine_items(candidates, weights, values, cap);
    engine::solve_single(&eng, cap.0)
        .into_iter()
        .map(|i| map[i as usize])
        .collect()
}

/// Maximizes total value subject to total weight within `budget`.
pub fn solve_knapsack(
    items: &[KnapsackItem],
    budget: Cents,
) -> Result<AllocationPlan, AllocateError> {
    let weights: Vec<Cents> = items.iter().map(|it| it.weight).collect();
    let values: Vec<Cents> = items.iter().map(|it| it.value).collect();
    check_basic(items, &weights, budget)?;
    let ranks = Ranks::new(items);
    let chosen = solve_subset(&ranks, 0..items.len(), &weights, &values, budget);
    Ok(AllocationPlan::from_choice(
        items, &weights, &values, chosen,
    ))
}

/// Each group gets its own budget `share * budget`; groups are solved independently.
pub fn solve_equity_knapsack(
    items: &[KnapsackItem],
    budget: Cents,
    eq: &EquitySpec,
) -> Result<AllocationPlan, AllocateError> {
    let weights: Vec<Cents> = items.iter().map(|it| it.weight).collect();
    let values: Vec<Cents> = items.iter().map(|it| it.value).collect();
    check_basic(items, &weights, budget)?;
    eq.check_items(items)?;
    let ranks = Ranks::new(items);
    let mut chosen = Vec::new();
    for &group in eq.shares.keys() {
        let cap = eq.group_budget(group, budget);
        let members = (0..items.len()).filter(|&i| items[i].group == group);
        chosen.extend(solve_subset(&ranks, members, &weights, &values, cap));
    }
    Ok(AllocationPlan::from_choice(
        items, &weights, &values, chosen,
    ))
}

fn check_years(items: &[KnapsackItem], values_by_year: &[Vec<Cents>]) -> Result<(), AllocateError> {
    if values_by_year.is_empty() {
        return Err(AllocateError::NoYears);
    }
    for (year, v) in values_by_year.iter().enumerate() {
        if v.len() != items.len() {
            return Err(AllocateError::ValueCountMismatch {
                year,
                got: v.len(),
                expected: items.len(),
            });
        }
    }
    Ok(())
}

/// Runs the year loop: each year sees the households that have not adopted yet,
/// with weights from `refresh` and that year's values.
fn year_loop<F, S>(
    items: &[KnapsackItem],
    budget: Cents,
    values_by_year: &[Vec<Cents>],
    mut refresh: F,
    mut solve_year: S,
) -> Result<Vec<AllocationPlan>, AllocateError>
where
    F: FnMut(usize, &KnapsackItem) -> Cents,
    S: FnMut(usize, &Ranks, &[usize], &[Cents], &[Cents]) -> Vec<usize>,
{
    check_years(items, values_by_year)?;
    check_basic(
        items,
        &items.iter().map(|it| it.weight).collect::<Vec<_>>(),
        budget,
    )?;
    let ranks = Ranks::new(items);
    let mut adopted: HashSet<&str> = HashSet::new();
    let mut plans = Vec::with_capacity(values_by_year.len());
    for (year, values) in values_by_year.iter().enumerate() {
        let open: Vec<usize> = (0..items.len())
            .filter(|&i| !adopted.contains(items[i].id.as_str()))
            .collect();
        let mut weights = vec![Cents::ZERO; items.len()];
        for &i in &open {
            weights[i] = refresh(year, &items[i]);
        }
        check_basic(items, &weights, budget)?;
        let chosen = solve_year(year, &ranks, &open, &weights, values);
        let plan = AllocationPlan::from_choice(items, &weights, values, chosen);
        adopted.extend(plan.chosen_items.iter().map(|&i| items[i].id.as_str()));
        plans.push(plan);
    }
    Ok(plans)
}

/// Year-by-year allocation with yearly budget `budget / Y` (rounded down to the
/// cent). `refresh` supplies each open item's weight for a year.
pub fn solve_multiyear<F>(
    items: &[KnapsackItem],
    budget: Cents,
    values_by_year: &[Vec<Cents>],
    opts: MultiYearOptions,
    refresh: F,
) -> Result<Vec<AllocationPlan>, AllocateError>
where
    F: FnMut(usize, &KnapsackItem) -> Cents,
{
    let years = values_by_year.len().max(1) as i64;
    let yearly = Cents(budget.0 / years);
    let mut carry = Cents::ZERO;
    year_loop(
        items,
        budget,
        values_by_year,
        refresh,
        |_, ranks, open, weights, values| {
            let cap = yearly + carry;
            let chosen = solve_subset(ranks, open.iter().copied(), weights, values, cap);
            if opts.rollover {
                let spent: Cents = chosen.iter().map(|&i| weights[i]).sum();
                carry = cap - spent;
            }
            chosen
        },
    )
}

/// Multi-year allocation under per-group equity; see [`MultiYearEquityMode`].
pub fn solve_multiyear_equity<F>(
    items: &[KnapsackItem],
    budget: Cents,
    eq: &EquitySpec,
    mode: MultiYearEquityMode,
    values_by_year: &[Vec<Cents>],
    opts: MultiYearOptions,
    refresh: F,
) -> Result<Vec<AllocationPlan>, AllocateError>
where
    F: FnMut(usize, &KnapsackItem) -> Cents,
{
    eq.check_items(items)?;
    let groups: Vec<IncomeGroup> = eq.shares.keys().copied().collect();
    let years = values_by_year.len().max(1) as i64;
    let yearly = Cents(budget.0 / years);
    match mode {
        MultiYearEquityMode::Strict => {
            let group_yearly: Vec<Cents> =
                groups.iter().map(|&g| eq.group_budget(g, yearly)).collect();
            let mut carry = vec![Cents::ZERO; groups.len()];
            year_loop(
                items,
                budget,
                values_by_year,
                refresh,
                |_, ranks, open, weights, values| {
                    let mut chosen = Vec::new();
                    for (k, &group) in groups.iter().enumerate() {
                        let cap = group_yearly[k] + carry[k];
                        let members = open.iter().copied().filter(|&i| items[i].group == group);
                        let picked = solve_subset(ranks, members, weights, values, cap);
                        if opts.rollover {
                            carry[k] = cap - picked.iter().map(|&i| weights[i]).sum();
                        }
                        chosen.extend(picked);
                    }
                    chosen
                },
            )
        }
        MultiYearEquityMode::Relaxed => {
            let mut remaining: Vec<Cents> =
                groups.iter().map(|&g| eq.group_budget(g, budget)).collect();
            let mut carry = Cents::ZERO;
            year_loop(
                items,
                budget,
                values_by_year,
                refresh,
                |_, ranks, open, weights, values| {
                    let cap = yearly + carry;
                    let (eng, map) = ranks.engine_items(open.iter().copied(), weights, values, cap);
                    let pools: Vec<Vec<usize>> = groups
                        .iter()
                        .map(|&g| {
                            (0..eng.len())
                                .filter(|&e| items[map[e]].group == g)
                                .collect()
                        })
                        .collect();
                    let pool_caps: Vec<i64> = remaining.iter().map(|c| c.0).collect();
                    let chosen: Vec<usize> = engine::solve_coupled(&eng, &pools, &pool_caps, cap.0)
                        .into_iter()
                        .map(|e| map[e as usize])
                        .collect();
                    let mut spent = Cents::ZERO;
                    for &i in &chosen {
                        let k = groups
                            .iter()
                            .position(|&g| g == items[i].group)
                            .expect("checked group");
                        remaining[k] -= weights[i];
                        spent += weights[i];
                    }
                    if opts.rollover {
                        carry = cap - spent;
                    }
                    chosen
                },
            )
        }
    }
}
