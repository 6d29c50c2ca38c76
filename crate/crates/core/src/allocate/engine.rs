//! Exact multiple-choice 0/1 knapsack over integer weights.
//!
//! Items are grouped into classes (at most one item per class may be chosen).
//! Classes are processed in order of their best value/weight ratio while a
//! Pareto frontier of (spend, value) states is maintained. A state is dropped
//! once its linear-relaxation bound over the unprocessed items falls strictly
//! below a known feasible value.
//!
//! Ties between equal-value states go to lower spend, then to the item set that
//! contains the smallest differing item key.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

pub(crate) const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Item {
    pub class: u32,
    /// Tie-break rank; smaller keys are preferred for inclusion.
    pub key: u32,
    pub weight: i64,
    pub value: i64,
}

/// Descending value/weight ratio, zero weights first, then ascending key.
fn ratio_order(a: &Item, b: &Item) -> Ordering {
    let lhs = a.value as i128 * b.weight as i128;
    let rhs = b.value as i128 * a.weight as i128;
    rhs.cmp(&lhs).then(a.key.cmp(&b.key))
}

/// Steps along each class's upper convex hull of (spend, value) options,
/// starting from choosing nothing, paired with the item reached by the step.
/// Within a class the steps have strictly decreasing ratio.
fn hull_increments(items: &[Item]) -> Vec<(Item, usize)> {
    let mut classes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        classes.entry(it.class).or_default().push(i);
    }
    let mut out = Vec::with_capacity(items.len());
    for (class, mut members) in classes {
        members.sort_by(|&a, &b| {
            let (x, y) = (&items[a], &items[b]);
            x.weight
                .cmp(&y.weight)
                .then(y.value.cmp(&x.value))
                .then(x.key.cmp(&y.key))
        });
        let mut hull: Vec<(i64, i64, usize)> = vec![(0, 0, usize::MAX)];
        for i in members {
            let (w, v) = (items[i].weight, items[i].value);
            if v <= hull.last().expect("origin").1 {
                continue;
            }
            while hull.len() >= 2 {
                let (w0, v0, _) = hull[hull.len() - 2];
                let (w1, v1, _) = hull[hull.len() - 1];
                let concave =
                    (v1 - v0) as i128 * (w - w1) as i128 > (v - v1) as i128 * (w1 - w0) as i128;
                if concave {
                    break;
                }
                hull.pop();
            }
            hull.push((w, v, i));
        }
        for pair in hull.windows(2) {
            let (w0, v0, _) = pair[0];
            let (w1, v1, i) = pair[1];
            out.push((
                Item {
                    class,
                    key: items[i].key,
                    weight: w1 - w0,
                    value: v1 - v0,
                },
                i,
            ));
        }
    }
    out
}

/// Fenwick trees over the hull steps of every class in ratio order; answers the
/// linear-relaxation bound over the classes not yet removed.
pub(crate) struct RatioIndex {
    class_pos: HashMap<u32, Vec<usize>>,
    weight: Vec<i64>,
    value: Vec<i64>,
    tree_w: Vec<i64>,
    tree_v: Vec<i64>,
    top: usize,
}

impl RatioIndex {
    pub fn new(items: &[Item]) -> Self {
        let mut steps = hull_increments(items);
        steps.sort_by(|a, b| ratio_order(&a.0, &b.0));
        let n = steps.len();
        let mut class_pos: HashMap<u32, Vec<usize>> = HashMap::new();
        let mut weight = vec![0; n];
        let mut value = vec![0; n];
        for (p, (step, _)) in steps.iter().enumerate() {
            class_pos.entry(step.class).or_default().push(p);
            weight[p] = step.weight;
            value[p] = step.value;
        }
        let mut tree_w = vec![0i64; n + 1];
        let mut tree_v = vec![0i64; n + 1];
        for p in 0..n {
            let k = p + 1;
            tree_w[k] += weight[p];
            tree_v[k] += value[p];
            let parent = k + (k & k.wrapping_neg());
            if parent <= n {
                tree_w[parent] += tree_w[k];
                tree_v[parent] += tree_v[k];
            }
        }
        let top = if n == 0 {
            0
        } else {
            1 << (usize::BITS - 1 - n.leading_zeros())
        };
        RatioIndex {
            class_pos,
            weight,
            value,
            tree_w,
            tree_v,
            top,
        }
    }

    /// Ratio rank of a class's best step.
    pub fn class_rank(&self, class: u32) -> usize {
        self.class_pos
            .get(&class)
            .and_then(|p| p.first().copied())
            .unwrap_or(usize::MAX)
    }

    pub fn remove_class(&mut self, class: u32) {
        for p in self.class_pos.remove(&class).unwrap_or_default() {
            let (w, v) = (self.weight[p], self.value[p]);
            let mut k = p + 1;
            while k < self.tree_w.len() {
                self.tree_w[k] -= w;
                self.tree_v[k] -= v;
                k += k & k.wrapping_neg();
            }
        }
    }

    /// Longest live prefix fitting in `cap`: (position after it, weight, value).
    fn prefix(&self, cap: i64) -> (usize, i64, i64) {
        let n = self.weight.len();
        let (mut pos, mut acc_w, mut acc_v) = (0usize, 0i64, 0i64);
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next <= n && acc_w + self.tree_w[next] <= cap {
                pos = next;
                acc_w += self.tree_w[next];
                acc_v += self.tree_v[next];
            }
            step >>= 1;
        }
        (pos, acc_w, acc_v)
    }

    /// Floor of the linear-relaxation optimum at `cap`.
    pub fn bound(&self, cap: i64) -> i64 {
        if cap < 0 {
            return i64::MIN / 4;
        }
        let (pos, acc_w, acc_v) = self.prefix(cap);
        if pos < self.weight.len() {
            // prefix(pos + 1) > cap, so the step at `pos` is live with positive weight
            let frac = (cap - acc_w) as i128 * self.value[pos] as i128 / self.weight[pos] as i128;
            acc_v + frac as i64
        } else {
            acc_v
        }
    }

    /// (value, weight) of the step that does not fit at `cap`, if any.
    fn critical(&self, cap: i64) -> Option<(i64, i64)> {
        let (pos, _, _) = self.prefix(cap);
        (pos < self.weight.len()).then(|| (self.value[pos], self.weight[pos]))
    }
}

/// Fractional-knapsack bound of a fixed item set.
pub(crate) fn lp_bound(items: &[Item], cap: i64) -> i64 {
    RatioIndex::new(items).bound(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct State {
    pub weight: i64,
    pub value: i64,
    pub node: u32,
}

/// Parent-linked chosen items; a state's set is the chain from its node.
#[derive(Debug, Default)]
pub(crate) struct Arena {
    nodes: Vec<(u32, u32)>,
}

impl Arena {
    fn push(&mut self, item: u32, parent: u32) -> u32 {
        self.nodes.push((item, parent));
        (self.nodes.len() - 1) as u32
    }

    pub fn items(&self, mut node: u32) -> Vec<u32> {
        let mut out = Vec::new();
        while node != NONE {
            let (item, parent) = self.nodes[node as usize];
            out.push(item);
            node = parent;
        }
        out
    }
}

/// True when sorted key list `a` is preferred over `b`: at the first difference
/// `a` holds the smaller key.
pub(crate) fn prefer_keys(a: &[u32], b: &[u32]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    a.len() > b.len()
}

fn sorted_keys(items: &[Item], arena: &Arena, node: u32, extra: u32) -> Vec<u32> {
    let mut keys: Vec<u32> = arena
        .items(node)
        .into_iter()
        .map(|i| items[i as usize].key)
        .collect();
    if extra != NONE {
        keys.push(items[extra as usize].key);
    }
    keys.sort_unstable();
    keys
}

pub(crate) struct Front {
    /// Ascending spend, strictly ascending value.
    pub states: Vec<State>,
    pub arena: Arena,
}

impl Front {
    pub fn best(&self) -> State {
        *self
            .states
            .last()
            .expect("front always holds the empty state or better")
    }
}

/// Pruning context for [`pareto_front`].
pub(crate) struct Pruning<'a> {
    /// A feasible objective value of the enclosing problem.
    pub lower: i64,
    /// Upper bound on what items outside this front can add.
    pub outside: i64,
    /// Raise `lower` to the best state found; only valid when `outside` is zero.
    pub tighten: bool,
    /// Other items competing for a shared capacity: bound by the relaxation over
    /// this front's remaining items plus these, at `shared_cap` minus spend.
    pub coupled: Option<(&'a [Item], i64)>,
}

impl Pruning<'_> {
    pub fn standalone(lower: i64) -> Self {
        Pruning {
            lower,
            outside: 0,
            tighten: true,
            coupled: None,
        }
    }
}

#[derive(Clone, Copy)]
struct Cand {
    weight: i64,
    value: i64,
    parent: u32,
    item: u32,
}

/// Merges two lists sorted by ascending weight (descending value on ties).
fn merge(a: Vec<Cand>, b: Vec<Cand>) -> Vec<Cand> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        if (x.weight, -x.value) <= (y.weight, -y.value) {
            out.push(x);
            i += 1;
        } else {
            out.push(y);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Pareto frontier of the multiple-choice knapsack over `items` with capacity
/// `cap`, pruned against `pruning`. Items must have positive value and
/// `0 <= weight <= cap`.
pub(crate) fn pareto_front(items: &[Item], cap: i64, mut pruning: Pruning<'_>) -> Front {
    let mut own = RatioIndex::new(items);
    let mut coupled = pruning.coupled.map(|(others, shared_cap)| {
        let mut all = items.to_vec();
        all.extend_from_slice(others);
        (RatioIndex::new(&all), shared_cap)
    });

    let mut classes: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        classes.entry(it.class).or_default().push(i as u32);
    }
    let mut order: Vec<Vec<u32>> = classes.into_values().collect();
    order.sort_by_key(|members| own.class_rank(items[members[0] as usize].class));

    let mut arena = Arena::default();
    let mut front = vec![State {
        weight: 0,
        value: 0,
        node: NONE,
    }];

    for members in order {
        let class = items[members[0] as usize].class;
        own.remove_class(class);
        if let Some((idx, _)) = coupled.as_mut() {
            idx.remove_class(class);
        }
        let mut merged: Vec<Cand> = front
            .iter()
            .map(|s| Cand {
                weight: s.weight,
                value: s.value,
                parent: s.node,
                item: NONE,
            })
            .collect();
        for &i in &members {
            let it = items[i as usize];
            let shifted: Vec<Cand> = front
                .iter()
                .take_while(|s| s.weight + it.weight <= cap)
                .map(|s| Cand {
                    weight: s.weight + it.weight,
                    value: s.value + it.value,
                    parent: s.node,
                    item: i,
                })
                .collect();
            merged = merge(merged, shifted);
        }

        let mut next: Vec<Cand> = Vec::with_capacity(merged.len());
        let mut best_value = i64::MIN;
        for c in merged {
            let mut ub = c.value + own.bound(cap - c.weight) + pruning.outside;
            if let Some((idx, shared)) = coupled.as_ref() {
                ub = ub.min(c.value + idx.bound(shared - c.weight));
            }
            if ub < pruning.lower {
                continue;
            }
            if c.value > best_value {
                best_value = c.value;
                next.push(c);
            } else if c.value == best_value {
                let last = *next.last().expect("a kept state exists");
                if last.weight == c.weight {
                    let ka = sorted_keys(items, &arena, c.parent, c.item);
                    let kb = sorted_keys(items, &arena, last.parent, last.item);
                    if prefer_keys(&ka, &kb) {
                        *next.last_mut().expect("nonempty") = c;
                    }
                }
            }
        }
        front = next
            .into_iter()
            .map(|c| {
                let node = if c.item == NONE {
                    c.parent
                } else {
                    arena.push(c.item, c.parent)
                };
                State {
                    weight: c.weight,
                    value: c.value,
                    node,
                }
            })
            .collect();
        if pruning.tighten {
            if let Some(s) = front.last() {
                pruning.lower = pruning.lower.max(s.value);
            }
        }
        if front.is_empty() {
            // only possible if `lower` was not attainable; keep the empty set
            front.push(State {
                weight: 0,
                value: 0,
                node: NONE,
            });
        }
    }
    Front {
        states: front,
        arena,
    }
}

/// Greedy feasible value: hull steps in ratio order, each class moving along
/// its hull until a step does not fit. `pool_of` maps an item index to the
/// capacity pool it draws from.
pub(crate) fn greedy_value(
    items: &[Item],
    total_cap: i64,
    pool_of: impl Fn(usize) -> usize,
    pool_caps: &[i64],
) -> i64 {
    let mut steps = hull_increments(items);
    steps.sort_by(|a, b| ratio_order(&a.0, &b.0));
    let mut blocked = std::collections::HashSet::new();
    let mut pools = pool_caps.to_vec();
    let (mut spend, mut value) = (0i64, 0i64);
    for (step, i) in steps {
        if blocked.contains(&step.class) {
            continue;
        }
        let p = pool_of(i);
        if spend + step.weight <= total_cap && step.weight <= pools[p] {
            spend += step.weight;
            pools[p] -= step.weight;
            value += step.value;
        } else {
            blocked.insert(step.class);
        }
    }
    value
}

/// Lagrangian relaxation of the capacity constraint with multiplier
/// `num / den` (the linear-relaxation critical ratio). Everything is scaled by
/// `den`: `den * value(S) <= base` for any feasible `S`.
struct Relaxation {
    num: i128,
    den: i128,
    base: i128,
    best: HashMap<u32, i128>,
}

impl Relaxation {
    fn new(items: &[Item], members: &[usize], cap: i64) -> Self {
        let sub: Vec<Item> = members.iter().map(|&i| items[i]).collect();
        let (num, den) = match RatioIndex::new(&sub).critical(cap) {
            Some((v, w)) => (v as i128, w as i128),
            None => (0, 1),
        };
        let mut r = Relaxation {
            num,
            den,
            base: num * cap as i128,
            best: HashMap::new(),
        };
        for &i in members {
            let c = r.contrib(&items[i]);
            let e = r.best.entry(items[i].class).or_insert(0);
            *e = (*e).max(c);
        }
        r.base += r.best.values().sum::<i128>();
        r
    }

    fn contrib(&self, it: &Item) -> i128 {
        it.value as i128 * self.den - self.num * it.weight as i128
    }

    fn bound(&self) -> i64 {
        self.base.div_euclid(self.den) as i64
    }

    /// Bound when `class` is forced to contribute `contrib` (0 for choosing nothing).
    fn forced(&self, class: u32, contrib: i128) -> i64 {
        let best = self.best.get(&class).copied().unwrap_or(0);
        (self.base - best + contrib).div_euclid(self.den) as i64
    }
}

/// A reduced instance: classes whose choice is decided by the relaxation bounds
/// are fixed, the rest form the core.
struct Reduced {
    core: Vec<usize>,
    fixed: Vec<usize>,
    fixed_value: i64,
    shared_left: i64,
    pool_left: Vec<i64>,
}

/// Removes every option (an item, or choosing nothing in a class) whose bound is
/// strictly below `target`. Every solution worth at least `target` survives.
/// `None` when no solution can reach `target`.
fn reduce(
    items: &[Item],
    pool_of: &[usize],
    pool_caps: &[i64],
    shared_cap: i64,
    target: i64,
) -> Option<Reduced> {
    let all: Vec<usize> = (0..items.len()).collect();
    let shared = Relaxation::new(items, &all, shared_cap);
    let pool_rel: Vec<Relaxation> = (0..pool_caps.len())
        .map(|p| {
            let members: Vec<usize> = all.iter().copied().filter(|&i| pool_of[i] == p).collect();
            Relaxation::new(items, &members, pool_caps[p])
        })
        .collect();
    let pool_total: i64 = pool_rel.iter().map(Relaxation::bound).sum();

    let bound_for = |class: u32, pool: usize, item: Option<&Item>| {
        let (cs, cp) = match item {
            Some(it) => (shared.contrib(it), pool_rel[pool].contrib(it)),
            None => (0, 0),
        };
        let via_pool = pool_total - pool_rel[pool].bound() + pool_rel[pool].forced(class, cp);
        shared.forced(class, cs).min(via_pool)
    };

    let mut classes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        classes.entry(it.class).or_default().push(i);
    }
    let mut out = Reduced {
        core: Vec::new(),
        fixed: Vec::new(),
        fixed_value: 0,
        shared_left: shared_cap,
        pool_left: pool_caps.to_vec(),
    };
    for (class, members) in classes {
        let pool = pool_of[members[0]];
        let none_ok = bound_for(class, pool, None) >= target;
        let kept: Vec<usize> = members
            .into_iter()
            .filter(|&i| bound_for(class, pool, Some(&items[i])) >= target)
            .collect();
        match (none_ok, kept.len()) {
            (_, 0) if !none_ok => return None,
            (true, 0) => {}
            (false, 1) => {
                let it = items[kept[0]];
                out.fixed.push(kept[0]);
                out.fixed_value += it.value;
                out.shared_left -= it.weight;
                out.pool_left[pool] -= it.weight;
            }
            _ => out.core.extend(kept),
        }
    }
    if out.shared_left < 0 || out.pool_left.iter().any(|&c| c < 0) {
        return None;
    }
    Some(out)
}

/// Optimal item indices for a single capacity.
pub(crate) fn solve_single(items: &[Item], cap: i64) -> Vec<u32> {
    let greedy = greedy_value(items, cap, |_| 0, &[cap]);
    let pool_of = vec![0usize; items.len()];
    descend(greedy, lp_bound(items, cap), |target| {
        let Some(r) = reduce(items, &pool_of, &[cap], cap, target) else {
            return (Vec::new(), i64::MIN);
        };
        let core: Vec<usize> = r
            .core
            .iter()
            .copied()
            .filter(|&i| items[i].weight <= r.shared_left)
            .collect();
        let sub: Vec<Item> = core.iter().map(|&i| items[i]).collect();
        let front = pareto_front(
            &sub,
            r.shared_left,
            Pruning::standalone(target - r.fixed_value),
        );
        let best = front.best();
        let mut chosen: Vec<u32> = front
            .arena
            .items(best.node)
            .into_iter()
            .map(|k| core[k as usize] as u32)
            .collect();
        chosen.extend(r.fixed.iter().map(|&i| i as u32));
        (chosen, best.value + r.fixed_value)
    })
}

/// Runs `attempt` with targets stepping down from just below `upper` to the
/// feasible `greedy` value. An attempt whose best value reaches its target is
/// optimal, since nothing that could reach the target was discarded.
fn descend<T>(greedy: i64, upper: i64, mut attempt: impl FnMut(i64) -> (T, i64)) -> T {
    let mut gap = ((upper - greedy) / 64).max(1);
    loop {
        let target = upper - gap;
        if target <= greedy {
            return attempt(greedy).0;
        }
        let (found, value) = attempt(target);
        if value >= target {
            return found;
        }
        gap = gap.saturating_mul(4);
    }
}

#[derive(Clone, Copy)]
struct Combined {
    weight: i64,
    value: i64,
    prev: u32,
    node: u32,
}

/// Optimal item indices when each pool `p` has its own capacity `pool_caps[p]`
/// and all pools share `total_cap`. `pools[p]` lists item indices of pool `p`.
pub(crate) fn solve_coupled(
    items: &[Item],
    pools: &[Vec<usize>],
    pool_caps: &[i64],
    total_cap: i64,
) -> Vec<u32> {
    let mut pool_of = vec![0usize; items.len()];
    for (p, members) in pools.iter().enumerate() {
        for &i in members {
            pool_of[i] = p;
        }
    }
    // a pool whose cap is at least the shared cap, or whose items all fit, never binds
    let binding: Vec<bool> = pools
        .iter()
        .zip(pool_caps)
        .map(|(m, &c)| c < total_cap && m.iter().map(|&i| items[i].weight).sum::<i64>() > c)
        .collect();
    if !binding.iter().any(|&b| b) {
        return solve_single(items, total_cap);
    }
    let mut merged: Vec<Vec<usize>> = Vec::new();
    let mut merged_caps = Vec::new();
    let mut free = Vec::new();
    for (p, members) in pools.iter().enumerate() {
        if binding[p] {
            merged.push(members.clone());
            merged_caps.push(pool_caps[p]);
        } else {
            free.extend(members.iter().copied());
        }
    }
    if !free.is_empty() {
        merged.push(free);
        merged_caps.push(total_cap);
    }
    let (pools, pool_caps) = (&merged[..], &merged_caps[..]);
    for (p, members) in pools.iter().enumerate() {
        for &i in members {
            pool_of[i] = p;
        }
    }
    let greedy = greedy_value(items, total_cap, |i| pool_of[i], pool_caps);
    let per_pool: i64 = pools
        .iter()
        .zip(pool_caps)
        .map(|(m, &c)| {
            let c = c.min(total_cap);
            let members: Vec<Item> = m
                .iter()
                .map(|&i| items[i])
                .filter(|it| it.weight <= c)
                .collect();
            lp_bound(&members, c)
        })
        .sum();
    let upper = per_pool.min(lp_bound(items, total_cap));
    descend(greedy, upper, |target| {
        let Some(r) = reduce(items, &pool_of, pool_caps, total_cap, target) else {
            return (Vec::new(), i64::MIN);
        };
        let sub: Vec<Item> = r.core.iter().map(|&i| items[i]).collect();
        let sub_pools: Vec<Vec<usize>> = (0..pools.len())
            .map(|p| {
                (0..sub.len())
                    .filter(|&k| pool_of[r.core[k]] == p)
                    .collect()
            })
            .collect();
        let (local, value) = coupled_attempt(
            &sub,
            &sub_pools,
            &r.pool_left,
            r.shared_left,
            target - r.fixed_value,
        );
        let mut chosen: Vec<u32> = local
            .into_iter()
            .map(|k| r.core[k as usize] as u32)
            .collect();
        chosen.extend(r.fixed.iter().map(|&i| i as u32));
        (chosen, value.saturating_add(r.fixed_value))
    })
}

fn coupled_attempt(
    items: &[Item],
    pools: &[Vec<usize>],
    pool_caps: &[i64],
    total_cap: i64,
    lower: i64,
) -> (Vec<u32>, i64) {
    let caps: Vec<i64> = pool_caps.iter().map(|&c| c.min(total_cap)).collect();
    let pool_global: Vec<Vec<usize>> = pools
        .iter()
        .zip(&caps)
        .map(|(m, &c)| {
            m.iter()
                .copied()
                .filter(|&i| items[i].weight <= c)
                .collect()
        })
        .collect();
    let pool_items: Vec<Vec<Item>> = pool_global
        .iter()
        .map(|m| m.iter().map(|&i| items[i]).collect())
        .collect();
    let pool_bounds: Vec<i64> = pool_items
        .iter()
        .zip(&caps)
        .map(|(v, &c)| lp_bound(v, c))
        .collect();
    let bound_total: i64 = pool_bounds.iter().sum();

    let fronts: Vec<Front> = (0..pools.len())
        .map(|p| {
            let others: Vec<Item> = pool_items
                .iter()
                .enumerate()
                .filter(|(q, _)| *q != p)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            pareto_front(
                &pool_items[p],
                caps[p],
                Pruning {
                    lower,
                    outside: bound_total - pool_bounds[p],
                    tighten: false,
                    coupled: Some((&others, total_cap)),
                },
            )
        })
        .collect();

    // remaining-pool relaxation for pruning partial combinations
    let all_items: Vec<Item> = pool_items.iter().flatten().copied().collect();
    let mut rest = RatioIndex::new(&all_items);
    let mut rest_bound = bound_total;

    // levels[p][k] extends levels[p - 1][prev] with a state of front p
    let mut levels: Vec<Vec<Combined>> = Vec::with_capacity(fronts.len());
    let parts_of = |levels: &[Vec<Combined>], mut k: usize| {
        let mut parts = vec![NONE; levels.len()];
        for p in (0..levels.len()).rev() {
            let c = levels[p][k];
            parts[p] = c.node;
            k = c.prev as usize;
        }
        parts
    };
    let (pool_ref, fronts_ref) = (&pool_items, &fronts);
    let keys_of = |parts: &[u32]| {
        let mut keys: Vec<u32> = parts
            .iter()
            .enumerate()
            .flat_map(|(p, &node)| {
                fronts_ref[p]
                    .arena
                    .items(node)
                    .into_iter()
                    .map(move |i| pool_ref[p][i as usize].key)
            })
            .collect();
        keys.sort_unstable();
        keys
    };

    let root = [Combined {
        weight: 0,
        value: 0,
        prev: NONE,
        node: NONE,
    }];
    for (p, front) in fronts.iter().enumerate() {
        for it in &pool_items[p] {
            rest.remove_class(it.class);
        }
        rest_bound -= pool_bounds[p];

        let previous: &[Combined] = if p == 0 { &root } else { &levels[p - 1] };
        let mut cands: Vec<Combined> = Vec::new();
        for (k, a) in previous.iter().enumerate() {
            for s in front
                .states
                .iter()
                .take_while(|s| a.weight + s.weight <= total_cap)
            {
                let weight = a.weight + s.weight;
                let value = a.value + s.value;
                if value + rest_bound.min(rest.bound(total_cap - weight)) < lower {
                    continue;
                }
                cands.push(Combined {
                    weight,
                    value,
                    prev: k as u32,
                    node: s.node,
                });
            }
        }
        cands.sort_unstable_by(|a, b| a.weight.cmp(&b.weight).then(b.value.cmp(&a.value)));
        let mut next: Vec<Combined> = Vec::with_capacity(cands.len());
        let mut best_value = i64::MIN;
        for c in cands {
            if c.value > best_value {
                best_value = c.value;
                next.push(c);
            } else if c.value == best_value {
                let last = *next.last().expect("a kept state exists");
                if last.weight == c.weight {
                    let mut with_c = parts_of(&levels, c.prev as usize);
                    with_c.push(c.node);
                    let mut with_last = parts_of(&levels, last.prev as usize);
                    with_last.push(last.node);
                    if prefer_keys(&keys_of(&with_c), &keys_of(&with_last)) {
                        *next.last_mut().expect("nonempty") = c;
                    }
                }
            }
        }
        if next.is_empty() {
            return (Vec::new(), i64::MIN);
        }
        levels.push(next);
    }

    let last = levels.len() - 1;
    let best = *levels[last].last().expect("nonempty");
    let parts = parts_of(&levels, levels[last].len() - 1);
    // translate pool-local indices back to positions in `items`
    let mut chosen = Vec::new();
    for (p, &node) in parts.iter().enumerate() {
        chosen.extend(
            fronts[p]
                .arena
                .items(node)
                .into_iter()
                .map(|local| pool_global[p][local as usize] as u32),
        );
    }
    (chosen, best.value)
}
