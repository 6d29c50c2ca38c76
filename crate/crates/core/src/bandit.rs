//! Offline contextual lower-confidence-bound learner: arms, the simulated
//! accept/reject survey, per-(arm, context) statistics, best-arm extraction and
//! the survey-size bound.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acceptance::AcceptanceThreshold;
use crate::money::Cents;
use crate::population::{Context, ContextAssignment, NUM_CONTEXTS};
use crate::retrofit::Package;
use crate::seeding::{stream_rng, SURVEY_STREAM};

pub const TIERS: usize = 5;
pub const NUM_ARMS: usize = Package::ALL.len() * TIERS;

/// 1/√2: Hoeffding width for rewards in [0, 1].
pub const DEFAULT_ALPHA: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Error)]
pub enum BanditError {
    #[error("no acceptance thresholds to build arms from")]
    EmptyThresholds,
    #[error("survey of {requested} households requested from a population of {population}")]
    SurveyLargerThanPopulation { requested: usize, population: usize },
    #[error("sample-size iteration did not converge")]
    NoConvergence,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("survey row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One (package, incentive tier) offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub index: usize,
    pub package: Package,
    /// 1..=5; tier 1 is the nominal offer.
    pub tier: u8,
    pub incentive: Cents,
}

impl Arm {
    pub fn is_nominal(&self) -> bool {
        self.tier == 1
    }
}

pub fn arm_index(package: Package, tier: u8) -> usize {
    package.index() * TIERS + (tier as usize - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    /// Incentive of the nominal tier.
    pub nominal: Cents,
    /// Quantiles of positive thresholds used for tiers 2..=5.
    pub quantiles: [f64; 4],
}

impl Default for ArmConfig {
    fn default() -> Self {
        ArmConfig {
            nominal: Cents(10_000),
            quantiles: [0.2, 0.4, 0.6, 0.8],
        }
    }
}

impl ArmConfig {
    pub fn validate(&self) -> Result<(), BanditError> {
        if !self.nominal.is_positive() {
            return Err(BanditError::InvalidParameter(
                "nominal incentive must be positive".into(),
            ));
        }
        let ok = self.quantiles.iter().all(|q| (0.0..=1.0).contains(q))
            && self.quantiles.windows(2).all(|w| w[0] <= w[1]);
        if !ok {
            return Err(BanditError::InvalidParameter(
                "quantiles must be non-decreasing within [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tiers per package: the nominal floor, then quantiles of the positive
/// thresholds, pushed up by one cent where needed to stay strictly increasing.
pub fn build_arms(
    thresholds: &[[AcceptanceThreshold; 2]],
    cfg: &ArmConfig,
) -> Result<Vec<Arm>, BanditError> {
    if thresholds.is_empty() {
        return Err(BanditError::EmptyThresholds);
    }
    cfg.validate()?;
    let mut arms = Vec::with_capacity(NUM_ARMS);
    for package in Package::ALL {
        let mut positive: Vec<f64> = thresholds
            .iter()
            .map(|pair| pair[package.index()].w)
            .filter(|w| *w > 0.0)
            .collect();
        positive.sort_by(f64::total_cmp);
        let mut prev = cfg.nominal;
        arms.push(Arm {
            index: arm_index(package, 1),
            package,
            tier: 1,
            incentive: prev,
        });
        for (k, &q) in cfg.quantiles.iter().enumerate() {
            let raw = if positive.is_empty() {
                Cents::ZERO
            } else {
                Cents::from_dollars(quantile_sorted(&positive, q))
            };
            let incentive = raw.max(prev + Cents(1));
            let tier = k as u8 + 2;
            arms.push(Arm {
                index: arm_index(package, tier),
                package,
                tier,
                incentive,
            });
            prev = incentive;
        }
    }
    Ok(arms)
}

/// Mean annual reduction per (package, context) and the reward scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    /// `[package][context]`, tCO2/yr; `None` for contexts with no households.
    pub reduction: [Vec<Option<f64>>; 2],
    /// Raw rewards (tCO2/yr per dollar) above this are clamped before scaling to [0, 1].
    pub cap: f64,
}

/// Multiple of the 99th-percentile raw reward used as the default clamp.
pub const REWARD_CAP_MULTIPLE: f64 = 10.0;

impl RewardModel {
    /// `reductions[h][package]` is household `h`'s annual tCO2 reduction.
    pub fn new(
        contexts: &ContextAssignment,
        reductions: &[[f64; 2]],
        arms: &[Arm],
    ) -> Result<Self, BanditError> {
        if reductions.len() != contexts.len() {
            return Err(BanditError::LengthMismatch {
                what: "reductions",
                expected: contexts.len(),
                got: reductions.len(),
            });
        }
        let mut sums = [vec![0.0; NUM_CONTEXTS], vec![0.0; NUM_CONTEXTS]];
        let mut counts = vec![0usize; NUM_CONTEXTS];
        for (c, r) in contexts.contexts.iter().zip(reductions) {
            counts[c.index()] += 1;
            for p in 0..2 {
                sums[p][c.index()] += r[p];
            }
        }
        let reduction = sums.map(|s| {
            s.iter()
                .zip(&counts)
                .map(|(&sum, &n)| (n > 0).then(|| sum / n as f64))
                .collect::<Vec<_>>()
        });
        let mut raw: Vec<f64> = arms
            .iter()
            .flat_map(|a| {
                let by_ctx = &reduction[a.package.index()];
                by_ctx
                    .iter()
                    .flatten()
                    .map(move |r| r.max(0.0) / a.incentive.dollars())
            })
            .collect();
        raw.sort_by(f64::total_cmp);
        let p99 = if raw.is_empty() {
            0.0
        } else {
            quantile_sorted(&raw, 0.99)
        };
        let cap = if p99 > 0.0 {
            REWARD_CAP_MULTIPLE * p99
        } else {
            1.0
        };
        Ok(RewardModel { reduction, cap })
    }

    /// Reward of an accepted offer, clamped and scaled into [0, 1].
    pub fn reward(&self, arm: &Arm, context: Context) -> f64 {
        let r = self.reduction[arm.package.index()][context.index()].unwrap_or(0.0);
        (r / arm.incentive.dollars()).clamp(0.0, self.cap) / self.cap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub context: Context,
    pub arm: usize,
    /// In [0, 1]; zero for a rejection.
    pub reward: f64,
}

/// Surveys `n` distinct households, each offered one random arm (uniform unless
/// `arm_weights` is given). A household accepts when the offer covers its
/// threshold for the arm's package.
#[allow(clippy::too_many_arguments)]
pub fn simulate_survey(
    contexts: &ContextAssignment,
    arms: &[Arm],
    thresholds: &[[AcceptanceThreshold; 2]],
    rewards: &RewardModel,
    n: usize,
    seed: u64,
    arm_weights: Option<&[f64]>,
) -> Result<Vec<SurveyResponse>, BanditError> {
    let population = contexts.len();
    if n > population {
        return Err(BanditError::SurveyLargerThanPopulation {
            requested: n,
            population,
        });
    }
    if thresholds.len() != population {
        return Err(BanditError::LengthMismatch {
            what: "thresholds",
            expected: population,
            got: thresholds.len(),
        });
    }
    if arms.is_empty() {
        return Err(BanditError::InvalidParameter("no arms".into()));
    }
    let weighted = match arm_weights {
        Some(w) if w.len() != arms.len() => {
            return Err(BanditError::LengthMismatch {
                what: "arm weights",
                expected: arms.len(),
                got: w.len(),
            })
        }
        Some(w) => {
            Some(WeightedIndex::new(w).map_err(|e| BanditError::InvalidParameter(e.to_string()))?)
        }
        None => None,
    };
    let mut rng = stream_rng(seed, SURVEY_STREAM);
    let chosen = rand::seq::index::sample(&mut rng, population, n);
    let mut out = Vec::with_capacity(n);
    for h in chosen.iter() {
        let k = match &weighted {
            Some(dist) => dist.sample(&mut rng),
            None => rng.random_range(0..arms.len()),
        };
        let arm = &arms[k];
        let context = contexts.contexts[h];
        let accepted = thresholds[h][arm.package.index()].accepts(arm.incentive);
        let reward = if accepted {
            rewards.reward(arm, context)
        } else {
            0.0
        };
        out.push(SurveyResponse {
            context,
            arm: k,
            reward,
        });
    }
    Ok(out)
}

/// Per-(arm, context) counts, means and lower confidence bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcbEstimator {
    pub num_arms: usize,
    pub alpha: f64,
    pub total: u64,
    /// Indexed `arm * NUM_CONTEXTS + context`.
    pub counts: Vec<u64>,
    pub means: Vec<f64>,
    pub lcb: Vec<f64>,
}

impl LcbEstimator {
    fn cell(&self, arm: usize, context: Context) -> usize {
        arm * NUM_CONTEXTS + context.index()
    }

    pub fn count(&self, arm: usize, context: Context) -> u64 {
        self.counts[self.cell(arm, context)]
    }

    pub fn mean(&self, arm: usize, context: Context) -> f64 {
        self.means[self.cell(arm, context)]
    }

    pub fn lower(&self, arm: usize, context: Context) -> f64 {
        self.lcb[self.cell(arm, context)]
    }

    /// Share of (arm, context) cells with a positive lower bound.
    pub fn positive_fraction(&self) -> f64 {
        self.lcb.iter().filter(|v| **v > 0.0).count() as f64 / self.lcb.len() as f64
    }
}

/// max(mean − α·√(ln N / T), 0); zero for unobserved cells.
pub fn lower_confidence_bound(mean: f64, count: u64, total: u64, alpha: f64) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let width = alpha * ((total as f64).ln() / count as f64).sqrt();
    (mean - width).max(0.0)
}

/// Streaming accumulation of survey responses.
#[derive(Debug, Clone)]
pub struct LcbAccumulator {
    num_arms: usize,
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl LcbAccumulator {
    pub fn new(num_arms: usize) -> Self {
        LcbAccumulator {
            num_arms,
            counts: vec![0; num_arms * NUM_CONTEXTS],
            sums: vec![0.0; num_arms * NUM_CONTEXTS],
        }
    }

    pub fn push(&mut self, context_index: usize, arm: usize, reward: f64) {
        let cell = arm * NUM_CONTEXTS + context_index;
        self.counts[cell] += 1;
        self.sums[cell] += reward;
    }

    pub fn finish(self, alpha: f64) -> LcbEstimator {
        let total: u64 = self.counts.iter().sum();
        let means: Vec<f64> = self
            .counts
            .iter()
            .zip(&self.sums)
            .map(|(&t, &s)| if t == 0 { 0.0 } else { s / t as f64 })
            .collect();
        let lcb = means
            .iter()
            .zip(&self.counts)
            .map(|(&m, &t)| lower_confidence_bound(m, t, total, alpha))
            .collect();
        LcbEstimator {
            num_arms: self.num_arms,
            alpha,
            total,
            counts: self.counts,
            means,
            lcb,
        }
    }
}

pub fn fit_lcb(
    data: &[SurveyResponse],
    num_arms: usize,
    alpha: f64,
) -> Result<LcbEstimator, BanditError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BanditError::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let mut acc = LcbAccumulator::new(num_arms);
    for r in data {
        if r.arm >= num_arms {
            return Err(BanditError::InvalidParameter(format!(
                "arm {} out of range",
                r.arm
            )));
        }
        acc.push(r.context.index(), r.arm, r.reward);
    }
    Ok(acc.finish(alpha))
}

/// Chosen arm per context index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestArmTable {
    pub arms: Vec<usize>,
}

impl BestArmTable {
    pub fn arm_for(&self, context: Context) -> usize {
        self.arms[context.index()]
    }
}

/// Argmax of the lower bound per context; ties go to the lower incentive, then
/// the lower arm index.
pub fn best_arms(est: &LcbEstimator, arms: &[Arm]) -> BestArmTable {
    let table = (0..NUM_CONTEXTS)
        .map(|c| {
            let mut best = 0usize;
            for k in 1..arms.len() {
                let (a, b) = (
                    est.lcb[k * NUM_CONTEXTS + c],
                    est.lcb[best * NUM_CONTEXTS + c],
                );
                let better = a > b
                    || (a == b
                        && (arms[k].incentive < arms[best].incentive
                            || (arms[k].incentive == arms[best].incentive && k < best)));
                if better {
                    best = k;
                }
            }
            best
        })
        .collect();
    BestArmTable { arms: table }
}

/// Smallest survey size `N` above the fixed point of
/// `N = max(4·C*/ε², 8·C*)·ln N`, the bound under which the chosen arm is
/// within `epsilon` of optimal given coverage constant `c_star`.
pub fn required_samples(c_star: f64, epsilon: f64) -> Result<u64, BanditError> {
    if !(c_star >= 1.0 && c_star.is_finite()) {
        return Err(BanditError::InvalidParameter(format!(
            "coverage constant must be >= 1, got {c_star}"
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(BanditError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let a = (4.0 * c_star / (epsilon * epsilon)).max(8.0 * c_star);
    // iterate downward from above the upper root; x -> a ln x contracts there
    let mut x = 2.0 * a * a.ln().max(1.0);
    let mut converged = false;
    for _ in 0..10_000 {
        let next = a * x.ln();
        if (next - x).abs() <= 1e-9 * x {
            x = next;
            converged = true;
            break;
        }
        x = next;
    }
    if !converged || !x.is_finite() {
        return Err(BanditError::NoConvergence);
    }
    let satisfies = |n: u64| n as f64 >= a * (n as f64).ln();
    let mut n = x.ceil() as u64;
    while !satisfies(n) {
        n += 1;
    }
    while n > 1 && satisfies(n - 1) && (n - 1) as f64 > x - 1.0 {
        n -= 1;
    }
    Ok(n)
}

#[derive(Serialize, Deserialize)]
struct SurveyRow {
    context: usize,
    arm: usize,
    reward: f64,
}

pub fn write_survey_csv<W: Write>(data: &[SurveyResponse], writer: W) -> Result<(), BanditError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in data {
        w.serialize(SurveyRow {
            context: r.context.index(),
            arm: r.arm,
            reward: r.reward,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_survey_csv<R: Read>(reader: R) -> Result<Vec<SurveyResponse>, BanditError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SurveyRow>().enumerate() {
        let row = row?;
        let context = Context::from_index(row.context).ok_or_else(|| BanditError::InvalidRow {
            row: i + 1,
            reason: format!("context {}", row.context),
        })?;
        if !(0.0..=1.0).contains(&row.reward) {
            return Err(BanditError::InvalidRow {
                row: i + 1,
                reason: format!("reward {}", row.reward),
            });
        }
        out.push(SurveyResponse {
            context,
            arm: row.arm,
            reward: row.reward,
        });
    }
    Ok(out)
}
