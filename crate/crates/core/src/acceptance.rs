//! Ground-truth household behavior: Net Present Value of a retrofit, the minimum
//! incentive that makes it break even, and the population break-even analysis.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Cents;
use crate::population::Household;
use crate::retrofit::{Package, RetrofitOutcome};
use crate::seeding::{stream_rng, NOISE_STREAM};

#[derive(Debug, Error)]
pub enum AcceptanceError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("{0} outcomes given for {1} households")]
    LengthMismatch(usize, usize),
    #[error("invalid cost scenario: {0}")]
    InvalidScenario(String),
}

/// Named discount-rate scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountPreset {
    /// Moderate inflation and electricity price growth: 5%/yr.
    Moderate,
    /// High inflation and electricity price growth: 2%/yr.
    HighGrowth,
}

impl DiscountPreset {
    pub fn rate(self) -> f64 {
        match self {
            DiscountPreset::Moderate => 0.05,
            DiscountPreset::HighGrowth => 0.02,
        }
    }
}

/// Energy prices and NPV horizon faced by every household.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostScenario {
    pub discount_rate: f64,
    pub payback_years: u32,
    /// USD / therm
    pub gas_price: f64,
    /// USD / kWh
    pub electric_price: f64,
}

pub const DEFAULT_GAS_PRICE: f64 = 1.160;
pub const DEFAULT_ELECTRIC_PRICE: f64 = 0.14072;

impl CostScenario {
    pub fn new(discount_rate: f64, payback_years: u32) -> Self {
        CostScenario {
            discount_rate,
            payback_years,
            gas_price: DEFAULT_GAS_PRICE,
            electric_price: DEFAULT_ELECTRIC_PRICE,
        }
    }

    pub fn preset(preset: DiscountPreset, payback_years: u32) -> Self {
        CostScenario::new(preset.rate(), payback_years)
    }

    pub fn with_payback(self, payback_years: u32) -> Self {
        CostScenario {
            payback_years,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), AcceptanceError> {
        if !(self.discount_rate.is_finite() && self.discount_rate > -1.0) {
            return Err(AcceptanceError::InvalidScenario(format!(
                "discount_rate must exceed -1, got {}",
                self.discount_rate
            )));
        }
        if self.payback_years < 1 {
            return Err(AcceptanceError::InvalidScenario(
                "payback_years must be at least 1".into(),
            ));
        }
        if !(self.gas_price > 0.0 && self.electric_price > 0.0) {
            return Err(AcceptanceError::InvalidScenario(
                "energy prices must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Σ_{t=0}^{T} (1 + rate)^-t
pub fn discount_factor_sum(rate: f64, years: u32) -> f64 {
    let step = 1.0 / (1.0 + rate);
    let mut factor = 1.0;
    let mut sum = 0.0;
    for _ in 0..=years {
        sum += factor;
        factor *= step;
    }
    sum
}

/// Annual energy bill before minus after the retrofit (USD/year).
pub fn annual_savings(h: &Household, outcome: &RetrofitOutcome, s: &CostScenario) -> f64 {
    let before = h.annual_gas * s.gas_price + h.annual_electric * s.electric_price;
    let residual_gas = (h.annual_gas - outcome.g).max(0.0);
    let after = outcome.e_prime * s.electric_price + residual_gas * s.gas_price;
    before - after
}

/// Discounted savings over the payback window, minus installation cost, plus the
/// incentive (USD).
pub fn net_benefit(
    h: &Household,
    outcome: &RetrofitOutcome,
    s: &CostScenario,
    incentive: f64,
) -> f64 {
    annual_savings(h, outcome, s) * discount_factor_sum(s.discount_rate, s.payback_years)
        - outcome.install_cost
        + incentive
}

/// Minimum incentive at which a household accepts a package.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceThreshold {
    pub household_id: String,
    pub package: Package,
    /// USD
    pub w: f64,
    pub accepts_at_zero: bool,
}

impl AcceptanceThreshold {
    /// Threshold in cents, rounded up so the household accepts at exactly this amount.
    pub fn weight(&self) -> Cents {
        Cents::from_dollars_ceil(self.w)
    }

    /// A household adopts when NetBenefit with the incentive is non-negative.
    pub fn accepts(&self, incentive: Cents) -> bool {
        incentive >= self.weight()
    }
}

pub fn acceptance_threshold(
    h: &Household,
    outcome: &RetrofitOutcome,
    s: &CostScenario,
) -> AcceptanceThreshold {
    let w = (-net_benefit(h, outcome, s, 0.0)).max(0.0);
    AcceptanceThreshold {
        household_id: h.id.clone(),
        package: outcome.package,
        w,
        accepts_at_zero: w == 0.0,
    }
}

/// Multiplies each positive threshold by an independent `1 + U(-width, width)`
/// factor. Zero thresholds stay zero.
pub fn perturb_thresholds(thresholds: &mut [[AcceptanceThreshold; 2]], width: f64, seed: u64) {
    if width <= 0.0 {
        return;
    }
    let mut rng = stream_rng(seed, NOISE_STREAM);
    for pair in thresholds.iter_mut() {
        for t in pair.iter_mut() {
            let u: f64 = rng.random_range(-width..=width);
            if t.w > 0.0 {
                t.w = (t.w * (1.0 + u)).max(0.0);
                t.accepts_at_zero = t.w == 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakEvenRow {
    pub household_id: String,
    /// First payback horizon (years) at which the better package breaks even
    /// without incentive; `None` within the search limit.
    pub break_even_year: Option<u32>,
    /// Best NetBenefit at each requested horizon.
    pub net_benefit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakEvenReport {
    pub horizons: Vec<u32>,
    /// Fraction of households whose better package has NetBenefit < 0, per horizon.
    pub failing_fraction: Vec<f64>,
    /// Sorted by break-even year (never last), then household id.
    pub table: Vec<BreakEvenRow>,
}

/// Longest payback period searched for a break-even year.
pub const BREAK_EVEN_SEARCH_YEARS: u32 = 100;

pub fn break_even_analysis(
    pop: &[Household],
    outcomes: &[[RetrofitOutcome; 2]],
    s: &CostScenario,
    horizons: &[u32],
) -> Result<BreakEvenReport, AcceptanceError> {
    if pop.is_empty() {
        return Err(AcceptanceError::EmptyPopulation);
    }
    if pop.len() != outcomes.len() {
        return Err(AcceptanceError::LengthMismatch(outcomes.len(), pop.len()));
    }
    let best_at = |h: &Household, pair: &[RetrofitOutcome; 2], years: u32| {
        let sc = s.with_payback(years);
        pair.iter()
            .map(|o| net_benefit(h, o, &sc, 0.0))
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let mut failing = vec![0usize; horizons.len()];
    let mut table = Vec::with_capacity(pop.len());
    for (h, pair) in pop.iter().zip(outcomes) {
        let nb: Vec<f64> = horizons.iter().map(|&t| best_at(h, pair, t)).collect();
        for (f, v) in failing.iter_mut().zip(&nb) {
            if *v < 0.0 {
                *f += 1;
            }
        }
        let break_even_year = (0..=BREAK_EVEN_SEARCH_YEARS).find(|&t| best_at(h, pair, t) >= 0.0);
        table.push(BreakEvenRow {
            household_id: h.id.clone(),
            break_even_year,
            net_benefit: nb,
        });
    }
    table.sort_by(|a, b| {
        let key = |r: &BreakEvenRow| r.break_even_year.unwrap_or(u32::MAX);
        key(a)
            .cmp(&key(b))
            .then_with(|| a.household_id.cmp(&b.household_id))
    });
    let n = pop.len() as f64;
    Ok(BreakEvenReport {
        horizons: horizons.to_vec(),
        failing_fraction: failing.into_iter().map(|c| c as f64 / n).collect(),
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::IncomeGroup;
    use approx::assert_relative_eq;

    fn house(gas: f64, electric: f64) -> Household {
        Household {
            id: "h".into(),
            annual_gas: gas,
            annual_electric: electric,
            summer_gas: 0.0,
            median_income: 1.0,
            income_group: IncomeGroup::Low,
            roof_area: 0.0,
        }
    }

    fn outcome(g: f64, e_prime: f64, install_cost: f64) -> RetrofitOutcome {
        RetrofitOutcome {
            household_id: "h".into(),
            package: Package::FullReplacement,
            g,
            e_prime,
            install_cost,
            solar_kw: 0.0,
            battery_kwh: 0.0,
            heatpump_kwh: 0.0,
            appliance_kwh: 0.0,
            new_demand: 0.0,
            solar_generation: 0.0,
        }
    }

    /// A household whose bill drops by exactly `saving` USD/year under unit prices.
    fn with_saving(saving: f64, install: f64) -> (Household, RetrofitOutcome, CostScenario) {
        let s = CostScenario {
            discount_rate: 0.05,
            payback_years: 10,
            gas_price: 1.0,
            electric_price: 1.0,
        };
        (house(0.0, saving), outcome(0.0, 0.0, install), s)
    }

    #[test]
    fn exact_break_even_with_incentive() {
        let h = house(0.0, 1000.0);
        let o = outcome(0.0, 1000.0, 12_000.0);
        let s = CostScenario::new(0.05, 10);
        assert_eq!(net_benefit(&h, &o, &s, 12_000.0), 0.0);
    }

    #[test]
    fn geometric_series_example() {
        let (h, o, s) = with_saving(2000.0, 20_000.0);
        let nb = net_benefit(&h, &o, &s, 0.0);
        assert!((nb - (-2556.6)).abs() < 0.1, "{nb}");
        let t = acceptance_threshold(&h, &o, &s);
        assert!((t.w - 2556.6).abs() < 0.1);
        assert!(!t.accepts_at_zero);
        assert_relative_eq!(net_benefit(&h, &o, &s, t.w), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn undiscounted_sum() {
        let (h, o, mut s) = with_saving(300.0, 1000.0);
        s.discount_rate = 0.0;
        assert_relative_eq!(net_benefit(&h, &o, &s, 50.0), 300.0 * 11.0 - 1000.0 + 50.0);
    }

    #[test]
    fn positive_benefit_accepts_at_zero() {
        let (h, o, s) = with_saving(1000.0, 0.0);
        let t = acceptance_threshold(&h, &o, &s);
        assert_eq!(t.w, 0.0);
        assert!(t.accepts_at_zero);
        assert!(t.accepts(Cents::ZERO));
    }

    #[test]
    fn doubling_install_cost_raises_threshold_by_the_added_cost() {
        let (h, o, s) = with_saving(2000.0, 20_000.0);
        let w1 = acceptance_threshold(&h, &o, &s).w;
        let w2 = acceptance_threshold(&h, &outcome(0.0, 0.0, 40_000.0), &s).w;
        assert_relative_eq!(w2 - w1, 20_000.0, max_relative = 1e-12);
    }

    #[test]
    fn accept_decision_matches_threshold() {
        let (h, o, s) = with_saving(2000.0, 20_000.0);
        let t = acceptance_threshold(&h, &o, &s);
        let w = t.weight();
        assert!(t.accepts(w));
        assert!(!t.accepts(w - Cents(1)));
        assert!(net_benefit(&h, &o, &s, w.dollars()) >= 0.0);
        assert!(net_benefit(&h, &o, &s, (w - Cents(1)).dollars()) < 0.0);
    }

    #[test]
    fn residual_gas_is_billed_for_partial_packages() {
        let h = Household {
            summer_gas: 100.0,
            ..house(500.0, 0.0)
        };
        let mut o = outcome(400.0, 0.0, 0.0);
        o.package = Package::JustHeatPump;
        let s = CostScenario {
            discount_rate: 0.0,
            payback_years: 1,
            gas_price: 2.0,
            electric_price: 1.0,
        };
        assert_relative_eq!(annual_savings(&h, &o, &s), 800.0);
    }

    #[test]
    fn break_even_exactly_at_ten_years() {
        let saving = 1000.0;
        let install = saving * discount_factor_sum(0.05, 10) - 1e-6;
        let (h, o, s) = with_saving(saving, install);
        let pair = [o.clone(), o];
        let report = break_even_analysis(&[h], &[pair], &s, &[5, 10, 15]).unwrap();
        assert_eq!(report.failing_fraction, vec![1.0, 0.0, 0.0]);
        assert_eq!(report.table[0].break_even_year, Some(10));
    }

    #[test]
    fn no_savings_never_breaks_even() {
        let (h, o, s) = with_saving(0.0, 100.0);
        let report = break_even_analysis(&[h], &[[o.clone(), o]], &s, &[5, 10, 15]).unwrap();
        assert_eq!(report.failing_fraction, vec![1.0; 3]);
        assert_eq!(report.table[0].break_even_year, None);
        assert!(matches!(
            break_even_analysis(&[], &[], &s, &[5]),
            Err(AcceptanceError::EmptyPopulation)
        ));
    }

    #[test]
    fn noise_is_seeded_and_keeps_zero_thresholds() {
        let mk = |w: f64| AcceptanceThreshold {
            household_id: "h".into(),
            package: Package::JustHeatPump,
            w,
            accepts_at_zero: w == 0.0,
        };
        let base = vec![[mk(0.0), mk(1000.0)], [mk(500.0), mk(2000.0)]];
        let mut a = base.clone();
        let mut b = base.clone();
        perturb_thresholds(&mut a, 0.2, 9);
        perturb_thresholds(&mut b, 0.2, 9);
        assert_eq!(a, b);
        assert_eq!(a[0][0].w, 0.0);
        assert_ne!(a, base);
        assert!(a
            .iter()
            .flatten()
            .zip(base.iter().flatten())
            .all(|(x, y)| (x.w - y.w).abs() <= 0.2 * y.w + 1e-9));
    }

    #[test]
    fn scenario_validation() {
        assert!(CostScenario::new(-1.0, 5).validate().is_err());
        assert!(CostScenario::new(0.05, 0).validate().is_err());
        assert!(CostScenario::preset(DiscountPreset::HighGrowth, 15)
            .validate()
            .is_ok());
    }
}
