//! Household data model, CSV ingestion, the synthetic population generator and
//! quantile-based context discretization.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::seeding::{stream_rng, POPULATION_STREAM};

/// Number of quantile bins per context variable.
pub const QUINTILES: usize = 5;
/// Number of distinct household contexts (income x gas x electric quintiles).
pub const NUM_CONTEXTS: usize = QUINTILES * QUINTILES * QUINTILES;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("missing column `{column}`")]
    MissingColumn { column: String },
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NonNumericField {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: {reason}")]
    NegativeUsage {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error("population has {got} households, at least {need} are required")]
    PopulationTooSmall { got: usize, need: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Income tercile used for equity budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncomeGroup {
    Low,
    Medium,
    High,
}

impl IncomeGroup {
    pub const ALL: [IncomeGroup; 3] = [IncomeGroup::Low, IncomeGroup::Medium, IncomeGroup::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }
}

impl fmt::Display for IncomeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IncomeGroup::Low => "low",
            IncomeGroup::Medium => "medium",
            IncomeGroup::High => "high",
        };
        f.write_str(s)
    }
}

/// One housing unit's annual energy profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: String,
    /// therms / year
    pub annual_gas: f64,
    /// kWh / year
    pub annual_electric: f64,
    /// Non-heating gas (therms / year), estimated from summer usage.
    pub summer_gas: f64,
    /// Census tract median income, USD / year.
    pub median_income: f64,
    pub income_group: IncomeGroup,
    /// m²
    pub roof_area: f64,
}

impl Household {
    /// Gas burned for space heating.
    pub fn heating_gas(&self) -> f64 {
        (self.annual_gas - self.summer_gas).max(0.0)
    }
}

/// A household's discretized (income, gas, electric) quintile triple, each 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Context {
    pub income_quintile: u8,
    pub gas_quintile: u8,
    pub electric_quintile: u8,
}

impl Context {
    pub fn new(income_quintile: u8, gas_quintile: u8, electric_quintile: u8) -> Self {
        debug_assert!((1..=5).contains(&income_quintile));
        debug_assert!((1..=5).contains(&gas_quintile));
        debug_assert!((1..=5).contains(&electric_quintile));
        Context {
            income_quintile,
            gas_quintile,
            electric_quintile,
        }
    }

    /// Dense index in `0..NUM_CONTEXTS`.
    pub fn index(self) -> usize {
        (self.income_quintile as usize - 1) * 25
            + (self.gas_quintile as usize - 1) * 5
            + (self.electric_quintile as usize - 1)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index >= NUM_CONTEXTS {
            return None;
        }
        Some(Context::new(
            (index / 25) as u8 + 1,
            ((index / 5) % 5) as u8 + 1,
            (index % 5) as u8 + 1,
        ))
    }
}

/// A parametric marginal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    /// Parameterized by arithmetic mean and coefficient of variation.
    LogNormal {
        mean: f64,
        cv: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Constant {
        value: f64,
    },
}

impl Marginal {
    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::LogNormal { mean, .. } => mean,
            Marginal::Uniform { low, high } => 0.5 * (low + high),
            Marginal::Constant { value } => value,
        }
    }

    fn validate(&self, name: &str) -> Result<(), PopulationError> {
        let bad = |msg: String| Err(PopulationError::InvalidSpec(format!("{name}: {msg}")));
        match *self {
            Marginal::LogNormal { mean, cv } => {
                if !(mean.is_finite() && mean > 0.0) {
                    return bad(format!("lognormal mean must be positive, got {mean}"));
                }
                if !(cv.is_finite() && cv > 0.0) {
                    return bad(format!("lognormal cv must be positive, got {cv}"));
                }
            }
            Marginal::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low >= 0.0 && high > low) {
                    return bad(format!(
                        "uniform needs 0 <= low < high, got [{low}, {high}]"
                    ));
                }
            }
            Marginal::Constant { value } => {
                if !(value.is_finite() && value >= 0.0) {
                    return bad(format!("constant must be non-negative, got {value}"));
                }
            }
        }
        Ok(())
    }

    /// Maps a standard-normal draw through the marginal (Gaussian copula).
    fn from_standard_normal(&self, z: f64) -> f64 {
        match *self {
            Marginal::LogNormal { mean, cv } => {
                let s2 = (1.0 + cv * cv).ln();
                (mean.ln() - 0.5 * s2 + s2.sqrt() * z).exp()
            }
            Marginal::Uniform { low, high } => {
                let phi = Normal::standard().cdf(z);
                low + (high - low) * phi
            }
            Marginal::Constant { value } => value,
        }
    }
}

/// Parameters of the synthetic population generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub count: usize,
    pub seed: u64,
    pub income: Marginal,
    /// Annual gas of gas-using households.
    pub gas: Marginal,
    pub electric: Marginal,
    /// Non-heating share of annual gas.
    pub summer_fraction: Marginal,
    pub roof_area: Marginal,
    /// Gaussian-copula correlation between income and gas usage.
    pub income_gas_correlation: f64,
    /// Share of households with no gas service.
    #[serde(default)]
    pub all_electric_fraction: f64,
    /// Electric usage multiplier for all-electric households (electric heat and hot water).
    #[serde(default = "default_all_electric_multiplier")]
    pub all_electric_multiplier: f64,
}

fn default_all_electric_multiplier() -> f64 {
    1.0
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            count: 3000,
            seed: 1,
            income: Marginal::LogNormal {
                mean: 75_000.0,
                cv: 0.5,
            },
            gas: Marginal::LogNormal {
                mean: 900.0,
                cv: 0.6,
            },
            electric: Marginal::LogNormal {
                mean: 7_000.0,
                cv: 0.5,
            },
            summer_fraction: Marginal::Uniform {
                low: 0.05,
                high: 0.25,
            },
            roof_area: Marginal::LogNormal {
                mean: 25.0,
                cv: 0.6,
            },
            income_gas_correlation: 0.3,
            all_electric_fraction: 0.3,
            all_electric_multiplier: 2.0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.count == 0 {
            return Err(PopulationError::InvalidSpec(
                "count must be positive".into(),
            ));
        }
        let rho = self.income_gas_correlation;
        if !(rho.is_finite() && (-1.0..=1.0).contains(&rho)) {
            return Err(PopulationError::InvalidSpec(format!(
                "income_gas_correlation must lie in [-1, 1], got {rho}"
            )));
        }
        if !(0.0..=1.0).contains(&self.all_electric_fraction) {
            return Err(PopulationError::InvalidSpec(format!(
                "all_electric_fraction must lie in [0, 1], got {}",
                self.all_electric_fraction
            )));
        }
        if !(self.all_electric_multiplier.is_finite() && self.all_electric_multiplier > 0.0) {
            return Err(PopulationError::InvalidSpec(
                "all_electric_multiplier must be positive".into(),
            ));
        }
        self.income.validate("income")?;
        self.gas.validate("gas")?;
        self.electric.validate("electric")?;
        self.summer_fraction.validate("summer_fraction")?;
        self.roof_area.validate("roof_area")?;
        if let Marginal::Uniform { high, .. } = self.summer_fraction {
            if high > 1.0 {
                return Err(PopulationError::InvalidSpec(
                    "summer_fraction must not exceed 1".into(),
                ));
            }
        }
        if let Marginal::Constant { value } = self.summer_fraction {
            if value > 1.0 {
                return Err(PopulationError::InvalidSpec(
                    "summer_fraction must not exceed 1".into(),
                ));
            }
        }
        if let Marginal::LogNormal { .. } = self.summer_fraction {
            return Err(PopulationError::InvalidSpec(
                "summer_fraction must be bounded (uniform or constant)".into(),
            ));
        }
        Ok(())
    }
}

/// Draws a synthetic population. Output is a pure function of `spec`.
pub fn generate_population(spec: &PopulationSpec) -> Result<Vec<Household>, PopulationError> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, POPULATION_STREAM);
    let rho = spec.income_gas_correlation;
    let rho_c = (1.0 - rho * rho).sqrt();
    let width = spec.count.to_string().len().max(5);

    let mut pop = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        // Fixed draw order per household keeps the stream layout stable.
        let z_income: f64 = rng.sample(StandardNormal);
        let z_gas_own: f64 = rng.sample(StandardNormal);
        let u_electric_only: f64 = rng.random();
        let z_electric: f64 = rng.sample(StandardNormal);
        let z_summer: f64 = rng.sample(StandardNormal);
        let z_roof: f64 = rng.sample(StandardNormal);

        let all_electric = u_electric_only < spec.all_electric_fraction;
        let z_gas = rho * z_income + rho_c * z_gas_own;
        let annual_gas = if all_electric {
            0.0
        } else {
            spec.gas.from_standard_normal(z_gas)
        };
        let mut annual_electric = spec.electric.from_standard_normal(z_electric);
        if all_electric {
            annual_electric *= spec.all_electric_multiplier;
        }
        let summer_gas = annual_gas * spec.summer_fraction.from_standard_normal(z_summer);

        pop.push(Household {
            id: format!("h{:0width$}", i + 1),
            annual_gas,
            annual_electric,
            summer_gas,
            median_income: spec.income.from_standard_normal(z_income),
            income_group: IncomeGroup::Medium,
            roof_area: spec.roof_area.from_standard_normal(z_roof),
        });
    }
    assign_income_groups(&mut pop);
    Ok(pop)
}

/// Rank-based binning. Values are ordered with ties kept in input order; every
/// member of a tie run takes the rank of the first member, so equal values always
/// share the lowest bin they can reach. Bin `b` (0-based) holds ranks in
/// `[b*n/bins, (b+1)*n/bins)`.
pub fn rank_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0usize; n];
    let mut run_rank = 0usize;
    for (pos, &idx) in order.iter().enumerate() {
        if pos == 0 || values[idx] != values[order[pos - 1]] {
            run_rank = pos;
        }
        out[idx] = (run_rank * bins) / n;
    }
    out
}

/// Assigns Low/Medium/High by income tercile over the whole population.
pub fn assign_income_groups(pop: &mut [Household]) {
    if pop.is_empty() {
        return;
    }
    let incomes: Vec<f64> = pop.iter().map(|h| h.median_income).collect();
    for (h, bin) in pop.iter_mut().zip(rank_bins(&incomes, 3)) {
        h.income_group = IncomeGroup::from_index(bin).expect("tercile bin in 0..3");
    }
}

/// Smallest value assigned to quintiles 2..=5 of each context variable
/// (`None` when a quintile is empty because of ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintileBoundaries {
    pub income: [Option<f64>; 4],
    pub gas: [Option<f64>; 4],
    pub electric: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextAssignment {
    /// Aligned with the population slice passed to [`discretize_contexts`].
    pub contexts: Vec<Context>,
    pub boundaries: QuintileBoundaries,
    ids: Vec<String>,
}

impl ContextAssignment {
    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn by_id(&self) -> BTreeMap<String, Context> {
        self.ids
            .iter()
            .cloned()
            .zip(self.contexts.iter().copied())
            .collect()
    }

    /// Number of households in each context index.
    pub fn counts(&self) -> [usize; NUM_CONTEXTS] {
        let mut counts = [0usize; NUM_CONTEXTS];
        for c in &self.contexts {
            counts[c.index()] += 1;
        }
        counts
    }
}

fn lower_edges(values: &[f64], bins: &[usize]) -> [Option<f64>; 4] {
    let mut edges = [None; 4];
    for (&v, &b) in values.iter().zip(bins) {
        if b >= 1 {
            let slot: &mut Option<f64> = &mut edges[b - 1];
            *slot = Some(slot.map_or(v, |cur: f64| cur.min(v)));
        }
    }
    edges
}

/// Splits income, gas and electric usage into population quintiles.
pub fn discretize_contexts(pop: &[Household]) -> Result<ContextAssignment, PopulationError> {
    if pop.len() < QUINTILES {
        return Err(PopulationError::PopulationTooSmall {
            got: pop.len(),
            need: QUINTILES,
        });
    }
    let income: Vec<f64> = pop.iter().map(|h| h.median_income).collect();
    let gas: Vec<f64> = pop.iter().map(|h| h.annual_gas).collect();
    let electric: Vec<f64> = pop.iter().map(|h| h.annual_electric).collect();
    let bi = rank_bins(&income, QUINTILES);
    let bg = rank_bins(&gas, QUINTILES);
    let be = rank_bins(&electric, QUINTILES);

    let contexts = (0..pop.len())
        .map(|i| Context::new(bi[i] as u8 + 1, bg[i] as u8 + 1, be[i] as u8 + 1))
        .collect();
    Ok(ContextAssignment {
        contexts,
        boundaries: QuintileBoundaries {
            income: lower_edges(&income, &bi),
            gas: lower_edges(&gas, &bg),
            electric: lower_edges(&electric, &be),
        },
        ids: pop.iter().map(|h| h.id.clone()).collect(),
    })
}

/// Column names of the household CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub id: String,
    pub gas: String,
    pub electric: String,
    pub summer_gas: String,
    pub income: String,
    pub roof: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            id: "id".into(),
            gas: "gas_therms_yr".into(),
            electric: "electric_kwh_yr".into(),
            summer_gas: "summer_gas_therms_yr".into(),
            income: "median_income_usd".into(),
            roof: "roof_m2".into(),
        }
    }
}

pub fn ingest_households(
    path: &Path,
    schema: &ColumnMapping,
) -> Result<Vec<Household>, PopulationError> {
    read_households(File::open(path)?, schema)
}

/// Parses household rows; rows are numbered from 1 after the header.
pub fn read_households<R: Read>(
    reader: R,
    schema: &ColumnMapping,
) -> Result<Vec<Household>, PopulationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PopulationError::MissingColumn {
                column: name.to_string(),
            })
    };
    let c_id = col(&schema.id)?;
    let c_gas = col(&schema.gas)?;
    let c_el = col(&schema.electric)?;
    let c_sg = col(&schema.summer_gas)?;
    let c_inc = col(&schema.income)?;
    let c_roof = col(&schema.roof)?;

    let mut pop = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |idx: usize, name: &str| -> Result<f64, PopulationError> {
            let raw = rec.get(idx).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(PopulationError::NonNumericField {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let non_negative = |v: f64, name: &str| {
            if v < 0.0 {
                Err(PopulationError::NegativeUsage {
                    row,
                    column: name.to_string(),
                    reason: format!("value {v} is negative"),
                })
            } else {
                Ok(v)
            }
        };
        let annual_gas = non_negative(num(c_gas, &schema.gas)?, &schema.gas)?;
        let annual_electric = non_negative(num(c_el, &schema.electric)?, &schema.electric)?;
        let summer_gas = non_negative(num(c_sg, &schema.summer_gas)?, &schema.summer_gas)?;
        let median_income = non_negative(num(c_inc, &schema.income)?, &schema.income)?;
        let roof_area = non_negative(num(c_roof, &schema.roof)?, &schema.roof)?;
        if summer_gas > annual_gas {
            return Err(PopulationError::NegativeUsage {
                row,
                column: schema.summer_gas.clone(),
                reason: format!("summer gas {summer_gas} exceeds annual gas {annual_gas}"),
            });
        }
        pop.push(Household {
            id: rec.get(c_id).unwrap_or("").to_string(),
            annual_gas,
            annual_electric,
            summer_gas,
            median_income,
            income_group: IncomeGroup::Medium,
            roof_area,
        });
    }
    assign_income_groups(&mut pop);
    Ok(pop)
}

/// Writes households in the default column layout.
pub fn write_households_csv<W: Write>(writer: W, pop: &[Household]) -> Result<(), PopulationError> {
    let m = ColumnMapping::default();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        &m.id,
        &m.gas,
        &m.electric,
        &m.summer_gas,
        &m.income,
        &m.roof,
    ])?;
    for h in pop {
        w.write_record([
            h.id.clone(),
            h.annual_gas.to_string(),
            h.annual_electric.to_string(),
            h.summer_gas.to_string(),
            h.median_income.to_string(),
            h.roof_area.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
