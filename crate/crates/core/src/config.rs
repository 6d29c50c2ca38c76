//! Declarative run configuration: one TOML document describing the population,
//! resources, cost and carbon settings, and the sweep to execute.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acceptance::{CostScenario, DiscountPreset, DEFAULT_ELECTRIC_PRICE, DEFAULT_GAS_PRICE};
use crate::allocate::EquitySpec;
use crate::bandit::{ArmConfig, DEFAULT_ALPHA};
use crate::carbon::{
    synthetic_grid_trace, EmissionsContext, GridTrace, SccSchedule, BUNDLED_GRIDS,
    DEFAULT_GAS_EMISSION_FACTOR,
};
use crate::money::Cents;
use crate::pipeline::{EquityMode, Scenario, World, DEFAULT_START_YEAR, DEFAULT_SURVEY_SIZE};
use crate::population::{
    generate_population, ingest_households, ColumnMapping, Household, IncomeGroup, PopulationError,
    PopulationSpec, QUINTILES,
};
use crate::retrofit::{
    CopModel, DailyProfiles, EquipmentPrices, RetrofitParams, DEFAULT_ANNUAL_SOLAR_YIELD,
};

/// Environment variable naming the default resource directory.
pub const RESOURCE_DIR_ENV: &str = "INCENTIVE_RESOURCES";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("resource {what}: {reason}")]
    Resource { what: String, reason: String },
    #[error("population: {0}")]
    Population(#[from] PopulationError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Seeds the survey and threshold noise; the population has its own seed.
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub population: PopulationConfig,
    pub resources: ResourceConfig,
    pub retrofit: RetrofitConfig,
    pub cost: CostConfig,
    pub carbon: CarbonConfig,
    pub allocation: AllocationConfig,
    pub bandit: BanditConfig,
    pub breakeven: BreakEvenConfig,
    pub survey_diag: SurveyDiagConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "default".into(),
            seed: 7,
            workers: 1,
            out: None,
            population: PopulationConfig::default(),
            resources: ResourceConfig::default(),
            retrofit: RetrofitConfig::default(),
            cost: CostConfig::default(),
            carbon: CarbonConfig::default(),
            allocation: AllocationConfig::default(),
            bandit: BanditConfig::default(),
            breakeven: BreakEvenConfig::default(),
            survey_diag: SurveyDiagConfig::default(),
        }
    }
}

/// Households come from `csv` when set, otherwise from the generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub csv: Option<PathBuf>,
    pub columns: ColumnMapping,
    pub synthetic: PopulationSpec,
}

/// Resource files. With no directory (here or in the environment) the
/// built-in generators that produced the bundled files are used instead.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceConfig {
    pub dir: Option<PathBuf>,
    /// Overrides `<dir>/profiles/temperature.csv`.
    pub temperature: Option<PathBuf>,
    /// Overrides `<dir>/profiles/solar.csv`.
    pub solar: Option<PathBuf>,
    /// Overrides `<dir>/scc.csv`.
    pub scc: Option<PathBuf>,
    /// Grid name to trace file; overrides `<dir>/grids/<NAME>.csv`.
    pub grids: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrofitConfig {
    pub prices: EquipmentPrices,
    pub cop: CopModel,
    pub params: RetrofitParams,
    /// kWh/kW/yr of the built-in solar profile.
    pub annual_solar_yield: f64,
}

impl Default for RetrofitConfig {
    fn default() -> Self {
        RetrofitConfig {
            prices: EquipmentPrices::default(),
            cop: CopModel::default(),
            params: RetrofitParams::default(),
            annual_solar_yield: DEFAULT_ANNUAL_SOLAR_YIELD,
        }
    }
}

/// A named preset or an explicit annual rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiscountSetting {
    Preset(DiscountPreset),
    Rate(f64),
}

impl DiscountSetting {
    pub fn rate(self) -> f64 {
        match self {
            DiscountSetting::Preset(p) => p.rate(),
            DiscountSetting::Rate(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub discount: Vec<DiscountSetting>,
    pub payback_years: Vec<u32>,
    /// USD / therm
    pub gas_price: f64,
    /// USD / kWh
    pub electric_price: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            discount: vec![DiscountSetting::Preset(DiscountPreset::Moderate)],
            payback_years: vec![10],
            gas_price: DEFAULT_GAS_PRICE,
            electric_price: DEFAULT_ELECTRIC_PRICE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarbonConfig {
    pub grids: Vec<String>,
    /// kgCO2 / therm
    pub gas_emission_factor: f64,
    pub start_year: i32,
}

impl Default for CarbonConfig {
    fn default() -> Self {
        CarbonConfig {
            grids: vec!["PJM".into()],
            gas_emission_factor: DEFAULT_GAS_EMISSION_FACTOR,
            start_year: DEFAULT_START_YEAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationConfig {
    /// USD
    pub budgets: Vec<f64>,
    pub equity_modes: Vec<EquityMode>,
    pub shares: BTreeMap<IncomeGroup, f64>,
    pub horizon_years: u32,
    pub rollover: bool,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        AllocationConfig {
            budgets: (1..=10).map(|m| m as f64 * 1e6).collect(),
            equity_modes: vec![EquityMode::Agnostic],
            shares: EquitySpec::default().shares,
            horizon_years: 10,
            rollover: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub survey_size: usize,
    pub alpha: f64,
    /// USD
    pub nominal_incentive: f64,
    pub quantiles: [f64; 4],
    pub extra_rounds: u32,
    pub threshold_noise: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        let arms = ArmConfig::default();
        BanditConfig {
            survey_size: DEFAULT_SURVEY_SIZE,
            alpha: DEFAULT_ALPHA,
            nominal_incentive: arms.nominal.dollars(),
            quantiles: arms.quantiles,
            extra_rounds: 1,
            threshold_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreakEvenConfig {
    pub horizons: Vec<u32>,
}

impl Default for BreakEvenConfig {
    fn default() -> Self {
        BreakEvenConfig {
            horizons: vec![5, 10, 15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveyDiagConfig {
    pub sizes: Vec<usize>,
    pub seeds: u32,
    /// USD
    pub budget: f64,
}

impl Default for SurveyDiagConfig {
    fn default() -> Self {
        SurveyDiagConfig {
            sizes: (1..=10).map(|k| k * 100).collect(),
            seeds: 10,
            budget: 5e6,
        }
    }
}

/// Loaded profile, SCC and grid data.
#[derive(Debug, Clone)]
pub struct Resources {
    pub profiles: DailyProfiles,
    pub scc: SccSchedule,
    pub grids: BTreeMap<String, GridTrace>,
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn non_empty<T>(field: &str, v: &[T]) -> Result<(), ConfigError> {
    if v.is_empty() {
        Err(invalid(field, "must not be empty"))
    } else {
        Ok(())
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field that can be checked without reading resources.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.population.csv.is_none() {
            self.population
                .synthetic
                .validate()
                .map_err(|e| invalid("population.synthetic", e.to_string()))?;
        }
        let p = &self.retrofit.prices;
        positive("retrofit.prices.solar_per_kw", p.solar_per_kw)?;
        positive("retrofit.prices.battery_per_kwh", p.battery_per_kwh)?;
        positive("retrofit.prices.heatpump_benchmark", p.heatpump_benchmark)?;
        positive("retrofit.prices.waterheater", p.waterheater)?;
        self.retrofit
            .cop
            .validate()
            .map_err(|e| invalid("retrofit.cop", e.to_string()))?;
        self.retrofit
            .params
            .validate()
            .map_err(|e| invalid("retrofit.params", e.to_string()))?;
        positive(
            "retrofit.annual_solar_yield",
            self.retrofit.annual_solar_yield,
        )?;

        non_empty("cost.discount", &self.cost.discount)?;
        for (i, d) in self.cost.discount.iter().enumerate() {
            let r = d.rate();
            if !(r.is_finite() && r > -1.0) {
                return Err(invalid(
                    format!("cost.discount[{i}]"),
                    format!("rate must exceed -1, got {r}"),
                ));
            }
        }
        non_empty("cost.payback_years", &self.cost.payback_years)?;
        if let Some(i) = self.cost.payback_years.iter().position(|&t| t == 0) {
            return Err(invalid(
                format!("cost.payback_years[{i}]"),
                "must be at least 1",
            ));
        }
        positive("cost.gas_price", self.cost.gas_price)?;
        positive("cost.electric_price", self.cost.electric_price)?;

        non_empty("carbon.grids", &self.carbon.grids)?;
        if !(self.carbon.gas_emission_factor.is_finite() && self.carbon.gas_emission_factor >= 0.0)
        {
            return Err(invalid(
                "carbon.gas_emission_factor",
                "must be non-negative",
            ));
        }

        let a = &self.allocation;
        non_empty("allocation.budgets", &a.budgets)?;
        for (i, &b) in a.budgets.iter().enumerate() {
            positive(&format!("allocation.budgets[{i}]"), b)?;
        }
        non_empty("allocation.equity_modes", &a.equity_modes)?;
        EquitySpec::new(a.shares.clone())
            .map_err(|e| invalid("allocation.shares", e.to_string()))?;
        if a.horizon_years == 0 {
            return Err(invalid("allocation.horizon_years", "must be at least 1"));
        }

        let b = &self.bandit;
        if b.survey_size == 0 {
            return Err(invalid("bandit.survey_size", "must be at least 1"));
        }
        positive("bandit.alpha", b.alpha)?;
        positive("bandit.nominal_incentive", b.nominal_incentive)?;
        self.arm_config()
            .validate()
            .map_err(|e| invalid("bandit.quantiles", e.to_string()))?;
        if !(0.0..1.0).contains(&b.threshold_noise) {
            return Err(invalid(
                "bandit.threshold_noise",
                format!("must lie in [0, 1), got {}", b.threshold_noise),
            ));
        }

        non_empty("breakeven.horizons", &self.breakeven.horizons)?;
        non_empty("survey_diag.sizes", &self.survey_diag.sizes)?;
        if let Some(i) = self.survey_diag.sizes.iter().position(|&n| n == 0) {
            return Err(invalid(
                format!("survey_diag.sizes[{i}]"),
                "must be at least 1",
            ));
        }
        if self.survey_diag.seeds == 0 {
            return Err(invalid("survey_diag.seeds", "must be at least 1"));
        }
        positive("survey_diag.budget", self.survey_diag.budget)?;
        Ok(())
    }

    fn arm_config(&self) -> ArmConfig {
        ArmConfig {
            nominal: Cents::from_dollars(self.bandit.nominal_incentive),
            quantiles: self.bandit.quantiles,
        }
    }

    /// Explicit directory, else the environment variable, else none.
    pub fn resource_dir(&self) -> Option<PathBuf> {
        self.resources
            .dir
            .clone()
            .or_else(|| std::env::var_os(RESOURCE_DIR_ENV).map(PathBuf::from))
    }

    pub fn load_resources(&self) -> Result<Resources, ConfigError> {
        let dir = self.resource_dir();
        let file = |explicit: &Option<PathBuf>, rel: &str| {
            explicit
                .clone()
                .or_else(|| dir.as_ref().map(|d| d.join(rel)))
        };
        let resource = |what: &str, e: &dyn std::fmt::Display| ConfigError::Resource {
            what: what.into(),
            reason: e.to_string(),
        };

        let profiles = match (
            file(&self.resources.temperature, "profiles/temperature.csv"),
            file(&self.resources.solar, "profiles/solar.csv"),
        ) {
            (Some(t), Some(s)) => {
                DailyProfiles::load(&t, &s).map_err(|e| resource("profiles", &e))?
            }
            (None, None) => DailyProfiles::synthetic(self.retrofit.annual_solar_yield),
            _ => {
                return Err(invalid(
                    "resources",
                    "temperature and solar profiles must be given together",
                ))
            }
        };
        let scc = match file(&self.resources.scc, "scc.csv") {
            Some(p) => SccSchedule::load(&p).map_err(|e| resource("scc", &e))?,
            None => SccSchedule::epa_2pct(),
        };
        let mut grids = BTreeMap::new();
        for name in &self.carbon.grids {
            let path = self.resources.grids.get(name).cloned().or_else(|| {
                dir.as_ref()
                    .map(|d| d.join("grids").join(format!("{name}.csv")))
            });
            let trace = match path {
                Some(p) => {
                    GridTrace::load(name, &p).map_err(|e| resource(&format!("grid {name}"), &e))?
                }
                None => synthetic_grid_trace(name, 8760).ok_or_else(|| {
                    invalid(
                        "carbon.grids",
                        format!(
                            "unknown grid `{name}` (bundled: {})",
                            BUNDLED_GRIDS.join(", ")
                        ),
                    )
                })?,
            };
            grids.insert(name.clone(), trace);
        }
        let years = if self
            .allocation
            .equity_modes
            .iter()
            .any(|m| m.is_multiyear())
        {
            self.allocation.horizon_years
        } else {
            1
        };
        for y in [
            self.carbon.start_year,
            self.carbon.start_year + years as i32 - 1,
        ] {
            scc.get(y)
                .map_err(|e| invalid("carbon.start_year", e.to_string()))?;
        }
        Ok(Resources {
            profiles,
            scc,
            grids,
        })
    }

    pub fn households(&self) -> Result<Vec<Household>, ConfigError> {
        let pop = match &self.population.csv {
            Some(path) => ingest_households(path, &self.population.columns)?,
            None => generate_population(&self.population.synthetic)?,
        };
        if pop.len() < QUINTILES {
            return Err(invalid(
                "population",
                format!(
                    "{} households found, at least {QUINTILES} required",
                    pop.len()
                ),
            ));
        }
        Ok(pop)
    }

    /// Population checks that need the household count.
    pub fn check_population(&self, n: usize) -> Result<(), ConfigError> {
        if self.bandit.survey_size > n {
            return Err(invalid(
                "bandit.survey_size",
                format!("{} exceeds the population of {n}", self.bandit.survey_size),
            ));
        }
        if let Some(i) = self.survey_diag.sizes.iter().position(|&s| s > n) {
            return Err(invalid(
                format!("survey_diag.sizes[{i}]"),
                format!(
                    "{} exceeds the population of {n}",
                    self.survey_diag.sizes[i]
                ),
            ));
        }
        Ok(())
    }

    pub fn world(
        &self,
        households: Vec<Household>,
        res: &Resources,
    ) -> Result<World, crate::pipeline::PipelineError> {
        let r = &self.retrofit;
        World::new(households, r.cop, r.prices, r.params, res.profiles.clone())
    }

    pub fn cost_scenario(&self, discount: DiscountSetting, payback_years: u32) -> CostScenario {
        CostScenario {
            discount_rate: discount.rate(),
            payback_years,
            gas_price: self.cost.gas_price,
            electric_price: self.cost.electric_price,
        }
    }

    /// One scenario per (grid, discount, payback, equity mode), each carrying
    /// every budget.
    pub fn scenarios(&self, res: &Resources) -> Vec<Scenario> {
        let equity = EquitySpec {
            shares: self.allocation.shares.clone(),
        };
        let budgets: Vec<Cents> = self
            .allocation
            .budgets
            .iter()
            .map(|&b| Cents::from_dollars(b))
            .collect();
        let mut out = Vec::new();
        for grid in &self.carbon.grids {
            let trace = &res.grids[grid];
            for &discount in &self.cost.discount {
                for &t in &self.cost.payback_years {
                    for &mode in &self.allocation.equity_modes {
                        out.push(Scenario {
                            name: format!("{}/{grid}/r{}/T{t}/{mode}", self.name, discount.rate()),
                            cost: self.cost_scenario(discount, t),
                            grid: grid.clone(),
                            emissions: EmissionsContext {
                                grid_intensity: trace.mean_intensity(),
                                gas_emission_factor: self.carbon.gas_emission_factor,
                            },
                            scc: res.scc.clone(),
                            start_year: self.carbon.start_year,
                            budgets: budgets.clone(),
                            survey_size: self.bandit.survey_size,
                            seed: self.seed,
                            equity_mode: mode,
                            equity: equity.clone(),
                            horizon_years: self.allocation.horizon_years,
                            rollover: self.allocation.rollover,
                            threshold_noise: self.bandit.threshold_noise,
                            arms: self.arm_config(),
                            alpha: self.bandit.alpha,
                            extra_rounds: self.bandit.extra_rounds,
                        });
                    }
                }
            }
        }
        out
    }
}
