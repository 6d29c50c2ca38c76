//! Equipment sizing and costing for the two decarbonization packages, and the
//! resulting post-retrofit grid draw `e'(h)` and eliminated gas `g(h)`.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::Household;

/// kWh of heat per therm of gas.
pub const KWH_PER_THERM: f64 = 29.307;

/// kWh per installed kW per year for the bundled solar profile.
pub const DEFAULT_ANNUAL_SOLAR_YIELD: f64 = 1750.0;

#[derive(Debug, Error)]
pub enum RetrofitError {
    #[error("temperature profile is empty")]
    EmptyTempProfile,
    #[error("solar profile is empty")]
    EmptySolarProfile,
    #[error("temperature profile has {temp} days but solar profile has {solar}")]
    ProfileLengthMismatch { temp: usize, solar: usize },
    #[error("profile row {row}: {reason}")]
    InvalidProfile { row: usize, reason: String },
    #[error("invalid retrofit parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Package {
    JustHeatPump,
    FullReplacement,
}

impl Package {
    pub const ALL: [Package; 2] = [Package::JustHeatPump, Package::FullReplacement];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Package {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Package::JustHeatPump => "just_heat_pump",
            Package::FullReplacement => "full_replacement",
        })
    }
}

/// Installed equipment prices in USD (after tax credits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquipmentPrices {
    pub solar_per_kw: f64,
    pub battery_per_kwh: f64,
    /// Heat pump price for the median heating-gas household.
    pub heatpump_benchmark: f64,
    pub waterheater: f64,
}

impl Default for EquipmentPrices {
    fn default() -> Self {
        EquipmentPrices {
            solar_per_kw: 2002.0,
            battery_per_kwh: 1047.0,
            heatpump_benchmark: 5250.0,
            waterheater: 1575.0,
        }
    }
}

impl EquipmentPrices {
    pub fn validate(&self) -> Result<(), RetrofitError> {
        for (name, v) in [
            ("solar_per_kw", self.solar_per_kw),
            ("battery_per_kwh", self.battery_per_kwh),
            ("heatpump_benchmark", self.heatpump_benchmark),
            ("waterheater", self.waterheater),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RetrofitError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Piecewise-linear heat pump COP with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopModel {
    pub cop_at_reference: f64,
    /// COP change per °C.
    pub slope: f64,
    pub reference_temp: f64,
    pub floor: f64,
}

impl Default for CopModel {
    fn default() -> Self {
        CopModel {
            cop_at_reference: 3.0,
            slope: 0.06,
            reference_temp: 8.0,
            floor: 1.5,
        }
    }
}

impl CopModel {
    pub fn cop(&self, temp_c: f64) -> f64 {
        (self.cop_at_reference + self.slope * (temp_c - self.reference_temp)).max(self.floor)
    }

    pub fn validate(&self) -> Result<(), RetrofitError> {
        if !(self.cop_at_reference > 1.0) {
            return Err(RetrofitError::InvalidParameter(
                "cop_at_reference must exceed 1".into(),
            ));
        }
        if !(self.floor >= 1.0) {
            return Err(RetrofitError::InvalidParameter(
                "COP floor must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Modeling constants that the equipment prices do not cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrofitParams {
    /// Electric kWh per kWh of gas heat for replaced non-heating appliances.
    pub appliance_efficiency_ratio: f64,
    /// Share of daily demand that falls in daylight hours.
    pub daytime_fraction: f64,
    pub solar_area_per_kw: f64,
    /// Heating degree-day base temperature, °C.
    pub heating_base_temp: f64,
    pub include_solar_battery: bool,
}

impl Default for RetrofitParams {
    fn default() -> Self {
        RetrofitParams {
            appliance_efficiency_ratio: 0.9,
            daytime_fraction: 0.5,
            solar_area_per_kw: 5.5,
            heating_base_temp: 18.3,
            include_solar_battery: true,
        }
    }
}

impl RetrofitParams {
    pub fn validate(&self) -> Result<(), RetrofitError> {
        if !(self.appliance_efficiency_ratio > 0.0) {
            return Err(RetrofitError::InvalidParameter(
                "appliance_efficiency_ratio must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.daytime_fraction) {
            return Err(RetrofitError::InvalidParameter(
                "daytime_fraction must lie in [0, 1]".into(),
            ));
        }
        if !(self.solar_area_per_kw > 0.0) {
            return Err(RetrofitError::InvalidParameter(
                "solar_area_per_kw must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Daily ambient temperature (°C) and normalized solar yield (kWh per installed kW).
#[derive(Debug, Clone, PartialEq)]
pub struct DailyProfiles {
    pub temperature_c: Vec<f64>,
    pub solar_kwh_per_kw: Vec<f64>,
}

impl DailyProfiles {
    pub fn new(temperature_c: Vec<f64>, solar_kwh_per_kw: Vec<f64>) -> Result<Self, RetrofitError> {
        if temperature_c.is_empty() {
            return Err(RetrofitError::EmptyTempProfile);
        }
        if solar_kwh_per_kw.is_empty() {
            return Err(RetrofitError::EmptySolarProfile);
        }
        if temperature_c.len() != solar_kwh_per_kw.len() {
            return Err(RetrofitError::ProfileLengthMismatch {
                temp: temperature_c.len(),
                solar: solar_kwh_per_kw.len(),
            });
        }
        Ok(DailyProfiles {
            temperature_c,
            solar_kwh_per_kw,
        })
    }

    /// A 365-day northeastern-US-like temperature curve (coldest mid-January)
    /// and a sunny-site solar shape scaled to `annual_yield` kWh/kW.
    pub fn synthetic(annual_yield: f64) -> Self {
        use std::f64::consts::TAU;
        let days = 365;
        let temperature_c = (0..days)
            .map(|d| 10.0 - 13.0 * (TAU * (d as f64 - 15.0) / days as f64).cos())
            .collect();
        let shape: Vec<f64> = (0..days)
            .map(|d| 1.0 - 0.3 * (TAU * (d as f64 - 172.0) / days as f64).cos())
            .collect();
        let total: f64 = shape.iter().sum();
        let solar_kwh_per_kw = shape.iter().map(|s| annual_yield * s / total).collect();
        DailyProfiles {
            temperature_c,
            solar_kwh_per_kw,
        }
    }

    pub fn days(&self) -> usize {
        self.temperature_c.len()
    }

    pub fn annual_yield_per_kw(&self) -> f64 {
        self.solar_kwh_per_kw.iter().sum()
    }

    pub fn load(temperature: &Path, solar: &Path) -> Result<Self, RetrofitError> {
        let temps = read_profile(File::open(temperature)?, ProfileKind::Temperature)?;
        let solar = read_profile(File::open(solar)?, ProfileKind::Solar)?;
        DailyProfiles::new(temps, solar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// Hourly rows are averaged into days.
    Temperature,
    /// Hourly rows are summed into days.
    Solar,
}

/// Reads a profile CSV (header row; value in the last column). More than 366
/// rows in a multiple of 24 is treated as hourly data and folded into days.
pub fn read_profile<R: Read>(reader: R, kind: ProfileKind) -> Result<Vec<f64>, RetrofitError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(rec.len().saturating_sub(1)).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| RetrofitError::InvalidProfile {
            row: i + 1,
            reason: format!("`{raw}` is not a number"),
        })?;
        if !v.is_finite() || (kind == ProfileKind::Solar && v < 0.0) {
            return Err(RetrofitError::InvalidProfile {
                row: i + 1,
                reason: format!("bad value {v}"),
            });
        }
        values.push(v);
    }
    if values.len() > 366 && values.len() % 24 == 0 {
        values = values
            .chunks(24)
            .map(|day| match kind {
                ProfileKind::Temperature => day.iter().sum::<f64>() / 24.0,
                ProfileKind::Solar => day.iter().sum(),
            })
            .collect();
    }
    Ok(values)
}

/// Per-day share of annual space-heating load, proportional to heating degree days.
pub fn heating_shares(temperature_c: &[f64], base_temp: f64) -> Result<Vec<f64>, RetrofitError> {
    if temperature_c.is_empty() {
        return Err(RetrofitError::EmptyTempProfile);
    }
    let hdd: Vec<f64> = temperature_c
        .iter()
        .map(|t| (base_temp - t).max(0.0))
        .collect();
    let total: f64 = hdd.iter().sum();
    if total <= 0.0 {
        let n = temperature_c.len() as f64;
        return Ok(vec![1.0 / n; temperature_c.len()]);
    }
    Ok(hdd.into_iter().map(|h| h / total).collect())
}

/// Heat pump sizing result.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatPumpSizing {
    pub annual_kwh: f64,
    pub daily_kwh: Vec<f64>,
    pub cost: f64,
}

/// Sizes the air-source heat pump that replaces a household's heating gas.
///
/// `median_heating_gas` is the population median over households that heat with
/// gas; a household at the median pays exactly the benchmark price.
pub fn size_heatpump(
    h: &Household,
    cop: &CopModel,
    temperature_c: &[f64],
    median_heating_gas: f64,
    base_temp: f64,
    prices: &EquipmentPrices,
) -> Result<HeatPumpSizing, RetrofitError> {
    let shares = heating_shares(temperature_c, base_temp)?;
    let heating = h.heating_gas();
    let thermal_kwh = heating * KWH_PER_THERM;
    let daily_kwh: Vec<f64> = shares
        .iter()
        .zip(temperature_c)
        .map(|(s, &t)| thermal_kwh * s / cop.cop(t))
        .collect();
    let cost = if heating > 0.0 && median_heating_gas > 0.0 {
        prices.heatpump_benchmark * heating / median_heating_gas
    } else {
        0.0
    };
    Ok(HeatPumpSizing {
        annual_kwh: daily_kwh.iter().sum(),
        daily_kwh,
        cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarBattery {
    pub solar_kw: f64,
    pub battery_kwh: f64,
    pub cost: f64,
}

/// Sizes rooftop PV to the annual demand (capped by roof area) and the battery to
/// the largest daily surplus of generation over daytime demand.
pub fn size_solar_battery(
    roof_area: f64,
    solar_kwh_per_kw: &[f64],
    daily_demand: &[f64],
    prices: &EquipmentPrices,
    params: &RetrofitParams,
) -> SolarBattery {
    let annual_yield: f64 = solar_kwh_per_kw.iter().sum();
    let post_demand: f64 = daily_demand.iter().sum();
    if annual_yield <= 0.0 || post_demand <= 0.0 || roof_area <= 0.0 {
        return SolarBattery {
            solar_kw: 0.0,
            battery_kwh: 0.0,
            cost: 0.0,
        };
    }
    let solar_kw = (post_demand / annual_yield).min(roof_area / params.solar_area_per_kw);
    let battery_kwh = solar_kwh_per_kw
        .iter()
        .zip(daily_demand)
        .map(|(y, d)| solar_kw * y - params.daytime_fraction * d)
        .fold(0.0_f64, f64::max);
    SolarBattery {
        solar_kw,
        battery_kwh,
        cost: solar_kw * prices.solar_per_kw + battery_kwh * prices.battery_per_kwh,
    }
}

/// Per-(household, package) retrofit result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrofitOutcome {
    pub household_id: String,
    pub package: Package,
    /// Eliminated gas, therms/year.
    pub g: f64,
    /// Residual grid electricity after the retrofit, kWh/year.
    pub e_prime: f64,
    /// USD.
    pub install_cost: f64,
    pub solar_kw: f64,
    pub battery_kwh: f64,
    pub heatpump_kwh: f64,
    pub appliance_kwh: f64,
    /// Annual demand after electrification, before solar.
    pub new_demand: f64,
    pub solar_generation: f64,
}

/// Everything needed to evaluate retrofits for one population.
#[derive(Debug, Clone)]
pub struct RetrofitModel {
    pub cop: CopModel,
    pub prices: EquipmentPrices,
    pub params: RetrofitParams,
    pub profiles: DailyProfiles,
    pub median_heating_gas: f64,
}

impl RetrofitModel {
    pub fn new(
        cop: CopModel,
        prices: EquipmentPrices,
        params: RetrofitParams,
        profiles: DailyProfiles,
        pop: &[Household],
    ) -> Result<Self, RetrofitError> {
        cop.validate()?;
        prices.validate()?;
        params.validate()?;
        Ok(RetrofitModel {
            cop,
            prices,
            params,
            profiles,
            median_heating_gas: median_heating_gas(pop),
        })
    }

    pub fn evaluate(&self, h: &Household, pkg: Package) -> Result<RetrofitOutcome, RetrofitError> {
        evaluate_retrofit(h, pkg, self)
    }
}

/// Median heating gas among households that heat with gas (0 if none do).
pub fn median_heating_gas(pop: &[Household]) -> f64 {
    let mut v: Vec<f64> = pop
        .iter()
        .map(Household::heating_gas)
        .filter(|g| *g > 0.0)
        .collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn evaluate_retrofit(
    h: &Household,
    pkg: Package,
    model: &RetrofitModel,
) -> Result<RetrofitOutcome, RetrofitError> {
    let profiles = &model.profiles;
    let params = &model.params;
    let days = profiles.days();
    let hp = size_heatpump(
        h,
        &model.cop,
        &profiles.temperature_c,
        model.median_heating_gas,
        params.heating_base_temp,
        &model.prices,
    )?;

    let (g, appliance_kwh, appliance_cost) = match pkg {
        Package::JustHeatPump => (h.heating_gas(), 0.0, 0.0),
        Package::FullReplacement => {
            let cost = if h.summer_gas > 0.0 {
                model.prices.waterheater
            } else {
                0.0
            };
            (
                h.annual_gas,
                h.summer_gas * KWH_PER_THERM * params.appliance_efficiency_ratio,
                cost,
            )
        }
    };

    let flat = (h.annual_electric + appliance_kwh) / days as f64;
    let daily_demand: Vec<f64> = hp.daily_kwh.iter().map(|hp_day| flat + hp_day).collect();
    let new_demand: f64 = daily_demand.iter().sum();

    let sb = if params.include_solar_battery {
        size_solar_battery(
            h.roof_area,
            &profiles.solar_kwh_per_kw,
            &daily_demand,
            &model.prices,
            params,
        )
    } else {
        SolarBattery {
            solar_kw: 0.0,
            battery_kwh: 0.0,
            cost: 0.0,
        }
    };

    // Daily dispatch: PV serves daytime load, surplus charges the battery, the
    // battery serves the night. Excess generation is exported without credit.
    let mut grid = 0.0;
    let mut generation = 0.0;
    for (d, demand) in daily_demand.iter().enumerate() {
        let gen = sb.solar_kw * profiles.solar_kwh_per_kw[d];
        let day_load = params.daytime_fraction * demand;
        let night_load = demand - day_load;
        let direct = gen.min(day_load);
        let discharge = (gen - direct).min(sb.battery_kwh).min(night_load);
        grid += demand - direct - discharge;
        generation += gen;
    }

    Ok(RetrofitOutcome {
        household_id: h.id.clone(),
        package: pkg,
        g,
        e_prime: grid.max(0.0),
        install_cost: hp.cost + sb.cost + appliance_cost,
        solar_kw: sb.solar_kw,
        battery_kwh: sb.battery_kwh,
        heatpump_kwh: hp.annual_kwh,
        appliance_kwh,
        new_demand,
        solar_generation: generation,
    })
}
