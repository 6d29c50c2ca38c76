//! Annual carbon reduction of a retrofit and its value under a year-indexed
//! Social Cost of Carbon schedule.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::Household;
use crate::retrofit::RetrofitOutcome;

#[derive(Debug, Error)]
pub enum CarbonError {
    #[error("year {year} is not covered by the SCC schedule ({first}..={last})")]
    YearOutOfSchedule { year: i32, first: i32, last: i32 },
    #[error("adoption year {adopt} is after horizon end {horizon}")]
    InvalidHorizon { adopt: i32, horizon: i32 },
    #[error("invalid SCC schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid grid trace: {0}")]
    InvalidTrace(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Emission factors used to turn energy into CO2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionsContext {
    /// gCO2eq / kWh, annual mean of the grid trace.
    pub grid_intensity: f64,
    /// kgCO2 / therm.
    pub gas_emission_factor: f64,
}

pub const DEFAULT_GAS_EMISSION_FACTOR: f64 = 5.3;

impl EmissionsContext {
    pub fn new(grid_intensity: f64, gas_emission_factor: f64) -> Result<Self, CarbonError> {
        if !(grid_intensity >= 0.0 && gas_emission_factor >= 0.0) {
            return Err(CarbonError::InvalidTrace(format!(
                "emission factors must be non-negative (grid {grid_intensity}, gas {gas_emission_factor})"
            )));
        }
        Ok(EmissionsContext {
            grid_intensity,
            gas_emission_factor,
        })
    }

    /// Metric tons per year emitted by a household with no intervention.
    pub fn baseline_tons(&self, h: &Household) -> f64 {
        (h.annual_gas * self.gas_emission_factor + h.annual_electric * self.grid_intensity / 1000.0)
            / 1000.0
    }
}

/// tCO2/year avoided by a retrofit. Negative when added grid draw outweighs the
/// eliminated gas.
pub fn annual_reduction(outcome: &RetrofitOutcome, h: &Household, ctx: &EmissionsContext) -> f64 {
    reduction_tons(outcome.g, h.annual_electric - outcome.e_prime, ctx)
}

/// `g` therms of gas eliminated and `delta_e` kWh less grid draw, in tCO2.
pub fn reduction_tons(g: f64, delta_e: f64, ctx: &EmissionsContext) -> f64 {
    (g * ctx.gas_emission_factor + delta_e * ctx.grid_intensity / 1000.0) / 1000.0
}

/// USD per metric ton of CO2, by calendar year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct SccSchedule {
    by_year: BTreeMap<i32, f64>,
}

impl SccSchedule {
    pub fn new(by_year: BTreeMap<i32, f64>) -> Result<Self, CarbonError> {
        if by_year.is_empty() {
            return Err(CarbonError::InvalidSchedule("schedule is empty".into()));
        }
        if let Some((y, v)) = by_year.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(CarbonError::InvalidSchedule(format!(
                "SCC for {y} must be positive, got {v}"
            )));
        }
        let first = *by_year.keys().next().unwrap();
        let last = *by_year.keys().next_back().unwrap();
        if (last - first + 1) as usize != by_year.len() {
            return Err(CarbonError::InvalidSchedule(format!(
                "years {first}..={last} are not contiguous"
            )));
        }
        Ok(SccSchedule { by_year })
    }

    pub fn constant(value: f64, first: i32, last: i32) -> Result<Self, CarbonError> {
        SccSchedule::new((first..=last).map(|y| (y, value)).collect())
    }

    /// The EPA 2% near-term discount-rate series (2020 USD), decade anchors
    /// linearly interpolated to annual values, 2020 through 2080.
    pub fn epa_2pct() -> Self {
        const ANCHORS: [(i32, f64); 7] = [
            (2020, 190.0),
            (2030, 230.0),
            (2040, 270.0),
            (2050, 310.0),
            (2060, 350.0),
            (2070, 380.0),
            (2080, 410.0),
        ];
        let mut by_year = BTreeMap::new();
        for w in ANCHORS.windows(2) {
            let ((y0, v0), (y1, v1)) = (w[0], w[1]);
            for y in y0..y1 {
                by_year.insert(y, v0 + (v1 - v0) * f64::from(y - y0) / f64::from(y1 - y0));
            }
        }
        by_year.insert(2080, 410.0);
        SccSchedule { by_year }
    }

    pub fn first_year(&self) -> i32 {
        *self.by_year.keys().next().expect("non-empty schedule")
    }

    pub fn last_year(&self) -> i32 {
        *self.by_year.keys().next_back().expect("non-empty schedule")
    }

    pub fn get(&self, year: i32) -> Result<f64, CarbonError> {
        self.by_year
            .get(&year)
            .copied()
            .ok_or(CarbonError::YearOutOfSchedule {
                year,
                first: self.first_year(),
                last: self.last_year(),
            })
    }

    pub fn years(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.by_year.iter().map(|(y, v)| (*y, *v))
    }

    /// CSV with header `year,usd_per_ton`.
    pub fn load(path: &Path) -> Result<Self, CarbonError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(File::open(path)?);
        let mut by_year = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |idx: usize| rec.get(idx).and_then(|s| s.parse::<f64>().ok());
            match (rec.get(0).and_then(|s| s.parse::<i32>().ok()), parse(1)) {
                (Some(y), Some(v)) => {
                    by_year.insert(y, v);
                }
                _ => {
                    return Err(CarbonError::InvalidSchedule(format!(
                        "row {} is malformed",
                        i + 1
                    )))
                }
            }
        }
        SccSchedule::new(by_year)
    }
}

impl TryFrom<BTreeMap<String, f64>> for SccSchedule {
    type Error = CarbonError;

    fn try_from(raw: BTreeMap<String, f64>) -> Result<Self, CarbonError> {
        let mut by_year = BTreeMap::new();
        for (k, v) in raw {
            let y: i32 = k
                .trim()
                .parse()
                .map_err(|_| CarbonError::InvalidSchedule(format!("`{k}` is not a year")))?;
            by_year.insert(y, v);
        }
        SccSchedule::new(by_year)
    }
}

impl From<SccSchedule> for BTreeMap<String, f64> {
    fn from(s: SccSchedule) -> Self {
        s.by_year
            .into_iter()
            .map(|(y, v)| (y.to_string(), v))
            .collect()
    }
}

/// Single-year dollar value of `annual_tons`.
pub fn monetize(annual_tons: f64, year: i32, scc: &SccSchedule) -> Result<f64, CarbonError> {
    Ok(annual_tons * scc.get(year)?)
}

/// Value of a constant annual reduction from adoption in `adopt_year` through
/// `horizon_end`, each year priced at that year's SCC.
pub fn projected_value(
    annual_tons: f64,
    adopt_year: i32,
    horizon_end: i32,
    scc: &SccSchedule,
) -> Result<f64, CarbonError> {
    if adopt_year > horizon_end {
        return Err(CarbonError::InvalidHorizon {
            adopt: adopt_year,
            horizon: horizon_end,
        });
    }
    (adopt_year..=horizon_end)
        .map(|t| monetize(annual_tons, t, scc))
        .sum()
}

/// An hourly grid carbon-intensity trace (gCO2eq/kWh).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTrace {
    pub name: String,
    pub hourly: Vec<f64>,
}

impl GridTrace {
    pub fn mean_intensity(&self) -> f64 {
        self.hourly.iter().sum::<f64>() / self.hourly.len() as f64
    }

    /// CSV with header `timestamp,gco2_per_kwh`.
    pub fn read<R: Read>(name: &str, reader: R) -> Result<Self, CarbonError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut hourly = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let raw = rec.get(1).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => hourly.push(v),
                _ => {
                    return Err(CarbonError::InvalidTrace(format!(
                        "{name}: row {} has intensity `{raw}`",
                        i + 1
                    )))
                }
            }
        }
        if hourly.is_empty() {
            return Err(CarbonError::InvalidTrace(format!("{name}: no rows")));
        }
        Ok(GridTrace {
            name: name.to_string(),
            hourly,
        })
    }

    pub fn load(name: &str, path: &Path) -> Result<Self, CarbonError> {
        GridTrace::read(name, File::open(path)?)
    }
}

/// Bundled trace names in increasing order of annual mean intensity.
pub const BUNDLED_GRIDS: [&str; 6] = ["BPAT", "CAISO", "ISO-NE", "PJM", "PACE", "SC"];

/// Parameters of the synthetic stand-in for each bundled region:
/// (annual mean, seasonal amplitude, diurnal amplitude), gCO2eq/kWh.
pub fn bundled_grid_shape(name: &str) -> Option<(f64, f64, f64)> {
    match name {
        "BPAT" => Some((90.0, 25.0, 10.0)),
        "CAISO" => Some((220.0, 30.0, 60.0)),
        "ISO-NE" => Some((290.0, 35.0, 25.0)),
        "PJM" => Some((390.0, 30.0, 30.0)),
        "PACE" => Some((560.0, 40.0, 35.0)),
        "SC" => Some((640.0, 45.0, 40.0)),
        _ => None,
    }
}

/// Deterministic hourly intensity for a bundled region over `hours` hours
/// starting at midnight on January 1.
pub fn synthetic_grid_trace(name: &str, hours: usize) -> Option<GridTrace> {
    use std::f64::consts::TAU;
    let (mean, seasonal, diurnal) = bundled_grid_shape(name)?;
    let hourly = (0..hours)
        .map(|h| {
            let day = h as f64 / 24.0;
            let hour = (h % 24) as f64;
            // winter and evening peaks
            let s = seasonal * (TAU * (day - 15.0) / 365.0).cos();
            let d = diurnal * (TAU * (hour - 19.0) / 24.0).cos();
            (mean + s + d).max(0.0)
        })
        .collect();
    Some(GridTrace {
        name: name.to_string(),
        hourly,
    })
}
