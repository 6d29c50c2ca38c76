//! Regenerates the bundled resource files from the built-in generators.
//!
//! cargo run -p incentive-core --example write_resources -- resources

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use incentive_core::carbon::{synthetic_grid_trace, SccSchedule, BUNDLED_GRIDS};
use incentive_core::retrofit::{DailyProfiles, DEFAULT_ANNUAL_SOLAR_YIELD};

const MONTH_DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

fn date(day_of_year: usize) -> (usize, usize) {
    let mut d = day_of_year;
    for (m, &len) in MONTH_DAYS.iter().enumerate() {
        if d < len {
            return (m + 1, d + 1);
        }
        d -= len;
    }
    unreachable!("day {day_of_year} beyond a 365-day year")
}

fn main() -> std::io::Result<()> {
    let root = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "resources".into()),
    );
    fs::create_dir_all(root.join("grids"))?;
    fs::create_dir_all(root.join("profiles"))?;

    for name in BUNDLED_GRIDS {
        let trace = synthetic_grid_trace(name, 8760).expect("bundled grid");
        let mut f = fs::File::create(root.join("grids").join(format!("{name}.csv")))?;
        writeln!(f, "timestamp,gco2_per_kwh")?;
        for (h, v) in trace.hourly.iter().enumerate() {
            let (month, day) = date(h / 24);
            writeln!(f, "2023-{month:02}-{day:02}T{:02}:00,{v}", h % 24)?;
        }
    }

    let profiles = DailyProfiles::synthetic(DEFAULT_ANNUAL_SOLAR_YIELD);
    let mut t = fs::File::create(root.join("profiles/temperature.csv"))?;
    let mut s = fs::File::create(root.join("profiles/solar.csv"))?;
    writeln!(t, "day,temperature_c")?;
    writeln!(s, "day,kwh_per_kw")?;
    for (d, (temp, solar)) in profiles
        .temperature_c
        .iter()
        .zip(&profiles.solar_kwh_per_kw)
        .enumerate()
    {
        writeln!(t, "{},{temp}", d + 1)?;
        writeln!(s, "{},{solar}", d + 1)?;
    }

    let mut f = fs::File::create(root.join("scc.csv"))?;
    writeln!(f, "year,usd_per_ton")?;
    for (year, v) in SccSchedule::epa_2pct().years() {
        writeln!(f, "{year},{v}")?;
    }
    Ok(())
}
