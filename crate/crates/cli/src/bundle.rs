//! The bundled synthetic dataset under `data/`, regenerated by
//! `cargo run -p stackbess-cli --example bundle`.

use std::fs;
use std::path::Path;

use anyhow::Result;
use chrono::NaiveDate;
use stackbess::io::{write_history_dir, write_price_scenario, write_series_file};
use stackbess::synthetic::{bundled_price_scenarios, history, reference_day};

pub const HISTORY_DAYS: usize = 90;
pub const HISTORY_SEED: u64 = 7;
pub const SCENARIOS: usize = 5;
pub const SCENARIO_SEED: u64 = 1;

pub fn bundle_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 6, 12).expect("valid date")
}

/// Data files the bundled `run.toml` refers to (it and `tariffs.toml` are
/// maintained by hand).
pub fn write_bundle(data: &Path) -> Result<()> {
    let date = bundle_date();
    let day = reference_day(date);
    let hist = data.join("history");
    fs::create_dir_all(&hist)?;
    write_history_dir(&hist, &history(date, HISTORY_DAYS, HISTORY_SEED))?;
    let scen = data.join("scenarios");
    fs::create_dir_all(&scen)?;
    for (i, (up, down)) in bundled_price_scenarios(*day.net.grid(), SCENARIOS, SCENARIO_SEED)
        .iter()
        .enumerate()
    {
        write_price_scenario(scen.join(format!("scenario_{i}.csv")), up, down)?;
    }
    write_series_file(data.join("pv_forecast.csv"), &day.pv)?;
    write_series_file(data.join("measured_net_load.csv"), &day.net)?;
    Ok(())
}
