//! Bundled synthetic site: a campus-like building with rooftop PV, a
//! history of similar days, and aFRR price scenarios.
//!
//! Shapes are hand-tuned so the reference day's net load peaks near 86 kW
//! before the PV ramps up and turns negative around noon.

use std::f64::consts::PI;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::forecasting::{DayType, HistoryDay};
use crate::markets::{
    threshold_premiums, Scenario, ScenarioSet, TariffBook, ThresholdedPremium, TimeOfUse,
};
use crate::scheduler::BatteryParams;
use crate::series::{SiteParams, TimeGrid, TimeSeries, Unit};

pub const PV_CAPACITY_KW: f64 = 135.0;
pub const SUNRISE_H: f64 = 6.0;
pub const SUNSET_H: f64 = 20.5;

/// Irradiance on a clear reference day, W/m2 daily mean.
pub const CLEAR_IRRADIANCE: f64 = 300.0;

pub fn midnight(date: NaiveDate) -> NaiveDateTime {
    date.and_hms_opt(0, 0, 0).expect("midnight exists")
}

/// 264 kWh / 140 kW, 10-90 % window, starting half full.
pub fn reference_battery() -> BatteryParams {
    BatteryParams::from_fractions(264.0, 0.1, 0.9, 140.0, 0.95, 0.5).expect("valid battery")
}

pub fn reference_site() -> SiteParams {
    SiteParams::new(400.0, 140.0).expect("valid site")
}

pub fn reference_tariffs(grid: TimeGrid) -> TariffBook {
    TariffBook::time_of_use(grid, &TimeOfUse::default()).expect("valid tariffs")
}

fn bump(h: f64, center: f64, width: f64) -> f64 {
    (-((h - center) / width).powi(2) / 2.0).exp()
}

/// Gross building demand at hour `h`, kW.
fn gross_kw(h: f64, day_type: DayType, scale: f64) -> f64 {
    let base = 38.0;
    let activity = match day_type {
        DayType::Working => {
            let ramp =
                1.0 / (1.0 + (-(h - 6.5) * 3.0).exp()) - 1.0 / (1.0 + (-(h - 18.5) * 2.0).exp());
            58.0 * ramp + 30.0 * bump(h, 7.6, 0.7) + 12.0 * bump(h, 12.3, 0.6)
        }
        DayType::NonWorking => 10.0 * bump(h, 13.0, 3.0),
    };
    base + scale * activity
}

/// Half-sine PV profile at hour `h` for a given clearness, kW.
fn pv_kw(h: f64, clearness: f64) -> f64 {
    if h <= SUNRISE_H || h >= SUNSET_H {
        return 0.0;
    }
    PV_CAPACITY_KW * 0.85 * clearness * (PI * (h - SUNRISE_H) / (SUNSET_H - SUNRISE_H)).sin()
}

/// Step averages of a profile, sampled at 1-minute resolution.
fn averaged(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let dt = grid.step_hours();
    let sub = (grid.step_seconds() / 60).max(1) as usize;
    (0..grid.steps())
        .map(|i| {
            let a = i as f64 * dt;
            (0..sub)
                .map(|j| f(a + (j as f64 + 0.5) * dt / sub as f64))
                .sum::<f64>()
                / sub as f64
        })
        .collect()
}

/// Reference day: gross load, PV and net load at 15 min.
pub struct SyntheticDay {
    pub gross: TimeSeries,
    pub pv: TimeSeries,
    pub net: TimeSeries,
}

pub fn reference_day(date: NaiveDate) -> SyntheticDay {
    day_profile(date, DayType::Working, 1.0, 1.0)
}

fn day_profile(date: NaiveDate, day_type: DayType, scale: f64, clearness: f64) -> SyntheticDay {
    let grid = TimeGrid::day_ahead(midnight(date));
    let gross = averaged(grid, |h| gross_kw(h, day_type, scale));
    let pv = averaged(grid, |h| pv_kw(h, clearness));
    let net = gross.iter().zip(&pv).map(|(g, p)| g - p).collect();
    SyntheticDay {
        gross: TimeSeries::new(grid, gross, Unit::Kw).expect("finite"),
        pv: TimeSeries::new(grid, pv, Unit::Kw).expect("finite"),
        net: TimeSeries::new(grid, net, Unit::Kw).expect("finite"),
    }
}

/// `days` consecutive days ending the day before `target`, with mild
/// day-to-day variation in demand and weather.
pub fn history(target: NaiveDate, days: usize, seed: u64) -> Vec<HistoryDay> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=days)
        .rev()
        .map(|back| {
            let date = target - Duration::days(back as i64);
            let day_type = DayType::of(date);
            let scale = 1.0 + rng.random_range(-0.06..0.06);
            let clearness: f64 = rng.random_range(0.55..1.0);
            let temperature = 14.0 + 10.0 * clearness + rng.random_range(-3.0..3.0);
            let mut d = day_profile(date, day_type, scale, clearness);
            // Small per-step wiggle so that no two days are identical.
            let wiggle: Vec<f64> = d
                .gross
                .values()
                .iter()
                .map(|&v| v + rng.random_range(-1.5..1.5))
                .collect();
            d.gross = TimeSeries::new(*d.gross.grid(), wiggle, Unit::Kw).expect("finite");
            HistoryDay::new(
                date,
                day_type,
                CLEAR_IRRADIANCE * clearness,
                temperature,
                d.gross,
                d.pv,
            )
            .expect("valid history day")
        })
        .collect()
}

/// Raw aFRR price scenarios `(up, down)` in CHF/kWh. At most one direction
/// carries a price above the tariff at any step; otherwise a low price is
/// issued.
pub fn afrr_price_scenarios(
    grid: TimeGrid,
    count: usize,
    seed: u64,
) -> Vec<(TimeSeries, TimeSeries)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut up = Vec::with_capacity(grid.steps());
            let mut down = Vec::with_capacity(grid.steps());
            for _ in 0..grid.steps() {
                let u: f64 = rng.random();
                let high = rng.random_range(0.18..0.40);
                let low = rng.random_range(0.02..0.15);
                let (a, b) = if u < 0.15 {
                    (high, low)
                } else if u < 0.30 {
                    (low, high)
                } else {
                    (low, rng.random_range(0.02..0.15))
                };
                up.push(a);
                down.push(b);
            }
            (
                TimeSeries::new(grid, up, Unit::ChfPerKwh).expect("finite"),
                TimeSeries::new(grid, down, Unit::ChfPerKwh).expect("finite"),
            )
        })
        .collect()
}

/// A day whose aFRR prices never beat the import tariff.
pub fn quiet_prices(grid: TimeGrid) -> (TimeSeries, TimeSeries) {
    let low = TimeSeries::constant(grid, 0.05, Unit::ChfPerKwh).expect("finite");
    (low.clone(), low)
}

/// Bundled scenario prices: one quiet day plus `count - 1` random days. The
/// quiet day keeps the shared local plan feasible on its own, since realized
/// activations are far sparser than a premium held for a whole interval.
pub fn bundled_price_scenarios(
    grid: TimeGrid,
    count: usize,
    seed: u64,
) -> Vec<(TimeSeries, TimeSeries)> {
    let mut out = vec![quiet_prices(grid)];
    out.extend(afrr_price_scenarios(grid, count.saturating_sub(1), seed));
    out
}

/// Threshold raw price scenarios against the import tariff.
pub fn scenario_set(prices: &[(TimeSeries, TimeSeries)], book: &TariffBook) -> Result<ScenarioSet> {
    let scenarios = prices
        .iter()
        .map(|(up, down)| {
            Ok(Scenario {
                premium_up: threshold_premiums(up, &book.pi_import)?,
                premium_down: threshold_premiums(down, &book.pi_import)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ScenarioSet::equiprobable(scenarios)
}

/// Scenario set with no aFRR opportunities.
pub fn blocked_scenarios(steps: usize, count: usize) -> ScenarioSet {
    let s = Scenario {
        premium_up: ThresholdedPremium::blocked(steps),
        premium_down: ThresholdedPremium::blocked(steps),
    };
    ScenarioSet::equiprobable(vec![s; count]).expect("non-empty")
}
