//! Realized economics and tracking figures of a closed-loop day.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::io::format_timestamp;
use crate::markets::{
    energy_charge, power_charge, regulation_revenue, TariffBook, ThresholdedPremium,
};
use crate::series::{pos_neg_split, resample_avg, TimeSeries, Unit};
use crate::simulator::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakMetrics {
    pub baseline_kw: f64,
    pub realized_kw: f64,
    /// Positive when the realized peak is lower.
    pub reduction_pct: f64,
}

/// Import peaks of two profiles on the same grid.
pub fn peak_metrics(baseline: &TimeSeries, realized: &TimeSeries) -> Result<PeakMetrics> {
    if baseline.is_empty() || realized.is_empty() {
        return Err(Error::InvalidLength("peak of an empty series".into()));
    }
    baseline.ensure_same_grid(realized)?;
    let peak = |s: &TimeSeries| s.values().iter().fold(0.0_f64, |m, &v| m.max(v));
    let (b, r) = (peak(baseline), peak(realized));
    // No import at all in the baseline: nothing to reduce.
    let reduction_pct = if b > 0.0 { 100.0 * (b - r) / b } else { 0.0 };
    Ok(PeakMetrics {
        baseline_kw: b,
        realized_kw: r,
        reduction_pct,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayReport {
    pub c_energy: f64,
    pub c_power: f64,
    pub c_electricity: f64,
    pub r_regulation: f64,
    /// Bill of the same day without the battery.
    pub baseline_c_energy: f64,
    pub baseline_c_power: f64,
    pub baseline_c_electricity: f64,
    pub peaks: PeakMetrics,
    /// Meter energy short of the plan at the end of each interval, kWh.
    pub interval_errors_kwh: Vec<f64>,
    /// Interval start times, aligned with `interval_errors_kwh`.
    pub interval_starts: Vec<chrono::NaiveDateTime>,
    pub clamp_events: usize,
    pub alarms: usize,
}

impl DayReport {
    pub fn write_interval_errors<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["timestamp_iso8601", "terminal_error_kwh"])?;
        for (ts, e) in self.interval_starts.iter().zip(&self.interval_errors_kwh) {
            wtr.write_record([format_timestamp(*ts), e.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn max_abs_interval_error(&self) -> f64 {
        self.interval_errors_kwh
            .iter()
            .fold(0.0, |m, e| m.max(e.abs()))
    }
}

impl fmt::Display for DayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "                        without battery   with battery")?;
        writeln!(
            f,
            "energy cost [CHF]       {:>15.2}   {:>12.2}",
            self.baseline_c_energy, self.c_energy
        )?;
        writeln!(
            f,
            "power cost [CHF]        {:>15.2}   {:>12.2}",
            self.baseline_c_power, self.c_power
        )?;
        writeln!(
            f,
            "electricity cost [CHF]  {:>15.2}   {:>12.2}",
            self.baseline_c_electricity, self.c_electricity
        )?;
        writeln!(
            f,
            "peak import [kW]        {:>15.2}   {:>12.2}",
            self.peaks.baseline_kw, self.peaks.realized_kw
        )?;
        writeln!(
            f,
            "peak reduction [%]      {:>32.2}",
            self.peaks.reduction_pct
        )?;
        writeln!(f, "aFRR revenue [CHF]      {:>32.2}", self.r_regulation)?;
        writeln!(
            f,
            "max |interval error| [kWh] {:>29.6}",
            self.max_abs_interval_error()
        )?;
        writeln!(f, "clamp events            {:>32}", self.clamp_events)?;
        write!(f, "alarms                  {:>32}", self.alarms)
    }
}

/// Per-interval energy gap between plan and billed meter, kWh.
pub fn interval_errors(trace: &SimTrace) -> Result<Vec<f64>> {
    let k = trace.steps_per_interval;
    if k == 0 || trace.is_empty() || trace.len() % k != 0 {
        return Err(Error::InvalidLength(format!(
            "{} trace steps do not form whole intervals of {k}",
            trace.len()
        )));
    }
    let dt = trace.step_hours();
    Ok(trace
        .records
        .chunks(k)
        .map(|c| dt * c.iter().map(|r| r.p_hat_kw - r.billed_kw()).sum::<f64>())
        .collect())
}

fn bill(meter: &TimeSeries, book: &TariffBook) -> Result<(f64, f64)> {
    let (plus, minus) = pos_neg_split(meter.values())?;
    let grid = *meter.grid();
    let plus = TimeSeries::new(grid, plus, Unit::Kw)?;
    let minus = TimeSeries::new(grid, minus, Unit::Kw)?;
    Ok((
        energy_charge(&plus, &minus, book)?,
        power_charge(&plus, book.pi_power_per_day)?,
    ))
}

/// Bill the trace's meter at the tariff resolution and settle aFRR at the
/// premiums actually issued. aFRR energy is not part of the site bill.
pub fn realized_costs(trace: &SimTrace, book: &TariffBook) -> Result<DayReport> {
    let coarse = *book.grid();
    let expected = coarse.with_step(trace.grid.step_seconds())?;
    if trace.grid != expected {
        return Err(Error::InvalidLength(format!(
            "trace has {} steps from {}, the tariff day needs {} from {}",
            trace.len(),
            trace.grid.start(),
            expected.steps(),
            expected.start()
        )));
    }
    let fine = trace.grid;
    let series = |f: &dyn Fn(&crate::simulator::TraceRecord) -> f64| {
        TimeSeries::new(fine, trace.records.iter().map(f).collect(), Unit::Kw)
    };
    let billed = resample_avg(&series(&|r| r.billed_kw())?, coarse)?;
    let baseline = resample_avg(&series(&|r| r.l_kw)?, coarse)?;
    let (c_energy, c_power) = bill(&billed, book)?;
    let (baseline_c_energy, baseline_c_power) = bill(&baseline, book)?;

    let down = series(&|r| r.b_afrr_kw.max(0.0))?;
    let up = series(&|r| (-r.b_afrr_kw).max(0.0))?;
    let prem_down =
        ThresholdedPremium::new(trace.records.iter().map(|r| r.premium_down).collect())?;
    let prem_up = ThresholdedPremium::new(trace.records.iter().map(|r| r.premium_up).collect())?;
    let r_regulation = regulation_revenue(&down, &up, &prem_down, &prem_up)?;

    let interval_errors_kwh = interval_errors(trace)?;
    let interval_starts = (0..interval_errors_kwh.len())
        .map(|t| trace.grid.timestamp(t * trace.steps_per_interval))
        .collect();
    Ok(DayReport {
        c_energy,
        c_power,
        c_electricity: c_energy + c_power,
        r_regulation,
        baseline_c_energy,
        baseline_c_power,
        baseline_c_electricity: baseline_c_energy + baseline_c_power,
        peaks: peak_metrics(&baseline, &billed)?,
        interval_errors_kwh,
        interval_starts,
        clamp_events: trace.clamp_events(),
        alarms: trace.alarms.len(),
    })
}
