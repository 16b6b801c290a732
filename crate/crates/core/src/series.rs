//! Fixed-resolution time grids, piecewise-constant series and the small
//! numeric primitives shared by the optimisation stages.

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: u32 = 86_400;

/// Billing/scheduling resolution (15 min).
pub const SCHEDULE_STEP_SECONDS: u32 = 900;

/// Real-time control resolution (30 s).
pub const CONTROL_STEP_SECONDS: u32 = 30;

/// Number of scheduling intervals per day.
pub const INTERVALS_PER_DAY: usize = (SECONDS_PER_DAY / SCHEDULE_STEP_SECONDS) as usize;

/// Number of control steps per scheduling interval.
pub const STEPS_PER_INTERVAL: usize = (SCHEDULE_STEP_SECONDS / CONTROL_STEP_SECONDS) as usize;

/// Scheduling step length in hours.
pub const SCHEDULE_STEP_HOURS: f64 = SCHEDULE_STEP_SECONDS as f64 / 3600.0;

/// Control step length in hours.
pub const CONTROL_STEP_HOURS: f64 = CONTROL_STEP_SECONDS as f64 / 3600.0;

/// A uniform time grid. Values live on `[start + i*step, start + (i+1)*step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    start: NaiveDateTime,
    step_seconds: u32,
    steps: usize,
}

impl TimeGrid {
    pub fn new(start: NaiveDateTime, step_seconds: u32, steps: usize) -> Result<Self> {
        if step_seconds == 0 || SECONDS_PER_DAY % step_seconds != 0 {
            return Err(Error::InvalidValue(format!(
                "step of {step_seconds} s does not divide a day"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidLength("grid needs at least one step".into()));
        }
        Ok(Self {
            start,
            step_seconds,
            steps,
        })
    }

    /// One day at 15-minute resolution (T = 96).
    pub fn day_ahead(start: NaiveDateTime) -> Self {
        Self {
            start,
            step_seconds: SCHEDULE_STEP_SECONDS,
            steps: INTERVALS_PER_DAY,
        }
    }

    /// One day at 30-second resolution (2880 steps).
    pub fn real_time(start: NaiveDateTime) -> Self {
        Self {
            start,
            step_seconds: CONTROL_STEP_SECONDS,
            steps: INTERVALS_PER_DAY * STEPS_PER_INTERVAL,
        }
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn step_seconds(&self) -> u32 {
        self.step_seconds
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_hours(&self) -> f64 {
        self.step_seconds as f64 / 3600.0
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::seconds(i as i64 * self.step_seconds as i64)
    }

    pub fn span_seconds(&self) -> u64 {
        self.step_seconds as u64 * self.steps as u64
    }

    /// Same start and span at a different resolution.
    pub fn with_step(&self, step_seconds: u32) -> Result<Self> {
        let span = self.span_seconds();
        if step_seconds == 0 || span % step_seconds as u64 != 0 {
            return Err(Error::GridMismatch(format!(
                "span of {span} s is not a multiple of {step_seconds} s"
            )));
        }
        Self::new(
            self.start,
            step_seconds,
            (span / step_seconds as u64) as usize,
        )
    }
}

/// Physical unit attached to a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Kw,
    Kwh,
    ChfPerKwh,
    ChfPerKw,
}

/// Piecewise-constant signal on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    grid: TimeGrid,
    values: Vec<f64>,
    unit: Unit,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if values.len() != grid.steps() {
            return Err(Error::InvalidLength(format!(
                "{} values for a grid of {} steps",
                values.len(),
                grid.steps()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite value at step {i}")));
        }
        Ok(Self { grid, values, unit })
    }

    pub fn constant(grid: TimeGrid, value: f64, unit: Unit) -> Result<Self> {
        Self::new(grid, vec![value; grid.steps()], unit)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Elementwise combination of two series on the same grid.
    pub fn zip_with(&self, other: &TimeSeries, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.grid, values, self.unit)
    }

    pub fn ensure_same_grid(&self, other: &TimeSeries) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{} steps of {} s vs {} steps of {} s",
                self.grid.steps(),
                self.grid.step_seconds(),
                other.grid.steps(),
                other.grid.step_seconds()
            )));
        }
        Ok(())
    }

    /// Hold each value over the finer grid it covers.
    pub fn upsample_hold(&self, target: TimeGrid) -> Result<Self> {
        let ratio = nesting_ratio(&target, &self.grid)?;
        let values = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, ratio))
            .collect();
        Self::new(target, values, self.unit)
    }
}

/// Site-level limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteParams {
    pub transformer_kw: f64,
    pub billing_interval_minutes: u32,
}

impl SiteParams {
    pub fn new(transformer_kw: f64, battery_power_kw: f64) -> Result<Self> {
        if !(transformer_kw > 0.0) {
            return Err(Error::InvalidValue(
                "transformer rating must be positive".into(),
            ));
        }
        if transformer_kw < battery_power_kw {
            return Err(Error::InvalidValue(format!(
                "transformer rating {transformer_kw} kW below battery rating {battery_power_kw} kW"
            )));
        }
        Ok(Self {
            transformer_kw,
            billing_interval_minutes: SCHEDULE_STEP_SECONDS / 60,
        })
    }
}

/// Running sum, i.e. multiplication by the lower-triangular all-ones matrix.
pub fn cumsum_apply(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::InvalidLength(
            "cumulative sum of an empty sequence".into(),
        ));
    }
    Ok(x.iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect())
}

/// Split into positive and negative parts, `x = plus - minus`.
pub fn pos_neg_split(x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "non-finite value at index {i}"
        )));
    }
    Ok(x.iter().map(|&v| (v.max(0.0), (-v).max(0.0))).unzip())
}

/// Average a fine series onto a coarser nested grid.
pub fn resample_avg(x: &TimeSeries, target: TimeGrid) -> Result<TimeSeries> {
    let ratio = nesting_ratio(x.grid(), &target)?;
    let values = x
        .values()
        .chunks_exact(ratio)
        .map(|c| c.iter().sum::<f64>() / ratio as f64)
        .collect();
    TimeSeries::new(target, values, x.unit())
}

/// Number of `fine` steps per `coarse` step, when the grids are nested and
/// cover the same span.
fn nesting_ratio(fine: &TimeGrid, coarse: &TimeGrid) -> Result<usize> {
    if coarse.step_seconds() % fine.step_seconds() != 0 {
        return Err(Error::GridMismatch(format!(
            "{} s does not divide {} s",
            fine.step_seconds(),
            coarse.step_seconds()
        )));
    }
    if fine.start() != coarse.start() || fine.span_seconds() != coarse.span_seconds() {
        return Err(Error::GridMismatch(format!(
            "fine grid spans {} s from {}, coarse grid spans {} s from {}",
            fine.span_seconds(),
            fine.start(),
            coarse.span_seconds(),
            coarse.start()
        )));
    }
    Ok((coarse.step_seconds() / fine.step_seconds()) as usize)
}
