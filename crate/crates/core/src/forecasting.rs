//! Day-ahead similar-day load forecast, PV proxy and the intraday
//! persistence forecasters used by the controller.

use std::cmp::Ordering;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::markets::{Premium, ThresholdedPremium};
use crate::series::{TimeGrid, TimeSeries, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DayType {
    Working,
    NonWorking,
}

impl DayType {
    /// Monday to Friday are working days.
    pub fn of(date: NaiveDate) -> Self {
        use chrono::Datelike;
        match date.weekday() {
            chrono::Weekday::Sat | chrono::Weekday::Sun => DayType::NonWorking,
            _ => DayType::Working,
        }
    }
}

impl std::str::FromStr for DayType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "working" => Ok(DayType::Working),
            "non-working" | "non_working" | "nonworking" => Ok(DayType::NonWorking),
            other => Err(Error::Parse(format!("unknown day type {other:?}"))),
        }
    }
}

impl std::fmt::Display for DayType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DayType::Working => "working",
            DayType::NonWorking => "non-working",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryDay {
    pub date: NaiveDate,
    pub day_type: DayType,
    /// W/m2
    pub mean_irradiance: f64,
    /// degC
    pub mean_temperature: f64,
    pub gross_load: TimeSeries,
    pub pv: TimeSeries,
}

impl HistoryDay {
    pub fn new(
        date: NaiveDate,
        day_type: DayType,
        mean_irradiance: f64,
        mean_temperature: f64,
        gross_load: TimeSeries,
        pv: TimeSeries,
    ) -> Result<Self> {
        if !(mean_irradiance >= 0.0) {
            return Err(Error::InvalidValue(format!(
                "{date}: mean irradiance {mean_irradiance} is negative"
            )));
        }
        if !mean_temperature.is_finite() {
            return Err(Error::InvalidValue(format!(
                "{date}: temperature is not finite"
            )));
        }
        if gross_load.len() != pv.len() {
            return Err(Error::InvalidLength(format!(
                "{date}: {} load steps but {} PV steps",
                gross_load.len(),
                pv.len()
            )));
        }
        Ok(Self {
            date,
            day_type,
            mean_irradiance,
            mean_temperature,
            gross_load,
            pv,
        })
    }
}

/// Day to forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastTarget {
    pub date: NaiveDate,
    pub day_type: DayType,
    pub mean_irradiance: f64,
    pub mean_temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastConfig {
    pub n_similar: usize,
    /// (irradiance, temperature)
    pub meteo_weights: (f64, f64),
    /// Only the most recent this-many matching days are candidates.
    pub recency_window: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            n_similar: 5,
            meteo_weights: (1.0, 1.0),
            recency_window: 60,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_similar == 0 {
            return Err(Error::InvalidValue("n_similar must be at least 1".into()));
        }
        let (a, b) = self.meteo_weights;
        if !(a >= 0.0 && b >= 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidValue(
                "meteo weights must be non-negative".into(),
            ));
        }
        if self.recency_window < self.n_similar {
            return Err(Error::InvalidValue(
                "recency window must hold at least n_similar days".into(),
            ));
        }
        Ok(())
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

/// The `n_similar` days of the target's type closest in weather, among the
/// most recent candidates. Ties go to the day closest in time to the target.
pub fn select_similar_days<'a>(
    history: &'a [HistoryDay],
    target: &ForecastTarget,
    cfg: &ForecastConfig,
) -> Result<Vec<&'a HistoryDay>> {
    cfg.validate()?;
    let mut candidates: Vec<&HistoryDay> = history
        .iter()
        .filter(|d| d.day_type == target.day_type)
        .collect();
    if candidates.len() < cfg.n_similar {
        return Err(Error::InsufficientHistory {
            needed: cfg.n_similar,
            found: candidates.len(),
        });
    }
    let gap = |d: &HistoryDay| (d.date - target.date).num_days().abs();
    candidates.sort_by_key(|d| (gap(d), std::cmp::Reverse(d.date)));
    candidates.truncate(cfg.recency_window);

    let (mi, si) = mean_std(candidates.iter().map(|d| d.mean_irradiance));
    let (mt, st) = mean_std(candidates.iter().map(|d| d.mean_temperature));
    let z = |irr: f64, temp: f64| ((irr - mi) / si, (temp - mt) / st);
    let (ti, tt) = z(target.mean_irradiance, target.mean_temperature);
    let (wi, wt) = cfg.meteo_weights;
    let dist = |d: &HistoryDay| {
        let (di, dt) = z(d.mean_irradiance, d.mean_temperature);
        (wi * (di - ti).powi(2) + wt * (dt - tt).powi(2)).sqrt()
    };
    // Stable sort keeps the recency order among equal distances.
    candidates.sort_by(|a, b| dist(a).partial_cmp(&dist(b)).unwrap_or(Ordering::Equal));
    candidates.truncate(cfg.n_similar);
    Ok(candidates)
}

/// Pointwise mean of the selected days' gross load.
pub fn gross_load_forecast(selected: &[&HistoryDay]) -> Result<TimeSeries> {
    let first = selected
        .first()
        .ok_or_else(|| Error::InvalidLength("no days selected".into()))?;
    let n = first.gross_load.len();
    let mut sum = vec![0.0; n];
    for d in selected {
        if d.gross_load.len() != n
            || d.gross_load.grid().step_seconds() != first.gross_load.grid().step_seconds()
        {
            return Err(Error::GridMismatch(format!(
                "{} has {} steps of {} s, expected {n} of {} s",
                d.date,
                d.gross_load.len(),
                d.gross_load.grid().step_seconds(),
                first.gross_load.grid().step_seconds()
            )));
        }
        for (s, v) in sum.iter_mut().zip(d.gross_load.values()) {
            *s += v;
        }
    }
    let k = selected.len() as f64;
    TimeSeries::new(
        *first.gross_load.grid(),
        sum.into_iter().map(|s| s / k).collect(),
        Unit::Kw,
    )
}

/// Net load is gross demand minus PV; negative values are export.
pub fn net_load_forecast(gross: &TimeSeries, pv: &TimeSeries) -> Result<TimeSeries> {
    gross.zip_with(pv, |g, p| g - p)
}

/// Clear-sky PV proxy: a half-sine between sunrise and sunset scaled to
/// `capacity_kw`, averaged over each step.
pub fn clear_sky_pv(
    grid: TimeGrid,
    capacity_kw: f64,
    sunrise_h: f64,
    sunset_h: f64,
) -> Result<TimeSeries> {
    if !(sunset_h > sunrise_h) || !(capacity_kw >= 0.0) {
        return Err(Error::InvalidValue(format!(
            "clear-sky proxy needs sunrise < sunset and capacity >= 0 (got {sunrise_h}..{sunset_h}, {capacity_kw} kW)"
        )));
    }
    let day_len = sunset_h - sunrise_h;
    // Antiderivative of the half-sine profile, in kW*h.
    let integral = |h: f64| {
        let h = h.clamp(sunrise_h, sunset_h);
        capacity_kw * day_len / std::f64::consts::PI
            * (1.0 - (std::f64::consts::PI * (h - sunrise_h) / day_len).cos())
    };
    let dt = grid.step_hours();
    let start_h = {
        let t = grid.start().time();
        t.signed_duration_since(chrono::NaiveTime::MIN)
            .num_seconds() as f64
            / 3600.0
    };
    let values = (0..grid.steps())
        .map(|i| {
            let a = start_h + i as f64 * dt;
            (integral(a + dt) - integral(a)) / dt
        })
        .collect();
    TimeSeries::new(grid, values, Unit::Kw)
}

/// Persistence forecast of net load for the rest of interval `t`.
///
/// `history` holds the 30-s net-load samples of the day so far, with
/// `steps_per_interval` samples per interval. `k_star` is the last completed
/// step of the current interval, or `None` at the interval start, in which
/// case the previous interval's mean is used. At the very start of the day
/// the day-ahead forecast is used instead.
pub fn intraday_persistence(
    history: &[f64],
    t: usize,
    k_star: Option<usize>,
    steps_per_interval: usize,
    day_ahead: &TimeSeries,
) -> Result<f64> {
    let k = steps_per_interval;
    let (from, to) = match k_star {
        None if t == 0 => {
            return day_ahead
                .values()
                .first()
                .copied()
                .ok_or_else(|| Error::InvalidLength("empty day-ahead forecast".into()))
        }
        None => ((t - 1) * k, t * k),
        Some(j) if j >= k => {
            return Err(Error::InvalidState(format!(
                "k* = {j} outside an interval of {k} steps"
            )))
        }
        Some(j) => (t * k, t * k + j + 1),
    };
    if history.len() < to {
        return Err(Error::InvalidState(format!(
            "{} samples available, persistence needs {to}",
            history.len()
        )));
    }
    let window = &history[from..to];
    // Shifted mean: exact for a constant window.
    let base = window[0];
    Ok(base + window.iter().map(|x| x - base).sum::<f64>() / window.len() as f64)
}

/// Current premium held over the residual steps.
pub fn premium_persistence(current: Premium, residual: usize) -> ThresholdedPremium {
    ThresholdedPremium::new(vec![current; residual]).expect("premium already validated")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 5, d).unwrap()
    }

    fn grid(steps: usize) -> TimeGrid {
        TimeGrid::new(date(1).and_hms_opt(0, 0, 0).unwrap(), 900, steps).unwrap()
    }

    fn day(d: u32, ty: DayType, irr: f64, temp: f64, load: &[f64]) -> HistoryDay {
        let g = grid(load.len());
        HistoryDay::new(
            date(d),
            ty,
            irr,
            temp,
            TimeSeries::new(g, load.to_vec(), Unit::Kw).unwrap(),
            TimeSeries::constant(g, 0.0, Unit::Kw).unwrap(),
        )
        .unwrap()
    }

    fn cfg(n: usize, w: (f64, f64)) -> ForecastConfig {
        ForecastConfig {
            n_similar: n,
            meteo_weights: w,
            recency_window: 60,
        }
    }

    fn target(d: u32, ty: DayType, irr: f64, temp: f64) -> ForecastTarget {
        ForecastTarget {
            date: date(d),
            day_type: ty,
            mean_irradiance: irr,
            mean_temperature: temp,
        }
    }

    #[test]
    fn selects_by_irradiance() {
        let history = vec![
            day(1, DayType::Working, 100.0, 10.0, &[1.0]),
            day(2, DayType::Working, 200.0, 12.0, &[2.0]),
            day(3, DayType::Working, 300.0, 14.0, &[3.0]),
        ];
        let picked = select_similar_days(
            &history,
            &target(6, DayType::Working, 210.0, 0.0),
            &cfg(2, (1.0, 0.0)),
        )
        .unwrap();
        let mut irr: Vec<f64> = picked.iter().map(|d| d.mean_irradiance).collect();
        irr.sort_by(f64::total_cmp);
        assert_eq!(irr, vec![200.0, 300.0]);
    }

    #[test]
    fn wrong_day_type_is_insufficient() {
        let history = vec![day(1, DayType::Working, 100.0, 10.0, &[1.0])];
        let err = select_similar_days(
            &history,
            &target(4, DayType::NonWorking, 100.0, 10.0),
            &cfg(1, (1.0, 1.0)),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientHistory {
                needed: 1,
                found: 0
            }
        ));
    }

    #[test]
    fn whole_set_when_n_matches() {
        let history = vec![
            day(1, DayType::Working, 100.0, 10.0, &[1.0]),
            day(2, DayType::NonWorking, 200.0, 12.0, &[2.0]),
            day(3, DayType::Working, 300.0, 14.0, &[3.0]),
        ];
        let picked = select_similar_days(
            &history,
            &target(6, DayType::Working, 0.0, 0.0),
            &cfg(2, (1.0, 1.0)),
        )
        .unwrap();
        let mut dates: Vec<NaiveDate> = picked.iter().map(|d| d.date).collect();
        dates.sort();
        assert_eq!(dates, vec![date(1), date(3)]);
    }

    #[test]
    fn ties_go_to_the_most_recent_day() {
        let history = vec![
            day(1, DayType::Working, 100.0, 10.0, &[1.0]),
            day(8, DayType::Working, 100.0, 10.0, &[2.0]),
            day(4, DayType::Working, 100.0, 10.0, &[3.0]),
        ];
        let picked = select_similar_days(
            &history,
            &target(9, DayType::Working, 100.0, 10.0),
            &cfg(2, (1.0, 1.0)),
        )
        .unwrap();
        assert_eq!(picked[0].date, date(8));
        assert_eq!(picked[1].date, date(4));
    }

    #[test]
    fn recency_window_limits_candidates() {
        let history = vec![
            day(1, DayType::Working, 500.0, 10.0, &[1.0]),
            day(7, DayType::Working, 100.0, 10.0, &[2.0]),
            day(8, DayType::Working, 120.0, 10.0, &[3.0]),
        ];
        let c = ForecastConfig {
            n_similar: 1,
            meteo_weights: (1.0, 0.0),
            recency_window: 2,
        };
        let picked =
            select_similar_days(&history, &target(9, DayType::Working, 500.0, 10.0), &c).unwrap();
        assert_eq!(picked[0].date, date(8));
    }

    #[test]
    fn gross_forecast_examples() {
        let a = day(1, DayType::Working, 0.0, 0.0, &[4.0, 5.0]);
        assert_eq!(gross_load_forecast(&[&a]).unwrap().values(), &[4.0, 5.0]);

        let lo = day(1, DayType::Working, 0.0, 0.0, &[10.0; 3]);
        let hi = day(2, DayType::Working, 0.0, 0.0, &[20.0; 3]);
        assert_eq!(
            gross_load_forecast(&[&lo, &hi]).unwrap().values(),
            &[15.0; 3]
        );

        let d1 = day(1, DayType::Working, 0.0, 0.0, &[0.0, 3.0]);
        let d2 = day(2, DayType::Working, 0.0, 0.0, &[3.0, 0.0]);
        let d3 = day(3, DayType::Working, 0.0, 0.0, &[3.0, 3.0]);
        assert_eq!(
            gross_load_forecast(&[&d1, &d2, &d3]).unwrap().values(),
            &[2.0, 2.0]
        );

        let short = day(4, DayType::Working, 0.0, 0.0, &[1.0]);
        assert!(matches!(
            gross_load_forecast(&[&d1, &short]),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn net_forecast_examples() {
        let g = grid(3);
        let gross = TimeSeries::new(g, vec![20.0, 10.0, 7.0], Unit::Kw).unwrap();
        let pv = TimeSeries::new(g, vec![15.0, 25.0, 0.0], Unit::Kw).unwrap();
        assert_eq!(
            net_load_forecast(&gross, &pv).unwrap().values(),
            &[5.0, -15.0, 7.0]
        );
        let zero = TimeSeries::constant(g, 0.0, Unit::Kw).unwrap();
        assert_eq!(net_load_forecast(&gross, &zero).unwrap(), gross);
    }

    #[test]
    fn persistence_examples() {
        let k = 30;
        let day_ahead = TimeSeries::new(grid(2), vec![7.0, 9.0], Unit::Kw).unwrap();
        let history = vec![12.0; 30];
        assert_eq!(
            intraday_persistence(&history, 1, None, k, &day_ahead).unwrap(),
            12.0
        );

        let mut h = vec![0.0; 30];
        h.extend((1..=10).map(f64::from));
        assert_eq!(
            intraday_persistence(&h, 1, Some(9), k, &day_ahead).unwrap(),
            5.5
        );

        assert_eq!(
            intraday_persistence(&[], 0, None, k, &day_ahead).unwrap(),
            7.0
        );

        assert!(matches!(
            intraday_persistence(&h, 1, Some(12), k, &day_ahead),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn premium_persistence_examples() {
        assert_eq!(
            premium_persistence(Premium::Active(0.029), 3).values(),
            &[Premium::Active(0.029); 3]
        );
        assert_eq!(
            premium_persistence(Premium::Blocked, 5).values(),
            &[Premium::Blocked; 5]
        );
        assert_eq!(premium_persistence(Premium::Active(0.1), 1).len(), 1);
    }

    #[test]
    fn clear_sky_energy() {
        let g = TimeGrid::day_ahead(date(1).and_hms_opt(0, 0, 0).unwrap());
        let pv = clear_sky_pv(g, 100.0, 6.0, 18.0).unwrap();
        let energy: f64 = pv.values().iter().sum::<f64>() * 0.25;
        // Integral of a 12 h half-sine of amplitude 100 kW.
        assert!((energy - 100.0 * 12.0 * 2.0 / std::f64::consts::PI).abs() < 1e-9);
        assert_eq!(pv.values()[0], 0.0);
        assert!(pv.max() <= 100.0);
    }

    proptest! {
        #[test]
        fn gross_forecast_permutation_invariant_and_bounded(
            rows in prop::collection::vec(prop::collection::vec(-50.0..150.0f64, 6), 1..6),
            rot in 0usize..6,
        ) {
            let days: Vec<HistoryDay> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| day(i as u32 + 1, DayType::Working, 0.0, 0.0, r))
                .collect();
            let refs: Vec<&HistoryDay> = days.iter().collect();
            let mut rotated = refs.clone();
            let n = rotated.len();
            rotated.rotate_left(rot % n);
            let a = gross_load_forecast(&refs).unwrap();
            let b = gross_load_forecast(&rotated).unwrap();
            for t in 0..6 {
                prop_assert!((a.values()[t] - b.values()[t]).abs() <= 1e-9);
                let lo = rows.iter().map(|r| r[t]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[t]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a.values()[t] >= lo - 1e-9 && a.values()[t] <= hi + 1e-9);
            }
        }

        #[test]
        fn never_selects_the_wrong_day_type(
            types in prop::collection::vec(any::<bool>(), 3..20),
            irr in prop::collection::vec(0.0..800.0f64, 20),
        ) {
            let days: Vec<HistoryDay> = types
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    let ty = if w { DayType::Working } else { DayType::NonWorking };
                    day(i as u32 + 1, ty, irr[i], 10.0, &[1.0])
                })
                .collect();
            let n_working = types.iter().filter(|&&w| w).count();
            let t = target(28, DayType::Working, 300.0, 10.0);
            match select_similar_days(&days, &t, &cfg(2, (1.0, 1.0))) {
                Ok(sel) => prop_assert!(sel.iter().all(|d| d.day_type == DayType::Working)),
                Err(Error::InsufficientHistory { found, .. }) => prop_assert_eq!(found, n_working),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn persistence_exact_on_constant_interval(level in -100.0..100.0f64, j in 0usize..30) {
            let day_ahead = TimeSeries::new(grid(2), vec![0.0, 0.0], Unit::Kw).unwrap();
            let mut h = vec![3.0; 30];
            h.extend(std::iter::repeat_n(level, j + 1));
            prop_assert_eq!(intraday_persistence(&h, 1, Some(j), 30, &day_ahead).unwrap(), level);
        }
    }
}
