//! Tariffs, aFRR premium thresholding and the cost/revenue evaluators.
//!
//! Sign conventions: down-regulation means the battery charges and is paid
//! the down premium; up-regulation means it discharges and is paid the up
//! premium.

use crate::error::{Error, Result};
use crate::series::{TimeGrid, TimeSeries, Unit};

/// aFRR premium over the import tariff at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Premium {
    /// Strictly positive, CHF/kWh.
    Active(f64),
    /// Price did not exceed the import tariff; the direction may not be used.
    Blocked,
}

impl Premium {
    pub fn value(self) -> Option<f64> {
        match self {
            Premium::Active(v) => Some(v),
            Premium::Blocked => None,
        }
    }

    pub fn is_blocked(self) -> bool {
        matches!(self, Premium::Blocked)
    }

    /// Premium value, or 0 when blocked.
    pub fn or_zero(self) -> f64 {
        self.value().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedPremium {
    values: Vec<Premium>,
}

impl ThresholdedPremium {
    pub fn new(values: Vec<Premium>) -> Result<Self> {
        for (t, p) in values.iter().enumerate() {
            if let Premium::Active(v) = *p {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidValue(format!(
                        "premium at step {t} must be positive and finite, got {v}"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn blocked(len: usize) -> Self {
        Self {
            values: vec![Premium::Blocked; len],
        }
    }

    /// Build from raw values where anything `<= 0` is blocked.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        Premium::Active(v)
                    } else {
                        Premium::Blocked
                    }
                })
                .collect(),
        )
    }

    pub fn values(&self) -> &[Premium] {
        &self.values
    }

    pub fn get(&self, t: usize) -> Premium {
        self.values[t]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Premium values with blocked steps as 0.
    pub fn to_values(&self) -> Vec<f64> {
        self.values.iter().map(|p| p.or_zero()).collect()
    }
}

/// Retail, feed-in and demand tariffs.
#[derive(Debug, Clone, PartialEq)]
pub struct TariffBook {
    pub pi_import: TimeSeries,
    pub pi_export: TimeSeries,
    /// CHF per kW of daily peak.
    pub pi_power_per_day: f64,
    /// Up-regulation price, if known.
    pub pi_afrr_up: Option<TimeSeries>,
    /// Down-regulation price, if known.
    pub pi_afrr_down: Option<TimeSeries>,
}

impl TariffBook {
    pub fn new(
        pi_import: TimeSeries,
        pi_export: TimeSeries,
        pi_power_per_day: f64,
    ) -> Result<Self> {
        pi_import.ensure_same_grid(&pi_export)?;
        for (t, (&i, &e)) in pi_import
            .values()
            .iter()
            .zip(pi_export.values())
            .enumerate()
        {
            if i < e {
                return Err(Error::NonConvexTariffs {
                    step: t,
                    import: i,
                    export: e,
                });
            }
        }
        if !pi_power_per_day.is_finite() || pi_power_per_day < 0.0 {
            return Err(Error::InvalidValue(format!(
                "power tariff must be finite and non-negative, got {pi_power_per_day}"
            )));
        }
        Ok(Self {
            pi_import,
            pi_export,
            pi_power_per_day,
            pi_afrr_up: None,
            pi_afrr_down: None,
        })
    }

    /// Two-level time-of-use import tariff with a flat feed-in tariff.
    /// The peak window is `[peak_start_h, peak_end_h)` in local hours.
    pub fn time_of_use(grid: TimeGrid, tou: &TimeOfUse) -> Result<Self> {
        let import = (0..grid.steps())
            .map(|i| {
                let ts = grid.timestamp(i);
                let h = ts
                    .time()
                    .signed_duration_since(chrono::NaiveTime::MIN)
                    .num_seconds() as f64
                    / 3600.0;
                if h >= tou.peak_start_h && h < tou.peak_end_h {
                    tou.peak
                } else {
                    tou.off_peak
                }
            })
            .collect();
        Self::new(
            TimeSeries::new(grid, import, Unit::ChfPerKwh)?,
            TimeSeries::constant(grid, tou.feed_in, Unit::ChfPerKwh)?,
            tou.power_per_day,
        )
    }

    pub fn with_afrr_prices(mut self, up: TimeSeries, down: TimeSeries) -> Result<Self> {
        self.pi_import.ensure_same_grid(&up)?;
        self.pi_import.ensure_same_grid(&down)?;
        self.pi_afrr_up = Some(up);
        self.pi_afrr_down = Some(down);
        Ok(self)
    }

    pub fn grid(&self) -> &TimeGrid {
        self.pi_import.grid()
    }
}

/// Parameters of a two-level tariff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeOfUse {
    pub peak: f64,
    pub off_peak: f64,
    pub peak_start_h: f64,
    pub peak_end_h: f64,
    pub feed_in: f64,
    pub power_per_day: f64,
}

impl Default for TimeOfUse {
    fn default() -> Self {
        Self {
            peak: 0.171,
            off_peak: 0.162,
            peak_start_h: 6.0,
            peak_end_h: 22.0,
            feed_in: 0.0068,
            power_per_day: 150.0 / 365.0,
        }
    }
}

/// One equiprobable-style scenario of thresholded premiums.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub premium_up: ThresholdedPremium,
    pub premium_down: ThresholdedPremium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
    probabilities: Vec<f64>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>, probabilities: Vec<f64>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::InvalidModel("scenario set is empty".into()));
        }
        if scenarios.len() != probabilities.len() {
            return Err(Error::InvalidModel(format!(
                "{} scenarios but {} probabilities",
                scenarios.len(),
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidValue(
                "probabilities must be non-negative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidValue(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let len = scenarios[0].premium_up.len();
        for (w, s) in scenarios.iter().enumerate() {
            if s.premium_up.len() != len || s.premium_down.len() != len {
                return Err(Error::InvalidLength(format!(
                    "scenario {w} spans {}/{} steps, expected {len}",
                    s.premium_up.len(),
                    s.premium_down.len()
                )));
            }
        }
        Ok(Self {
            scenarios,
            probabilities,
        })
    }

    pub fn equiprobable(scenarios: Vec<Scenario>) -> Result<Self> {
        let n = scenarios.len();
        Self::new(scenarios, vec![1.0 / n as f64; n])
    }

    /// A single all-blocked scenario.
    pub fn none(len: usize) -> Self {
        Self {
            scenarios: vec![Scenario {
                premium_up: ThresholdedPremium::blocked(len),
                premium_down: ThresholdedPremium::blocked(len),
            }],
            probabilities: vec![1.0],
        }
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Steps covered by every scenario.
    pub fn steps(&self) -> usize {
        self.scenarios[0].premium_up.len()
    }
}

/// Premium where the aFRR price strictly exceeds the import tariff, else Blocked.
pub fn threshold_premiums(
    pi_afrr: &TimeSeries,
    pi_import: &TimeSeries,
) -> Result<ThresholdedPremium> {
    pi_afrr.ensure_same_grid(pi_import)?;
    ThresholdedPremium::new(
        pi_afrr
            .values()
            .iter()
            .zip(pi_import.values())
            .map(|(&a, &i)| threshold_one(a, i))
            .collect(),
    )
}

/// Scalar form of [`threshold_premiums`].
pub fn threshold_one(price: f64, import: f64) -> Premium {
    if price > import {
        Premium::Active(price - import)
    } else {
        Premium::Blocked
    }
}

/// Energy bill: import priced at retail, export credited at feed-in.
pub fn energy_charge(p_plus: &TimeSeries, p_minus: &TimeSeries, book: &TariffBook) -> Result<f64> {
    p_plus.ensure_same_grid(&book.pi_import)?;
    p_minus.ensure_same_grid(&book.pi_import)?;
    for (name, s) in [("import", p_plus), ("export", p_minus)] {
        if let Some(t) = s.values().iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidValue(format!(
                "negative {name} power at step {t}"
            )));
        }
    }
    let dt = p_plus.grid().step_hours();
    let total: f64 = (0..p_plus.len())
        .map(|t| {
            book.pi_import.values()[t] * p_plus.values()[t]
                - book.pi_export.values()[t] * p_minus.values()[t]
        })
        .sum();
    Ok(dt * total)
}

/// Energy bill of a signed grid profile through the convex form
/// `(pi_import - pi_export)' [x]+ + pi_export' x`.
pub fn energy_charge_convex(x: &[f64], book: &TariffBook) -> Result<f64> {
    if x.len() != book.pi_import.len() {
        return Err(Error::InvalidLength(format!(
            "{} values against {} tariff steps",
            x.len(),
            book.pi_import.len()
        )));
    }
    let dt = book.grid().step_hours();
    let total: f64 = x
        .iter()
        .zip(book.pi_import.values().iter().zip(book.pi_export.values()))
        .map(|(&x, (&i, &e))| (i - e) * x.max(0.0) + e * x)
        .sum();
    Ok(dt * total)
}

/// Demand charge on the highest import step.
pub fn power_charge(p_plus: &TimeSeries, pi_power_per_day: f64) -> Result<f64> {
    if p_plus.is_empty() {
        return Err(Error::InvalidLength(
            "power charge of an empty series".into(),
        ));
    }
    if let Some(t) = p_plus.values().iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidValue(format!(
            "negative import power at step {t}"
        )));
    }
    Ok(p_plus.max() * pi_power_per_day)
}

/// Regulation income of one allocation. Blocked steps must carry no power.
pub fn regulation_revenue(
    b_down: &TimeSeries,
    b_up: &TimeSeries,
    prem_down: &ThresholdedPremium,
    prem_up: &ThresholdedPremium,
) -> Result<f64> {
    b_down.ensure_same_grid(b_up)?;
    let n = b_down.len();
    if prem_down.len() != n || prem_up.len() != n {
        return Err(Error::InvalidLength(format!(
            "{n} allocation steps against premiums of length {}/{}",
            prem_down.len(),
            prem_up.len()
        )));
    }
    let mut total = 0.0;
    for (alloc, prem) in [(b_down, prem_down), (b_up, prem_up)] {
        for (t, (&b, &p)) in alloc.values().iter().zip(prem.values()).enumerate() {
            if b < 0.0 {
                return Err(Error::InvalidValue(format!(
                    "negative allocation at step {t}"
                )));
            }
            match p {
                Premium::Blocked if b != 0.0 => {
                    return Err(Error::GatingViolation { step: t, value: b });
                }
                Premium::Blocked => {}
                Premium::Active(v) => total += v * b,
            }
        }
    }
    Ok(b_down.grid().step_hours() * total)
}

/// Probability-weighted regulation income; `allocations[w] = (b_down, b_up)`.
pub fn expected_regulation_revenue(
    allocations: &[(TimeSeries, TimeSeries)],
    set: &ScenarioSet,
) -> Result<f64> {
    if allocations.len() != set.len() {
        return Err(Error::InvalidModel(format!(
            "{} allocations for {} scenarios",
            allocations.len(),
            set.len()
        )));
    }
    let mut total = 0.0;
    for (((down, up), s), p) in allocations
        .iter()
        .zip(set.scenarios())
        .zip(set.probabilities())
    {
        total += p * regulation_revenue(down, up, &s.premium_down, &s.premium_up)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::pos_neg_split;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn grid(steps: usize) -> TimeGrid {
        let start = NaiveDate::from_ymd_opt(2024, 3, 12)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        TimeGrid::new(start, 900, steps).unwrap()
    }

    fn kw(values: &[f64]) -> TimeSeries {
        TimeSeries::new(grid(values.len()), values.to_vec(), Unit::Kw).unwrap()
    }

    fn flat_book(steps: usize, import: f64, export: f64) -> TariffBook {
        let g = grid(steps);
        TariffBook::new(
            TimeSeries::constant(g, import, Unit::ChfPerKwh).unwrap(),
            TimeSeries::constant(g, export, Unit::ChfPerKwh).unwrap(),
            150.0 / 365.0,
        )
        .unwrap()
    }

    fn price(values: &[f64]) -> TimeSeries {
        TimeSeries::new(grid(values.len()), values.to_vec(), Unit::ChfPerKwh).unwrap()
    }

    #[test]
    fn thresholding() {
        let p = threshold_premiums(&price(&[0.20, 0.10, 0.171]), &price(&[0.171; 3])).unwrap();
        match p.get(0) {
            Premium::Active(v) => assert!((v - 0.029).abs() < 1e-12),
            Premium::Blocked => panic!("expected a premium"),
        }
        assert_eq!(p.get(1), Premium::Blocked);
        assert_eq!(p.get(2), Premium::Blocked);
    }

    #[test]
    fn threshold_grid_mismatch() {
        let err = threshold_premiums(&price(&[0.2; 3]), &price(&[0.1; 4])).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn energy_charge_examples() {
        let book = flat_book(96, 0.171, 0.0068);
        let c = energy_charge(&kw(&[10.0; 96]), &kw(&[0.0; 96]), &book).unwrap();
        assert!((c - 41.04).abs() < 1e-9);

        let book4 = flat_book(4, 0.171, 0.0068);
        let c = energy_charge(&kw(&[0.0; 4]), &kw(&[5.0; 4]), &book4).unwrap();
        assert!((c + 0.034).abs() < 1e-12);

        let c = energy_charge(&kw(&[0.0; 4]), &kw(&[0.0; 4]), &book4).unwrap();
        assert_eq!(c, 0.0);

        let err = energy_charge(&kw(&[-1.0, 0.0, 0.0, 0.0]), &kw(&[0.0; 4]), &book4).unwrap_err();
        assert!(matches!(err, Error::InvalidValue(_)));
    }

    #[test]
    fn power_charge_examples() {
        let c = power_charge(&kw(&[10.0, 20.0, 15.0]), 150.0 / 365.0).unwrap();
        assert!((c - 8.2192).abs() < 1e-4);
        assert_eq!(power_charge(&kw(&[0.0; 3]), 150.0 / 365.0).unwrap(), 0.0);
        assert!((power_charge(&kw(&[85.74]), 1.0).unwrap() - 85.74).abs() < 1e-12);
    }

    #[test]
    fn revenue_examples() {
        let prem = ThresholdedPremium::new(vec![Premium::Active(0.029); 2]).unwrap();
        let r = regulation_revenue(
            &kw(&[50.0; 2]),
            &kw(&[0.0; 2]),
            &prem,
            &ThresholdedPremium::blocked(2),
        )
        .unwrap();
        assert!((r - 0.725).abs() < 1e-12);

        let blocked = ThresholdedPremium::blocked(2);
        assert_eq!(
            regulation_revenue(&kw(&[0.0; 2]), &kw(&[0.0; 2]), &blocked, &blocked).unwrap(),
            0.0
        );

        let err =
            regulation_revenue(&kw(&[10.0, 0.0]), &kw(&[0.0; 2]), &blocked, &blocked).unwrap_err();
        assert!(matches!(err, Error::GatingViolation { step: 0, .. }));
    }

    #[test]
    fn expected_revenue_examples() {
        // Revenue of 10 kW for one step at premium r/2.5 is r.
        let scenario = |r: f64| Scenario {
            premium_up: ThresholdedPremium::blocked(1),
            premium_down: ThresholdedPremium::from_values(&[r / 2.5]).unwrap(),
        };
        let alloc = || (kw(&[10.0]), kw(&[0.0]));

        let single = ScenarioSet::new(vec![scenario(2.0)], vec![1.0]).unwrap();
        let direct = regulation_revenue(
            &kw(&[10.0]),
            &kw(&[0.0]),
            &single.scenarios()[0].premium_down,
            &single.scenarios()[0].premium_up,
        )
        .unwrap();
        assert_eq!(
            expected_regulation_revenue(&[alloc()], &single).unwrap(),
            direct
        );

        let two = ScenarioSet::equiprobable(vec![scenario(2.0), scenario(4.0)]).unwrap();
        let r = expected_regulation_revenue(&[alloc(), alloc()], &two).unwrap();
        assert!((r - 3.0).abs() < 1e-12);

        let weighted =
            ScenarioSet::new(vec![scenario(10.0), scenario(1.0)], vec![0.3, 0.7]).unwrap();
        let r =
            expected_regulation_revenue(&[alloc(), (kw(&[0.0]), kw(&[0.0]))], &weighted).unwrap();
        assert!((r - 3.0).abs() < 1e-12);

        let err = expected_regulation_revenue(&[alloc()], &two).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn rejects_import_below_export() {
        let g = grid(2);
        let err = TariffBook::new(
            TimeSeries::new(g, vec![0.2, 0.1], Unit::ChfPerKwh).unwrap(),
            TimeSeries::constant(g, 0.15, Unit::ChfPerKwh).unwrap(),
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvexTariffs { step: 1, .. }));
    }

    #[test]
    fn time_of_use_windows() {
        let start = NaiveDate::from_ymd_opt(2024, 3, 12)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let book =
            TariffBook::time_of_use(TimeGrid::day_ahead(start), &TimeOfUse::default()).unwrap();
        let v = book.pi_import.values();
        assert_eq!(v[23], 0.162);
        assert_eq!(v[24], 0.171);
        assert_eq!(v[87], 0.171);
        assert_eq!(v[88], 0.162);
    }

    proptest! {
        #[test]
        fn convex_form_matches_split(x in prop::collection::vec(-200.0..200.0f64, 96)) {
            let start = NaiveDate::from_ymd_opt(2024, 3, 12).unwrap().and_hms_opt(0, 0, 0).unwrap();
            let book = TariffBook::time_of_use(TimeGrid::day_ahead(start), &TimeOfUse::default()).unwrap();
            let (p, m) = pos_neg_split(&x).unwrap();
            let g = *book.grid();
            let direct = energy_charge(
                &TimeSeries::new(g, p, Unit::Kw).unwrap(),
                &TimeSeries::new(g, m, Unit::Kw).unwrap(),
                &book,
            ).unwrap();
            let convex = energy_charge_convex(&x, &book).unwrap();
            prop_assert!((direct - convex).abs() <= 1e-9 * direct.abs().max(1e-9));
        }

        #[test]
        fn energy_charge_monotone(x in prop::collection::vec(0.0..100.0f64, 8), idx in 0usize..8, bump in 0.0..10.0f64) {
            let book = flat_book(8, 0.171, 0.0068);
            let zero = kw(&[0.0; 8]);
            let base = energy_charge(&kw(&x), &zero, &book).unwrap();
            let mut y = x.clone();
            y[idx] += bump;
            prop_assert!(energy_charge(&kw(&y), &zero, &book).unwrap() >= base);
            let base_m = energy_charge(&zero, &kw(&x), &book).unwrap();
            prop_assert!(energy_charge(&zero, &kw(&y), &book).unwrap() <= base_m);
        }

        #[test]
        fn blocked_everywhere_earns_nothing(n in 1usize..20) {
            let blocked = ThresholdedPremium::blocked(n);
            let zero = kw(&vec![0.0; n]);
            prop_assert_eq!(regulation_revenue(&zero, &zero, &blocked, &blocked).unwrap(), 0.0);
        }
    }
}
