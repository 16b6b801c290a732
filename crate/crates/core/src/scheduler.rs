//! Day-ahead two-stage stochastic schedule.
//!
//! First stage: local battery power `B_L+`/`B_L-`, shared by all scenarios.
//! Second stage: per-scenario aFRR allocations and state of energy. The
//! energy bill is written through the convex form
//! `(pi_imp - pi_exp)' s + pi_exp' x` with `s >= x, s >= 0`, and the demand
//! charge through a single peak variable bounding every step.

use std::fmt::Write as _;
use std::io::{Read, Write};

use log::warn;

use crate::error::{Error, Result};
use crate::io::{format_timestamp, parse_timestamp};
use crate::markets::{Premium, ScenarioSet, TariffBook};
use crate::series::{SiteParams, TimeGrid, TimeSeries, Unit};
use crate::solver::{solve_milp_with, LinearProgram, MilpOptions, Solution, Status, VarId};

/// Storage nameplate and operating envelope. Energies in kWh, power in kW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryParams {
    pub e_nom: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub b_max: f64,
    /// One-way efficiency, applied symmetrically.
    pub eta: f64,
    pub soe0: f64,
}

impl BatteryParams {
    pub fn new(
        e_nom: f64,
        e_min: f64,
        e_max: f64,
        b_max: f64,
        eta: f64,
        soe0: f64,
    ) -> Result<Self> {
        let b = Self {
            e_nom,
            e_min,
            e_max,
            b_max,
            eta,
            soe0,
        };
        b.validate_envelope()?;
        if !(soe0 >= e_min && soe0 <= e_max) {
            return Err(Error::InvalidValue(format!(
                "initial SOE {soe0} kWh outside [{e_min}, {e_max}]"
            )));
        }
        Ok(b)
    }

    /// Fractions of `e_nom` for the bounds and initial state.
    pub fn from_fractions(
        e_nom: f64,
        min: f64,
        max: f64,
        b_max: f64,
        eta: f64,
        soe0: f64,
    ) -> Result<Self> {
        Self::new(e_nom, min * e_nom, max * e_nom, b_max, eta, soe0 * e_nom)
    }

    /// Everything but the initial state.
    pub fn validate_envelope(&self) -> Result<()> {
        let finite = [
            self.e_nom, self.e_min, self.e_max, self.b_max, self.eta, self.soe0,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel(
                "battery parameters must be finite".into(),
            ));
        }
        if !(0.0 <= self.e_min && self.e_min < self.e_max && self.e_max <= self.e_nom) {
            return Err(Error::InvalidModel(format!(
                "battery envelope needs 0 <= e_min < e_max <= e_nom, got {} / {} / {}",
                self.e_min, self.e_max, self.e_nom
            )));
        }
        if !(self.b_max > 0.0) {
            return Err(Error::InvalidModel(
                "battery power rating must be positive".into(),
            ));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidModel(format!(
                "efficiency {} outside (0, 1]",
                self.eta
            )));
        }
        Ok(())
    }

    /// Same battery with the initial state moved into the envelope.
    pub fn with_soe0_clamped(mut self, soe0: f64) -> Self {
        let clamped = soe0.clamp(self.e_min, self.e_max);
        if clamped != soe0 {
            warn!(
                "initial SOE {soe0:.3} kWh outside [{}, {}], clamped to {clamped:.3}",
                self.e_min, self.e_max
            );
        }
        self.soe0 = clamped;
        self
    }

    /// SOE change over `hours` for a signed power (positive charges).
    pub fn soe_delta(&self, power_kw: f64, hours: f64) -> f64 {
        if power_kw >= 0.0 {
            hours * self.eta * power_kw
        } else {
            hours * power_kw / self.eta
        }
    }
}

#[derive(Debug, Clone)]
struct ScenarioVars {
    a_plus: Vec<VarId>,
    a_minus: Vec<VarId>,
    soe: Vec<VarId>,
}

/// The day-ahead program together with its variable layout.
#[derive(Debug, Clone)]
pub struct DayAheadModel {
    pub lp: LinearProgram,
    l_hat: TimeSeries,
    battery: BatteryParams,
    bl_plus: Vec<VarId>,
    bl_minus: Vec<VarId>,
    scenarios: Vec<ScenarioVars>,
}

impl DayAheadModel {
    pub fn steps(&self) -> usize {
        self.l_hat.len()
    }

    pub fn battery(&self) -> &BatteryParams {
        &self.battery
    }

    /// Turn a solution of [`Self::lp`] into a schedule.
    pub fn schedule(&self, sol: &Solution) -> Result<Schedule> {
        if sol.status != Status::Optimal {
            return Err(Error::Infeasible(format!(
                "day-ahead program is {:?}",
                sol.status
            )));
        }
        let grid = *self.l_hat.grid();
        let series = |ids: &[VarId], unit: Unit| {
            // Tiny negative round-off on non-negative powers is dropped.
            let v = ids
                .iter()
                .map(|&id| {
                    let x = sol.value(id);
                    if unit == Unit::Kw && x.abs() < 1e-9 {
                        0.0
                    } else {
                        x
                    }
                })
                .collect();
            TimeSeries::new(grid, v, unit)
        };
        let b_local_plus = series(&self.bl_plus, Unit::Kw)?;
        let b_local_minus = series(&self.bl_minus, Unit::Kw)?;
        let mut scenarios = Vec::with_capacity(self.scenarios.len());
        for sv in &self.scenarios {
            scenarios.push(ScenarioPlan {
                b_afrr_plus: series(&sv.a_plus, Unit::Kw)?,
                b_afrr_minus: series(&sv.a_minus, Unit::Kw)?,
                soe: series(&sv.soe, Unit::Kwh)?,
            });
        }
        let dispatch = dispatch_values(&self.l_hat, &b_local_plus, &b_local_minus);
        let p_peak_shave = dispatch.iter().fold(0.0_f64, |m, &v| m.max(v));
        Ok(Schedule {
            l_hat: self.l_hat.clone(),
            dispatch_plan: TimeSeries::new(grid, dispatch, Unit::Kw)?,
            b_local_plus,
            b_local_minus,
            scenarios,
            p_peak_shave,
            objective_chf: sol.objective,
            soe0: self.battery.soe0,
        })
    }
}

/// Per-scenario second-stage decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPlan {
    /// Down-regulation (charging) power.
    pub b_afrr_plus: TimeSeries,
    /// Up-regulation (discharging) power.
    pub b_afrr_minus: TimeSeries,
    /// State of energy at the end of each step.
    pub soe: TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Net-load forecast the schedule was built for.
    pub l_hat: TimeSeries,
    pub b_local_plus: TimeSeries,
    pub b_local_minus: TimeSeries,
    pub scenarios: Vec<ScenarioPlan>,
    pub p_peak_shave: f64,
    pub dispatch_plan: TimeSeries,
    pub objective_chf: f64,
    pub soe0: f64,
}

impl Schedule {
    pub fn steps(&self) -> usize {
        self.l_hat.len()
    }

    /// Signed local battery power (positive charges).
    pub fn b_local(&self) -> Vec<f64> {
        self.b_local_plus
            .values()
            .iter()
            .zip(self.b_local_minus.values())
            .map(|(p, m)| p - m)
            .collect()
    }

    /// Largest elementwise product of total charging and total discharging
    /// power over all scenarios and steps.
    pub fn max_exclusivity_product(&self) -> f64 {
        let mut worst = 0.0_f64;
        for s in &self.scenarios {
            for t in 0..self.steps() {
                let charge = self.b_local_plus.values()[t] + s.b_afrr_plus.values()[t];
                let discharge = self.b_local_minus.values()[t] + s.b_afrr_minus.values()[t];
                worst = worst.max(charge * discharge);
            }
        }
        worst
    }

    /// Per-interval SOE window `(lo, hi)` for the end of each interval: the
    /// loosest bounds from which at least one scenario's remaining
    /// trajectory, or the local-only trajectory, can still be followed.
    pub fn soe_envelope(&self, battery: &BatteryParams) -> Vec<(f64, f64)> {
        let dt = self.l_hat.grid().step_hours();
        let mut trajectories: Vec<Vec<f64>> = self
            .scenarios
            .iter()
            .map(|s| s.soe.values().to_vec())
            .collect();
        let mut soe = self.soe0;
        let local: Vec<f64> = self
            .b_local()
            .iter()
            .map(|&b| {
                soe += battery.soe_delta(b, dt);
                soe
            })
            .collect();
        trajectories.push(local);
        let n = self.steps();
        (0..n)
            .map(|t| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for traj in &trajectories {
                    let future_min = traj[t..].iter().copied().fold(f64::INFINITY, f64::min);
                    let future_max = traj[t..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    lo = lo.min(battery.e_min + traj[t] - future_min);
                    hi = hi.max(battery.e_max + traj[t] - future_max);
                }
                (lo.max(battery.e_min), hi.min(battery.e_max))
            })
            .collect()
    }

    /// CSV with one row per step.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![
            "timestamp_iso8601".to_string(),
            "dispatch_kw".into(),
            "l_hat_kw".into(),
            "b_local_plus_kw".into(),
            "b_local_minus_kw".into(),
        ];
        for w in 0..self.scenarios.len() {
            header.push(format!("afrr_plus_kw_{w}"));
            header.push(format!("afrr_minus_kw_{w}"));
            header.push(format!("soe_kwh_{w}"));
        }
        wtr.write_record(&header)?;
        for t in 0..self.steps() {
            let mut row = vec![
                format_timestamp(self.l_hat.grid().timestamp(t)),
                self.dispatch_plan.values()[t].to_string(),
                self.l_hat.values()[t].to_string(),
                self.b_local_plus.values()[t].to_string(),
                self.b_local_minus.values()[t].to_string(),
            ];
            for s in &self.scenarios {
                row.push(s.b_afrr_plus.values()[t].to_string());
                row.push(s.b_afrr_minus.values()[t].to_string());
                row.push(s.soe.values()[t].to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// `key = value` lines.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "objective_chf = {}", self.objective_chf);
        let _ = writeln!(s, "p_peak_shave_kw = {}", self.p_peak_shave);
        let _ = writeln!(s, "soe0_kwh = {}", self.soe0);
        let _ = writeln!(s, "scenarios = {}", self.scenarios.len());
        s
    }

    /// Inverse of [`Self::write_csv`] plus [`Self::summary`].
    pub fn read_csv<R: Read>(reader: R, summary: &str) -> Result<Self> {
        let mut objective = None;
        let mut soe0 = None;
        for line in summary.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("summary {}: {e}", k.trim())))?;
            match k.trim() {
                "objective_chf" => objective = Some(v),
                "soe0_kwh" => soe0 = Some(v),
                _ => {}
            }
        }
        let (Some(objective_chf), Some(soe0)) = (objective, soe0) else {
            return Err(Error::Parse(
                "summary lacks objective_chf or soe0_kwh".into(),
            ));
        };

        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 5 || (header.len() - 5) % 3 != 0 || &header[0] != "timestamp_iso8601" {
            return Err(Error::Parse("unexpected schedule header".into()));
        }
        let n_scen = (header.len() - 5) / 3;
        let mut stamps = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 1];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            stamps.push(parse_timestamp(&rec[0])?);
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(
                    rec[j + 1]
                        .parse()
                        .map_err(|e| Error::Parse(format!("schedule row {}: {e}", i + 1)))?,
                );
            }
        }
        if stamps.len() < 2 {
            return Err(Error::InvalidLength(
                "schedule needs at least 2 rows".into(),
            ));
        }
        let step = (stamps[1] - stamps[0]).num_seconds();
        if step <= 0 {
            return Err(Error::Parse(
                "schedule timestamps are not increasing".into(),
            ));
        }
        let grid = TimeGrid::new(stamps[0], step as u32, stamps.len())?;
        let mut cols = cols.into_iter();
        let mut next =
            |unit| TimeSeries::new(grid, cols.next().expect("column count checked"), unit);
        let dispatch_plan = next(Unit::Kw)?;
        let l_hat = next(Unit::Kw)?;
        let b_local_plus = next(Unit::Kw)?;
        let b_local_minus = next(Unit::Kw)?;
        let mut scenarios = Vec::with_capacity(n_scen);
        for _ in 0..n_scen {
            scenarios.push(ScenarioPlan {
                b_afrr_plus: next(Unit::Kw)?,
                b_afrr_minus: next(Unit::Kw)?,
                soe: next(Unit::Kwh)?,
            });
        }
        let p_peak_shave = dispatch_plan
            .values()
            .iter()
            .fold(0.0_f64, |m, &v| m.max(v));
        Ok(Self {
            l_hat,
            b_local_plus,
            b_local_minus,
            scenarios,
            p_peak_shave,
            dispatch_plan,
            objective_chf,
            soe0,
        })
    }
}

fn dispatch_values(l_hat: &TimeSeries, plus: &TimeSeries, minus: &TimeSeries) -> Vec<f64> {
    l_hat
        .values()
        .iter()
        .zip(plus.values().iter().zip(minus.values()))
        .map(|(l, (p, m))| l + p - m)
        .collect()
}

/// Grid profile committed day-ahead: forecast plus local battery power.
/// aFRR allocations are not part of it.
pub fn dispatch_plan(schedule: &Schedule, l_hat: &TimeSeries) -> Result<TimeSeries> {
    l_hat.ensure_same_grid(&schedule.b_local_plus)?;
    TimeSeries::new(
        *l_hat.grid(),
        dispatch_values(l_hat, &schedule.b_local_plus, &schedule.b_local_minus),
        Unit::Kw,
    )
}

/// Build the day-ahead program.
pub fn build_day_ahead(
    l_hat: &TimeSeries,
    battery: &BatteryParams,
    site: &SiteParams,
    book: &TariffBook,
    scen: &ScenarioSet,
) -> Result<DayAheadModel> {
    battery.validate_envelope()?;
    let battery = battery.with_soe0_clamped(battery.soe0);
    l_hat.ensure_same_grid(&book.pi_import)?;
    let n = l_hat.len();
    if scen.steps() != n {
        return Err(Error::InvalidLength(format!(
            "scenarios span {} steps, forecast {n}",
            scen.steps()
        )));
    }
    for (t, (&i, &e)) in book
        .pi_import
        .values()
        .iter()
        .zip(book.pi_export.values())
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
    if !(site.transformer_kw > 0.0) {
        return Err(Error::InvalidModel(
            "transformer rating must be positive".into(),
        ));
    }
    if let Some(t) = l_hat
        .values()
        .iter()
        .position(|&l| l - battery.b_max > site.transformer_kw)
    {
        return Err(Error::Infeasible(format!(
            "forecast {} kW at step {t} exceeds the transformer rating even at full discharge",
            l_hat.values()[t]
        )));
    }

    let dt = l_hat.grid().step_hours();
    let eta = battery.eta;
    let bmax = battery.b_max;
    let imp = book.pi_import.values();
    let exp = book.pi_export.values();
    let l = l_hat.values();

    let mut lp = LinearProgram::new();
    let bl_plus: Vec<VarId> = (0..n)
        .map(|t| lp.add_var(format!("bl_plus_{t}"), 0.0, bmax))
        .collect();
    let bl_minus: Vec<VarId> = (0..n)
        .map(|t| lp.add_var(format!("bl_minus_{t}"), 0.0, bmax))
        .collect();
    let s: Vec<VarId> = (0..n)
        .map(|t| lp.add_var(format!("s_{t}"), 0.0, f64::INFINITY))
        .collect();
    let peak = lp.add_var("peak", 0.0, f64::INFINITY);

    // Energy: dt*(imp-exp)*s + dt*exp*(L + bl+ - bl-).
    for t in 0..n {
        lp.add_objective(s[t], dt * (imp[t] - exp[t]));
        lp.add_objective(bl_plus[t], dt * exp[t]);
        lp.add_objective(bl_minus[t], -dt * exp[t]);
        lp.add_objective_offset(dt * exp[t] * l[t]);
        lp.add_le(
            format!("pos_part_{t}"),
            vec![(bl_plus[t], 1.0), (bl_minus[t], -1.0), (s[t], -1.0)],
            -l[t],
        );
        lp.add_le(
            format!("peak_{t}"),
            vec![(bl_plus[t], 1.0), (bl_minus[t], -1.0), (peak, -1.0)],
            -l[t],
        );
    }
    lp.add_objective(peak, book.pi_power_per_day);

    let mut scenarios = Vec::with_capacity(scen.len());
    for (w, (sc, &p)) in scen
        .scenarios()
        .iter()
        .zip(scen.probabilities())
        .enumerate()
    {
        let mut a_plus = Vec::with_capacity(n);
        let mut a_minus = Vec::with_capacity(n);
        let mut soe = Vec::with_capacity(n);
        for t in 0..n {
            let down = sc.premium_down.get(t);
            let up = sc.premium_up.get(t);
            let ap = lp.add_var(
                format!("afrr_plus_{w}_{t}"),
                0.0,
                if down.is_blocked() { 0.0 } else { bmax },
            );
            let am = lp.add_var(
                format!("afrr_minus_{w}_{t}"),
                0.0,
                if up.is_blocked() { 0.0 } else { bmax },
            );
            if let Premium::Active(v) = down {
                lp.add_objective(ap, -p * dt * v);
            }
            if let Premium::Active(v) = up {
                lp.add_objective(am, -p * dt * v);
            }
            let c = lp.add_binary(format!("c_{w}_{t}"));
            let e = lp.add_var(format!("soe_{w}_{t}"), battery.e_min, battery.e_max);

            // soe[t] - soe[t-1] - dt*eta*(bl+ + a+) + dt/eta*(bl- + a-) = 0
            let mut dyn_row = vec![
                (e, 1.0),
                (bl_plus[t], -dt * eta),
                (ap, -dt * eta),
                (bl_minus[t], dt / eta),
                (am, dt / eta),
            ];
            let rhs = if t == 0 {
                battery.soe0
            } else {
                dyn_row.push((soe[t - 1], -1.0));
                0.0
            };
            lp.add_eq(format!("soe_dyn_{w}_{t}"), dyn_row, rhs);
            lp.add_le(
                format!("charge_{w}_{t}"),
                vec![(bl_plus[t], 1.0), (ap, 1.0), (c, -bmax)],
                0.0,
            );
            lp.add_le(
                format!("discharge_{w}_{t}"),
                vec![(bl_minus[t], 1.0), (am, 1.0), (c, bmax)],
                bmax,
            );
            // Total charging is at most b_max, so the limit can only bind here.
            if l[t] + bmax > site.transformer_kw {
                lp.add_le(
                    format!("transformer_{w}_{t}"),
                    vec![
                        (bl_plus[t], 1.0),
                        (bl_minus[t], -1.0),
                        (ap, 1.0),
                        (am, -1.0),
                    ],
                    site.transformer_kw - l[t],
                );
            }
            a_plus.push(ap);
            a_minus.push(am);
            soe.push(e);
        }
        lp.fix(soe[n - 1], battery.soe0);
        scenarios.push(ScenarioVars {
            a_plus,
            a_minus,
            soe,
        });
    }

    Ok(DayAheadModel {
        lp,
        l_hat: l_hat.clone(),
        battery,
        bl_plus,
        bl_minus,
        scenarios,
    })
}

/// Build and solve the day-ahead program.
/// Branch-and-bound budget for [`solve_day_ahead`].
pub const DAY_AHEAD_NODE_LIMIT: usize = 100;

/// Solve the day-ahead program within [`DAY_AHEAD_NODE_LIMIT`] nodes.
pub fn solve_day_ahead(
    l_hat: &TimeSeries,
    battery: &BatteryParams,
    site: &SiteParams,
    book: &TariffBook,
    scen: &ScenarioSet,
) -> Result<Schedule> {
    let opts = MilpOptions {
        node_limit: DAY_AHEAD_NODE_LIMIT,
        ..MilpOptions::default()
    };
    solve_day_ahead_with(l_hat, battery, site, book, scen, &opts)
}

pub fn solve_day_ahead_with(
    l_hat: &TimeSeries,
    battery: &BatteryParams,
    site: &SiteParams,
    book: &TariffBook,
    scen: &ScenarioSet,
    opts: &MilpOptions,
) -> Result<Schedule> {
    let model = build_day_ahead(l_hat, battery, site, book, scen)?;
    let sol = match solve_milp_with(&model.lp, opts) {
        Ok(sol) => sol,
        Err(Error::ResourceExhausted {
            limit,
            incumbent: Some(best),
        }) => {
            warn!(
                "day-ahead search stopped after {limit} nodes; objective {:.4} CHF, bound {:.4} CHF",
                best.objective, best.bound
            );
            *best
        }
        Err(e) => return Err(e),
    };
    match sol.status {
        Status::Optimal => model.schedule(&sol),
        Status::Infeasible => Err(Error::Infeasible(format!(
            "no schedule keeps the SOE within [{}, {}] kWh at {} kW and returns to {} kWh",
            model.battery.e_min, model.battery.e_max, model.battery.b_max, model.battery.soe0
        ))),
        Status::Unbounded => Err(Error::InvalidModel("day-ahead program is unbounded".into())),
    }
}
