//! Plant stand-in: battery physics, net-load replay, a synthetic aFRR
//! activation stream, and the closed loop around the controller.

use std::io::{Read, Write};

use log::{debug, warn};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecasting::intraday_persistence;
use crate::io::{format_timestamp, parse_timestamp};
use crate::markets::{threshold_one, Premium, TariffBook};
use crate::mpc::{mpc_step, MpcState};
use crate::scheduler::{BatteryParams, Schedule};
use crate::series::{SiteParams, TimeGrid, TimeSeries, Unit, CONTROL_STEP_SECONDS};

/// Commands closer than this to what was applied do not count as clamped.
pub const CLAMP_TOLERANCE_KW: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub soe: f64,
    pub last_applied_kw: f64,
    pub clamp_events: u64,
}

impl PlantState {
    pub fn new(soe: f64) -> Self {
        Self {
            soe,
            last_applied_kw: 0.0,
            clamp_events: 0,
        }
    }
}

/// Apply a power command for `hours`, clamped to the power rating and to the
/// SOE window.
pub fn battery_step(
    state: PlantState,
    b_cmd: f64,
    battery: &BatteryParams,
    hours: f64,
) -> PlantState {
    let mut applied = b_cmd.clamp(-battery.b_max, battery.b_max);
    if applied > 0.0 {
        let room = ((battery.e_max - state.soe) / (hours * battery.eta)).max(0.0);
        applied = applied.min(room);
    } else if applied < 0.0 {
        let room = ((state.soe - battery.e_min) * battery.eta / hours).max(0.0);
        applied = applied.max(-room);
    }
    let clamped = (applied - b_cmd).abs() > CLAMP_TOLERANCE_KW;
    PlantState {
        soe: state.soe + battery.soe_delta(applied, hours),
        last_applied_kw: applied,
        clamp_events: state.clamp_events + clamped as u64,
    }
}

/// Synthetic aFRR activation requests, one draw per control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationConfig {
    pub p_up: f64,
    pub p_down: f64,
    /// Activation prices are uniform on `[price_low, price_high]`, CHF/kWh.
    pub price_low: f64,
    pub price_high: f64,
    pub seed: u64,
}

impl Default for ActivationConfig {
    fn default() -> Self {
        Self {
            p_up: 0.05,
            p_down: 0.05,
            price_low: 0.18,
            price_high: 0.60,
            seed: 1,
        }
    }
}

impl ActivationConfig {
    /// No activations at all.
    pub fn silent(seed: u64) -> Self {
        Self {
            p_up: 0.0,
            p_down: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !p_ok(self.p_up) || !p_ok(self.p_down) || self.p_up + self.p_down > 1.0 {
            return Err(Error::InvalidValue(format!(
                "activation probabilities up {} down {} must lie in [0, 1] and sum to at most 1",
                self.p_up, self.p_down
            )));
        }
        if !(self.price_low.is_finite()
            && self.price_high.is_finite()
            && self.price_low <= self.price_high)
        {
            return Err(Error::InvalidValue(format!(
                "activation price range [{}, {}] is not valid",
                self.price_low, self.price_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// One control step of the activation stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub direction: Option<Direction>,
    /// Price issued with the request, CHF/kWh.
    pub price: Option<f64>,
    pub up: Premium,
    pub down: Premium,
}

impl Activation {
    pub const NONE: Activation = Activation {
        direction: None,
        price: None,
        up: Premium::Blocked,
        down: Premium::Blocked,
    };
}

/// Draw an activation per step, thresholded against the import tariff of
/// that step. Deterministic in `cfg.seed`.
pub fn activation_stream(cfg: &ActivationConfig, pi_import: &[f64]) -> Result<Vec<Activation>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(pi_import
        .iter()
        .map(|&import| {
            let u: f64 = rng.random();
            let price = if cfg.price_low < cfg.price_high {
                rng.random_range(cfg.price_low..=cfg.price_high)
            } else {
                cfg.price_low
            };
            let direction = if u < cfg.p_up {
                Some(Direction::Up)
            } else if u < cfg.p_up + cfg.p_down {
                Some(Direction::Down)
            } else {
                None
            };
            match direction {
                None => Activation::NONE,
                Some(d) => {
                    let premium = threshold_one(price, import);
                    Activation {
                        direction: Some(d),
                        price: Some(price),
                        up: if d == Direction::Up {
                            premium
                        } else {
                            Premium::Blocked
                        },
                        down: if d == Direction::Down {
                            premium
                        } else {
                            Premium::Blocked
                        },
                    }
                }
            }
        })
        .collect())
}

/// Net-load realization at control resolution: the forecast held over each
/// interval plus zero-mean uniform noise of the given amplitude.
pub fn noisy_realization(l_hat: &TimeSeries, noise_kw: f64, seed: u64) -> Result<TimeSeries> {
    if !(noise_kw >= 0.0 && noise_kw.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "noise amplitude {noise_kw} kW"
        )));
    }
    let fine = l_hat.grid().with_step(CONTROL_STEP_SECONDS)?;
    let held = l_hat.upsample_hold(fine)?;
    if noise_kw == 0.0 {
        return Ok(held);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = held
        .values()
        .iter()
        .map(|&v| v + rng.random_range(-noise_kw..=noise_kw))
        .collect();
    TimeSeries::new(fine, values, Unit::Kw)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimConfig {
    pub activation: ActivationConfig,
    /// Plant efficiency if it differs from the model's.
    pub plant_eta: Option<f64>,
}

/// One control step of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Realized net load, kW.
    pub l_kw: f64,
    /// Dispatch plan of the enclosing interval, kW.
    pub p_hat_kw: f64,
    /// Total command sent to the plant, kW.
    pub b_cmd_kw: f64,
    pub b_local_kw: f64,
    pub b_afrr_kw: f64,
    /// Grid power, `l + b_local + b_afrr`.
    pub p_meter_kw: f64,
    /// SOE at the end of the step.
    pub soe_kwh: f64,
    pub premium_up: Premium,
    pub premium_down: Premium,
    pub issued_price: Option<f64>,
    pub clamped: bool,
}

impl TraceRecord {
    /// Meter power billed to the site: aFRR energy is settled separately.
    pub fn billed_kw(&self) -> f64 {
        self.l_kw + self.b_local_kw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alarm {
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub grid: TimeGrid,
    pub steps_per_interval: usize,
    pub initial_soe: f64,
    pub records: Vec<TraceRecord>,
    pub alarms: Vec<Alarm>,
}

const TRACE_HEADER: [&str; 12] = [
    "timestamp_iso8601",
    "l_kw",
    "p_hat_kw",
    "b_cmd_kw",
    "b_local_kw",
    "b_afrr_kw",
    "p_meter_kw",
    "soe_kwh",
    "premium_up",
    "premium_down",
    "issued_price",
    "clamped",
];

fn premium_field(p: Premium) -> String {
    match p {
        Premium::Active(v) => v.to_string(),
        Premium::Blocked => "blocked".into(),
    }
}

fn parse_premium(s: &str) -> Result<Premium> {
    match s.trim() {
        "blocked" => Ok(Premium::Blocked),
        v => {
            let x: f64 = v
                .parse()
                .map_err(|e| Error::Parse(format!("premium {v:?}: {e}")))?;
            if x > 0.0 && x.is_finite() {
                Ok(Premium::Active(x))
            } else {
                Err(Error::Parse(format!("premium {v:?} must be positive")))
            }
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("{what} {s:?}: {e}")))
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn step_hours(&self) -> f64 {
        self.grid.step_hours()
    }

    pub fn clamp_events(&self) -> usize {
        self.records.iter().filter(|r| r.clamped).count()
    }

    /// One row per control step. SOE is the end-of-step value; the initial
    /// SOE and interval length live in [`Self::summary`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(TRACE_HEADER)?;
        for (i, r) in self.records.iter().enumerate() {
            wtr.write_record([
                format_timestamp(self.grid.timestamp(i)),
                r.l_kw.to_string(),
                r.p_hat_kw.to_string(),
                r.b_cmd_kw.to_string(),
                r.b_local_kw.to_string(),
                r.b_afrr_kw.to_string(),
                r.p_meter_kw.to_string(),
                r.soe_kwh.to_string(),
                premium_field(r.premium_up),
                premium_field(r.premium_down),
                r.issued_price.map(|p| p.to_string()).unwrap_or_default(),
                (r.clamped as u8).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// `key = value` lines needed to rebuild the trace from its CSV.
    pub fn summary(&self) -> String {
        format!(
            "initial_soe_kwh = {}\nsteps_per_interval = {}\nclamp_events = {}\nalarms = {}\n",
            self.initial_soe,
            self.steps_per_interval,
            self.clamp_events(),
            self.alarms.len()
        )
    }

    pub fn write_alarms<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["step", "timestamp_iso8601", "message"])?;
        for a in &self.alarms {
            wtr.write_record([
                a.step.to_string(),
                format_timestamp(self.grid.timestamp(a.step)),
                a.message.clone(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Inverse of [`Self::write_alarms`].
    pub fn read_alarms<R: Read>(reader: R) -> Result<Vec<Alarm>> {
        let mut rdr = csv::Reader::from_reader(reader);
        rdr.records()
            .enumerate()
            .map(|(i, rec)| {
                let rec = rec?;
                if rec.len() != 3 {
                    return Err(Error::Parse(format!(
                        "alarm row {}: expected 3 fields",
                        i + 1
                    )));
                }
                let step = rec[0].trim().parse().map_err(|e| {
                    Error::Parse(format!("alarm row {}: step {:?}: {e}", i + 1, &rec[0]))
                })?;
                Ok(Alarm {
                    step,
                    message: rec[2].to_string(),
                })
            })
            .collect()
    }

    /// Rebuild a trace from [`Self::write_csv`] output and [`Self::summary`].
    /// Alarms are not part of the CSV and come back empty.
    pub fn read_csv<R: Read>(reader: R, summary: &str) -> Result<Self> {
        let mut initial_soe = None;
        let mut steps_per_interval = None;
        for line in summary.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("summary line {line:?}")))?;
            match k.trim() {
                "initial_soe_kwh" => initial_soe = Some(parse_f64(v, "initial SOE")?),
                "steps_per_interval" => {
                    steps_per_interval = Some(
                        v.trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Parse(format!("steps_per_interval {v:?}: {e}")))?,
                    )
                }
                _ => {}
            }
        }
        let (Some(initial_soe), Some(steps_per_interval)) = (initial_soe, steps_per_interval)
        else {
            return Err(Error::Parse(
                "trace summary lacks initial_soe_kwh or steps_per_interval".into(),
            ));
        };

        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(TRACE_HEADER) {
            return Err(Error::Parse(format!(
                "unexpected trace header {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut stamps = Vec::new();
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            stamps.push(parse_timestamp(&rec[0])?);
            records.push(TraceRecord {
                l_kw: parse_f64(&rec[1], "l_kw")?,
                p_hat_kw: parse_f64(&rec[2], "p_hat_kw")?,
                b_cmd_kw: parse_f64(&rec[3], "b_cmd_kw")?,
                b_local_kw: parse_f64(&rec[4], "b_local_kw")?,
                b_afrr_kw: parse_f64(&rec[5], "b_afrr_kw")?,
                p_meter_kw: parse_f64(&rec[6], "p_meter_kw")?,
                soe_kwh: parse_f64(&rec[7], "soe_kwh")?,
                premium_up: parse_premium(&rec[8])?,
                premium_down: parse_premium(&rec[9])?,
                issued_price: match rec[10].trim() {
                    "" => None,
                    v => Some(parse_f64(v, "issued_price")?),
                },
                clamped: match rec[11].trim() {
                    "0" => false,
                    "1" => true,
                    v => return Err(Error::Parse(format!("clamped flag {v:?}"))),
                },
            });
        }
        if stamps.len() < 2 {
            return Err(Error::InvalidLength(format!(
                "trace has {} rows",
                stamps.len()
            )));
        }
        let step = (stamps[1] - stamps[0]).num_seconds();
        if step <= 0
            || stamps
                .windows(2)
                .any(|w| (w[1] - w[0]).num_seconds() != step)
        {
            return Err(Error::GridMismatch(
                "trace timestamps are not uniformly spaced".into(),
            ));
        }
        let grid = TimeGrid::new(stamps[0], step as u32, records.len())?;
        Ok(Self {
            grid,
            steps_per_interval,
            initial_soe,
            records,
            alarms: Vec::new(),
        })
    }
}

/// Run the controller against the plant for the schedule's whole horizon.
pub fn run_closed_loop(
    schedule: &Schedule,
    realization: &TimeSeries,
    book: &TariffBook,
    cfg: &SimConfig,
    battery: &BatteryParams,
    site: &SiteParams,
) -> Result<SimTrace> {
    let coarse = *schedule.l_hat.grid();
    let fine = coarse.with_step(CONTROL_STEP_SECONDS)?;
    if *realization.grid() != fine {
        return Err(Error::GridMismatch(format!(
            "realization has {} steps of {} s from {}, the schedule needs {} steps of {} s from {}",
            realization.len(),
            realization.grid().step_seconds(),
            realization.grid().start(),
            fine.steps(),
            fine.step_seconds(),
            fine.start()
        )));
    }
    book.pi_import.ensure_same_grid(&schedule.l_hat)?;
    let k = (coarse.step_seconds() / CONTROL_STEP_SECONDS) as usize;
    let dt = fine.step_hours();
    let plant_battery = BatteryParams {
        eta: cfg.plant_eta.unwrap_or(battery.eta),
        ..*battery
    };
    let import_fine = book.pi_import.upsample_hold(fine)?;
    let activations = activation_stream(&cfg.activation, import_fine.values())?;
    let envelope = schedule.soe_envelope(battery);
    let plan = schedule.dispatch_plan.values();
    let l = realization.values();

    let mut plant = PlantState::new(schedule.soe0);
    let mut records: Vec<TraceRecord> = Vec::with_capacity(fine.steps());
    let mut alarms = Vec::new();
    let mut measured_l: Vec<f64> = Vec::with_capacity(fine.steps());
    for t in 0..coarse.steps() {
        for j in 0..k {
            let n = t * k + j;
            let k_star = j.checked_sub(1);
            let state = MpcState {
                t,
                k_star,
                steps_per_interval: k,
                step_hours: dt,
                p_hat: plan[t],
                meter_samples: records[t * k..]
                    .iter()
                    .map(TraceRecord::billed_kw)
                    .collect(),
                soe_meas: plant.soe,
                l_hat_residual: intraday_persistence(&measured_l, t, k_star, k, &schedule.l_hat)?,
                premium_up: activations[n].up,
                premium_down: activations[n].down,
                battery: *battery,
                envelope: Some(envelope[t]),
            };
            let decision = mpc_step(&state)?;
            if let Some(msg) = &decision.alarm {
                alarms.push(Alarm {
                    step: n,
                    message: msg.clone(),
                });
            }
            plant = battery_step(plant, decision.b0, &plant_battery, dt);
            let applied = plant.last_applied_kw;
            let clamped = (applied - decision.b0).abs() > CLAMP_TOLERANCE_KW;
            // Both components share a sign, so a clamp scales them together.
            let scale = if decision.b0 != 0.0 {
                applied / decision.b0
            } else {
                0.0
            };
            let (b_local, b_afrr) = (decision.b_local() * scale, decision.b_afrr() * scale);
            if clamped {
                debug!(
                    "step {n}: command {:.3} kW clamped to {applied:.3} kW",
                    decision.b0
                );
            }
            let p_meter = l[n] + b_local + b_afrr;
            if p_meter.abs() > site.transformer_kw {
                let msg = format!(
                    "grid power {p_meter:.1} kW exceeds the {} kW transformer",
                    site.transformer_kw
                );
                warn!("step {n}: {msg}");
                alarms.push(Alarm {
                    step: n,
                    message: msg,
                });
            }
            measured_l.push(l[n]);
            records.push(TraceRecord {
                l_kw: l[n],
                p_hat_kw: plan[t],
                b_cmd_kw: decision.b0,
                b_local_kw: b_local,
                b_afrr_kw: b_afrr,
                p_meter_kw: p_meter,
                soe_kwh: plant.soe,
                premium_up: activations[n].up,
                premium_down: activations[n].down,
                issued_price: activations[n].price,
                clamped,
            });
        }
    }
    Ok(SimTrace {
        grid: fine,
        steps_per_interval: k,
        initial_soe: schedule.soe0,
        records,
        alarms,
    })
}
