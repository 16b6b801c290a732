//! Shrinking-horizon real-time controller.
//!
//! Every 30 s the controller re-plans the rest of the current 15-min
//! interval so that the interval's metered energy matches the dispatch plan,
//! adds aFRR power where the current premium pays for it, and applies only
//! the first step.

use log::warn;

use crate::error::{Error, Result};
use crate::forecasting::premium_persistence;
use crate::markets::Premium;
use crate::scheduler::BatteryParams;
use crate::solver::{solve_milp, LinearProgram, Status, VarId};

/// Weight of the min-max tie-break on local power, CHF/kW.
pub const TIE_BREAK_WEIGHT: f64 = 1e-3;
/// Penalty on leaving the day-ahead SOE envelope, CHF/kWh.
pub const ENVELOPE_PENALTY: f64 = 1e3;

/// Known part of the interval tracking error.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcTerms {
    /// kW·steps still to be delivered by local battery power.
    pub a: f64,
    /// Weights of the residual steps, all ones.
    pub b: Vec<f64>,
}

impl MpcTerms {
    pub fn residual(&self) -> usize {
        self.b.len()
    }
}

/// Everything the controller knows at one control step.
#[derive(Debug, Clone)]
pub struct MpcState {
    /// Interval index.
    pub t: usize,
    /// Last completed step of the interval, `None` at its start.
    pub k_star: Option<usize>,
    /// Control steps per interval.
    pub steps_per_interval: usize,
    /// Control step length, hours.
    pub step_hours: f64,
    /// Dispatch plan value for interval `t`, kW.
    pub p_hat: f64,
    /// Billed meter power (net load plus local battery power) for the
    /// completed steps of the interval, kW.
    pub meter_samples: Vec<f64>,
    pub soe_meas: f64,
    /// Net-load forecast for the residual steps, kW.
    pub l_hat_residual: f64,
    pub premium_up: Premium,
    pub premium_down: Premium,
    pub battery: BatteryParams,
    /// Day-ahead SOE window for the end of the interval, if any.
    pub envelope: Option<(f64, f64)>,
}

impl MpcState {
    pub fn residual(&self) -> usize {
        self.steps_per_interval - self.meter_samples.len()
    }

    fn validate(&self) -> Result<()> {
        let k = self.steps_per_interval;
        if k == 0 {
            return Err(Error::InvalidState(
                "an interval needs at least one control step".into(),
            ));
        }
        let expected = self.k_star.map_or(0, |j| j + 1);
        if self.k_star.is_some_and(|j| j + 1 >= k) {
            return Err(Error::InvalidState(format!(
                "k* = {:?} leaves no residual step in an interval of {k}",
                self.k_star
            )));
        }
        if self.meter_samples.len() != expected {
            return Err(Error::InvalidState(format!(
                "{} meter samples for k* = {:?}, expected {expected}",
                self.meter_samples.len(),
                self.k_star
            )));
        }
        let finite = [
            self.p_hat,
            self.soe_meas,
            self.l_hat_residual,
            self.step_hours,
        ]
        .iter()
        .chain(&self.meter_samples)
        .all(|v| v.is_finite());
        if !finite || self.step_hours <= 0.0 {
            return Err(Error::InvalidState("non-finite controller input".into()));
        }
        if self.soe_meas < -1e-9 || self.soe_meas > self.battery.e_nom + 1e-9 {
            return Err(Error::InvalidState(format!(
                "measured SOE {} kWh outside [0, {}]",
                self.soe_meas, self.battery.e_nom
            )));
        }
        Ok(())
    }
}

/// Setpoint for the next control step.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcDecision {
    /// Signed total battery power, kW (positive charges).
    pub b0: f64,
    pub b_local_plus: f64,
    pub b_local_minus: f64,
    pub b_afrr_plus: f64,
    pub b_afrr_minus: f64,
    /// Set when the controller could not solve and fell back to idling.
    pub alarm: Option<String>,
}

impl MpcDecision {
    pub fn idle(alarm: Option<String>) -> Self {
        Self {
            b0: 0.0,
            b_local_plus: 0.0,
            b_local_minus: 0.0,
            b_afrr_plus: 0.0,
            b_afrr_minus: 0.0,
            alarm,
        }
    }

    pub fn b_local(&self) -> f64 {
        self.b_local_plus - self.b_local_minus
    }

    pub fn b_afrr(&self) -> f64 {
        self.b_afrr_plus - self.b_afrr_minus
    }
}

pub fn tracking_terms(state: &MpcState) -> Result<MpcTerms> {
    state.validate()?;
    let k = state.steps_per_interval as f64;
    let residual = state.residual();
    let measured: f64 = state.meter_samples.iter().sum();
    Ok(MpcTerms {
        a: k * state.p_hat - measured - residual as f64 * state.l_hat_residual,
        b: vec![1.0; residual],
    })
}

/// Variables of one controller program.
#[derive(Debug, Clone)]
pub struct MpcModel {
    pub lp: LinearProgram,
    pub local_plus: Vec<VarId>,
    pub local_minus: Vec<VarId>,
    pub afrr_plus: Vec<VarId>,
    pub afrr_minus: Vec<VarId>,
    pub charging: Vec<VarId>,
    pub soe: Vec<VarId>,
    pub z: VarId,
    pub m: VarId,
}

pub fn build_mpc(terms: &MpcTerms, state: &MpcState) -> Result<MpcModel> {
    if !terms.a.is_finite() || terms.b.is_empty() {
        return Err(Error::InvalidState(
            "tracking terms need a finite a and a residual step".into(),
        ));
    }
    let bat = &state.battery;
    let dt = state.step_hours;
    let n = terms.residual();
    let up = premium_persistence(state.premium_up, n);
    let down = premium_persistence(state.premium_down, n);
    let mut lp = LinearProgram::new();

    let z = lp.add_var("z", 0.0, f64::INFINITY);
    let m = lp.add_var("m", 0.0, bat.b_max);
    lp.add_objective(z, dt);
    lp.add_objective(m, TIE_BREAK_WEIGHT);

    let (mut lps, mut lms, mut aps, mut ams) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut cs, mut soes): (Vec<VarId>, Vec<VarId>) = (Vec::new(), Vec::new());
    for r in 0..n {
        let lp_r = lp.add_var(format!("lp_{r}"), 0.0, bat.b_max);
        let lm_r = lp.add_var(format!("lm_{r}"), 0.0, bat.b_max);
        let p_down = down.get(r);
        let p_up = up.get(r);
        let ap_r = lp.add_var(
            format!("ap_{r}"),
            0.0,
            if p_down.is_blocked() { 0.0 } else { bat.b_max },
        );
        let am_r = lp.add_var(
            format!("am_{r}"),
            0.0,
            if p_up.is_blocked() { 0.0 } else { bat.b_max },
        );
        lp.add_objective(ap_r, -dt * p_down.or_zero());
        lp.add_objective(am_r, -dt * p_up.or_zero());
        let c_r = lp.add_binary(format!("c_{r}"));
        let soe_r = lp.add_var(format!("soe_{r}"), bat.e_min, bat.e_max);

        lp.add_le(
            format!("charge_{r}"),
            vec![(lp_r, 1.0), (ap_r, 1.0), (c_r, -bat.b_max)],
            0.0,
        );
        lp.add_le(
            format!("discharge_{r}"),
            vec![(lm_r, 1.0), (am_r, 1.0), (c_r, bat.b_max)],
            bat.b_max,
        );
        let mut dyn_row = vec![
            (soe_r, 1.0),
            (lp_r, -dt * bat.eta),
            (ap_r, -dt * bat.eta),
            (lm_r, dt / bat.eta),
            (am_r, dt / bat.eta),
        ];
        let rhs = match soes.last() {
            Some(&prev) => {
                dyn_row.push((prev, -1.0));
                0.0
            }
            None => state.soe_meas,
        };
        lp.add_eq(format!("soe_{r}"), dyn_row, rhs);
        lp.add_le(format!("m_plus_{r}"), vec![(lp_r, 1.0), (m, -1.0)], 0.0);
        lp.add_le(format!("m_minus_{r}"), vec![(lm_r, 1.0), (m, -1.0)], 0.0);

        // With one aFRR direction paid, deliver it first.
        if let Some(&prev) = cs.last() {
            match (p_up.is_blocked(), p_down.is_blocked()) {
                (false, true) => {
                    lp.add_le(format!("order_{r}"), vec![(prev, 1.0), (c_r, -1.0)], 0.0)
                }
                (true, false) => {
                    lp.add_le(format!("order_{r}"), vec![(c_r, 1.0), (prev, -1.0)], 0.0)
                }
                _ => {}
            }
        }
        lps.push(lp_r);
        lms.push(lm_r);
        aps.push(ap_r);
        ams.push(am_r);
        cs.push(c_r);
        soes.push(soe_r);
    }

    // z >= |a - sum_r b_r (lp_r - lm_r)|
    let mut above = vec![(z, -1.0)];
    let mut below = vec![(z, -1.0)];
    for r in 0..n {
        above.extend([(lps[r], -terms.b[r]), (lms[r], terms.b[r])]);
        below.extend([(lps[r], terms.b[r]), (lms[r], -terms.b[r])]);
    }
    lp.add_le("track_above", above, -terms.a);
    lp.add_le("track_below", below, terms.a);

    if let Some((lo, hi)) = state.envelope {
        let last = *soes.last().expect("residual is non-empty");
        let s_lo = lp.add_var("env_short", 0.0, f64::INFINITY);
        let s_hi = lp.add_var("env_over", 0.0, f64::INFINITY);
        lp.add_objective(s_lo, ENVELOPE_PENALTY);
        lp.add_objective(s_hi, ENVELOPE_PENALTY);
        lp.add_ge("env_lo", vec![(last, 1.0), (s_lo, 1.0)], lo);
        lp.add_le("env_hi", vec![(last, 1.0), (s_hi, -1.0)], hi);
    }

    Ok(MpcModel {
        lp,
        local_plus: lps,
        local_minus: lms,
        afrr_plus: aps,
        afrr_minus: ams,
        charging: cs,
        soe: soes,
        z,
        m,
    })
}

/// Solve the controller program and return its first step.
pub fn mpc_step(state: &MpcState) -> Result<MpcDecision> {
    let terms = tracking_terms(state)?;
    let model = build_mpc(&terms, state)?;
    let alarm = |why: String| {
        let msg = format!(
            "interval {} step {}: {why}; battery idled",
            state.t,
            state.meter_samples.len()
        );
        warn!("{msg}");
        Ok(MpcDecision::idle(Some(msg)))
    };
    let sol = match solve_milp(&model.lp) {
        Ok(sol) => sol,
        Err(Error::ResourceExhausted {
            incumbent: Some(best),
            ..
        }) => *best,
        Err(Error::ResourceExhausted {
            incumbent: None, ..
        }) => return alarm("controller search exhausted without a solution".into()),
        Err(e) => return Err(e),
    };
    if sol.status != Status::Optimal {
        return alarm(format!("controller program {:?}", sol.status));
    }
    let first = |ids: &[VarId]| sol.value(ids[0]).max(0.0);
    let (lp0, lm0, ap0, am0) = (
        first(&model.local_plus),
        first(&model.local_minus),
        first(&model.afrr_plus),
        first(&model.afrr_minus),
    );
    // The binary keeps one side at zero; drop round-off on the other.
    let (lp0, ap0, lm0, am0) = if sol.value(model.charging[0]) > 0.5 {
        (lp0, ap0, 0.0, 0.0)
    } else {
        (0.0, 0.0, lm0, am0)
    };
    Ok(MpcDecision {
        b0: (lp0 - lm0) + (ap0 - am0),
        b_local_plus: lp0,
        b_local_minus: lm0,
        b_afrr_plus: ap0,
        b_afrr_minus: am0,
        alarm: None,
    })
}
