#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stackbess::solver::{solve_lp, LinearProgram, Relation, Status, VarId};

pub const ORACLE_TOL: f64 = 1e-9;

/// Minimum of a bounded LP by enumerating every basic solution.
/// `None` when no vertex is feasible.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    // Hyperplanes a.x = b; equalities must always be active.
    let mut forced: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut optional: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in lp.constraints() {
        let mut a = vec![0.0; n];
        for &(v, coef) in &c.coeffs {
            a[v.index()] += coef;
        }
        if a.iter().all(|&x| x == 0.0) {
            // Constant row: either always satisfied or never.
            let ok = match c.relation {
                Relation::Eq => c.rhs.abs() <= ORACLE_TOL,
                Relation::Le => c.rhs >= -ORACLE_TOL,
            };
            if !ok {
                return None;
            }
            continue;
        }
        match c.relation {
            Relation::Eq => forced.push((a, c.rhs)),
            Relation::Le => optional.push((a, c.rhs)),
        }
    }
    for (j, v) in lp.variables().iter().enumerate() {
        assert!(
            v.lower.is_finite() && v.upper.is_finite(),
            "oracle needs box bounds"
        );
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        optional.push((e.clone(), v.lower));
        optional.push((e, v.upper));
    }
    if forced.len() > n {
        return brute_overdetermined(lp, &forced, &optional);
    }
    let need = n - forced.len();
    let mut best: Option<f64> = None;
    for subset in combinations(optional.len(), need) {
        let mut rows: Vec<(Vec<f64>, f64)> = forced.clone();
        rows.extend(subset.iter().map(|&i| optional[i].clone()));
        let Some(x) = solve_square(rows) else {
            continue;
        };
        if lp.max_violation(&x) <= 1e-7 {
            let f = lp.evaluate(&x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

fn brute_overdetermined(
    lp: &LinearProgram,
    forced: &[(Vec<f64>, f64)],
    optional: &[(Vec<f64>, f64)],
) -> Option<f64> {
    // Pick n of the equalities; the feasibility check covers the rest.
    let n = lp.num_vars();
    let all: Vec<(Vec<f64>, f64)> = forced.iter().chain(optional).cloned().collect();
    let mut best: Option<f64> = None;
    for subset in combinations(all.len(), n) {
        let rows = subset.iter().map(|&i| all[i].clone()).collect();
        let Some(x) = solve_square(rows) else {
            continue;
        };
        if lp.max_violation(&x) <= 1e-7 {
            let f = lp.evaluate(&x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Gaussian elimination with partial pivoting.
fn solve_square(mut rows: Vec<(Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let n = rows.len();
    if n == 0 {
        return Some(Vec::new());
    }
    for col in 0..n {
        let piv =
            (col..n).max_by(|&a, &b| rows[a].0[col].abs().total_cmp(&rows[b].0[col].abs()))?;
        if rows[piv].0[col].abs() < 1e-10 {
            return None;
        }
        rows.swap(col, piv);
        let (head, tail) = rows.split_at_mut(col + 1);
        let p = &head[col];
        for r in tail.iter_mut() {
            let f = r.0[col] / p.0[col];
            if f != 0.0 {
                for j in col..n {
                    r.0[j] -= f * p.0[j];
                }
                r.1 -= f * p.1;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| rows[i].0[j] * x[j]).sum();
        x[i] = (rows[i].1 - s) / rows[i].0[i];
    }
    Some(x)
}

/// Minimum of a mixed-binary program by solving the LP for every binary
/// assignment. `None` when no assignment is feasible.
pub fn binary_enumeration(lp: &LinearProgram) -> Option<f64> {
    let binaries: Vec<VarId> = lp.var_ids().filter(|&v| lp.var(v).binary).collect();
    assert!(binaries.len() <= 12);
    let relaxed = lp.relax_binaries();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << binaries.len()) {
        let mut sub = relaxed.clone();
        let mut skip = false;
        for (i, &b) in binaries.iter().enumerate() {
            let v = f64::from((mask >> i) & 1);
            let var = lp.var(b);
            if v < var.lower || v > var.upper {
                skip = true;
            }
            sub.fix(b, v);
        }
        if skip {
            continue;
        }
        let f = if relaxed
            .variables()
            .iter()
            .all(|v| v.lower.is_finite() && v.upper.is_finite())
        {
            vertex_enumeration(&sub)
        } else {
            let sol = solve_lp(&sub).unwrap();
            (sol.status == Status::Optimal).then_some(sol.objective)
        };
        if let Some(f) = f {
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

pub struct RandomLp {
    pub lp: LinearProgram,
    /// A point known to satisfy every row and bound.
    pub witness: Vec<f64>,
}

fn coef(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<f64>() < 0.25 {
        0.0
    } else {
        (rng.random_range(-10.0..10.0_f64) * 2.0).round() / 2.0
    }
}

/// Random box-bounded LP that is feasible by construction.
pub fn random_lp(seed: u64, max_vars: usize, max_rows: usize) -> RandomLp {
    random_program(seed, max_vars, max_rows, 0)
}

/// Random program with `binaries` binary variables in addition to the
/// continuous ones.
pub fn random_program(seed: u64, max_vars: usize, max_rows: usize, binaries: usize) -> RandomLp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_vars);
    let m = rng.random_range(1..=max_rows);
    let mut lp = LinearProgram::new();
    let mut witness = Vec::new();
    let mut vars = Vec::new();
    for j in 0..n {
        let lo = rng.random_range(-5.0..0.0_f64).round();
        let hi = lo + rng.random_range(1.0..8.0_f64).round();
        vars.push(lp.add_var(format!("x{j}"), lo, hi));
        witness.push(rng.random_range(lo..=hi));
    }
    for j in 0..binaries {
        vars.push(lp.add_binary(format!("b{j}")));
        witness.push(if rng.random::<bool>() { 1.0 } else { 0.0 });
    }
    for (&v, _) in vars.iter().zip(&witness) {
        let c = coef(&mut rng);
        lp.add_objective(v, c);
    }
    for r in 0..m {
        let coeffs: Vec<(VarId, f64)> = vars.iter().map(|&v| (v, coef(&mut rng))).collect();
        let lhs: f64 = coeffs.iter().map(|&(v, a)| a * witness[v.index()]).sum();
        if rng.random::<f64>() < 0.15 && binaries == 0 {
            lp.add_eq(format!("r{r}"), coeffs, lhs);
        } else {
            let slack = if rng.random::<f64>() < 0.3 {
                0.0
            } else {
                rng.random_range(0.0..4.0)
            };
            lp.add_le(format!("r{r}"), coeffs, lhs + slack);
        }
    }
    RandomLp { lp, witness }
}

/// Tiny day-ahead instance for exhaustive search.
pub struct TinyDay {
    pub l_hat: Vec<f64>,
    pub import: Vec<f64>,
    pub export: Vec<f64>,
    pub power_rate: f64,
    pub b_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub eta: f64,
    pub soe0: f64,
    pub dt: f64,
    /// `(premium_up, premium_down, probability)`; 0 means blocked.
    pub scenarios: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

/// Best objective over battery powers restricted to multiples of `step` kW,
/// local and aFRR alike. Local power follows the net-load sign convention
/// (positive charges); aFRR only runs in a paid direction and never against
/// the local power.
pub fn brute_force_day(day: &TinyDay, step: f64) -> Option<f64> {
    let n = day.l_hat.len();
    let levels: Vec<f64> = {
        let k = (day.b_max / step).round() as i64;
        (-k..=k).map(|i| i as f64 * step).collect()
    };
    let mut plan = vec![0usize; n];
    let mut best: Option<f64> = None;
    'plans: loop {
        let local: Vec<f64> = plan.iter().map(|&i| levels[i]).collect();
        let mut cost = 0.0;
        let mut peak: f64 = 0.0;
        for (t, b) in local.iter().enumerate() {
            let p = day.l_hat[t] + b;
            cost += day.dt * (day.import[t] * p.max(0.0) - day.export[t] * (-p).max(0.0));
            peak = peak.max(p);
        }
        cost += day.power_rate * peak;
        let mut feasible = true;
        for (up, down, prob) in &day.scenarios {
            match best_regulation(day, &local, up, down, step) {
                Some(r) => cost -= prob * r,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible {
            best = Some(best.map_or(cost, |b: f64| b.min(cost)));
        }
        // next plan
        for slot in plan.iter_mut() {
            *slot += 1;
            if *slot < levels.len() {
                continue 'plans;
            }
            *slot = 0;
        }
        break;
    }
    best
}

fn best_regulation(
    day: &TinyDay,
    local: &[f64],
    up: &[f64],
    down: &[f64],
    step: f64,
) -> Option<f64> {
    fn go(
        day: &TinyDay,
        local: &[f64],
        up: &[f64],
        down: &[f64],
        step: f64,
        t: usize,
        soe: f64,
    ) -> Option<f64> {
        let tol = 1e-9;
        if t == local.len() {
            return ((soe - day.soe0).abs() <= tol).then_some(0.0);
        }
        let mut options = vec![(0.0, 0.0, 0.0)];
        let room = day.b_max - local[t].abs();
        let k = ((room + tol) / step).floor() as usize;
        for i in 1..=k {
            let a = i as f64 * step;
            if down[t] > 0.0 && local[t] >= 0.0 {
                options.push((a, 0.0, day.dt * down[t] * a));
            }
            if up[t] > 0.0 && local[t] <= 0.0 {
                options.push((0.0, a, day.dt * up[t] * a));
            }
        }
        let mut best: Option<f64> = None;
        for (plus, minus, revenue) in options {
            let charge = local[t].max(0.0) + plus;
            let discharge = (-local[t]).max(0.0) + minus;
            let next = soe + day.dt * (day.eta * charge - discharge / day.eta);
            if next < day.e_min - tol || next > day.e_max + tol {
                continue;
            }
            if let Some(rest) = go(day, local, up, down, step, t + 1, next) {
                let v = revenue + rest;
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best
    }
    go(day, local, up, down, step, 0, day.soe0)
}

/// Same instance in library types.
pub fn tiny_day_inputs(
    day: &TinyDay,
) -> (
    stackbess::TimeSeries,
    stackbess::BatteryParams,
    stackbess::SiteParams,
    stackbess::TariffBook,
    stackbess::ScenarioSet,
) {
    use stackbess::markets::{Scenario, ScenarioSet, TariffBook, ThresholdedPremium};
    use stackbess::{BatteryParams, SiteParams, TimeGrid, TimeSeries, Unit};
    let start = chrono::NaiveDate::from_ymd_opt(2024, 6, 12)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let grid = TimeGrid::new(start, (day.dt * 3600.0).round() as u32, day.l_hat.len()).unwrap();
    let series = |v: &[f64], u: Unit| TimeSeries::new(grid, v.to_vec(), u).unwrap();
    let battery = BatteryParams::new(
        day.e_max, day.e_min, day.e_max, day.b_max, day.eta, day.soe0,
    )
    .unwrap();
    let site = SiteParams::new(10_000.0, day.b_max).unwrap();
    let book = TariffBook::new(
        series(&day.import, Unit::ChfPerKwh),
        series(&day.export, Unit::ChfPerKwh),
        day.power_rate,
    )
    .unwrap();
    let scen = ScenarioSet::new(
        day.scenarios
            .iter()
            .map(|(up, down, _)| Scenario {
                premium_up: ThresholdedPremium::from_values(up).unwrap(),
                premium_down: ThresholdedPremium::from_values(down).unwrap(),
            })
            .collect(),
        day.scenarios.iter().map(|s| s.2).collect(),
    )
    .unwrap();
    (series(&day.l_hat, Unit::Kw), battery, site, book, scen)
}
