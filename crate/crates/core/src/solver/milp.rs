use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::{iteration_limit, Built, Outcome, Tableau};
use super::{LinearProgram, Relation, Solution, Status, FEAS_TOL};
use crate::error::{Error, Result};

/// Number of rounds a dive spreads its fixings over.
const DIVE_CHUNKS: usize = 8;

/// Integral point and its objective.
type Incumbent = (Vec<f64>, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    /// Maximum number of evaluated nodes, root included.
    pub node_limit: usize,
    /// Nodes whose bound is within this of the incumbent are pruned.
    pub absolute_gap: f64,
    /// Same as `absolute_gap`, relative to the incumbent's magnitude.
    pub relative_gap: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_limit: 20_000,
            absolute_gap: 1e-7,
            relative_gap: 0.0,
        }
    }
}

impl MilpOptions {
    fn prunes(&self, bound: f64, incumbent: f64) -> bool {
        bound >= incumbent - self.absolute_gap.max(self.relative_gap * incumbent.abs())
    }
}

/// Solve a mixed-binary program with default options.
pub fn solve_milp(lp: &LinearProgram) -> Result<Solution> {
    solve_milp_with(lp, &MilpOptions::default())
}

struct Node {
    bound: f64,
    id: usize,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    lp: &'a LinearProgram,
    root: Tableau,
    root_bounds: Vec<(f64, f64)>,
    binaries: Vec<usize>,
    /// Rows touched by each variable, as `(row, coefficient)`.
    rows_of: Vec<Vec<(usize, f64)>>,
    limit: usize,
}

enum NodeResult {
    Pruned,
    Solved { values: Vec<f64>, objective: f64 },
}

impl Search<'_> {
    fn evaluate(&self, fixes: &[(usize, f64)]) -> Result<NodeResult> {
        let mut tableau = self.root.clone();
        let mut bounds = self.root_bounds.clone();
        for &(var, v) in fixes {
            if !tableau.set_var_bounds(var, v, v) {
                return Ok(NodeResult::Pruned);
            }
            bounds[var] = (v, v);
        }
        match tableau.reoptimize(self.limit) {
            Outcome::Optimal => {}
            Outcome::Infeasible => return Ok(NodeResult::Pruned),
            Outcome::Unbounded | Outcome::IterationLimit => {
                // Dual simplex failed to settle; fall back to a cold solve.
                return self.cold(&bounds);
            }
        }
        let values = tableau.extract(&bounds);
        Ok(NodeResult::Solved {
            objective: self.lp.evaluate(&values),
            values,
        })
    }

    fn cold(&self, bounds: &[(f64, f64)]) -> Result<NodeResult> {
        let sol = super::simplex::solve_with_bounds(self.lp, bounds)?;
        Ok(match sol.status {
            Status::Optimal => NodeResult::Solved {
                objective: sol.objective,
                values: sol.values,
            },
            _ => NodeResult::Pruned,
        })
    }

    /// Binary with the largest distance to the nearest integer.
    fn most_fractional(&self, values: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_frac = FEAS_TOL;
        for &b in &self.binaries {
            let frac = (values[b] - values[b].round()).abs();
            if frac > best_frac {
                best_frac = frac;
                best = Some(b);
            }
        }
        best
    }

    /// Round fractional binaries one at a time, keeping every row satisfied
    /// with the continuous variables unchanged. Returns the rounded point
    /// when all binaries could be rounded.
    fn simple_rounding(&self, values: &[f64]) -> Option<Vec<f64>> {
        let cons = self.lp.constraints();
        let mut activity: Vec<f64> = cons
            .iter()
            .map(|c| c.coeffs.iter().map(|&(v, a)| a * values[v.index()]).sum())
            .collect();
        let mut x = values.to_vec();
        for &b in &self.binaries {
            let cur = x[b];
            if (cur - cur.round()).abs() <= FEAS_TOL {
                continue;
            }
            let nearest = cur.round();
            let (lo, hi) = self.root_bounds[b];
            let fits = |v: f64| {
                v >= lo
                    && v <= hi
                    && self.rows_of[b].iter().all(|&(r, a)| {
                        let lhs = activity[r] + a * (v - cur);
                        match cons[r].relation {
                            Relation::Le => lhs <= cons[r].rhs + FEAS_TOL,
                            Relation::Eq => (lhs - cons[r].rhs).abs() <= FEAS_TOL,
                        }
                    })
            };
            let v = [nearest, 1.0 - nearest].into_iter().find(|&v| fits(v))?;
            for &(r, a) in &self.rows_of[b] {
                activity[r] += a * (v - cur);
            }
            x[b] = v;
        }
        Some(x)
    }

    /// Row violation caused by moving binary `b` from its current value
    /// to `v` with everything else held.
    fn rounding_violation(&self, activity: &[f64], values: &[f64], b: usize, v: f64) -> f64 {
        let cons = self.lp.constraints();
        self.rows_of[b]
            .iter()
            .map(|&(r, a)| {
                let lhs = activity[r] + a * (v - values[b]);
                match cons[r].relation {
                    Relation::Le => (lhs - cons[r].rhs).max(0.0),
                    Relation::Eq => (lhs - cons[r].rhs).abs(),
                }
            })
            .sum()
    }

    /// True if some row of `b` cannot be satisfied with `b = v` under `bounds`.
    fn impossible(&self, bounds: &[(f64, f64)], b: usize, v: f64) -> bool {
        let cons = self.lp.constraints();
        self.rows_of[b].iter().any(|&(r, a)| {
            let (mut lo, mut hi) = (a * v, a * v);
            for &(u, c) in &cons[r].coeffs {
                if u.index() == b {
                    continue;
                }
                let (l, h) = bounds[u.index()];
                lo += (c * l).min(c * h);
                hi += (c * l).max(c * h);
            }
            let tol = FEAS_TOL * (1.0 + cons[r].rhs.abs());
            match cons[r].relation {
                Relation::Le => lo > cons[r].rhs + tol,
                Relation::Eq => lo > cons[r].rhs + tol || hi < cons[r].rhs - tol,
            }
        })
    }

    /// Fix every fractional binary to the value that violates its rows
    /// least (nearest on ties) and re-solve, until the point is integral.
    /// Evaluates at most `budget` nodes.
    fn dive(&self, values: &[f64], budget: usize) -> Result<(Option<Incumbent>, usize)> {
        let cons = self.lp.constraints();
        let mut fixes: Vec<(usize, f64)> = Vec::new();
        let mut values = values.to_vec();
        let mut used = 0;
        let mut bounds = self.root_bounds.clone();
        while used < budget {
            let activity: Vec<f64> = cons
                .iter()
                .map(|c| c.coeffs.iter().map(|&(v, a)| a * values[v.index()]).sum())
                .collect();
            // (binary, value, how clearly the rows prefer that value)
            let mut fractional: Vec<(usize, f64, f64)> = self
                .binaries
                .iter()
                .filter(|&&b| (values[b] - values[b].round()).abs() > FEAS_TOL)
                .map(|&b| {
                    let v0 = self.rounding_violation(&activity, &values, b, 0.0);
                    let v1 = self.rounding_violation(&activity, &values, b, 1.0);
                    let forced1 = self.impossible(&bounds, b, 0.0);
                    let forced0 = self.impossible(&bounds, b, 1.0);
                    let pick = if forced0 {
                        0.0
                    } else if forced1 {
                        1.0
                    } else if v0 < v1 - FEAS_TOL {
                        0.0
                    } else if v1 < v0 - FEAS_TOL {
                        1.0
                    } else {
                        values[b].round().clamp(0.0, 1.0)
                    };
                    let clarity = if forced0 || forced1 {
                        f64::INFINITY
                    } else {
                        (v0 - v1).abs()
                    };
                    (b, pick, clarity)
                })
                .collect();
            if fractional.is_empty() {
                let objective = self.lp.evaluate(&values);
                return Ok((Some((values, objective)), used));
            }
            // Fix a chunk at a time so the continuous part can adapt; if that
            // turns out infeasible, retry with only the clearest choice.
            fractional.sort_by(|a, b| b.2.total_cmp(&a.2));
            let mut chunk = fractional.len().div_ceil(DIVE_CHUNKS);
            loop {
                let mut trial = fixes.clone();
                trial.extend(fractional.iter().take(chunk).map(|&(b, v, _)| (b, v)));
                used += 1;
                match self.evaluate(&trial)? {
                    NodeResult::Solved { values: v, .. } => {
                        for &(b, x) in &trial[fixes.len()..] {
                            bounds[b] = (x, x);
                        }
                        fixes = trial;
                        values = v;
                        break;
                    }
                    NodeResult::Pruned if chunk > 1 && used < budget => chunk = 1,
                    NodeResult::Pruned => return Ok((None, used)),
                }
            }
        }
        Ok((None, used))
    }
}

/// Best-bound branch-and-bound over the binary variables, branching on the
/// most fractional one.
pub fn solve_milp_with(lp: &LinearProgram, opts: &MilpOptions) -> Result<Solution> {
    solve_milp_from(lp, opts, None)
}

/// As [`solve_milp_with`], seeded with a known feasible point. A start that
/// is infeasible or not integral is ignored.
pub fn solve_milp_from(
    lp: &LinearProgram,
    opts: &MilpOptions,
    start: Option<&[f64]>,
) -> Result<Solution> {
    lp.validate()?;
    let root_bounds: Vec<(f64, f64)> = lp.variables().iter().map(|v| (v.lower, v.upper)).collect();
    let limit = iteration_limit(lp);
    let mut root = match Tableau::build(lp, &root_bounds) {
        Built::Ready(t) => *t,
        Built::Infeasible => return Ok(Solution::without_point(Status::Infeasible)),
    };
    match root.solve(limit) {
        Outcome::Optimal => {}
        Outcome::Infeasible => return Ok(Solution::without_point(Status::Infeasible)),
        Outcome::Unbounded => return Ok(Solution::without_point(Status::Unbounded)),
        Outcome::IterationLimit => {
            return Err(Error::InvalidModel(
                "simplex iteration limit reached".into(),
            ))
        }
    }
    let root_values = root.extract(&root_bounds);
    let root_objective = lp.evaluate(&root_values);
    let mut rows_of = vec![Vec::new(); lp.num_vars()];
    for (r, c) in lp.constraints().iter().enumerate() {
        for &(v, a) in &c.coeffs {
            if lp.var(v).binary && a != 0.0 {
                rows_of[v.index()].push((r, a));
            }
        }
    }
    let search = Search {
        lp,
        root,
        root_bounds,
        binaries: lp
            .variables()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.binary)
            .map(|(i, _)| i)
            .collect(),
        rows_of,
        limit,
    };

    let Some(first_branch) = search.most_fractional(&root_values) else {
        return Ok(Solution {
            status: Status::Optimal,
            values: root_values,
            objective: root_objective,
            bound: root_objective,
            nodes: 1,
        });
    };

    let mut nodes = 1;
    let mut incumbent = if let Some(values) = search.simple_rounding(&root_values) {
        let objective = lp.evaluate(&values);
        Some((values, objective))
    } else {
        // Leave at least half of the budget for the tree.
        let (found, used) = search.dive(&root_values, opts.node_limit.saturating_sub(nodes) / 2)?;
        nodes += used;
        found
    };
    if let Some(start) = start {
        let usable = start.len() == lp.num_vars()
            && lp.max_violation(start) <= FEAS_TOL
            && lp
                .variables()
                .iter()
                .zip(start)
                .all(|(v, &x)| !v.binary || x == 0.0 || x == 1.0);
        if usable {
            let objective = lp.evaluate(start);
            if incumbent.as_ref().is_none_or(|(_, best)| objective < *best) {
                incumbent = Some((start.to_vec(), objective));
            }
        }
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let mut push = |heap: &mut BinaryHeap<Node>, bound: f64, fixes: Vec<(usize, f64)>| {
        heap.push(Node {
            bound,
            id: next_id,
            fixes,
        });
        next_id += 1;
    };
    for v in [0.0, 1.0] {
        push(&mut heap, root_objective, vec![(first_branch, v)]);
    }

    // Smallest bound among nodes discarded against the incumbent.
    let mut pruned_bound = f64::INFINITY;
    while let Some(node) = heap.pop() {
        if let Some((_, best)) = &incumbent {
            if opts.prunes(node.bound, *best) {
                pruned_bound = pruned_bound.min(node.bound);
                break;
            }
        }
        if nodes >= opts.node_limit {
            let bound = node.bound;
            return Err(Error::ResourceExhausted {
                limit: opts.node_limit,
                incumbent: incumbent
                    .map(|(values, objective)| {
                        polish(&search, values, objective, nodes)
                            .map(|s| Box::new(Solution { bound, ..s }))
                    })
                    .transpose()?,
            });
        }
        nodes += 1;
        let NodeResult::Solved { values, objective } = search.evaluate(&node.fixes)? else {
            continue;
        };
        if let Some((_, best)) = &incumbent {
            if opts.prunes(objective, *best) {
                pruned_bound = pruned_bound.min(objective);
                continue;
            }
        }
        match search.most_fractional(&values) {
            None => incumbent = Some((values, objective)),
            Some(b) => {
                if let Some(rounded) = search.simple_rounding(&values) {
                    let obj = lp.evaluate(&rounded);
                    if incumbent.as_ref().is_none_or(|(_, best)| obj < *best) {
                        incumbent = Some((rounded, obj));
                    }
                    if opts.prunes(objective, obj) {
                        pruned_bound = pruned_bound.min(objective);
                        continue;
                    }
                }
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((b, v));
                    push(&mut heap, objective, fixes);
                }
            }
        }
    }

    match incumbent {
        Some((values, objective)) => {
            let sol = polish(&search, values, objective, nodes)?;
            Ok(Solution {
                bound: pruned_bound.min(sol.objective),
                ..sol
            })
        }
        None => Ok(Solution {
            nodes,
            ..Solution::without_point(Status::Infeasible)
        }),
    }
}

/// Re-solve with every binary pinned to its rounded value so that the
/// returned point is exactly integral.
fn polish(search: &Search<'_>, values: Vec<f64>, objective: f64, nodes: usize) -> Result<Solution> {
    let exact = search
        .binaries
        .iter()
        .all(|&b| values[b] == 0.0 || values[b] == 1.0);
    if exact {
        return Ok(Solution {
            status: Status::Optimal,
            values,
            objective,
            bound: objective,
            nodes,
        });
    }
    let fixes: Vec<(usize, f64)> = search
        .binaries
        .iter()
        .map(|&b| (b, values[b].round().clamp(0.0, 1.0)))
        .collect();
    let (values, objective) = match search.evaluate(&fixes)? {
        NodeResult::Solved {
            values: polished,
            objective: p,
        } if p <= objective + FEAS_TOL => (polished, p),
        _ => (values, objective),
    };
    Ok(Solution {
        status: Status::Optimal,
        values,
        objective,
        bound: objective,
        nodes,
    })
}
