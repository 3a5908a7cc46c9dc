use std::collections::VecDeque;

use super::{Bound, ConstraintSet, Culprit, Solution};
use crate::time::Millis;

/// Least `tmin` and greatest `tmax` by label-correcting propagation from the
/// fixed variables. Any other feasible point has smaller total width, so this
/// one is optimal whenever it is feasible.
pub fn solve_propagation(cs: &ConstraintSet) -> Solution {
    let fixed = match cs.fixed_values() {
        Ok(f) => f,
        Err((a, b)) => return Solution::infeasible(vec![fixed_culprit(cs, a), fixed_culprit(cs, b)]),
    };
    let lower = match Family::solve(cs, &fixed, Bound::Tmin) {
        Ok(f) => f,
        Err(c) => return Solution::infeasible(c),
    };
    let upper = match Family::solve(cs, &fixed, Bound::Tmax) {
        Ok(f) => f,
        Err(c) => return Solution::infeasible(c),
    };
    let n = cs.variables.len();
    let mut tmin = vec![0; n];
    let mut tmax = vec![0; n];
    for v in 0..n {
        let (Some(lo), Some(hi)) = (lower.value[v], upper.value[v]) else {
            let bound = if lower.value[v].is_none() { Bound::Tmin } else { Bound::Tmax };
            return Solution::infeasible(vec![Culprit::Unbounded {
                event_id: cs.variables[v].event_id.clone(),
                bound,
            }]);
        };
        if lo > hi {
            let mut culprits = lower.chain(cs, &fixed, v);
            culprits.push(Culprit::Interval {
                event_id: cs.variables[v].event_id.clone(),
            });
            culprits.extend(upper.chain(cs, &fixed, v));
            return Solution::infeasible(culprits);
        }
        tmin[v] = lo;
        tmax[v] = hi;
    }
    Solution::from_values(cs, &tmin, &tmax)
}

fn fixed_culprit(cs: &ConstraintSet, k: usize) -> Culprit {
    Culprit::Fixed {
        event_id: cs.fixes[k].event_id.clone(),
        value: cs.fixes[k].value,
    }
}

fn fixed_var_culprit(cs: &ConstraintSet, fixed: &[Option<Millis>], v: usize) -> Culprit {
    let k = cs.fixes.iter().position(|f| f.var == v).expect("fixed variable has a fix");
    Culprit::Fixed {
        event_id: cs.fixes[k].event_id.clone(),
        value: fixed[v].expect("fixed"),
    }
}

fn constraint_culprit(cs: &ConstraintSet, c: usize) -> Culprit {
    let c = &cs.constraints[c];
    Culprit::Constraint {
        bound: c.bound,
        from: cs.variables[c.lhs].event_id.clone(),
        to: cs.variables[c.rhs].event_id.clone(),
        offset: c.offset,
        origin: c.origin,
    }
}

/// One family solved on its own. For `tmin` a constraint `x[l] <= x[r] + o`
/// pushes `x[r]` up to `x[l] - o`; for `tmax` it pulls `x[l]` down to `x[r] + o`.
struct Family {
    bound: Bound,
    value: Vec<Option<Millis>>,
    /// Constraint that last moved each variable.
    pred: Vec<Option<usize>>,
}

impl Family {
    fn solve(cs: &ConstraintSet, fixed: &[Option<Millis>], bound: Bound) -> Result<Family, Vec<Culprit>> {
        let n = cs.variables.len();
        // Outgoing constraints in propagation direction.
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, c) in cs.constraints.iter().enumerate().filter(|(_, c)| c.bound == bound) {
            match bound {
                Bound::Tmin => out[c.lhs].push(k),
                Bound::Tmax => out[c.rhs].push(k),
            }
        }
        let mut fam = Family {
            bound,
            value: fixed.to_vec(),
            pred: vec![None; n],
        };
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| fixed[v].is_some()).collect();
        let mut queued: Vec<bool> = fixed.iter().map(Option::is_some).collect();
        let mut moves = vec![0usize; n];
        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            let Some(x) = fam.value[v] else { continue };
            for &k in &out[v] {
                let c = &cs.constraints[k];
                let (target, candidate) = match bound {
                    Bound::Tmin => (c.rhs, x - c.offset),
                    Bound::Tmax => (c.lhs, x + c.offset),
                };
                let better = match (fam.value[target], bound) {
                    (None, _) => true,
                    (Some(old), Bound::Tmin) => candidate > old,
                    (Some(old), Bound::Tmax) => candidate < old,
                };
                if !better {
                    continue;
                }
                fam.value[target] = Some(candidate);
                fam.pred[target] = Some(k);
                if fixed[target].is_some() {
                    // A fixed variable may not move: the chain into it is the proof.
                    let mut culprits = fam.chain(cs, fixed, target);
                    let pinned = fixed_var_culprit(cs, fixed, target);
                    match bound {
                        Bound::Tmin => culprits.push(pinned),
                        Bound::Tmax => culprits.insert(0, pinned),
                    }
                    return Err(culprits);
                }
                moves[target] += 1;
                if moves[target] > n {
                    return Err(fam.cycle(cs, target));
                }
                if !queued[target] {
                    queued[target] = true;
                    queue.push_back(target);
                }
            }
        }
        Ok(fam)
    }

    /// The constraint chain that produced the value of `v`, in propagation
    /// order, starting with the fix it was propagated from.
    fn chain(&self, cs: &ConstraintSet, fixed: &[Option<Millis>], v: usize) -> Vec<Culprit> {
        let mut links = Vec::new();
        let mut cur = v;
        let mut seen = vec![false; cs.variables.len()];
        while let Some(k) = self.pred[cur] {
            if seen[cur] {
                break;
            }
            seen[cur] = true;
            links.push(k);
            let c = &cs.constraints[k];
            cur = match self.bound {
                Bound::Tmin => c.lhs,
                Bound::Tmax => c.rhs,
            };
        }
        links.reverse();
        let mut out = Vec::new();
        if fixed[cur].is_some() {
            out.push(fixed_var_culprit(cs, fixed, cur));
        }
        out.extend(links.into_iter().map(|k| constraint_culprit(cs, k)));
        if self.bound == Bound::Tmax {
            // Upper bounds flow backwards; list them in time order.
            out.reverse();
        }
        out
    }

    fn cycle(&self, cs: &ConstraintSet, start: usize) -> Vec<Culprit> {
        // Walk back n steps to land inside the cycle, then collect it.
        let step = |v: usize| {
            self.pred[v].map(|k| {
                let c = &cs.constraints[k];
                match self.bound {
                    Bound::Tmin => c.lhs,
                    Bound::Tmax => c.rhs,
                }
            })
        };
        let mut v = start;
        for _ in 0..cs.variables.len() {
            match step(v) {
                Some(u) => v = u,
                None => return self.chain(cs, &vec![None; cs.variables.len()], start),
            }
        }
        let mut ks = Vec::new();
        let mut u = v;
        while let Some(k) = self.pred[u] {
            ks.push(k);
            u = step(u).expect("has predecessor");
            if u == v || ks.len() > cs.variables.len() {
                break;
            }
        }
        ks.reverse();
        ks.into_iter().map(|k| constraint_culprit(cs, k)).collect()
    }
}
