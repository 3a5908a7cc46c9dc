use std::collections::{BTreeMap, HashMap};

use super::{solve_propagation, Bound, Constraint, ConstraintSet, LpError, Origin, Solution};
use crate::event_log::EntityType;
use crate::pqr_model::Role;
use crate::restore::IntermediateRun;
use crate::time::Millis;

/// `time(before) + gap <= time(after)` between two events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Order {
    before: usize,
    after: usize,
    gap: Millis,
}

/// Two events whose point times break replay, with the two ways to fix it;
/// the first keeps their current order.
#[derive(Debug, Clone)]
struct Conflict {
    a: usize,
    b: usize,
    entity: String,
    options: [Order; 2],
}

/// Point times for every event of `run` in `tmin` or `tmax` mode, indexed
/// like `run.events()`.
///
/// The bounds alone only order cases whose order was observed. Cases that
/// meet at a resource or queue without such evidence can overlap, overtake
/// each other or share a millisecond at the bound. Each such conflict is
/// settled by an ordering constraint, first in the current order and else
/// in the other, and the family is propagated again. Added constraints only
/// tighten, so every point stays inside its interval.
pub(super) fn points(
    run: &IntermediateRun,
    cs: &ConstraintSet,
    solution: &Solution,
    bound: Bound,
) -> Result<Vec<Millis>, LpError> {
    let anchor = anchors(run, cs)?;
    let lo = times(run, solution, Bound::Tmin)?;
    let hi = times(run, solution, Bound::Tmax)?;
    let mid: Vec<Millis> = lo.iter().zip(&hi).map(|(l, h)| l + (h - l) / 2).collect();
    match greedy(run, cs, solution, bound, &anchor, &mid) {
        Err(LpError::Unordered(..)) => search(run, cs, bound, &anchor, &mid),
        other => other,
    }
}

/// Settles every open conflict at once in its preferred order. Fast, but
/// gives up on the first conflict neither order of which is feasible.
fn greedy(
    run: &IntermediateRun,
    cs: &ConstraintSet,
    solution: &Solution,
    bound: Bound,
    anchor: &[(usize, Millis)],
    mid: &[Millis],
) -> Result<Vec<Millis>, LpError> {
    let mut work = cs.clone();
    let mut current = solution.clone();
    for _ in 0..=4 * run.events().len() {
        let times = times(run, &current, bound)?;
        let conflicts = conflicts(run, &times, mid);
        let Some(first) = conflicts.first() else {
            return Ok(times);
        };
        let mut next = work.clone();
        for c in &conflicts {
            add(&mut next, anchor, c.options[0], bound);
        }
        let mut sol = solve_propagation(&next);
        if !sol.feasible && conflicts.len() > 1 {
            next = work.clone();
            add(&mut next, anchor, first.options[0], bound);
            sol = solve_propagation(&next);
        }
        if !sol.feasible {
            return Err(unordered(run, first));
        }
        work = next;
        current = sol;
    }
    Err(LpError::Infeasible)
}

/// Budget of propagations for the backtracking search.
const SEARCH_BUDGET: usize = 20_000;

/// Depth-first search over the order of conflicting pairs, earliest
/// conflict first, undoing the latest decision when a conflict has no
/// feasible order left.
fn search(
    run: &IntermediateRun,
    cs: &ConstraintSet,
    bound: Bound,
    anchor: &[(usize, Millis)],
    mid: &[Millis],
) -> Result<Vec<Millis>, LpError> {
    let with = |decisions: &[(Conflict, usize)], extra: Option<Order>| {
        let mut next = cs.clone();
        for (c, k) in decisions {
            add(&mut next, anchor, c.options[*k], bound);
        }
        if let Some(o) = extra {
            add(&mut next, anchor, o, bound);
        }
        solve_propagation(&next)
    };
    let mut decisions: Vec<(Conflict, usize)> = Vec::new();
    let mut budget = SEARCH_BUDGET;
    let mut stuck: Option<Conflict> = None;
    loop {
        let sol = with(&decisions, None);
        budget = budget.saturating_sub(1);
        let times = times(run, &sol, bound)?;
        let Some(first) = conflicts(run, &times, mid).into_iter().next() else {
            return Ok(times);
        };
        let mut open = Some((first, 0));
        while let Some((c, from)) = open.take() {
            let chosen = (from..2).find(|&k| {
                budget = budget.saturating_sub(1);
                with(&decisions, Some(c.options[k])).feasible
            });
            if let Some(k) = chosen {
                decisions.push((c, k));
                break;
            }
            stuck.get_or_insert_with(|| c.clone());
            if budget == 0 {
                break;
            }
            open = decisions.pop().map(|(c, k)| (c, k + 1));
        }
        if budget == 0 || (open.is_none() && decisions.is_empty() && stuck.is_some()) {
            break;
        }
    }
    Err(stuck.map(|c| unordered(run, &c)).unwrap_or(LpError::Infeasible))
}

fn unordered(run: &IntermediateRun, c: &Conflict) -> LpError {
    let id = |i: usize| run.events()[i].event_id.clone();
    LpError::Unordered(id(c.a), id(c.b), c.entity.clone())
}

/// Each event's time as `x[var] + offset`.
fn anchors(run: &IntermediateRun, cs: &ConstraintSet) -> Result<Vec<(usize, Millis)>, LpError> {
    let mut var_of: HashMap<&str, (usize, Millis)> = HashMap::new();
    for (v, var) in cs.variables.iter().enumerate() {
        var_of.insert(&var.event_id, (v, 0));
    }
    for d in &cs.derived {
        var_of.insert(&d.event_id, (d.var, d.offset));
    }
    run.events()
        .iter()
        .map(|e| var_of.get(e.event_id.as_str()).copied().ok_or_else(|| LpError::MissingBounds(e.event_id.clone())))
        .collect()
}

fn add(cs: &mut ConstraintSet, anchor: &[(usize, Millis)], o: Order, bound: Bound) {
    let (vb, ob) = anchor[o.before];
    let (va, oa) = anchor[o.after];
    cs.constraints.push(Constraint {
        bound,
        lhs: vb,
        rhs: va,
        offset: oa - ob - o.gap,
        origin: Origin::Order,
    });
}

fn times(run: &IntermediateRun, sol: &Solution, bound: Bound) -> Result<Vec<Millis>, LpError> {
    run.events()
        .iter()
        .enumerate()
        .map(|(i, e)| match (run.annotation(i).observed, e.time) {
            (true, Some(t)) => Ok(t),
            _ => {
                let &(lo, hi) = sol.bounds.get(&e.event_id).ok_or_else(|| LpError::MissingBounds(e.event_id.clone()))?;
                Ok(if bound == Bound::Tmin { lo } else { hi })
            }
        })
        .collect()
}

/// The preferred order puts first the event whose interval midpoint is
/// earlier.
fn pair(a: usize, b: usize, entity: String, gaps: (Millis, Millis), mid: &[Millis]) -> Conflict {
    let mut c = Conflict {
        a,
        b,
        entity,
        options: [
            Order {
                before: a,
                after: b,
                gap: gaps.0,
            },
            Order {
                before: b,
                after: a,
                gap: gaps.1,
            },
        ],
    };
    if mid[b] < mid[a] {
        c.options.swap(0, 1);
    }
    c
}

/// At most one conflict per entity, earliest first.
fn conflicts(run: &IntermediateRun, times: &[Millis], mid: &[Millis]) -> Vec<Conflict> {
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..run.events().len()).collect();
    order.sort_by_key(|&i| (times[i], i));

    // Same millisecond within one entity.
    let mut last: HashMap<(EntityType, &str), usize> = HashMap::new();
    let mut tied: BTreeMap<(EntityType, &str), Conflict> = BTreeMap::new();
    for &i in &order {
        let e = &run.events()[i];
        for et in EntityType::ALL {
            if let Some(id) = e.entity(et) {
                if let Some(&j) = last.get(&(et, id)) {
                    if times[j] == times[i] && !tied.contains_key(&(et, id)) {
                        tied.insert((et, id), pair(j, i, format!("{}={id}", et.as_str()), (1, 1), mid));
                    }
                }
                last.insert((et, id), i);
            }
        }
    }
    out.extend(tied.into_values());

    // A resource serves one case at a time: start, complete, then a pause.
    let mut starts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        let a = run.annotation(i);
        if a.role == Role::Start {
            if let Some(rid) = a.rid.as_deref() {
                starts.entry(rid).or_default().push(i);
            }
        }
    }
    for (rid, s) in starts {
        let busy = |i: usize| run.annotation(i).tsr + run.annotation(i).twr;
        if let Some(w) = s.windows(2).find(|w| times[w[1]] < times[w[0]] + busy(w[0])) {
            out.push(pair(w[0], w[1], format!("rid={rid}"), (busy(w[0]), busy(w[1])), mid));
        }
    }

    // A queue releases cases in the order it received them.
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    let mut enqueue: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut dequeue_of: HashMap<usize, usize> = HashMap::new();
    let mut first_of: HashMap<(&str, &str), usize> = HashMap::new();
    for (pid, idx) in run.cases() {
        for &i in idx {
            if let Some(q) = run.events()[i].qid.as_deref() {
                let n = seen.entry((q, pid.as_str())).or_default();
                if *n == 0 {
                    first_of.insert((q, pid.as_str()), i);
                } else if *n == 1 {
                    dequeue_of.insert(first_of[&(q, pid.as_str())], i);
                }
                *n += 1;
            }
        }
    }
    for &i in &order {
        if let Some(q) = run.events()[i].qid.as_deref() {
            if dequeue_of.contains_key(&i) {
                enqueue.entry(q).or_default().push(i);
            }
        }
    }
    for (q, enq) in enqueue {
        let overtaken = enq.windows(2).find(|w| times[dequeue_of[&w[1]]] < times[dequeue_of[&w[0]]]);
        if let Some(w) = overtaken {
            let (da, db) = (dequeue_of[&w[0]], dequeue_of[&w[1]]);
            // Either a leaves first after all, or b joined first.
            let mut c = Conflict {
                a: da,
                b: db,
                entity: format!("qid={q}"),
                options: [
                    Order {
                        before: da,
                        after: db,
                        gap: 1,
                    },
                    Order {
                        before: w[1],
                        after: w[0],
                        gap: 1,
                    },
                ],
            };
            if mid[w[1]] < mid[w[0]] {
                c.options.swap(0, 1);
            }
            out.push(c);
        }
    }
    out.sort_by_key(|c| (times[c.a].min(times[c.b]), c.a, c.b));
    out
}
