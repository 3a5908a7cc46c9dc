use std::collections::{BTreeMap, HashMap};

use super::{ConstraintSet, LpError, Origin};
use crate::pqr_model::{PqrSystem, Role};
use crate::restore::IntermediateRun;
use crate::time::Millis;

/// Per case step variable facts used by the FIFO rule.
struct StepVar {
    var: usize,
    case: usize,
    transition: usize,
    label: String,
    tsr: Millis,
    twr: Millis,
}

/// Builds the constraint system of a restored run.
///
/// Within a case, consecutive steps are at least the earlier service time
/// plus the later queue time apart. Between cases, two anchored steps at
/// one server fix the order of the two cases on every step that both reach
/// over the same unique path; that step's server then separates them by its
/// service plus idle time.
pub fn generate_constraints(run: &IntermediateRun, sys: &PqrSystem) -> Result<ConstraintSet, LpError> {
    if !sys.is_acyclic() {
        return Err(LpError::Cyclic);
    }
    let mut cs = ConstraintSet::default();
    let mut steps: Vec<StepVar> = Vec::new();
    // Per case: start label -> variables carrying it.
    let mut by_label: Vec<BTreeMap<String, Vec<usize>>> = Vec::new();

    for (case, (pid, idx)) in run.cases().iter().enumerate() {
        let mut labels: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut theta: Vec<(usize, usize)> = Vec::new(); // (event index, var)
        let mut open: Option<(usize, usize)> = None;
        for &i in idx {
            let e = &run.events()[i];
            let a = run.annotation(i);
            let t = sys
                .transition_index(&a.transition)
                .ok_or_else(|| LpError::MissingAnnotation(e.event_id.clone()))?;
            match a.role {
                Role::Complete => {
                    let (_, var) = open.take().ok_or_else(|| crate::restore::RestoreError::Alternation {
                        pid: pid.clone(),
                        event_id: e.event_id.clone(),
                    })?;
                    let tsr = steps[var].tsr;
                    cs.derived.push(super::Derived {
                        event_id: e.event_id.clone(),
                        var,
                        offset: tsr,
                    });
                    if let (true, Some(time)) = (a.observed, e.time) {
                        cs.fix(var, e.event_id.clone(), time - tsr);
                    }
                }
                role => {
                    if open.is_some() {
                        return Err(crate::restore::RestoreError::Alternation {
                            pid: pid.clone(),
                            event_id: e.event_id.clone(),
                        }
                        .into());
                    }
                    let var = cs.var(e.event_id.clone(), pid.clone(), t);
                    steps.push(StepVar {
                        var,
                        case,
                        transition: t,
                        label: e.act.clone(),
                        tsr: a.tsr,
                        twr: a.twr,
                    });
                    if let (true, Some(time)) = (a.observed, e.time) {
                        cs.fix(var, e.event_id.clone(), time);
                    }
                    labels.entry(e.act.clone()).or_default().push(var);
                    theta.push((i, var));
                    if role == Role::Start {
                        open = Some((i, var));
                    }
                }
            }
        }
        if let Some((i, _)) = open {
            return Err(crate::restore::RestoreError::Alternation {
                pid: pid.clone(),
                event_id: run.events()[i].event_id.clone(),
            }
            .into());
        }
        for w in theta.windows(2) {
            let (a, b) = (w[0].1, w[1].1);
            let twq = run.annotation(w[1].0).twq;
            cs.both(a, b, -(steps[a].tsr + twq), Origin::Case);
        }
        for (end, pos) in [("start", idx.first()), ("end", idx.last())] {
            if let Some(&i) = pos {
                if !run.annotation(i).observed {
                    return Err(LpError::Unanchored {
                        pid: pid.clone(),
                        event_id: run.events()[i].event_id.clone(),
                        end,
                    });
                }
            }
        }
        by_label.push(labels);
    }

    fifo_constraints(&mut cs, sys, &steps, &by_label);
    Ok(cs)
}

/// Identifies the server a step runs on: its resource, or the transition
/// itself when no resource is linked.
fn server(sys: &PqrSystem, t: usize) -> (bool, usize) {
    match sys.link(t).resource {
        Some(r) => (true, r),
        None => (false, t),
    }
}

/// Order preservation between cases (the cross-case rule).
fn fifo_constraints(cs: &mut ConstraintSet, sys: &PqrSystem, steps: &[StepVar], by_label: &[BTreeMap<String, Vec<usize>>]) {
    let fixed = match cs.fixed_values() {
        Ok(f) => f,
        // Contradicting fixes are reported by the solver.
        Err(_) => return,
    };
    let fifo = sys.fifo_matrix();
    let mut paths: HashMap<(usize, usize), Option<Vec<usize>>> = HashMap::new();
    let mut path = |from: usize, to: usize| paths.entry((from, to)).or_insert_with(|| fifo.unique_path(from, to)).clone();

    // Anchored steps grouped by label, in time order.
    let mut groups: BTreeMap<&str, Vec<(Millis, usize)>> = BTreeMap::new();
    for s in steps {
        if let Some(value) = fixed[s.var] {
            groups.entry(s.label.as_str()).or_default().push((value, s.var));
        }
    }
    let targets: Vec<&str> = {
        let mut t: Vec<&str> = steps.iter().map(|s| s.label.as_str()).collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    let mut emitted = std::collections::HashSet::new();
    for (_, mut members) in groups {
        members.sort_by_key(|&(value, var)| (value, steps[var].case));
        for &target in &targets {
            // Members reaching `target` over a unique path, keyed by the shape
            // of that path; only members with identical keys keep their order.
            type Key = (bool, Vec<usize>, (bool, usize));
            let mut chains: BTreeMap<Key, Vec<(Millis, usize)>> = BTreeMap::new();
            for &(value, var) in &members {
                let s = &steps[var];
                let Some(ys) = by_label[s.case].get(target) else { continue };
                let [y] = ys[..] else { continue };
                let u = steps[y].transition;
                let (downstream, p) = if y == var {
                    (true, Some(vec![u]))
                } else if fifo.related(s.transition, u) {
                    (true, path(s.transition, u))
                } else if fifo.related(u, s.transition) {
                    (false, path(u, s.transition))
                } else {
                    continue;
                };
                let Some(p) = p else { continue };
                let key = (downstream, p[1..].to_vec(), server(sys, p[0]));
                chains.entry(key).or_default().push((value, y));
            }
            for chain in chains.values() {
                for w in chain.windows(2) {
                    let ((va, ya), (vb, yb)) = (w[0], w[1]);
                    if va == vb || ya == yb {
                        continue; // order unknown
                    }
                    let offset = -(steps[ya].tsr + steps[ya].twr);
                    if emitted.insert((ya, yb, offset)) {
                        cs.both(ya, yb, offset, Origin::Fifo);
                    }
                }
            }
        }
    }
}
