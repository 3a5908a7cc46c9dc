use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Scenario, SimError};
use crate::event_log::{EntityType, Event, MultiEntityLog};
use crate::pqr_model::{PqrSystem, Role};
use crate::time::Millis;

/// A simulated log plus how often an event had to be pushed back by 1 ms
/// because another event of the same entity already used that millisecond.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: MultiEntityLog,
    pub tie_shifts: usize,
}

/// Runs the scenario and returns the complete log.
pub fn simulate(sys: &PqrSystem, scenario: &Scenario, seed: u64) -> Result<MultiEntityLog, SimError> {
    Ok(simulate_detailed(sys, scenario, seed)?.log)
}

struct Case {
    pid: String,
    route: Vec<usize>,
}

/// Cases waiting to be taken by one transition: a queue, or the arrivals
/// at a source transition.
struct Line {
    transition: usize,
    waiting: VecDeque<(usize, Millis)>,
    blocked: Vec<(Millis, Millis)>,
}

struct Service {
    case: usize,
    complete: usize,
    at: Millis,
}

struct Sim<'a> {
    sys: &'a PqrSystem,
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    cases: Vec<Case>,
    lines: Vec<Line>,
    /// Line index per queue.
    queue_line: Vec<usize>,
    /// Per resource: busy flag and the earliest next start.
    busy: Vec<bool>,
    free_at: Vec<Millis>,
    in_service: Vec<Service>,
    used: HashSet<(EntityType, String, Millis)>,
    events: Vec<Event>,
    origin: Millis,
    /// Time of the last fired action; nothing may happen before it.
    now: Millis,
    tie_shifts: usize,
}

enum Action {
    Arrive,
    Complete(usize),
    Take(usize),
}

/// Discrete-event simulation: at every step the earliest possible action
/// fires. Completions go before arrivals and dequeues at equal times, then
/// ties break on (pid, label).
pub fn simulate_detailed(sys: &PqrSystem, scenario: &Scenario, seed: u64) -> Result<SimOutput, SimError> {
    scenario.validate(sys)?;
    let origin = scenario.origin_ms()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Arrivals: explicit cases, then the streams.
    let mut arrivals: Vec<(Millis, usize, String, Vec<usize>)> = Vec::new();
    for c in &scenario.cases {
        let route = c.route.iter().filter_map(|t| sys.transition_index(t)).collect();
        arrivals.push((c.at_ms, Scenario::source(sys, &c.source)?, c.pid.clone(), route));
    }
    let mut stream_arrivals: Vec<(Millis, usize)> = Vec::new();
    for a in &scenario.arrivals {
        let source = Scenario::source(sys, &a.source)?;
        let mut t = a.offset_ms;
        let mut n = 0;
        while t < scenario.horizon_ms && a.count.is_none_or(|c| n < c) {
            stream_arrivals.push((t, source));
            n += 1;
            t += a.interval_ms + if a.jitter_ms > 0 { rng.random_range(0..=a.jitter_ms) } else { 0 };
        }
    }
    stream_arrivals.sort_by_key(|&(t, s)| (t, sys.transition(s).id.clone()));
    let taken: HashSet<String> = scenario.cases.iter().map(|c| c.pid.clone()).collect();
    let mut next_pid = 1usize;
    for (t, source) in stream_arrivals {
        while taken.contains(&next_pid.to_string()) {
            next_pid += 1;
        }
        arrivals.push((t, source, next_pid.to_string(), Vec::new()));
        next_pid += 1;
    }
    arrivals.sort_by(|a, b| (a.0, &a.2).cmp(&(b.0, &b.2)));

    let mut lines = Vec::new();
    let mut queue_line = vec![usize::MAX; sys.queues.len()];
    for (q, queue) in sys.queues.iter().enumerate() {
        let Some(t) = (0..sys.transition_count()).find(|&t| sys.link(t).queue_in == Some(q)) else {
            return Err(SimError::Scenario(format!("queue {:?} has no dequeuing transition", queue.qid)));
        };
        queue_line[q] = lines.len();
        lines.push(Line {
            transition: t,
            waiting: VecDeque::new(),
            blocked: scenario
                .blockages
                .iter()
                .filter(|b| b.queue == queue.qid)
                .map(|b| (b.start_ms, b.start_ms + b.duration_ms))
                .collect(),
        });
    }
    let mut source_line = vec![usize::MAX; sys.transition_count()];
    for t in (0..sys.transition_count()).filter(|&t| sys.is_source(t)) {
        source_line[t] = lines.len();
        lines.push(Line {
            transition: t,
            waiting: VecDeque::new(),
            blocked: Vec::new(),
        });
    }

    let mut sim = Sim {
        sys,
        scenario,
        rng,
        cases: Vec::new(),
        lines,
        queue_line,
        busy: vec![false; sys.resources.len()],
        free_at: vec![Millis::MIN; sys.resources.len()],
        in_service: Vec::new(),
        used: HashSet::new(),
        events: Vec::new(),
        origin,
        now: Millis::MIN,
        tie_shifts: 0,
    };
    let mut pending: VecDeque<(Millis, usize, String, Vec<usize>)> = arrivals.into();

    loop {
        let mut best: Option<((Millis, u8, String, String), Action)> = None;
        let mut offer = |key: (Millis, u8, String, String), action: Action| {
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, action));
            }
        };
        for (k, s) in sim.in_service.iter().enumerate() {
            let key = (s.at, 0, sim.cases[s.case].pid.clone(), sys.transition(s.complete).label.clone());
            offer(key, Action::Complete(k));
        }
        if let Some((t, source, pid, _)) = pending.front() {
            offer((*t, 1, pid.clone(), sys.transition(*source).label.clone()), Action::Arrive);
        }
        for l in 0..sim.lines.len() {
            if let Some(t) = sim.take_time(l) {
                let (case, _) = sim.lines[l].waiting[0];
                let label = sys.transition(sim.lines[l].transition).label.clone();
                offer((t, 2, sim.cases[case].pid.clone(), label), Action::Take(l));
            }
        }
        let Some(((time, ..), action)) = best else { break };
        match action {
            Action::Arrive => {
                let (t, source, pid, route) = pending.pop_front().expect("offered arrival");
                sim.cases.push(Case { pid, route });
                sim.lines[source_line[source]].waiting.push_back((sim.cases.len() - 1, t));
            }
            Action::Complete(k) => {
                let s = sim.in_service.swap_remove(k);
                sim.complete(s, time);
            }
            Action::Take(l) => sim.take(l, time),
        }
        sim.now = time;
    }
    let log = MultiEntityLog::new(sim.events, EntityType::ALL)?;
    Ok(SimOutput {
        log,
        tie_shifts: sim.tie_shifts,
    })
}

impl Sim<'_> {
    fn slack(&mut self, fraction: f64, minimum: Millis) -> Millis {
        let max = (fraction * minimum as f64).floor() as Millis;
        if max > 0 {
            self.rng.random_range(0..=max)
        } else {
            0
        }
    }

    fn entities(&self, case: usize, t: usize) -> Vec<(EntityType, String)> {
        let b = self.sys.binding(t);
        let mut out = vec![(EntityType::Pid, self.cases[case].pid.clone())];
        if let Some(r) = b.rid.clone() {
            out.push((EntityType::Rid, r));
        }
        if let Some(q) = b.event_qid() {
            out.push((EntityType::Qid, q.to_string()));
        }
        out
    }

    fn clashes(&self, entities: &[(EntityType, String)], time: Millis) -> bool {
        entities.iter().any(|(et, id)| self.used.contains(&(*et, id.clone(), time)))
    }

    /// Earliest time the head of line `l` can be taken, if it can be taken at all.
    fn take_time(&self, l: usize) -> Option<Millis> {
        let line = &self.lines[l];
        let &(case, ready) = line.waiting.front()?;
        // A case behind a slower one leaves the queue only after it.
        let mut t = ready.max(self.now);
        if let Some(r) = self.sys.link(line.transition).resource {
            if self.busy[r] {
                return None;
            }
            t = t.max(self.free_at[r]);
        }
        let entities = self.entities(case, line.transition);
        loop {
            if let Some(&(_, end)) = line.blocked.iter().find(|&&(s, e)| s <= t && t < e) {
                t = end;
                continue;
            }
            if self.clashes(&entities, t) {
                t += 1;
                continue;
            }
            return Some(t);
        }
    }

    fn emit(&mut self, case: usize, t: usize, time: Millis) {
        let entities = self.entities(case, t);
        for (et, id) in &entities {
            self.used.insert((*et, id.clone(), time));
        }
        let b = self.sys.binding(t);
        let mut e = Event::new(format!("e{}", self.events.len()), self.sys.transition(t).label.clone())
            .with_pid(self.cases[case].pid.clone())
            .with_time(self.origin + time);
        e.rid = b.rid.clone();
        e.qid = b.event_qid().map(str::to_string);
        self.events.push(e);
    }

    fn enqueue(&mut self, case: usize, t: usize, time: Millis) {
        if let Some(q) = self.sys.link(t).queue_out {
            let ready = time + self.sys.queues[q].twq + self.slack(self.scenario.slack.queue, self.sys.queues[q].twq);
            self.lines[self.queue_line[q]].waiting.push_back((case, ready));
        }
    }

    fn take(&mut self, l: usize, time: Millis) {
        let (case, ready) = self.lines[l].waiting.pop_front().expect("taken line is non-empty");
        let t = self.lines[l].transition;
        let unshifted = self.earliest_without_ties(l, ready);
        if time != unshifted {
            self.tie_shifts += 1;
        }
        self.emit(case, t, time);
        match self.sys.role(t) {
            Role::Start => {
                let r = self.sys.link(t).resource.expect("start transitions run on a resource");
                let complete = self.choose_complete(case, t);
                let tsr = self.sys.resources[r].tsr;
                let at = time + tsr + self.slack(self.scenario.slack.service, tsr);
                self.busy[r] = true;
                self.in_service.push(Service { case, complete, at });
            }
            Role::Atomic => self.enqueue(case, t, time),
            Role::Complete => unreachable!("complete transitions do not dequeue"),
        }
    }

    /// The take time ignoring same-millisecond clashes, to count shifts.
    fn earliest_without_ties(&self, l: usize, ready: Millis) -> Millis {
        let line = &self.lines[l];
        let mut t = ready.max(self.now);
        if let Some(r) = self.sys.link(line.transition).resource {
            t = t.max(self.free_at[r]);
        }
        while let Some(&(_, end)) = line.blocked.iter().find(|&&(s, e)| s <= t && t < e) {
            t = end;
        }
        t
    }

    fn complete(&mut self, s: Service, time: Millis) {
        let r = self.sys.link(s.complete).resource.expect("complete transitions run on a resource");
        if self.clashes(&self.entities(s.case, s.complete), time) {
            // Cannot move a completion without changing the service time.
            self.tie_shifts += 1;
        }
        self.emit(s.case, s.complete, time);
        let twr = self.sys.resources[r].twr;
        self.busy[r] = false;
        self.free_at[r] = time + twr + self.slack(self.scenario.slack.resource, twr);
        self.enqueue(s.case, s.complete, time);
    }

    fn choose_complete(&mut self, case: usize, start: usize) -> usize {
        let place = self.sys.process.post_places(start)[0];
        let options = self.sys.process.post_transitions(place).to_vec();
        if options.len() == 1 {
            return options[0];
        }
        if let Some(&t) = options.iter().find(|t| self.cases[case].route.contains(t)) {
            return t;
        }
        let place_id = &self.sys.process.places[place].id;
        let weights: Vec<f64> = match self.scenario.routing.get(place_id) {
            Some(w) => options
                .iter()
                .map(|&t| w.get(&self.sys.transition(t).id).copied().unwrap_or(0.0))
                .collect(),
            None => vec![1.0; options.len()],
        };
        let total: f64 = weights.iter().sum();
        let mut x = self.rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return options[i];
            }
            x -= w;
        }
        *options.iter().zip(&weights).rev().find(|(_, w)| **w > 0.0).map(|(t, _)| t).unwrap_or(&options[0])
    }
}
