use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::SimError;
use crate::event_log::{EntityType, Event, MultiEntityLog};
use crate::time::{format_timestamp, Millis, MINUTE};

/// Keeps the sensor events plus each case's first and last event, with pid
/// as the only identifier and no other attributes.
pub fn partialize(log: &MultiEntityLog, sensors: &BTreeSet<String>, keep_boundaries: bool) -> Result<MultiEntityLog, SimError> {
    let cases = case_order(log)?;
    let mut keep = vec![false; log.len()];
    for idx in cases.values() {
        for (k, &i) in idx.iter().enumerate() {
            let boundary = keep_boundaries && (k == 0 || k + 1 == idx.len());
            keep[i] = boundary || sensors.contains(&log.events()[i].act);
        }
    }
    for (pid, idx) in &cases {
        if !idx.iter().any(|&i| keep[i]) {
            return Err(SimError::EmptyCase(pid.clone()));
        }
    }
    let events = log
        .events()
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(e, _)| {
            let mut p = Event::new(e.event_id.clone(), e.act.clone());
            p.pid = e.pid.clone();
            p.time = e.time;
            p
        })
        .collect();
    Ok(MultiEntityLog::new(events, [EntityType::Pid])?)
}

/// Event indices per case, in time order (file order for equal or missing times).
fn case_order(log: &MultiEntityLog) -> Result<BTreeMap<String, Vec<usize>>, SimError> {
    let mut cases: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in log.events().iter().enumerate() {
        let pid = e.pid.clone().ok_or_else(|| SimError::Uncorrelated(e.event_id.clone()))?;
        cases.entry(pid).or_default().push(i);
    }
    for idx in cases.values_mut() {
        idx.sort_by_key(|&i| (log.events()[i].point_time(), i));
    }
    Ok(cases)
}

/// Error of one restored event against its true time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventError {
    pub event_id: String,
    pub pid: String,
    pub act: String,
    pub truth: Millis,
    pub tmin: Millis,
    pub tmax: Millis,
    /// `max(|tmax - t|, |tmin - t|)` over the case's total minimum service and queue time.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadSeries {
    pub from: String,
    pub to: String,
    pub window_ms: Millis,
    /// Start of the first window (epoch ms).
    pub start_ms: Millis,
    /// Items per minute per window.
    pub values: Vec<f64>,
}

impl LoadSeries {
    /// Index of the first window with the highest load.
    pub fn peak(&self) -> Option<usize> {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.values.iter().position(|&v| v == max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_start,items_per_minute\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", format_timestamp(self.start_ms + k as Millis * self.window_ms), v));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadComparison {
    pub truth: LoadSeries,
    pub repaired: LoadSeries,
    pub max_load: f64,
    /// Mean and root-mean-square absolute difference, in percent of `max_load`.
    pub mae_pct: f64,
    pub rmse_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub events: Vec<EventError>,
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
    pub max_error: f64,
    /// Fraction of restored events whose true time lies in `[tmin, tmax]`.
    pub containment: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub load: Vec<LoadComparison>,
}

fn number(e: &Event, key: &str) -> Result<Millis, SimError> {
    e.extra
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| SimError::MissingParameters(e.event_id.clone()))
}

/// Compares a repaired log (with `tmin`/`tmax` and the step parameters
/// written by the repair) against the true complete log. Events align by
/// (pid, activity, occurrence).
pub fn evaluate(repaired: &MultiEntityLog, truth: &MultiEntityLog) -> Result<Metrics, SimError> {
    let truth_cases = case_order(truth)?;
    let mut true_time: HashMap<(&str, &str, usize), Millis> = HashMap::new();
    for (pid, idx) in &truth_cases {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for &i in idx {
            let e = &truth.events()[i];
            let k = seen.entry(e.act.as_str()).or_default();
            let t = e.time.ok_or_else(|| SimError::Unmatched(e.event_id.clone()))?;
            true_time.insert((pid.as_str(), e.act.as_str(), *k), t);
            *k += 1;
        }
    }
    // Repaired events of a case in file order, which is path order.
    let mut rep_cases: BTreeMap<&str, Vec<&Event>> = BTreeMap::new();
    for e in repaired.events() {
        let pid = e.pid.as_deref().ok_or_else(|| SimError::Uncorrelated(e.event_id.clone()))?;
        rep_cases.entry(pid).or_default().push(e);
    }
    let mut events = Vec::new();
    let mut matched = 0usize;
    for (pid, evs) in &rep_cases {
        let mut norm = 0;
        for e in evs {
            if e.extra.get("role").map(String::as_str) != Some("complete") {
                norm += number(e, "tsr")? + number(e, "twq")?;
            }
        }
        let norm = norm.max(1) as f64;
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for e in evs {
            let k = seen.entry(e.act.as_str()).or_default();
            let t = *true_time
                .get(&(*pid, e.act.as_str(), *k))
                .ok_or_else(|| SimError::Unmatched(e.event_id.clone()))?;
            *k += 1;
            matched += 1;
            let observed = match e.extra.get("observed") {
                Some(v) => v == "true",
                None => e.time.is_some() && e.tmin.is_none(),
            };
            if observed {
                continue;
            }
            let (lo, hi) = match (e.tmin, e.tmax, e.time) {
                (Some(lo), Some(hi), _) => (lo, hi),
                (_, _, Some(x)) => (x, x),
                _ => return Err(SimError::MissingParameters(e.event_id.clone())),
            };
            events.push(EventError {
                event_id: e.event_id.clone(),
                pid: pid.to_string(),
                act: e.act.clone(),
                truth: t,
                tmin: lo,
                tmax: hi,
                error: (hi - t).abs().max((lo - t).abs()) as f64 / norm,
            });
        }
    }
    if matched != truth.len() {
        let extra = truth.len().saturating_sub(matched);
        return Err(SimError::Unmatched(format!("{extra} true events have no repaired counterpart")));
    }
    let n = events.len();
    let (mae, rmse, max_error, containment) = if n == 0 {
        (0.0, 0.0, 0.0, 1.0)
    } else {
        let sum: f64 = events.iter().map(|e| e.error).sum();
        let sq: f64 = events.iter().map(|e| e.error * e.error).sum();
        let max = events.iter().map(|e| e.error).fold(0.0, f64::max);
        let inside = events.iter().filter(|e| e.tmin <= e.truth && e.truth <= e.tmax).count();
        (sum / n as f64, (sq / n as f64).sqrt(), max, inside as f64 / n as f64)
    };
    Ok(Metrics {
        events,
        count: n,
        mae,
        rmse,
        max_error,
        containment,
        load: Vec::new(),
    })
}

/// One traversal of a segment by a case.
#[derive(Debug, Clone, PartialEq)]
struct Occurrence<'a> {
    pid: &'a str,
    start: &'a Event,
    end: &'a Event,
}

fn occurrences<'a>(log: &'a MultiEntityLog, from: &str, to: &str) -> Result<Vec<Occurrence<'a>>, SimError> {
    if !log.is_empty() {
        for label in [from, to] {
            if !log.events().iter().any(|e| e.act == label) {
                return Err(SimError::UnknownLabel(label.to_string()));
            }
        }
    }
    let mut out = Vec::new();
    for idx in case_order(log)?.into_values() {
        let mut open: Option<&Event> = None;
        for &i in &idx {
            let e = &log.events()[i];
            if let Some(s) = open {
                if e.act == to {
                    out.push(Occurrence { pid: s.pid.as_deref().expect("pid"), start: s, end: e });
                    open = None;
                    continue;
                }
            }
            if e.act == from {
                open = Some(e);
            }
        }
    }
    out.retain(|o| o.start.point_time().is_some() && o.end.point_time().is_some());
    out.sort_by_key(|o| (o.start.point_time(), o.pid));
    Ok(out)
}

fn span(occ: &[Occurrence]) -> Option<(Millis, Millis)> {
    let lo = occ.iter().filter_map(|o| o.start.point_time()).min()?;
    let hi = occ.iter().filter_map(|o| o.end.point_time()).max()?;
    Some((lo, hi))
}

fn series_on(occ: &[Occurrence], from: &str, to: &str, window: Millis, start: Millis, n: usize) -> LoadSeries {
    let mut counts = vec![0usize; n];
    for o in occ {
        let (s, e) = (o.start.point_time().expect("timed"), o.end.point_time().expect("timed"));
        let first = (s - start).div_euclid(window).max(0) as usize;
        let last = ((e - start).div_euclid(window).max(0) as usize).min(n.saturating_sub(1));
        for c in counts.iter_mut().take(last + 1).skip(first) {
            *c += 1;
        }
    }
    let scale = MINUTE as f64 / window as f64;
    LoadSeries {
        from: from.to_string(),
        to: to.to_string(),
        window_ms: window,
        start_ms: start,
        values: counts.into_iter().map(|c| c as f64 * scale).collect(),
    }
}

fn grid(lo: Millis, hi: Millis, window: Millis) -> (Millis, usize) {
    let start = lo.div_euclid(window) * window;
    (start, ((hi - start).div_euclid(window) + 1) as usize)
}

/// Items per minute on the segment `from -> to` per tumbling window: a case
/// counts in every window its traversal overlaps. Interval events use the
/// midpoint of `[tmin, tmax]`.
pub fn load_series(log: &MultiEntityLog, from: &str, to: &str, window: Millis) -> Result<LoadSeries, SimError> {
    if window <= 0 {
        return Err(SimError::Scenario("window must be positive".into()));
    }
    let occ = occurrences(log, from, to)?;
    Ok(match span(&occ) {
        Some((lo, hi)) => {
            let (start, n) = grid(lo, hi, window);
            series_on(&occ, from, to, window, start, n)
        }
        None => series_on(&occ, from, to, window, 0, 0),
    })
}

/// Load of both logs on a common grid; errors relative to the true peak load.
pub fn compare_load(
    repaired: &MultiEntityLog,
    truth: &MultiEntityLog,
    from: &str,
    to: &str,
    window: Millis,
) -> Result<LoadComparison, SimError> {
    if window <= 0 {
        return Err(SimError::Scenario("window must be positive".into()));
    }
    let (a, b) = (occurrences(repaired, from, to)?, occurrences(truth, from, to)?);
    let (start, n) = match (span(&a), span(&b)) {
        (Some((l1, h1)), Some((l2, h2))) => grid(l1.min(l2), h1.max(h2), window),
        (Some((l, h)), None) | (None, Some((l, h))) => grid(l, h, window),
        (None, None) => (0, 0),
    };
    let repaired = series_on(&a, from, to, window, start, n);
    let truth = series_on(&b, from, to, window, start, n);
    let max_load = truth.values.iter().copied().fold(0.0, f64::max);
    let diffs: Vec<f64> = truth.values.iter().zip(&repaired.values).map(|(x, y)| (x - y).abs()).collect();
    let (mae, rmse) = if diffs.is_empty() || max_load == 0.0 {
        (0.0, 0.0)
    } else {
        let k = diffs.len() as f64;
        (
            diffs.iter().sum::<f64>() / k / max_load * 100.0,
            (diffs.iter().map(|d| d * d).sum::<f64>() / k).sqrt() / max_load * 100.0,
        )
    };
    Ok(LoadComparison {
        truth,
        repaired,
        max_load,
        mae_pct: mae,
        rmse_pct: rmse,
    })
}

/// Segment occurrences as CSV rows for performance-spectrum plots. Interval
/// columns appear when the log carries `tmin`/`tmax`.
pub fn spectrum_export(log: &MultiEntityLog, segments: &[(String, String)]) -> Result<String, SimError> {
    let intervals = log.events().iter().any(|e| e.tmin.is_some() || e.tmax.is_some());
    let mut header = vec!["pid", "segment", "t_start", "t_end"];
    if intervals {
        header.extend(["tmin_start", "tmax_start", "tmin_end", "tmax_end"]);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| SimError::Scenario(e.to_string());
    w.write_record(&header).map_err(io)?;
    let mut rows: Vec<(Millis, String, Vec<String>)> = Vec::new();
    for (from, to) in segments {
        for o in occurrences(log, from, to)? {
            let (s, e) = (o.start.point_time().expect("timed"), o.end.point_time().expect("timed"));
            let mut row = vec![o.pid.to_string(), format!("{from}:{to}"), format_timestamp(s), format_timestamp(e)];
            if intervals {
                let b = |x: Option<Millis>, fallback: Millis| format_timestamp(x.unwrap_or(fallback));
                row.extend([b(o.start.tmin, s), b(o.start.tmax, s), b(o.end.tmin, e), b(o.end.tmax, e)]);
            }
            rows.push((s, o.pid.to_string(), row));
        }
    }
    rows.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    for (_, _, row) in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Scenario(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses `a:b` into a segment.
pub fn parse_segment(spec: &str) -> Result<(String, String), SimError> {
    match spec.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(SimError::Scenario(format!("segment {spec:?} is not of the form from:to"))),
    }
}
