use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use super::{EntityType, Event, LogError, MultiEntityLog};
use crate::time::{format_timestamp, parse_timestamp};

/// Maps the semantic columns onto header names of a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub event_id: String,
    pub pid: String,
    pub activity: String,
    pub time: String,
    pub rid: String,
    pub qid: String,
    pub tmin: String,
    pub tmax: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            event_id: "event_id".into(),
            pid: "pid".into(),
            activity: "activity".into(),
            time: "time".into(),
            rid: "rid".into(),
            qid: "qid".into(),
            tmin: "tmin".into(),
            tmax: "tmax".into(),
        }
    }
}

impl ColumnMapping {
    /// Parses `role=column` pairs separated by commas, e.g. `pid=case,activity=act`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let mut mapping = ColumnMapping::default();
        for pair in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (role, column) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected role=column, got {pair:?}"))?;
            let slot = match role.trim() {
                "event_id" => &mut mapping.event_id,
                "pid" => &mut mapping.pid,
                "activity" | "act" => &mut mapping.activity,
                "time" => &mut mapping.time,
                "rid" => &mut mapping.rid,
                "qid" => &mut mapping.qid,
                "tmin" => &mut mapping.tmin,
                "tmax" => &mut mapping.tmax,
                other => return Err(format!("unknown column role {other:?}")),
            };
            *slot = column.trim().to_string();
        }
        Ok(mapping)
    }

    fn entity_column(&self, et: EntityType) -> &str {
        match et {
            EntityType::Pid => &self.pid,
            EntityType::Rid => &self.rid,
            EntityType::Qid => &self.qid,
        }
    }
}

fn cell(value: &str) -> Option<&str> {
    let v = value.trim();
    if v.is_empty() || v == "⊥" {
        None
    } else {
        Some(v)
    }
}

/// Reads a CSV event log. Empty cells and `⊥` are undefined attributes.
pub fn parse_log<R: Read>(source: R, mapping: &ColumnMapping) -> Result<MultiEntityLog, LogError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| LogError::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let id_col = col(&mapping.event_id).ok_or_else(|| LogError::MissingColumn(mapping.event_id.clone()))?;
    let act_col = col(&mapping.activity).ok_or_else(|| LogError::MissingColumn(mapping.activity.clone()))?;
    let time_col = col(&mapping.time);
    let tmin_col = col(&mapping.tmin);
    let tmax_col = col(&mapping.tmax);
    let entity_cols: Vec<(EntityType, usize)> = EntityType::ALL
        .into_iter()
        .filter_map(|et| col(mapping.entity_column(et)).map(|c| (et, c)))
        .collect();
    let known: BTreeSet<usize> = [Some(id_col), Some(act_col), time_col, tmin_col, tmax_col]
        .into_iter()
        .flatten()
        .chain(entity_cols.iter().map(|&(_, c)| c))
        .collect();

    let mut events = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| LogError::Csv {
            row,
            message: e.to_string(),
        })?;
        let get = |c: usize| record.get(c).and_then(cell);
        let timestamp = |c: Option<usize>, column: &str| -> Result<Option<i64>, LogError> {
            match c.and_then(get) {
                None => Ok(None),
                Some(raw) => parse_timestamp(raw).map(Some).ok_or_else(|| LogError::Timestamp {
                    row,
                    column: column.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let event_id = get(id_col).ok_or_else(|| LogError::Csv {
            row,
            message: "missing event id".into(),
        })?;
        let act = get(act_col).ok_or(LogError::MissingActivity { row })?;
        let mut event = Event::new(event_id, act);
        event.time = timestamp(time_col, &mapping.time)?;
        event.tmin = timestamp(tmin_col, &mapping.tmin)?;
        event.tmax = timestamp(tmax_col, &mapping.tmax)?;
        for &(et, c) in &entity_cols {
            event.set_entity(et, get(c).map(str::to_string));
        }
        event.extra = header
            .iter()
            .enumerate()
            .filter(|(c, _)| !known.contains(c))
            .filter_map(|(c, name)| get(c).map(|v| (name.trim().to_string(), v.to_string())))
            .collect::<BTreeMap<_, _>>();
        events.push(event);
    }
    MultiEntityLog::new(events, entity_cols.into_iter().map(|(et, _)| et))
}

pub fn parse_log_str(source: &str) -> Result<MultiEntityLog, LogError> {
    parse_log(source.as_bytes(), &ColumnMapping::default())
}

/// Writes the canonical header `event_id,pid,activity,time,rid,qid[,tmin,tmax][,extra...]`.
pub fn write_log<W: Write>(log: &MultiEntityLog, sink: W) -> csv::Result<()> {
    let with_bounds = log.events().iter().any(|e| e.tmin.is_some() || e.tmax.is_some());
    let extras: BTreeSet<&str> = log
        .events()
        .iter()
        .flat_map(|e| e.extra.keys().map(String::as_str))
        .collect();
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["event_id", "pid", "activity", "time", "rid", "qid"];
    if with_bounds {
        header.extend(["tmin", "tmax"]);
    }
    header.extend(extras.iter().copied());
    writer.write_record(&header)?;
    let ts = |t: Option<i64>| t.map(format_timestamp).unwrap_or_default();
    for e in log.events() {
        let mut row = vec![
            e.event_id.clone(),
            e.pid.clone().unwrap_or_default(),
            e.act.clone(),
            ts(e.time),
            e.rid.clone().unwrap_or_default(),
            e.qid.clone().unwrap_or_default(),
        ];
        if with_bounds {
            row.push(ts(e.tmin));
            row.push(ts(e.tmax));
        }
        row.extend(extras.iter().map(|k| e.extra.get(*k).cloned().unwrap_or_default()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_log_string(log: &MultiEntityLog) -> String {
    let mut buf = Vec::new();
    write_log(log, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}
