//! CSV export of one topic of a bag.
//!
//! Every payload flattens to named leaves:
//!
//! * joint states: `positions.<joint>`, `velocities.<joint>`, `efforts.<joint>`
//! * wrenches: `fx fy fz tx ty tz` (groups `wrench`, `force`, `torque`) and `frame`
//! * anything else: its JSON form, objects joined with `.`, arrays indexed
//!
//! A field selects the leaf of that name or every leaf below it. With a single
//! field the group prefix is dropped from column names, so `positions` yields
//! `time,q1,q2`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bus::{Envelope, Payload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvExportSpec {
    pub topic: String,
    pub fields: Vec<String>,
}

impl CsvExportSpec {
    pub fn new(topic: impl Into<String>, fields: &[&str]) -> Self {
        Self {
            topic: topic.into(),
            fields: fields.iter().map(|f| f.to_string()).collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExportError {
    #[error("no field selected")]
    NoFields,
    #[error("{type_name} on `{topic}` has no field `{field}`")]
    UnknownField {
        topic: String,
        type_name: &'static str,
        field: String,
    },
    #[error("record at {stamp_ns} ns on `{topic}` has fields {got:?}, the first record had {expected:?}")]
    FieldsChanged {
        topic: String,
        stamp_ns: u64,
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

fn flatten_json(prefix: &str, v: &Value, out: &mut Vec<(String, Cell)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten_json(&join(k), v, out)),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten_json(&join(&i.to_string()), v, out)),
        Value::Number(n) => out.push((prefix.to_string(), Cell::Num(n.as_f64().unwrap_or(f64::NAN)))),
        Value::Bool(b) => out.push((prefix.to_string(), Cell::Num(f64::from(u8::from(*b))))),
        Value::String(s) => out.push((prefix.to_string(), Cell::Text(s.clone()))),
        Value::Null => {}
    }
}

fn leaves(payload: &Payload) -> Vec<(String, Cell)> {
    match payload {
        Payload::JointState(js) => {
            let mut out = Vec::with_capacity(3 * js.names.len());
            for (group, vals) in [
                ("positions", &js.positions),
                ("velocities", &js.velocities),
                ("efforts", &js.efforts),
            ] {
                for (n, v) in js.names.iter().zip(vals) {
                    out.push((format!("{group}.{n}"), Cell::Num(*v)));
                }
            }
            out
        }
        Payload::Wrench(w) => {
            let (f, t) = (w.wrench.force, w.wrench.torque);
            let mut out = vec![("frame".to_string(), Cell::Text(w.frame.clone()))];
            for (k, v) in [
                ("fx", f.x),
                ("fy", f.y),
                ("fz", f.z),
                ("tx", t.x),
                ("ty", t.y),
                ("tz", t.z),
            ] {
                out.push((k.to_string(), Cell::Num(v)));
            }
            out
        }
        other => {
            let v = serde_json::to_value(other).expect("payloads serialize");
            let mut out = Vec::new();
            flatten_json("", &v["data"], &mut out);
            out
        }
    }
}

/// Leaf indices chosen by `field`, paired with the column name to print.
fn select(payload: &Payload, leaves: &[(String, Cell)], field: &str, single: bool) -> Vec<(String, usize)> {
    let field = match (payload, field) {
        (Payload::JointState(_), "position") => "positions",
        (Payload::JointState(_), "velocity") => "velocities",
        (Payload::JointState(_), "effort") => "efforts",
        _ => field,
    };
    if let Payload::Wrench(_) = payload {
        let group: &[&str] = match field {
            "wrench" => &["fx", "fy", "fz", "tx", "ty", "tz"],
            "force" => &["fx", "fy", "fz"],
            "torque" => &["tx", "ty", "tz"],
            _ => &[],
        };
        if !group.is_empty() {
            return group
                .iter()
                .map(|g| (g.to_string(), leaves.iter().position(|(p, _)| p == g).unwrap()))
                .collect();
        }
    }
    let below = format!("{field}.");
    leaves
        .iter()
        .enumerate()
        .filter_map(|(i, (p, _))| {
            if p == field {
                Some((p.clone(), i))
            } else {
                p.strip_prefix(&below)
                    .map(|rest| (if single { rest.to_string() } else { p.clone() }, i))
            }
        })
        .collect()
}

fn columns(
    payload: &Payload,
    leaves: &[(String, Cell)],
    topic: &str,
    fields: &[String],
) -> Result<Vec<(String, usize)>, ExportError> {
    let single = fields.len() == 1;
    let mut cols = Vec::new();
    for f in fields {
        let sel = select(payload, leaves, f, single);
        if sel.is_empty() {
            return Err(ExportError::UnknownField {
                topic: topic.to_string(),
                type_name: payload.type_name(),
                field: f.clone(),
            });
        }
        cols.extend(sel);
    }
    Ok(cols)
}

/// Seconds with nanosecond precision, without going through floating point.
pub fn format_time(stamp_ns: u64) -> String {
    format!("{}.{:09}", stamp_ns / 1_000_000_000, stamp_ns % 1_000_000_000)
}

/// Renders the records of `spec.topic` as CSV. An empty selection yields a
/// header of `time` alone.
pub fn export_csv(spec: &CsvExportSpec, records: &[Envelope]) -> Result<String, ExportError> {
    if spec.fields.is_empty() {
        return Err(ExportError::NoFields);
    }
    let csv_err = |e: csv::Error| ExportError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Option<Vec<String>> = None;
    for env in records.iter().filter(|e| e.topic == spec.topic) {
        let leaves = leaves(&env.payload);
        let cols = columns(&env.payload, &leaves, &spec.topic, &spec.fields)?;
        let names: Vec<String> = cols.iter().map(|(n, _)| n.clone()).collect();
        match &header {
            None => {
                w.write_record(std::iter::once("time").chain(names.iter().map(String::as_str)))
                    .map_err(csv_err)?;
                header = Some(names);
            }
            Some(h) if *h != names => {
                return Err(ExportError::FieldsChanged {
                    topic: spec.topic.clone(),
                    stamp_ns: env.stamp_ns,
                    expected: h.clone(),
                    got: names,
                });
            }
            Some(_) => {}
        }
        let row = std::iter::once(format_time(env.stamp_ns)).chain(cols.iter().map(|(_, i)| leaves[*i].1.render()));
        w.write_record(row).map_err(csv_err)?;
    }
    if header.is_none() {
        w.write_record(["time"]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| ExportError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 input is UTF-8"))
}

/// Number of records per topic; the export row count of a topic equals its entry here.
pub fn topic_counts(records: &[Envelope]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for e in records {
        *m.entry(e.topic.as_str()).or_default() += 1;
    }
    m
}
