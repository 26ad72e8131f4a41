//! Tabular event logs: one row per event, grouped into traces by case id.
//!
//! The native layout written by [`write_csv`] is
//! `case_id,activity,timestamp,<attributes...>` with RFC 4180 quoting and
//! ISO-8601 timestamps. An empty cell means the event does not assign that
//! attribute.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::time::{format_timestamp, parse_timestamp};
use super::{AttributeKind, AttributeValue, Event, EventLog, Timestamp, Trace};
use crate::error::{Error, Result};
use crate::ParseOptions;

/// Which CSV columns hold the case id, activity and timestamp. Every other
/// column becomes an attribute whose kind is inferred unless listed in
/// `kinds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub case_id: String,
    pub activity: String,
    pub timestamp: Option<String>,
    pub kinds: BTreeMap<String, AttributeKind>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            case_id: "case_id".into(),
            activity: "activity".into(),
            timestamp: Some("timestamp".into()),
            kinds: BTreeMap::new(),
        }
    }
}

pub fn parse_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<EventLog> {
    parse_csv_with(path, mapping, &ParseOptions::default())
}

pub fn parse_csv_with(
    path: impl AsRef<Path>,
    mapping: &ColumnMapping,
    options: &ParseOptions,
) -> Result<EventLog> {
    read_csv(File::open(path)?, mapping, options)
}

struct Row {
    line: usize,
    case_id: String,
    activity: String,
    timestamp: Option<Timestamp>,
    cells: Vec<String>,
}

fn infer_kind(values: &[&str]) -> AttributeKind {
    if values
        .iter()
        .all(|v| v.trim().parse::<f64>().map(f64::is_finite).unwrap_or(false))
    {
        AttributeKind::Numeric
    } else if values.iter().all(|v| *v == "true" || *v == "false") {
        AttributeKind::Boolean
    } else {
        AttributeKind::Categorical
    }
}

pub fn read_csv<R: Read>(
    input: R,
    mapping: &ColumnMapping,
    options: &ParseOptions,
) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Config(format!(
                "mapped column {name:?} is missing; header has {headers:?}"
            ))
        })
    };
    let case_col = column(&mapping.case_id)?;
    let activity_col = column(&mapping.activity)?;
    let time_col = mapping.timestamp.as_deref().map(column).transpose()?;

    let attribute_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != case_col && i != activity_col && Some(i) != time_col)
        .filter(|&i| !options.is_dropped(&headers[i]))
        .collect();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("").to_owned();
        let timestamp = match time_col {
            Some(i) => {
                let raw = get(i);
                if raw.trim().is_empty() {
                    None
                } else {
                    Some(parse_timestamp(&raw).ok_or_else(|| {
                        Error::parse(line, format!("unparseable timestamp {raw:?}"))
                    })?)
                }
            }
            None => None,
        };
        rows.push(Row {
            line,
            case_id: get(case_col),
            activity: get(activity_col),
            timestamp,
            cells: attribute_cols.iter().map(|&i| get(i)).collect(),
        });
    }

    let mut kinds = Vec::with_capacity(attribute_cols.len());
    for (slot, &col) in attribute_cols.iter().enumerate() {
        let kind = match mapping.kinds.get(&headers[col]) {
            Some(kind) => *kind,
            None => {
                let values: Vec<&str> = rows
                    .iter()
                    .map(|r| r.cells[slot].as_str())
                    .filter(|v| !v.is_empty())
                    .collect();
                infer_kind(&values)
            }
        };
        kinds.push(kind);
    }

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<Event>> = HashMap::new();
    for row in rows {
        let mut event = Event::new(row.activity);
        event.timestamp = row.timestamp;
        for (slot, cell) in row.cells.into_iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            let name = &headers[attribute_cols[slot]];
            let value = match kinds[slot] {
                AttributeKind::Numeric => match cell.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => AttributeValue::Numeric(v),
                    _ => {
                        return Err(Error::parse(
                            row.line,
                            format!("column {name:?}: {cell:?} is not a finite number"),
                        ))
                    }
                },
                AttributeKind::Boolean => match cell.as_str() {
                    "true" => AttributeValue::Boolean(true),
                    "false" => AttributeValue::Boolean(false),
                    _ => {
                        return Err(Error::parse(
                            row.line,
                            format!("column {name:?}: {cell:?} is not a boolean"),
                        ))
                    }
                },
                AttributeKind::Categorical => AttributeValue::Categorical(cell),
            };
            event.attributes.insert(name.clone(), value);
        }
        if !grouped.contains_key(&row.case_id) {
            order.push(row.case_id.clone());
        }
        grouped.entry(row.case_id).or_default().push(event);
    }

    let traces = order
        .into_iter()
        .map(|case_id| {
            let mut events = grouped.remove(&case_id).unwrap_or_default();
            // Stable: equal timestamps keep file order. Untimed events sort first.
            events.sort_by_key(|e| e.timestamp);
            Trace { case_id, events }
        })
        .collect();
    EventLog::new(traces)
}

/// Writes `log` in the native CSV layout. Attribute columns follow the
/// schema's (lexicographic) attribute order.
pub fn write_csv<W: Write>(log: &EventLog, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let names: Vec<&String> = log.schema().attributes.keys().collect();
    let mut header = vec!["case_id", "activity", "timestamp"];
    header.extend(names.iter().map(|s| s.as_str()));
    writer.write_record(&header)?;
    for trace in log.traces() {
        for event in &trace.events {
            let mut record = vec![
                trace.case_id.clone(),
                event.activity.clone(),
                event.timestamp.map(format_timestamp).unwrap_or_default(),
            ];
            record.extend(names.iter().map(|name| {
                event
                    .attributes
                    .get(*name)
                    .map(ToString::to_string)
                    .unwrap_or_default()
            }));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}
