//! Event logs as multisets of traces.
//!
//! An [`EventLog`] owns its traces together with the [`AttributeSchema`]
//! observed while building it. Logs are immutable once constructed; every
//! constructor validates the structural invariants (non-empty activity
//! labels, finite numerics, unique case ids, non-decreasing timestamps and
//! schema conformance).

mod table;
mod time;
mod xes;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::table::{parse_csv, parse_csv_with, read_csv, write_csv, ColumnMapping};
pub use self::time::{format_timestamp, parse_timestamp};
pub use self::xes::{parse_xes, parse_xes_str, parse_xes_with, write_xes};

/// Milliseconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const MILLIS_PER_HOUR: f64 = 3_600_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical,
    Boolean,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeKind::Numeric => "numeric",
            AttributeKind::Categorical => "categorical",
            AttributeKind::Boolean => "boolean",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AttributeValue {
    Numeric(f64),
    Categorical(String),
    Boolean(bool),
}

impl AttributeValue {
    pub fn kind(&self) -> AttributeKind {
        match self {
            AttributeValue::Numeric(_) => AttributeKind::Numeric,
            AttributeValue::Categorical(_) => AttributeKind::Categorical,
            AttributeValue::Boolean(_) => AttributeKind::Boolean,
        }
    }

    /// Category label used for one-hot encoding. Numerics have none.
    pub fn category(&self) -> Option<String> {
        match self {
            AttributeValue::Numeric(_) => None,
            AttributeValue::Categorical(s) => Some(s.clone()),
            AttributeValue::Boolean(b) => Some(b.to_string()),
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::Numeric(v) => write!(f, "{v}"),
            AttributeValue::Categorical(s) => f.write_str(s),
            AttributeValue::Boolean(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub activity: String,
    pub attributes: BTreeMap<String, AttributeValue>,
    pub timestamp: Option<Timestamp>,
}

impl Event {
    pub fn new(activity: impl Into<String>) -> Self {
        Event {
            activity: activity.into(),
            attributes: BTreeMap::new(),
            timestamp: None,
        }
    }

    pub fn at(mut self, timestamp: Timestamp) -> Self {
        self.timestamp = Some(timestamp);
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: AttributeValue) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(case_id: impl Into<String>, events: Vec<Event>) -> Self {
        Trace {
            case_id: case_id.into(),
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<Timestamp> {
        self.events.first().and_then(|e| e.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<Timestamp> {
        self.events.last().and_then(|e| e.timestamp)
    }

    /// The first `len` events as a trace of the same case.
    pub fn prefix(&self, len: usize) -> Trace {
        Trace {
            case_id: self.case_id.clone(),
            events: self.events[..len.min(self.events.len())].to_vec(),
        }
    }
}

/// All non-empty prefixes of `trace`, shortest first. The last one is the
/// trace itself.
pub fn prefixes(trace: &Trace) -> Vec<Trace> {
    (1..=trace.len()).map(|k| trace.prefix(k)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeInfo {
    pub kind: AttributeKind,
    /// Categories observed in the log that built the schema. Booleans use
    /// `"false"`/`"true"`; numerics leave this empty.
    pub categories: BTreeSet<String>,
    /// Categories seen only in a companion (test) log.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub unseen: BTreeSet<String>,
}

impl AttributeInfo {
    fn new(kind: AttributeKind) -> Self {
        AttributeInfo {
            kind,
            categories: BTreeSet::new(),
            unseen: BTreeSet::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub attributes: BTreeMap<String, AttributeInfo>,
    pub activities: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub unseen_activities: BTreeSet<String>,
}

impl AttributeSchema {
    /// Builds the schema from exactly the values observed in `traces`.
    pub fn observe<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Result<Self> {
        let mut schema = AttributeSchema::default();
        for trace in traces {
            for event in &trace.events {
                schema.activities.insert(event.activity.clone());
                for (name, value) in &event.attributes {
                    let info = schema
                        .attributes
                        .entry(name.clone())
                        .or_insert_with(|| AttributeInfo::new(value.kind()));
                    if info.kind != value.kind() {
                        return Err(Error::Schema(format!(
                            "attribute {name:?} is {} in one event and {} in another (case {})",
                            info.kind,
                            value.kind(),
                            trace.case_id
                        )));
                    }
                    if let Some(category) = value.category() {
                        info.categories.insert(category);
                    }
                }
            }
        }
        Ok(schema)
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeInfo> {
        self.attributes.get(name)
    }

    fn check_event(&self, case_id: &str, event: &Event) -> Result<()> {
        if !self.activities.contains(&event.activity)
            && !self.unseen_activities.contains(&event.activity)
        {
            return Err(Error::Schema(format!(
                "case {case_id}: activity {:?} is not in the schema",
                event.activity
            )));
        }
        for (name, value) in &event.attributes {
            let info = self.attributes.get(name).ok_or_else(|| {
                Error::Schema(format!(
                    "case {case_id}: attribute {name:?} is not in the schema"
                ))
            })?;
            if info.kind != value.kind() {
                return Err(Error::Schema(format!(
                    "case {case_id}: attribute {name:?} should be {}, found {}",
                    info.kind,
                    value.kind()
                )));
            }
            if let Some(category) = value.category() {
                if !info.categories.contains(&category) && !info.unseen.contains(&category) {
                    return Err(Error::Schema(format!(
                        "case {case_id}: attribute {name:?} has undeclared value {category:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_trace(trace: &Trace) -> Result<()> {
    if trace.events.is_empty() {
        return Err(Error::Data(format!("case {} has no events", trace.case_id)));
    }
    let mut last: Option<Timestamp> = None;
    for event in &trace.events {
        if event.activity.is_empty() {
            return Err(Error::Data(format!(
                "case {} has an event with an empty activity",
                trace.case_id
            )));
        }
        for (name, value) in &event.attributes {
            if let AttributeValue::Numeric(v) = value {
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "case {}: attribute {name:?} is not finite",
                        trace.case_id
                    )));
                }
            }
        }
        if let Some(ts) = event.timestamp {
            if matches!(last, Some(prev) if ts < prev) {
                return Err(Error::Data(format!(
                    "case {}: timestamps decrease along the trace",
                    trace.case_id
                )));
            }
            last = Some(ts);
        }
    }
    Ok(())
}

/// A multiset of traces. Identical event sequences may occur many times, each
/// under its own case id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    traces: Vec<Trace>,
    schema: AttributeSchema,
}

impl EventLog {
    /// Validates `traces` and builds the schema from the observed values.
    pub fn new(traces: Vec<Trace>) -> Result<Self> {
        let schema = AttributeSchema::observe(&traces)?;
        Self::with_schema(traces, schema)
    }

    /// Validates `traces` against an existing schema.
    pub fn with_schema(traces: Vec<Trace>, schema: AttributeSchema) -> Result<Self> {
        let mut seen = HashSet::with_capacity(traces.len());
        for trace in &traces {
            if !seen.insert(trace.case_id.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate case id {:?}",
                    trace.case_id
                )));
            }
            check_trace(trace)?;
            for event in &trace.events {
                schema.check_event(&trace.case_id, event)?;
            }
        }
        Ok(EventLog { traces, schema })
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }
}

/// Splits a log by case start time: the earliest `train_fraction` of the
/// traces train, the rest test. Ties on the first timestamp are broken by
/// case id.
///
/// Both halves share one schema: the training log's observed values, plus
/// the categories and activities seen only in the test log, which are kept
/// in the `unseen` sets so the encoder can route them to its unknown slot.
pub fn temporal_split(log: &EventLog, train_fraction: f64) -> Result<(EventLog, EventLog)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut keyed = Vec::with_capacity(log.len());
    for trace in log.traces() {
        let start = trace.first_timestamp().ok_or_else(|| {
            Error::Data(format!(
                "case {} has no timestamp on its first event; cannot split temporally",
                trace.case_id
            ))
        })?;
        keyed.push((start, trace));
    }
    keyed.sort_by(|(ta, a), (tb, b)| ta.cmp(tb).then_with(|| a.case_id.cmp(&b.case_id)));

    let n_train = train_count(log.len(), train_fraction);
    let train: Vec<Trace> = keyed[..n_train].iter().map(|(_, t)| (*t).clone()).collect();
    let test: Vec<Trace> = keyed[n_train..].iter().map(|(_, t)| (*t).clone()).collect();

    let mut schema = AttributeSchema::observe(&train)?;
    let test_schema = AttributeSchema::observe(&test)?;
    for (name, info) in test_schema.attributes {
        let entry = schema
            .attributes
            .entry(name.clone())
            .or_insert_with(|| AttributeInfo::new(info.kind));
        if entry.kind != info.kind {
            return Err(Error::Schema(format!(
                "attribute {name:?} is {} in the training part and {} in the test part",
                entry.kind, info.kind
            )));
        }
        let unseen: Vec<String> = info
            .categories
            .into_iter()
            .filter(|c| !entry.categories.contains(c))
            .collect();
        entry.unseen.extend(unseen);
    }
    let unseen_activities: Vec<String> = test_schema
        .activities
        .into_iter()
        .filter(|a| !schema.activities.contains(a))
        .collect();
    schema.unseen_activities.extend(unseen_activities);

    Ok((
        EventLog::with_schema(train, schema.clone())?,
        EventLog::with_schema(test, schema)?,
    ))
}

/// Number of training traces for a split. Rounds down, which reproduces the
/// 5,219/2,237 split of a 7,456-trace log at 0.7.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    // The epsilon keeps exact products such as 0.7 * 10 from rounding to 6.
    let raw = (train_fraction * n as f64 + 1e-9).floor() as usize;
    raw.min(n)
}
