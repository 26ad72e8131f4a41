//! Outcome functions mapping a completed trace to its prediction target.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{AttributeSchema, Trace, MILLIS_PER_HOUR};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "activity", rename_all = "snake_case")]
pub enum OutcomeSpec {
    /// Case duration in hours, first to last event. Regression.
    TotalTime,
    /// Whether the activity occurs anywhere in the case. Binary.
    ActivityOccurrence(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Regression,
    Classification,
}

impl OutcomeSpec {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            OutcomeSpec::TotalTime => OutcomeKind::Regression,
            OutcomeSpec::ActivityOccurrence(_) => OutcomeKind::Classification,
        }
    }

    /// Checks the outcome definition against a log's schema.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        match self {
            OutcomeSpec::TotalTime => Ok(()),
            OutcomeSpec::ActivityOccurrence(a) if schema.activities.contains(a) => Ok(()),
            OutcomeSpec::ActivityOccurrence(a) => Err(Error::Config(format!(
                "outcome activity {a:?} never occurs in the log; known activities: {:?}",
                schema.activities
            ))),
        }
    }
}

impl fmt::Display for OutcomeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeSpec::TotalTime => f.write_str("total_time"),
            OutcomeSpec::ActivityOccurrence(a) => write!(f, "occurs:{a}"),
        }
    }
}

impl FromStr for OutcomeSpec {
    type Err = Error;

    /// Accepts `total_time` or `occurs:<activity>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "total_time" {
            return Ok(OutcomeSpec::TotalTime);
        }
        match s.strip_prefix("occurs:") {
            Some(a) if !a.is_empty() => Ok(OutcomeSpec::ActivityOccurrence(a.to_owned())),
            _ => Err(Error::Config(format!(
                "unknown outcome {s:?}; expected \"total_time\" or \"occurs:<activity>\""
            ))),
        }
    }
}

pub fn eval_outcome(spec: &OutcomeSpec, trace: &Trace) -> Result<f64> {
    match spec {
        OutcomeSpec::TotalTime => {
            let (Some(first), Some(last)) = (trace.first_timestamp(), trace.last_timestamp())
            else {
                return Err(Error::Data(format!(
                    "case {}: total time needs timestamps on the first and last events",
                    trace.case_id
                )));
            };
            Ok(((last - first) as f64 / MILLIS_PER_HOUR).max(0.0))
        }
        OutcomeSpec::ActivityOccurrence(activity) => Ok(
            if trace.events.iter().any(|e| &e.activity == activity) {
                1.0
            } else {
                0.0
            },
        ),
    }
}

/// Target for any prefix row: the outcome of the completed trace, whatever
/// the prefix length.
pub fn outcome_for_prefix_row(spec: &OutcomeSpec, full_trace: &Trace) -> Result<f64> {
    eval_outcome(spec, full_trace)
}
