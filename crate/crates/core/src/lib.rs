//! Fairness-aware predictive process monitoring.
//!
//! The crate covers the whole modelling path: event logs
//! ([`eventlog`]), prefix encoding ([`encoding`]), outcome functions
//! ([`outcomes`]), a small dense network with backpropagation
//! ([`neuralnet`]), adversarially debiased training ([`debias`]), Shapley
//! attribution ([`explain`]), group fairness metrics ([`fairness`]) and a
//! seeded generator of biased synthetic logs ([`synthlog`]).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub mod debias;
pub mod encoding;
pub mod error;
pub mod eventlog;
pub mod explain;
pub mod fairness;
pub mod neuralnet;
pub mod outcomes;
pub mod synthlog;

pub use crate::debias::{AdversarialModel, LossValue, TrainingConfig};
pub use crate::encoding::{Dataset, EncodedInstance, FeatureSchema};
pub use crate::error::{Error, Result};
pub use crate::eventlog::{AttributeValue, Event, EventLog, Trace};
pub use crate::explain::ShapleyReport;
pub use crate::fairness::FairnessReport;
pub use crate::outcomes::OutcomeSpec;

/// Attributes removed while ingesting a log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub dropped_attributes: BTreeSet<String>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            dropped_attributes: ["activity", "time", "@@index"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl ParseOptions {
    pub fn is_dropped(&self, name: &str) -> bool {
        self.dropped_attributes.contains(name)
    }
}
