//! Trace-to-instance encoding and supervised dataset construction.
//!
//! A prefix is encoded as a fixed-length real vector: one count per activity
//! of the training alphabet, followed by the latest value of every attribute.
//! Categorical and boolean attributes become one-hot groups with two extra
//! slots, `<unknown>` for categories the training log never produced and
//! `<unassigned>` for attributes no event of the prefix has set. Numeric
//! attributes are min-max scaled with training statistics and paired with an
//! `<unassigned>` indicator.
//!
//! An attribute set by the very first event counts as assigned: the latest
//! assignment may come from any event of the prefix, including the first.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eventlog::{AttributeKind, AttributeValue, Event, EventLog, Timestamp};
use crate::outcomes::{outcome_for_prefix_row, OutcomeSpec};

pub const UNKNOWN: &str = "<unknown>";
pub const UNASSIGNED: &str = "<unassigned>";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Category(String),
    Unknown,
    Unassigned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Feature {
    ActivityCount { activity: String },
    Numeric { attribute: String, min: f64, max: f64 },
    NumericUnassigned { attribute: String },
    OneHot { attribute: String, slot: Slot },
}

impl Feature {
    pub fn name(&self) -> String {
        match self {
            Feature::ActivityCount { activity } => format!("#{activity}"),
            Feature::Numeric { attribute, .. } => attribute.clone(),
            Feature::NumericUnassigned { attribute } => format!("{attribute}={UNASSIGNED}"),
            Feature::OneHot { attribute, slot } => match slot {
                Slot::Category(c) => format!("{attribute}={c}"),
                Slot::Unknown => format!("{attribute}={UNKNOWN}"),
                Slot::Unassigned => format!("{attribute}={UNASSIGNED}"),
            },
        }
    }
}

/// Contiguous block of features derived from one attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeGroup {
    pub attribute: String,
    pub kind: AttributeKind,
    pub start: usize,
    pub len: usize,
    /// Sorted categories (empty for numerics).
    pub categories: Vec<String>,
}

impl AttributeGroup {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// A Shapley player: a set of feature indices perturbed together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Player {
    pub name: String,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<Feature>,
    activities: Vec<String>,
    groups: Vec<AttributeGroup>,
    protected_attributes: Vec<String>,
    protected: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedInstance(pub Vec<f64>);

impl EncodedInstance {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn build_schema(train_log: &EventLog, protected_names: &[String]) -> Result<FeatureSchema> {
    let log_schema = train_log.schema();
    let activities: Vec<String> = log_schema.activities.iter().cloned().collect();
    let mut features: Vec<Feature> = activities
        .iter()
        .map(|a| Feature::ActivityCount {
            activity: a.clone(),
        })
        .collect();

    let mut ranges: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for trace in train_log.traces() {
        for event in &trace.events {
            for (name, value) in &event.attributes {
                if let AttributeValue::Numeric(v) = value {
                    let r = ranges.entry(name).or_insert((*v, *v));
                    r.0 = r.0.min(*v);
                    r.1 = r.1.max(*v);
                }
            }
        }
    }

    let mut groups = Vec::new();
    for (name, info) in &log_schema.attributes {
        let start = features.len();
        let categories: Vec<String> = info.categories.iter().cloned().collect();
        match info.kind {
            AttributeKind::Numeric => {
                let Some(&(min, max)) = ranges.get(name.as_str()) else {
                    // Only seen outside the training log: nothing to learn from.
                    continue;
                };
                features.push(Feature::Numeric {
                    attribute: name.clone(),
                    min,
                    max,
                });
                features.push(Feature::NumericUnassigned {
                    attribute: name.clone(),
                });
            }
            AttributeKind::Categorical | AttributeKind::Boolean => {
                features.extend(categories.iter().map(|c| Feature::OneHot {
                    attribute: name.clone(),
                    slot: Slot::Category(c.clone()),
                }));
                for slot in [Slot::Unknown, Slot::Unassigned] {
                    features.push(Feature::OneHot {
                        attribute: name.clone(),
                        slot,
                    });
                }
            }
        }
        groups.push(AttributeGroup {
            attribute: name.clone(),
            kind: info.kind,
            start,
            len: features.len() - start,
            categories,
        });
    }

    let mut protected_attributes: Vec<String> = protected_names
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    protected_attributes.retain(|p| !p.is_empty());
    let mut protected = Vec::new();
    for name in &protected_attributes {
        let group = groups
            .iter()
            .find(|g| &g.attribute == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "protected attribute {name:?} is not an attribute of the training log \
                     (whole attributes only); available: {:?}",
                    groups.iter().map(|g| g.attribute.as_str()).collect::<Vec<_>>()
                ))
            })?;
        protected.extend(group.indices());
    }
    protected.sort_unstable();

    Ok(FeatureSchema {
        features,
        activities,
        groups,
        protected_attributes,
        protected,
    })
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(Feature::name).collect()
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn groups(&self) -> &[AttributeGroup] {
        &self.groups
    }

    pub fn group(&self, attribute: &str) -> Option<&AttributeGroup> {
        self.groups
            .binary_search_by(|g| g.attribute.as_str().cmp(attribute))
            .ok()
            .map(|i| &self.groups[i])
    }

    pub fn protected_indices(&self) -> &[usize] {
        &self.protected
    }

    pub fn protected_attributes(&self) -> &[String] {
        &self.protected_attributes
    }

    /// Activity counts are individual players; each attribute group is one.
    pub fn players(&self) -> Vec<Player> {
        let mut players: Vec<Player> = self
            .activities
            .iter()
            .enumerate()
            .map(|(i, a)| Player {
                name: format!("#{a}"),
                indices: vec![i],
            })
            .collect();
        players.extend(self.groups.iter().map(|g| Player {
            name: g.attribute.clone(),
            indices: g.indices().collect(),
        }));
        players
    }

    /// Value of a categorical/boolean attribute in an encoded instance: the
    /// active slot's label.
    pub fn category_of(&self, attribute: &str, x: &[f64]) -> Option<String> {
        let group = self.group(attribute)?;
        if group.kind == AttributeKind::Numeric {
            return None;
        }
        let offset = group.indices().position(|i| x[i] > 0.5)?;
        Some(match group.categories.get(offset) {
            Some(c) => c.clone(),
            None if offset == group.categories.len() => UNKNOWN.to_owned(),
            None => UNASSIGNED.to_owned(),
        })
    }

    /// Stable content hash, used to tie model files to their encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn encode_events(&self, events: &[Event]) -> EncodedInstance {
        let mut values = vec![0.0; self.features.len()];
        let mut latest: BTreeMap<&str, &AttributeValue> = BTreeMap::new();
        for event in events {
            if let Ok(i) = self.activities.binary_search(&event.activity) {
                values[i] += 1.0;
            }
            for (name, value) in &event.attributes {
                latest.insert(name.as_str(), value);
            }
        }
        for group in &self.groups {
            let value = latest.get(group.attribute.as_str());
            match (group.kind, value) {
                (AttributeKind::Numeric, Some(AttributeValue::Numeric(v))) => {
                    if let Feature::Numeric { min, max, .. } = &self.features[group.start] {
                        values[group.start] = scale(*v, *min, *max);
                    }
                }
                (AttributeKind::Numeric, _) => values[group.start + 1] = 1.0,
                (_, Some(v)) => {
                    let slot = v
                        .category()
                        .and_then(|c| group.categories.binary_search(&c).ok())
                        .unwrap_or(group.categories.len());
                    values[group.start + slot] = 1.0;
                }
                (_, None) => values[group.start + group.categories.len() + 1] = 1.0,
            }
        }
        EncodedInstance(values)
    }
}

fn scale(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((v - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn encode_trace(schema: &FeatureSchema, prefix: &crate::eventlog::Trace) -> EncodedInstance {
    schema.encode_events(&prefix.events)
}

pub fn protected_projection(schema: &FeatureSchema, x: &EncodedInstance) -> Vec<f64> {
    gather(x.values(), schema.protected_indices())
}

pub(crate) fn gather(x: &[f64], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| x[i]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub case_id: String,
    pub prefix_len: usize,
    pub case_start: Option<Timestamp>,
}

/// Supervised rows: one per non-empty prefix of every trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub instances: Vec<EncodedInstance>,
    pub targets: Vec<f64>,
    pub protected: Vec<Vec<f64>>,
    pub provenance: Vec<Provenance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            instances: rows.iter().map(|&i| self.instances[i].clone()).collect(),
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            protected: rows.iter().map(|&i| self.protected[i].clone()).collect(),
            provenance: rows.iter().map(|&i| self.provenance[i].clone()).collect(),
        }
    }

    /// Writes the dataset with header `<features...>,target,<protected...>`.
    pub fn write_csv<W: Write>(&self, schema: &FeatureSchema, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let names = schema.feature_names();
        let mut header: Vec<String> = names.clone();
        header.push("target".into());
        header.extend(
            schema
                .protected_indices()
                .iter()
                .map(|&i| format!("protected:{}", names[i])),
        );
        writer.write_record(&header)?;
        for ((x, y), p) in self.instances.iter().zip(&self.targets).zip(&self.protected) {
            let mut record: Vec<String> = x.values().iter().map(|v| v.to_string()).collect();
            record.push(y.to_string());
            record.extend(p.iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn build_dataset(
    schema: &FeatureSchema,
    log: &EventLog,
    outcome: &OutcomeSpec,
) -> Result<Dataset> {
    let mut data = Dataset::default();
    for trace in log.traces() {
        let target = outcome_for_prefix_row(outcome, trace)?;
        for k in 1..=trace.len() {
            let x = schema.encode_events(&trace.events[..k]);
            data.protected.push(protected_projection(schema, &x));
            data.instances.push(x);
            data.targets.push(target);
            data.provenance.push(Provenance {
                case_id: trace.case_id.clone(),
                prefix_len: k,
                case_start: trace.first_timestamp(),
            });
        }
    }
    Ok(data)
}
