//! Accuracy (APA, F-score) and Equalized-Odds group statistics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoding::FeatureSchema;
use crate::error::{Error, Result};
use crate::outcomes::OutcomeKind;

pub const DEFAULT_MIN_SUPPORT: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Apa {
    /// Percentage in [0, 100].
    pub value: f64,
    pub rows: usize,
    /// Rows skipped because the actual value was zero.
    pub excluded_zero: usize,
}

/// 100% minus the mean absolute percentage error, floored at 0.
pub fn apa(actuals: &[f64], predictions: &[f64]) -> Result<Apa> {
    if actuals.len() != predictions.len() {
        return Err(Error::Contract(format!(
            "{} actuals but {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    let mut sum = 0.0;
    let mut rows = 0;
    for (&a, &p) in actuals.iter().zip(predictions) {
        if a != 0.0 {
            sum += (a - p).abs() / a.abs();
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::UndefinedMetric(
            "APA needs at least one row with a non-zero actual".into(),
        ));
    }
    Ok(Apa {
        value: (100.0 * (1.0 - sum / rows as f64)).max(0.0),
        rows,
        excluded_zero: actuals.len() - rows,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_rows(labels: &[f64], probabilities: &[f64], threshold: f64) -> Confusion {
        let mut c = Confusion::default();
        for (&y, &p) in labels.iter().zip(probabilities) {
            c.add(y, p, threshold);
        }
        c
    }

    pub fn add(&mut self, label: f64, probability: f64, threshold: f64) {
        match (label >= 0.5, probability >= threshold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn support(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_score(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        let precision = self.tp as f64 / (self.tp + self.fp) as f64;
        let recall = self.tp as f64 / (self.tp + self.fn_) as f64;
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// F1 of thresholded probabilities; 0 when there are no true positives.
pub fn f_score(labels: &[f64], probabilities: &[f64], threshold: f64) -> Result<f64> {
    if labels.len() != probabilities.len() {
        return Err(Error::Contract(format!(
            "{} labels but {} probabilities",
            labels.len(),
            probabilities.len()
        )));
    }
    Ok(Confusion::from_rows(labels, probabilities, threshold).f_score())
}

/// One evaluated prefix: its group key, actual outcome and prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedRow {
    pub group: String,
    pub actual: f64,
    pub predicted: f64,
}

/// Group key of an encoded instance: `attr=value` for every protected
/// attribute, joined with `;`.
pub fn group_key(schema: &FeatureSchema, x: &[f64]) -> String {
    schema
        .protected_attributes()
        .iter()
        .map(|a| {
            let value = schema.category_of(a, x).unwrap_or_else(|| "<numeric>".into());
            format!("{a}={value}")
        })
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: String,
    pub support: usize,
    pub confusion: Confusion,
    pub fpr: Option<f64>,
    pub tpr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    /// Groups with at least `min_support` rows, by key.
    pub groups: Vec<GroupRates>,
    /// Groups below `min_support`, with their row counts.
    pub excluded: Vec<(String, usize)>,
}

pub fn group_rates(
    rows: &[EvaluatedRow],
    kind: OutcomeKind,
    threshold: f64,
    min_support: usize,
) -> Result<GroupTable> {
    if kind == OutcomeKind::Regression {
        return Err(Error::NotApplicable(
            "FPR/TPR need a classification outcome".into(),
        ));
    }
    let mut counts: BTreeMap<&str, Confusion> = BTreeMap::new();
    for row in rows {
        counts
            .entry(&row.group)
            .or_default()
            .add(row.actual, row.predicted, threshold);
    }
    let mut table = GroupTable::default();
    for (group, c) in counts {
        if c.support() < min_support {
            table.excluded.push((group.to_owned(), c.support()));
        } else {
            table.groups.push(GroupRates {
                group: group.to_owned(),
                support: c.support(),
                confusion: c,
                fpr: c.fpr(),
                tpr: c.tpr(),
            });
        }
    }
    Ok(table)
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Population standard deviation of FPR and of TPR across groups. Groups
/// whose rate is undefined are left out of that rate's dispersion.
pub fn equalized_odds_std(groups: &[GroupRates]) -> Result<(f64, f64)> {
    let fprs: Vec<f64> = groups.iter().filter_map(|g| g.fpr).collect();
    let tprs: Vec<f64> = groups.iter().filter_map(|g| g.tpr).collect();
    if fprs.len() < 2 || tprs.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "equalized odds needs 2 groups with defined rates (FPR: {}, TPR: {})",
            fprs.len(),
            tprs.len()
        )));
    }
    Ok((population_std(&fprs), population_std(&tprs)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    Apa,
    FScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub metric: AccuracyMetric,
    pub accuracy: f64,
    pub rows: usize,
    pub excluded_zero_actuals: usize,
    pub threshold: Option<f64>,
    pub min_support: usize,
    pub groups: Vec<GroupRates>,
    pub excluded_groups: Vec<(String, usize)>,
    pub std_fpr: Option<f64>,
    pub std_tpr: Option<f64>,
    /// Why dispersion or group rates are missing, if they are.
    pub note: Option<String>,
}

/// APA for regression outcomes; F-score plus per-group rates and their
/// dispersion for classification outcomes.
pub fn evaluate(
    rows: &[EvaluatedRow],
    kind: OutcomeKind,
    threshold: f64,
    min_support: usize,
) -> Result<FairnessReport> {
    let actuals: Vec<f64> = rows.iter().map(|r| r.actual).collect();
    let predictions: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
    match kind {
        OutcomeKind::Regression => {
            let a = apa(&actuals, &predictions)?;
            Ok(FairnessReport {
                metric: AccuracyMetric::Apa,
                accuracy: a.value,
                rows: rows.len(),
                excluded_zero_actuals: a.excluded_zero,
                threshold: None,
                min_support,
                groups: Vec::new(),
                excluded_groups: Vec::new(),
                std_fpr: None,
                std_tpr: None,
                note: Some("FPR/TPR are not defined for a regression outcome".into()),
            })
        }
        OutcomeKind::Classification => {
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(Error::Config(format!("threshold {threshold} is outside (0, 1)")));
            }
            let table = group_rates(rows, kind, threshold, min_support)?;
            let (std_fpr, std_tpr, note) = match equalized_odds_std(&table.groups) {
                Ok((f, t)) => (Some(f), Some(t), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            Ok(FairnessReport {
                metric: AccuracyMetric::FScore,
                accuracy: f_score(&actuals, &predictions, threshold)?,
                rows: rows.len(),
                excluded_zero_actuals: 0,
                threshold: Some(threshold),
                min_support,
                groups: table.groups,
                excluded_groups: table.excluded,
                std_fpr,
                std_tpr,
                note,
            })
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |v| v.to_string())
}

impl FairnessReport {
    /// Per-group rows: group, support, FPR, TPR.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "support", "fpr", "tpr"])?;
        for g in &self.groups {
            w.write_record([g.group.clone(), g.support.to_string(), opt(g.fpr), opt(g.tpr)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let metric = match self.metric {
            AccuracyMetric::Apa => "apa",
            AccuracyMetric::FScore => "f_score",
        };
        let mut s = format!("{metric} = {}\nrows = {}\n", self.accuracy, self.rows);
        if self.excluded_zero_actuals > 0 {
            s.push_str(&format!("excluded_zero_actuals = {}\n", self.excluded_zero_actuals));
        }
        if self.metric == AccuracyMetric::FScore {
            s.push_str(&format!("std_fpr = {}\nstd_tpr = {}\n", opt(self.std_fpr), opt(self.std_tpr)));
            for (group, n) in &self.excluded_groups {
                s.push_str(&format!("excluded_group = {group:?} ({n} rows < {})\n", self.min_support));
            }
        }
        if let Some(note) = &self.note {
            s.push_str(&format!("note = {note:?}\n"));
        }
        s
    }
}
