//! Adversarial debiasing: a predictor network trained jointly with an
//! adversary that tries to recover the protected attributes from the
//! predictor's last hidden layer.
//!
//! Each mini-batch runs two alternating updates:
//!
//! 1. adversary step(s): the adversary descends its own reconstruction error
//!    `Δ(z, π(x))` with the predictor fixed;
//! 2. predictor step: the predictor descends
//!    `Δ(ŷ, y) − λ·Δ(z, π(x))` with the adversary frozen, i.e. it is
//!    rewarded for making the adversary's job harder.
//!
//! Both `Δ` terms are mean absolute differences normalized by training
//! maxima: the largest training outcome for regression targets and the
//! componentwise largest protected projection (floored at 1) for the
//! adversary.

use std::io::{Read, Write};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_trace, gather, Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::eventlog::Trace;
use crate::neuralnet::{Activation, DenseLayer, ForwardTrace, Gradients, Network};
use crate::outcomes::{OutcomeKind, OutcomeSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// λ, the weight of the adversary term in the predictor objective.
    pub adversary_weight: f64,
    pub adversary_steps_per_batch: usize,
    /// Learning rate of the adversary; defaults to `learning_rate`.
    pub adversary_learning_rate: Option<f64>,
    pub seed: u64,
    pub predictor_hidden: Vec<usize>,
    pub adversary_hidden: Vec<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 32,
            weight_decay: 0.0,
            adversary_weight: 1.0,
            adversary_steps_per_batch: 1,
            adversary_learning_rate: None,
            seed: 0,
            predictor_hidden: vec![32, 16],
            adversary_hidden: vec![16],
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if !positive(self.learning_rate) {
            return fail("learning_rate must be positive");
        }
        if let Some(lr) = self.adversary_learning_rate {
            if !positive(lr) {
                return fail("adversary_learning_rate must be positive");
            }
        }
        if self.epochs == 0 {
            return fail("epochs must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !non_negative(self.weight_decay) {
            return fail("weight_decay must be non-negative");
        }
        if !non_negative(self.adversary_weight) {
            return fail("adversary_weight (lambda) must be non-negative");
        }
        if self.adversary_steps_per_batch == 0 {
            return fail("adversary_steps_per_batch must be positive");
        }
        if self.predictor_hidden.is_empty() || self.predictor_hidden.contains(&0) {
            return fail("predictor_hidden needs at least one non-zero layer width");
        }
        if self.adversary_hidden.contains(&0) {
            return fail("adversary_hidden widths must be non-zero");
        }
        Ok(())
    }

    fn adversary_lr(&self) -> f64 {
        self.adversary_learning_rate.unwrap_or(self.learning_rate)
    }
}

/// The three parts of the joint objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub prediction_term: f64,
    pub adversary_term: f64,
}

impl LossValue {
    pub fn new(prediction_term: f64, adversary_term: f64, lambda: f64) -> Self {
        LossValue {
            total: prediction_term - lambda * adversary_term,
            prediction_term,
            adversary_term,
        }
    }
}

/// Normalized prediction error. Regression divides by the largest training
/// outcome; classification compares probabilities directly.
pub fn delta_scalar(y_hat: f64, y: f64, max_outcome: f64, kind: OutcomeKind) -> Result<f64> {
    match kind {
        OutcomeKind::Regression if max_outcome.is_nan() || max_outcome <= 0.0 => Err(Error::Config(format!(
            "largest training outcome must be positive, got {max_outcome}"
        ))),
        OutcomeKind::Regression => Ok((y_hat - y).abs() / max_outcome),
        OutcomeKind::Classification => Ok((y_hat - y).abs()),
    }
}

/// Mean over components of `|z_i − p_i| / max(protected_max_i, 1)`.
/// Empty vectors give 0.
pub fn delta_vector(z: &[f64], p: &[f64], protected_max: &[f64]) -> Result<f64> {
    if z.len() != p.len() || p.len() != protected_max.len() {
        return Err(Error::Contract(format!(
            "delta_vector needs equal lengths, got {}, {} and {}",
            z.len(),
            p.len(),
            protected_max.len()
        )));
    }
    Ok(delta_vector_unchecked(z, p, protected_max))
}

fn delta_vector_unchecked(z: &[f64], p: &[f64], protected_max: &[f64]) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let sum: f64 = z
        .iter()
        .zip(p)
        .zip(protected_max)
        .map(|((z, p), m)| (z - p).abs() / m.max(1.0))
        .sum();
    sum / z.len() as f64
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialModel {
    pub predictor: Network,
    pub adversary: Network,
    pub schema: FeatureSchema,
    pub outcome: OutcomeSpec,
    /// Largest training outcome (1 for classification).
    pub max_outcome: f64,
    /// Componentwise largest training protected projection.
    pub protected_max: Vec<f64>,
    pub config: TrainingConfig,
}

impl AdversarialModel {
    /// Freshly initialised networks and normalization constants for `data`,
    /// i.e. the model `train` starts from.
    pub fn untrained(
        data: &Dataset,
        schema: &FeatureSchema,
        outcome: &OutcomeSpec,
        config: &TrainingConfig,
    ) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::Data("training dataset is empty".into()));
        }
        let kind = outcome.kind();
        let max_outcome = match kind {
            OutcomeKind::Regression => {
                let m = data.targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if m.is_nan() || m <= 0.0 {
                    return Err(Error::Config(format!(
                        "largest training outcome must be positive, got {m}"
                    )));
                }
                m
            }
            OutcomeKind::Classification => 1.0,
        };
        let width = schema.protected_indices().len();
        let mut protected_max = vec![0.0f64; width];
        for p in &data.protected {
            for (m, v) in protected_max.iter_mut().zip(p) {
                *m = m.max(*v);
            }
        }

        let output_activation = match kind {
            OutcomeKind::Regression => Activation::Identity,
            OutcomeKind::Classification => Activation::Sigmoid,
        };
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let predictor = Network::random(
            schema.len(),
            &config.predictor_hidden,
            Activation::Relu,
            1,
            output_activation,
            &mut init_rng,
        );
        // Separate stream so the predictor does not depend on whether an
        // adversary exists.
        let mut adv_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xA5A5_5A5A_DEAD_BEEF);
        let adversary = Network::random(
            predictor.last_hidden_dim(),
            &config.adversary_hidden,
            Activation::Relu,
            width,
            Activation::Sigmoid,
            &mut adv_rng,
        );
        Ok(AdversarialModel {
            predictor,
            adversary,
            schema: schema.clone(),
            outcome: outcome.clone(),
            max_outcome,
            protected_max,
            config: config.clone(),
        })
    }

    pub fn kind(&self) -> OutcomeKind {
        self.outcome.kind()
    }

    /// Index of the predictor layer whose activation the adversary reads.
    fn hidden_layer(&self) -> usize {
        self.predictor.layers().len() - 2
    }

    fn normalize_target(&self, y: f64) -> f64 {
        match self.kind() {
            OutcomeKind::Regression => y / self.max_outcome,
            OutcomeKind::Classification => y,
        }
    }

    /// Prediction for an encoded instance: hours for regression, a
    /// probability for classification.
    pub fn predict_instance(&self, x: &[f64]) -> f64 {
        let raw = self.predictor.output(x)[0];
        self.denormalize(raw)
    }

    pub fn denormalize(&self, raw: f64) -> f64 {
        match self.kind() {
            OutcomeKind::Regression => raw * self.max_outcome,
            OutcomeKind::Classification => raw,
        }
    }

    /// Adversary's reconstruction of the protected projection for `x`.
    pub fn adversary_output(&self, x: &[f64]) -> Vec<f64> {
        let (_, trace) = self.predictor.forward(x);
        self.adversary.output(trace.last_hidden())
    }

    pub fn joint_loss(&self, x: &[f64], y: f64, lambda: f64) -> LossValue {
        let (out, trace) = self.predictor.forward(x);
        let prediction_term = (out[0] - self.normalize_target(y)).abs();
        let z = self.adversary.output(trace.last_hidden());
        let p = gather(x, self.schema.protected_indices());
        let adversary_term = delta_vector_unchecked(&z, &p, &self.protected_max);
        LossValue::new(prediction_term, adversary_term, lambda)
    }

    /// Mean loss components over a dataset.
    pub fn evaluate_loss(&self, data: &Dataset, lambda: f64) -> LossValue {
        if data.is_empty() {
            return LossValue::default();
        }
        let (mut pred, mut adv) = (0.0, 0.0);
        for (x, y) in data.instances.iter().zip(&data.targets) {
            let l = self.joint_loss(x.values(), *y, lambda);
            pred += l.prediction_term;
            adv += l.adversary_term;
        }
        let n = data.len() as f64;
        LossValue::new(pred / n, adv / n, lambda)
    }

    /// Gradients of the predictor objective `Δ(ŷ,y) − λ·Δ(z,π(x))` for one
    /// row, scaled by `scale`, accumulated into `grads`. Returns the row's
    /// loss components.
    pub fn predictor_gradients(
        &self,
        x: &[f64],
        y: f64,
        lambda: f64,
        scale: f64,
        grads: &mut Gradients,
    ) -> LossValue {
        let (out, trace) = self.predictor.forward(x);
        self.predictor_gradients_from(&trace, out[0], x, y, lambda, scale, grads)
    }

    #[allow(clippy::too_many_arguments)]
    fn predictor_gradients_from(
        &self,
        trace: &ForwardTrace,
        y_hat: f64,
        x: &[f64],
        y: f64,
        lambda: f64,
        scale: f64,
        grads: &mut Gradients,
    ) -> LossValue {
        let target = self.normalize_target(y);
        let d_out = [sign(y_hat - target) * scale];
        let prediction_term = (y_hat - target).abs();
        let width = self.protected_max.len();
        if width == 0 {
            self.predictor.backward_into(trace, &d_out, None, grads);
            return LossValue::new(prediction_term, 0.0, lambda);
        }
        let hidden = trace.last_hidden();
        let (z, adv_trace) = self.adversary.forward(hidden);
        let p = gather(x, self.schema.protected_indices());
        let adversary_term = delta_vector_unchecked(&z, &p, &self.protected_max);
        if lambda == 0.0 {
            self.predictor.backward_into(trace, &d_out, None, grads);
        } else {
            let dz: Vec<f64> = z
                .iter()
                .zip(&p)
                .zip(&self.protected_max)
                .map(|((z, p), m)| -lambda * scale * sign(z - p) / (m.max(1.0) * width as f64))
                .collect();
            let (_, d_hidden) = self.adversary.backward(&adv_trace, &dz);
            self.predictor.backward_into(
                trace,
                &d_out,
                Some((self.hidden_layer(), &d_hidden)),
                grads,
            );
        }
        LossValue::new(prediction_term, adversary_term, lambda)
    }

    /// Gradients of the adversary's own error `Δ(z, π(x))` on the hidden
    /// representation `hidden`, accumulated into `grads`.
    pub fn adversary_gradients(
        &self,
        hidden: &[f64],
        p: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) -> f64 {
        let width = p.len() as f64;
        let (z, trace) = self.adversary.forward(hidden);
        let dz: Vec<f64> = z
            .iter()
            .zip(p)
            .zip(&self.protected_max)
            .map(|((z, p), m)| scale * sign(z - p) / (m.max(1.0) * width))
            .collect();
        self.adversary.backward_into(&trace, &dz, None, grads);
        delta_vector_unchecked(&z, p, &self.protected_max)
    }
}

/// Targets are normalized to [0, 1], so a batch loss beyond this only
/// happens once the parameters have blown up.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// Trains predictor and adversary with the alternating schedule described
/// in the module docs. Deterministic for a given seed.
pub fn train(
    data: &Dataset,
    schema: &FeatureSchema,
    outcome: &OutcomeSpec,
    config: &TrainingConfig,
) -> Result<AdversarialModel> {
    let mut model = AdversarialModel::untrained(data, schema, outcome, config)?;
    let width = model.protected_max.len();
    if width == 0 {
        warn!("no protected attributes: training a plain predictor");
    }
    let lambda = config.adversary_weight;
    let adversary_lr = config.adversary_lr();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5EED));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut pred_grads = Gradients::zeros_like(&model.predictor);
    let mut adv_grads = Gradients::zeros_like(&model.adversary);
    let mut traces: Vec<(Vec<f64>, ForwardTrace)> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = (0.0, 0.0);
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let diverged = |message: String| Error::Training {
                epoch,
                batch: batch_index,
                message,
            };
            let scale = 1.0 / batch.len() as f64;
            traces.clear();
            traces.extend(batch.iter().map(|&i| model.predictor.forward(data.instances[i].values())));

            if width > 0 {
                for _ in 0..config.adversary_steps_per_batch {
                    adv_grads.clear();
                    let mut adv_loss = 0.0;
                    for (&i, (_, trace)) in batch.iter().zip(&traces) {
                        adv_loss += model.adversary_gradients(
                            trace.last_hidden(),
                            &data.protected[i],
                            scale,
                            &mut adv_grads,
                        );
                    }
                    if !adv_loss.is_finite() {
                        return Err(diverged("adversary loss is not finite".into()));
                    }
                    model
                        .adversary
                        .sgd_step(&adv_grads, adversary_lr, config.weight_decay)
                        .map_err(|e| diverged(format!("adversary: {e}")))?;
                }
            }

            pred_grads.clear();
            let (mut pred_sum, mut adv_sum) = (0.0, 0.0);
            for (&i, (out, trace)) in batch.iter().zip(&traces) {
                let l = model.predictor_gradients_from(
                    trace,
                    out[0],
                    data.instances[i].values(),
                    data.targets[i],
                    lambda,
                    scale,
                    &mut pred_grads,
                );
                pred_sum += l.prediction_term;
                adv_sum += l.adversary_term;
            }
            let total = (pred_sum - lambda * adv_sum) * scale;
            if !total.is_finite() || pred_sum * scale > DIVERGENCE_LIMIT {
                return Err(diverged(format!("loss is {total}")));
            }
            model
                .predictor
                .sgd_step(&pred_grads, config.learning_rate, config.weight_decay)
                .map_err(|e| diverged(format!("predictor: {e}")))?;
            if model.predictor.parameters().any(|v| !v.is_finite()) {
                return Err(diverged("predictor parameters overflowed".into()));
            }
            epoch_loss.0 += pred_sum;
            epoch_loss.1 += adv_sum;
        }
        let n = data.len() as f64;
        log::debug!(
            "epoch {epoch}: prediction {:.5} adversary {:.5}",
            epoch_loss.0 / n,
            epoch_loss.1 / n
        );
    }
    Ok(model)
}

/// Prediction for a running case: hours for total time, a probability for
/// activity occurrence.
pub fn predict(model: &AdversarialModel, prefix: &Trace) -> Result<f64> {
    if prefix.is_empty() {
        return Err(Error::Data(format!("case {}: empty prefix", prefix.case_id)));
    }
    let x = encode_trace(&model.schema, prefix);
    Ok(model.predict_instance(x.values()))
}

/// Hyper-parameter grids. An empty list means "use the base config value".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
    pub weight_decay: Vec<f64>,
    pub predictor_hidden: Vec<Vec<usize>>,
}

impl GridSpec {
    pub fn combinations(&self, base: &TrainingConfig) -> Vec<TrainingConfig> {
        fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let lrs = or_base(&self.learning_rate, base.learning_rate);
        let epochs = or_base(&self.epochs, base.epochs);
        let decays = or_base(&self.weight_decay, base.weight_decay);
        let shapes = or_base(&self.predictor_hidden, base.predictor_hidden.clone());
        let mut out = Vec::with_capacity(lrs.len() * epochs.len() * decays.len() * shapes.len());
        for &learning_rate in &lrs {
            for &e in &epochs {
                for &weight_decay in &decays {
                    for shape in &shapes {
                        out.push(TrainingConfig {
                            learning_rate,
                            epochs: e,
                            weight_decay,
                            predictor_hidden: shape.clone(),
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config: TrainingConfig,
    /// Validation loss; `None` when training failed.
    pub validation: Option<LossValue>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    pub selected: usize,
    pub fit_rows: usize,
    pub validation_rows: usize,
}

impl GridReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "learning_rate",
            "epochs",
            "weight_decay",
            "predictor_hidden",
            "validation_prediction_term",
            "validation_adversary_term",
            "selected",
            "error",
        ])?;
        for (i, row) in self.rows.iter().enumerate() {
            let c = &row.config;
            let shape = c
                .predictor_hidden
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("x");
            w.write_record([
                c.learning_rate.to_string(),
                c.epochs.to_string(),
                c.weight_decay.to_string(),
                shape,
                row.validation.map(|v| v.prediction_term.to_string()).unwrap_or_default(),
                row.validation.map(|v| v.adversary_term.to_string()).unwrap_or_default(),
                (i == self.selected).to_string(),
                row.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Splits rows by case start time: the earliest `1 − validation_fraction`
/// of the cases fit, the rest validate.
pub fn temporal_validation_split(data: &Dataset, validation_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut cases: Vec<(Option<i64>, &str)> = data
        .provenance
        .iter()
        .map(|p| (p.case_start, p.case_id.as_str()))
        .collect();
    cases.sort();
    cases.dedup();
    let n = cases.len();
    let mut n_fit = ((1.0 - validation_fraction) * n as f64).floor() as usize;
    if n >= 2 {
        n_fit = n_fit.clamp(1, n - 1);
    }
    let fit_cases: std::collections::HashSet<&str> = cases[..n_fit.min(n)].iter().map(|c| c.1).collect();
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for (i, p) in data.provenance.iter().enumerate() {
        if fit_cases.contains(p.case_id.as_str()) {
            fit.push(i);
        } else {
            val.push(i);
        }
    }
    (fit, val)
}

/// Exhaustive search over `grid`, selecting the configuration with the
/// lowest mean validation prediction error. Failed combinations are
/// reported and skipped.
pub fn grid_search(
    data: &Dataset,
    schema: &FeatureSchema,
    outcome: &OutcomeSpec,
    base: &TrainingConfig,
    grid: &GridSpec,
    validation_fraction: f64,
) -> Result<(TrainingConfig, GridReport)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must lie strictly between 0 and 1, got {validation_fraction}"
        )));
    }
    let (fit_rows, val_rows) = temporal_validation_split(data, validation_fraction);
    if fit_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::Data(
            "grid search needs at least two cases to form fit and validation parts".into(),
        ));
    }
    let fit = data.subset(&fit_rows);
    let val = data.subset(&val_rows);

    let mut rows = Vec::new();
    for config in grid.combinations(base) {
        let row = match train(&fit, schema, outcome, &config) {
            Ok(model) => {
                let loss = model.evaluate_loss(&val, config.adversary_weight);
                if loss.prediction_term.is_finite() {
                    GridRow {
                        config,
                        validation: Some(loss),
                        error: None,
                    }
                } else {
                    GridRow {
                        config,
                        validation: None,
                        error: Some("validation loss is not finite".into()),
                    }
                }
            }
            Err(e @ (Error::Training { .. } | Error::Config(_))) => GridRow {
                config,
                validation: None,
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    let selected = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.validation.map(|v| (i, v.prediction_term)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Training {
            epoch: 0,
            batch: 0,
            message: "every grid combination failed".into(),
        })?;
    let chosen = rows[selected].config.clone();
    Ok((
        chosen,
        GridReport {
            rows,
            selected,
            fit_rows: fit.len(),
            validation_rows: val.len(),
        },
    ))
}

pub const MODEL_FORMAT: &str = "fairpm-model";
pub const MODEL_VERSION: u32 = 1;

/// On-disk model: JSON with the schema hash up front, the full feature
/// schema, normalization constants and every layer's shape, activation and
/// parameters. Floats are written in shortest round-trip form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    #[serde(default)]
    pub manifest_hash: Option<String>,
    pub outcome: OutcomeSpec,
    pub max_outcome: f64,
    pub protected_indices: Vec<usize>,
    pub protected_max: Vec<f64>,
    pub training: TrainingConfig,
    pub schema: FeatureSchema,
    pub predictor: Vec<DenseLayer>,
    pub adversary: Vec<DenseLayer>,
}

impl AdversarialModel {
    pub fn to_file(&self, manifest_hash: Option<String>) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            schema_hash: self.schema.hash(),
            manifest_hash,
            outcome: self.outcome.clone(),
            max_outcome: self.max_outcome,
            protected_indices: self.schema.protected_indices().to_vec(),
            protected_max: self.protected_max.clone(),
            training: self.config.clone(),
            schema: self.schema.clone(),
            predictor: self.predictor.layers().to_vec(),
            adversary: self.adversary.layers().to_vec(),
        }
    }

    pub fn save<W: Write>(&self, out: W, manifest_hash: Option<String>) -> Result<()> {
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, &self.to_file(manifest_hash))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Loads a model file, rejecting it if the embedded schema does not hash
    /// to the recorded value or if `expected_schema_hash` is given and
    /// differs.
    pub fn load<R: Read>(input: R, expected_schema_hash: Option<&str>) -> Result<(Self, ModelFile)> {
        let file: ModelFile = serde_json::from_reader(input)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format {:?} version {}",
                file.format, file.version
            )));
        }
        let actual = file.schema.hash();
        if actual != file.schema_hash {
            return Err(Error::Schema(format!(
                "model schema hash mismatch: file says {}, schema hashes to {actual}",
                file.schema_hash
            )));
        }
        if let Some(expected) = expected_schema_hash {
            if expected != file.schema_hash {
                return Err(Error::Schema(format!(
                    "model was trained for schema {}, expected {expected}",
                    file.schema_hash
                )));
            }
        }
        if file.protected_indices != file.schema.protected_indices() {
            return Err(Error::Schema("protected index set disagrees with the schema".into()));
        }
        let rebuild = |layers: &[DenseLayer]| -> Result<Network> {
            let checked = layers
                .iter()
                .map(|l| DenseLayer::new(l.weights.clone(), l.biases.clone(), l.input_dim, l.activation))
                .collect::<Result<Vec<_>>>()?;
            Network::from_layers(checked)
        };
        let predictor = rebuild(&file.predictor)?;
        let adversary = rebuild(&file.adversary)?;
        if predictor.input_dim() != file.schema.len()
            || adversary.input_dim() != predictor.last_hidden_dim()
            || adversary.output_dim() != file.protected_indices.len()
            || file.protected_max.len() != file.protected_indices.len()
        {
            return Err(Error::Schema("network shapes disagree with the schema".into()));
        }
        let model = AdversarialModel {
            predictor,
            adversary,
            schema: file.schema.clone(),
            outcome: file.outcome.clone(),
            max_outcome: file.max_outcome,
            protected_max: file.protected_max.clone(),
            config: file.training.clone(),
        };
        Ok((model, file))
    }
}
