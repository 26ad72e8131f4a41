//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fairpm_core::debias::{delta_vector, AdversarialModel, TrainingConfig};
use fairpm_core::encoding::{build_schema, Feature, FeatureSchema, Slot};
use fairpm_core::eventlog::{AttributeValue, Event, EventLog, Trace};
use fairpm_core::neuralnet::{numeric_parameter_derivative, relative_error, Activation, Gradients, Network};
use fairpm_core::OutcomeSpec;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const ACTIVITIES: [&str; 5] = ["a", "b", "c", "d", "e"];
pub const COLORS: [&str; 3] = ["red", "green", "blue"];

/// A random trace of 1 to 6 events over a small alphabet. Attributes are set
/// on random events; `exotic` lets unseen labels and categories appear.
pub fn random_trace<R: Rng>(rng: &mut R, case_id: String, start: i64, exotic: bool) -> Trace {
    let len = rng.random_range(1..=6);
    let mut events = Vec::with_capacity(len);
    for t in 0..len {
        let activity = if exotic && rng.random_bool(0.1) {
            "zz".to_owned()
        } else {
            ACTIVITIES.choose(rng).unwrap().to_string()
        };
        let mut e = Event::new(activity).at(start + t as i64 * 60_000);
        if rng.random_bool(0.4) {
            let color = if exotic && rng.random_bool(0.15) { "purple" } else { COLORS.choose(rng).unwrap() };
            e = e.with("color", AttributeValue::Categorical(color.into()));
        }
        if rng.random_bool(0.3) {
            e = e.with("flag", AttributeValue::Boolean(rng.random()));
        }
        if rng.random_bool(0.3) {
            let v = if exotic { rng.random_range(-5.0..15.0) } else { rng.random_range(0.0..10.0) };
            e = e.with("amount", AttributeValue::Numeric(v));
        }
        events.push(e);
    }
    Trace::new(case_id, events)
}

pub fn random_log<R: Rng>(rng: &mut R, n: usize, exotic: bool) -> EventLog {
    let traces = (0..n)
        .map(|i| {
            let start = rng.random_range(0..1_000_000_000);
            random_trace(rng, format!("c{i}"), start, exotic)
        })
        .collect();
    EventLog::new(traces).unwrap()
}

/// Encodes a prefix feature by feature from the schema's descriptions,
/// scanning the events backwards for each attribute.
pub fn brute_force_encode(schema: &FeatureSchema, events: &[Event]) -> Vec<f64> {
    let latest = |attribute: &str| events.iter().rev().find_map(|e| e.attributes.get(attribute));
    let categories: BTreeMap<&str, &[String]> =
        schema.groups().iter().map(|g| (g.attribute.as_str(), g.categories.as_slice())).collect();
    schema
        .features()
        .iter()
        .map(|f| match f {
            Feature::ActivityCount { activity } => events.iter().filter(|e| &e.activity == activity).count() as f64,
            Feature::Numeric { attribute, min, max } => match latest(attribute) {
                Some(AttributeValue::Numeric(v)) if max > min => ((v - min) / (max - min)).clamp(0.0, 1.0),
                _ => 0.0,
            },
            Feature::NumericUnassigned { attribute } => match latest(attribute) {
                Some(AttributeValue::Numeric(_)) => 0.0,
                _ => 1.0,
            },
            Feature::OneHot { attribute, slot } => {
                let label = latest(attribute).map(|v| match v {
                    AttributeValue::Categorical(s) => s.clone(),
                    AttributeValue::Boolean(b) => b.to_string(),
                    AttributeValue::Numeric(v) => v.to_string(),
                });
                let known = categories[attribute.as_str()];
                let hit = match (slot, &label) {
                    (Slot::Category(c), Some(l)) => c == l,
                    (Slot::Unknown, Some(l)) => !known.contains(l),
                    (Slot::Unassigned, None) => true,
                    _ => false,
                };
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
        })
        .collect()
}

/// A predictor/adversary pair on a small schema with a protected group.
/// Widths are drawn from 1..=16 and each network has at most 3 layers. Draws are
/// repeated until no ReLU or absolute value sits within `KINK_MARGIN` of
/// its kink, where finite differences are meaningless.
pub fn random_pair<R: Rng>(rng: &mut R, seed: u64) -> (AdversarialModel, Vec<f64>, f64) {
    loop {
        let (model, x, y) = draw_pair(rng, seed);
        if distance_to_kink(&model, &x, y) > KINK_MARGIN {
            return (model, x, y);
        }
    }
}

pub const KINK_MARGIN: f64 = 1e-3;

fn distance_to_kink(model: &AdversarialModel, x: &[f64], y: f64) -> f64 {
    let (out, trace) = model.predictor.forward(x);
    let (z, adv) = model.adversary.forward(trace.last_hidden());
    let hidden_pre = |t: &fairpm_core::neuralnet::ForwardTrace| {
        let n = t.pre_activations.len();
        t.pre_activations[..n - 1].iter().flatten().copied().collect::<Vec<_>>()
    };
    let p = model.schema.protected_indices().iter().map(|&i| x[i]);
    hidden_pre(&trace)
        .into_iter()
        .chain(hidden_pre(&adv))
        .chain(std::iter::once(out[0] - y / model.max_outcome))
        .chain(z.iter().zip(p).map(|(z, p)| z - p))
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

fn draw_pair<R: Rng>(rng: &mut R, seed: u64) -> (AdversarialModel, Vec<f64>, f64) {
    let log = random_log(rng, 6, false);
    let protected = ["color".to_owned()];
    let schema = build_schema(&log, &protected).unwrap();
    let hidden = |rng: &mut R, min: usize| -> Vec<usize> {
        let depth = rng.random_range(min..=2);
        (0..depth).map(|_| rng.random_range(1..=16)).collect()
    };
    let predictor_hidden = hidden(rng, 1);
    let adversary_hidden = hidden(rng, 0);
    let config = TrainingConfig {
        predictor_hidden: predictor_hidden.clone(),
        adversary_hidden: adversary_hidden.clone(),
        seed,
        ..TrainingConfig::default()
    };
    let predictor = Network::random(schema.len(), &predictor_hidden, Activation::Relu, 1, Activation::Identity, rng);
    let width = schema.protected_indices().len();
    let adversary =
        Network::random(predictor.last_hidden_dim(), &adversary_hidden, Activation::Relu, width, Activation::Sigmoid, rng);
    let protected_max = (0..width).map(|_| rng.random_range(0.5..2.0)).collect();
    let model = AdversarialModel {
        predictor,
        adversary,
        schema: schema.clone(),
        outcome: OutcomeSpec::TotalTime,
        max_outcome: rng.random_range(1.0..50.0),
        protected_max,
        config,
    };
    let x: Vec<f64> = (0..schema.len()).map(|_| rng.random_range(-1.0..2.0)).collect();
    let y = rng.random_range(0.0..model.max_outcome);
    (model, x, y)
}

/// Worst relative error between analytic gradients and central differences
/// for the adversary loss and the full predictor objective.
pub fn joint_gradient_error(model: &AdversarialModel, x: &[f64], y: f64, lambda: f64, eps: f64) -> f64 {
    let mut worst = 0.0f64;

    let mut grads = Gradients::zeros_like(&model.predictor);
    model.predictor_gradients(x, y, lambda, 1.0, &mut grads);
    let mut probe = model.clone();
    for (i, a) in grads.values().enumerate() {
        let mut net = model.predictor.clone();
        let n = numeric_parameter_derivative(&mut net, i, eps, &mut |net| {
            probe.predictor = net.clone();
            probe.joint_loss(x, y, lambda).total
        });
        worst = worst.max(relative_error(*a, n));
    }

    let hidden = model.predictor.forward(x).1.last_hidden().to_vec();
    let p: Vec<f64> = model.schema.protected_indices().iter().map(|&i| x[i]).collect();
    let mut adv_grads = Gradients::zeros_like(&model.adversary);
    model.adversary_gradients(&hidden, &p, 1.0, &mut adv_grads);
    let mut net = model.adversary.clone();
    for (i, a) in adv_grads.values().enumerate() {
        let n = numeric_parameter_derivative(&mut net, i, eps, &mut |net| {
            delta_vector(&net.output(&hidden), &p, &model.protected_max).unwrap()
        });
        worst = worst.max(relative_error(*a, n));
    }
    worst
}

/// A nonlinear function of 3 to 10 players, some of them null and two of
/// them symmetric, with matching grouped players.
pub struct ShapleyFixture {
    pub players: Vec<fairpm_core::encoding::Player>,
    pub weights: Vec<f64>,
    pub null_player: usize,
    pub symmetric: (usize, usize),
    pub dim: usize,
}

pub fn shapley_fixture<R: Rng>(rng: &mut R, n_players: usize) -> ShapleyFixture {
    let mut players = Vec::new();
    let mut dim = 0;
    for p in 0..n_players {
        let size = if p < 2 { 1 } else { rng.random_range(1..=2) };
        players.push(fairpm_core::encoding::Player {
            name: format!("p{p}"),
            indices: (dim..dim + size).collect(),
        });
        dim += size;
    }
    let mut weights: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let null_player = n_players - 1;
    for &i in &players[null_player].indices {
        weights[i] = 0.0;
    }
    // Players 0 and 1 enter the function identically.
    let symmetric = (0, 1);
    weights[1] = weights[0];
    ShapleyFixture {
        players,
        weights,
        null_player,
        symmetric,
        dim,
    }
}

impl ShapleyFixture {
    /// Linear part plus an interaction between players 0 and 1 and a
    /// saturating term, so attributions are not just the linear weights.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let a = self.players[0].indices[0];
        let b = self.players[1].indices[0];
        let linear: f64 = x.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        linear + 0.7 * x[a] * x[b] + (linear * 0.3).tanh()
    }
}
