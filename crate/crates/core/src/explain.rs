//! Shapley-value attribution of predictions to players (activity counts and
//! whole attributes), averaged over a support set.
//!
//! The value of a coalition `S` for instance `x` is the mean model output
//! over background rows `b` of the hybrid that takes the players in `S` from
//! `x` and everything else from `b`. The base value is the mean prediction
//! over the background, so per-instance attributions add up to
//! `f(x) − base`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::debias::AdversarialModel;
use crate::encoding::{Dataset, Player};
use crate::error::{Error, Result};
use crate::neuralnet::Scratch;

/// Largest player count accepted by exact enumeration.
pub const MAX_EXACT_PLAYERS: usize = 12;

/// Anything that maps an encoded instance to a scalar prediction.
pub trait Model {
    fn predict_row(&self, x: &[f64]) -> f64;
}

impl Model for AdversarialModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.predict_instance(x)
    }
}

impl<F: Fn(&[f64]) -> f64> Model for F {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Faster path for trained models: reuses forward buffers.
struct Buffered<'a> {
    model: &'a AdversarialModel,
    scratch: std::cell::RefCell<Scratch>,
}

impl Model for Buffered<'_> {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut scratch = self.scratch.borrow_mut();
        let raw = self.model.predictor.output_with(x, &mut scratch)[0];
        self.model.denormalize(raw)
    }
}

pub fn buffered(model: &AdversarialModel) -> impl Model + '_ {
    Buffered {
        model,
        scratch: Default::default(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributionMode {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub mode: AttributionMode,
    pub samples_per_feature: usize,
    /// Rows drawn (without replacement) from the training data as the
    /// reference distribution.
    pub background_size: usize,
    /// Optional cap on the support set, drawn the same way.
    pub max_support: Option<usize>,
    pub seed: u64,
    pub keep_instances: bool,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            mode: AttributionMode::Exact,
            samples_per_feature: 2000,
            background_size: 100,
            max_support: None,
            seed: 0,
            keep_instances: false,
        }
    }
}

/// Seeded subsample of `size` rows, in original row order.
pub fn sample_rows(data: &Dataset, size: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rows: Vec<usize> = (0..data.len()).collect();
    if size < rows.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rows.shuffle(&mut rng);
        rows.truncate(size);
        rows.sort_unstable();
    }
    rows.into_iter()
        .map(|i| data.instances[i].values().to_vec())
        .collect()
}

fn fill_hybrid(hybrid: &mut [f64], instance: &[f64], player: &Player) {
    for &i in &player.indices {
        hybrid[i] = instance[i];
    }
}

/// Exact Shapley values by enumerating all `2^g` coalitions.
pub fn shapley_exact(
    model: &dyn Model,
    players: &[Player],
    instance: &[f64],
    background: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let g = players.len();
    if g > MAX_EXACT_PLAYERS {
        return Err(Error::Config(format!(
            "exact attribution enumerates 2^{g} coalitions; at most {MAX_EXACT_PLAYERS} players \
             are allowed, use sampled mode instead"
        )));
    }
    if background.is_empty() {
        return Err(Error::Data("attribution needs a non-empty background".into()));
    }
    let n_masks = 1usize << g;
    let mut values = vec![0.0; n_masks];
    let mut hybrid = vec![0.0; instance.len()];
    for (mask, value) in values.iter_mut().enumerate() {
        let mut sum = 0.0;
        for b in background {
            hybrid.copy_from_slice(b);
            for (p, player) in players.iter().enumerate() {
                if mask & (1 << p) != 0 {
                    fill_hybrid(&mut hybrid, instance, player);
                }
            }
            sum += model.predict_row(&hybrid);
        }
        *value = sum / background.len() as f64;
    }

    // weight[s] = s! (g - s - 1)! / g!
    let factorial = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let weights: Vec<f64> = (0..g)
        .map(|s| factorial(s) * factorial(g - s - 1) / factorial(g))
        .collect();
    let mut phi = vec![0.0; g];
    for (p, slot) in phi.iter_mut().enumerate() {
        let bit = 1 << p;
        let mut acc = 0.0;
        for mask in 0..n_masks {
            if mask & bit == 0 {
                let size = mask.count_ones() as usize;
                acc += weights[size] * (values[mask | bit] - values[mask]);
            }
        }
        *slot = acc;
    }
    Ok(phi)
}

/// Monte-Carlo permutation estimate: `samples_per_feature` player
/// orderings, each against one background row.
pub fn shapley_sampled(
    model: &dyn Model,
    players: &[Player],
    instance: &[f64],
    background: &[Vec<f64>],
    samples_per_feature: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples_per_feature == 0 {
        return Err(Error::Config("samples_per_feature must be positive".into()));
    }
    if background.is_empty() {
        return Err(Error::Data("attribution needs a non-empty background".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..players.len()).collect();
    let mut rows: Vec<usize> = (0..background.len()).collect();
    rows.shuffle(&mut rng);
    let mut phi = vec![0.0; players.len()];
    let mut hybrid = vec![0.0; instance.len()];
    for sample in 0..samples_per_feature {
        // Antithetic pairs: every other ordering is the previous one
        // reversed, against the same background row. Rows are cycled
        // rather than drawn independently.
        if sample % 2 == 0 {
            order.shuffle(&mut rng);
        } else {
            order.reverse();
        }
        hybrid.copy_from_slice(&background[rows[(sample / 2) % rows.len()]]);
        let mut previous = model.predict_row(&hybrid);
        for &p in &order {
            fill_hybrid(&mut hybrid, instance, &players[p]);
            let current = model.predict_row(&hybrid);
            phi[p] += current - previous;
            previous = current;
        }
    }
    let n = samples_per_feature as f64;
    Ok(phi.into_iter().map(|v| v / n).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerSummary {
    pub player: String,
    pub mean_signed: f64,
    pub mean_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    /// Sorted by descending `mean_abs`; ties keep player order.
    pub players: Vec<PlayerSummary>,
    pub base_value: f64,
    pub support_size: usize,
    pub mode: AttributionMode,
    /// Per-instance attributions in `player_names` order, when requested.
    pub player_names: Vec<String>,
    pub instances: Option<Vec<Vec<f64>>>,
}

impl ShapleyReport {
    pub fn get(&self, player: &str) -> Option<&PlayerSummary> {
        self.players.iter().find(|p| p.player == player)
    }

    /// Report with every value (and the base) multiplied by `factor`, e.g.
    /// to display hours as minutes.
    pub fn scaled(&self, factor: f64) -> ShapleyReport {
        let mut out = self.clone();
        out.base_value *= factor;
        for p in &mut out.players {
            p.mean_signed *= factor;
            p.mean_abs *= factor;
        }
        if let Some(rows) = &mut out.instances {
            for row in rows {
                row.iter_mut().for_each(|v| *v *= factor);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["player", "mean_signed", "mean_abs"])?;
        for p in &self.players {
            w.write_record([p.player.clone(), p.mean_signed.to_string(), p.mean_abs.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_instances_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row".to_owned()];
        header.extend(self.player_names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.instances.iter().flatten().enumerate() {
            let mut record = vec![i.to_string()];
            record.extend(row.iter().map(ToString::to_string));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Text bar chart of the signed means, largest magnitude first.
    pub fn render_bars(&self, width: usize) -> String {
        let label_width = self.players.iter().map(|p| p.player.chars().count()).max().unwrap_or(0);
        let largest = self
            .players
            .iter()
            .map(|p| p.mean_signed.abs())
            .fold(0.0, f64::max);
        let mut out = format!("base value: {:.4}\n", self.base_value);
        for p in &self.players {
            let len = if largest > 0.0 {
                ((p.mean_signed.abs() / largest) * width as f64).round() as usize
            } else {
                0
            };
            let bar = if p.mean_signed < 0.0 { "-" } else { "+" }.repeat(len);
            out.push_str(&format!(
                "{:<label_width$}  {:>+10.4}  |{bar}\n",
                p.player, p.mean_signed
            ));
        }
        out
    }
}

/// Attributes every support row and averages signed and absolute values
/// per player.
pub fn aggregate_over_support(
    model: &dyn Model,
    players: &[Player],
    support: &[Vec<f64>],
    background: &[Vec<f64>],
    config: &AttributionConfig,
) -> Result<ShapleyReport> {
    if support.is_empty() {
        return Err(Error::Data("support set is empty".into()));
    }
    if config.mode == AttributionMode::Exact && players.len() > MAX_EXACT_PLAYERS {
        return Err(Error::Config(format!(
            "{} players exceed the exact-mode limit of {MAX_EXACT_PLAYERS}; use sampled mode",
            players.len()
        )));
    }
    let mut rows = Vec::with_capacity(support.len());
    for (i, x) in support.iter().enumerate() {
        let phi = match config.mode {
            AttributionMode::Exact => shapley_exact(model, players, x, background)?,
            AttributionMode::Sampled => shapley_sampled(
                model,
                players,
                x,
                background,
                config.samples_per_feature,
                row_seed(config.seed, i),
            )?,
        };
        rows.push(phi);
    }
    let base_value =
        background.iter().map(|b| model.predict_row(b)).sum::<f64>() / background.len() as f64;
    Ok(summarize(players, rows, base_value, config))
}

fn row_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn summarize(
    players: &[Player],
    rows: Vec<Vec<f64>>,
    base_value: f64,
    config: &AttributionConfig,
) -> ShapleyReport {
    let n = rows.len() as f64;
    let mut summaries: Vec<PlayerSummary> = players
        .iter()
        .enumerate()
        .map(|(p, player)| PlayerSummary {
            player: player.name.clone(),
            mean_signed: rows.iter().map(|r| r[p]).sum::<f64>() / n,
            mean_abs: rows.iter().map(|r| r[p].abs()).sum::<f64>() / n,
        })
        .collect();
    summaries.sort_by(|a, b| b.mean_abs.total_cmp(&a.mean_abs));
    ShapleyReport {
        players: summaries,
        base_value,
        support_size: rows.len(),
        mode: config.mode,
        player_names: players.iter().map(|p| p.name.clone()).collect(),
        instances: config.keep_instances.then_some(rows),
    }
}

/// Which per-player statistic a ratio compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioBasis {
    MeanSigned,
    MeanAbs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRatio {
    pub value: f64,
    /// The reference (without-debiasing) statistic was exactly zero.
    pub baseline_zero: bool,
}

/// `|stat with| / |stat without|` for one player.
pub fn influence_ratio(
    without: &ShapleyReport,
    with: &ShapleyReport,
    player: &str,
    basis: RatioBasis,
) -> Result<InfluenceRatio> {
    let stat = |r: &ShapleyReport| {
        r.get(player)
            .map(|p| match basis {
                RatioBasis::MeanSigned => p.mean_signed,
                RatioBasis::MeanAbs => p.mean_abs,
            })
            .ok_or_else(|| Error::Contract(format!("unknown player {player:?}")))
    };
    Ok(ratio_of(stat(with)?, stat(without)?))
}

pub fn ratio_of(with: f64, without: f64) -> InfluenceRatio {
    if without == 0.0 {
        InfluenceRatio {
            value: f64::INFINITY,
            baseline_zero: true,
        }
    } else {
        InfluenceRatio {
            value: with.abs() / without.abs(),
            baseline_zero: false,
        }
    }
}
