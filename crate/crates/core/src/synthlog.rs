//! Seeded synthetic logs with injected discrimination and a correlated proxy.
//!
//! Every trace is `start`, one to five sequential tasks, an optional branch
//! activity and `end`. Case attributes sit on the first event: the protected
//! category, a proxy that copies it (through a fixed recoding) with
//! probability `proxy_correlation`, and a legitimate numeric score in [0, 1].
//!
//! Duration mode:
//! `hours = base + step·(k − E k) + branch·(b − p_b) + score·(2s − 1)
//!          + bias·shift·[disadvantaged] + U(−noise, noise)`.
//! Occurrence mode:
//! `P(branch) = p_b + score_effect·(2s − 1) + bias·shift·[disadvantaged]`.
//! All terms except the bias are zero-mean, so the group means are exact
//! closed forms (see [`describe`]).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{AttributeValue, Event, EventLog, Trace, MILLIS_PER_HOUR};
use crate::outcomes::OutcomeSpec;

pub const START: &str = "start";
pub const END: &str = "end";
const MAX_TASKS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthOutcome {
    Duration,
    Occurrence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtectedSpec {
    pub name: String,
    pub categories: Vec<String>,
    pub probabilities: Vec<f64>,
    pub disadvantaged: String,
}

impl Default for ProtectedSpec {
    fn default() -> Self {
        ProtectedSpec {
            name: "gender".into(),
            categories: vec!["female".into(), "male".into()],
            probabilities: vec![0.5, 0.5],
            disadvantaged: "female".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySpec {
    pub name: String,
    /// Image of each protected category under the recoding, in the same
    /// order as the protected categories.
    pub categories: Vec<String>,
    pub correlation: f64,
}

impl Default for ProxySpec {
    fn default() -> Self {
        ProxySpec {
            name: "religion".into(),
            categories: vec!["religion_a".into(), "religion_b".into()],
            correlation: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_traces: usize,
    /// Alphabet size: start, end, the branch activity and the tasks.
    pub n_activities: usize,
    pub protected: ProtectedSpec,
    pub proxy: ProxySpec,
    pub score_attribute: String,
    /// Bias strength β in [0, 1].
    pub bias: f64,
    pub outcome: SynthOutcome,
    /// Hours (duration mode) or probability (occurrence mode) added for the
    /// disadvantaged category at full bias.
    pub shift: f64,
    pub branch_activity: String,
    pub branch_probability: f64,
    /// Occurrence mode: branch probability change from score 0.5 to 1.
    pub score_probability_effect: f64,
    pub base_hours: f64,
    pub step_hours: f64,
    pub branch_hours: f64,
    pub score_hours: f64,
    pub noise_hours: f64,
    /// First case start, milliseconds since the epoch.
    pub start_time: i64,
    pub case_interval_minutes: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_traces: 1000,
            n_activities: 8,
            protected: ProtectedSpec::default(),
            proxy: ProxySpec::default(),
            score_attribute: "score".into(),
            bias: 0.8,
            outcome: SynthOutcome::Duration,
            shift: 24.0,
            branch_activity: "review".into(),
            branch_probability: 0.3,
            score_probability_effect: 0.15,
            base_hours: 10.0,
            step_hours: 1.0,
            branch_hours: 3.0,
            score_hours: 3.0,
            noise_hours: 2.0,
            start_time: 1_577_836_800_000,
            case_interval_minutes: 30.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Hiring-style log: 5,000 cases, total time outcome, gender shifts it by
    /// β·5 h on top of a roughly 24 h process, religion as the proxy.
    pub fn hiring_like(seed: u64) -> Self {
        SynthConfig {
            n_traces: 5000,
            bias: 0.8,
            shift: 5.0,
            base_hours: 24.0,
            step_hours: 3.0,
            branch_hours: 6.0,
            score_hours: 5.0,
            seed,
            ..SynthConfig::default()
        }
    }

    /// Hospital-style log: whether the review branch occurs, with the score
    /// as the legitimate driver and gender shifting the probability.
    pub fn hospital_like(seed: u64) -> Self {
        SynthConfig {
            outcome: SynthOutcome::Occurrence,
            shift: 0.3,
            branch_probability: 0.35,
            score_probability_effect: 0.3,
            ..SynthConfig::hiring_like(seed)
        }
    }

    pub fn task_count(&self) -> usize {
        (self.n_activities - 3).min(MAX_TASKS)
    }

    pub fn tasks(&self) -> Vec<String> {
        (1..=self.task_count()).map(|i| format!("task_{i}")).collect()
    }

    /// Outcome function matching the configured mode.
    pub fn outcome_spec(&self) -> OutcomeSpec {
        match self.outcome {
            SynthOutcome::Duration => OutcomeSpec::TotalTime,
            SynthOutcome::Occurrence => OutcomeSpec::ActivityOccurrence(self.branch_activity.clone()),
        }
    }

    fn disadvantaged_index(&self) -> Option<usize> {
        self.protected
            .categories
            .iter()
            .position(|c| *c == self.protected.disadvantaged)
    }

    fn mean_tasks(&self) -> f64 {
        (1 + self.task_count()) as f64 / 2.0
    }

    fn branch_range(&self) -> (f64, f64) {
        let shift = match self.outcome {
            SynthOutcome::Occurrence => self.bias * self.shift,
            SynthOutcome::Duration => 0.0,
        };
        let (lo, hi) = (
            self.branch_probability - self.score_probability_effect.abs(),
            self.branch_probability + self.score_probability_effect.abs(),
        );
        (lo + shift.min(0.0), hi + shift.max(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_traces == 0 {
            return err("n_traces must be positive".into());
        }
        if self.n_activities < 4 {
            return err(format!("n_activities = {} but at least 4 are needed", self.n_activities));
        }
        let p = &self.protected;
        if p.categories.len() < 2 || p.categories.len() != p.probabilities.len() {
            return err("protected attribute needs ≥ 2 categories, one probability each".into());
        }
        if p.probabilities.iter().any(|&q| !(0.0..=1.0).contains(&q))
            || (p.probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return err("protected category probabilities must lie in [0, 1] and sum to 1".into());
        }
        let unique = |v: &[String]| v.iter().collect::<std::collections::BTreeSet<_>>().len() == v.len();
        if !unique(&p.categories) || !unique(&self.proxy.categories) {
            return err("category names must be distinct".into());
        }
        if self.disadvantaged_index().is_none() {
            return err(format!("disadvantaged category {:?} is not a protected category", p.disadvantaged));
        }
        if self.proxy.categories.len() != p.categories.len() {
            return err("proxy needs one category per protected category".into());
        }
        for (what, v) in [("bias", self.bias), ("proxy correlation", self.proxy.correlation)] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{what} = {v} is outside [0, 1]"));
            }
        }
        let names = [&p.name, &self.proxy.name, &self.score_attribute];
        if names.iter().collect::<std::collections::BTreeSet<_>>().len() != 3 {
            return err("protected, proxy and score attributes need distinct names".into());
        }
        let mut activities = vec![START.to_owned(), END.to_owned(), self.branch_activity.clone()];
        activities.extend(self.tasks());
        if !unique(&activities) {
            return err(format!("branch activity {:?} clashes with another activity", self.branch_activity));
        }
        if !(0.0..=1.0).contains(&self.branch_probability) {
            return err("branch_probability must lie in [0, 1]".into());
        }
        let (lo, hi) = self.branch_range();
        if lo < 0.0 || hi > 1.0 {
            return err(format!("branch probability can reach [{lo}, {hi}], outside [0, 1]"));
        }
        let k_spread = (self.task_count() as f64 - self.mean_tasks()) * self.step_hours.abs();
        let b_spread = self.branch_hours.abs() * self.branch_probability.max(1.0 - self.branch_probability);
        let bias_low = match self.outcome {
            SynthOutcome::Duration => (self.bias * self.shift).min(0.0),
            SynthOutcome::Occurrence => 0.0,
        };
        let shortest = self.base_hours - k_spread - b_spread - self.score_hours.abs()
            - self.noise_hours.abs()
            + bias_low;
        if shortest < 0.0 {
            return err(format!("configuration allows negative durations (down to {shortest} h)"));
        }
        if self.case_interval_minutes < 0.0 {
            return err("case_interval_minutes must be non-negative".into());
        }
        Ok(())
    }
}

fn draw_category(rng: &mut ChaCha8Rng, probabilities: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities.len() - 1
}

fn generate_trace(config: &SynthConfig, index: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let probs = &config.protected.probabilities;
    let protected = draw_category(&mut rng, probs);
    let proxy = if rng.random::<f64>() < config.proxy.correlation {
        protected
    } else {
        draw_category(&mut rng, probs)
    };
    let score: f64 = rng.random();
    let tasks = rng.random_range(1..=config.task_count());
    let disadvantaged = Some(protected) == config.disadvantaged_index();
    let indicator = if disadvantaged { 1.0 } else { 0.0 };

    let mut branch_p = config.branch_probability;
    if config.outcome == SynthOutcome::Occurrence {
        branch_p += config.score_probability_effect * (2.0 * score - 1.0) + config.bias * config.shift * indicator;
    }
    let branch = rng.random::<f64>() < branch_p;

    let mut hours = config.base_hours
        + config.step_hours * (tasks as f64 - config.mean_tasks())
        + config.branch_hours * (f64::from(u8::from(branch)) - config.branch_probability)
        + config.score_hours * (2.0 * score - 1.0)
        + config.noise_hours * (2.0 * rng.random::<f64>() - 1.0);
    if config.outcome == SynthOutcome::Duration {
        hours += config.bias * config.shift * indicator;
    }
    let duration = (hours.max(0.0) * MILLIS_PER_HOUR).round() as i64;

    let mut activities = vec![START.to_owned()];
    activities.extend((1..=tasks).map(|i| format!("task_{i}")));
    if branch {
        activities.push(config.branch_activity.clone());
    }
    activities.push(END.to_owned());

    let inner = activities.len() - 2;
    let mut fractions: Vec<f64> = (0..inner).map(|_| rng.random()).collect();
    fractions.sort_by(f64::total_cmp);

    let start = config.start_time
        + (index as f64 * config.case_interval_minutes * 60_000.0).round() as i64;
    let events = activities
        .into_iter()
        .enumerate()
        .map(|(i, activity)| {
            let offset = match i {
                0 => 0,
                i if i == inner + 1 => duration,
                i => (fractions[i - 1] * duration as f64).round() as i64,
            };
            let event = Event::new(activity).at(start + offset);
            if i == 0 {
                event
                    .with(
                        config.protected.name.clone(),
                        AttributeValue::Categorical(config.protected.categories[protected].clone()),
                    )
                    .with(
                        config.proxy.name.clone(),
                        AttributeValue::Categorical(config.proxy.categories[proxy].clone()),
                    )
                    .with(config.score_attribute.clone(), AttributeValue::Numeric(score))
            } else {
                event
            }
        })
        .collect();
    Trace::new(format!("case_{index:06}"), events)
}

/// Generates `n_traces` traces; trace `i` depends only on `(seed, i)`.
pub fn generate(config: &SynthConfig) -> Result<EventLog> {
    config.validate()?;
    let traces = (0..config.n_traces).map(|i| generate_trace(config, i)).collect();
    EventLog::new(traces)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub outcome: OutcomeSpec,
    /// Expected outcome (hours or branch probability) per protected category.
    pub group_expectations: BTreeMap<String, f64>,
    /// Disadvantaged expectation minus the expectation over everyone else.
    pub expected_difference: f64,
    /// Probability that the proxy equals the recoded protected value.
    pub proxy_agreement: f64,
    /// Mutual information between proxy and protected value, in nats.
    pub proxy_mutual_information: f64,
    pub proxy_independent: bool,
}

/// Analytic group-wise expectations and proxy dependence implied by a
/// configuration.
pub fn describe(config: &SynthConfig) -> GroundTruth {
    let base = match config.outcome {
        SynthOutcome::Duration => config.base_hours,
        SynthOutcome::Occurrence => config.branch_probability,
    };
    let shift = config.bias * config.shift;
    let group_expectations = config
        .protected
        .categories
        .iter()
        .map(|c| {
            let extra = if *c == config.protected.disadvantaged { shift } else { 0.0 };
            (c.clone(), base + extra)
        })
        .collect();

    let p = &config.protected.probabilities;
    let rho = config.proxy.correlation;
    let mut agreement = rho;
    let mut mi = 0.0;
    for (c, &pc) in p.iter().enumerate() {
        agreement += (1.0 - rho) * pc * pc;
        for (q, &pq) in p.iter().enumerate() {
            let joint = pc * (if c == q { rho } else { 0.0 } + (1.0 - rho) * pq);
            if joint > 0.0 {
                mi += joint * (joint / (pc * pq)).ln();
            }
        }
    }
    GroundTruth {
        outcome: config.outcome_spec(),
        group_expectations,
        expected_difference: shift,
        proxy_agreement: agreement,
        proxy_mutual_information: mi,
        proxy_independent: rho == 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcomes::eval_outcome;

    fn group_outcomes(config: &SynthConfig) -> BTreeMap<String, Vec<f64>> {
        let log = generate(config).unwrap();
        let spec = config.outcome_spec();
        let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for t in log.traces() {
            let g = t.events[0].attributes[&config.protected.name].to_string();
            out.entry(g).or_default().push(eval_outcome(&spec, t).unwrap());
        }
        out
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn traces_have_three_to_eight_events() {
        let log = generate(&SynthConfig::default()).unwrap();
        assert_eq!(log.len(), 1000);
        for t in log.traces() {
            assert!((3..=8).contains(&t.len()));
            assert_eq!(t.events[0].activity, START);
            assert_eq!(t.events.last().unwrap().activity, END);
        }
    }

    #[test]
    fn deterministic() {
        let c = SynthConfig { n_traces: 200, seed: 9, ..Default::default() };
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        let other = SynthConfig { seed: 10, ..c.clone() };
        assert_ne!(generate(&c).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn prefix_of_larger_log_matches() {
        let small = SynthConfig { n_traces: 50, ..Default::default() };
        let large = SynthConfig { n_traces: 80, ..Default::default() };
        assert_eq!(
            generate(&small).unwrap().traces(),
            &generate(&large).unwrap().traces()[..50]
        );
    }

    #[test]
    fn no_bias_no_difference() {
        let c = SynthConfig { n_traces: 5000, bias: 0.0, seed: 3, ..Default::default() };
        let g = group_outcomes(&c);
        let (ma, va) = mean_var(&g["female"]);
        let (mb, vb) = mean_var(&g["male"]);
        let se = (va / g["female"].len() as f64 + vb / g["male"].len() as f64).sqrt();
        assert!((ma - mb).abs() < 3.0 * se, "{ma} vs {mb}, se {se}");
        assert_eq!(describe(&c).expected_difference, 0.0);
    }

    #[test]
    fn full_bias_shifts_duration() {
        let c = SynthConfig { n_traces: 5000, bias: 1.0, shift: 24.0, seed: 4, ..Default::default() };
        let g = group_outcomes(&c);
        let (ma, va) = mean_var(&g["female"]);
        let (mb, vb) = mean_var(&g["male"]);
        let se = (va / g["female"].len() as f64 + vb / g["male"].len() as f64).sqrt();
        assert!((ma - mb - 24.0).abs() < 4.0 * se, "difference {}", ma - mb);
    }

    #[test]
    fn empirical_means_converge() {
        let truth = describe(&SynthConfig::default());
        let error_at = |n| {
            let g = group_outcomes(&SynthConfig { n_traces: n, seed: 5, ..Default::default() });
            g.iter()
                .map(|(k, v)| (mean_var(v).0 - truth.group_expectations[k]).abs())
                .fold(0.0, f64::max)
        };
        let (small, large) = (error_at(200), error_at(8000));
        assert!(large < 0.2, "{large}");
        assert!(large < small.max(0.05));
    }

    #[test]
    fn occurrence_probability_shift() {
        let c = SynthConfig {
            n_traces: 8000,
            outcome: SynthOutcome::Occurrence,
            shift: 0.4,
            bias: 1.0,
            seed: 6,
            ..Default::default()
        };
        let truth = describe(&c);
        assert!((truth.group_expectations["female"] - 0.7).abs() < 1e-12);
        let g = group_outcomes(&c);
        for (k, v) in &g {
            let p = truth.group_expectations[k];
            let se = (p * (1.0 - p) / v.len() as f64).sqrt();
            assert!((mean_var(v).0 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn full_correlation_is_a_bijection() {
        let c = SynthConfig { n_traces: 2000, ..Default::default() };
        let c = SynthConfig { proxy: ProxySpec { correlation: 1.0, ..c.proxy.clone() }, ..c };
        let log = generate(&c).unwrap();
        let mut pairs = std::collections::BTreeSet::new();
        for t in log.traces() {
            let a = &t.events[0].attributes;
            pairs.insert((a["gender"].to_string(), a["religion"].to_string()));
        }
        let expected: std::collections::BTreeSet<_> = [
            ("female".to_owned(), "religion_a".to_owned()),
            ("male".to_owned(), "religion_b".to_owned()),
        ]
        .into();
        assert_eq!(pairs, expected);
        assert!((describe(&c).proxy_agreement - 1.0).abs() < 1e-12);
    }

    #[test]
    fn describe_examples() {
        let c = SynthConfig { base_hours: 10.0, shift: 24.0, bias: 0.5, ..Default::default() };
        let truth = describe(&c);
        assert_eq!(truth.group_expectations["female"], 22.0);
        assert_eq!(truth.group_expectations["male"], 10.0);
        let indep = SynthConfig { proxy: ProxySpec { correlation: 0.0, ..Default::default() }, ..c };
        let truth = describe(&indep);
        assert!(truth.proxy_independent);
        assert!(truth.proxy_mutual_information.abs() < 1e-12);
        // two equiprobable categories, full correlation: MI = ln 2
        let full = SynthConfig { proxy: ProxySpec { correlation: 1.0, ..Default::default() }, ..Default::default() };
        assert!((describe(&full).proxy_mutual_information - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn presets() {
        let hiring = SynthConfig::hiring_like(1);
        hiring.validate().unwrap();
        assert!((describe(&hiring).expected_difference - 4.0).abs() < 1e-9);
        let hospital = SynthConfig::hospital_like(1);
        hospital.validate().unwrap();
        let truth = describe(&hospital);
        assert!((truth.expected_difference - 0.24).abs() < 1e-9);
        assert!(truth.group_expectations.values().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = |c: SynthConfig| assert!(matches!(c.validate(), Err(Error::Config(_))));
        bad(SynthConfig { bias: 1.5, ..Default::default() });
        bad(SynthConfig { n_activities: 3, ..Default::default() });
        bad(SynthConfig { base_hours: 1.0, ..Default::default() });
        bad(SynthConfig {
            protected: ProtectedSpec { probabilities: vec![0.5, 0.6], ..Default::default() },
            ..Default::default()
        });
        bad(SynthConfig {
            outcome: SynthOutcome::Occurrence,
            shift: 0.9,
            bias: 1.0,
            ..Default::default()
        });
    }
}
