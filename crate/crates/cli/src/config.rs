//! The single TOML file that drives every command.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fairpm_core::debias::GridSpec;
use fairpm_core::eventlog::ColumnMapping;
use fairpm_core::explain::AttributionMode;
use fairpm_core::fairness::DEFAULT_MIN_SUPPORT;
use fairpm_core::synthlog::SynthConfig;
use fairpm_core::{OutcomeSpec, ParseOptions, TrainingConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: DataConfig,
    pub task: TaskConfig,
    pub training: TrainingConfig,
    pub grid: GridConfig,
    pub evaluate: EvaluateConfig,
    pub explain: ExplainConfig,
    pub generate: GenerateConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    /// Decided by file extension: `.xes` is XES, anything else CSV.
    #[default]
    Auto,
    Xes,
    Csv,
}

impl LogFormat {
    pub fn resolve(self, path: &Path) -> LogFormat {
        match self {
            LogFormat::Auto => {
                let xes = path
                    .extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("xes"));
                if xes {
                    LogFormat::Xes
                } else {
                    LogFormat::Csv
                }
            }
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Full log, input of `split`.
    pub input: Option<PathBuf>,
    /// Training half: written by `split`, read by `train` and `explain`.
    pub train: PathBuf,
    /// Test half: written by `split`, read by `evaluate` and `explain`.
    pub test: PathBuf,
    pub format: LogFormat,
    pub train_fraction: f64,
    pub drop_attributes: BTreeSet<String>,
    pub columns: ColumnMapping,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            input: None,
            train: "out/train.csv".into(),
            test: "out/test.csv".into(),
            format: LogFormat::Auto,
            train_fraction: 0.7,
            drop_attributes: ParseOptions::default().dropped_attributes,
            columns: ColumnMapping::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// `total_time` or `occurs:<activity>`.
    pub outcome: String,
    pub protected: Vec<String>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            outcome: "total_time".into(),
            protected: Vec::new(),
        }
    }
}

impl TaskConfig {
    pub fn outcome_spec(&self) -> Result<OutcomeSpec, CliError> {
        self.outcome.parse().map_err(CliError::Core)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
    pub weight_decay: Vec<f64>,
    pub predictor_hidden: Vec<Vec<usize>>,
    pub validation_fraction: Option<f64>,
}

impl GridConfig {
    pub fn is_enabled(&self) -> bool {
        !(self.learning_rate.is_empty()
            && self.epochs.is_empty()
            && self.weight_decay.is_empty()
            && self.predictor_hidden.is_empty())
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            learning_rate: self.learning_rate.clone(),
            epochs: self.epochs.clone(),
            weight_decay: self.weight_decay.clone(),
            predictor_hidden: self.predictor_hidden.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    /// APA for regression outcomes, F-score for classification.
    #[default]
    Auto,
    Apa,
    FScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub metric: MetricChoice,
    pub threshold: f64,
    pub min_support: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            metric: MetricChoice::Auto,
            threshold: 0.5,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayUnit {
    #[default]
    Hours,
    Minutes,
    Days,
}

impl DisplayUnit {
    /// Multiplier from hours.
    pub fn factor(self) -> f64 {
        match self {
            DisplayUnit::Hours => 1.0,
            DisplayUnit::Minutes => 60.0,
            DisplayUnit::Days => 1.0 / 24.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub mode: AttributionMode,
    pub samples_per_feature: usize,
    pub background_size: usize,
    pub max_support: Option<usize>,
    /// Unit for total-time reports; ignored for occurrence outcomes.
    pub display_unit: DisplayUnit,
    pub keep_instances: bool,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            mode: AttributionMode::Exact,
            samples_per_feature: 2000,
            background_size: 100,
            max_support: None,
            display_unit: DisplayUnit::Hours,
            keep_instances: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub output: PathBuf,
    #[serde(flatten)]
    pub synth: SynthConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            output: "out/synthetic.csv".into(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub outcome: Option<String>,
    pub protected: Option<Vec<String>>,
}

/// A loaded configuration plus the directory its relative paths are
/// resolved against.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub config: Config,
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(lambda) = overrides.lambda {
            self.training.adversary_weight = lambda;
        }
        if let Some(outcome) = &overrides.outcome {
            self.task.outcome = outcome.clone();
        }
        if let Some(protected) = &overrides.protected {
            self.task.protected = protected.clone();
        }
        // One seed drives training, attribution sampling and generation.
        self.training.seed = self.seed;
        self.generate.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let f = self.data.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Config(format!(
                "data.train_fraction = {f} must lie strictly between 0 and 1"
            )));
        }
        self.task.outcome_spec()?;
        self.training.validate()?;
        if let Some(v) = self.grid.validation_fraction {
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::Config(format!(
                    "grid.validation_fraction = {v} must lie strictly between 0 and 1"
                )));
            }
        }
        let t = self.evaluate.threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Config(format!("evaluate.threshold = {t} must lie in (0, 1)")));
        }
        if self.explain.background_size == 0 {
            return Err(CliError::Config("explain.background_size must be positive".into()));
        }
        Ok(())
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            dropped_attributes: self.data.drop_attributes.clone(),
        }
    }

    /// The effective configuration as TOML, as embedded in manifests.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

impl Settings {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Settings, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Config::parse(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.apply(overrides);
        config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Settings { config, base_dir })
    }

    pub fn from_config(mut config: Config, base_dir: impl Into<PathBuf>) -> Result<Settings, CliError> {
        config.apply(&Overrides::default());
        config.validate()?;
        Ok(Settings {
            config,
            base_dir: base_dir.into(),
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// `path` relative to the configuration directory when it lies below
    /// it, for recording in manifests.
    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.base_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output.dir)
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output_dir().join(name)
    }
}
