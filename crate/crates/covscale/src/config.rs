//! Flat key=value experiment configuration: one text file, typed keys,
//! unknown keys rejected, later assignments win. `snapshot()` serializes
//! every key back out in a fixed order so a run directory always carries a
//! complete, reparseable record of what it ran with.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::StandardizeMode;
use crate::error::{Error, Result};
use crate::interpret::SaliencyTarget;
use crate::kernel::KernelSpec;
use crate::model::TrainConfig;
use crate::synth::SynthSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// The covariance-scale network.
    Ours,
    /// Linear softmax classifier.
    Mlp1,
    /// Two-layer MLP reduced to our parameter budget.
    Mlp2R,
    /// Two-layer MLP with input-width hidden layer.
    Mlp2I,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelKind> {
        match s {
            "ours" => Ok(ModelKind::Ours),
            "mlp1" => Ok(ModelKind::Mlp1),
            "mlp2_r" => Ok(ModelKind::Mlp2R),
            "mlp2_i" => Ok(ModelKind::Mlp2I),
            other => Err(Error::InvalidConfig(format!(
                "unknown model '{other}' (expected ours, mlp1, mlp2_r, or mlp2_i)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ours => "ours",
            ModelKind::Mlp1 => "mlp1",
            ModelKind::Mlp2R => "mlp2_r",
            ModelKind::Mlp2I => "mlp2_i",
        })
    }
}

/// Everything a CLI run needs. Kernel knots/exponents are stored raw here
/// and compiled into `train.kernel` by [`ExperimentConfig::resolve`] so key
/// order in the file cannot matter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub kernel_params: (f64, f64, f64, f64),
    pub folds: usize,
    pub standardize: StandardizeMode,
    pub model: ModelKind,
    pub j_list: Vec<usize>,
    pub lr_list: Vec<f64>,
    /// Test-accuracy threshold for convergence-epoch reporting.
    pub threshold: f64,
    pub saliency_target: SaliencyTarget,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            synth: SynthSpec::default(),
            kernel_params: (2.0, 2.0, 1.0, 2.0),
            folds: 5,
            standardize: StandardizeMode::ZScore,
            model: ModelKind::Ours,
            j_list: vec![2, 4, 8, 16, 32, 64],
            lr_list: vec![0.01],
            threshold: 0.9,
            saliency_target: SaliencyTarget::Probability,
        }
    }
}

fn parse_as<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| {
        Error::InvalidConfig(format!("key '{key}': cannot parse '{value}' ({e})"))
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| parse_as(key, item.trim()))
        .collect()
}

fn join_list<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Set one typed key. Unknown keys are an error, not a warning: a typo
    /// must not silently run the defaults.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => {
                self.train.seed = parse_as(key, value)?;
                self.synth.seed = self.train.seed;
            }
            "epochs" => self.train.epochs = parse_as(key, value)?,
            "j" => self.train.j = parse_as(key, value)?,
            "lr_weights" => self.train.lr_weights = parse_as(key, value)?,
            "lr_scales" => self.train.lr_scales = parse_as(key, value)?,
            "weight_decay" => self.train.weight_decay = parse_as(key, value)?,
            "activation" => self.train.activation = value.parse()?,
            "freeze_scales" => self.train.freeze_scales = parse_as(key, value)?,
            "oversample" => self.train.oversample = parse_as(key, value)?,
            "neighbors" => self.train.neighbors = parse_as(key, value)?,
            "balance" => self.train.balance = parse_as(key, value)?,
            "scale_init_low" => self.train.scale_init.0 = parse_as(key, value)?,
            "scale_init_high" => self.train.scale_init.1 = parse_as(key, value)?,
            "normalize_eigenvalues" => self.train.normalize_eigenvalues = parse_as(key, value)?,
            "kernel_alpha" => self.kernel_params.0 = parse_as(key, value)?,
            "kernel_beta" => self.kernel_params.1 = parse_as(key, value)?,
            "kernel_x1" => self.kernel_params.2 = parse_as(key, value)?,
            "kernel_x2" => self.kernel_params.3 = parse_as(key, value)?,
            "standardize" => {
                self.standardize = match value {
                    "zscore" => StandardizeMode::ZScore,
                    "center" => StandardizeMode::CenterOnly,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "key 'standardize': unknown mode '{other}' (expected zscore or center)"
                        )))
                    }
                }
            }
            "folds" => self.folds = parse_as(key, value)?,
            "model" => self.model = value.parse()?,
            "j_list" => self.j_list = parse_list(key, value)?,
            "lr_list" => self.lr_list = parse_list(key, value)?,
            "threshold" => self.threshold = parse_as(key, value)?,
            "saliency_target" => {
                self.saliency_target = match value {
                    "probability" => SaliencyTarget::Probability,
                    "logit" => SaliencyTarget::Logit,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "key 'saliency_target': unknown target '{other}' \
                             (expected probability or logit)"
                        )))
                    }
                }
            }
            "synth_p" => self.synth.p = parse_as(key, value)?,
            "synth_n" => self.synth.n = parse_as(key, value)?,
            "synth_classes" => self.synth.c = parse_as(key, value)?,
            "synth_informative" => self.synth.informative_components = parse_as(key, value)?,
            "synth_strength" => self.synth.signal_strength = parse_as(key, value)?,
            "synth_noise" => self.synth.noise_std = parse_as(key, value)?,
            "synth_priors" => self.synth.priors = parse_list(key, value)?,
            other => return Err(Error::UnknownConfigKey(other.to_string())),
        }
        Ok(())
    }

    /// Compile raw kernel parameters into the train config and validate the
    /// final state. Call once after all keys are applied.
    pub fn resolve(&mut self) -> Result<()> {
        let (alpha, beta, x1, x2) = self.kernel_params;
        self.train.kernel = KernelSpec::new(alpha, beta, x1, x2)?;
        self.train.validate()?;
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "folds {} must be >= 2",
                self.folds
            )));
        }
        if self.j_list.is_empty() || self.j_list.contains(&0) {
            return Err(Error::InvalidConfig("j_list needs positive entries".into()));
        }
        if self.lr_list.is_empty() || self.lr_list.iter().any(|&lr| lr <= 0.0 || lr.is_nan()) {
            return Err(Error::InvalidConfig("lr_list needs positive entries".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Full key=value dump in fixed order; reparsing reproduces this config
    /// exactly (floats use the shortest round-tripping form).
    pub fn snapshot(&self) -> String {
        let standardize = match self.standardize {
            StandardizeMode::ZScore => "zscore",
            StandardizeMode::CenterOnly => "center",
        };
        let saliency = match self.saliency_target {
            SaliencyTarget::Probability => "probability",
            SaliencyTarget::Logit => "logit",
        };
        let mut out = String::new();
        let mut push = |key: &str, value: String| {
            out.push_str(key);
            out.push('=');
            out.push_str(&value);
            out.push('\n');
        };
        push("seed", self.train.seed.to_string());
        push("epochs", self.train.epochs.to_string());
        push("j", self.train.j.to_string());
        push("lr_weights", self.train.lr_weights.to_string());
        push("lr_scales", self.train.lr_scales.to_string());
        push("weight_decay", self.train.weight_decay.to_string());
        push("activation", self.train.activation.to_string());
        push("freeze_scales", self.train.freeze_scales.to_string());
        push("oversample", self.train.oversample.to_string());
        push("neighbors", self.train.neighbors.to_string());
        push("balance", self.train.balance.to_string());
        push("scale_init_low", self.train.scale_init.0.to_string());
        push("scale_init_high", self.train.scale_init.1.to_string());
        push(
            "normalize_eigenvalues",
            self.train.normalize_eigenvalues.to_string(),
        );
        push("kernel_alpha", self.kernel_params.0.to_string());
        push("kernel_beta", self.kernel_params.1.to_string());
        push("kernel_x1", self.kernel_params.2.to_string());
        push("kernel_x2", self.kernel_params.3.to_string());
        push("standardize", standardize.to_string());
        push("folds", self.folds.to_string());
        push("model", self.model.to_string());
        push("j_list", join_list(&self.j_list));
        push("lr_list", join_list(&self.lr_list));
        push("threshold", self.threshold.to_string());
        push("saliency_target", saliency.to_string());
        push("synth_p", self.synth.p.to_string());
        push("synth_n", self.synth.n.to_string());
        push("synth_classes", self.synth.c.to_string());
        push(
            "synth_informative",
            self.synth.informative_components.to_string(),
        );
        push("synth_strength", self.synth.signal_strength.to_string());
        push("synth_noise", self.synth.noise_std.to_string());
        push("synth_priors", join_list(&self.synth.priors));
        out
    }
}

/// Parse `key=value` lines; `#` comments and blank lines are skipped.
/// Returns pairs in file order (duplicates resolved by apply order).
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
            line: index + 1,
            msg: format!("expected key=value, found '{line}'"),
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Defaults, then the file, then the overrides, then resolve.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path)?;
        for (key, value) in parse_config_text(&text)? {
            cfg.apply(&key, &value)?;
        }
    }
    for (key, value) in overrides {
        cfg.apply(key, value)?;
    }
    cfg.resolve()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::BandPassFilter;
    use crate::model::Activation;

    #[test]
    fn parses_comments_whitespace_and_duplicates() {
        let text = "# experiment\n\n epochs = 40 \nseed=7\nepochs=50\n";
        let pairs = parse_config_text(text).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("epochs".to_string(), "40".to_string()),
                ("seed".to_string(), "7".to_string()),
                ("epochs".to_string(), "50".to_string()),
            ]
        );
        let mut cfg = ExperimentConfig::default();
        for (k, v) in &pairs {
            cfg.apply(k, v).unwrap();
        }
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.synth.seed, 7);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = ExperimentConfig::default();
        match cfg.apply("epoch", "40") {
            Err(Error::UnknownConfigKey(key)) => assert_eq!(key, "epoch"),
            other => panic!("expected unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn typed_values_validated() {
        let mut cfg = ExperimentConfig::default();
        assert!(matches!(
            cfg.apply("epochs", "many"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            cfg.apply("activation", "gelu"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(cfg.apply("activation", "tanh").is_ok());
        assert_eq!(cfg.train.activation, Activation::Tanh);
        assert!(cfg.apply("model", "mlp2_r").is_ok());
        assert_eq!(cfg.model, ModelKind::Mlp2R);
    }

    #[test]
    fn malformed_line_reports_position() {
        match parse_config_text("seed=1\nnonsense\n") {
            Err(Error::ConfigParse { line: 2, .. }) => {}
            other => panic!("expected parse error on line 2, got {other:?}"),
        }
    }

    #[test]
    fn kernel_keys_compile_in_any_order() {
        let mut cfg = ExperimentConfig::default();
        // x2 drops below the default x1 first; resolve still succeeds
        cfg.apply("kernel_x2", "0.8").unwrap();
        cfg.apply("kernel_x1", "0.4").unwrap();
        cfg.apply("kernel_alpha", "1.5").unwrap();
        cfg.resolve().unwrap();
        assert!((cfg.train.kernel.eval(0.4) - 1.0).abs() <= 1e-12);
        assert!((cfg.train.kernel.eval(0.8) - 1.0).abs() <= 1e-12);

        let mut bad = ExperimentConfig::default();
        bad.apply("kernel_x2", "0.5").unwrap();
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in [
            ("seed", "11"),
            ("epochs", "123"),
            ("lr_weights", "0.003"),
            ("j_list", "2,4"),
            ("lr_list", "0.001,0.03"),
            ("activation", "tanh"),
            ("freeze_scales", "true"),
            ("standardize", "center"),
            ("model", "mlp2_i"),
            ("synth_priors", "3,1"),
            ("synth_noise", "0.7"),
            ("saliency_target", "logit"),
        ] {
            cfg.apply(k, v).unwrap();
        }
        cfg.resolve().unwrap();
        let snap = cfg.snapshot();
        let mut back = ExperimentConfig::default();
        for (k, v) in parse_config_text(&snap).unwrap() {
            back.apply(&k, &v).unwrap();
        }
        back.resolve().unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.snapshot(), snap);
    }

    #[test]
    fn load_applies_overrides_after_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "epochs=100\nseed=3\n").unwrap();
        let overrides = vec![("epochs".to_string(), "7".to_string())];
        let cfg = load_config(Some(&path), &overrides).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.seed, 3);
        let defaults = load_config(None, &[]).unwrap();
        assert_eq!(defaults, ExperimentConfig::default());
    }

    #[test]
    fn resolve_checks_cross_field_rules() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply("folds", "1").unwrap();
        assert!(cfg.resolve().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.apply("j_list", "").unwrap();
        assert!(cfg.resolve().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.apply("threshold", "1.5").unwrap();
        assert!(cfg.resolve().is_err());
    }
}
