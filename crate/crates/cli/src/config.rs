//! TOML experiment configuration. A config may name a preset; the file's
//! tables are merged over the preset's, key by key.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use modcomp::complementarity::EstimatorConfig;
use modcomp::datagen::GeneratorConfig;
use modcomp::harness::{PhaseConfig, Strategy, StrategyConfig};

use crate::error::{config_err, CliError, Result};
use crate::presets;

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "MODCOMP_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing: Option<MissingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSection {
    /// Modality indices of `S1`.
    #[serde(default = "default_subset")]
    pub subset: Vec<usize>,
    /// Modality widths the critics are sized for; a dataset with other
    /// widths is rejected before training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dims: Option<Vec<usize>>,
    #[serde(flatten)]
    pub config: EstimatorConfig,
}

fn default_subset() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingSection {
    pub strategies: Vec<Strategy>,
    /// Hidden width of every perceptron in the fusion model.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_drop_probs")]
    pub drop_probs: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub phase1: PhaseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase2: Option<PhaseConfig>,
    #[serde(default)]
    pub freeze_encoders_in_phase2: bool,
}

fn default_hidden() -> usize {
    200
}

fn default_drop_probs() -> Vec<f64> {
    vec![0.3]
}

fn default_lambda() -> f64 {
    1.0
}

impl MissingSection {
    pub fn strategy_config(&self, strategy: Strategy, seed: u64) -> StrategyConfig {
        StrategyConfig {
            strategy,
            drop_probs: self.drop_probs.clone(),
            lambda: self.lambda,
            phase1: self.phase1.clone(),
            phase2: self.phase2.clone(),
            freeze_encoders_in_phase2: self.freeze_encoders_in_phase2,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    Sigma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Sigma => "sigma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Pair,
    Subset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Metric summarised against the grid; defaults to `pair` for two
    /// modalities and `subset` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricKind>,
    /// Skip robustness training in sweep cells.
    #[serde(default)]
    pub skip_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub count: usize,
    /// Maximum alphabet size of X and Z; |Y| ranges over 2..=cap.
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_cap() -> usize {
    6
}

/// Recursively overlays `top` on `base`: tables merge key by key, any other
/// value replaces.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    pub fn empty() -> Self {
        ExperimentConfig {
            preset: None,
            out: None,
            generator: None,
            estimator: None,
            missing: None,
            sweep: None,
            bounds: None,
        }
    }

    /// Parses TOML text, resolving `preset_override` (or the text's own
    /// `preset` key) as the base layer.
    pub fn parse(text: &str, preset_override: Option<&str>) -> Result<Self> {
        let top: toml::Value = text.parse::<toml::Table>().map(toml::Value::Table)?;
        let named = preset_override.map(str::to_string).or_else(|| {
            top.get("preset")
                .and_then(toml::Value::as_str)
                .map(str::to_string)
        });
        let mut merged = match &named {
            Some(name) => {
                let base = presets::preset(name)?;
                toml::Value::try_from(&base)
                    .map_err(|e| config_err(format!("preset {name}: {e}")))?
            }
            None => toml::Value::Table(toml::Table::new()),
        };
        merge(&mut merged, top);
        if let (Some(name), toml::Value::Table(t)) = (&named, &mut merged) {
            t.insert("preset".into(), toml::Value::String(name.clone()));
        }
        let cfg: ExperimentConfig = merged.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset_override: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            source: Box::new(e.into()),
        })?;
        Self::parse(&text, preset_override).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            source: Box::new(e),
        })
    }

    /// Config from an optional file and an optional preset name.
    pub fn resolve(path: Option<&Path>, preset: Option<&str>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p, preset),
            None => Self::parse("", preset),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.generator {
            g.validate()
                .map_err(|e| config_err(format!("generator: {e}")))?;
        }
        if let Some(e) = &self.estimator {
            e.config
                .train
                .validate()
                .map_err(|err| config_err(format!("estimator.train: {err}")))?;
            if let Some(t) = &e.config.direct_train {
                t.validate()
                    .map_err(|err| config_err(format!("estimator.direct_train: {err}")))?;
            }
            if e.subset.is_empty() {
                return Err(config_err("estimator.subset must be nonempty"));
            }
        }
        if let Some(m) = &self.missing {
            if m.strategies.is_empty() {
                return Err(config_err("missing.strategies must be nonempty"));
            }
            let mut seen = HashSet::new();
            if let Some(s) = m.strategies.iter().find(|s| !seen.insert(**s)) {
                return Err(config_err(format!(
                    "missing.strategies lists {} twice",
                    s.name()
                )));
            }
            for s in &m.strategies {
                m.strategy_config(*s, 0)
                    .validate(m.drop_probs.len().max(1))
                    .map_err(|e| config_err(format!("missing: {e}")))?;
            }
            if m.hidden == 0 {
                return Err(config_err("missing.hidden must be positive"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(config_err("sweep.values must be nonempty"));
            }
            if s.seeds.is_empty() {
                return Err(config_err("sweep.seeds must be nonempty"));
            }
            let mut seen = HashSet::new();
            if let Some(d) = s.seeds.iter().find(|v| !seen.insert(**v)) {
                return Err(config_err(format!("sweep.seeds repeats {d}")));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(config_err("sweep.values must be finite"));
            }
            if let Some(g) = &self.generator {
                for &v in &s.values {
                    with_param(g, s.param, v, 0)
                        .and_then(|g| g.validate().map_err(Into::into))
                        .map_err(|e| config_err(format!("sweep value {v}: {e}")))?;
                }
            }
        }
        if let Some(b) = &self.bounds {
            if b.cap < 2 {
                return Err(config_err("bounds.cap must be at least 2"));
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<&GeneratorConfig> {
        self.generator
            .as_ref()
            .ok_or_else(|| config_err("missing [generator] section"))
    }

    pub fn estimator(&self) -> Result<&EstimateSection> {
        self.estimator
            .as_ref()
            .ok_or_else(|| config_err("missing [estimator] section"))
    }

    pub fn missing(&self) -> Result<&MissingSection> {
        self.missing
            .as_ref()
            .ok_or_else(|| config_err("missing [missing] section"))
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        self.sweep
            .as_ref()
            .ok_or_else(|| config_err("missing [sweep] section"))
    }

    pub fn bounds(&self) -> Result<&BoundsSection> {
        self.bounds
            .as_ref()
            .ok_or_else(|| config_err("missing [bounds] section"))
    }

    /// Output directory: `--out`, else the config's `out` below the
    /// environment override (or the working directory), else `runs/<name>`.
    pub fn out_dir(&self, cli_out: Option<&Path>, fallback: &str) -> PathBuf {
        if let Some(p) = cli_out {
            return p.to_path_buf();
        }
        let root = std::env::var_os(OUT_ENV).map(PathBuf::from);
        let rel = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(fallback));
        match root {
            Some(r) if rel.is_relative() => r.join(rel),
            _ => rel,
        }
    }

    /// Replaces every seed in the config with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(g) = &mut self.generator {
            set_seed(g, seed);
        }
        if let Some(e) = &mut self.estimator {
            e.config.train.seed = seed;
            if let Some(t) = &mut e.config.direct_train {
                t.seed = seed;
            }
        }
        if let Some(b) = &mut self.bounds {
            b.seed = seed;
        }
        self
    }
}

fn set_seed(g: &mut GeneratorConfig, seed: u64) {
    match g {
        GeneratorConfig::TwoModal(c) => c.seed = seed,
        GeneratorConfig::MultiModal(c) => c.seed = seed,
        GeneratorConfig::Remix(c) => {
            c.seed = seed;
            c.pools.seed = seed;
        }
        GeneratorConfig::Xor(c) => c.seed = seed,
        GeneratorConfig::External { .. } => {}
    }
}

/// The generator with the swept parameter set to `value` and every seed set
/// to `seed`.
pub fn with_param(
    g: &GeneratorConfig,
    param: SweepParam,
    value: f64,
    seed: u64,
) -> Result<GeneratorConfig> {
    let mut g = g.clone();
    match (&mut g, param) {
        (GeneratorConfig::TwoModal(c), SweepParam::Alpha) => c.alpha = value,
        (GeneratorConfig::MultiModal(c), SweepParam::Alpha) => c.alpha = value,
        (GeneratorConfig::Remix(c), SweepParam::Sigma) => c.sigma = value,
        (other, p) => {
            return Err(config_err(format!(
                "cannot sweep {} on this generator ({})",
                p.name(),
                generator_name(other)
            )))
        }
    }
    set_seed(&mut g, seed);
    Ok(g)
}

pub fn generator_name(g: &GeneratorConfig) -> &'static str {
    match g {
        GeneratorConfig::TwoModal(_) => "two_modal",
        GeneratorConfig::MultiModal(_) => "multi_modal",
        GeneratorConfig::Remix(_) => "remix",
        GeneratorConfig::Xor(_) => "xor",
        GeneratorConfig::External { .. } => "external",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_layers_merge_key_by_key() {
        let cfg = ExperimentConfig::parse(
            "preset = \"synthetic-2mod\"\n[generator]\nalpha = 0.5\n",
            None,
        )
        .unwrap();
        match cfg.generator.unwrap() {
            GeneratorConfig::TwoModal(c) => {
                assert_eq!(c.alpha, 0.5);
                assert_eq!((c.d, c.d1, c.d2, c.delta, c.n), (50, 200, 100, 0.25, 5000));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.preset.as_deref(), Some("synthetic-2mod"));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = ExperimentConfig::parse("[generator]\nalpha = 1.5\n", Some("synthetic-2mod"))
            .unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        assert_eq!(err.exit_code(), crate::error::exit::CONFIG);
        let err = ExperimentConfig::parse("[sweep]\nseeds = []\n", Some("synthetic-2mod"))
            .unwrap_err();
        assert!(err.to_string().contains("seeds"), "{err}");
        let err = ExperimentConfig::parse("[missing]\nstrategies = []\n", Some("synthetic-2mod"))
            .unwrap_err();
        assert!(err.to_string().contains("strategies"), "{err}");
        assert!(ExperimentConfig::parse("bogus = 1\n", None).is_err());
        assert!(ExperimentConfig::parse("", Some("no-such-preset")).is_err());
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let cfg = ExperimentConfig::parse("", Some("synthetic-2mod"))
            .unwrap()
            .with_seed(9);
        assert_eq!(cfg.generator.as_ref().unwrap().seed(), Some(9));
        assert_eq!(cfg.estimator.unwrap().config.train.seed, 9);
    }
}
