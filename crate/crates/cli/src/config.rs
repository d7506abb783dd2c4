//! Experiment configuration files.
//!
//! TOML, UTF-8, `#` comments. Top-level keys describe the run; each
//! `[[group]]` stanza adds one population group:
//!
//! ```toml
//! n = 1000            # servers = clients
//! horizon = 5000      # slices per run
//! seed = 42
//! replications = 10   # optional, default 1
//! stability_threshold = 0.99  # optional
//! record_every = 1    # optional
//! shuffle_groups = false      # optional
//!
//! [[group]]
//! label = "learners"
//! size = 750
//! kind = "strategy2a" # uniform | strategy1 | strategy2a | strategy2b | polya
//! s = 0.01            # step for strategy2a; f for strategy2b; m for polya
//!
//! [[group]]
//! label = "random"
//! size = 250
//! kind = "uniform"
//! ```

use std::collections::HashSet;

use kpr_core::model::DEFAULT_STABILITY_THRESHOLD;
use kpr_core::{ExperimentConfig, PopulationGroup, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: usize,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "default_threshold")]
    pub stability_threshold: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub shuffle_groups: bool,
    #[serde(default)]
    pub group: Vec<GroupSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub label: String,
    pub size: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

fn one() -> usize {
    1
}

fn default_threshold() -> f64 {
    DEFAULT_STABILITY_THRESHOLD
}

impl GroupSpec {
    fn strategy(&self, index: usize) -> Result<StrategyKind, CliError> {
        let field = |name: &str| format!("group[{index}].{name}");
        let given = [("s", self.s), ("f", self.f), ("m", self.m)];
        let (kind, wanted) = match self.kind.as_str() {
            "uniform" | "random" => (StrategyKind::UniformRandom, None),
            "strategy1" => (StrategyKind::Strategy1, None),
            "strategy2a" => (
                StrategyKind::Strategy2A {
                    step: self.s.ok_or_else(|| CliError::config(field("s"), "strategy2a needs a step `s`"))?,
                },
                Some("s"),
            ),
            "strategy2b" => (
                StrategyKind::Strategy2B {
                    fraction: self.f.ok_or_else(|| CliError::config(field("f"), "strategy2b needs a fraction `f`"))?,
                },
                Some("f"),
            ),
            "polya" => (
                StrategyKind::Polya {
                    multiplier: self.m.ok_or_else(|| CliError::config(field("m"), "polya needs a multiplier `m`"))?,
                },
                Some("m"),
            ),
            other => {
                return Err(CliError::config(
                    field("kind"),
                    format!(
                        "unknown kind `{other}` (expected uniform, strategy1, strategy2a, strategy2b or polya)"
                    ),
                ))
            }
        };
        for (name, value) in given {
            if value.is_some() && wanted != Some(name) {
                return Err(CliError::config(
                    field(name),
                    format!("`{name}` does not apply to kind `{}`", self.kind),
                ));
            }
        }
        Ok(kind)
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            field: "config".into(),
            reason: e.to_string().trim().to_string(),
        })
    }

    /// Converts to a validated experiment description.
    pub fn to_experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut labels = HashSet::new();
        let mut groups = Vec::with_capacity(self.group.len());
        for (i, g) in self.group.iter().enumerate() {
            let label = g.label.trim();
            if label.is_empty() {
                return Err(CliError::config(format!("group[{i}].label"), "label must not be empty"));
            }
            if matches!(label, "t" | "param" | "utilization" | "stability") || !labels.insert(label) {
                return Err(CliError::config(
                    format!("group[{i}].label"),
                    format!("label `{label}` is reserved or already used"),
                ));
            }
            groups.push(PopulationGroup::new(label, g.size, g.strategy(i)?));
        }
        let cfg = ExperimentConfig {
            n: self.n,
            horizon: self.horizon,
            groups,
            seed: self.seed,
            replications: self.replications,
            stability_threshold: self.stability_threshold,
            record_every: self.record_every,
            shuffle_groups: self.shuffle_groups,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_config(text: &str, seed_override: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut file = FileConfig::parse(text)?;
    if let Some(seed) = seed_override {
        file.seed = seed;
    }
    file.to_experiment()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIXED: &str = r#"
        # heterogeneous population
        n = 10
        horizon = 5
        seed = 3
        replications = 2

        [[group]]
        label = "learners"
        size = 6
        kind = "strategy2b"
        f = 0.1

        [[group]]
        label = "random"
        size = 4
        kind = "uniform"
    "#;

    #[test]
    fn parses_groups_and_defaults() {
        let cfg = load_config(MIXED, None).unwrap();
        assert_eq!(cfg.groups.len(), 2);
        assert_eq!(cfg.groups[0].kind, StrategyKind::Strategy2B { fraction: 0.1 });
        assert_eq!(cfg.stability_threshold, 0.99);
        assert_eq!(cfg.record_every, 1);
        assert_eq!(load_config(MIXED, Some(77)).unwrap().seed, 77);
    }

    fn field_of(err: CliError) -> String {
        match err {
            CliError::Config { field, .. } => field,
            CliError::Core(kpr_core::Error::Config { field, .. }) => field,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let short = MIXED.replace("size = 4", "size = 3");
        assert_eq!(field_of(load_config(&short, None).unwrap_err()), "groups");
        let missing = MIXED.replace("f = 0.1", "");
        assert_eq!(field_of(load_config(&missing, None).unwrap_err()), "group[0].f");
        let stray = MIXED.replace("kind = \"uniform\"", "kind = \"uniform\"\nm = 2.0");
        assert_eq!(field_of(load_config(&stray, None).unwrap_err()), "group[1].m");
        let unknown = MIXED.replace("kind = \"uniform\"", "kind = \"greedy\"");
        assert_eq!(field_of(load_config(&unknown, None).unwrap_err()), "group[1].kind");
        let bad_f = MIXED.replace("f = 0.1", "f = 1.5");
        assert!(field_of(load_config(&bad_f, None).unwrap_err()).starts_with("group[0]"));
        let dup = MIXED.replace("label = \"random\"", "label = \"learners\"");
        assert_eq!(field_of(load_config(&dup, None).unwrap_err()), "group[1].label");
        let typo = MIXED.replace("horizon", "horizn");
        let err = load_config(&typo, None).unwrap_err().to_string();
        assert!(err.contains("horizn") || err.contains("horizon"), "{err}");
    }
}
