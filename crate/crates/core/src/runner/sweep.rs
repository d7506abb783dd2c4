use serde::{Deserialize, Serialize};

use super::{run_replications, ExperimentConfig};
use crate::error::{Error, Result};
use crate::strategy::StrategyKind;

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Size of the first of exactly two groups; the second takes the rest.
    GroupSplit,
    /// Step `s` of every Strategy 2A group.
    Step,
    /// Fraction `f` of every Strategy 2B group.
    Fraction,
    /// Multiplier `m` of every Polya group.
    Multiplier,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::GroupSplit => "group_split",
            SweepParameter::Step => "step",
            SweepParameter::Fraction => "fraction",
            SweepParameter::Multiplier => "multiplier",
        }
    }

    fn apply(&self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParameter::GroupSplit => {
                if cfg.groups.len() != 2 {
                    return Err(Error::config(
                        "groups",
                        "a group-split sweep needs exactly two groups",
                    ));
                }
                if !(value >= 0.0 && value.fract() == 0.0 && value <= cfg.n as f64) {
                    return Err(Error::param(
                        "group_split",
                        value,
                        "must be an integer in 0..=n",
                    ));
                }
                cfg.groups[0].size = value as usize;
                cfg.groups[1].size = cfg.n - value as usize;
            }
            _ => {
                let mut touched = false;
                for g in &mut cfg.groups {
                    match (self, &mut g.kind) {
                        (SweepParameter::Step, StrategyKind::Strategy2A { step }) => *step = value,
                        (SweepParameter::Fraction, StrategyKind::Strategy2B { fraction }) => {
                            *fraction = value
                        }
                        (SweepParameter::Multiplier, StrategyKind::Polya { multiplier }) => {
                            *multiplier = value
                        }
                        _ => continue,
                    }
                    touched = true;
                }
                if !touched {
                    return Err(Error::config(
                        "sweep",
                        format!("no group has a `{}` parameter", self.name()),
                    ));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub utilization: f64,
    pub stability: f64,
    pub group_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub group_labels: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Steady-state metrics of `base` for each value of `parameter`.
pub fn sweep(base: &ExperimentConfig, parameter: SweepParameter, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    let configs = values
        .iter()
        .map(|&v| parameter.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (&value, cfg) in values.iter().zip(&configs) {
        let ss = run_replications(cfg)?.steady_state();
        rows.push(SweepRow {
            value,
            utilization: ss.utilization,
            stability: ss.stability,
            group_rates: ss.group_rates,
        });
    }
    Ok(SweepTable {
        parameter,
        group_labels: base.groups.iter().map(|g| g.label.clone()).collect(),
        rows,
    })
}
