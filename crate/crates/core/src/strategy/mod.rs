//! Client strategies and their update rules.
//!
//! | kind            | on success at `r`                         | on denial at `r`                     |
//! |-----------------|-------------------------------------------|--------------------------------------|
//! | `UniformRandom` | nothing                                   | nothing                              |
//! | `Strategy1`     | pin to `r` forever                        | nothing                              |
//! | `Strategy2A(s)` | `p_r += min(s, 1 - p_r)`, others shrink   | `p_r -= min(s, p_r)`, others grow    |
//! | `Strategy2B(f)` | `p_r += f (1 - p_r)`, others shrink       | `p_r -= f p_r`, others grow          |
//! | `Polya(m)`      | `count_r += 1`                            | nothing                              |
//!
//! In 2A/2B the other entries move by a common factor. When a denied client
//! had `p_r = 1` there is nothing to scale, so the released mass is split
//! evenly over the other `N - 1` servers.

mod polya;
mod row;

use serde::{Deserialize, Serialize};

pub use polya::{polya_multiplier_k, PolyaState};

use crate::error::{Error, Result};
use crate::model::{validate_row, StrategyMatrix};
use crate::rng::RngStream;
use row::Row;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    UniformRandom,
    Strategy1,
    Strategy2A { step: f64 },
    Strategy2B { fraction: f64 },
    Polya { multiplier: f64 },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::UniformRandom => "uniform",
            StrategyKind::Strategy1 => "strategy1",
            StrategyKind::Strategy2A { .. } => "strategy2a",
            StrategyKind::Strategy2B { .. } => "strategy2b",
            StrategyKind::Polya { .. } => "polya",
        }
    }

    /// Parameter checks for a population of `n` clients.
    ///
    /// `Polya` accepts `m = n` as the `k = inf` limit, in which a client
    /// behaves like `Strategy1` after its first success.
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            StrategyKind::UniformRandom | StrategyKind::Strategy1 => Ok(()),
            StrategyKind::Strategy2A { step } => {
                if !(step > 0.0 && step < 1.0) {
                    return Err(Error::param("s", step, "step must lie in (0, 1)"));
                }
                require_redistribution(n)
            }
            StrategyKind::Strategy2B { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::param("f", fraction, "fraction must lie in (0, 1]"));
                }
                require_redistribution(n)
            }
            StrategyKind::Polya { multiplier } => {
                if !(multiplier >= 0.0 && multiplier <= n as f64) {
                    return Err(Error::param(
                        "m",
                        multiplier,
                        format!("multiplier must lie in [0, N = {n}]"),
                    ));
                }
                Ok(())
            }
        }
    }
}

fn require_redistribution(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidSize(n));
    }
    Ok(())
}

/// All-uniform strategy matrix for `n` clients and `n` servers.
pub fn init_uniform(n: usize) -> Result<StrategyMatrix> {
    if n == 0 {
        return Err(Error::InvalidSize(0));
    }
    StrategyMatrix::from_rows(vec![vec![1.0 / n as f64; n]; n])
}

/// One client's strategy and learning state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    n: usize,
    kind: StrategyKind,
    row: Row,
    pinned: Option<usize>,
    polya: Option<PolyaState>,
}

impl ClientState {
    /// Fresh client with the uniform `1/n` row.
    pub fn new(kind: StrategyKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(0));
        }
        kind.validate(n)?;
        let polya = match kind {
            StrategyKind::Polya { multiplier } => Some(PolyaState::with_multiplier(n, multiplier)?),
            _ => None,
        };
        Ok(Self {
            n,
            kind,
            row: Row::Uniform,
            pinned: None,
            polya,
        })
    }

    /// Client starting from an arbitrary row. Urn clients derive their row
    /// from counts; build those with [`ClientState::from_polya`].
    pub fn with_row(kind: StrategyKind, row: Vec<f64>) -> Result<Self> {
        let n = row.len();
        if n == 0 {
            return Err(Error::InvalidSize(0));
        }
        if let StrategyKind::Polya { .. } = kind {
            return Err(Error::KindMismatch {
                expected: "a row-based strategy",
                found: kind.name(),
            });
        }
        kind.validate(n)?;
        validate_row(0, &row)?;
        Ok(Self {
            n,
            kind,
            row: Row::from_probabilities(&row),
            pinned: None,
            polya: None,
        })
    }

    pub fn from_polya(state: PolyaState) -> Self {
        Self {
            n: state.n(),
            kind: StrategyKind::Polya {
                multiplier: state.multiplier(),
            },
            row: Row::Uniform,
            pinned: None,
            polya: Some(state),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn pinned(&self) -> Option<usize> {
        self.pinned
    }

    pub fn polya(&self) -> Option<&PolyaState> {
        self.polya.as_ref()
    }

    pub fn probability(&self, server: usize) -> f64 {
        match &self.polya {
            Some(p) => p.probability(server),
            None => self.row.probability(self.n, server),
        }
    }

    pub fn max_probability(&self) -> f64 {
        match &self.polya {
            Some(p) => p.max_probability(),
            None => self.row.max_probability(self.n),
        }
    }

    /// The effective probability row.
    pub fn row(&self) -> Vec<f64> {
        match &self.polya {
            Some(p) => p.row(),
            None => self.row.to_vec(self.n),
        }
    }

    /// Draws a server with exactly the law of [`ClientState::row`].
    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        match &self.polya {
            Some(p) => p.sample(rng),
            None => self.row.sample(self.n, rng),
        }
    }

    /// Applies this client's own update rule to the outcome of its request.
    pub fn update(&mut self, server: usize, fulfilled: bool) -> Result<()> {
        match self.kind {
            StrategyKind::UniformRandom => self.check_server(server),
            StrategyKind::Strategy1 => update_strategy1(self, server, fulfilled),
            StrategyKind::Strategy2A { step } => update_strategy2a(self, server, fulfilled, step),
            StrategyKind::Strategy2B { fraction } => {
                update_strategy2b(self, server, fulfilled, fraction)
            }
            StrategyKind::Polya { .. } => update_polya(self, server, fulfilled),
        }
    }

    fn check_server(&self, server: usize) -> Result<()> {
        if server >= self.n {
            return Err(Error::ServerOutOfRange { server, n: self.n });
        }
        Ok(())
    }

    fn expect_kind(&self, expected: &'static str) -> Result<()> {
        if self.kind.name() != expected {
            return Err(Error::KindMismatch {
                expected,
                found: self.kind.name(),
            });
        }
        Ok(())
    }
}

/// Success pins the client to `server`; denial leaves it untouched.
pub fn update_strategy1(state: &mut ClientState, server: usize, fulfilled: bool) -> Result<()> {
    state.expect_kind("strategy1")?;
    state.check_server(server)?;
    if !fulfilled {
        return Ok(());
    }
    match state.pinned {
        Some(at) if at != server => Err(Error::Inconsistent(format!(
            "client pinned to server {at} was served by server {server}"
        ))),
        Some(_) => Ok(()),
        None => {
            state.pinned = Some(server);
            state.row = Row::OneHot(server);
            Ok(())
        }
    }
}

/// Additive step `s`, clipped so the requested entry stays in `[0, 1]`.
pub fn update_strategy2a(
    state: &mut ClientState,
    server: usize,
    fulfilled: bool,
    step: f64,
) -> Result<()> {
    state.expect_kind("strategy2a")?;
    state.check_server(server)?;
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::param("s", step, "step must lie in (0, 1)"));
    }
    shift(state, server, fulfilled, |p, rest| {
        if fulfilled {
            clamp_step(step, rest)
        } else {
            clamp_step(step, p)
        }
    })
}

/// Relative slack within which a step counts as reaching its bound.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// `min(step, bound)`, treating a step that matches the bound up to rounding
/// as exactly the bound. Otherwise a clamp meant to land on 0 or 1 can leave
/// an ulp-sized residue, and the next denial takes the proportional branch
/// instead of the even spread reserved for `p = 1`.
fn clamp_step(step: f64, bound: f64) -> f64 {
    if step >= bound * (1.0 - CLAMP_TOLERANCE) {
        bound
    } else {
        step
    }
}

/// Multiplicative step: a fraction `f` of the gap to 1 on success, of the
/// current value on denial.
pub fn update_strategy2b(
    state: &mut ClientState,
    server: usize,
    fulfilled: bool,
    fraction: f64,
) -> Result<()> {
    state.expect_kind("strategy2b")?;
    state.check_server(server)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param("f", fraction, "fraction must lie in (0, 1]"));
    }
    shift(state, server, fulfilled, |p, rest| {
        if fulfilled {
            fraction * rest
        } else {
            fraction * p
        }
    })
}

/// Shared 2A/2B mechanics. `amount(p_r, 1 - p_r)` is the increase on
/// success or the decrease on denial.
fn shift(
    state: &mut ClientState,
    server: usize,
    fulfilled: bool,
    amount: impl Fn(f64, f64) -> f64,
) -> Result<()> {
    let n = state.n;
    let (p, rest) = state.row.split_at(n, server);
    let delta = amount(p, rest);
    if fulfilled {
        if rest <= 0.0 {
            return Ok(());
        }
        let delta = delta.min(rest);
        state.row.set_and_rescale(n, server, p + delta, rest - delta);
    } else {
        let theta = delta.min(p);
        if theta <= 0.0 {
            return Ok(());
        }
        let target = (p - theta).max(0.0);
        if rest <= 0.0 {
            if n < 2 {
                return Err(Error::InvalidSize(n));
            }
            state.row.set_and_spread(n, server, target);
        } else {
            state.row.set_and_rescale(n, server, target, rest + theta);
        }
    }
    Ok(())
}

/// Success adds one to the server's count; denial changes nothing.
pub fn update_polya(state: &mut ClientState, server: usize, fulfilled: bool) -> Result<()> {
    state.expect_kind("polya")?;
    state.check_server(server)?;
    if fulfilled {
        state
            .polya
            .as_mut()
            .ok_or_else(|| Error::Inconsistent("urn client without urn state".into()))?
            .record_success(server)?;
    }
    Ok(())
}
