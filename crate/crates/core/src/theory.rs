//! Closed-form predictions used as independent checks on simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_ratio(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::param("lambda", lambda, "ratio must be a non-negative real"));
    }
    Ok(())
}

/// Large-`N` probability that a server receives no request when `lambda * N`
/// clients choose uniformly among `N` servers.
pub fn poisson_idle_probability(lambda: f64) -> Result<f64> {
    check_ratio(lambda)?;
    Ok((-lambda).exp())
}

/// Utilization fraction under uniform random choice: `1 - exp(-lambda)`.
pub fn random_choice_utilization(lambda: f64) -> Result<f64> {
    check_ratio(lambda)?;
    Ok(-(-lambda).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionStep {
    pub t: usize,
    /// Fraction of not-yet-stable clients that land on a fresh server.
    pub g: f64,
    /// Predicted utilization fraction.
    pub f: f64,
    /// Predicted stability fraction.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionTrace {
    /// Clients per server.
    pub lambda: f64,
    pub steps: Vec<RecursionStep>,
}

impl RecursionTrace {
    pub fn at(&self, t: usize) -> Option<&RecursionStep> {
        t.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    pub fn last(&self) -> &RecursionStep {
        self.steps.last().expect("trace has at least one slice")
    }
}

/// Slice-by-slice mean-field prediction for pin-on-first-success clients.
///
/// At `t = 1` everyone chooses uniformly, so `f_1 = theta_1 = 1 - e^-1`.
/// Afterwards only the `1 - theta` unstable clients move:
///
/// ```text
/// g_t     = 1 - exp(-(1 - theta_{t-1}))
/// f_t     = f_{t-1} + (1 - f_{t-1}) g_t
/// theta_t = theta_{t-1} + f_{t-1} g_t / 2 + (1 - f_{t-1}) g_t     (capped at 1)
/// ```
///
/// A newcomer landing on an occupied server wins half of the resulting
/// two-way conflicts; three-way pile-ups are ignored, so from `t = 3` the
/// trace is an approximation.
pub fn strategy1_recursion(horizon: usize) -> Result<RecursionTrace> {
    if horizon == 0 {
        return Err(Error::param("horizon", 0.0, "need at least one slice"));
    }
    let first = random_choice_utilization(1.0)?;
    let mut steps = Vec::with_capacity(horizon);
    steps.push(RecursionStep {
        t: 1,
        g: first,
        f: first,
        theta: first,
    });
    for t in 2..=horizon {
        let prev = steps[t - 2];
        let g = random_choice_utilization(1.0 - prev.theta)?;
        let f = prev.f + (1.0 - prev.f) * g;
        let theta = (prev.theta + prev.f * g / 2.0 + (1.0 - prev.f) * g).min(1.0);
        steps.push(RecursionStep { t, g, f, theta });
    }
    Ok(RecursionTrace { lambda: 1.0, steps })
}

/// Certified band for the limiting utilization of pin-on-first-success clients.
pub fn strategy1_limit_interval() -> (f64, f64) {
    (0.79, 0.81)
}
