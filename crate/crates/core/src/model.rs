//! Bayesian coin model: parameters, likelihood updates, posterior and the
//! stopping boundary.
//!
//! Every coin is heavy (heads probability `p + ε`) with prior probability `α`
//! and light (heads probability `p − ε`) otherwise. A coin's history is summarised by
//! its head/tail counts; the log-likelihood ratio `X = h·Δ_H − t·Δ_T` moves by
//! `+Δ_H` on heads and `−Δ_T` on tails.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Tolerance used when checking an incrementally maintained log-likelihood
/// against the value recomputed from integer counts.
pub const LOG_LIKELIHOOD_TOLERANCE: f64 = 1e-9;

/// Outcome of a single toss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Heads,
    Tails,
}

/// The hidden type of a coin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoinNature {
    /// Heads probability `p + ε`.
    Heavy,
    /// Heads probability `p − ε`.
    Light,
}

impl CoinNature {
    pub fn heads_prob(self, params: &ProblemParams) -> f64 {
        match self {
            CoinNature::Heavy => params.p() + params.epsilon(),
            CoinNature::Light => params.p() - params.epsilon(),
        }
    }
}

/// Validated model parameters `(p, ε, α, δ)` together with the derived step
/// sizes and stopping boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProblemParams {
    p: f64,
    epsilon: f64,
    alpha: f64,
    delta: f64,
    delta_h: f64,
    delta_t: f64,
    boundary_b: f64,
}

impl ProblemParams {
    /// Validates the raw parameters and precomputes `Δ_H`, `Δ_T` and `B`.
    ///
    /// `p` must lie strictly inside `(ε, 1 − ε)`: at either end one of the
    /// log-likelihood steps is infinite.
    pub fn new(p: f64, epsilon: f64, alpha: f64, delta: f64) -> Result<Self, ParamError> {
        let all = [("p", p), ("epsilon", epsilon), ("alpha", alpha), ("delta", delta)];
        if let Some((name, value)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ParamError::NotFinite { name, value: *value });
        }
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(ParamError::Epsilon(epsilon));
        }
        if p <= epsilon {
            return Err(ParamError::PNotAboveEpsilon { p, epsilon });
        }
        if p >= 1.0 - epsilon {
            return Err(ParamError::PNotBelowOneMinusEpsilon { p, epsilon });
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ParamError::Alpha(alpha));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ParamError::Delta(delta));
        }

        let q = 1.0 - p;
        let delta_h = ((p + epsilon) / (p - epsilon)).ln();
        let delta_t = ((q + epsilon) / (q - epsilon)).ln();
        if !(delta_h.is_finite() && delta_h > 0.0 && delta_t.is_finite() && delta_t > 0.0) {
            return Err(ParamError::DegenerateSteps { delta_h, delta_t });
        }

        Ok(Self {
            p,
            epsilon,
            alpha,
            delta,
            delta_h,
            delta_t,
            boundary_b: stopping_boundary(alpha, delta),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `Δ_H = log((p+ε)/(p−ε))`, the log-likelihood gain of a heads.
    pub fn delta_h(&self) -> f64 {
        self.delta_h
    }

    /// `Δ_T = log((q+ε)/(q−ε))`, the log-likelihood loss of a tails.
    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// `B = log((1−α)(1−δ)/(αδ))`.
    pub fn boundary_b(&self) -> f64 {
        self.boundary_b
    }

    /// Log-likelihood step for a toss outcome.
    pub fn step(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Heads => self.delta_h,
            Outcome::Tails => -self.delta_t,
        }
    }
}

/// Per-coin history and its cached log-likelihood.
///
/// The counts are authoritative; `log_likelihood` is maintained incrementally
/// (with a compensation term for the rounding of each addition) and can be
/// audited with [`CoinState::drift`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CoinState {
    pub heads: u64,
    pub tails: u64,
    pub log_likelihood: f64,
    #[serde(skip)]
    carry: f64,
}

impl CoinState {
    /// A coin that has never been tossed.
    pub fn fresh() -> Self {
        Self::default()
    }

    /// A coin with the given counts and cached log-likelihood. The cache is
    /// taken as given, so callers may place a coin off the count lattice.
    pub fn new(heads: u64, tails: u64, log_likelihood: f64) -> Self {
        Self { heads, tails, log_likelihood, carry: 0.0 }
    }

    /// A coin whose cache is computed from its counts.
    pub fn from_counts(heads: u64, tails: u64, params: &ProblemParams) -> Self {
        let mut c = Self::new(heads, tails, 0.0);
        c.resync(params);
        c
    }

    pub fn tosses(&self) -> u64 {
        self.heads + self.tails
    }

    /// `h·Δ_H − t·Δ_T` evaluated directly from the counts.
    pub fn recompute(&self, params: &ProblemParams) -> f64 {
        self.heads as f64 * params.delta_h() - self.tails as f64 * params.delta_t()
    }

    /// Absolute difference between the cached and recomputed log-likelihood.
    pub fn drift(&self, params: &ProblemParams) -> f64 {
        (self.log_likelihood - self.recompute(params)).abs()
    }

    /// Replaces the cached value with the one recomputed from the counts.
    pub fn resync(&mut self, params: &ProblemParams) {
        self.log_likelihood = self.recompute(params);
        self.carry = 0.0;
    }

    fn add(&mut self, step: f64) {
        // Two-sum: `err` is the exact rounding error of `x + step`.
        let x = self.log_likelihood;
        let sum = x + step;
        let back = sum - x;
        let err = (x - (sum - back)) + (step - back);
        let carry = self.carry + err;
        self.log_likelihood = sum + carry;
        self.carry = carry - (self.log_likelihood - sum);
    }

    pub fn posterior_heavy(&self, params: &ProblemParams) -> f64 {
        posterior_heavy(self.log_likelihood, params.alpha())
    }
}

/// Applies one toss outcome to a coin's history.
pub fn update_on_toss(state: CoinState, outcome: Outcome, params: &ProblemParams) -> CoinState {
    let mut next = state;
    match outcome {
        Outcome::Heads => next.heads += 1,
        Outcome::Tails => next.tails += 1,
    }
    next.add(params.step(outcome));
    next
}

/// Posterior probability that a coin is heavy given its log-likelihood `x`:
/// `αL / (αL + 1 − α)` with `L = e^x`.
pub fn posterior_heavy(x: f64, alpha: f64) -> f64 {
    // Written as a logistic in log space so large |x| neither overflows nor
    // collapses to exactly 0 or 1 prematurely.
    let logit = x + alpha.ln() - (1.0 - alpha).ln();
    if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    }
}

/// `B = log((1−α)(1−δ)/(αδ))`; the posterior reaches `1 − δ` exactly at `x = B`.
pub fn stopping_boundary(alpha: f64, delta: f64) -> f64 {
    ((1.0 - alpha) * (1.0 - delta) / (alpha * delta)).ln()
}

/// Heads probability of a coin whose nature is unknown, conditioned only on
/// its log-likelihood: a posterior mixture of `p + ε` and `p − ε`.
pub fn heads_prob_given_state(x: f64, params: &ProblemParams) -> f64 {
    let w = posterior_heavy(x, params.alpha());
    let heavy = params.p() + params.epsilon();
    let light = params.p() - params.epsilon();
    (w * heavy + (1.0 - w) * light).clamp(light, heavy)
}
