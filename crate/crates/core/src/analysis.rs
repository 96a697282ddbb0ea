//! Closed-form bounds.
//!
//! Two families live here: gambler's-ruin style bounds for a two-step walk
//! (`+μ` with probability `u`, `−ν` otherwise, absorbed at `−L` and `W`), and
//! the expected-toss bounds for likelihood tossing and the naive method.

use serde::Serialize;

use crate::error::AnalysisError;
use crate::model::ProblemParams;

pub mod walk_sim;

/// Tolerance on `|φ(ρ₀) − 1|` used when none is supplied.
pub const RHO0_TOLERANCE: f64 = 1e-12;

/// A walk with steps `+up_step` (probability `up_prob`) and `−down_step`,
/// absorbed at `−lower_barrier` and `upper_barrier`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WalkSpec {
    pub up_step: f64,
    pub down_step: f64,
    pub up_prob: f64,
    pub lower_barrier: f64,
    pub upper_barrier: f64,
}

impl WalkSpec {
    pub fn new(
        up_step: f64,
        down_step: f64,
        up_prob: f64,
        lower_barrier: f64,
        upper_barrier: f64,
    ) -> Result<Self, AnalysisError> {
        if !(up_step > 0.0 && up_step.is_finite() && down_step > 0.0 && down_step.is_finite()) {
            return Err(AnalysisError::InvalidWalk("step sizes must be positive and finite"));
        }
        if !(up_prob > 0.0 && up_prob < 1.0) {
            return Err(AnalysisError::InvalidWalk("up_prob must lie in (0, 1)"));
        }
        if !(lower_barrier >= 0.0 && lower_barrier.is_finite()) {
            return Err(AnalysisError::InvalidWalk("lower barrier must be non-negative"));
        }
        if !(upper_barrier > 0.0 && upper_barrier.is_finite()) {
            return Err(AnalysisError::InvalidWalk("upper barrier must be positive"));
        }
        Ok(Self { up_step, down_step, up_prob, lower_barrier, upper_barrier })
    }

    /// Log-likelihood walk of a coin of the given heads probability, started
    /// one heads above zero and absorbed at zero and at `B`.
    pub fn shifted_coin_walk(params: &ProblemParams, heads_prob: f64) -> Result<Self, AnalysisError> {
        Self::new(
            params.delta_h(),
            params.delta_t(),
            heads_prob,
            params.delta_h(),
            params.boundary_b() - params.delta_h(),
        )
    }

    /// `E[X] = u·μ − (1−u)·ν`.
    pub fn drift(&self) -> f64 {
        self.up_prob * self.up_step - (1.0 - self.up_prob) * self.down_step
    }

    /// `L* = L + ν`.
    pub fn lower_star(&self) -> f64 {
        self.lower_barrier + self.down_step
    }

    /// `W* = W + μ`.
    pub fn upper_star(&self) -> f64 {
        self.upper_barrier + self.up_step
    }
}

/// `φ(ρ) = E[ρ^X] = u·ρ^μ + (1−u)·ρ^{−ν}`.
pub fn phi(rho: f64, walk: &WalkSpec) -> Result<f64, AnalysisError> {
    if rho.is_nan() || rho <= 0.0 {
        return Err(AnalysisError::NonPositiveRho(rho));
    }
    if rho == 1.0 {
        return Ok(1.0);
    }
    Ok(walk.up_prob * rho.powf(walk.up_step) + (1.0 - walk.up_prob) * rho.powf(-walk.down_step))
}

/// The root `ρ₀ ≠ 1` of `φ(ρ) = 1`, by bisection.
///
/// With positive drift the root is in `(0, 1)`, with negative drift in
/// `(1, ∞)`. The bracket end away from 1 is found by repeated halving or
/// doubling.
pub fn solve_rho0(walk: &WalkSpec, tol: f64) -> Result<f64, AnalysisError> {
    let drift = walk.drift();
    if drift == 0.0 {
        return Err(AnalysisError::ZeroDrift);
    }
    let g = |r: f64| phi(r, walk).map(|v| v - 1.0);

    // φ − 1 is negative between ρ₀ and 1 and positive beyond ρ₀.
    let (mut inside, mut outside): (f64, f64) = if drift > 0.0 {
        let mut lo = 0.5;
        let mut n = 0;
        while g(lo)? <= 0.0 {
            lo *= 0.5;
            n += 1;
            if n > 2000 || lo == 0.0 {
                return Err(AnalysisError::NoBracket);
            }
        }
        (1.0, lo)
    } else {
        let mut hi = 2.0;
        let mut n = 0;
        while g(hi)? <= 0.0 {
            hi *= 2.0;
            n += 1;
            if n > 2000 || !hi.is_finite() {
                return Err(AnalysisError::NoBracket);
            }
        }
        (1.0, hi)
    };

    // Bisect on the sign of φ − 1; the trivial root at 1 sits on the
    // negative side's far end and is never approached from inside.
    loop {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            return Ok(mid);
        }
        let v = g(mid)?;
        if v.abs() <= tol && (outside - inside).abs() <= 1e-15 * mid {
            return Ok(mid);
        }
        if v < 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
}

/// Minimiser of `φ`: `(ν(1−u)/(μu))^{1/(μ+ν)}`.
pub fn rho_min(walk: &WalkSpec) -> f64 {
    let ratio = walk.down_step * (1.0 - walk.up_prob) / (walk.up_step * walk.up_prob);
    ratio.powf(1.0 / (walk.up_step + walk.down_step))
}

/// Lower bound on the probability of absorption at the upper barrier:
/// `(1 − ρ₀^L) / (1 − ρ₀^{L+W*})`, clamped to `[0, 1]`.
pub fn absorption_prob_lower_bound(walk: &WalkSpec, rho0: f64) -> f64 {
    let num = 1.0 - rho0.powf(walk.lower_barrier);
    let den = 1.0 - rho0.powf(walk.lower_barrier + walk.upper_star());
    if num == 0.0 {
        return 0.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Upper bound on the expected number of steps to absorption.
///
/// Negative drift: `L*/|E[X]|`. Positive drift:
/// `((L + W*)/E[X])·(1 − ρ₀^{L*})/(1 − ρ₀^{L*+W})`, which needs `rho0`.
pub fn expected_steps_bound(walk: &WalkSpec, rho0: Option<f64>) -> Result<f64, AnalysisError> {
    let drift = walk.drift();
    if drift == 0.0 {
        return Err(AnalysisError::ZeroDrift);
    }
    if drift < 0.0 {
        return Ok(walk.lower_star() / drift.abs());
    }
    let rho0 = rho0.ok_or(AnalysisError::MissingRho0)?;
    let l_star = walk.lower_star();
    let ratio = (1.0 - rho0.powf(l_star)) / (1.0 - rho0.powf(l_star + walk.upper_barrier));
    Ok((walk.lower_barrier + walk.upper_star()) / drift * ratio)
}

/// Bounds on the restart walk of a single coin (absorbed below zero or at `B`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AbsorptionBounds {
    /// Lower bound on the probability that a heavy coin reaches `B`.
    pub pi_lower: f64,
    /// Upper bound on `D/π`, `D` being the expected tosses spent on a heavy coin.
    pub d_over_pi_upper: f64,
    /// Upper bound on `C`, the expected tosses spent on a light coin.
    pub c_upper: f64,
}

/// `Δ_H(p+ε) − Δ_T(q−ε)`: drift of a heavy coin's log-likelihood.
pub fn heavy_drift(params: &ProblemParams) -> f64 {
    let (p, q, e) = (params.p(), params.q(), params.epsilon());
    params.delta_h() * (p + e) - params.delta_t() * (q - e)
}

/// `Δ_T(q+ε) − Δ_H(p−ε)`: negated drift of a light coin's log-likelihood.
pub fn light_drift_magnitude(params: &ProblemParams) -> f64 {
    let (p, q, e) = (params.p(), params.q(), params.epsilon());
    params.delta_t() * (q + e) - params.delta_h() * (p - e)
}

/// Absorption bounds for the per-coin restart walk. Requires
/// `B ≥ 2·max(Δ_H, Δ_T)`.
pub fn lemma5_bounds(params: &ProblemParams) -> Result<AbsorptionBounds, AnalysisError> {
    let (dh, dt, b) = (params.delta_h(), params.delta_t(), params.boundary_b());
    let required = 2.0 * dh.max(dt);
    if b < required {
        return Err(AnalysisError::BoundaryTooSmall { b, required });
    }
    let heavy = heavy_drift(params);
    let light = light_drift_magnitude(params);
    let p_plus = params.p() + params.epsilon();
    Ok(AbsorptionBounds {
        pi_lower: heavy / (2.0 * (dh + dt)),
        d_over_pi_upper: (8.0 * b / heavy) * ((dh + dt) / (dh * p_plus)),
        c_upper: 2.0 * (dh + dt) / light,
    })
}

/// `(16/ε²)·((1−α)/α + B)`.
pub fn theorem2_bound(params: &ProblemParams) -> f64 {
    let e = params.epsilon();
    let a = params.alpha();
    16.0 / (e * e) * ((1.0 - a) / a + params.boundary_b())
}

/// The intermediate bound before the calculus simplifications:
/// `(4(Δ_H+Δ_T)/heavy)·(((1−α)/α)·(Δ_H+Δ_T)/light + 2B/(Δ_H(p+ε)))`.
pub fn composite_toss_bound(params: &ProblemParams) -> f64 {
    let (dh, dt, b) = (params.delta_h(), params.delta_t(), params.boundary_b());
    let a = params.alpha();
    let sum = dh + dt;
    let p_plus = params.p() + params.epsilon();
    (4.0 * sum / heavy_drift(params))
        * (((1.0 - a) / a) * (sum / light_drift_magnitude(params)) + 2.0 * b / (dh * p_plus))
}

/// `(1/α)(4/ε²)·ln(1/δ)`, the expected cost of tossing fresh coins a fixed
/// number of times each.
pub fn naive_bound(params: &ProblemParams) -> f64 {
    let e = params.epsilon();
    (1.0 / params.alpha()) * (4.0 / (e * e)) * (1.0 / params.delta()).ln()
}

/// Both sides of the two calculus inequalities at one `(p, ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalculusCheck {
    pub p: f64,
    pub epsilon: f64,
    pub two_over_epsilon: f64,
    pub heavy_ratio: f64,
    pub light_ratio: f64,
    pub delta_h: f64,
    pub epsilon_over_p_minus_epsilon: f64,
}

impl CalculusCheck {
    pub fn evaluate(p: f64, epsilon: f64) -> Self {
        let q = 1.0 - p;
        let dh = ((p + epsilon) / (p - epsilon)).ln();
        let dt = ((q + epsilon) / (q - epsilon)).ln();
        let sum = dh + dt;
        Self {
            p,
            epsilon,
            two_over_epsilon: 2.0 / epsilon,
            heavy_ratio: sum / (dh * (p + epsilon) - dt * (q - epsilon)),
            light_ratio: sum / (dt * (q + epsilon) - dh * (p - epsilon)),
            delta_h: dh,
            epsilon_over_p_minus_epsilon: epsilon / (p - epsilon),
        }
    }

    /// `2/ε ≥ max(heavy_ratio, light_ratio)`.
    pub fn ratio_inequality(&self) -> bool {
        self.two_over_epsilon >= self.heavy_ratio.max(self.light_ratio)
    }

    /// `Δ_H ≥ ε/(p−ε)`.
    pub fn step_inequality(&self) -> bool {
        self.delta_h >= self.epsilon_over_p_minus_epsilon
    }

    /// `Δ_H(p+ε) ≥ ε`; this is all the final bound actually needs from the
    /// heads step, and it holds wherever the model is valid.
    pub fn weak_step_inequality(&self) -> bool {
        self.delta_h * (self.p + self.epsilon) >= self.epsilon
    }

    pub fn holds(&self) -> bool {
        self.ratio_inequality() && self.step_inequality()
    }
}

/// True iff `2/ε ≥ max{…}` and `Δ_H ≥ ε/(p−ε)` both hold at `(p, ε)`.
pub fn calculus_inequalities_check(p: f64, epsilon: f64) -> bool {
    CalculusCheck::evaluate(p, epsilon).holds()
}
