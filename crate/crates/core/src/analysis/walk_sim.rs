//! Monte Carlo counterparts of the analytic walk quantities.

use rand::Rng;
use serde::Serialize;

use super::WalkSpec;
use crate::engine::episode_rng;
use crate::model::{update_on_toss, CoinState, Outcome, ProblemParams};

/// Safety cap on the length of a single simulated walk.
pub const MAX_WALK_STEPS: u64 = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WalkRun {
    /// Absorbed at the upper barrier.
    pub upper: bool,
    pub steps: u64,
}

/// Runs `walk` from 0 until it reaches `≤ −L` or `≥ W`.
pub fn simulate_walk<R: Rng + ?Sized>(walk: &WalkSpec, rng: &mut R) -> WalkRun {
    let (mut ups, mut downs) = (0u64, 0u64);
    loop {
        if rng.gen_bool(walk.up_prob) {
            ups += 1;
        } else {
            downs += 1;
        }
        // Positions from integer counts keep lattice hits exact.
        let x = ups as f64 * walk.up_step - downs as f64 * walk.down_step;
        let steps = ups + downs;
        if x >= walk.upper_barrier {
            return WalkRun { upper: true, steps };
        }
        if x <= -walk.lower_barrier || steps >= MAX_WALK_STEPS {
            return WalkRun { upper: false, steps };
        }
    }
}

/// Runs a coin's log-likelihood walk until it drops below zero or reaches `B`.
///
/// With `shifted` the walk starts one heads up at `Δ_H` (the forced first step
/// is not counted), otherwise at zero.
pub fn simulate_restart_walk<R: Rng + ?Sized>(
    params: &ProblemParams,
    heads_prob: f64,
    shifted: bool,
    rng: &mut R,
) -> WalkRun {
    let mut coin = CoinState::fresh();
    if shifted {
        coin = update_on_toss(coin, Outcome::Heads, params);
    }
    let start = coin.tosses();
    let b = params.boundary_b();
    loop {
        let outcome = if rng.gen_bool(heads_prob) { Outcome::Heads } else { Outcome::Tails };
        coin = update_on_toss(coin, outcome, params);
        let x = coin.recompute(params);
        let steps = coin.tosses() - start;
        if x >= b {
            return WalkRun { upper: true, steps };
        }
        if x < 0.0 || steps >= MAX_WALK_STEPS {
            return WalkRun { upper: false, steps };
        }
    }
}

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

impl Estimate {
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let xs: Vec<f64> = samples.into_iter().collect();
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        Self { mean, se: (var / n as f64).sqrt(), n: n as u64 }
    }
}

/// Absorption statistics of a walk estimated by simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WalkEstimates {
    pub absorb_upper: Estimate,
    pub steps: Estimate,
}

pub fn estimate_walk(walk: &WalkSpec, runs: u64, seed: u64) -> WalkEstimates {
    let mut rng = episode_rng(seed, 0);
    let samples: Vec<WalkRun> = (0..runs).map(|_| simulate_walk(walk, &mut rng)).collect();
    WalkEstimates {
        absorb_upper: Estimate::from_samples(samples.iter().map(|r| r.upper as u8 as f64)),
        steps: Estimate::from_samples(samples.iter().map(|r| r.steps as f64)),
    }
}

/// Simulated `π`, `C`, `D` (and the split `D₀`, `D₁` of `D` by absorption
/// side) for the restart walk of a single coin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RestartEstimates {
    /// Probability that a heavy coin reaches `B`.
    pub pi: Estimate,
    /// Tosses spent on a light coin.
    pub c: Estimate,
    /// Tosses spent on a heavy coin.
    pub d: Estimate,
    /// Tosses spent on a heavy coin that is abandoned below zero.
    pub d0: Estimate,
    /// Tosses spent on a heavy coin that reaches `B`.
    pub d1: Estimate,
}

impl RestartEstimates {
    /// `D̂/π̂`.
    pub fn d_over_pi(&self) -> f64 {
        self.d.mean / self.pi.mean
    }
}

/// Simulates `runs` heavy and `runs` light restart walks.
pub fn estimate_restart_walks(params: &ProblemParams, runs: u64, shifted: bool, seed: u64) -> RestartEstimates {
    let heavy_p = params.p() + params.epsilon();
    let light_p = params.p() - params.epsilon();
    let mut heavy_rng = episode_rng(seed, 0);
    let mut light_rng = episode_rng(seed, 1);
    let heavy: Vec<WalkRun> = (0..runs)
        .map(|_| simulate_restart_walk(params, heavy_p, shifted, &mut heavy_rng))
        .collect();
    let light: Vec<WalkRun> = (0..runs)
        .map(|_| simulate_restart_walk(params, light_p, shifted, &mut light_rng))
        .collect();
    RestartEstimates {
        pi: Estimate::from_samples(heavy.iter().map(|r| r.upper as u8 as f64)),
        c: Estimate::from_samples(light.iter().map(|r| r.steps as f64)),
        d: Estimate::from_samples(heavy.iter().map(|r| r.steps as f64)),
        d0: Estimate::from_samples(heavy.iter().filter(|r| !r.upper).map(|r| r.steps as f64)),
        d1: Estimate::from_samples(heavy.iter().filter(|r| r.upper).map(|r| r.steps as f64)),
    }
}
