//! Seeded Monte Carlo simulation of whole episodes.
//!
//! Each episode owns a ChaCha8 stream selected by `(master_seed, trial)`, so
//! results do not depend on how trials are scheduled across threads. Summary
//! statistics are built from integer totals and a sorted sample, which makes
//! them bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::StrategyError;
use crate::model::{CoinNature, Outcome, ProblemParams};
use crate::strategy::{StrategyKind, StrategyState};

/// Toss cap applied per episode when none is configured.
pub const DEFAULT_CAP: u64 = 10_000_000;

pub fn sample_nature<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> CoinNature {
    if rng.gen_bool(alpha.clamp(0.0, 1.0)) {
        CoinNature::Heavy
    } else {
        CoinNature::Light
    }
}

pub fn toss<R: Rng + ?Sized>(rng: &mut R, nature: CoinNature, params: &ProblemParams) -> Outcome {
    if rng.gen_bool(nature.heads_prob(params)) {
        Outcome::Heads
    } else {
        Outcome::Tails
    }
}

/// Random stream for one trial.
pub fn episode_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EpisodeResult {
    /// Nature of the accepted coin; `None` when the cap was hit first.
    pub winner_nature: Option<CoinNature>,
    pub tosses: u64,
    pub coins_opened: u64,
    pub correct: bool,
    pub capped: bool,
}

/// Runs one episode to completion, returning the final strategy state too.
///
/// Coin natures are drawn when a coin is first materialised and stay fixed.
pub fn run_episode_with_state<R: Rng + ?Sized>(
    params: &ProblemParams,
    kind: StrategyKind,
    rng: &mut R,
    cap: u64,
) -> Result<(EpisodeResult, StrategyState), StrategyError> {
    let mut state = StrategyState::new(kind, *params)?;
    let mut natures: Vec<CoinNature> = Vec::new();
    let mut tosses = 0u64;

    while state.winner().is_none() && tosses < cap {
        let choice = state.select_next(rng)?;
        let nature = match choice {
            crate::strategy::CoinChoice::Opened(i) => natures[i],
            crate::strategy::CoinChoice::Fresh => {
                let n = sample_nature(rng, params.alpha());
                natures.push(n);
                n
            }
        };
        let outcome = toss(rng, nature, params);
        tosses += 1;
        state.record_outcome(choice, outcome)?;
        // The strategy may open a coin it has not tossed (non-positive boundary).
        while natures.len() < state.opened().len() {
            natures.push(sample_nature(rng, params.alpha()));
        }
    }

    let winner_nature = state.winner().map(|w| natures[w]);
    let result = EpisodeResult {
        winner_nature,
        tosses,
        coins_opened: state.opened().len() as u64,
        correct: winner_nature == Some(CoinNature::Heavy),
        capped: winner_nature.is_none(),
    };
    Ok((result, state))
}

pub fn run_episode<R: Rng + ?Sized>(
    params: &ProblemParams,
    kind: StrategyKind,
    rng: &mut R,
    cap: u64,
) -> Result<EpisodeResult, StrategyError> {
    run_episode_with_state(params, kind, rng, cap).map(|(r, _)| r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TossQuantiles {
    pub min: u64,
    pub p25: u64,
    pub p50: u64,
    pub p75: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub strategy: String,
    pub trials: u64,
    pub seed: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub success_rate_se: f64,
    pub mean_tosses: f64,
    pub mean_tosses_se: f64,
    pub tosses: TossQuantiles,
    pub mean_coins_opened: f64,
    pub capped: u64,
}

impl ExperimentSummary {
    /// Builds the summary from per-episode results. The result does not
    /// depend on the order of `episodes`.
    pub fn from_episodes(strategy: StrategyKind, seed: u64, episodes: &[EpisodeResult]) -> Self {
        let n = episodes.len() as u64;
        let nf = n as f64;
        let successes = episodes.iter().filter(|e| e.correct).count() as u64;
        let total: u128 = episodes.iter().map(|e| e.tosses as u128).sum();
        let total_sq: u128 = episodes.iter().map(|e| (e.tosses as u128).pow(2)).sum();
        let opened: u128 = episodes.iter().map(|e| e.coins_opened as u128).sum();

        let success_rate = successes as f64 / nf;
        let mean = total as f64 / nf;
        // Sample variance from exact integer moments.
        let var = if n > 1 {
            let num = (n as u128 * total_sq).saturating_sub(total * total);
            num as f64 / (nf * (nf - 1.0))
        } else {
            0.0
        };

        let mut sorted: Vec<u64> = episodes.iter().map(|e| e.tosses).collect();
        sorted.sort_unstable();
        let q = |f: f64| -> u64 {
            // Nearest-rank quantile.
            let rank = ((f * nf).ceil() as usize).clamp(1, sorted.len());
            sorted[rank - 1]
        };

        Self {
            strategy: strategy.to_string(),
            trials: n,
            seed,
            successes,
            success_rate,
            success_rate_se: (success_rate * (1.0 - success_rate) / nf).sqrt(),
            mean_tosses: mean,
            mean_tosses_se: (var / nf).sqrt(),
            tosses: TossQuantiles {
                min: sorted[0],
                p25: q(0.25),
                p50: q(0.50),
                p75: q(0.75),
                p90: q(0.90),
                p99: q(0.99),
                max: sorted[sorted.len() - 1],
            },
            mean_coins_opened: opened as f64 / nf,
            capped: episodes.iter().filter(|e| e.capped).count() as u64,
        }
    }

    pub fn capped_fraction(&self) -> f64 {
        self.capped as f64 / self.trials as f64
    }
}

/// A batch of independent episodes under one configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Experiment {
    pub params: ProblemParams,
    pub strategy: StrategyKind,
    pub trials: u64,
    pub master_seed: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub parallelism: usize,
    pub cap: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

impl Experiment {
    pub fn new(params: ProblemParams, strategy: StrategyKind, trials: u64, master_seed: u64) -> Self {
        Self { params, strategy, trials, master_seed, parallelism: 0, cap: DEFAULT_CAP }
    }

    pub fn with_parallelism(mut self, workers: usize) -> Self {
        self.parallelism = workers;
        self
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    /// Runs every trial and returns the per-episode results in trial order.
    pub fn episodes(&self) -> Result<Vec<EpisodeResult>, ExperimentError> {
        if self.trials == 0 {
            return Err(ExperimentError::NoTrials);
        }
        // Surface configuration errors before fanning out.
        StrategyState::new(self.strategy, self.params)?;
        let work = || -> Result<Vec<EpisodeResult>, StrategyError> {
            (0..self.trials)
                .into_par_iter()
                .map(|i| {
                    let mut rng = episode_rng(self.master_seed, i);
                    run_episode(&self.params, self.strategy, &mut rng, self.cap)
                })
                .collect()
        };
        let results = if self.parallelism == 0 {
            work()?
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.parallelism)
                .build()
                .map_err(|e| ExperimentError::Pool(e.to_string()))?
                .install(work)?
        };
        Ok(results)
    }

    pub fn run(&self) -> Result<ExperimentSummary, ExperimentError> {
        let episodes = self.episodes()?;
        Ok(ExperimentSummary::from_episodes(self.strategy, self.master_seed, &episodes))
    }
}

/// Convenience wrapper around [`Experiment::run`].
pub fn run_experiment(
    params: &ProblemParams,
    strategy: StrategyKind,
    trials: u64,
    master_seed: u64,
    parallelism: usize,
) -> Result<ExperimentSummary, ExperimentError> {
    Experiment::new(*params, strategy, trials, master_seed)
        .with_parallelism(parallelism)
        .run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(p: f64, e: f64, a: f64, d: f64) -> ProblemParams {
        ProblemParams::new(p, e, a, d).unwrap()
    }

    #[test]
    fn nature_extremes() {
        let mut rng = episode_rng(1, 0);
        assert!((0..1000).all(|_| sample_nature(&mut rng, 1.0) == CoinNature::Heavy));
        assert!((0..1000).all(|_| sample_nature(&mut rng, 0.0) == CoinNature::Light));
    }

    #[test]
    fn nature_frequency() {
        let mut rng = episode_rng(2, 0);
        let n = 1_000_000;
        let heavy = (0..n).filter(|_| sample_nature(&mut rng, 0.5) == CoinNature::Heavy).count();
        assert!((heavy as f64 / n as f64 - 0.5).abs() <= 0.0016);
    }

    #[test]
    fn toss_frequencies() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let mut rng = episode_rng(3, 0);
        let n = 1_000_000;
        let heavy = (0..n).filter(|_| toss(&mut rng, CoinNature::Heavy, &params) == Outcome::Heads).count();
        let light = (0..n).filter(|_| toss(&mut rng, CoinNature::Light, &params) == Outcome::Heads).count();
        assert!((heavy as f64 / n as f64 - 0.6).abs() <= 0.0015);
        assert!((light as f64 / n as f64 - 0.4).abs() <= 0.0015);
    }

    #[test]
    fn zero_boundary_takes_one_toss() {
        let params = pp(0.5, 0.1, 0.5, 0.5);
        for i in 0..500 {
            let r = run_episode(&params, StrategyKind::LikelihoodToss, &mut episode_rng(9, i), DEFAULT_CAP).unwrap();
            assert_eq!(r.tosses, 1);
            assert!(!r.capped);
        }
    }

    #[test]
    fn tosses_equal_history_total() {
        let params = pp(0.45, 0.1, 0.3, 0.05);
        for kind in [
            StrategyKind::LikelihoodToss,
            StrategyKind::Naive,
            StrategyKind::RoundRobin { pool: 4 },
            StrategyKind::UniformRandom,
        ] {
            for i in 0..50 {
                let (r, s) = run_episode_with_state(&params, kind, &mut episode_rng(4, i), DEFAULT_CAP).unwrap();
                assert_eq!(r.tosses, s.total_tosses(), "{kind}");
                assert!(r.tosses >= 1);
                assert_eq!(r.correct, r.winner_nature == Some(CoinNature::Heavy));
            }
        }
    }

    #[test]
    fn winner_posterior_meets_target() {
        let params = pp(0.4, 0.12, 0.2, 0.05);
        for i in 0..300 {
            let (r, s) = run_episode_with_state(&params, StrategyKind::LikelihoodToss, &mut episode_rng(5, i), DEFAULT_CAP)
                .unwrap();
            assert!(!r.capped);
            let w = s.winner().unwrap();
            assert!(s.opened()[w].posterior_heavy(&params) >= 1.0 - params.delta() - 1e-12);
        }
    }

    #[test]
    fn abandoned_coins_are_not_revisited() {
        // p != 0.5 with incommensurate steps: a coin below zero is never tossed again.
        let params = pp(0.37, 0.09, 0.3, 0.05);
        for i in 0..200 {
            let mut rng = episode_rng(6, i);
            let mut s = StrategyState::new(StrategyKind::LikelihoodToss, params).unwrap();
            let mut natures = Vec::new();
            let mut abandoned = vec![];
            while s.winner().is_none() {
                let c = s.select_next(&mut rng).unwrap();
                let nature = match c {
                    crate::strategy::CoinChoice::Opened(k) => {
                        assert!(!abandoned.contains(&k));
                        natures[k]
                    }
                    crate::strategy::CoinChoice::Fresh => {
                        natures.push(sample_nature(&mut rng, params.alpha()));
                        *natures.last().unwrap()
                    }
                };
                let k = s.record_outcome(c, toss(&mut rng, nature, &params)).unwrap();
                if s.opened()[k].log_likelihood < 0.0 {
                    abandoned.push(k);
                }
            }
        }
    }

    #[test]
    fn cap_is_reported() {
        let params = pp(0.5, 0.01, 0.01, 0.001);
        let r = run_episode(&params, StrategyKind::LikelihoodToss, &mut episode_rng(7, 0), 10).unwrap();
        assert!(r.capped);
        assert_eq!(r.tosses, 10);
        assert_eq!(r.winner_nature, None);
        let r0 = run_episode(&params, StrategyKind::LikelihoodToss, &mut episode_rng(7, 0), 0).unwrap();
        assert!(r0.capped && r0.tosses == 0);
    }

    #[test]
    fn single_trial_matches_episode() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let s = run_experiment(&params, StrategyKind::LikelihoodToss, 1, 77, 1).unwrap();
        let e = run_episode(&params, StrategyKind::LikelihoodToss, &mut episode_rng(77, 0), DEFAULT_CAP).unwrap();
        assert_eq!(s.trials, 1);
        assert_eq!(s.mean_tosses, e.tosses as f64);
        assert_eq!(s.successes, e.correct as u64);
        assert_eq!(s.tosses.p50, e.tosses);
        assert_eq!(s.mean_tosses_se, 0.0);
    }

    #[test]
    fn summary_is_order_independent() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let exp = Experiment::new(params, StrategyKind::LikelihoodToss, 300, 8);
        let mut eps = exp.episodes().unwrap();
        let a = ExperimentSummary::from_episodes(exp.strategy, 8, &eps);
        eps.reverse();
        eps.rotate_left(17);
        let b = ExperimentSummary::from_episodes(exp.strategy, 8, &eps);
        assert_eq!(a, b);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let a = run_experiment(&params, StrategyKind::LikelihoodToss, 400, 42, 1).unwrap();
        let b = run_experiment(&params, StrategyKind::LikelihoodToss, 400, 42, 8).unwrap();
        let c = run_experiment(&params, StrategyKind::LikelihoodToss, 400, 42, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let d = run_experiment(&params, StrategyKind::LikelihoodToss, 400, 43, 1).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn zero_trials_rejected() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        assert!(matches!(
            run_experiment(&params, StrategyKind::LikelihoodToss, 0, 1, 1),
            Err(ExperimentError::NoTrials)
        ));
    }
}
