//! Coin-selection policies.
//!
//! [`StrategyKind::LikelihoodToss`] always tosses the coin with the largest
//! log-likelihood, where the unlimited supply of untouched coins is a single
//! virtual candidate at `X = 0`. The other kinds are baselines used for
//! comparison.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::StrategyError;
use crate::model::{update_on_toss, CoinState, Outcome, ProblemParams};

/// Pool size used by `round-robin` when none is given.
pub const DEFAULT_ROUND_ROBIN_POOL: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Toss the coin of maximal log-likelihood; stop once it reaches `B`.
    LikelihoodToss,
    /// Toss each fresh coin a fixed number of times, then accept or discard it.
    Naive,
    /// Cycle over a fixed number of slots, replacing coins that fall to `−B`.
    RoundRobin { pool: usize },
    /// Toss a uniformly chosen member of the opened coins plus one fresh coin.
    UniformRandom,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::LikelihoodToss => "likelihood-toss",
            StrategyKind::Naive => "naive",
            StrategyKind::RoundRobin { .. } => "round-robin",
            StrategyKind::UniformRandom => "uniform-random",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::RoundRobin { pool } => write!(f, "round-robin:{pool}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    /// Accepts `likelihood-toss`, `naive`, `uniform-random`, `round-robin`
    /// and `round-robin:<pool>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "likelihood-toss" => Ok(StrategyKind::LikelihoodToss),
            "naive" => Ok(StrategyKind::Naive),
            "uniform-random" => Ok(StrategyKind::UniformRandom),
            "round-robin" => Ok(StrategyKind::RoundRobin { pool: DEFAULT_ROUND_ROBIN_POOL }),
            other => match other.strip_prefix("round-robin:").map(str::parse::<usize>) {
                Some(Ok(0)) => Err(StrategyError::EmptyPool),
                Some(Ok(pool)) => Ok(StrategyKind::RoundRobin { pool }),
                _ => Err(StrategyError::UnknownName(other.to_string())),
            },
        }
    }
}

/// The coin a policy wants tossed next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CoinChoice {
    /// An already opened coin, by index into [`StrategyState::opened`].
    Opened(usize),
    /// A coin never tossed before.
    Fresh,
}

/// Number of tosses the naive policy spends on each coin:
/// `⌈(4/ε²)·ln(1/δ)⌉`, at least one.
pub fn naive_budget(params: &ProblemParams) -> u64 {
    let k = (4.0 / (params.epsilon() * params.epsilon())) * (1.0 / params.delta()).ln();
    (k.ceil() as u64).max(1)
}

/// Heap entry for the likelihood ordering. Entries go stale when the coin is
/// tossed again; `tosses` identifies the live one.
#[derive(Clone, Copy, Debug)]
struct HeapKey {
    x: f64,
    index: usize,
    tosses: u64,
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        // Larger x first; on equal x the lower index wins.
        self.x
            .total_cmp(&other.x)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapKey {}

#[derive(Clone, Debug)]
enum PolicyState {
    Likelihood { heap: BinaryHeap<HeapKey> },
    Naive { budget: u64, threshold: f64, current: Option<usize> },
    RoundRobin { slots: Vec<Option<usize>>, cursor: usize },
    Uniform,
}

/// Mutable state of one episode under one policy.
#[derive(Clone, Debug)]
pub struct StrategyState {
    params: ProblemParams,
    kind: StrategyKind,
    opened: Vec<CoinState>,
    winner: Option<usize>,
    policy: PolicyState,
}

impl StrategyState {
    pub fn new(kind: StrategyKind, params: ProblemParams) -> Result<Self, StrategyError> {
        let policy = match kind {
            StrategyKind::LikelihoodToss => PolicyState::Likelihood { heap: BinaryHeap::new() },
            StrategyKind::Naive => PolicyState::Naive {
                budget: naive_budget(&params),
                threshold: params.p() - params.epsilon() / 2.0,
                current: None,
            },
            StrategyKind::RoundRobin { pool: 0 } => return Err(StrategyError::EmptyPool),
            StrategyKind::RoundRobin { pool } => PolicyState::RoundRobin { slots: vec![None; pool], cursor: 0 },
            StrategyKind::UniformRandom => PolicyState::Uniform,
        };
        Ok(Self { params, kind, opened: Vec::new(), winner: None, policy })
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    /// Coins tossed at least once, in order of first toss.
    pub fn opened(&self) -> &[CoinState] {
        &self.opened
    }

    /// The accepted coin, if the episode is over.
    pub fn winner(&self) -> Option<usize> {
        self.winner
    }

    pub fn total_tosses(&self) -> u64 {
        self.opened.iter().map(CoinState::tosses).sum()
    }

    /// Chooses the next coin to toss. Only `UniformRandom` consumes randomness.
    pub fn select_next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<CoinChoice, StrategyError> {
        if self.winner.is_some() {
            return Err(StrategyError::AlreadyFinished);
        }
        let choice = match &mut self.policy {
            PolicyState::Likelihood { heap } => {
                purge_stale(heap, &self.opened);
                match heap.peek() {
                    // A fresh coin sits at X = 0; on a tie the opened coin is kept.
                    Some(top) if top.x >= 0.0 => CoinChoice::Opened(top.index),
                    _ => CoinChoice::Fresh,
                }
            }
            PolicyState::Naive { current, .. } => match *current {
                Some(i) => CoinChoice::Opened(i),
                None => CoinChoice::Fresh,
            },
            PolicyState::RoundRobin { slots, cursor } => match slots[*cursor] {
                Some(i) => CoinChoice::Opened(i),
                None => CoinChoice::Fresh,
            },
            PolicyState::Uniform => {
                let pick = rng.gen_range(0..=self.opened.len());
                if pick == self.opened.len() {
                    CoinChoice::Fresh
                } else {
                    CoinChoice::Opened(pick)
                }
            }
        };
        Ok(choice)
    }

    /// Applies the outcome of tossing `choice`. Returns the index of the coin
    /// that was tossed (newly materialised for [`CoinChoice::Fresh`]).
    pub fn record_outcome(&mut self, choice: CoinChoice, outcome: Outcome) -> Result<usize, StrategyError> {
        if self.winner.is_some() {
            return Err(StrategyError::AlreadyFinished);
        }
        let index = match choice {
            CoinChoice::Opened(index) if index < self.opened.len() => index,
            CoinChoice::Opened(index) => {
                return Err(StrategyError::UnknownCoin { index, opened: self.opened.len() })
            }
            CoinChoice::Fresh => self.materialize(),
        };
        let coin = update_on_toss(self.opened[index], outcome, &self.params);
        self.opened[index] = coin;
        let b = self.params.boundary_b();

        match &mut self.policy {
            PolicyState::Likelihood { heap } => {
                heap.push(HeapKey { x: coin.log_likelihood, index, tosses: coin.tosses() });
            }
            PolicyState::Naive { budget, threshold, current } => {
                *current = Some(index);
                if coin.tosses() >= *budget {
                    if coin.heads as f64 / coin.tosses() as f64 >= *threshold {
                        self.winner = Some(index);
                    } else {
                        *current = None;
                    }
                }
                return Ok(index);
            }
            PolicyState::RoundRobin { slots, cursor } => {
                slots[*cursor] = if coin.log_likelihood <= -b { None } else { Some(index) };
                *cursor = (*cursor + 1) % slots.len();
            }
            PolicyState::Uniform => {}
        }

        if coin.log_likelihood >= b {
            self.winner = Some(index);
        } else if b <= 0.0 {
            // An untouched coin already meets a non-positive boundary.
            self.winner = Some(self.materialize());
        }
        Ok(index)
    }

    /// Starts from already opened coins, taken as given. A winner is declared
    /// if one of them is at or above `B`.
    pub fn from_history(kind: StrategyKind, params: ProblemParams, coins: Vec<CoinState>) -> Result<Self, StrategyError> {
        let mut state = Self::new(kind, params)?;
        for coin in coins {
            let index = state.opened.len();
            state.opened.push(coin);
            if let PolicyState::Likelihood { heap } = &mut state.policy {
                heap.push(HeapKey { x: coin.log_likelihood, index, tosses: coin.tosses() });
            }
        }
        state.winner = state
            .opened
            .iter()
            .position(|c| c.log_likelihood >= params.boundary_b());
        Ok(state)
    }

    fn materialize(&mut self) -> usize {
        let index = self.opened.len();
        self.opened.push(CoinState::fresh());
        if let PolicyState::Likelihood { heap } = &mut self.policy {
            heap.push(HeapKey { x: 0.0, index, tosses: 0 });
        }
        index
    }

    /// Checks the selection heap against a linear scan: every opened coin has
    /// exactly one live entry, and the best live entry is the linear argmax
    /// (largest X, lowest index on ties). Always true for non-likelihood kinds.
    pub fn audit_selection(&self) -> bool {
        let PolicyState::Likelihood { heap } = &self.policy else {
            return true;
        };
        let mut live = vec![0usize; self.opened.len()];
        let mut best: Option<HeapKey> = None;
        for key in heap.iter() {
            let coin = &self.opened[key.index];
            if key.tosses != coin.tosses() {
                continue;
            }
            if key.x != coin.log_likelihood {
                return false;
            }
            live[key.index] += 1;
            if best.is_none_or(|b| *key > b) {
                best = Some(*key);
            }
        }
        if live.iter().any(|&n| n != 1) {
            return false;
        }
        let scan = linear_argmax(&self.opened);
        best.map(|k| k.index) == scan
    }
}

fn purge_stale(heap: &mut BinaryHeap<HeapKey>, opened: &[CoinState]) {
    while let Some(top) = heap.peek() {
        if top.tosses == opened[top.index].tosses() {
            break;
        }
        heap.pop();
    }
}

/// Index of the opened coin with largest log-likelihood, lowest index on ties.
pub fn linear_argmax(opened: &[CoinState]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in opened.iter().enumerate() {
        match best {
            Some(b) if opened[b].log_likelihood >= c.log_likelihood => {}
            _ => best = Some(i),
        }
    }
    best
}
