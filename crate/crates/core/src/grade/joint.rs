//! Brute-force check of the max-likelihood rule on a two-coin game.
//!
//! The joint state holds two opened coins, each at a lattice point or dead
//! (fallen below the truncation depth). Actions are: toss the first coin,
//! toss the second, or toss a fresh coin from `x = 0`. A fresh coin takes the
//! slot of the lower of the two, so at most the two best coins are kept. The
//! game ends as soon as any coin reaches `B`, and every toss costs one.
//!
//! The Bellman equation is solved by value iteration, and every state is
//! checked to see whether "toss the coin with the largest `x`, counting a
//! fresh coin as `x = 0`" attains the minimum.

use serde::Serialize;

use super::{Lattice, Next};
use crate::error::GradeError;
use crate::grade::{build_lattice, MAX_SWEEPS};
use crate::model::ProblemParams;

/// Largest joint lattice the oracle will attempt.
pub const MAX_JOINT_STATES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum JointAction {
    First,
    Second,
    Fresh,
}

/// One coordinate of a joint state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Slot {
    Dead,
    At(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointStateReport {
    pub first: Option<f64>,
    pub second: Option<f64>,
    pub value: f64,
    pub max_x_action: JointAction,
    /// Actions whose Q-value is within `tol` of the minimum.
    pub optimal_actions: Vec<JointAction>,
    pub max_x_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointReport {
    pub depth: f64,
    pub tol: f64,
    pub lattice_states: usize,
    pub joint_states: usize,
    pub sweeps: usize,
    pub residual: f64,
    /// Value from the empty start, no coin opened.
    pub start_value: f64,
    /// True iff the max-x action is optimal within `tol` at every state.
    pub max_x_optimal: bool,
    /// Largest `Q(max-x) − min Q` over all states.
    pub worst_gap: f64,
    pub violations: Vec<JointStateReport>,
    /// States where more than one action is optimal, excluding the plain
    /// symmetric case of two coins at the same point.
    pub ties: Vec<JointStateReport>,
}

/// Value iteration on the joint game, plus the per-state action audit.
pub struct JointGame<'a> {
    lattice: &'a Lattice,
    n: usize,
    values: Vec<f64>,
}

impl<'a> JointGame<'a> {
    pub fn new(lattice: &'a Lattice) -> Result<Self, GradeError> {
        let n = lattice.len() + 1;
        let states = n * n;
        if states > MAX_JOINT_STATES {
            return Err(GradeError::JointTooLarge { states, limit: MAX_JOINT_STATES });
        }
        Ok(Self { lattice, n, values: vec![0.0; states] })
    }

    fn slot_index(slot: Slot) -> usize {
        match slot {
            Slot::Dead => 0,
            Slot::At(i) => i + 1,
        }
    }

    fn slot_of(k: usize) -> Slot {
        if k == 0 {
            Slot::Dead
        } else {
            Slot::At(k - 1)
        }
    }

    fn x(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Dead => f64::NEG_INFINITY,
            Slot::At(i) => self.lattice.states()[i].x,
        }
    }

    fn index(&self, a: Slot, b: Slot) -> usize {
        Self::slot_index(a) * self.n + Self::slot_index(b)
    }

    /// Value after a coin lands on `next`, with `other` the untouched slot
    /// and `first` saying which position the moved coin occupies.
    fn value_after(&self, values: &[f64], next: Next, other: Slot, first: bool) -> f64 {
        let moved = match next {
            Next::Target => return 0.0,
            Next::Truncated => Slot::Dead,
            Next::State(i) => Slot::At(i),
        };
        if first {
            values[self.index(moved, other)]
        } else {
            values[self.index(other, moved)]
        }
    }

    fn available(&self, a: Slot, b: Slot) -> Vec<JointAction> {
        let mut acts = Vec::with_capacity(3);
        if a != Slot::Dead {
            acts.push(JointAction::First);
        }
        if b != Slot::Dead {
            acts.push(JointAction::Second);
        }
        if matches!(self.lattice.origin(), Next::State(_)) {
            acts.push(JointAction::Fresh);
        }
        acts
    }

    fn q_value(&self, values: &[f64], a: Slot, b: Slot, action: JointAction) -> f64 {
        let toss = |i: usize, other: Slot, first: bool| {
            let ph = self.lattice.heads_prob(i);
            1.0 + ph * self.value_after(values, self.lattice.up(i), other, first)
                + (1.0 - ph) * self.value_after(values, self.lattice.down(i), other, first)
        };
        match (action, a, b) {
            (JointAction::First, Slot::At(i), _) => toss(i, b, true),
            (JointAction::Second, _, Slot::At(j)) => toss(j, a, false),
            (JointAction::Fresh, _, _) => {
                let Next::State(o) = self.lattice.origin() else {
                    return f64::INFINITY;
                };
                // The fresh coin replaces the lower coordinate.
                if self.x(a) >= self.x(b) {
                    toss(o, a, false)
                } else {
                    toss(o, b, true)
                }
            }
            _ => f64::INFINITY,
        }
    }

    /// Action of the max-likelihood rule: largest x, opened before fresh on
    /// a tie at zero, first before second on equal x.
    pub fn max_x_action(&self, a: Slot, b: Slot) -> JointAction {
        let (xa, xb) = (self.x(a), self.x(b));
        let (best, best_x) = if xa >= xb { (JointAction::First, xa) } else { (JointAction::Second, xb) };
        if best_x >= 0.0 {
            best
        } else {
            JointAction::Fresh
        }
    }

    /// Synchronous value iteration from zero until the sup-norm change is
    /// below `threshold`.
    pub fn solve(&mut self, threshold: f64) -> Result<(usize, f64), GradeError> {
        let total = self.n * self.n;
        let mut next = vec![0.0; total];
        let mut residual = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            residual = 0.0;
            for (k, slot) in next.iter_mut().enumerate() {
                let (a, b) = (Self::slot_of(k / self.n), Self::slot_of(k % self.n));
                let v = self
                    .available(a, b)
                    .into_iter()
                    .map(|act| self.q_value(&self.values, a, b, act))
                    .fold(f64::INFINITY, f64::min);
                residual = residual.max((v - self.values[k]).abs());
                *slot = v;
            }
            std::mem::swap(&mut self.values, &mut next);
            if residual < threshold {
                return Ok((sweep, residual));
            }
        }
        Err(GradeError::NoConvergence { iterations: MAX_SWEEPS, residual })
    }

    pub fn value(&self, a: Slot, b: Slot) -> f64 {
        self.values[self.index(a, b)]
    }

    pub fn q(&self, a: Slot, b: Slot, action: JointAction) -> f64 {
        self.q_value(&self.values, a, b, action)
    }

    fn state_report(&self, a: Slot, b: Slot, tol: f64) -> JointStateReport {
        let acts = self.available(a, b);
        let qs: Vec<(JointAction, f64)> = acts.iter().map(|&act| (act, self.q(a, b, act))).collect();
        let min = qs.iter().map(|&(_, q)| q).fold(f64::INFINITY, f64::min);
        let max_x = self.max_x_action(a, b);
        let q_max_x = qs.iter().find(|(act, _)| *act == max_x).map(|&(_, q)| q).unwrap_or(f64::INFINITY);
        let coord = |s: Slot| match s {
            Slot::Dead => None,
            Slot::At(i) => Some(self.lattice.states()[i].x),
        };
        JointStateReport {
            first: coord(a),
            second: coord(b),
            value: self.value(a, b),
            max_x_action: max_x,
            optimal_actions: qs.iter().filter(|&&(_, q)| q - min <= tol).map(|&(act, _)| act).collect(),
            max_x_gap: q_max_x - min,
        }
    }

    /// Audits every joint state.
    pub fn report(&self, depth: f64, tol: f64, sweeps: usize, residual: f64) -> JointReport {
        let mut violations = Vec::new();
        let mut ties = Vec::new();
        let mut worst_gap = 0.0f64;
        for k in 0..self.n * self.n {
            let (a, b) = (Self::slot_of(k / self.n), Self::slot_of(k % self.n));
            let r = self.state_report(a, b, tol);
            worst_gap = worst_gap.max(r.max_x_gap);
            if r.max_x_gap > tol {
                violations.push(r);
            } else if r.optimal_actions.len() > 1 {
                let symmetric = a == b
                    && r.optimal_actions.len() == 2
                    && r.optimal_actions.contains(&JointAction::First)
                    && r.optimal_actions.contains(&JointAction::Second);
                if !symmetric {
                    ties.push(r);
                }
            }
        }
        JointReport {
            depth,
            tol,
            lattice_states: self.lattice.len(),
            joint_states: self.n * self.n,
            sweeps,
            residual,
            start_value: self.value(Slot::Dead, Slot::Dead),
            max_x_optimal: violations.is_empty(),
            worst_gap,
            violations,
            ties,
        }
    }
}

/// Builds the depth-`depth` lattice, solves the two-coin game to well below
/// `tol`, and reports whether the max-x action is optimal everywhere.
pub fn joint_bellman_oracle(params: &ProblemParams, depth: f64, tol: f64) -> Result<JointReport, GradeError> {
    joint_bellman_oracle_on(&build_lattice(params, depth)?, tol)
}

/// [`joint_bellman_oracle`] on an already built lattice.
pub fn joint_bellman_oracle_on(lattice: &Lattice, tol: f64) -> Result<JointReport, GradeError> {
    let mut game = JointGame::new(lattice)?;
    let (sweeps, residual) = game.solve((tol * 1e-3).max(1e-13))?;
    Ok(game.report(lattice.depth(), tol, sweeps, residual))
}
