//! Grades of the log-likelihood Markov system.
//!
//! A single coin's log-likelihood, with its nature unknown, is a Markov
//! system on `x ≤ B`: from `x` it moves to `min(x + Δ_H, B)` with
//! probability `P(Heads | x)` and to `x − Δ_T` otherwise, each move costing
//! one toss. The grade `γ(x)` is the smallest quit cost `g` for which playing
//! at least one more step is optimal in the play-or-quit game started at `x`.
//!
//! The state space is unbounded below, so it is truncated at `−M`: a step
//! to below `−M` ends the game with cost `g`, as quitting would.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::theorem2_bound;
use crate::error::GradeError;
use crate::model::{heads_prob_given_state, ProblemParams};

pub mod joint;

pub use joint::{joint_bellman_oracle, joint_bellman_oracle_on, JointAction, JointReport};

/// Default cap on the number of lattice states.
pub const DEFAULT_MAX_STATES: usize = 200_000;
/// Value-iteration sweep cap.
pub const MAX_SWEEPS: usize = 1_000_000;
/// Two log-likelihood values closer than this are the same lattice point.
const MERGE_TOLERANCE: f64 = 1e-9;

/// A point of the truncated lattice, with the first `(h, t)` history found
/// to reach it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatticeState {
    pub h: u64,
    pub t: u64,
    pub x: f64,
}

/// Where a transition leads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Next {
    State(usize),
    /// `x ≥ B`: the game is won.
    Target,
    /// Below `−M`.
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatticeOptions {
    /// States with `x < −depth` are truncated.
    pub depth: f64,
    /// No new states are created for histories longer than this many tosses;
    /// such a history is mapped to the existing state nearest in `x`. Needed
    /// when `Δ_H/Δ_T` is irrational, since the band `[−M, B)` then holds
    /// infinitely many reachable values.
    pub horizon: Option<u64>,
    pub max_states: usize,
}

impl LatticeOptions {
    pub fn new(depth: f64) -> Self {
        Self { depth, horizon: None, max_states: DEFAULT_MAX_STATES }
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = Some(horizon);
        self
    }
}

/// The reachable part of the system, sorted by increasing `x`.
#[derive(Clone, Debug, Serialize)]
pub struct Lattice {
    params: ProblemParams,
    options: LatticeOptions,
    states: Vec<LatticeState>,
    up: Vec<Next>,
    down: Vec<Next>,
    heads_prob: Vec<f64>,
    origin: Next,
}

impl Lattice {
    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn depth(&self) -> f64 {
        self.options.depth
    }

    pub fn states(&self) -> &[LatticeState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Where a fresh coin starts: a state, or the target when `B ≤ 0`.
    pub fn origin(&self) -> Next {
        self.origin
    }

    pub fn up(&self, i: usize) -> Next {
        self.up[i]
    }

    pub fn down(&self, i: usize) -> Next {
        self.down[i]
    }

    pub fn heads_prob(&self, i: usize) -> f64 {
        self.heads_prob[i]
    }

    /// Index of the state whose `x` is within the merge tolerance of `x`.
    pub fn find(&self, x: f64) -> Option<usize> {
        let i = self.states.partition_point(|s| s.x < x - MERGE_TOLERANCE);
        (i < self.states.len() && (self.states[i].x - x).abs() <= MERGE_TOLERANCE).then_some(i)
    }
}

/// Builds the lattice reachable from `x = 0` with truncation depth `depth`.
pub fn build_lattice(params: &ProblemParams, depth: f64) -> Result<Lattice, GradeError> {
    build_lattice_with(params, LatticeOptions::new(depth))
}

pub fn build_lattice_with(params: &ProblemParams, options: LatticeOptions) -> Result<Lattice, GradeError> {
    if !(options.depth > 0.0 && options.depth.is_finite()) {
        return Err(GradeError::Depth(options.depth));
    }
    let b = params.boundary_b();
    let floor = -options.depth - MERGE_TOLERANCE;
    let (dh, dt) = (params.delta_h(), params.delta_t());

    let past_horizon = |h: u64, t: u64| options.horizon.is_some_and(|hz| h + t > hz);
    let classify = |h: u64, t: u64| -> Option<Next> {
        let x = h as f64 * dh - t as f64 * dt;
        if x >= b {
            Some(Next::Target)
        } else if x < floor {
            Some(Next::Truncated)
        } else {
            None
        }
    };

    // Breadth-first over (h, t), merging histories with equal x.
    let bucket = |x: f64| (x / MERGE_TOLERANCE).round() as i64;
    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut raw: Vec<LatticeState> = Vec::new();
    let mut edges: Vec<((u64, u64), (u64, u64))> = Vec::new();
    let mut queue = VecDeque::new();

    let lookup = |index: &HashMap<i64, usize>, raw: &[LatticeState], x: f64| -> Option<usize> {
        let k = bucket(x);
        [k - 1, k, k + 1]
            .iter()
            .filter_map(|kk| index.get(kk))
            .copied()
            .find(|&i| (raw[i].x - x).abs() <= MERGE_TOLERANCE)
    };

    let origin_next = classify(0, 0);
    if origin_next.is_none() {
        raw.push(LatticeState { h: 0, t: 0, x: 0.0 });
        index.insert(bucket(0.0), 0);
        queue.push_back(0usize);
    }

    while let Some(i) = queue.pop_front() {
        let LatticeState { h, t, .. } = raw[i];
        edges.push(((h + 1, t), (h, t + 1)));
        for (nh, nt) in [(h + 1, t), (h, t + 1)] {
            if classify(nh, nt).is_some() || past_horizon(nh, nt) {
                continue;
            }
            let x = nh as f64 * dh - nt as f64 * dt;
            if lookup(&index, &raw, x).is_none() {
                if raw.len() >= options.max_states {
                    return Err(GradeError::LatticeTooLarge { limit: options.max_states });
                }
                index.insert(bucket(x), raw.len());
                raw.push(LatticeState { h: nh, t: nt, x });
                queue.push_back(raw.len() - 1);
            }
        }
    }

    // Sort by x and remap.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &c| raw[a].x.total_cmp(&raw[c].x));
    let mut rank = vec![0usize; raw.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let states: Vec<LatticeState> = order.iter().map(|&i| raw[i]).collect();
    let nearest = |x: f64| -> usize {
        let i = states.partition_point(|s| s.x < x);
        match (i.checked_sub(1), (i < states.len()).then_some(i)) {
            (Some(lo), Some(hi)) if x - states[lo].x <= states[hi].x - x => lo,
            (_, Some(hi)) => hi,
            (lo, None) => lo.expect("lattice is non-empty"),
        }
    };
    let resolve = |h: u64, t: u64| -> Next {
        match classify(h, t) {
            Some(n) => n,
            None => {
                let x = h as f64 * dh - t as f64 * dt;
                match lookup(&index, &raw, x) {
                    Some(i) => Next::State(rank[i]),
                    // Only histories past the horizon can be missing.
                    None => Next::State(nearest(x)),
                }
            }
        }
    };

    let mut up = vec![Next::Target; states.len()];
    let mut down = vec![Next::Truncated; states.len()];
    for (i, &(hs, ts)) in edges.iter().enumerate() {
        // `edges[i]` belongs to raw state i.
        let r = rank[i];
        up[r] = resolve(hs.0, hs.1);
        down[r] = resolve(ts.0, ts.1);
    }
    let heads_prob = states.iter().map(|s| heads_prob_given_state(s.x, params)).collect();
    let origin = match origin_next {
        Some(n) => n,
        None => Next::State(rank[0]),
    };

    Ok(Lattice { params: *params, options, states, up, down, heads_prob, origin })
}

/// Converged value function of the play-or-quit game with quit cost `g`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuitGameValues {
    pub g: f64,
    pub values: Vec<f64>,
    pub sweeps: usize,
    pub residual: f64,
}

impl QuitGameValues {
    pub fn value(&self, next: Next) -> f64 {
        match next {
            Next::State(i) => self.values[i],
            Next::Target => 0.0,
            Next::Truncated => self.g,
        }
    }

    /// Expected cost of playing one step from state `i` and continuing optimally.
    pub fn play_value(&self, lattice: &Lattice, i: usize) -> f64 {
        let ph = lattice.heads_prob(i);
        1.0 + ph * self.value(lattice.up(i)) + (1.0 - ph) * self.value(lattice.down(i))
    }
}

/// Solves `V(x) = min{g, 1 + P(H|x)·V(up) + (1 − P(H|x))·V(down)}` by
/// synchronous sweeps from `V ≡ g` until the sup-norm change is below `tol/10`.
pub fn solve_quit_game(lattice: &Lattice, g: f64, tol: f64) -> Result<QuitGameValues, GradeError> {
    if !(g >= 0.0 && g.is_finite()) {
        return Err(GradeError::QuitCost(g));
    }
    let n = lattice.len();
    let mut values = QuitGameValues { g, values: vec![g; n], sweeps: 0, residual: 0.0 };
    let mut next = vec![0.0; n];
    let threshold = tol / 10.0;
    for sweep in 1..=MAX_SWEEPS {
        let mut residual = 0.0f64;
        for (i, slot) in next.iter_mut().enumerate() {
            let v = values.play_value(lattice, i).min(g);
            residual = residual.max((v - values.values[i]).abs());
            *slot = v;
        }
        std::mem::swap(&mut values.values, &mut next);
        values.sweeps = sweep;
        values.residual = residual;
        if residual < threshold {
            return Ok(values);
        }
    }
    Err(GradeError::NoConvergence { iterations: MAX_SWEEPS, residual: values.residual })
}

/// Value of the play-or-quit game with quit cost `g` started at `start`.
pub fn quit_game_value(g: f64, start: Next, lattice: &Lattice, tol: f64) -> Result<f64, GradeError> {
    if let Next::State(i) = start {
        if i >= lattice.len() {
            return Err(GradeError::UnknownState(i));
        }
    }
    Ok(solve_quit_game(lattice, g, tol)?.value(start))
}

/// `1 + E[V_g(next)] − g`: positive while quitting at `i` beats playing.
fn play_margin(lattice: &Lattice, i: usize, g: f64, tol: f64) -> Result<f64, GradeError> {
    let v = solve_quit_game(lattice, g, tol)?;
    Ok(v.play_value(lattice, i) - g)
}

/// Grade of lattice state `i`, by bisection on the quit cost to within `tol`.
///
/// The margin `1 + E[V_g(next)] − g` is non-increasing in `g` with slope in
/// `[−1, 0]`; the grade is where it first reaches zero. The search starts from
/// `[0, 4·theorem2_bound]` and doubles the upper end until it brackets.
pub fn grade_of(state: usize, lattice: &Lattice, tol: f64) -> Result<f64, GradeError> {
    if state >= lattice.len() {
        return Err(GradeError::UnknownState(state));
    }
    let mut lo = 0.0;
    let mut hi = 4.0 * theorem2_bound(lattice.params());
    let mut doublings = 0;
    while play_margin(lattice, state, hi, tol)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 64 {
            return Err(GradeError::GradeBracket(hi));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if play_margin(lattice, state, mid, tol)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradeEntry {
    pub state: LatticeState,
    /// False for the synthetic target entry.
    pub interior: bool,
    pub gamma: f64,
}

/// Grades of every lattice state plus the target, sorted by `x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradeTable {
    pub entries: Vec<GradeEntry>,
    pub depth: f64,
    pub tol: f64,
}

impl GradeTable {
    /// Grade of the state at `x`, if present.
    pub fn gamma_at(&self, x: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| (e.state.x - x).abs() <= MERGE_TOLERANCE)
            .map(|e| e.gamma)
    }
}

/// Computes the grade of every lattice state (in parallel across states).
pub fn grade_table(lattice: &Lattice, tol: f64) -> Result<GradeTable, GradeError> {
    let grades: Vec<f64> = (0..lattice.len())
        .into_par_iter()
        .map(|i| grade_of(i, lattice, tol))
        .collect::<Result<_, _>>()?;
    let mut entries: Vec<GradeEntry> = lattice
        .states()
        .iter()
        .zip(grades)
        .map(|(&state, gamma)| GradeEntry { state, interior: true, gamma })
        .collect();
    let b = lattice.params().boundary_b();
    entries.push(GradeEntry { state: LatticeState { h: 0, t: 0, x: b }, interior: false, gamma: 0.0 });
    Ok(GradeTable { entries, depth: lattice.depth(), tol })
}

/// Result of [`check_monotonicity`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    /// `(higher, lower)`: entry indices with `x[higher] ≥ x[lower]` but
    /// `γ[higher] > γ[lower] + tol`.
    pub violation: Option<(usize, usize)>,
    pub pairs_checked: u64,
}

/// Checks `γ(x) ≤ γ(y) + tol` for every pair `x ≥ y` in the table.
pub fn check_monotonicity(table: &GradeTable, tol: f64) -> MonotonicityReport {
    let e = &table.entries;
    let mut order: Vec<usize> = (0..e.len()).collect();
    order.sort_by(|&a, &b| e[a].state.x.total_cmp(&e[b].state.x));
    let n = e.len() as u64;
    let pairs_checked = n * n.saturating_sub(1) / 2;

    // Scan by increasing x, comparing each entry against the smallest grade
    // seen at lower or equal x.
    let mut best: Option<usize> = None;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end < order.len() && e[order[end]].state.x == e[order[k]].state.x {
            end += 1;
        }
        let group = &order[k..end];
        let group_min = group.iter().copied().min_by(|&a, &b| e[a].gamma.total_cmp(&e[b].gamma));
        let candidate = match (best, group_min) {
            (Some(b), Some(g)) if e[b].gamma <= e[g].gamma => Some(b),
            (_, g) => g,
        };
        for &i in group {
            if let Some(j) = candidate {
                if e[i].gamma > e[j].gamma + tol {
                    return MonotonicityReport { monotone: false, violation: Some((i, j)), pairs_checked };
                }
            }
        }
        best = candidate;
        k = end;
    }
    MonotonicityReport { monotone: true, violation: None, pairs_checked }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(p: f64, e: f64, a: f64, d: f64) -> ProblemParams {
        ProblemParams::new(p, e, a, d).unwrap()
    }

    #[test]
    fn symmetric_lattice_is_one_dimensional() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let lat = build_lattice(&params, 10.0).unwrap();
        let d = params.delta_h();
        let kmin = -((10.0 / d).floor() as i64);
        let kmax = (0..).find(|&k| k as f64 * d >= params.boundary_b()).unwrap() - 1;
        assert_eq!(lat.len() as i64, kmax - kmin + 1);
        for (s, k) in lat.states().iter().zip(kmin..) {
            assert!((s.x - k as f64 * d).abs() < 1e-9);
        }
        let o = match lat.origin() {
            Next::State(i) => i,
            _ => panic!(),
        };
        assert_eq!(lat.states()[o].x, 0.0);
        assert_eq!(lat.up(lat.len() - 1), Next::Target);
        assert_eq!(lat.down(0), Next::Truncated);
        for i in 1..lat.len() - 1 {
            assert_eq!(lat.up(i), Next::State(i + 1));
            assert_eq!(lat.down(i), Next::State(i - 1));
        }
    }

    #[test]
    fn generic_lattice_needs_horizon() {
        let params = pp(0.37, 0.09, 0.5, 0.1);
        let opts = LatticeOptions { depth: 3.0, horizon: None, max_states: 5_000 };
        assert_eq!(
            build_lattice_with(&params, opts).unwrap_err(),
            GradeError::LatticeTooLarge { limit: 5_000 }
        );
        let lat = build_lattice_with(&params, LatticeOptions::new(3.0).with_horizon(12)).unwrap();
        let mut seen = std::collections::HashSet::new();
        for s in lat.states() {
            assert!((s.x - (s.h as f64 * params.delta_h() - s.t as f64 * params.delta_t())).abs() < 1e-12);
            assert!(seen.insert((s.h, s.t)));
            assert!(s.x >= -3.0 - 1e-9 && s.x < params.boundary_b());
        }
        for w in lat.states().windows(2) {
            assert!(w[1].x - w[0].x > 1e-9);
        }
        // Histories past the horizon land on existing states, so every
        // state can still reach the target and has a finite grade.
        for i in 0..lat.len() {
            if let Next::Truncated = lat.up(i) {
                panic!("an up-step never leaves the band downwards");
            }
        }
        let table = grade_table(&lat, 1e-6).unwrap();
        assert!(table.entries.iter().all(|e| e.gamma.is_finite()));
    }

    #[test]
    fn zero_boundary_lattice_is_only_target() {
        let params = pp(0.5, 0.1, 0.5, 0.5);
        let lat = build_lattice(&params, 5.0).unwrap();
        assert!(lat.is_empty());
        assert_eq!(lat.origin(), Next::Target);
        let table = grade_table(&lat, 1e-6).unwrap();
        assert_eq!(table.entries.len(), 1);
        assert_eq!(table.entries[0].gamma, 0.0);
    }

    #[test]
    fn bad_depth_rejected() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        assert_eq!(build_lattice(&params, 0.0).unwrap_err(), GradeError::Depth(0.0));
    }

    #[test]
    fn quit_game_basics() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let lat = build_lattice(&params, 4.0).unwrap();
        let zero = solve_quit_game(&lat, 0.0, 1e-9).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        assert_eq!(quit_game_value(7.0, Next::Target, &lat, 1e-9).unwrap(), 0.0);
        assert!(solve_quit_game(&lat, -1.0, 1e-9).is_err());

        let g = 1000.0;
        let v = solve_quit_game(&lat, g, 1e-9).unwrap();
        assert!(v.values.iter().all(|&x| (0.0..=g).contains(&x)));
        // Top state: one heads wins; with g large, play is optimal and the
        // Bellman equation holds with the down-neighbour's value.
        let top = lat.len() - 1;
        let ph = lat.heads_prob(top);
        let expected = 1.0 + (1.0 - ph) * v.value(lat.down(top));
        assert!((v.values[top] - expected).abs() < 1e-8);
        assert!(v.values[top] < g);
    }

    #[test]
    fn values_monotone_in_g_and_x() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let lat = build_lattice(&params, 6.0).unwrap();
        let gs = [0.5, 2.0, 5.0, 12.0, 40.0, 300.0];
        let sols: Vec<_> = gs.iter().map(|&g| solve_quit_game(&lat, g, 1e-10).unwrap()).collect();
        for w in sols.windows(2) {
            for (a, b) in w[0].values.iter().zip(&w[1].values) {
                assert!(a <= &(b + 1e-9));
            }
        }
        for s in &sols {
            for w in s.values.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "V_g not non-increasing in x");
            }
        }
    }

    #[test]
    fn top_state_grade_matches_one_step_closed_form() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let lat = build_lattice(&params, 6.0).unwrap();
        let tol = 1e-7;
        let top = lat.len() - 1;
        let below = top - 1;
        let g_top = grade_of(top, &lat, tol).unwrap();
        let g_below = grade_of(below, &lat, tol).unwrap();
        // Quitting after a tails is optimal at g = γ(top) because the state
        // below has a larger grade; then γ = 1 + (1 − h*)γ, i.e. γ = 1/h*.
        assert!(g_below > g_top);
        let h = lat.heads_prob(top);
        assert!((g_top - 1.0 / h).abs() <= 2.0 * tol, "{g_top} vs {}", 1.0 / h);
    }

    #[test]
    fn grade_search_consistency() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let lat = build_lattice(&params, 5.0).unwrap();
        let tol = 1e-6;
        for i in (0..lat.len()).step_by(3) {
            let g = grade_of(i, &lat, tol).unwrap();
            let at = solve_quit_game(&lat, g, tol).unwrap();
            assert!((at.play_value(&lat, i) - g).abs() <= tol);
            let below = g * (1.0 - 10.0 * tol);
            let vb = solve_quit_game(&lat, below, tol).unwrap();
            assert!(vb.play_value(&lat, i) > below, "quitting should win below the grade");
            let above = g * (1.0 + 10.0 * tol);
            let va = solve_quit_game(&lat, above, tol).unwrap();
            assert!(va.play_value(&lat, i) < above, "playing should win above the grade");
        }
    }

    #[test]
    fn monotonicity_controls() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let lat = build_lattice(&params, 4.0).unwrap();
        let table = grade_table(&lat, 1e-6).unwrap();
        let rep = check_monotonicity(&table, 1e-6);
        assert!(rep.monotone, "{rep:?}");

        let single = GradeTable { entries: vec![table.entries[0]], depth: 4.0, tol: 1e-6 };
        assert!(check_monotonicity(&single, 1e-6).monotone);

        let mut bad = table.clone();
        let (i, j) = (2, bad.entries.len() - 3);
        let gi = bad.entries[i].gamma;
        bad.entries[i].gamma = bad.entries[j].gamma;
        bad.entries[j].gamma = gi;
        let rep = check_monotonicity(&bad, 1e-6);
        assert!(!rep.monotone);
        let (hi, lo) = rep.violation.unwrap();
        assert!(bad.entries[hi].state.x >= bad.entries[lo].state.x);
        assert!(bad.entries[hi].gamma > bad.entries[lo].gamma + 1e-6);
    }

    #[test]
    fn grade_of_rejects_unknown_state() {
        let params = pp(0.5, 0.1, 0.5, 0.1);
        let lat = build_lattice(&params, 2.0).unwrap();
        assert_eq!(grade_of(lat.len(), &lat, 1e-6), Err(GradeError::UnknownState(lat.len())));
    }
}
