//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use mbc_core::analysis::walk_sim::{estimate_restart_walks, estimate_walk};
use mbc_core::analysis::{
    absorption_prob_lower_bound, expected_steps_bound, lemma5_bounds, solve_rho0, theorem2_bound, CalculusCheck,
    RHO0_TOLERANCE,
};
use mbc_core::engine::{run_experiment, Experiment};
use mbc_core::grade::{build_lattice, check_monotonicity, grade_table, joint_bellman_oracle};
use mbc_core::{ProblemParams, StrategyKind, WalkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

type Check = fn() -> Verdict;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn params(p: f64, e: f64, a: f64, d: f64) -> ProblemParams {
    ProblemParams::new(p, e, a, d).expect("valid parameters")
}

fn correctness() -> Verdict {
    let trials = 20_000;
    let s = run_experiment(&params(0.5, 0.1, 0.5, 0.1), StrategyKind::LikelihoodToss, trials, SEED, 0).unwrap();
    let threshold = 0.9 - 3.0 * (0.9 * 0.1 / trials as f64).sqrt();
    verdict(
        s.success_rate >= threshold && s.capped == 0,
        format!("success rate {:.4} vs threshold {:.4} over {trials} episodes", s.success_rate, threshold),
    )
}

fn toss_bound() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    // Independent evaluations of (16/ε²)((1−α)/α + B).
    let cases = [((0.5, 0.1, 0.5, 0.1), 1600.0 * (1.0 + 9f64.ln())), ((0.5, 0.1, 0.1, 0.01), 1600.0 * (9.0 + 891f64.ln()))];
    for ((p, e, a, d), expected) in cases {
        let pp = params(p, e, a, d);
        let bound = theorem2_bound(&pp);
        let s = run_experiment(&pp, StrategyKind::LikelihoodToss, 20_000, SEED + 1, 0).unwrap();
        let upper = s.mean_tosses + 3.0 * s.mean_tosses_se;
        pass &= (bound - expected).abs() < 1e-9 * expected && upper <= bound && s.capped == 0;
        parts.push(format!("alpha={a} delta={d}: mean+3se {upper:.1} <= bound {bound:.1}"));
    }
    pass &= (theorem2_bound(&params(0.5, 0.1, 0.5, 0.1)) - 5115.6).abs() < 0.05;
    verdict(pass, parts.join("; "))
}

fn beats_naive() -> Verdict {
    let pp = params(0.5, 0.1, 0.1, 0.01);
    let lt = run_experiment(&pp, StrategyKind::LikelihoodToss, 5_000, SEED + 2, 0).unwrap();
    let naive = run_experiment(&pp, StrategyKind::Naive, 5_000, SEED + 2, 0).unwrap();
    let lt_hi = lt.mean_tosses + 3.0 * lt.mean_tosses_se;
    let naive_lo = naive.mean_tosses - 3.0 * naive.mean_tosses_se;
    verdict(
        lt_hi < naive_lo,
        format!(
            "likelihood-toss {:.1} (+3se {lt_hi:.1}) vs naive {:.1} (-3se {naive_lo:.1}); ratio {:.3}",
            lt.mean_tosses,
            naive.mean_tosses,
            lt.mean_tosses / naive.mean_tosses
        ),
    )
}

fn grade_monotonicity() -> Verdict {
    let start = Instant::now();
    let pp = params(0.5, 0.1, 0.5, 0.1);
    let tol = 1e-6;
    let t10 = grade_table(&build_lattice(&pp, 10.0).unwrap(), tol).unwrap();
    let t20 = grade_table(&build_lattice(&pp, 20.0).unwrap(), tol).unwrap();
    let report = check_monotonicity(&t10, tol);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for e in t10.entries.iter().filter(|e| e.state.x >= 0.0) {
        match t20.gamma_at(e.state.x) {
            Some(g) => {
                worst = worst.max((g - e.gamma).abs());
                compared += 1;
            }
            None => worst = f64::INFINITY,
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        report.monotone && worst <= 10.0 * tol && elapsed < 60.0,
        format!(
            "{} grades monotone={}; max |gamma_M - gamma_2M| over {compared} states at x>=0 is {worst:.2e}; {elapsed:.1}s",
            t10.entries.len(),
            report.monotone
        ),
    )
}

fn joint_optimality() -> Verdict {
    let r = joint_bellman_oracle(&params(0.5, 0.1, 0.5, 0.1), 4.0, 1e-8).unwrap();
    verdict(
        r.max_x_optimal,
        format!(
            "{} joint states, {} violations, worst gap {:.2e}, {} sweeps",
            r.joint_states,
            r.violations.len(),
            r.worst_gap,
            r.sweeps
        ),
    )
}

fn gamblers_ruin() -> Verdict {
    let mut pass = true;
    let unit = WalkSpec::new(1.0, 1.0, 0.6, 3.0, 3.0).unwrap();
    let r1 = solve_rho0(&unit, RHO0_TOLERANCE).unwrap();
    pass &= (r1 - 2.0 / 3.0).abs() <= 1e-10;

    let pp = params(0.5, 0.1, 0.5, 0.1);
    let coin = WalkSpec::shifted_coin_walk(&pp, 0.6).unwrap();
    let r2 = solve_rho0(&coin, RHO0_TOLERANCE).unwrap();
    pass &= (r2 - (-1.0f64).exp()).abs() <= 1e-10;

    let lower = absorption_prob_lower_bound(&unit, 2.0 / 3.0);
    pass &= (lower - 1539.0 / 2059.0).abs() <= 1e-12 && lower <= 513.0 / 665.0;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut failures = 0;
    let mut walks = 0;
    while walks < 20 {
        let w = WalkSpec::new(
            rng.gen_range(0.3..2.0),
            rng.gen_range(0.3..2.0),
            rng.gen_range(0.2..0.8),
            rng.gen_range(1.0..6.0),
            rng.gen_range(1.0..6.0),
        )
        .unwrap();
        if w.drift().abs() < 0.05 {
            continue;
        }
        walks += 1;
        let rho0 = solve_rho0(&w, RHO0_TOLERANCE).unwrap();
        let est = estimate_walk(&w, 20_000, SEED + 100 + walks);
        let p_ok = est.absorb_upper.mean >= absorption_prob_lower_bound(&w, rho0) - 3.0 * est.absorb_upper.se;
        let steps_ok = est.steps.mean <= expected_steps_bound(&w, Some(rho0)).unwrap() + 3.0 * est.steps.se;
        if !(p_ok && steps_ok) {
            failures += 1;
        }
    }
    pass &= failures == 0;
    verdict(
        pass,
        format!("rho0 {r1:.12} and {r2:.12}; lower bound {lower:.6}; {failures}/20 simulated walks outside the bounds"),
    )
}

fn restart_bounds() -> Verdict {
    let pp = params(0.5, 0.1, 0.5, 0.1);
    let b = lemma5_bounds(&pp).unwrap();
    let mut pass = (b.pi_lower - 0.05).abs() < 1e-12
        && (b.c_upper - 20.0).abs() < 1e-9
        && (b.d_over_pi_upper - 722.6).abs() < 0.1;
    // Walks from zero, and walks started after one forced heads.
    let mut sims = Vec::new();
    for (shifted, seed) in [(false, SEED + 7), (true, SEED + 8)] {
        let est = estimate_restart_walks(&pp, 100_000, shifted, seed);
        pass &= est.pi.mean >= b.pi_lower - 3.0 * est.pi.se;
        pass &= est.c.mean <= b.c_upper + 3.0 * est.c.se;
        pass &= est.d_over_pi() <= b.d_over_pi_upper;
        sims.push(format!(
            "{}: pi {:.4} C {:.3} D/pi {:.2}",
            if shifted { "shifted" } else { "plain" },
            est.pi.mean,
            est.c.mean,
            est.d_over_pi()
        ));
    }
    verdict(
        pass,
        format!(
            "bounds pi>={:.4} C<={:.4} D/pi<={:.2}; simulated {}",
            b.pi_lower,
            b.c_upper,
            b.d_over_pi_upper,
            sims.join(", ")
        ),
    )
}

fn calculus_grid() -> Verdict {
    let mut points = 0;
    let mut failed = Vec::new();
    for i in 11..=89u32 {
        for j in 1..=10u32 {
            // ε ≤ p − 0.005 on the percent grid means j ≤ i − 1.
            if j + 1 > i {
                continue;
            }
            points += 1;
            let c = CalculusCheck::evaluate(i as f64 / 100.0, j as f64 / 100.0);
            if !c.holds() {
                failed.push(c);
            }
        }
    }
    let ratio_fail = failed.iter().filter(|c| !c.ratio_inequality()).count();
    let step_fail = failed.iter().filter(|c| !c.step_inequality()).count();
    let mut detail = format!(
        "{} of {points} grid points fail (ratio inequality {ratio_fail}, heads-step inequality {step_fail})",
        failed.len()
    );
    if let Some(c) = failed.first() {
        detail.push_str(&format!(
            "; e.g. p={} eps={}: delta_h {:.5} < eps/(p-eps) {:.5}",
            c.p, c.epsilon, c.delta_h, c.epsilon_over_p_minus_epsilon
        ));
    }
    verdict(failed.is_empty(), detail)
}

fn determinism() -> Verdict {
    let pp = params(0.5, 0.1, 0.5, 0.1);
    let mut pass = true;
    for kind in [StrategyKind::LikelihoodToss, StrategyKind::Naive, StrategyKind::RoundRobin { pool: 10 }] {
        let run = |workers| {
            let s = Experiment::new(pp, kind, 2_000, SEED + 9).with_parallelism(workers).run().unwrap();
            serde_json::to_vec(&s).unwrap()
        };
        pass &= run(1) == run(8);
    }
    verdict(pass, "summaries at parallelism 1 and 8 compared byte for byte for three strategies".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("correctness guarantee", correctness),
        ("expected toss bound", toss_bound),
        ("improvement over naive", beats_naive),
        ("grade monotonicity", grade_monotonicity),
        ("max-likelihood optimality", joint_optimality),
        ("gambler's ruin calculators", gamblers_ruin),
        ("restart walk bounds", restart_bounds),
        ("calculus inequalities", calculus_grid),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failures += 1;
        }
        println!("criterion {} {name}: {} ({})", n + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
