//! Exit gate: every criterion runs at its stated tolerance and prints one
//! PASS or FAIL line. The process fails if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::process::Command;
use std::time::{Duration, Instant};

use clap::Parser;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subteam::cli::{execute, RunConfig, SolveTeamReport};
use subteam::generate::{random_lqg, random_team, Dims};
use subteam::io::{gains_from_map, read_lqg_problem, read_team_problem};
use subteam::lqg::*;
use subteam::matrix::Mat;
use subteam::pipeline::{solve_team, TeamSolution, TeamSolveOptions};
use subteam::static_team::{
    assemble_optimality_system, expand, expected_cost, realize_static_strategy, static_from_gains,
    to_static, InfoMode, StaticStrategy,
};
use subteam::team::TeamProblem;
use subteam::transform::algorithm1;

type Verdict = Result<String, String>;

const TEAM_SEEDS: u64 = 200;
const LQG_SEEDS: u64 = 100;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reads_only_own(p: &TeamProblem, s: &subteam::static_team::LinearTeamStrategy) -> bool {
    s.mode == InfoMode::Original
        && (1..=p.n()).all(|i| {
            let own: BTreeSet<&String> = p.members[i - 1].info.iter().collect();
            s.reads(i).all(|b| own.contains(b))
        })
}

fn team_suite() -> Vec<(TeamProblem, TeamSolution)> {
    (0..TEAM_SEEDS)
        .map(|seed| {
            let p = random_team(seed, Dims::default()).unwrap();
            let sol = solve_team(&p, None, &TeamSolveOptions::default())
                .unwrap_or_else(|e| panic!("team seed {seed}: {e}"));
            (p, sol)
        })
        .collect()
}

fn lqg_suite() -> Vec<(LqgProblem, GainSchedule)> {
    (0..LQG_SEEDS)
        .map(|seed| {
            let p = random_lqg(seed, Dims::default()).unwrap();
            let s = synthesize(&p, &LqgOptions::default())
                .unwrap_or_else(|e| panic!("lqg seed {seed}: {e}"));
            (p, s)
        })
        .collect()
}

fn two_signal_end_to_end() -> Verdict {
    let start = Instant::now();
    let path = fixture("ex2.json");
    let cfg = RunConfig::try_parse_from(["subteam", "solve-team", path.to_str().unwrap()]).unwrap();
    let out = execute(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let r: SolveTeamReport = serde_json::from_str(&out.text).unwrap();
    let p = read_team_problem(&path).unwrap();
    let s = r.final_strategy.into_strategy(p.n()).unwrap();
    check(
        out.code == 0
            && r.expanded_cost.abs() <= 1e-9
            && r.final_cost.abs() <= 1e-9
            && (r.final_cost - r.expanded_cost).abs() <= 1e-9
            && reads_only_own(&p, &s)
            && elapsed < Duration::from_secs(1),
        format!(
            "expanded cost {:e}, final cost {:e}, own blocks only: {}, {elapsed:?}",
            r.expanded_cost,
            r.final_cost,
            reads_only_own(&p, &s)
        ),
    )
}

fn m1(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

fn correlated_team_system() -> Verdict {
    let p = read_team_problem(&fixture("ex3.json")).unwrap();
    let obs = to_static(&expand(&p, &p.analyze_precedence()).unwrap());
    let sys = assemble_optimality_system(&p, &obs);
    let want = Mat::from_row_slice(3, 3, &[10.0, 0.0, 0.0, 0.0, 10.0, 10.0, 0.0, 10.0, 10.0]);
    let rhs = Mat::from_row_slice(3, 1, &[0.0, -5.0, -5.0]);
    let d = (&sys.matrix - want).amax().max((&sys.rhs - rhs).amax());
    let r = sys.residual(&[m1(0.0), m1(1.0), m1(-1.5)]).unwrap();
    check(d <= 1e-12 && r <= 1e-12, format!("entry error {d:e}, residual at (0, 1, -1.5) {r:e}"))
}

fn correlated_team_rewrite() -> Verdict {
    let p = read_team_problem(&fixture("ex3.json")).unwrap();
    let st = p.analyze_precedence();
    let certs = p.certify_substitutability(&st, &Default::default()).unwrap();
    let e = expand(&p, &st).unwrap();
    let obs = to_static(&e);
    let pi = gains_from_map(serde_json::from_str(&fixture_text("ex3_alt_pi.json")).unwrap(), 3).unwrap();
    let ss = static_from_gains(&p, &obs, pi, &Default::default()).unwrap();
    let gamma0 = realize_static_strategy(&e, &obs, &ss).unwrap();
    let out = algorithm1(&gamma0, &e, &certs, &Default::default()).map_err(|e| e.to_string())?;
    let total = |i: usize| -> Vec<f64> {
        out.strategy.coeffs[i - 1].values().map(|k| k[(0, 0)]).collect()
    };
    let u1 = total(1).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let u2 = total(2).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let u3 = out.strategy.coeff(3, "xi2").map_or(f64::NAN, |k| k[(0, 0)]);
    let steps = &out.trace.iterations;
    let drift = steps
        .iter()
        .map(|s| s.nu_drift.unwrap_or(f64::NAN).max(s.z_drift.unwrap_or(f64::NAN)))
        .fold(0.0, f64::max);
    let extra = out.strategy.coeffs[2].len() - 1;
    check(
        steps.len() == 1 && u1 <= 1e-12 && u2 <= 1e-12 && (u3 + 0.5).abs() <= 1e-12 && extra == 0 && drift <= 1e-12,
        format!("{} iteration(s), U1 max {u1:e}, U2 max {u2:e}, U3 = {u3}·Z3, drift {drift:e}", steps.len()),
    )
}

fn rewrite_property_suite(suite: &[(TeamProblem, TeamSolution)], elapsed: Duration) -> Verdict {
    let mut worst_nu: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut worst_cost: f64 = 0.0;
    let mut count_mismatch = Vec::new();
    for (seed, (p, sol)) in suite.iter().enumerate() {
        for s in &sol.trace.iterations {
            worst_nu = worst_nu.max(s.nu_drift.unwrap_or(f64::INFINITY));
            worst_z = worst_z.max(s.z_drift.unwrap_or(f64::INFINITY));
        }
        // Σ|E^i_0| from the expanded strategy's block owners.
        let e0: usize = (1..=p.n())
            .map(|i| {
                sol.expanded_strategy.coeffs[i - 1]
                    .iter()
                    .filter(|(_, k)| k.iter().any(|&v| v != 0.0))
                    .filter_map(|(b, _)| sol.expanded.owner_of(i, b))
                    .filter(|&o| o != i)
                    .collect::<BTreeSet<_>>()
                    .len()
            })
            .sum();
        if e0 != sol.trace.iterations.len() {
            count_mismatch.push(seed);
        }
        let gap = (sol.final_cost - sol.expanded_cost).abs() / (1.0 + sol.expanded_cost.abs());
        worst_cost = worst_cost.max(gap);
        if !reads_only_own(p, &sol.final_strategy) {
            count_mismatch.push(seed);
        }
    }
    let steps: usize = suite.iter().map(|(_, s)| s.trace.iterations.len()).sum();
    check(
        worst_nu <= 1e-9 && worst_z <= 1e-9 && count_mismatch.is_empty() && worst_cost <= 1e-7 && elapsed < Duration::from_secs(60),
        format!(
            "{} problems, {steps} steps, max N U drift {worst_nu:e}, max information drift {worst_z:e}, \
             max cost gap {worst_cost:e}, count mismatches {count_mismatch:?}, {elapsed:?}",
            suite.len()
        ),
    )
}

fn stationarity(suite: &[(TeamProblem, TeamSolution)]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    for (p, sol) in suite {
        let base = sol.expanded_cost;
        for i in 0..p.n() {
            let shape = sol.static_strategy.pi[i].shape();
            if shape.0 * shape.1 == 0 {
                continue;
            }
            for _ in 0..5 {
                let mut dir = Mat::from_fn(shape.0, shape.1, |_, _| rng.random_range(-1.0..1.0));
                dir /= dir.norm();
                let mut pi = sol.static_strategy.pi.clone();
                pi[i] += dir * eps;
                let perturbed = StaticStrategy {
                    pi,
                    system_residual: f64::NAN,
                };
                let s = realize_static_strategy(&sol.expanded, &sol.observations, &perturbed).unwrap();
                let c = expected_cost(p, Some(&sol.expanded), &s).unwrap();
                worst = worst.max(base - c);
                trials += 1;
            }
        }
    }
    check(worst <= 1e-8, format!("{trials} perturbations, largest decrease {worst:e}"))
}

fn exact_equality(suite: &[(LqgProblem, GainSchedule)], synthesis: Duration) -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (p, s) in suite {
        let c = exact_cost(p, s, CostMode::Centralized).unwrap();
        let d = exact_cost(p, s, CostMode::Decentralized).unwrap();
        worst = worst.max((c - d).abs() / c.abs().max(f64::MIN_POSITIVE));
    }
    let elapsed = synthesis + start.elapsed();
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(60),
        format!("{} problems, max relative gap {worst:e}, {elapsed:?}", suite.len()),
    )
}

fn pathwise_sum(suite: &[(LqgProblem, GainSchedule)]) -> Verdict {
    let mut worst_path: f64 = 0.0;
    let mut worst_rows: f64 = 0.0;
    for (seed, (p, s)) in suite.iter().enumerate() {
        match simulate(p, s, SimMode::Both, 1000, seed as u64) {
            Ok(r) => worst_path = worst_path.max(r.max_sum_residual.unwrap()),
            Err(e) => return Err(format!("problem {seed}: {e}")),
        }
        worst_rows = worst_rows.max(sum_identity_residual(p, s).unwrap());
    }
    check(
        worst_path <= 1e-8 && worst_rows <= 1e-12,
        format!("{} problems x 1000 paths, max |Z - sum S| {worst_path:e}, row-sum identity {worst_rows:e}", suite.len()),
    )
}

fn lower_bound(suite: &[(LqgProblem, GainSchedule)]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for (p, s) in suite {
        let best = exact_cost(p, s, CostMode::Centralized).unwrap();
        let base = decentralized_gains(s);
        for _ in 0..50 {
            let scale = rng.random_range(1e-3..1.0);
            let gains: Vec<Vec<Mat>> = base
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|f| f.map(|v| v + scale * rng.random_range(-1.0..1.0)))
                        .collect()
                })
                .collect();
            let c = exact_cost_with_gains(p, s, &gains).unwrap();
            worst = worst.min(c - best);
            count += 1;
        }
    }
    check(worst >= -1e-9, format!("{count} perturbed schedules, min cost excess {worst:e}"))
}

fn perfect_observation_embedding() -> Verdict {
    let p = read_lqg_problem(&fixture("lqg_perfect_obs.json")).unwrap();
    let opts = LqgOptions {
        allow_psd_noise: true,
        ..Default::default()
    };
    let s = synthesize(&p, &opts).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for path in 0..200 {
        let tr = simulate_path(&p, &s, SimMode::Decentralized, 10, path).map_err(|e| e.to_string())?;
        worst = worst.max(tr.embedding_deviation(&p));
    }
    check(
        coordinate_partition(&p) && worst <= 1e-8,
        format!("200 paths x {} steps, max |S^i - embedded X^i| {worst:e}", p.horizon),
    )
}

fn oracle_equivalence() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in LQG_FIXTURES {
        let p = read_lqg_problem(&fixture(name)).unwrap();
        let opts = LqgOptions {
            allow_psd_noise: name == "lqg_perfect_obs.json",
            ..Default::default()
        };
        let s = synthesize(&p, &opts).unwrap();
        let cen = exact_cost(&p, &s, CostMode::Centralized).unwrap();
        let dec = exact_cost(&p, &s, CostMode::Decentralized).unwrap();
        let oc = oracle_centralized_cost(&p, &s);
        let od = oracle_decentralized_cost(&p, &s, &decentralized_gains(&s));
        let gap = rel_gap(cen, oc).max(rel_gap(dec, od));
        let mc = simulate(&p, &s, SimMode::Both, 100_000, 12345).unwrap();
        let (mc_c, mc_d) = (mc.centralized.unwrap(), mc.decentralized.unwrap());
        let zc = (mc_c.mean - cen).abs() / mc_c.std_err;
        let zd = (mc_d.mean - dec).abs() / mc_d.std_err;
        ok &= gap <= 1e-8 && zc <= 4.0 && zd <= 4.0;
        lines.push(format!("{name}: oracle gap {gap:.1e}, MC {zc:.2}/{zd:.2} s.e."));
    }
    // Only the centralized law exists when substitutability fails.
    let name = "lqg_orthogonal.json";
    let p = read_lqg_problem(&fixture(name)).unwrap();
    let filter = kalman_schedule(&p, &LqgOptions::default()).unwrap();
    let riccati = lqr_schedule(&p, &Default::default()).unwrap();
    let s = GainSchedule {
        k: riccati.gains.clone(),
        l: filter.gains.clone(),
        lambda: (1..=p.n()).map(|i| Mat::zeros(p.d_u(i), p.d_u_total())).collect(),
        filter,
        riccati,
    };
    let cen = exact_cost(&p, &s, CostMode::Centralized).unwrap();
    let gap = rel_gap(cen, oracle_centralized_cost(&p, &s));
    let mc = simulate(&p, &s, SimMode::Centralized, 100_000, 12345).unwrap().centralized.unwrap();
    let z = (mc.mean - cen).abs() / mc.std_err;
    ok &= gap <= 1e-8 && z <= 4.0;
    lines.push(format!("{name} (centralized): oracle gap {gap:.1e}, MC {z:.2} s.e."));
    check(ok, lines.join("; "))
}

fn negative_fixtures() -> Verdict {
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_subteam"))
            .args(args)
            .output()
            .unwrap()
    };
    let team = run(&["analyze", fixture("orthogonal_team.json").to_str().unwrap()]);
    let lqg = run(&["solve-lqg", fixture("lqg_orthogonal.json").to_str().unwrap()]);
    let team_text = String::from_utf8_lossy(&team.stdout).into_owned() + &String::from_utf8_lossy(&team.stderr);
    let lqg_text = String::from_utf8_lossy(&lqg.stderr).into_owned();
    let named_pair = team_text.contains("critical pair (1,2)");
    let named_ctrl = lqg_text.contains("controller 1");
    check(
        team.status.code() == Some(3) && lqg.status.code() == Some(3) && named_pair && named_ctrl,
        format!(
            "team exit {:?} (names pair: {named_pair}), lqg exit {:?} (names controller: {named_ctrl})",
            team.status.code(),
            lqg.status.code()
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, v: Verdict| {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag}: {name}: {detail}");
    };

    report(1, "two-signal team end to end", two_signal_end_to_end());
    report(2, "correlated team optimality system", correlated_team_system());
    report(3, "correlated team rewrite", correlated_team_rewrite());

    let start = Instant::now();
    let teams = team_suite();
    let team_time = start.elapsed();
    report(4, "rewrite invariants on random teams", rewrite_property_suite(&teams, team_time));
    report(5, "stationarity of the static solution", stationarity(&teams));

    let start = Instant::now();
    let lqgs = lqg_suite();
    let lqg_time = start.elapsed();
    report(6, "centralized and decentralized exact costs", exact_equality(&lqgs, lqg_time));
    report(7, "local statistics sum to the estimate", pathwise_sum(&lqgs));
    report(8, "centralized cost bounds every local schedule", lower_bound(&lqgs));
    report(9, "noiseless selectors embed coordinates", perfect_observation_embedding());
    report(10, "oracle and Monte Carlo agreement", oracle_equivalence());
    report(11, "assumption failures exit 3", negative_fixtures());

    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
