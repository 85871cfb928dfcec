//! Random instances that satisfy the substitutability assumptions by
//! construction, pushed through both pipelines.

use subteam::generate::{random_lqg, random_team, Dims};
use subteam::lqg::{exact_cost, synthesize, CostMode, LqgOptions};
use subteam::pipeline::{solve_team, TeamSolveOptions};

fn main() -> subteam::error::Result<()> {
    for seed in 0..8 {
        let p = random_team(seed, Dims::default())?;
        let sol = solve_team(&p, None, &TeamSolveOptions::default())?;
        println!(
            "team seed {seed}: n={} critical pairs {:?}, {} rewrite steps, cost {:.6} -> {:.6}",
            p.n(),
            sol.structure.critical_pairs(),
            sol.trace.iterations.len(),
            sol.expanded_cost,
            sol.final_cost
        );
    }
    for seed in 0..8 {
        let p = random_lqg(seed, Dims::default())?;
        let s = synthesize(&p, &LqgOptions::default())?;
        println!(
            "lqg seed {seed}: n={} d_x={} T={}, centralized {:.9}, decentralized {:.9}",
            p.n(),
            p.d_x(),
            p.horizon,
            exact_cost(&p, &s, CostMode::Centralized)?,
            exact_cost(&p, &s, CostMode::Decentralized)?
        );
    }
    Ok(())
}
