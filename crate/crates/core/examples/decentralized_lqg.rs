//! Kalman and Riccati schedules for a two-controller scalar plant, the
//! decentralized gains Λ^i K_t, and the exact cost of both laws.

use subteam::io::lqg_problem_from_json;
use subteam::lqg::{
    decentralized_gains, exact_cost, sum_identity_residual, synthesize, CostMode, LqgOptions,
};

fn main() -> subteam::error::Result<()> {
    let problem = lqg_problem_from_json(include_str!("../fixtures/lqg_scalar.json"))?;
    let schedule = synthesize(&problem, &LqgOptions::default())?;

    for (i, lam) in schedule.lambda.iter().enumerate() {
        println!("Λ^{} = {lam}", i + 1);
    }
    let local = decentralized_gains(&schedule);
    for t in 1..=problem.horizon {
        println!(
            "t={t}: L = {:?}, K = {:?}, controller gains {:?}",
            schedule.l[t - 1].as_slice(),
            schedule.k[t - 1].as_slice(),
            local.iter().map(|g| g[t - 1][(0, 0)]).collect::<Vec<_>>()
        );
    }

    let cen = exact_cost(&problem, &schedule, CostMode::Centralized)?;
    let dec = exact_cost(&problem, &schedule, CostMode::Decentralized)?;
    println!("centralized cost   {cen}");
    println!("decentralized cost {dec}");
    println!(
        "row-sum identity residual {:e}",
        sum_identity_residual(&problem, &schedule)?
    );
    Ok(())
}
