//! Seeded Monte Carlo runs of the centralized and decentralized laws on
//! common noise, the pathwise check that the local statistics sum to the
//! centralized estimate, and the noiseless-selector case where each local
//! statistic is a coordinate embedding of the state.

use subteam::io::lqg_problem_from_json;
use subteam::lqg::{exact_cost, simulate, simulate_path, synthesize, CostMode, LqgOptions, SimMode};

fn main() -> subteam::error::Result<()> {
    let problem = lqg_problem_from_json(include_str!("../fixtures/lqg_scalar.json"))?;
    let schedule = synthesize(&problem, &LqgOptions::default())?;
    let exact = exact_cost(&problem, &schedule, CostMode::Centralized)?;
    let r = simulate(&problem, &schedule, SimMode::Both, 100_000, 42)?;
    let (c, d) = (r.centralized.unwrap(), r.decentralized.unwrap());
    println!("exact {exact}");
    println!("centralized   {} ± {}", c.mean, c.std_err);
    println!("decentralized {} ± {}", d.mean, d.std_err);
    println!("max |Z − Σ S| over all paths {:e}", r.max_sum_residual.unwrap());

    let problem = lqg_problem_from_json(include_str!("../fixtures/lqg_perfect_obs.json"))?;
    let opts = LqgOptions {
        allow_psd_noise: true,
        ..Default::default()
    };
    let schedule = synthesize(&problem, &opts)?;
    let path = simulate_path(&problem, &schedule, SimMode::Decentralized, 7, 0)?;
    for (t, (x, s)) in path.decentralized_x.iter().zip(&path.s).enumerate() {
        println!(
            "t={}: X = {:?}, S¹ = {:?}, S² = {:?}",
            t + 1,
            x.as_slice(),
            s[0].as_slice(),
            s[1].as_slice()
        );
    }
    println!("embedding deviation {:e}", path.embedding_deviation(&problem));
    Ok(())
}
