//! Expansion to a partially nested structure, the static reduction and its
//! linear optimality system, on a three-member team where member 2 only
//! sees member 1's action.

use subteam::io::team_problem_from_json;
use subteam::matrix::{Mat, Tolerance};
use subteam::static_team::{
    assemble_optimality_system, expand, realize_static_strategy, solve_static, static_cost,
    static_from_gains, to_static,
};

fn main() -> subteam::error::Result<()> {
    let tol = Tolerance::default();
    let problem = team_problem_from_json(include_str!("../fixtures/ex3.json"))?;
    let expanded = expand(&problem, &problem.analyze_precedence())?;
    let obs = to_static(&expanded);
    for i in 1..=problem.n() {
        let ids: Vec<&str> = expanded.blocks_of(i).iter().map(|b| b.id.as_str()).collect();
        println!("member {i}: expanded blocks {ids:?}, Ĥ = {}", obs.h_hat[i - 1]);
    }

    let system = assemble_optimality_system(&problem, &obs);
    println!("optimality system:{}rhs:{}", system.matrix, system.rhs);

    // The system is singular; every solution has the same cost.
    let min_norm = solve_static(&problem, &obs, &tol)?;
    let one = |x: f64| Mat::from_element(1, 1, x);
    let other = static_from_gains(&problem, &obs, vec![one(0.0), one(1.0), one(-1.5)], &tol)?;
    for (name, s) in [("minimum norm", &min_norm), ("alternative", &other)] {
        let pi: Vec<f64> = s.pi.iter().map(|p| p[(0, 0)]).collect();
        println!(
            "{name}: Π = {pi:?}, residual {:e}, cost {}",
            s.system_residual,
            static_cost(&problem, &obs, &s.pi)?
        );
    }

    let strategy = realize_static_strategy(&expanded, &obs, &other)?;
    for (i, c) in strategy.coeffs.iter().enumerate() {
        let terms: Vec<String> = c.iter().map(|(b, k)| format!("{}·{b}", k[(0, 0)])).collect();
        println!("U{} = {}", i + 1, terms.join(" + "));
    }
    Ok(())
}
