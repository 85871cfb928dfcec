//! Rewriting an expanded-structure strategy so that every member reads only
//! its own information, with the per-step composite-control checks.

use subteam::io::{gains_from_map, team_problem_from_json};
use subteam::pipeline::{solve_team, TeamSolveOptions};

fn main() -> subteam::error::Result<()> {
    for (name, text, pi) in [
        ("two-signal team", include_str!("../fixtures/ex2.json"), None),
        (
            "correlated team",
            include_str!("../fixtures/ex3.json"),
            Some(include_str!("../fixtures/ex3_alt_pi.json")),
        ),
    ] {
        let problem = team_problem_from_json(text)?;
        let pi = match pi {
            Some(p) => Some(gains_from_map(serde_json::from_str(p)?, problem.n())?),
            None => None,
        };
        let sol = solve_team(&problem, pi, &TeamSolveOptions::default())?;
        println!("{name}");
        println!("  expanded cost {}", sol.expanded_cost);
        for step in &sol.trace.iterations {
            println!(
                "  step {}: member {} stops reading member {}'s blocks, member {} compensates \
                 (N U drift {:e}, information drift {:e}, {} violations left)",
                step.l,
                step.t,
                step.s,
                step.k,
                step.nu_drift.unwrap_or(f64::NAN),
                step.z_drift.unwrap_or(f64::NAN),
                step.violations_after
            );
        }
        for (i, c) in sol.final_strategy.coeffs.iter().enumerate() {
            let terms: Vec<String> = c.iter().map(|(b, k)| format!("{}·{b}", k[(0, 0)])).collect();
            println!("  U{} = {}", i + 1, terms.join(" + "));
        }
        println!("  final cost {}", sol.final_cost);
    }
    Ok(())
}
