//! Precedence relation, critical pairs and substitution certificates of a
//! four-member team in which member 3 can stand in for member 2.

use subteam::io::team_problem_from_json;
use subteam::matrix::Tolerance;

fn main() -> subteam::error::Result<()> {
    let problem = team_problem_from_json(include_str!("../fixtures/eq4.json"))?;
    let structure = problem.analyze_precedence();

    for t in 1..=problem.n() {
        println!(
            "member {t}: reads {:?}, precedents {:?}, missing information of {:?}",
            problem.members[t - 1].info,
            structure.precedents_of(t),
            structure.critical_of(t)
        );
    }
    println!("partially nested: {}", structure.partially_nested);

    let certs = problem.certify_substitutability(&structure, &Tolerance::default())?;
    for c in certs.values() {
        println!(
            "pair ({},{}): member {} substitutes with Λ = {} (residual {:e})",
            c.s,
            c.t,
            c.k,
            c.lambda,
            c.containment_residual
        );
    }
    Ok(())
}
