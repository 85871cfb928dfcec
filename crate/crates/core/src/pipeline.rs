//! End-to-end team solve: analyze, certify, expand, solve the static
//! reduction, realize the strategy, then rewrite it for the original
//! information structure.

use crate::error::{Error, Result};
use crate::matrix::{Mat, Tolerance};
use crate::static_team::{
    expand, expected_cost, realize_static_strategy, solve_static, static_from_gains, to_static,
    ExpandedProblem, LinearTeamStrategy, StaticObservations, StaticStrategy,
};
use crate::team::{Certificates, PrecedenceStructure, TeamProblem};
use crate::transform::{algorithm1, TransformOptions, TransformTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeamSolveOptions {
    pub tol: Tolerance,
    pub transform: TransformOptions,
    /// Largest tolerated gap between the expanded and the final cost,
    /// relative to `1 + |expanded cost|`.
    pub cost_tol: f64,
}

impl Default for TeamSolveOptions {
    fn default() -> Self {
        TeamSolveOptions {
            tol: Tolerance::default(),
            transform: TransformOptions::default(),
            cost_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TeamSolution {
    pub structure: PrecedenceStructure,
    pub certificates: Certificates,
    pub expanded: ExpandedProblem,
    pub observations: StaticObservations,
    pub static_strategy: StaticStrategy,
    /// The optimal strategy in the expanded information structure.
    pub expanded_strategy: LinearTeamStrategy,
    pub expanded_cost: f64,
    pub final_strategy: LinearTeamStrategy,
    pub final_cost: f64,
    pub trace: TransformTrace,
}

/// Runs the whole team pipeline. `pi` replaces the minimum-norm solution of
/// the optimality system with user-supplied gains, which must satisfy it.
pub fn solve_team(
    problem: &TeamProblem,
    pi: Option<Vec<Mat>>,
    opts: &TeamSolveOptions,
) -> Result<TeamSolution> {
    let structure = problem.analyze_precedence();
    let certificates = problem.certify_substitutability(&structure, &opts.tol)?;
    let expanded = expand(problem, &structure)?;
    let observations = to_static(&expanded);
    let static_strategy = match pi {
        Some(pi) => static_from_gains(problem, &observations, pi, &opts.tol)?,
        None => solve_static(problem, &observations, &opts.tol)?,
    };
    let expanded_strategy = realize_static_strategy(&expanded, &observations, &static_strategy)?;
    let expanded_cost = expected_cost(problem, Some(&expanded), &expanded_strategy)?;
    let outcome = algorithm1(&expanded_strategy, &expanded, &certificates, &opts.transform)?;
    let final_cost = expected_cost(problem, None, &outcome.strategy)?;
    if (final_cost - expanded_cost).abs() > opts.cost_tol * (1.0 + expanded_cost.abs()) {
        return Err(Error::InvarianceBroken(format!(
            "expanded cost {expanded_cost} and final cost {final_cost} differ"
        )));
    }
    Ok(TeamSolution {
        structure,
        certificates,
        expanded,
        observations,
        static_strategy,
        expanded_strategy,
        expanded_cost,
        final_strategy: outcome.strategy,
        final_cost,
        trace: outcome.trace,
    })
}
