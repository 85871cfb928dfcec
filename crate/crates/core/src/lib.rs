//! Linear-quadratic-Gaussian teams whose members can stand in for one
//! another, and decentralized LQG control built from a centralized solution.
//!
//! Team side: [`team`] models the problem and certifies that every critical
//! pair has a substituting member, [`static_team`] expands the information
//! structure until it is partially nested and solves the resulting static
//! team, and [`transform`] rewrites that optimal strategy so every member
//! reads only its own information. [`pipeline::solve_team`] runs all of it.
//!
//! Control side: [`lqg`] synthesizes the Kalman and Riccati schedules, the
//! per-controller maps `Λ^i`, exact closed-loop costs and seeded Monte Carlo
//! runs.
//!
//! Runnable examples, one per capability:
//!
//! - `pseudo_inverse`: pseudo-inverse, column-space containment, minimum-norm solves
//! - `precedence_analysis`: precedence, critical pairs and substitution certificates
//! - `static_team_solve`: expansion, static reduction and its optimality system
//! - `strategy_transform`: rewriting an optimal strategy step by step
//! - `decentralized_lqg`: gain schedules and exact costs of both laws
//! - `monte_carlo`: seeded simulation and the pathwise sum check
//! - `random_instances`: generated instances through both pipelines
//!
//! The `subteam` binary wraps the same functions behind the `analyze`,
//! `solve-team`, `solve-lqg`, `simulate` and `generate` subcommands.

pub mod cli;
pub mod error;
pub mod generate;
pub mod io;
pub mod lqg;
pub mod matrix;
pub mod pipeline;
pub mod static_team;
pub mod team;
pub mod transform;
