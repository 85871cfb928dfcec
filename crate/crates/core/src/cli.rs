//! Batch command-line front end. Every command reads named files and writes
//! one JSON report to stdout or `--output`.
//!
//! Exit codes: 0 success, 2 unreadable or invalid input, 3 an assumption
//! does not hold, 4 a runtime invariant failed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{random_lqg, random_team, Dims};
use crate::io::{
    gains_from_map, gains_to_map, lqg_problem_to_json, read_json, read_lqg_problem,
    read_team_problem, team_problem_to_json, to_json, Rows, StrategyFile,
};
use crate::lqg::{
    coordinate_partition, decentralized_gains, exact_cost, simulate, simulate_path,
    sum_identity_residual, synthesize, CostMode, LqgOptions, LqgProblem, SimMode,
    SimulationResult,
};
use crate::matrix::{to_rows, Tolerance};
use crate::pipeline::{solve_team, TeamSolveOptions};
use crate::team::{Certificates, PrecedenceStructure, TeamProblem};
use crate::transform::{TransformOptions, TransformTrace};

/// Relative gap tolerated between the two exact LQG costs.
const LQG_COST_TOL: f64 = 1e-9;
/// Guard on the schedule-time row-sum identity.
const SUM_IDENTITY_GUARD: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "subteam", version, about = "Team and decentralized LQG solver")]
pub struct RunConfig {
    /// Absolute and relative tolerance for rank and containment decisions.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo paths.
    #[arg(long, global = true, default_value_t = 1000)]
    pub paths: usize,
    /// JSON file `{member: matrix}` replacing the minimum-norm static gains.
    #[arg(long, global = true)]
    pub pi_override: Option<PathBuf>,
    /// Accept a singular observation noise covariance.
    #[arg(long, global = true)]
    pub allow_psd_noise: bool,
    /// Skip the per-step composite-control checks during the rewrite.
    #[arg(long, global = true)]
    pub no_drift_checks: bool,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Precedence, critical pairs and substitution certificates of a team problem.
    Analyze { input: PathBuf },
    /// Solve a team problem and rewrite the strategy for its own information.
    SolveTeam { input: PathBuf },
    /// Synthesize centralized and decentralized LQG laws and compare their costs.
    SolveLqg { input: PathBuf },
    /// Monte Carlo simulation of an LQG problem under its synthesized laws.
    Simulate {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
    /// Write a random instance that satisfies the substitutability assumption.
    Generate {
        #[arg(value_enum)]
        kind: KindArg,
        #[arg(long)]
        n: Option<usize>,
        /// Exogenous or state dimension.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Centralized,
    Decentralized,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Team,
    Lqg,
}

impl From<ModeArg> for SimMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Centralized => SimMode::Centralized,
            ModeArg::Decentralized => SimMode::Decentralized,
            ModeArg::Both => SimMode::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub s: usize,
    pub t: usize,
    pub k: usize,
    pub lambda: Rows,
    pub containment_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// `[s, t]`: member `s`'s action enters member `t`'s information.
    pub related: Vec<[usize; 2]>,
    pub precedents: BTreeMap<String, Vec<usize>>,
    pub critical_pairs: Vec<[usize; 2]>,
    pub partially_nested: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub command: String,
    pub input: String,
    pub structure: StructureReport,
    pub certificates: Vec<CertificateReport>,
    pub failure: Option<String>,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTeamReport {
    pub command: String,
    pub input: String,
    pub structure: StructureReport,
    pub certificates: Vec<CertificateReport>,
    pub pi: BTreeMap<String, Rows>,
    pub system_residual: f64,
    pub expanded_strategy: StrategyFile,
    pub expanded_cost: f64,
    pub trace: TransformTrace,
    pub final_strategy: StrategyFile,
    pub final_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub seed: u64,
    pub paths: usize,
    pub centralized_mean: f64,
    pub centralized_std_err: f64,
    pub decentralized_mean: f64,
    pub decentralized_std_err: f64,
    pub max_sum_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveLqgReport {
    pub command: String,
    pub input: String,
    pub lambda: Vec<Rows>,
    /// `L_t`, `t = 1..T`.
    pub filter_gains: Vec<Rows>,
    /// `K_t`, `t = 1..T`.
    pub control_gains: Vec<Rows>,
    /// `Λ^i K_t`, indexed `[i-1][t-1]`.
    pub decentralized_gains: Vec<Vec<Rows>>,
    pub centralized_cost: f64,
    pub decentralized_cost: f64,
    pub sum_identity_residual: f64,
    pub monte_carlo: MonteCarloSummary,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub command: String,
    pub input: String,
    pub result: SimulationResult,
}

/// A finished command: the text to emit and the exit code.
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

impl RunConfig {
    fn tolerance(&self) -> Result<Tolerance> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Parse(format!("--tol must be positive, got {}", self.tol)));
        }
        Tolerance::uniform(self.tol)
    }

    fn team_options(&self) -> Result<TeamSolveOptions> {
        Ok(TeamSolveOptions {
            tol: self.tolerance()?,
            transform: TransformOptions {
                drift_checks: !self.no_drift_checks,
                ..Default::default()
            },
            ..Default::default()
        })
    }

    fn lqg_options(&self) -> Result<LqgOptions> {
        Ok(LqgOptions {
            allow_psd_noise: self.allow_psd_noise,
            tol: self.tolerance()?,
        })
    }

    fn check_paths(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Parse("--paths must be at least 1".into()));
        }
        Ok(())
    }
}

fn structure_report(problem: &TeamProblem, s: &PrecedenceStructure) -> StructureReport {
    let n = problem.n();
    let mut related = Vec::new();
    for a in 1..=n {
        for b in 1..=n {
            if s.related[a - 1][b - 1] {
                related.push([a, b]);
            }
        }
    }
    StructureReport {
        related,
        precedents: (1..=n)
            .map(|t| (t.to_string(), s.precedents_of(t).iter().cloned().collect()))
            .collect(),
        critical_pairs: s.critical_pairs().into_iter().map(|(a, b)| [a, b]).collect(),
        partially_nested: s.partially_nested,
    }
}

fn certificate_reports(certs: &Certificates) -> Vec<CertificateReport> {
    certs
        .values()
        .map(|c| CertificateReport {
            s: c.s,
            t: c.t,
            k: c.k,
            lambda: to_rows(&c.lambda),
            containment_residual: c.containment_residual,
        })
        .collect()
}

fn verdict(s: &PrecedenceStructure, certs: &[CertificateReport]) -> String {
    if s.partially_nested {
        return "partially nested; nothing to do".into();
    }
    let mut parts = vec!["not partially nested".to_string()];
    for (a, b) in s.critical_pairs() {
        parts.push(format!("critical pair ({a},{b})"));
        if let Some(c) = certs.iter().find(|c| c.s == a && c.t == b) {
            parts.push(format!("substituting member {}", c.k));
        }
    }
    parts.join("; ")
}

fn analyze(cfg: &RunConfig, input: &PathBuf) -> Result<Outcome> {
    let problem = read_team_problem(input)?;
    let structure = problem.analyze_precedence();
    let (certificates, failure, code) =
        match problem.certify_substitutability(&structure, &cfg.tolerance()?) {
            Ok(c) => (certificate_reports(&c), None, 0),
            Err(e @ Error::AssumptionViolated(_)) => (Vec::new(), Some(e.to_string()), e.exit_code()),
            Err(e) => return Err(e),
        };
    let mut verdict = verdict(&structure, &certificates);
    if let Some(f) = &failure {
        verdict = format!("{verdict}; {f}");
    }
    let report = AnalyzeReport {
        command: "analyze".into(),
        input: input.display().to_string(),
        structure: structure_report(&problem, &structure),
        certificates,
        failure,
        verdict,
    };
    Ok(Outcome {
        text: to_json(&report)?,
        code,
    })
}

fn solve_team_cmd(cfg: &RunConfig, input: &PathBuf) -> Result<Outcome> {
    let problem = read_team_problem(input)?;
    let pi = match &cfg.pi_override {
        Some(path) => Some(gains_from_map(read_json(path)?, problem.n())?),
        None => None,
    };
    let sol = solve_team(&problem, pi, &cfg.team_options()?)?;
    let report = SolveTeamReport {
        command: "solve-team".into(),
        input: input.display().to_string(),
        structure: structure_report(&problem, &sol.structure),
        certificates: certificate_reports(&sol.certificates),
        pi: gains_to_map(&sol.static_strategy.pi),
        system_residual: sol.static_strategy.system_residual,
        expanded_strategy: StrategyFile::from_strategy(&sol.expanded_strategy),
        expanded_cost: sol.expanded_cost,
        trace: sol.trace,
        final_strategy: StrategyFile::from_strategy(&sol.final_strategy),
        final_cost: sol.final_cost,
    };
    Ok(Outcome {
        text: to_json(&report)?,
        code: 0,
    })
}

fn embedding_note(problem: &LqgProblem, schedule: &crate::lqg::GainSchedule, seed: u64) -> Result<Option<String>> {
    let noiseless = problem.sigma_v.iter().all(|&v| v == 0.0);
    if !(noiseless && coordinate_partition(problem)) {
        return Ok(None);
    }
    let trace = simulate_path(problem, schedule, SimMode::Decentralized, seed, 0)?;
    Ok(Some(format!(
        "each controller observes its own state coordinates without noise, so S^i_t is the coordinate embedding of those coordinates of X_t (max deviation {:e} on path 0)",
        trace.embedding_deviation(problem)
    )))
}

fn solve_lqg_cmd(cfg: &RunConfig, input: &PathBuf) -> Result<Outcome> {
    cfg.check_paths()?;
    let problem = read_lqg_problem(input)?;
    let schedule = synthesize(&problem, &cfg.lqg_options()?)?;
    let cen = exact_cost(&problem, &schedule, CostMode::Centralized)?;
    let dec = exact_cost(&problem, &schedule, CostMode::Decentralized)?;
    if (cen - dec).abs() > LQG_COST_TOL * cen.abs().max(1.0) {
        return Err(Error::InvarianceBroken(format!(
            "centralized cost {cen} and decentralized cost {dec} differ"
        )));
    }
    let identity = sum_identity_residual(&problem, &schedule)?;
    if identity > SUM_IDENTITY_GUARD {
        return Err(Error::InvarianceBroken(format!(
            "closed-loop row sums differ from the centralized loop by {identity:e}"
        )));
    }
    let sim = simulate(&problem, &schedule, SimMode::Both, cfg.paths, cfg.seed)?;
    let (c, d) = (
        sim.centralized.as_ref().expect("both modes simulated"),
        sim.decentralized.as_ref().expect("both modes simulated"),
    );
    let mut notes = Vec::new();
    if problem.n() == 1 {
        notes.push("single controller: the decentralized law is the centralized law".into());
    }
    notes.extend(embedding_note(&problem, &schedule, cfg.seed)?);
    let report = SolveLqgReport {
        command: "solve-lqg".into(),
        input: input.display().to_string(),
        lambda: schedule.lambda.iter().map(to_rows).collect(),
        filter_gains: schedule.l.iter().map(to_rows).collect(),
        control_gains: schedule.k.iter().map(to_rows).collect(),
        decentralized_gains: decentralized_gains(&schedule)
            .iter()
            .map(|per| per.iter().map(to_rows).collect())
            .collect(),
        centralized_cost: cen,
        decentralized_cost: dec,
        sum_identity_residual: identity,
        monte_carlo: MonteCarloSummary {
            seed: sim.seed,
            paths: sim.paths,
            centralized_mean: c.mean,
            centralized_std_err: c.std_err,
            decentralized_mean: d.mean,
            decentralized_std_err: d.std_err,
            max_sum_residual: sim.max_sum_residual.unwrap_or(0.0),
        },
        warnings: schedule.filter.warnings.clone(),
        notes,
    };
    Ok(Outcome {
        text: to_json(&report)?,
        code: 0,
    })
}

fn simulate_cmd(cfg: &RunConfig, input: &PathBuf, mode: ModeArg) -> Result<Outcome> {
    cfg.check_paths()?;
    let problem = read_lqg_problem(input)?;
    let schedule = synthesize(&problem, &cfg.lqg_options()?)?;
    let result = simulate(&problem, &schedule, mode.into(), cfg.paths, cfg.seed)?;
    let report = SimulateReport {
        command: "simulate".into(),
        input: input.display().to_string(),
        result,
    };
    Ok(Outcome {
        text: to_json(&report)?,
        code: 0,
    })
}

fn generate_cmd(cfg: &RunConfig, kind: KindArg, dims: Dims) -> Result<Outcome> {
    let text = match kind {
        KindArg::Team => team_problem_to_json(&random_team(cfg.seed, dims)?)?,
        KindArg::Lqg => lqg_problem_to_json(&random_lqg(cfg.seed, dims)?)?,
    };
    Ok(Outcome { text, code: 0 })
}

/// Runs one parsed command.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    match &cfg.command {
        Command::Analyze { input } => analyze(cfg, input),
        Command::SolveTeam { input } => solve_team_cmd(cfg, input),
        Command::SolveLqg { input } => solve_lqg_cmd(cfg, input),
        Command::Simulate { input, mode } => simulate_cmd(cfg, input, *mode),
        Command::Generate {
            kind,
            n,
            dim,
            horizon,
        } => generate_cmd(
            cfg,
            *kind,
            Dims {
                n: *n,
                d: *dim,
                horizon: *horizon,
            },
        ),
    }
}

/// Parses arguments, runs the command, emits the report and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match execute(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cfg.output {
        Some(path) => std::fs::write(path, format!("{}\n", outcome.text)),
        None => {
            println!("{}", outcome.text);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 2;
    }
    if outcome.code == 3 {
        eprintln!("error: assumption violated (see report)");
    }
    outcome.code
}
