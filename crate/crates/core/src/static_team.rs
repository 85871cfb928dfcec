//! Partially nested expansion, its static reduction, the linear optimality
//! system over the static gains, and linear strategy evaluation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::matrix::{is_exact_zero, quad_cost, solve_minimum_norm, vstack, Mat, Tolerance};
use crate::team::{transitive_closure, PrecedenceStructure, TeamProblem};

/// A block inside an expanded information vector, tagged with the member
/// whose original information contributed it first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedBlock {
    pub id: String,
    pub owner: usize,
}

#[derive(Debug, Clone)]
pub struct ExpandedProblem {
    pub base: TeamProblem,
    pub structure: PrecedenceStructure,
    /// `expanded_info[i-1]`: member `i`'s own blocks, then the blocks of each
    /// critical partner in increasing order, first occurrence kept.
    pub expanded_info: Vec<Vec<ExpandedBlock>>,
}

impl ExpandedProblem {
    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn blocks_of(&self, i: usize) -> &[ExpandedBlock] {
        &self.expanded_info[i - 1]
    }

    pub fn owner_of(&self, i: usize, block: &str) -> Option<usize> {
        self.expanded_info[i - 1]
            .iter()
            .find(|b| b.id == block)
            .map(|b| b.owner)
    }

    /// `H̃^i`.
    pub fn h_tilde(&self, i: usize) -> Mat {
        let rows: Vec<&Mat> = self.expanded_info[i - 1]
            .iter()
            .map(|b| &self.base.blocks[&b.id].h_rows)
            .collect();
        vstack(&rows, self.base.d_xi)
    }

    /// `D̃^{ij}`.
    pub fn d_tilde(&self, i: usize, j: usize) -> Mat {
        let d_u_j = self.base.d_u(j);
        let rows: Vec<Mat> = self.expanded_info[i - 1]
            .iter()
            .map(|b| self.base.blocks[&b.id].d_for(j, d_u_j))
            .collect();
        let refs: Vec<&Mat> = rows.iter().collect();
        vstack(&refs, d_u_j)
    }

    /// Row offset of every block inside `Z̃^i`.
    pub fn offsets(&self, i: usize) -> Vec<(String, usize, usize)> {
        let mut r = 0;
        self.expanded_info[i - 1]
            .iter()
            .map(|b| {
                let rows = self.base.blocks[&b.id].rows();
                let out = (b.id.clone(), r, rows);
                r += rows;
                out
            })
            .collect()
    }

    pub fn z_dim(&self, i: usize) -> usize {
        self.expanded_info[i - 1]
            .iter()
            .map(|b| self.base.blocks[&b.id].rows())
            .sum()
    }
}

/// Builds the partially nested expansion and checks that it is in fact
/// partially nested.
pub fn expand(problem: &TeamProblem, structure: &PrecedenceStructure) -> Result<ExpandedProblem> {
    let n = problem.n();
    let mut expanded_info = Vec::with_capacity(n);
    for i in 1..=n {
        let mut list: Vec<ExpandedBlock> = Vec::new();
        let mut seen = BTreeSet::new();
        let contributors = std::iter::once(i).chain(structure.critical_of(i).iter().cloned());
        for r in contributors {
            for b in &problem.member(r)?.info {
                if seen.insert(b.clone()) {
                    list.push(ExpandedBlock {
                        id: b.clone(),
                        owner: r,
                    });
                }
            }
        }
        expanded_info.push(list);
    }
    let expanded = ExpandedProblem {
        base: problem.clone(),
        structure: structure.clone(),
        expanded_info,
    };
    check_partially_nested(&expanded)?;
    Ok(expanded)
}

fn check_partially_nested(e: &ExpandedProblem) -> Result<()> {
    let n = e.n();
    let mut related = vec![vec![false; n]; n];
    for t in 1..=n {
        for b in e.blocks_of(t) {
            for s in e.base.blocks[&b.id].nonzero_sources() {
                related[s - 1][t - 1] = true;
            }
        }
    }
    let closure = transitive_closure(&related);
    for t in 1..=n {
        let have: BTreeSet<&str> = e.blocks_of(t).iter().map(|b| b.id.as_str()).collect();
        for s in 1..=n {
            if closure[s - 1][t - 1] && !e.blocks_of(s).iter().all(|b| have.contains(b.id.as_str()))
            {
                return Err(Error::Internal(format!(
                    "expanded information of member {t} misses information of its precedent {s}"
                )));
            }
        }
    }
    Ok(())
}

/// Static observations `Ẑ^i = Ĥ^i Ξ`. Rows of `H̃^i` that are identically
/// zero carry only decision information and are left out; `kept_rows`
/// records which rows of `Z̃^i` each row of `Ĥ^i` came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticObservations {
    pub h_hat: Vec<Mat>,
    pub kept_rows: Vec<Vec<usize>>,
}

pub fn to_static(expanded: &ExpandedProblem) -> StaticObservations {
    let mut h_hat = Vec::new();
    let mut kept_rows = Vec::new();
    for i in 1..=expanded.n() {
        let h = expanded.h_tilde(i);
        let kept: Vec<usize> = (0..h.nrows())
            .filter(|&r| h.row(r).iter().any(|&x| x != 0.0))
            .collect();
        h_hat.push(h.select_rows(kept.iter()));
        kept_rows.push(kept);
    }
    StaticObservations { h_hat, kept_rows }
}

/// The stacked linear system over `vec(Π^1), ..., vec(Π^n)` (column-major
/// vectorization), one equation block per member.
#[derive(Debug, Clone)]
pub struct OptimalitySystem {
    pub matrix: Mat,
    pub rhs: Mat,
    /// `(rows, cols)` of every `Π^i`.
    pub shapes: Vec<(usize, usize)>,
    pub offsets: Vec<usize>,
}

impl OptimalitySystem {
    pub fn unknowns(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn vectorize(&self, pi: &[Mat]) -> Result<Mat> {
        if pi.len() != self.shapes.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} gain matrices, got {}",
                self.shapes.len(),
                pi.len()
            )));
        }
        let mut x = Mat::zeros(self.unknowns(), 1);
        for (idx, (p, &shape)) in pi.iter().zip(&self.shapes).enumerate() {
            if p.shape() != shape {
                return Err(Error::DimensionMismatch(format!(
                    "gain of member {} is {}x{}, expected {}x{}",
                    idx + 1,
                    p.nrows(),
                    p.ncols(),
                    shape.0,
                    shape.1
                )));
            }
            for (k, v) in p.iter().enumerate() {
                x[(self.offsets[idx] + k, 0)] = *v;
            }
        }
        Ok(x)
    }

    pub fn unvectorize(&self, x: &Mat) -> Vec<Mat> {
        self.shapes
            .iter()
            .zip(&self.offsets)
            .map(|(&(r, c), &off)| Mat::from_column_slice(r, c, &x.as_slice()[off..off + r * c]))
            .collect()
    }

    /// `‖A vec(Π) − b‖_F`.
    pub fn residual(&self, pi: &[Mat]) -> Result<f64> {
        Ok((&self.matrix * self.vectorize(pi)? - &self.rhs).norm())
    }
}

pub fn assemble_optimality_system(
    problem: &TeamProblem,
    obs: &StaticObservations,
) -> OptimalitySystem {
    let n = problem.n();
    let shapes: Vec<(usize, usize)> = (1..=n)
        .map(|i| (problem.d_u(i), obs.h_hat[i - 1].nrows()))
        .collect();
    let mut offsets = Vec::with_capacity(n);
    let mut total = 0;
    for &(r, c) in &shapes {
        offsets.push(total);
        total += r * c;
    }
    let mut matrix = Mat::zeros(total, total);
    let mut rhs = Mat::zeros(total, 1);
    let sigma = &problem.sigma;
    for i in 1..=n {
        let ni = &problem.members[i - 1].n_block;
        let hi = &obs.h_hat[i - 1];
        let row0 = offsets[i - 1];
        let (ri, ci) = shapes[i - 1];
        for j in 1..=n {
            let nj = &problem.members[j - 1].n_block;
            let hj = &obs.h_hat[j - 1];
            let left = ni.transpose() * nj;
            let right = hj * sigma * hi.transpose();
            let block = right.transpose().kronecker(&left);
            let (rj, cj) = shapes[j - 1];
            debug_assert_eq!(block.shape(), (ri * ci, rj * cj));
            matrix
                .view_mut((row0, offsets[j - 1]), block.shape())
                .copy_from(&block);
        }
        let target = -(ni.transpose() * &problem.m * sigma * hi.transpose());
        for (k, v) in target.iter().enumerate() {
            rhs[(row0 + k, 0)] = *v;
        }
    }
    OptimalitySystem {
        matrix,
        rhs,
        shapes,
        offsets,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticStrategy {
    pub pi: Vec<Mat>,
    pub system_residual: f64,
}

/// Minimum-norm solution of the optimality system.
///
/// The system is always solvable (it is the stationarity condition of a
/// convex quadratic bounded below), so an inconsistent answer means the
/// rank cutoff discarded a small but genuine singular value. The cutoff is
/// then tightened, down to `1e-14`, before giving up.
pub fn solve_static(
    problem: &TeamProblem,
    obs: &StaticObservations,
    tol: &Tolerance,
) -> Result<StaticStrategy> {
    let system = assemble_optimality_system(problem, obs);
    let mut rel = tol.rel_tol;
    loop {
        let attempt = Tolerance {
            rel_tol: rel,
            ..*tol
        };
        let sol = solve_minimum_norm(&system.matrix, &system.rhs, &attempt)?;
        // Consistency is judged at the caller's tolerance as a backward
        // error, which stays meaningful when the system is ill-conditioned.
        let scale = system.matrix.norm() * sol.solution.norm() + system.rhs.norm();
        if tol.accepts(sol.residual, scale) {
            return Ok(StaticStrategy {
                pi: system.unvectorize(&sol.solution),
                system_residual: sol.residual,
            });
        }
        if rel <= 1e-14 {
            return Err(Error::AssumptionViolated(format!(
                "the linear optimality system has no solution (residual {:.3e})",
                sol.residual
            )));
        }
        rel = (rel * 1e-2).max(1e-14);
    }
}

/// Accepts a user-supplied solution after checking it satisfies the system.
pub fn static_from_gains(
    problem: &TeamProblem,
    obs: &StaticObservations,
    pi: Vec<Mat>,
    tol: &Tolerance,
) -> Result<StaticStrategy> {
    let system = assemble_optimality_system(problem, obs);
    let residual = system.residual(&pi)?;
    if !tol.accepts(residual, system.rhs.norm()) {
        return Err(Error::AssumptionViolated(format!(
            "supplied gains do not satisfy the optimality system (residual {residual:.3e})"
        )));
    }
    Ok(StaticStrategy {
        pi,
        system_residual: residual,
    })
}

/// `trace((M + Σ N^i Π^i Ĥ^i) Σ (...)ᵀ)`.
pub fn static_cost(problem: &TeamProblem, obs: &StaticObservations, pi: &[Mat]) -> Result<f64> {
    let mut g = problem.m.clone();
    for (idx, p) in pi.iter().enumerate() {
        g += &problem.members[idx].n_block * p * &obs.h_hat[idx];
    }
    quad_cost(&g, &problem.sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoMode {
    Original,
    Expanded,
}

/// Linear strategy `U^i = Σ_b K^{i,b} Z_b` over named information blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTeamStrategy {
    pub mode: InfoMode,
    /// `coeffs[i-1][block]`, each `d_u^i × rows(block)`. Missing blocks read
    /// as zero.
    pub coeffs: Vec<BTreeMap<String, Mat>>,
}

impl LinearTeamStrategy {
    pub fn zero(n: usize, mode: InfoMode) -> Self {
        LinearTeamStrategy {
            mode,
            coeffs: vec![BTreeMap::new(); n],
        }
    }

    pub fn coeff(&self, i: usize, block: &str) -> Option<&Mat> {
        self.coeffs[i - 1].get(block)
    }

    /// Blocks every member reads.
    pub fn reads(&self, i: usize) -> impl Iterator<Item = &String> {
        self.coeffs[i - 1].keys()
    }
}

/// Rewrites the static gains as coefficients over the expanded information
/// blocks, substituting precedents' decisions member by member.
pub fn realize_static_strategy(
    expanded: &ExpandedProblem,
    obs: &StaticObservations,
    strategy: &StaticStrategy,
) -> Result<LinearTeamStrategy> {
    let n = expanded.n();
    let mut coeffs: Vec<BTreeMap<String, Mat>> = Vec::with_capacity(n);
    for i in 1..=n {
        let d_u = expanded.base.d_u(i);
        let dim = expanded.z_dim(i);
        let mut w = Mat::zeros(d_u, dim);
        let pi = &strategy.pi[i - 1];
        for (col, &row) in obs.kept_rows[i - 1].iter().enumerate() {
            w.column_mut(row).copy_from(&pi.column(col));
        }
        // W (Z̃^i − Σ_j D̃^{ij} U^j)
        let offsets = expanded.offsets(i);
        let mut own: BTreeMap<String, Mat> = offsets
            .iter()
            .map(|(id, r0, rows)| (id.clone(), w.columns(*r0, *rows).into_owned()))
            .collect();
        for j in 1..i {
            let through = &w * expanded.d_tilde(i, j);
            if is_exact_zero(&through) {
                continue;
            }
            for (block, k) in &coeffs[j - 1] {
                if is_exact_zero(k) {
                    continue;
                }
                let slot = own.get_mut(block).ok_or_else(|| {
                    Error::Internal(format!(
                        "member {i} cannot reconstruct the decision of precedent {j}: block '{block}' missing"
                    ))
                })?;
                *slot -= &through * k;
            }
        }
        coeffs.push(own);
    }
    Ok(LinearTeamStrategy {
        mode: InfoMode::Expanded,
        coeffs,
    })
}

/// The end-to-end linear maps from `Ξ` induced by a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeControl {
    /// `U^i = P^i Ξ`.
    pub p: Vec<Mat>,
    /// Every registered block as a linear map of `Ξ`.
    pub z: BTreeMap<String, Mat>,
}

impl CompositeControl {
    /// `N U = (Σ N^i P^i) Ξ`.
    pub fn nu(&self, problem: &TeamProblem) -> Mat {
        let mut out = Mat::zeros(problem.m.nrows(), problem.d_xi);
        for (mem, p) in problem.members.iter().zip(&self.p) {
            out += &mem.n_block * p;
        }
        out
    }
}

fn available(problem: &TeamProblem, expanded: Option<&ExpandedProblem>, i: usize, mode: InfoMode) -> Result<BTreeSet<String>> {
    match mode {
        InfoMode::Original => Ok(problem.members[i - 1].info.iter().cloned().collect()),
        InfoMode::Expanded => {
            let e = expanded.ok_or_else(|| {
                Error::InfoViolation("expanded-mode strategy evaluated without an expansion".into())
            })?;
            Ok(e.blocks_of(i).iter().map(|b| b.id.clone()).collect())
        }
    }
}

fn block_composite(problem: &TeamProblem, id: &str, p: &[Mat]) -> Result<Mat> {
    let block = problem.block(id)?;
    let mut z = block.h_rows.clone();
    for (&j, d) in &block.d_rows {
        if is_exact_zero(d) {
            continue;
        }
        let pj = p.get(j - 1).ok_or_else(|| {
            Error::Internal(format!("block '{id}' depends on member {j} before it acts"))
        })?;
        z += d * pj;
    }
    Ok(z)
}

/// Forward substitution in member order.
pub fn composite(
    problem: &TeamProblem,
    expanded: Option<&ExpandedProblem>,
    strategy: &LinearTeamStrategy,
) -> Result<CompositeControl> {
    let n = problem.n();
    if strategy.coeffs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "strategy has {} members, problem has {n}",
            strategy.coeffs.len()
        )));
    }
    let mut p: Vec<Mat> = Vec::with_capacity(n);
    let mut z: BTreeMap<String, Mat> = BTreeMap::new();
    for i in 1..=n {
        let avail = available(problem, expanded, i, strategy.mode)?;
        let mut pi = Mat::zeros(problem.d_u(i), problem.d_xi);
        for (block, k) in &strategy.coeffs[i - 1] {
            if !avail.contains(block) {
                return Err(Error::InfoViolation(format!(
                    "member {i} reads block '{block}'"
                )));
            }
            let rows = problem.block(block)?.rows();
            if k.shape() != (problem.d_u(i), rows) {
                return Err(Error::DimensionMismatch(format!(
                    "member {i}, block '{block}': coefficient is {}x{}, expected {}x{}",
                    k.nrows(),
                    k.ncols(),
                    problem.d_u(i),
                    rows
                )));
            }
            if !z.contains_key(block) {
                let zb = block_composite(problem, block, &p)?;
                z.insert(block.clone(), zb);
            }
            pi += k * &z[block];
        }
        p.push(pi);
    }
    for id in problem.blocks.keys() {
        if !z.contains_key(id) {
            let zb = block_composite(problem, id, &p)?;
            z.insert(id.clone(), zb);
        }
    }
    Ok(CompositeControl { p, z })
}

/// `E[(MΞ + NU)ᵀ(MΞ + NU)]` under a linear strategy.
pub fn expected_cost(
    problem: &TeamProblem,
    expanded: Option<&ExpandedProblem>,
    strategy: &LinearTeamStrategy,
) -> Result<f64> {
    let c = composite(problem, expanded, strategy)?;
    let g = &problem.m + c.nu(problem);
    quad_cost(&g, &problem.sigma)
}
