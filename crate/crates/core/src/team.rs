//! One-shot LQG team problems, their precedence structure, and the
//! substitutability certificates for critical pairs.
//!
//! Members are indexed from 1, matching the problem files. Information is
//! declared as a list of named blocks per member; a block is a group of
//! rows `H Ξ + Σ_j D[j] U^j` and may be shared by several members, which is
//! how the sub-vector relation between information vectors is expressed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::matrix::{
    colspace_contains, is_exact_zero, min_eigenvalue, pinv_with, vstack, Mat, Tolerance,
};

#[derive(Debug, Clone, PartialEq)]
pub struct InfoBlock {
    pub id: String,
    pub h_rows: Mat,
    /// Keyed by the acting member; an absent entry is a zero block.
    pub d_rows: BTreeMap<usize, Mat>,
}

impl InfoBlock {
    pub fn rows(&self) -> usize {
        self.h_rows.nrows()
    }

    /// Dependence on member `j`'s action, materialized as zeros when absent.
    pub fn d_for(&self, j: usize, d_u_j: usize) -> Mat {
        self.d_rows
            .get(&j)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(self.rows(), d_u_j))
    }

    /// Acting members with a nonzero dependence block.
    pub fn nonzero_sources(&self) -> impl Iterator<Item = usize> + '_ {
        self.d_rows
            .iter()
            .filter(|(_, d)| !is_exact_zero(d))
            .map(|(&j, _)| j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub d_u: usize,
    /// Cost column block `N^i`.
    pub n_block: Mat,
    /// Ordered information block ids.
    pub info: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamProblem {
    pub d_xi: usize,
    pub sigma: Mat,
    pub m: Mat,
    pub members: Vec<Member>,
    pub blocks: BTreeMap<String, InfoBlock>,
}

impl TeamProblem {
    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn member(&self, i: usize) -> Result<&Member> {
        if i == 0 || i > self.members.len() {
            return Err(Error::BadIndex(i));
        }
        Ok(&self.members[i - 1])
    }

    pub fn block(&self, id: &str) -> Result<&InfoBlock> {
        self.blocks
            .get(id)
            .ok_or_else(|| Error::InvalidProblem(vec![format!("unknown block '{id}'")]))
    }

    pub fn d_u(&self, i: usize) -> usize {
        self.members[i - 1].d_u
    }

    /// Runs `validate` and turns any findings into an error.
    pub fn checked(self) -> Result<Self> {
        let v = validate(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidProblem(v))
        }
    }

    /// `N = [N^1 ... N^n]`.
    pub fn n_full(&self) -> Mat {
        let blocks: Vec<&Mat> = self.members.iter().map(|m| &m.n_block).collect();
        crate::matrix::hstack(&blocks, self.m.nrows())
    }

    /// `H^i`: the stacked H rows of member `i`'s information.
    pub fn h_matrix(&self, i: usize) -> Mat {
        let rows: Vec<&Mat> = self.members[i - 1]
            .info
            .iter()
            .map(|b| &self.blocks[b].h_rows)
            .collect();
        vstack(&rows, self.d_xi)
    }

    /// `D^{ij}`: how member `i`'s information depends on member `j`'s action.
    pub fn d_matrix(&self, i: usize, j: usize) -> Mat {
        let d_u_j = self.d_u(j);
        let rows: Vec<Mat> = self.members[i - 1]
            .info
            .iter()
            .map(|b| self.blocks[b].d_for(j, d_u_j))
            .collect();
        let refs: Vec<&Mat> = rows.iter().collect();
        vstack(&refs, d_u_j)
    }

    /// `[N^j; D^{1j}; ...; D^{nj}]`: every effect of member `j`'s action on
    /// the cost and on all information.
    pub fn action_stack(&self, j: usize) -> Mat {
        let mut parts = vec![self.members[j - 1].n_block.clone()];
        for m in 1..=self.n() {
            parts.push(self.d_matrix(m, j));
        }
        let refs: Vec<&Mat> = parts.iter().collect();
        vstack(&refs, self.d_u(j))
    }

    /// True iff every block of member `s` is also a block of member `k`.
    pub fn subvector(&self, s: usize, k: usize) -> Result<bool> {
        let ms = self.member(s)?;
        let mk = self.member(k)?;
        let have: BTreeSet<&String> = mk.info.iter().collect();
        Ok(ms.info.iter().all(|b| have.contains(b)))
    }

    pub fn analyze_precedence(&self) -> PrecedenceStructure {
        let n = self.n();
        let mut related = vec![vec![false; n]; n];
        for (t, mem) in self.members.iter().enumerate() {
            for b in &mem.info {
                for s in self.blocks[b].nonzero_sources() {
                    if (1..=n).contains(&s) {
                        related[s - 1][t] = true;
                    }
                }
            }
        }
        let closure = transitive_closure(&related);
        let mut precedents = vec![BTreeSet::new(); n];
        let mut critical = vec![BTreeSet::new(); n];
        for t in 0..n {
            for s in 0..n {
                if closure[s][t] {
                    precedents[t].insert(s + 1);
                    if !self.subvector(s + 1, t + 1).unwrap_or(false) {
                        critical[t].insert(s + 1);
                    }
                }
            }
        }
        let partially_nested = critical.iter().all(|c| c.is_empty());
        PrecedenceStructure {
            related,
            precedents,
            critical,
            partially_nested,
        }
    }

    /// Finds, for every critical pair, the smallest-index substituting
    /// member and its action map.
    pub fn certify_substitutability(
        &self,
        structure: &PrecedenceStructure,
        tol: &Tolerance,
    ) -> Result<Certificates> {
        let mut certs = BTreeMap::new();
        let mut failures = Vec::new();
        for (s, t) in structure.critical_pairs() {
            let target = self.action_stack(t);
            let mut best: Option<(usize, f64)> = None;
            let mut found = None;
            for k in 1..=self.n() {
                if !self.subvector(s, k)? {
                    continue;
                }
                let candidate = self.action_stack(k);
                let c = colspace_contains(&target, &candidate, tol)?;
                if c.contained {
                    let lambda = pinv_with(&candidate, tol)? * &target;
                    found = Some(SubstitutionCertificate {
                        s,
                        t,
                        k,
                        containment_residual: (&candidate * &lambda - &target).norm(),
                        lambda,
                    });
                    break;
                }
                if best.is_none_or(|(_, r)| c.max_residual < r) {
                    best = Some((k, c.max_residual));
                }
            }
            match found {
                Some(cert) => {
                    certs.insert((s, t), cert);
                }
                None => failures.push(match best {
                    Some((k, r)) => format!(
                        "critical pair ({s},{t}): no substituting member (best residual {r:.3e} at member {k})"
                    ),
                    None => format!(
                        "critical pair ({s},{t}): no member holds the information of member {s}"
                    ),
                }),
            }
        }
        if failures.is_empty() {
            Ok(certs)
        } else {
            Err(Error::AssumptionViolated(failures.join("; ")))
        }
    }
}

/// Certificates keyed by critical pair `(s, t)`.
pub type Certificates = BTreeMap<(usize, usize), SubstitutionCertificate>;

#[derive(Debug, Clone, PartialEq)]
pub struct PrecedenceStructure {
    /// `related[s-1][t-1]`: member `s`'s action enters member `t`'s information.
    pub related: Vec<Vec<bool>>,
    /// `precedents[t-1]`.
    pub precedents: Vec<BTreeSet<usize>>,
    /// `critical[t-1]`: precedents of `t` whose information `t` lacks.
    pub critical: Vec<BTreeSet<usize>>,
    pub partially_nested: bool,
}

impl PrecedenceStructure {
    pub fn precedents_of(&self, t: usize) -> &BTreeSet<usize> {
        &self.precedents[t - 1]
    }

    pub fn critical_of(&self, t: usize) -> &BTreeSet<usize> {
        &self.critical[t - 1]
    }

    /// All critical pairs `(s, t)` ordered by `t` then `s`.
    pub fn critical_pairs(&self) -> Vec<(usize, usize)> {
        self.critical
            .iter()
            .enumerate()
            .flat_map(|(t, set)| set.iter().map(move |&s| (s, t + 1)))
            .collect()
    }
}

/// Reachability through one or more edges.
pub fn transitive_closure(related: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = related.len();
    let mut reach = related.to_vec();
    for via in 0..n {
        for s in 0..n {
            if !reach[s][via] {
                continue;
            }
            for t in 0..n {
                if reach[via][t] {
                    reach[s][t] = true;
                }
            }
        }
    }
    reach
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionCertificate {
    pub s: usize,
    pub t: usize,
    /// Substituting member.
    pub k: usize,
    /// Maps an action of `t` to the equivalent action of `k`.
    pub lambda: Mat,
    pub containment_residual: f64,
}

impl SubstitutionCertificate {
    /// `‖stack_k Λ − stack_t‖_F` recomputed against the problem.
    pub fn reproduction_residual(&self, problem: &TeamProblem) -> f64 {
        (problem.action_stack(self.k) * &self.lambda - problem.action_stack(self.t)).norm()
    }
}

/// Reports every structural problem with the instance. Never fails.
pub fn validate(p: &TeamProblem) -> Vec<String> {
    let mut v = Vec::new();
    let n = p.n();
    if n == 0 {
        v.push("team has no members".to_string());
    }
    if p.sigma.shape() != (p.d_xi, p.d_xi) {
        v.push(format!(
            "sigma is {}x{}, expected {}x{}",
            p.sigma.nrows(),
            p.sigma.ncols(),
            p.d_xi,
            p.d_xi
        ));
    } else if p.sigma.iter().any(|x| !x.is_finite()) {
        v.push("sigma has non-finite entries".to_string());
    } else {
        let asym = (&p.sigma - p.sigma.transpose()).amax();
        if asym > 1e-9 * (1.0 + p.sigma.amax()) {
            v.push(format!("sigma is not symmetric (max asymmetry {asym:e})"));
        } else if p.d_xi > 0 && min_eigenvalue(&p.sigma) <= 0.0 {
            v.push("sigma is not positive definite".to_string());
        }
    }
    if p.m.ncols() != p.d_xi {
        v.push(format!("M has {} columns, expected {}", p.m.ncols(), p.d_xi));
    }
    for (idx, mem) in p.members.iter().enumerate() {
        let i = idx + 1;
        if mem.d_u == 0 {
            v.push(format!("member {i}: action dimension must be at least 1"));
        }
        if mem.n_block.shape() != (p.m.nrows(), mem.d_u) {
            v.push(format!(
                "member {i}: N is {}x{}, expected {}x{}",
                mem.n_block.nrows(),
                mem.n_block.ncols(),
                p.m.nrows(),
                mem.d_u
            ));
        }
        let mut seen = BTreeSet::new();
        for b in &mem.info {
            if !seen.insert(b) {
                v.push(format!("member {i}: block '{b}' listed twice"));
            }
            let Some(block) = p.blocks.get(b) else {
                v.push(format!("member {i}: unknown block '{b}'"));
                continue;
            };
            for (&j, d) in &block.d_rows {
                if j >= i && !is_exact_zero(d) {
                    v.push(format!(
                        "member {i}, block '{b}': D[{j}] must be zero; information may only depend on decisions of members 1..{}",
                        i - 1
                    ));
                }
            }
        }
    }
    for (id, block) in &p.blocks {
        if &block.id != id {
            v.push(format!("block registered as '{id}' carries id '{}'", block.id));
        }
        if block.h_rows.ncols() != p.d_xi {
            v.push(format!(
                "block '{id}': H has {} columns, expected {}",
                block.h_rows.ncols(),
                p.d_xi
            ));
        }
        for (&j, d) in &block.d_rows {
            if j == 0 || j > n {
                v.push(format!("block '{id}': D refers to unknown member {j}"));
                continue;
            }
            if d.shape() != (block.rows(), p.members[j - 1].d_u) {
                v.push(format!(
                    "block '{id}': D[{j}] is {}x{}, expected {}x{}",
                    d.nrows(),
                    d.ncols(),
                    block.rows(),
                    p.members[j - 1].d_u
                ));
            }
        }
    }
    v
}

/// A member described by raw `H^i` and `D^{ij}` matrices, without block ids.
#[derive(Debug, Clone)]
pub struct RawMember {
    pub d_u: usize,
    pub n_block: Mat,
    pub h: Mat,
    pub d: BTreeMap<usize, Mat>,
}

/// Builds a problem whose blocks are single rows, shared between members
/// exactly when their `(H, D)` rows are bitwise identical.
pub fn infer_blocks(sigma: Mat, m: Mat, raw: Vec<RawMember>) -> Result<TeamProblem> {
    let d_xi = sigma.nrows();
    let d_us: Vec<usize> = raw.iter().map(|r| r.d_u).collect();
    let mut ids: HashMap<Vec<u64>, String> = HashMap::new();
    let mut blocks = BTreeMap::new();
    let mut members = Vec::with_capacity(raw.len());
    for (idx, r) in raw.into_iter().enumerate() {
        if r.h.ncols() != d_xi {
            return Err(Error::DimensionMismatch(format!(
                "member {}: H has {} columns, expected {d_xi}",
                idx + 1,
                r.h.ncols()
            )));
        }
        let mut info = Vec::new();
        for row in 0..r.h.nrows() {
            let mut key: Vec<u64> = r.h.row(row).iter().map(|x| x.to_bits()).collect();
            let mut d_rows = BTreeMap::new();
            for (j, &d_u_j) in d_us.iter().enumerate() {
                let d_row = match r.d.get(&(j + 1)) {
                    Some(d) => {
                        if d.shape() != (r.h.nrows(), d_u_j) {
                            return Err(Error::DimensionMismatch(format!(
                                "member {}: D[{}] has shape {:?}",
                                idx + 1,
                                j + 1,
                                d.shape()
                            )));
                        }
                        d.rows(row, 1).into_owned()
                    }
                    None => Mat::zeros(1, d_u_j),
                };
                key.extend(d_row.iter().map(|x| x.to_bits()));
                if !is_exact_zero(&d_row) {
                    d_rows.insert(j + 1, d_row);
                }
            }
            let next = ids.len();
            let id = ids.entry(key).or_insert_with(|| format!("z{next}")).clone();
            blocks.entry(id.clone()).or_insert_with(|| InfoBlock {
                id: id.clone(),
                h_rows: r.h.rows(row, 1).into_owned(),
                d_rows,
            });
            if !info.contains(&id) {
                info.push(id);
            }
        }
        members.push(Member {
            d_u: r.d_u,
            n_block: r.n_block,
            info,
        });
    }
    Ok(TeamProblem {
        d_xi,
        sigma,
        m,
        members,
        blocks,
    })
}
