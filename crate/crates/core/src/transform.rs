//! Rewrites an optimal strategy of the expanded information structure into
//! one that each member can implement with its own information.
//!
//! Each step moves one illegal dependence of member `t` on a critical
//! partner `s` over to the substituting member `k`, which already holds
//! `s`'s information. The team's combined effect `N U` and every
//! information block stay pathwise identical; that is checked after every
//! step.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::static_team::{composite, ExpandedProblem, InfoMode, LinearTeamStrategy};
use crate::team::{Certificates, SubstitutionCertificate};

/// `E^i`: the critical partners whose information member `i` still reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationSet {
    pub per_member: Vec<BTreeSet<usize>>,
}

impl ViolationSet {
    pub fn total(&self) -> usize {
        self.per_member.iter().map(|s| s.len()).sum()
    }

    pub fn of(&self, i: usize) -> &BTreeSet<usize> {
        &self.per_member[i - 1]
    }
}

fn above(k: &crate::matrix::Mat, prune: f64) -> bool {
    k.iter().any(|v| v.abs() > prune)
}

/// Member `i` uses `Z^r` when some block contributed to `Z̃^i` by `r`
/// carries a coefficient whose magnitude exceeds `prune`.
pub fn violations(
    strategy: &LinearTeamStrategy,
    expanded: &ExpandedProblem,
    prune: f64,
) -> ViolationSet {
    let n = expanded.n();
    let mut per_member = vec![BTreeSet::new(); n];
    if strategy.mode == InfoMode::Original {
        return ViolationSet { per_member };
    }
    for i in 1..=n {
        for (block, k) in &strategy.coeffs[i - 1] {
            match expanded.owner_of(i, block) {
                Some(owner) if owner != i && above(k, prune) => {
                    per_member[i - 1].insert(owner);
                }
                _ => {}
            }
        }
    }
    ViolationSet { per_member }
}

/// One substitution step for member `t` reading partner `s`.
pub fn procedure1(
    strategy: &LinearTeamStrategy,
    expanded: &ExpandedProblem,
    t: usize,
    s: usize,
    certificate: &SubstitutionCertificate,
) -> Result<LinearTeamStrategy> {
    if certificate.s != s || certificate.t != t {
        return Err(Error::BadCertificate(format!(
            "certificate is for pair ({},{}), step needs ({s},{t})",
            certificate.s, certificate.t
        )));
    }
    let k = certificate.k;
    let base = &expanded.base;
    if certificate.lambda.shape() != (base.d_u(k), base.d_u(t)) {
        return Err(Error::BadCertificate(format!(
            "map has shape {:?}, expected ({}, {})",
            certificate.lambda.shape(),
            base.d_u(k),
            base.d_u(t)
        )));
    }
    let moved: Vec<String> = strategy.coeffs[t - 1]
        .iter()
        .filter(|(b, kk)| expanded.owner_of(t, b) == Some(s) && above(kk, 0.0))
        .map(|(b, _)| b.clone())
        .collect();
    if moved.is_empty() {
        return Err(Error::NothingToDo(format!(
            "member {t} does not use the information of member {s}"
        )));
    }
    let own_k: BTreeSet<&String> = base.member(k)?.info.iter().collect();
    let mut next = strategy.clone();
    for b in moved {
        if !own_k.contains(&b) {
            return Err(Error::BadCertificate(format!(
                "substituting member {k} does not hold block '{b}'"
            )));
        }
        let kts = next.coeffs[t - 1]
            .remove(&b)
            .expect("moved block present");
        let add = &certificate.lambda * kts;
        next.coeffs[k - 1]
            .entry(b)
            .and_modify(|c| *c += &add)
            .or_insert(add);
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    /// `‖N P_after − N P_before‖_F`.
    pub nu_drift: f64,
    /// Largest block composite change.
    pub z_drift: f64,
    pub nu_scale: f64,
    pub z_scale: f64,
}

impl Drift {
    pub fn within(&self, tol: f64) -> bool {
        self.nu_drift <= tol * (1.0 + self.nu_scale) && self.z_drift <= tol * (1.0 + self.z_scale)
    }
}

/// Compares two strategies on the expanded problem: the combined action
/// effect `N U` and every information block, as linear maps of `Ξ`.
pub fn verify_claim1(
    before: &LinearTeamStrategy,
    after: &LinearTeamStrategy,
    expanded: &ExpandedProblem,
) -> Result<Drift> {
    let base = &expanded.base;
    let cb = composite(base, Some(expanded), before)?;
    let ca = composite(base, Some(expanded), after)?;
    let nu_b = cb.nu(base);
    let nu_drift = (ca.nu(base) - &nu_b).norm();
    let mut z_drift: f64 = 0.0;
    let mut z_scale: f64 = 0.0;
    for (id, zb) in &cb.z {
        z_scale = z_scale.max(zb.norm());
        z_drift = z_drift.max((&ca.z[id] - zb).norm());
    }
    Ok(Drift {
        nu_drift,
        z_drift,
        nu_scale: nu_b.norm(),
        z_scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformOptions {
    /// Coefficients at or below this magnitude on foreign blocks are zeroed
    /// before counting violations.
    pub prune: f64,
    pub drift_checks: bool,
    pub drift_tol: f64,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions {
            prune: 0.0,
            drift_checks: true,
            drift_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub l: usize,
    pub t: usize,
    pub s: usize,
    pub k: usize,
    pub nu_drift: Option<f64>,
    pub z_drift: Option<f64>,
    pub violations_after: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformTrace {
    pub initial_violations: usize,
    pub iterations: Vec<TraceStep>,
}

#[derive(Debug, Clone)]
pub struct TransformOutcome {
    pub strategy: LinearTeamStrategy,
    pub trace: TransformTrace,
}

/// Applies substitution steps for `t = 1..n`, always taking the smallest
/// remaining partner of `t`, until no member reads foreign information.
/// The result is re-tagged for the original information structure.
pub fn algorithm1(
    strategy: &LinearTeamStrategy,
    expanded: &ExpandedProblem,
    certificates: &Certificates,
    opts: &TransformOptions,
) -> Result<TransformOutcome> {
    if strategy.mode == InfoMode::Original {
        return Ok(TransformOutcome {
            strategy: strategy.clone(),
            trace: TransformTrace::default(),
        });
    }
    let mut current = strategy.clone();
    if opts.prune > 0.0 {
        prune_foreign(&mut current, expanded, opts.prune);
    }
    let mut pending = violations(&current, expanded, 0.0);
    let mut trace = TransformTrace {
        initial_violations: pending.total(),
        iterations: Vec::new(),
    };
    let mut l = 0;
    for t in 1..=expanded.n() {
        while let Some(&s) = pending.per_member[t - 1].iter().next() {
            let cert = certificates.get(&(s, t)).ok_or_else(|| {
                Error::AssumptionViolated(format!(
                    "no substitution certificate for critical pair ({s},{t})"
                ))
            })?;
            let next = procedure1(&current, expanded, t, s, cert)?;
            let drift = if opts.drift_checks {
                let d = verify_claim1(&current, &next, expanded)?;
                if !d.within(opts.drift_tol) {
                    return Err(Error::InvarianceBroken(format!(
                        "step {l} (t={t}, s={s}, k={}): N U drift {:.3e}, information drift {:.3e}",
                        cert.k, d.nu_drift, d.z_drift
                    )));
                }
                Some(d)
            } else {
                None
            };
            pending.per_member[t - 1].remove(&s);
            let recount = violations(&next, expanded, 0.0);
            if recount != pending {
                return Err(Error::InvarianceBroken(format!(
                    "step {l} (t={t}, s={s}) left violations {:?}, expected {:?}",
                    recount.per_member, pending.per_member
                )));
            }
            trace.iterations.push(TraceStep {
                l,
                t,
                s,
                k: cert.k,
                nu_drift: drift.map(|d| d.nu_drift),
                z_drift: drift.map(|d| d.z_drift),
                violations_after: recount.total(),
            });
            current = next;
            l += 1;
        }
    }
    Ok(TransformOutcome {
        strategy: retag_original(current, expanded)?,
        trace,
    })
}

fn prune_foreign(strategy: &mut LinearTeamStrategy, expanded: &ExpandedProblem, prune: f64) {
    for (idx, coeffs) in strategy.coeffs.iter_mut().enumerate() {
        let i = idx + 1;
        for (b, k) in coeffs.iter_mut() {
            if expanded.owner_of(i, b).is_some_and(|o| o != i) {
                k.iter_mut().filter(|v| v.abs() <= prune).for_each(|v| *v = 0.0);
            }
        }
    }
}

/// Drops the (necessarily zero) coefficients on foreign blocks.
fn retag_original(
    mut strategy: LinearTeamStrategy,
    expanded: &ExpandedProblem,
) -> Result<LinearTeamStrategy> {
    for (idx, coeffs) in strategy.coeffs.iter_mut().enumerate() {
        let i = idx + 1;
        let own: BTreeSet<&String> = expanded.base.members[idx].info.iter().collect();
        let mut kept = BTreeMap::new();
        for (b, k) in std::mem::take(coeffs) {
            if own.contains(&b) {
                kept.insert(b, k);
            } else if above(&k, 0.0) {
                return Err(Error::Internal(format!(
                    "member {i} still reads foreign block '{b}'"
                )));
            }
        }
        *coeffs = kept;
    }
    strategy.mode = InfoMode::Original;
    Ok(strategy)
}
