use crate::error::{Error, Result};
use crate::matrix::{colspace_contains, min_eigenvalue, pinv_with, Mat, Tolerance};

use super::{LqgOptions, LqgProblem};

/// `Λ^i = [B^i; N^i]† [B; N]` for every controller, after checking that
/// all `[B^i; N^i]` span the column space of `[B; N]`.
pub fn certify_lqg_substitutability(problem: &LqgProblem, tol: &Tolerance) -> Result<Vec<Mat>> {
    let full = problem.full_stack();
    let mut out = Vec::with_capacity(problem.n());
    let mut failures = Vec::new();
    for i in 1..=problem.n() {
        let own = problem.action_stack(i);
        let forward = colspace_contains(&full, &own, tol)?;
        let backward = colspace_contains(&own, &full, tol)?;
        if !(forward.contained && backward.contained) {
            failures.push(format!(
                "controller {i}: [B^{i}; N^{i}] cannot reproduce every joint action (residual {:.3e})",
                forward.max_residual.max(backward.max_residual)
            ));
            continue;
        }
        // A lone controller's stack is the joint stack, and the identity is
        // an exact map even when the stack is rank deficient.
        out.push(if problem.n() == 1 {
            Mat::identity(own.ncols(), own.ncols())
        } else {
            pinv_with(&own, tol)? * &full
        });
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::AssumptionViolated(failures.join("; ")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSchedule {
    /// `L_t`, `t = 1..T`.
    pub gains: Vec<Mat>,
    /// Error covariance before the measurement update at `t`.
    pub prior: Vec<Mat>,
    /// Error covariance after the measurement update at `t`.
    pub posterior: Vec<Mat>,
    pub warnings: Vec<String>,
}

fn symmetrize(p: &Mat) -> Mat {
    (p + p.transpose()) * 0.5
}

/// Forward Kalman recursion starting from `P_1⁻ = Σ_x`.
pub fn kalman_schedule(problem: &LqgProblem, opts: &LqgOptions) -> Result<FilterSchedule> {
    let c = problem.c();
    let dx = problem.d_x();
    let eye = Mat::identity(dx, dx);
    let mut prior_t = problem.sigma_x.clone();
    let mut out = FilterSchedule {
        gains: Vec::with_capacity(problem.horizon),
        prior: Vec::with_capacity(problem.horizon),
        posterior: Vec::with_capacity(problem.horizon),
        warnings: Vec::new(),
    };
    for t in 1..=problem.horizon {
        let innovation = symmetrize(&(&c * &prior_t * c.transpose() + &problem.sigma_v));
        let cross = &prior_t * c.transpose();
        let lmin = min_eigenvalue(&innovation);
        let scale = innovation.amax().max(f64::MIN_POSITIVE);
        let gain = if innovation.nrows() == 0 {
            Mat::zeros(dx, 0)
        } else if lmin > 1e-12 * scale {
            let chol = innovation
                .clone()
                .cholesky()
                .ok_or(Error::SingularInnovation(t))?;
            // L S = P Cᵀ  ⇔  S Lᵀ = C P
            chol.solve(&cross.transpose()).transpose()
        } else if opts.allow_psd_noise {
            out.warnings.push(format!(
                "t={t}: innovation covariance is singular (smallest eigenvalue {lmin:e}); using pseudo-inverse"
            ));
            &cross * pinv_with(&innovation, &opts.tol)?
        } else {
            return Err(Error::SingularInnovation(t));
        };
        let posterior = symmetrize(&((&eye - &gain * &c) * &prior_t));
        let next = symmetrize(&(&problem.a * &posterior * problem.a.transpose() + &problem.sigma_w));
        out.gains.push(gain);
        out.prior.push(prior_t);
        out.posterior.push(posterior);
        prior_t = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSchedule {
    /// `K_t`, `t = 1..T`.
    pub gains: Vec<Mat>,
    /// `P_t`, `t = 1..T+1` (the last one is zero).
    pub cost_to_go: Vec<Mat>,
}

/// Backward recursion for the stage cost `‖M x + N u‖²` with `P_{T+1} = 0`.
/// Singular `G_t` is handled with the pseudo-inverse, which picks the
/// minimum-norm gain.
pub fn lqr_schedule(problem: &LqgProblem, tol: &Tolerance) -> Result<RiccatiSchedule> {
    let a = &problem.a;
    let b = problem.b();
    let m = &problem.m;
    let n = problem.n_mat();
    let dx = problem.d_x();
    let horizon = problem.horizon;
    let ntn = n.transpose() * &n;
    let ntm = n.transpose() * m;
    let mtm = m.transpose() * m;
    let mut p_next = Mat::zeros(dx, dx);
    let mut gains = vec![Mat::zeros(0, 0); horizon];
    let mut cost_to_go = vec![Mat::zeros(dx, dx); horizon + 1];
    for t in (1..=horizon).rev() {
        let g = symmetrize(&(&ntn + b.transpose() * &p_next * &b));
        let f = &ntm + b.transpose() * &p_next * a;
        let g_pinv = pinv_with(&g, tol)?;
        let k = -(&g_pinv * &f);
        let p = symmetrize(&(&mtm + a.transpose() * &p_next * a - f.transpose() * &g_pinv * &f));
        gains[t - 1] = k;
        cost_to_go[t - 1] = p.clone();
        p_next = p;
    }
    Ok(RiccatiSchedule { gains, cost_to_go })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    /// Centralized control gains `K_t`.
    pub k: Vec<Mat>,
    /// Filter gains `L_t`.
    pub l: Vec<Mat>,
    /// Substitution maps `Λ^i`.
    pub lambda: Vec<Mat>,
    pub filter: FilterSchedule,
    pub riccati: RiccatiSchedule,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.k.len()
    }

    /// `L^i_t`: the columns of `L_t` acting on controller `i`'s observation.
    pub fn l_block(&self, problem: &LqgProblem, t: usize, i: usize) -> Mat {
        self.l[t - 1]
            .columns(problem.y_offset(i), problem.d_y(i))
            .into_owned()
    }
}

/// Validates, certifies substitutability, and computes both recursions.
pub fn synthesize(problem: &LqgProblem, opts: &LqgOptions) -> Result<GainSchedule> {
    problem.validate(opts)?;
    let lambda = certify_lqg_substitutability(problem, &opts.tol)?;
    let filter = kalman_schedule(problem, opts)?;
    let riccati = lqr_schedule(problem, &opts.tol)?;
    Ok(GainSchedule {
        k: riccati.gains.clone(),
        l: filter.gains.clone(),
        lambda,
        filter,
        riccati,
    })
}

/// `Λ^i K_t`, indexed `[i-1][t-1]`.
pub fn decentralized_gains(schedule: &GainSchedule) -> Vec<Vec<Mat>> {
    schedule
        .lambda
        .iter()
        .map(|lam| schedule.k.iter().map(|k| lam * k).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, d: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, d)
    }

    fn scalar_two_controller(horizon: usize) -> LqgProblem {
        LqgProblem {
            horizon,
            a: m(1, 1, &[1.0]),
            b_blocks: vec![m(1, 1, &[1.0]), m(1, 1, &[1.0])],
            c_blocks: vec![m(1, 1, &[1.0]), m(1, 1, &[1.0])],
            sigma_x: m(1, 1, &[1.0]),
            sigma_w: m(1, 1, &[1.0]),
            sigma_v: Mat::identity(2, 2),
            m: m(1, 1, &[1.0]),
            n_blocks: vec![m(1, 1, &[1.0]), m(1, 1, &[1.0])],
        }
    }

    #[test]
    fn sum_of_actions_maps() {
        let p = scalar_two_controller(1);
        let lam = certify_lqg_substitutability(&p, &Tolerance::default()).unwrap();
        for l in &lam {
            assert!((l - m(1, 2, &[1.0, 1.0])).amax() < 1e-14);
        }
    }

    #[test]
    fn disjoint_actuation_fails() {
        let mut p = scalar_two_controller(1);
        p.a = Mat::identity(2, 2);
        p.b_blocks = vec![m(2, 1, &[1.0, 0.0]), m(2, 1, &[0.0, 1.0])];
        p.c_blocks = vec![m(1, 2, &[1.0, 0.0]), m(1, 2, &[0.0, 1.0])];
        p.sigma_x = Mat::identity(2, 2);
        p.sigma_w = Mat::identity(2, 2);
        p.m = m(1, 2, &[1.0, 1.0]);
        p.n_blocks = vec![Mat::zeros(1, 1), Mat::zeros(1, 1)];
        match certify_lqg_substitutability(&p, &Tolerance::default()) {
            Err(Error::AssumptionViolated(msg)) => assert!(msg.contains("controller 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_controller_map_is_identity() {
        let mut p = scalar_two_controller(1);
        p.b_blocks = vec![m(1, 2, &[1.0, 2.0])];
        p.c_blocks = vec![m(1, 1, &[1.0])];
        p.n_blocks = vec![m(1, 2, &[0.5, -1.0])];
        p.sigma_v = m(1, 1, &[1.0]);
        let lam = certify_lqg_substitutability(&p, &Tolerance::default()).unwrap();
        assert_eq!(lam[0], Mat::identity(2, 2));
    }

    #[test]
    fn scalar_filter_gain() {
        let mut p = scalar_two_controller(1);
        p.b_blocks.truncate(1);
        p.c_blocks.truncate(1);
        p.n_blocks.truncate(1);
        p.sigma_v = m(1, 1, &[1.0]);
        p.sigma_w = m(1, 1, &[0.0]);
        let f = kalman_schedule(&p, &LqgOptions::default()).unwrap();
        assert!((f.gains[0][(0, 0)] - 0.5).abs() < 1e-15);

        p.sigma_v = m(1, 1, &[1e12]);
        let f = kalman_schedule(&p, &LqgOptions::default()).unwrap();
        assert!(f.gains[0][(0, 0)].abs() < 1e-11);
    }

    #[test]
    fn perfect_observation_gain_is_identity() {
        let p = LqgProblem {
            horizon: 1,
            a: Mat::identity(2, 2),
            b_blocks: vec![Mat::identity(2, 2)],
            c_blocks: vec![Mat::identity(2, 2)],
            sigma_x: m(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            sigma_w: Mat::identity(2, 2),
            sigma_v: Mat::zeros(2, 2),
            m: Mat::identity(2, 2),
            n_blocks: vec![Mat::identity(2, 2)],
        };
        assert!(p.validate(&LqgOptions::default()).is_err());
        let opts = LqgOptions {
            allow_psd_noise: true,
            ..Default::default()
        };
        p.validate(&opts).unwrap();
        let f = kalman_schedule(&p, &opts).unwrap();
        assert!((&f.gains[0] - Mat::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn singular_innovation_without_psd_flag() {
        let mut p = scalar_two_controller(1);
        p.sigma_x = m(1, 1, &[0.0]);
        p.sigma_v = Mat::zeros(2, 2);
        assert!(matches!(
            kalman_schedule(&p, &LqgOptions::default()),
            Err(Error::SingularInnovation(1))
        ));
    }

    #[test]
    fn riccati_single_step_examples() {
        let mut p = scalar_two_controller(1);
        let k = lqr_schedule(&p, &Tolerance::default()).unwrap();
        assert!((&k.gains[0] - m(2, 1, &[-0.5, -0.5])).amax() < 1e-14);

        p.b_blocks.truncate(1);
        p.n_blocks.truncate(1);
        let k = lqr_schedule(&p, &Tolerance::default()).unwrap();
        assert!((k.gains[0][(0, 0)] + 1.0).abs() < 1e-15);

        p.m = m(1, 1, &[0.0]);
        p.horizon = 3;
        let k = lqr_schedule(&p, &Tolerance::default()).unwrap();
        assert!(k.gains.iter().all(|g| g.amax() == 0.0));
    }

    #[test]
    fn decentralized_gain_products() {
        let p = scalar_two_controller(1);
        let s = synthesize(&p, &LqgOptions::default()).unwrap();
        let g = decentralized_gains(&s);
        assert_eq!(g.len(), 2);
        for per in &g {
            assert!((per[0][(0, 0)] + 1.0).abs() < 1e-14);
        }
    }
}
