use crate::error::{Error, Result};
use crate::matrix::{block_diag, Mat};

use super::synthesis::{decentralized_gains, GainSchedule};
use super::LqgProblem;

/// A time-varying linear-Gaussian system `ζ_1 = Θ ω_1`,
/// `ζ_{t+1} = Φ_t ζ_t + Γ_t ω_{t+1}` with stage outputs `G_t ζ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub init_map: Mat,
    pub init_cov: Mat,
    /// `Φ_t`, `t = 1..T-1`.
    pub transitions: Vec<Mat>,
    /// `Γ_t`, `t = 1..T-1`.
    pub noise_maps: Vec<Mat>,
    pub noise_cov: Mat,
    /// `G_t`, `t = 1..T`.
    pub outputs: Vec<Mat>,
}

impl ClosedLoop {
    /// State covariances `Cov(ζ_t)`, `t = 1..T`.
    pub fn covariances(&self) -> Vec<Mat> {
        let mut out = Vec::with_capacity(self.outputs.len());
        let mut cov = &self.init_map * &self.init_cov * self.init_map.transpose();
        for t in 0..self.outputs.len() {
            cov = (&cov + cov.transpose()) * 0.5;
            out.push(cov.clone());
            if t < self.transitions.len() {
                let phi = &self.transitions[t];
                let gamma = &self.noise_maps[t];
                cov = phi * &cov * phi.transpose() + gamma * &self.noise_cov * gamma.transpose();
            }
        }
        out
    }

    /// `Σ_t trace(G_t Cov(ζ_t) G_tᵀ)`.
    pub fn expected_cost(&self) -> f64 {
        self.covariances()
            .iter()
            .zip(&self.outputs)
            .map(|(cov, g)| (g * cov * g.transpose()).trace())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    Centralized,
    Decentralized,
}

fn check_schedule(problem: &LqgProblem, schedule: &GainSchedule) -> Result<()> {
    let t = problem.horizon;
    if schedule.k.len() != t || schedule.l.len() != t || schedule.lambda.len() != problem.n() {
        return Err(Error::DimensionMismatch(format!(
            "schedule has {} control gains, {} filter gains and {} maps; problem has horizon {t} and {} controllers",
            schedule.k.len(),
            schedule.l.len(),
            schedule.lambda.len(),
            problem.n()
        )));
    }
    Ok(())
}

fn noise_cov(problem: &LqgProblem) -> Mat {
    block_diag(&[&problem.sigma_w, &problem.sigma_v])
}

fn init_cov(problem: &LqgProblem) -> Mat {
    block_diag(&[&problem.sigma_x, &problem.sigma_v])
}

/// Closed loop of `U_t = K_t Z_t` on the state `(X_t, Z_t)`.
pub fn centralized_loop(problem: &LqgProblem, schedule: &GainSchedule) -> Result<ClosedLoop> {
    check_schedule(problem, schedule)?;
    let dx = problem.d_x();
    let dy = problem.d_y_total();
    let a = &problem.a;
    let b = problem.b();
    let c = problem.c();
    let eye = Mat::identity(dx, dx);

    let mut init_map = Mat::zeros(2 * dx, dx + dy);
    init_map.view_mut((0, 0), (dx, dx)).copy_from(&eye);
    let l1 = &schedule.l[0];
    init_map.view_mut((dx, 0), (dx, dx)).copy_from(&(l1 * &c));
    init_map.view_mut((dx, dx), (dx, dy)).copy_from(l1);

    let mut transitions = Vec::new();
    let mut noise_maps = Vec::new();
    for t in 1..problem.horizon {
        let k = &schedule.k[t - 1];
        let l = &schedule.l[t];
        let lc = l * &c;
        let bk = &b * k;
        let mut phi = Mat::zeros(2 * dx, 2 * dx);
        phi.view_mut((0, 0), (dx, dx)).copy_from(a);
        phi.view_mut((0, dx), (dx, dx)).copy_from(&bk);
        phi.view_mut((dx, 0), (dx, dx)).copy_from(&(&lc * a));
        phi.view_mut((dx, dx), (dx, dx))
            .copy_from(&((&eye - &lc) * a + &bk));
        let mut gamma = Mat::zeros(2 * dx, dx + dy);
        gamma.view_mut((0, 0), (dx, dx)).copy_from(&eye);
        gamma.view_mut((dx, 0), (dx, dx)).copy_from(&lc);
        gamma.view_mut((dx, dx), (dx, dy)).copy_from(l);
        transitions.push(phi);
        noise_maps.push(gamma);
    }

    let n = problem.n_mat();
    let outputs = schedule
        .k
        .iter()
        .map(|k| {
            let mut g = Mat::zeros(problem.m.nrows(), 2 * dx);
            g.view_mut((0, 0), problem.m.shape()).copy_from(&problem.m);
            g.view_mut((0, dx), (problem.m.nrows(), dx)).copy_from(&(&n * k));
            g
        })
        .collect();

    Ok(ClosedLoop {
        init_map,
        init_cov: init_cov(problem),
        transitions,
        noise_maps,
        noise_cov: noise_cov(problem),
        outputs,
    })
}

/// Closed loop of `U^i_t = F^i_t S^i_t` on the state `(X_t, S^1_t, …, S^n_t)`,
/// with each `S^i` driven by `Y^i` and `U^i` only. `gains` is indexed
/// `[i-1][t-1]`.
pub fn decentralized_loop(
    problem: &LqgProblem,
    schedule: &GainSchedule,
    gains: &[Vec<Mat>],
) -> Result<ClosedLoop> {
    check_schedule(problem, schedule)?;
    let n = problem.n();
    if gains.len() != n || gains.iter().any(|g| g.len() != problem.horizon) {
        return Err(Error::DimensionMismatch(
            "decentralized gains must have one entry per controller and stage".into(),
        ));
    }
    for (i, per) in gains.iter().enumerate() {
        for f in per {
            if f.shape() != (problem.d_u(i + 1), problem.d_x()) {
                return Err(Error::DimensionMismatch(format!(
                    "gain for controller {} is {}x{}, expected {}x{}",
                    i + 1,
                    f.nrows(),
                    f.ncols(),
                    problem.d_u(i + 1),
                    problem.d_x()
                )));
            }
        }
    }
    let dx = problem.d_x();
    let dy = problem.d_y_total();
    let dim = (n + 1) * dx;
    let a = &problem.a;
    let c = problem.c();
    let eye = Mat::identity(dx, dx);

    // L^i E_i: the filter gain restricted to controller i's observation columns.
    let local_l = |l: &Mat, i: usize| {
        let mut out = Mat::zeros(dx, dy);
        let (off, rows) = (problem.y_offset(i), problem.d_y(i));
        out.view_mut((0, off), (dx, rows))
            .copy_from(&l.columns(off, rows));
        out
    };
    let local_lc = |l: &Mat, i: usize| {
        l.columns(problem.y_offset(i), problem.d_y(i)) * &problem.c_blocks[i - 1]
    };

    let mut init_map = Mat::zeros(dim, dx + dy);
    init_map.view_mut((0, 0), (dx, dx)).copy_from(&eye);
    for i in 1..=n {
        let r = i * dx;
        init_map.view_mut((r, 0), (dx, dx)).copy_from(&local_lc(&schedule.l[0], i));
        init_map.view_mut((r, dx), (dx, dy)).copy_from(&local_l(&schedule.l[0], i));
    }

    let mut transitions = Vec::new();
    let mut noise_maps = Vec::new();
    for t in 1..problem.horizon {
        let l = &schedule.l[t];
        let lc = l * &c;
        let bf: Vec<Mat> = (1..=n)
            .map(|j| &problem.b_blocks[j - 1] * &gains[j - 1][t - 1])
            .collect();
        // Next-state row shared by every S^i through its local innovation.
        let mut x_row = Mat::zeros(dx, dim);
        x_row.view_mut((0, 0), (dx, dx)).copy_from(a);
        for j in 1..=n {
            x_row.view_mut((0, j * dx), (dx, dx)).copy_from(&bf[j - 1]);
        }
        let mut phi = Mat::zeros(dim, dim);
        phi.view_mut((0, 0), (dx, dim)).copy_from(&x_row);
        let mut gamma = Mat::zeros(dim, dx + dy);
        gamma.view_mut((0, 0), (dx, dx)).copy_from(&eye);
        for i in 1..=n {
            let r = i * dx;
            let lci = local_lc(l, i);
            let mut rows = &lci * &x_row;
            let own = (&eye - &lc) * (a + &bf[i - 1]);
            let mut blk = rows.view_mut((0, r), (dx, dx));
            blk += &own;
            phi.view_mut((r, 0), (dx, dim)).copy_from(&rows);
            gamma.view_mut((r, 0), (dx, dx)).copy_from(&lci);
            gamma.view_mut((r, dx), (dx, dy)).copy_from(&local_l(l, i));
        }
        transitions.push(phi);
        noise_maps.push(gamma);
    }

    let rows = problem.m.nrows();
    let outputs = (0..problem.horizon)
        .map(|t| {
            let mut g = Mat::zeros(rows, dim);
            g.view_mut((0, 0), problem.m.shape()).copy_from(&problem.m);
            for i in 1..=n {
                g.view_mut((0, i * dx), (rows, dx))
                    .copy_from(&(&problem.n_blocks[i - 1] * &gains[i - 1][t]));
            }
            g
        })
        .collect();

    Ok(ClosedLoop {
        init_map,
        init_cov: init_cov(problem),
        transitions,
        noise_maps,
        noise_cov: noise_cov(problem),
        outputs,
    })
}

/// Total expected cost of the schedule's centralized law or of the
/// decentralized laws `Λ^i K_t`.
pub fn exact_cost(problem: &LqgProblem, schedule: &GainSchedule, mode: CostMode) -> Result<f64> {
    let closed = match mode {
        CostMode::Centralized => centralized_loop(problem, schedule)?,
        CostMode::Decentralized => {
            decentralized_loop(problem, schedule, &decentralized_gains(schedule))?
        }
    };
    Ok(closed.expected_cost())
}

/// Total expected cost of arbitrary per-controller gains `F^i_t` acting on
/// the local statistics `S^i_t`.
pub fn exact_cost_with_gains(
    problem: &LqgProblem,
    schedule: &GainSchedule,
    gains: &[Vec<Mat>],
) -> Result<f64> {
    Ok(decentralized_loop(problem, schedule, gains)?.expected_cost())
}

/// Largest entrywise violation of the row-sum identity between the
/// decentralized and centralized closed loops. Summing the `S^i` rows of
/// every decentralized matrix must give the centralized `Z` rows.
pub fn sum_identity_residual(problem: &LqgProblem, schedule: &GainSchedule) -> Result<f64> {
    let cen = centralized_loop(problem, schedule)?;
    let dec = decentralized_loop(problem, schedule, &decentralized_gains(schedule))?;
    let n = problem.n();
    let dx = problem.d_x();
    let mut sum = Mat::zeros(2 * dx, (n + 1) * dx);
    sum.view_mut((0, 0), (dx, dx)).fill_with_identity();
    for i in 1..=n {
        sum.view_mut((dx, i * dx), (dx, dx)).fill_with_identity();
    }
    let mut worst = (&sum * &dec.init_map - &cen.init_map).amax();
    for (phi_d, phi_c) in dec.transitions.iter().zip(&cen.transitions) {
        worst = worst.max((&sum * phi_d - phi_c * &sum).amax());
    }
    for (g_d, g_c) in dec.noise_maps.iter().zip(&cen.noise_maps) {
        worst = worst.max((&sum * g_d - g_c).amax());
    }
    for (o_d, o_c) in dec.outputs.iter().zip(&cen.outputs) {
        worst = worst.max((o_d - o_c * &sum).amax());
    }
    Ok(worst)
}
