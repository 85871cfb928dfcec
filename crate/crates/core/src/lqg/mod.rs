//! Finite-horizon decentralized LQG control with substitutable actions.
//!
//! The centralized problem (all observations and actions shared) is solved
//! with a Kalman filter and a cross-weighted Riccati recursion. Its optimal
//! law `U_t = K_t Z_t` is then split into per-controller laws
//! `U^i_t = Λ^i K_t S^i_t`, where each `S^i_t` is driven only by controller
//! `i`'s own observations and actions and the `S^i_t` sum to `Z_t`.

mod closed_loop;
mod simulate;
mod synthesis;

pub use closed_loop::{
    centralized_loop, decentralized_loop, exact_cost, exact_cost_with_gains, sum_identity_residual,
    ClosedLoop, CostMode,
};
pub use simulate::{
    coordinate_partition, simulate, simulate_path, CostStats, PathTrace, SimMode, SimulationResult,
    SUM_IDENTITY_TOL,
};
pub use synthesis::{
    certify_lqg_substitutability, decentralized_gains, kalman_schedule, lqr_schedule, synthesize,
    FilterSchedule, GainSchedule, RiccatiSchedule,
};

use crate::error::{Error, Result};
use crate::matrix::{check_symmetric, hstack, min_eigenvalue, vstack, Mat, Tolerance};

#[derive(Debug, Clone, PartialEq)]
pub struct LqgProblem {
    pub horizon: usize,
    pub a: Mat,
    pub b_blocks: Vec<Mat>,
    pub c_blocks: Vec<Mat>,
    pub sigma_x: Mat,
    pub sigma_w: Mat,
    pub sigma_v: Mat,
    pub m: Mat,
    pub n_blocks: Vec<Mat>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqgOptions {
    /// Accept a positive semidefinite observation noise covariance; the
    /// innovation covariance is then inverted with a pseudo-inverse.
    pub allow_psd_noise: bool,
    pub tol: Tolerance,
}

impl Default for LqgOptions {
    fn default() -> Self {
        LqgOptions {
            allow_psd_noise: false,
            tol: Tolerance::default(),
        }
    }
}

impl LqgProblem {
    pub fn n(&self) -> usize {
        self.b_blocks.len()
    }

    pub fn d_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn d_u(&self, i: usize) -> usize {
        self.b_blocks[i - 1].ncols()
    }

    pub fn d_u_total(&self) -> usize {
        self.b_blocks.iter().map(|b| b.ncols()).sum()
    }

    pub fn d_y(&self, i: usize) -> usize {
        self.c_blocks[i - 1].nrows()
    }

    pub fn d_y_total(&self) -> usize {
        self.c_blocks.iter().map(|c| c.nrows()).sum()
    }

    /// Offset of controller `i`'s action inside `U_t`.
    pub fn u_offset(&self, i: usize) -> usize {
        self.b_blocks[..i - 1].iter().map(|b| b.ncols()).sum()
    }

    /// Offset of controller `i`'s observation inside `Y_t`.
    pub fn y_offset(&self, i: usize) -> usize {
        self.c_blocks[..i - 1].iter().map(|c| c.nrows()).sum()
    }

    pub fn b(&self) -> Mat {
        let refs: Vec<&Mat> = self.b_blocks.iter().collect();
        hstack(&refs, self.d_x())
    }

    pub fn c(&self) -> Mat {
        let refs: Vec<&Mat> = self.c_blocks.iter().collect();
        vstack(&refs, self.d_x())
    }

    pub fn n_mat(&self) -> Mat {
        let refs: Vec<&Mat> = self.n_blocks.iter().collect();
        hstack(&refs, self.m.nrows())
    }

    /// `[B^i; N^i]`.
    pub fn action_stack(&self, i: usize) -> Mat {
        vstack(&[&self.b_blocks[i - 1], &self.n_blocks[i - 1]], self.d_u(i))
    }

    /// `[B; N]`.
    pub fn full_stack(&self) -> Mat {
        vstack(&[&self.b(), &self.n_mat()], self.d_u_total())
    }

    pub fn validate(&self, opts: &LqgOptions) -> Result<()> {
        let mut v = Vec::new();
        let n = self.n();
        let dx = self.d_x();
        if n == 0 {
            v.push("no controllers".to_string());
        }
        if self.horizon == 0 {
            v.push("horizon must be at least 1".to_string());
        }
        if !self.a.is_square() {
            v.push(format!("A is {}x{}, must be square", self.a.nrows(), self.a.ncols()));
        }
        if self.c_blocks.len() != n || self.n_blocks.len() != n {
            v.push(format!(
                "{} B blocks, {} C blocks, {} N blocks: counts must agree",
                n,
                self.c_blocks.len(),
                self.n_blocks.len()
            ));
        }
        for (i, b) in self.b_blocks.iter().enumerate() {
            if b.nrows() != dx || b.ncols() == 0 {
                v.push(format!("B^{} is {}x{}", i + 1, b.nrows(), b.ncols()));
            }
        }
        for (i, c) in self.c_blocks.iter().enumerate() {
            if c.ncols() != dx {
                v.push(format!("C^{} has {} columns, expected {dx}", i + 1, c.ncols()));
            }
        }
        if self.m.ncols() != dx {
            v.push(format!("M has {} columns, expected {dx}", self.m.ncols()));
        }
        for (i, nb) in self.n_blocks.iter().enumerate() {
            let du = self.b_blocks.get(i).map_or(0, |b| b.ncols());
            if nb.shape() != (self.m.nrows(), du) {
                v.push(format!(
                    "N^{} is {}x{}, expected {}x{du}",
                    i + 1,
                    nb.nrows(),
                    nb.ncols(),
                    self.m.nrows()
                ));
            }
        }
        let dy: usize = self.c_blocks.iter().map(|c| c.nrows()).sum();
        for (name, s, dim, need_pd) in [
            ("Sigma_x", &self.sigma_x, dx, false),
            ("Sigma_w", &self.sigma_w, dx, false),
            ("Sigma_v", &self.sigma_v, dy, !opts.allow_psd_noise),
        ] {
            if s.shape() != (dim, dim) {
                v.push(format!("{name} is {}x{}, expected {dim}x{dim}", s.nrows(), s.ncols()));
                continue;
            }
            if let Err(e) = check_symmetric(s, &opts.tol) {
                v.push(format!("{name}: {e}"));
                continue;
            }
            let lmin = min_eigenvalue(s);
            let scale = 1e-12 * (1.0 + s.amax());
            if need_pd && lmin <= 0.0 {
                v.push(format!(
                    "{name} must be positive definite (smallest eigenvalue {lmin:e}); pass allow_psd_noise to relax"
                ));
            } else if lmin < -scale {
                v.push(format!("{name} is not positive semidefinite (smallest eigenvalue {lmin:e})"));
            }
        }
        if self.a.iter().chain(self.m.iter()).any(|x| !x.is_finite()) {
            v.push("non-finite entries".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProblem(v))
        }
    }
}
