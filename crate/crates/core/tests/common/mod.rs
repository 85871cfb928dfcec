//! Independent reference computations shared by the integration tests.
//!
//! The LQG oracles never propagate covariances. They push the literal
//! recursions through as linear maps of the stacked noise
//! `ω = (X_1, V_1, W_1, V_2, …, W_{T-1}, V_T)` and read costs off weighted
//! Frobenius norms.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::Cholesky;
use subteam::lqg::{GainSchedule, LqgProblem};
use subteam::matrix::Mat;
use subteam::static_team::StaticObservations;
use subteam::team::TeamProblem;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub const LQG_FIXTURES: [&str; 3] = ["lqg_scalar.json", "lqg_single.json", "lqg_perfect_obs.json"];

/// Column offsets of each noise piece inside `ω`.
pub struct NoiseLayout {
    pub dx: usize,
    pub dy: usize,
    pub horizon: usize,
}

impl NoiseLayout {
    pub fn new(p: &LqgProblem) -> Self {
        NoiseLayout {
            dx: p.a.nrows(),
            dy: p.c_blocks.iter().map(|c| c.nrows()).sum(),
            horizon: p.horizon,
        }
    }

    pub fn dim(&self) -> usize {
        self.dx + self.dy + (self.horizon - 1) * (self.dx + self.dy)
    }

    fn x1(&self) -> usize {
        0
    }

    /// `V_t`, `t ≥ 1`.
    fn v(&self, t: usize) -> usize {
        self.dx + (t - 1) * (self.dx + self.dy)
    }

    /// `W_t`, `t ≥ 1`.
    fn w(&self, t: usize) -> usize {
        self.v(t) + self.dy
    }

    fn select(&self, offset: usize, rows: usize) -> Mat {
        let mut s = Mat::zeros(rows, self.dim());
        s.view_mut((0, offset), (rows, rows)).fill_with_identity();
        s
    }

    /// A factor `F` with `F Fᵀ = Cov(ω)`, block diagonal.
    pub fn factor(&self, p: &LqgProblem) -> Mat {
        let mut f = Mat::zeros(self.dim(), self.dim());
        let put = |f: &mut Mat, at: usize, cov: &Mat| {
            let l = psd_factor(cov);
            f.view_mut((at, at), (l.nrows(), l.ncols())).copy_from(&l);
        };
        put(&mut f, self.x1(), &p.sigma_x);
        for t in 1..=self.horizon {
            put(&mut f, self.v(t), &p.sigma_v);
            if t < self.horizon {
                put(&mut f, self.w(t), &p.sigma_w);
            }
        }
        f
    }
}

/// Cholesky when possible, otherwise a symmetric square root.
pub fn psd_factor(cov: &Mat) -> Mat {
    if let Some(c) = Cholesky::new(cov.clone()) {
        return c.l();
    }
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&sqrt) * eig.eigenvectors.transpose()
}

fn hcat(blocks: &[&Mat]) -> Mat {
    let rows = blocks[0].nrows();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

fn vcat(blocks: &[&Mat]) -> Mat {
    let cols = blocks[0].ncols();
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

pub fn full_b(p: &LqgProblem) -> Mat {
    hcat(&p.b_blocks.iter().collect::<Vec<_>>())
}

pub fn full_n(p: &LqgProblem) -> Mat {
    hcat(&p.n_blocks.iter().collect::<Vec<_>>())
}

pub fn full_c(p: &LqgProblem) -> Mat {
    vcat(&p.c_blocks.iter().collect::<Vec<_>>())
}

/// Transfer maps of one closed-loop run: `x[t-1]`, `z[t-1]` and `u[t-1]`
/// as matrices acting on `ω`, plus the stage outputs `M X_t + N U_t`.
pub struct Transfer {
    pub x: Vec<Mat>,
    pub z: Vec<Mat>,
    pub y: Vec<Mat>,
    pub stage: Vec<Mat>,
}

impl Transfer {
    pub fn cost(&self, factor: &Mat) -> f64 {
        self.stage.iter().map(|g| (g * factor).norm_squared()).sum()
    }
}

/// Centralized law `U_t = K_t Z_t` with the filter
/// `Z_{t+1} = (I − L_{t+1} C)(A Z_t + B U_t) + L_{t+1} Y_{t+1}`.
pub fn centralized_transfer(p: &LqgProblem, s: &GainSchedule) -> Transfer {
    let lay = NoiseLayout::new(p);
    let (b, c, n) = (full_b(p), full_c(p), full_n(p));
    let eye = Mat::identity(lay.dx, lay.dx);
    let mut x = lay.select(lay.x1(), lay.dx);
    let mut y = &c * &x + lay.select(lay.v(1), lay.dy);
    let mut z = &s.l[0] * &y;
    let mut out = Transfer {
        x: vec![],
        z: vec![],
        y: vec![],
        stage: vec![],
    };
    for t in 1..=p.horizon {
        let u = &s.k[t - 1] * &z;
        out.stage.push(&p.m * &x + &n * &u);
        out.x.push(x.clone());
        out.z.push(z.clone());
        out.y.push(y.clone());
        if t < p.horizon {
            let xn = &p.a * &x + &b * &u + lay.select(lay.w(t), lay.dx);
            y = &c * &xn + lay.select(lay.v(t + 1), lay.dy);
            let l = &s.l[t];
            z = (&eye - l * &c) * (&p.a * &z + &b * &u) + l * &y;
            x = xn;
        }
    }
    out
}

/// Decentralized laws `U^i_t = F^i_t S^i_t`, where controller `i` filters
/// only its own observations and actions. `gains[i-1][t-1] = F^i_t`.
pub fn decentralized_transfer(p: &LqgProblem, s: &GainSchedule, gains: &[Vec<Mat>]) -> Transfer {
    let lay = NoiseLayout::new(p);
    let c = full_c(p);
    let nc = p.b_blocks.len();
    let eye = Mat::identity(lay.dx, lay.dx);
    let y_off: Vec<usize> = (0..nc)
        .map(|i| p.c_blocks[..i].iter().map(|c| c.nrows()).sum())
        .collect();
    let local = |l: &Mat, y: &Mat, i: usize| -> Mat {
        let rows = p.c_blocks[i].nrows();
        l.columns(y_off[i], rows) * y.rows(y_off[i], rows)
    };
    let mut x = lay.select(lay.x1(), lay.dx);
    let mut y = &c * &x + lay.select(lay.v(1), lay.dy);
    let mut st: Vec<Mat> = (0..nc).map(|i| local(&s.l[0], &y, i)).collect();
    let mut out = Transfer {
        x: vec![],
        z: vec![],
        y: vec![],
        stage: vec![],
    };
    for t in 1..=p.horizon {
        let us: Vec<Mat> = (0..nc).map(|i| &gains[i][t - 1] * &st[i]).collect();
        let mut nu = &p.m * &x;
        let mut bu = Mat::zeros(lay.dx, lay.dim());
        for i in 0..nc {
            nu += &p.n_blocks[i] * &us[i];
            bu += &p.b_blocks[i] * &us[i];
        }
        out.stage.push(nu);
        out.x.push(x.clone());
        let mut zsum = Mat::zeros(lay.dx, lay.dim());
        for si in &st {
            zsum += si;
        }
        out.z.push(zsum);
        out.y.push(y.clone());
        if t < p.horizon {
            let xn = &p.a * &x + &bu + lay.select(lay.w(t), lay.dx);
            y = &c * &xn + lay.select(lay.v(t + 1), lay.dy);
            let l = &s.l[t];
            let corr = &eye - l * &c;
            st = (0..nc)
                .map(|i| &corr * (&p.a * &st[i] + &p.b_blocks[i] * &us[i]) + local(l, &y, i))
                .collect();
            x = xn;
        }
    }
    out
}

pub fn oracle_centralized_cost(p: &LqgProblem, s: &GainSchedule) -> f64 {
    centralized_transfer(p, s).cost(&NoiseLayout::new(p).factor(p))
}

pub fn oracle_decentralized_cost(p: &LqgProblem, s: &GainSchedule, gains: &[Vec<Mat>]) -> f64 {
    decentralized_transfer(p, s, gains).cost(&NoiseLayout::new(p).factor(p))
}

/// Largest `|E[(X_t − Z_t) Y_sᵀ]|` over `s ≤ t`. Zero exactly when every
/// `Z_t` is the conditional mean of `X_t` given the observations so far.
pub fn orthogonality_defect(p: &LqgProblem, s: &GainSchedule) -> f64 {
    let tr = centralized_transfer(p, s);
    let f = NoiseLayout::new(p).factor(p);
    let cov = &f * f.transpose();
    let mut worst: f64 = 0.0;
    for t in 0..p.horizon {
        let err = &tr.x[t] - &tr.z[t];
        for y in &tr.y[..=t] {
            worst = worst.max((&err * &cov * y.transpose()).amax());
        }
    }
    worst
}

/// Deterministic finite-horizon LQR from stage `t0`, solved as one stacked
/// least-squares problem `min_u ‖F x + H u‖²`. Returns the cost-to-go matrix
/// and the first-stage feedback `u_{t0} = K x`.
pub fn stacked_lqr(p: &LqgProblem, t0: usize) -> (Mat, Mat) {
    let (b, n) = (full_b(p), full_n(p));
    let dx = p.a.nrows();
    let du = b.ncols();
    let pr = p.m.nrows();
    let h = p.horizon - t0 + 1;
    let mut f = Mat::zeros(h * pr, dx);
    let mut hm = Mat::zeros(h * pr, h * du);
    // x_{t0+k} = A^k x + Σ_{j<k} A^{k-1-j} B u_j
    let mut powers = vec![Mat::identity(dx, dx)];
    for k in 1..h {
        powers.push(&p.a * &powers[k - 1]);
    }
    for k in 0..h {
        f.view_mut((k * pr, 0), (pr, dx)).copy_from(&(&p.m * &powers[k]));
        for j in 0..k {
            let blk = &p.m * &powers[k - 1 - j] * &b;
            hm.view_mut((k * pr, j * du), (pr, du)).copy_from(&blk);
        }
        hm.view_mut((k * pr, k * du), (pr, du)).copy_from(&n);
    }
    let u = -lstsq(&hm, &f);
    let resid = &f + &hm * &u;
    let cost_to_go = resid.transpose() * &resid;
    (cost_to_go, u.rows(0, du).into_owned())
}

/// Optimal static team cost by direct least squares over `vec(Π^i)`:
/// `‖(M + Σ_i N^i Π^i Ĥ^i) F‖_F²` with `F Fᵀ = Σ`.
pub fn oracle_static_optimum(problem: &TeamProblem, obs: &StaticObservations) -> f64 {
    let f = psd_factor(&problem.sigma);
    let target = &problem.m * &f;
    let pcost = target.nrows();
    let mut cols: Vec<Mat> = Vec::new();
    for (i, mem) in problem.members.iter().enumerate() {
        let hf = &obs.h_hat[i] * &f;
        if hf.nrows() == 0 {
            continue;
        }
        // vec(N Π H F) = ((H F)ᵀ ⊗ N) vec(Π)
        cols.push(hf.transpose().kronecker(&mem.n_block));
    }
    let b = Mat::from_column_slice(pcost * f.ncols(), 1, target.as_slice());
    if cols.is_empty() {
        return b.norm_squared();
    }
    let a = hcat(&cols.iter().collect::<Vec<_>>());
    (&b - &a * lstsq(&a, &b)).norm_squared()
}

/// The same quantity evaluated at given gains, without the library.
pub fn oracle_static_cost(problem: &TeamProblem, obs: &StaticObservations, pi: &[Mat]) -> f64 {
    let mut g = problem.m.clone();
    for (i, mem) in problem.members.iter().enumerate() {
        if obs.h_hat[i].nrows() > 0 {
            g += &mem.n_block * &pi[i] * &obs.h_hat[i];
        }
    }
    (&g * &problem.sigma * g.transpose()).trace()
}

/// A least-squares solution of `A X ≈ B` supported on a maximal set of
/// independent columns, found by column-pivoted QR.
pub fn lstsq(a: &Mat, b: &Mat) -> Mat {
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&j| r[(j, j)].abs() > 1e-10 * lead.max(f64::MIN_POSITIVE))
        .count();
    let mut perm: Vec<usize> = (0..a.ncols()).collect();
    let mut eye = Mat::identity(a.ncols(), a.ncols());
    qr.p().permute_columns(&mut eye);
    for (j, slot) in perm.iter_mut().enumerate() {
        *slot = (0..a.ncols()).find(|&k| eye[(k, j)] == 1.0).unwrap();
    }
    let basis: Vec<usize> = perm[..rank].to_vec();
    let mut x = Mat::zeros(a.ncols(), b.ncols());
    if rank == 0 {
        return x;
    }
    let sub = a.select_columns(basis.iter());
    let qr = sub.qr();
    let rhs = qr.q().transpose() * b;
    let sol = qr.r().solve_upper_triangular(&rhs).unwrap();
    for (row, &col) in basis.iter().enumerate() {
        x.row_mut(col).copy_from(&sol.row(row));
    }
    x
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
