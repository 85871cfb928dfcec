use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gaussian_factor, Mat};

use super::synthesis::{decentralized_gains, GainSchedule};
use super::LqgProblem;

type Vector = DVector<f64>;

/// Largest tolerated `‖Z_t − Σ_i S^i_t‖∞` on a simulated path.
pub const SUM_IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Centralized,
    Decentralized,
    Both,
}

impl SimMode {
    fn centralized(self) -> bool {
        matches!(self, SimMode::Centralized | SimMode::Both)
    }

    fn decentralized(self) -> bool {
        matches!(self, SimMode::Decentralized | SimMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostStats {
    pub per_path: Vec<f64>,
    pub mean: f64,
    pub std_err: f64,
}

impl CostStats {
    fn from_samples(per_path: Vec<f64>) -> Self {
        let n = per_path.len() as f64;
        let mean = per_path.iter().sum::<f64>() / n;
        let var = if per_path.len() > 1 {
            per_path.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        CostStats {
            per_path,
            mean,
            std_err: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub seed: u64,
    pub paths: usize,
    pub mode: SimMode,
    pub centralized: Option<CostStats>,
    pub decentralized: Option<CostStats>,
    /// Largest `‖Z_t − Σ_i S^i_t‖∞` seen on the decentralized plant.
    pub max_sum_residual: Option<f64>,
}

/// One simulated path. Vectors are indexed by `t - 1`; `s[t-1][i-1]` is
/// `S^i_t`. The decentralized fields are empty in centralized mode and
/// vice versa.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub centralized_x: Vec<Vector>,
    pub centralized_z: Vec<Vector>,
    pub centralized_cost: Option<f64>,
    pub decentralized_x: Vec<Vector>,
    /// Centralized estimate computed alongside the decentralized plant
    /// from all observations and actions.
    pub decentralized_z: Vec<Vector>,
    pub s: Vec<Vec<Vector>>,
    pub decentralized_cost: Option<f64>,
    pub max_sum_residual: Option<f64>,
}

impl PathTrace {
    /// Largest `|S^i_t − C^iᵀ C^i X_t|`, meaningful when each `C^i` selects
    /// a block of state coordinates and observations are noiseless.
    pub fn embedding_deviation(&self, problem: &LqgProblem) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, s) in self.decentralized_x.iter().zip(&self.s) {
            for (i, si) in s.iter().enumerate() {
                let c = &problem.c_blocks[i];
                let embedded = c.transpose() * (c * x);
                worst = worst.max((si - embedded).amax());
            }
        }
        worst
    }
}

/// Whether every `C^i` is a 0/1 coordinate selector and the selections
/// partition the state.
pub fn coordinate_partition(problem: &LqgProblem) -> bool {
    let dx = problem.d_x();
    let mut seen = vec![0usize; dx];
    for c in &problem.c_blocks {
        for row in c.row_iter() {
            let ones: Vec<usize> = (0..dx).filter(|&j| row[j] == 1.0).collect();
            if ones.len() != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return false;
            }
            seen[ones[0]] += 1;
        }
    }
    seen.iter().all(|&k| k == 1)
}

struct Noise {
    x1: Vector,
    /// `V_t`, `t = 1..T`.
    v: Vec<Vector>,
    /// `W_t`, `t = 1..T-1`.
    w: Vec<Vector>,
}

struct Factors {
    x: Mat,
    w: Mat,
    v: Mat,
}

fn draw(rng: &mut ChaCha8Rng, factor: &Mat) -> Vector {
    let xi = Vector::from_fn(factor.ncols(), |_, _| rng.sample(StandardNormal));
    factor * xi
}

fn draw_noise(problem: &LqgProblem, f: &Factors, seed: u64, path: u64) -> Noise {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    let x1 = draw(&mut rng, &f.x);
    let mut v = vec![draw(&mut rng, &f.v)];
    let mut w = Vec::new();
    for _ in 1..problem.horizon {
        w.push(draw(&mut rng, &f.w));
        v.push(draw(&mut rng, &f.v));
    }
    Noise { x1, v, w }
}

fn factors(problem: &LqgProblem) -> Factors {
    Factors {
        x: gaussian_factor(&problem.sigma_x),
        w: gaussian_factor(&problem.sigma_w),
        v: gaussian_factor(&problem.sigma_v),
    }
}

fn check_inputs(problem: &LqgProblem, schedule: &GainSchedule) -> Result<()> {
    if schedule.k.len() != problem.horizon
        || schedule.l.len() != problem.horizon
        || schedule.lambda.len() != problem.n()
    {
        return Err(Error::DimensionMismatch(
            "schedule does not match the problem's horizon or controller count".into(),
        ));
    }
    Ok(())
}

struct Ctx<'a> {
    problem: &'a LqgProblem,
    schedule: &'a GainSchedule,
    gains: Vec<Vec<Mat>>,
    b: Mat,
    c: Mat,
    n_mat: Mat,
    /// `I − L_t C`.
    correction: Vec<Mat>,
}

impl<'a> Ctx<'a> {
    fn new(problem: &'a LqgProblem, schedule: &'a GainSchedule) -> Self {
        let c = problem.c();
        let eye = Mat::identity(problem.d_x(), problem.d_x());
        Ctx {
            problem,
            schedule,
            gains: decentralized_gains(schedule),
            b: problem.b(),
            correction: schedule.l.iter().map(|l| &eye - l * &c).collect(),
            c,
            n_mat: problem.n_mat(),
        }
    }

    fn local_y<'v>(&self, y: &'v Vector, i: usize) -> nalgebra::DVectorView<'v, f64> {
        y.rows(self.problem.y_offset(i), self.problem.d_y(i))
    }

    fn local_l(&self, t: usize, i: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.schedule.l[t - 1].columns(self.problem.y_offset(i), self.problem.d_y(i))
    }

    fn stage_cost(&self, x: &Vector, u: &Vector) -> f64 {
        (&self.problem.m * x + &self.n_mat * u).norm_squared()
    }

    fn run(&self, noise: &Noise, mode: SimMode) -> Result<PathTrace> {
        let p = self.problem;
        let horizon = p.horizon;
        let mut trace = PathTrace {
            centralized_x: Vec::new(),
            centralized_z: Vec::new(),
            centralized_cost: None,
            decentralized_x: Vec::new(),
            decentralized_z: Vec::new(),
            s: Vec::new(),
            decentralized_cost: None,
            max_sum_residual: None,
        };

        if mode.centralized() {
            let mut x = noise.x1.clone();
            let mut z = &self.schedule.l[0] * (&self.c * &x + &noise.v[0]);
            let mut cost = 0.0;
            for t in 1..=horizon {
                let u = &self.schedule.k[t - 1] * &z;
                cost += self.stage_cost(&x, &u);
                trace.centralized_x.push(x.clone());
                trace.centralized_z.push(z.clone());
                if t < horizon {
                    let bu = &self.b * &u;
                    let x_next = &p.a * &x + &bu + &noise.w[t - 1];
                    let y = &self.c * &x_next + &noise.v[t];
                    z = &self.correction[t] * (&p.a * &z + &bu) + &self.schedule.l[t] * y;
                    x = x_next;
                }
            }
            trace.centralized_cost = Some(cost);
        }

        if mode.decentralized() {
            let n = p.n();
            let mut x = noise.x1.clone();
            let y1 = &self.c * &x + &noise.v[0];
            let mut z = &self.schedule.l[0] * &y1;
            let mut s: Vec<Vector> = (1..=n)
                .map(|i| self.local_l(1, i) * self.local_y(&y1, i))
                .collect();
            let mut cost = 0.0;
            let mut worst: f64 = 0.0;
            for t in 1..=horizon {
                let residual = sum_residual(&z, &s);
                worst = worst.max(residual);
                if residual.is_nan() || residual > SUM_IDENTITY_TOL {
                    return Err(Error::InvarianceBroken(format!(
                        "t={t}: |Z - sum S| = {residual:e} exceeds {SUM_IDENTITY_TOL:e}"
                    )));
                }
                // Each controller acts on its own statistic only.
                let u_local: Vec<Vector> = (0..n).map(|i| &self.gains[i][t - 1] * &s[i]).collect();
                let mut u = Vector::zeros(p.d_u_total());
                for (i, ui) in u_local.iter().enumerate() {
                    u.rows_mut(p.u_offset(i + 1), ui.len()).copy_from(ui);
                }
                cost += self.stage_cost(&x, &u);
                trace.decentralized_x.push(x.clone());
                trace.decentralized_z.push(z.clone());
                trace.s.push(s.clone());
                if t < horizon {
                    let bu = &self.b * &u;
                    let x_next = &p.a * &x + &bu + &noise.w[t - 1];
                    let y = &self.c * &x_next + &noise.v[t];
                    let corr = &self.correction[t];
                    z = corr * (&p.a * &z + &bu) + &self.schedule.l[t] * &y;
                    s = (0..n)
                        .map(|i| {
                            corr * (&p.a * &s[i] + &p.b_blocks[i] * &u_local[i])
                                + self.local_l(t + 1, i + 1) * self.local_y(&y, i + 1)
                        })
                        .collect();
                    x = x_next;
                }
            }
            trace.decentralized_cost = Some(cost);
            trace.max_sum_residual = Some(worst);
        }
        Ok(trace)
    }
}

fn sum_residual(z: &Vector, s: &[Vector]) -> f64 {
    let mut total = Vector::zeros(z.len());
    for si in s {
        total += si;
    }
    (z - total).amax()
}

/// Simulates path number `path` of the stream derived from `seed`. The same
/// `(seed, path)` always draws the same noise, and both plants in
/// [`SimMode::Both`] share it.
pub fn simulate_path(
    problem: &LqgProblem,
    schedule: &GainSchedule,
    mode: SimMode,
    seed: u64,
    path: u64,
) -> Result<PathTrace> {
    check_inputs(problem, schedule)?;
    let noise = draw_noise(problem, &factors(problem), seed, path);
    Ctx::new(problem, schedule).run(&noise, mode)
}

/// Monte Carlo evaluation over `paths` independent paths. Paths run in
/// parallel and are merged in index order, so the result depends only on
/// the inputs and `seed`.
pub fn simulate(
    problem: &LqgProblem,
    schedule: &GainSchedule,
    mode: SimMode,
    paths: usize,
    seed: u64,
) -> Result<SimulationResult> {
    if paths == 0 {
        return Err(Error::InvalidProblem(vec!["paths must be at least 1".into()]));
    }
    check_inputs(problem, schedule)?;
    let f = factors(problem);
    let ctx = Ctx::new(problem, schedule);
    let runs: Vec<(Option<f64>, Option<f64>, Option<f64>)> = (0..paths)
        .into_par_iter()
        .map(|k| {
            let noise = draw_noise(problem, &f, seed, k as u64);
            ctx.run(&noise, mode)
                .map(|t| (t.centralized_cost, t.decentralized_cost, t.max_sum_residual))
        })
        .collect::<Result<_>>()?;
    let collect = |pick: fn(&(Option<f64>, Option<f64>, Option<f64>)) -> Option<f64>| {
        runs.iter().map(pick).collect::<Option<Vec<f64>>>()
    };
    Ok(SimulationResult {
        seed,
        paths,
        mode,
        centralized: collect(|r| r.0).map(CostStats::from_samples),
        decentralized: collect(|r| r.1).map(CostStats::from_samples),
        max_sum_residual: collect(|r| r.2).map(|v| v.into_iter().fold(0.0, f64::max)),
    })
}
