//! Seeded random instances that satisfy the substitutability assumptions by
//! construction. Used by the property tests, the acceptance suite and the
//! `generate` subcommand.
//!
//! Team instances are built in layers. Signalers observe the environment
//! only. Relays observe signalers' actions and have action columns that are
//! an exact linear image of a better-informed member's columns, so every
//! critical pair they form has a substitute. An optional hub sees everything
//! the signalers and relays see; optional followers observe the hub and the
//! relays; the last member sees every block.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lqg::LqgProblem;
use crate::matrix::Mat;
use crate::team::{InfoBlock, Member, TeamProblem};

pub const MAX_MEMBERS: usize = 6;
pub const MAX_DIM: usize = 8;
pub const MAX_HORIZON: usize = 10;

/// Requested sizes. `None` draws a value from the default range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dims {
    pub n: Option<usize>,
    /// `d_ξ` for teams, `d_x` for LQG problems.
    pub d: Option<usize>,
    pub horizon: Option<usize>,
}

impl Dims {
    pub fn check(&self) -> Result<()> {
        let mut v = Vec::new();
        match self.n {
            Some(0) => v.push("n must be at least 1".to_string()),
            Some(n) if n > MAX_MEMBERS => v.push(format!("n = {n} exceeds the cap {MAX_MEMBERS}")),
            _ => {}
        }
        match self.d {
            Some(0) => v.push("dimension must be at least 1".to_string()),
            Some(d) if d > MAX_DIM => v.push(format!("dimension {d} exceeds the cap {MAX_DIM}")),
            _ => {}
        }
        match self.horizon {
            Some(0) => v.push("horizon must be at least 1".to_string()),
            Some(t) if t > MAX_HORIZON => {
                v.push(format!("horizon {t} exceeds the cap {MAX_HORIZON}"))
            }
            _ => {}
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProblem(v))
        }
    }
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// `G Gᵀ + 0.1 I`.
fn covariance(rng: &mut impl Rng, dim: usize) -> Mat {
    let g = uniform(rng, dim, dim);
    &g * g.transpose() + Mat::identity(dim, dim) * 0.1
}

/// A random matrix with at least one nonzero entry.
fn nonzero(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let mut m = uniform(rng, rows, cols);
    if m.iter().all(|&v| v == 0.0) {
        m[(0, 0)] = 1.0;
    }
    m
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Signaler,
    Relay,
    Hub,
    Follower,
    Last,
}

struct Builder<'r> {
    rng: &'r mut ChaCha8Rng,
    d_xi: usize,
    p: usize,
    d_u: Vec<usize>,
    blocks: BTreeMap<String, InfoBlock>,
}

impl Builder<'_> {
    fn block(&mut self, id: String, d: BTreeMap<usize, Mat>) -> String {
        let rows = d
            .values()
            .next()
            .map_or_else(|| self.rng.random_range(1..=2), |m| m.nrows());
        let h = uniform(self.rng, rows, self.d_xi);
        self.blocks.insert(
            id.clone(),
            InfoBlock {
                id: id.clone(),
                h_rows: h,
                d_rows: d,
            },
        );
        id
    }

    /// Random dependence on each listed member; at least one is nonzero.
    fn depend_on(&mut self, rows: usize, sources: &[usize], required: bool) -> BTreeMap<usize, Mat> {
        let mut d = BTreeMap::new();
        for &j in sources {
            if self.rng.random_bool(0.6) {
                d.insert(j, nonzero(self.rng, rows, self.d_u[j - 1]));
            }
        }
        if required && d.is_empty() && !sources.is_empty() {
            let j = sources[self.rng.random_range(0..sources.len())];
            d.insert(j, nonzero(self.rng, rows, self.d_u[j - 1]));
        }
        d
    }
}

/// A random team problem whose critical pairs all have substitutes.
pub fn random_team(seed: u64, dims: Dims) -> Result<TeamProblem> {
    dims.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.n.unwrap_or_else(|| rng.random_range(1..=MAX_MEMBERS));
    let d_xi = dims.d.unwrap_or_else(|| rng.random_range(2..=MAX_DIM));
    let p = rng.random_range(1..=4);

    let roles = plan_roles(&mut rng, n);
    let d_u: Vec<usize> = roles
        .iter()
        .map(|r| match r {
            Role::Hub | Role::Last => rng.random_range(1..=3),
            _ => rng.random_range(1..=2),
        })
        .collect();
    let idx_of = |role: Role| -> Vec<usize> {
        roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i + 1)
            .collect()
    };
    let signalers = idx_of(Role::Signaler);
    let relays = idx_of(Role::Relay);
    let hub = idx_of(Role::Hub).first().copied();
    let followers = idx_of(Role::Follower);

    let mut b = Builder {
        rng: &mut rng,
        d_xi,
        p,
        d_u: d_u.clone(),
        blocks: BTreeMap::new(),
    };
    let mut infos: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut own: Vec<String> = vec![String::new(); n];

    // Relay and follower action maps onto the member they imitate.
    let mut r_map: BTreeMap<usize, Mat> = BTreeMap::new();
    let imitated = |i: usize| -> usize {
        match (roles[i - 1], hub) {
            (Role::Relay, Some(h)) => h,
            _ => n,
        }
    };
    for &t in relays.iter().chain(&followers) {
        let src = imitated(t);
        let r = uniform(b.rng, d_u[src - 1], d_u[t - 1]);
        r_map.insert(t, r);
    }

    for i in 1..=n {
        let role = roles[i - 1];
        let mut info = Vec::new();
        match role {
            Role::Signaler => {
                for &s in &signalers {
                    if s < i && b.rng.random_bool(0.3) {
                        info.push(own[s - 1].clone());
                    }
                }
                own[i - 1] = b.block(format!("x{i}"), BTreeMap::new());
            }
            Role::Relay => {
                for &s in &signalers {
                    if b.rng.random_bool(0.3) {
                        for id in &infos[s - 1] {
                            if !info.contains(id) {
                                info.push(id.clone());
                            }
                        }
                    }
                }
                let rows = b.rng.random_range(1..=2);
                let d = b.depend_on(rows, &signalers, true);
                own[i - 1] = b.block(format!("x{i}"), d);
            }
            Role::Hub => {
                for &s in signalers.iter().chain(&relays) {
                    for id in &infos[s - 1] {
                        if !info.contains(id) {
                            info.push(id.clone());
                        }
                    }
                }
                let rows = b.rng.random_range(1..=2);
                let d = if b.rng.random_bool(0.5) {
                    b.depend_on(rows, &signalers, false)
                } else {
                    BTreeMap::new()
                };
                own[i - 1] = b.block(format!("x{i}"), d);
            }
            Role::Follower => {
                let h = hub.expect("followers are only planned with a hub");
                let rows = b.rng.random_range(1..=2);
                let g = nonzero(b.rng, rows, d_u[h - 1]);
                let mut d = b.depend_on(rows, &signalers, false);
                for &t in &relays {
                    d.insert(t, &g * &r_map[&t]);
                }
                d.insert(h, g);
                own[i - 1] = b.block(format!("x{i}"), d);
            }
            Role::Last => {
                for j in 1..i {
                    if !info.contains(&own[j - 1]) {
                        info.push(own[j - 1].clone());
                    }
                }
                let rows = b.rng.random_range(1..=2);
                let d = b.depend_on(rows, &signalers, false);
                own[i - 1] = b.block(format!("x{i}"), d);
            }
        }
        let mine = own[i - 1].clone();
        info.retain(|id| id != &mine);
        info.insert(0, mine);
        infos[i - 1] = info;
    }

    // Cost columns: free for independent members, imitating otherwise. The
    // imitated member always has a larger index, so a reverse pass works.
    let mut n_blocks: Vec<Mat> = vec![Mat::zeros(0, 0); n];
    for i in (1..=n).rev() {
        n_blocks[i - 1] = match r_map.get(&i) {
            Some(r) => {
                let src = imitated(i);
                &n_blocks[src - 1] * r
            }
            None => uniform(b.rng, p, d_u[i - 1]),
        };
    }
    let sigma = covariance(b.rng, d_xi);
    let m = uniform(b.rng, b.p, d_xi);
    let blocks = std::mem::take(&mut b.blocks);
    let members = (0..n)
        .map(|i| Member {
            d_u: d_u[i],
            n_block: n_blocks[i].clone(),
            info: infos[i].clone(),
        })
        .collect();
    TeamProblem {
        d_xi,
        sigma,
        m,
        members,
        blocks,
    }
    .checked()
}

/// Signalers first, then relays, an optional hub, optional followers and a
/// final fully informed member. Teams of one or two members are nested.
fn plan_roles(rng: &mut impl Rng, n: usize) -> Vec<Role> {
    if n <= 2 {
        let mut roles = vec![Role::Signaler; n];
        roles[n - 1] = Role::Last;
        return roles;
    }
    let hub = n >= 4 && rng.random_bool(0.7);
    let rest = n - 1 - usize::from(hub);
    let followers = if hub && rest >= 3 {
        rng.random_range(0..=1)
    } else {
        0
    };
    let signalers = rng.random_range(1..=rest - followers - 1);
    let relays = rest - followers - signalers;
    let mut roles = vec![Role::Signaler; signalers];
    roles.extend(std::iter::repeat_n(Role::Relay, relays));
    if hub {
        roles.push(Role::Hub);
    }
    roles.extend(std::iter::repeat_n(Role::Follower, followers));
    roles.push(Role::Last);
    roles
}

/// A random LQG problem whose controllers' `[B^i; N^i]` share one column
/// space.
///
/// The stage cost is `|M_x X|² + |N_u U|²` with `M_x` well conditioned and
/// `N_u` of full column rank on the shared span. A cost that ignores some
/// state directions lets the finite-horizon controller leave them
/// expansive, and exact costs then lose digits to cancellation.
pub fn random_lqg(seed: u64, dims: Dims) -> Result<LqgProblem> {
    dims.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.n.unwrap_or_else(|| rng.random_range(1..=4));
    let dx = dims.d.unwrap_or_else(|| rng.random_range(1..=6));
    let horizon = dims.horizon.unwrap_or_else(|| rng.random_range(1..=MAX_HORIZON));
    let r = rng.random_range(1..=2usize);
    let q = rng.random_range(r..=3);
    let p = dx + q;

    let base_b = uniform(&mut rng, dx, r);
    let base_n = Mat::identity(q, r) + uniform(&mut rng, q, r) * 0.3;
    let a = uniform(&mut rng, dx, dx) * (0.9 / (dx as f64).sqrt());
    let mut b_blocks = Vec::with_capacity(n);
    let mut n_blocks = Vec::with_capacity(n);
    let mut c_blocks = Vec::with_capacity(n);
    for _ in 0..n {
        let du = rng.random_range(r..=r + 1);
        let mix = uniform(&mut rng, r, du);
        b_blocks.push(&base_b * &mix);
        let mut nb = Mat::zeros(p, du);
        nb.rows_mut(dx, q).copy_from(&(&base_n * &mix));
        n_blocks.push(nb);
        let dy = rng.random_range(1..=2);
        c_blocks.push(uniform(&mut rng, dy, dx));
    }
    let dy: usize = c_blocks.iter().map(|c| c.nrows()).sum();
    let mut m = Mat::zeros(p, dx);
    let mx = Mat::identity(dx, dx) + uniform(&mut rng, dx, dx) * (0.3 / (dx as f64).sqrt());
    m.rows_mut(0, dx).copy_from(&mx);
    let problem = LqgProblem {
        horizon,
        a,
        sigma_x: covariance(&mut rng, dx),
        sigma_w: covariance(&mut rng, dx),
        sigma_v: covariance(&mut rng, dy),
        m,
        b_blocks,
        c_blocks,
        n_blocks,
    };
    problem.validate(&Default::default())?;
    Ok(problem)
}
